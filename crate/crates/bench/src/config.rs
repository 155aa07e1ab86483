//! Properties-style configuration: `key=value` lines, with command-line flags
//! layered on top. Keys are the long flag names (`proxy-uri`, `limit-ms`...).

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use faasbench_core::workload::{BackoffSpec, BatchSpec, Dispatch, TimeoutLevel, TimeoutSpec};

use crate::driver::{Operation, RunConfig};
use crate::proxy::ProxyConfig;
use crate::targets::{GatewayConfig, SLEEP_ROUTE, WORD_ROUTE};

pub const KEYS: &[&str] = &[
    "name",
    "proxy-uri",
    "target-uri",
    "out",
    "operation",
    "words",
    "payload",
    "requests",
    "batch",
    "async",
    "max-in-flight",
    "seed",
    "mode",
    "request-timeout-ms",
    "initial-wait-ms",
    "multiplier",
    "steps",
    "sleep-ms",
    "limit-ms",
    "level",
    "cold-start-ms",
    "warm-window-ms",
    "header-echo",
    "watchdog-slack-ms",
    "forward-timeout-ms",
    "injected-latency-ms",
    "allowed-hosts",
    "listen",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Flat key/value settings. Later writes win.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Properties {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace(['_', '.'], "-")
}

impl Properties {
    /// Parses `key=value` or `key: value` lines; `#` and `!` start comments.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut props = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('!') {
                continue;
            }
            let Some(split) = line.find(['=', ':']) else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("expected key=value, got `{line}`"),
                });
            };
            let (key, value) = (&line[..split], &line[split + 1..]);
            if key.trim().is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            props.set(key, value.trim())?;
        }
        Ok(props)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        let key = normalize(key);
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        self.values.insert(key, value.into());
        Ok(())
    }

    /// Applies every entry of `other` on top of `self`.
    pub fn overlay(&mut self, other: &Properties) {
        self.values
            .extend(other.values.iter().map(|(k, v)| (k.clone(), v.clone())));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::BadValue {
                    key: key.into(),
                    value: v.into(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn flag(&self, key: &str) -> Result<bool, ConfigError> {
        match self.get(key).map(str::to_ascii_lowercase).as_deref() {
            None => Ok(false),
            Some("true" | "yes" | "on" | "1" | "") => Ok(true),
            Some("false" | "no" | "off" | "0") => Ok(false),
            Some(other) => Err(ConfigError::BadValue {
                key: key.into(),
                value: other.into(),
                reason: "expected true or false".into(),
            }),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| ConfigError::BadValue {
                    key: key.into(),
                    value: raw.into(),
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn bad(&self, key: &str, reason: &str) -> ConfigError {
        ConfigError::BadValue {
            key: key.into(),
            value: self.get(key).unwrap_or_default().into(),
            reason: reason.into(),
        }
    }

    pub fn gateway_config(&self) -> Result<GatewayConfig, ConfigError> {
        let d = GatewayConfig::default();
        let cfg = GatewayConfig {
            execution_limit_ms: self.or("limit-ms", d.execution_limit_ms)?,
            cold_start_delay_ms: self.or("cold-start-ms", d.cold_start_delay_ms)?,
            warm_window_ms: self.or("warm-window-ms", d.warm_window_ms)?,
            header_echo: self.flag("header-echo")?,
            watchdog_slack_ms: self.or("watchdog-slack-ms", d.watchdog_slack_ms)?,
        };
        cfg.validate().map_err(|r| self.bad("limit-ms", &r))?;
        Ok(cfg)
    }

    pub fn proxy_config(&self) -> Result<ProxyConfig, ConfigError> {
        let d = ProxyConfig::default();
        let cfg = ProxyConfig {
            forward_timeout_ms: self.or("forward-timeout-ms", d.forward_timeout_ms)?,
            injected_latency_ms: self.or("injected-latency-ms", d.injected_latency_ms)?,
            allowed_target_hosts: self.list("allowed-hosts")?,
        };
        cfg.validate().map_err(|r| self.bad("forward-timeout-ms", &r))?;
        Ok(cfg)
    }

    pub fn listen(&self, default: SocketAddr) -> Result<SocketAddr, ConfigError> {
        self.or("listen", default)
    }

    pub fn operation(&self) -> Result<Operation, ConfigError> {
        let seed = self.or("seed", 0u64)?;
        let words: Vec<usize> = self.list("words")?.unwrap_or_else(|| vec![10]);
        if words.is_empty() {
            return Err(self.bad("words", "no word count given"));
        }
        match self.get("operation").unwrap_or("batch") {
            "batch" => {
                let total_requests = self.or("requests", words.len())?;
                let dispatch = if self.flag("async")? {
                    Dispatch::Asynchronous {
                        max_in_flight: self.or("max-in-flight", 10)?,
                    }
                } else {
                    Dispatch::Synchronous
                };
                Ok(Operation::Batch(BatchSpec {
                    total_requests,
                    batch_size: self.or("batch", total_requests)?,
                    dispatch,
                    words_per_request: words,
                    seed,
                }))
            }
            "backoff" => {
                let d = BackoffSpec::default();
                Ok(Operation::Backoff(BackoffSpec {
                    initial_wait_ms: self.or("initial-wait-ms", d.initial_wait_ms)?,
                    multiplier: self.or("multiplier", d.multiplier)?,
                    steps: self.or("steps", d.steps)?,
                    words_per_request: words[0],
                    seed,
                }))
            }
            "timeout" => {
                let level = match self.get("level").unwrap_or("gateway") {
                    "gateway" => TimeoutLevel::Gateway,
                    "function" => TimeoutLevel::Function,
                    _ => return Err(self.bad("level", "expected gateway or function")),
                };
                Ok(Operation::Timeout(TimeoutSpec {
                    requested_sleep_ms: self.parsed("sleep-ms")?.ok_or(ConfigError::Missing("sleep-ms"))?,
                    expected_limit_ms: self.or("limit-ms", GatewayConfig::default().execution_limit_ms)?,
                    level_under_test: level,
                }))
            }
            _ => Err(self.bad("operation", "expected batch, backoff or timeout")),
        }
    }

    /// Everything `run` needs. Proxy and target URIs may be absent, in which
    /// case the caller starts local services.
    pub fn run_setup(&self) -> Result<RunSetup, ConfigError> {
        Ok(RunSetup {
            name: self.get("name").unwrap_or("faasbench").to_owned(),
            proxy_uri: self.get("proxy-uri").map(str::to_owned),
            target_uri: self.get("target-uri").map(str::to_owned),
            operation: self.operation()?,
            output_dir: PathBuf::from(self.get("out").unwrap_or("results")),
            request_timeout_ms: self.or("request-timeout-ms", 60_000)?,
            mode: self.get("mode").map(str::to_owned),
            payload: self.get("payload").map(str::to_owned),
            gateway: self.gateway_config()?,
            proxy: self.proxy_config()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub name: String,
    pub proxy_uri: Option<String>,
    pub target_uri: Option<String>,
    pub operation: Operation,
    pub output_dir: PathBuf,
    pub request_timeout_ms: u64,
    pub mode: Option<String>,
    pub payload: Option<String>,
    pub gateway: GatewayConfig,
    pub proxy: ProxyConfig,
}

impl RunSetup {
    /// Route on a local target that serves this operation.
    pub fn local_route(&self) -> &'static str {
        match self.operation {
            Operation::Timeout(_) => SLEEP_ROUTE,
            _ => WORD_ROUTE,
        }
    }

    pub fn run_config(&self, proxy_uri: String, target_uri: String) -> RunConfig {
        RunConfig {
            name: self.name.clone(),
            proxy_uri,
            target_uri,
            operation: self.operation.clone(),
            output_dir: self.output_dir.clone(),
            request_timeout_ms: self.request_timeout_ms,
            mode: self.mode.clone(),
            payload: self.payload.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_properties_with_comments_and_separators() {
        let p = Properties::parse(
            "# ladder\n! also a comment\nwords = 10,100, 1000\nproxy_uri: http://p:1/\n\nheader.echo=true\n",
        )
        .unwrap();
        assert_eq!(p.get("words"), Some("10,100, 1000"));
        assert_eq!(p.get("proxy-uri"), Some("http://p:1/"));
        assert!(p.gateway_config().unwrap().header_echo);
    }

    #[test]
    fn value_may_contain_separators() {
        let p = Properties::parse("target-uri=http://t:8080/func/word\n").unwrap();
        assert_eq!(p.get("target-uri"), Some("http://t:8080/func/word"));
    }

    #[test]
    fn rejects_unknown_keys_and_garbage() {
        assert!(matches!(Properties::parse("colour=red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(Properties::parse("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        let p = Properties::parse("requests=many").unwrap();
        assert!(matches!(p.operation(), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn ladder_defaults_to_one_request_per_rung() {
        let p = Properties::parse("words=10,100,1000,10000").unwrap();
        let Operation::Batch(spec) = p.operation().unwrap() else { panic!() };
        assert_eq!(spec.total_requests, 4);
        assert_eq!(spec.batch_size, 4);
        assert_eq!(spec.dispatch, Dispatch::Synchronous);
        assert_eq!(spec.words_per_request, vec![10, 100, 1000, 10000]);
    }

    #[test]
    fn overlay_wins() {
        let mut base = Properties::parse("requests=5\nasync=false").unwrap();
        let mut flags = Properties::default();
        flags.set("async", "true").unwrap();
        flags.set("max-in-flight", "3").unwrap();
        base.overlay(&flags);
        let Operation::Batch(spec) = base.operation().unwrap() else { panic!() };
        assert_eq!(spec.dispatch, Dispatch::Asynchronous { max_in_flight: 3 });
        assert_eq!(spec.total_requests, 5);
    }

    #[test]
    fn timeout_operation_needs_sleep() {
        let p = Properties::parse("operation=timeout\nlimit-ms=1000").unwrap();
        assert!(matches!(p.operation(), Err(ConfigError::Missing("sleep-ms"))));
        let p = Properties::parse("operation=timeout\nlimit-ms=1000\nsleep-ms=1500").unwrap();
        let setup = p.run_setup().unwrap();
        assert_eq!(setup.local_route(), SLEEP_ROUTE);
        assert_eq!(setup.gateway.execution_limit_ms, 1000);
    }

    #[test]
    fn proxy_settings() {
        let p = Properties::parse("forward-timeout-ms=0").unwrap();
        assert!(p.proxy_config().is_err());
        let p = Properties::parse("allowed-hosts=a, b").unwrap();
        assert_eq!(
            p.proxy_config().unwrap().allowed_target_hosts,
            Some(vec!["a".to_string(), "b".to_string()])
        );
    }
}
