//! The benchmark driver: preflight, plan execution with m1/m4 capture,
//! classification, then summary, CSV and log.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::time::Instant;

use faasbench_core::metrics::{
    classify, error_detail, invocation_events, summarize, write_csv, write_log, InvocationRecord,
    LogEvent, LogLevel, MetricsError, Outcome, Point, RunMeta, RunStore, RunSummary, SizeSample,
    Stopwatch, Status, TimingSample,
};
use faasbench_core::protocol::{
    decode_response, encode_request, RequestEnvelope, ResponseEnvelope, MODE_FIELD, SLEEP_FIELD,
};
use faasbench_core::workload::{
    plan_backoff, plan_batch, plan_timeout_probe, BackoffSpec, BatchSpec, Dispatch,
    ExpectedOutcome, TimeoutSpec, WorkloadError, WorkloadPlan,
};

use crate::proxy::{M2_BODY, M2_HEADER, M3_BODY, M3_HEADER};
use crate::targets::count_words;
use crate::wire::OutgoingRequest;

/// Reserved UUID of the reachability probe; never recorded.
pub const PREFLIGHT_UUID: &str = "00000000";

#[derive(Debug, Clone, PartialEq)]
pub enum Operation {
    Batch(BatchSpec),
    Backoff(BackoffSpec),
    Timeout(TimeoutSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub proxy_uri: String,
    pub target_uri: String,
    pub operation: Operation,
    pub output_dir: PathBuf,
    pub request_timeout_ms: u64,
    /// Forwarded to targets as `faasbench_mode`.
    pub mode: Option<String>,
    /// Literal workload text replacing the synthesized payloads.
    pub payload: Option<String>,
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("proxy unreachable at {uri}: {detail}")]
    ProxyUnreachable { uri: String, detail: String },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot create output directory {path}: {source}")]
    OutputDir {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: RunSummary,
    pub records: Vec<InvocationRecord>,
    /// Highest number of invocations the driver had outstanding at once.
    pub peak_in_flight: usize,
    pub csv_path: PathBuf,
    pub log_path: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), DriverError> {
        for uri in [&self.proxy_uri, &self.target_uri] {
            let ok = url::Url::parse(uri).is_ok_and(|u| u.has_host());
            if !ok {
                return Err(DriverError::InvalidConfig(format!("`{uri}` is not an absolute URI")));
            }
        }
        if self.request_timeout_ms == 0 {
            return Err(DriverError::InvalidConfig("request timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn plan(&self) -> Result<WorkloadPlan, DriverError> {
        let mut plan = match &self.operation {
            Operation::Batch(spec) => plan_batch(spec, &self.target_uri, &self.proxy_uri)?,
            Operation::Backoff(spec) => plan_backoff(spec, &self.target_uri, &self.proxy_uri)?,
            Operation::Timeout(spec) => plan_timeout_probe(spec, &self.target_uri, &self.proxy_uri)?,
        };
        if let Some(text) = &self.payload {
            for inv in &mut plan.invocations {
                inv.envelope = replace_data(&inv.envelope, text)?;
                inv.words = count_words(text);
            }
        }
        if let Some(mode) = &self.mode {
            plan = plan.with_extra(MODE_FIELD, mode)?;
        }
        Ok(plan)
    }
}

fn replace_data(env: &RequestEnvelope, data: &str) -> Result<RequestEnvelope, WorkloadError> {
    let mut out = RequestEnvelope::new(env.workload_uuid(), env.target_uri(), data)?;
    for (k, v) in env.extra() {
        out.set_extra(k.clone(), v.clone())?;
    }
    Ok(out)
}

/// Tracks outstanding invocations and the high-water mark.
#[derive(Debug, Default)]
struct InFlight {
    now: AtomicUsize,
    peak: AtomicUsize,
}

impl InFlight {
    fn enter(&self) {
        let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(n, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.now.fetch_sub(1, Ordering::SeqCst);
    }
}

fn timing_from(start: u64, stop: u64, hr: faasbench_core::protocol::HrTime) -> Option<TimingSample> {
    TimingSample::new(start, stop, hr).ok()
}

fn proxy_sizes(env: &ResponseEnvelope) -> Vec<SizeSample> {
    let mut out = Vec::new();
    for (point, h, b) in [(Point::M2, M2_HEADER, M2_BODY), (Point::M3, M3_HEADER, M3_BODY)] {
        if let (Some(header_bytes), Some(body_bytes)) = (env.extra_u64(h), env.extra_u64(b)) {
            out.push(SizeSample {
                point,
                header_bytes,
                body_bytes,
            });
        }
    }
    out
}

/// Sends one envelope to the proxy and turns whatever comes back into a record.
pub async fn invoke(
    proxy_uri: &str,
    envelope: &RequestEnvelope,
    words: usize,
    timeout: Duration,
) -> InvocationRecord {
    let request = match OutgoingRequest::post_json(proxy_uri, encode_request(envelope)) {
        Ok(r) => r,
        Err(e) => {
            let outcome = Outcome::NoResponse { detail: e.to_string() };
            return InvocationRecord {
                uuid: envelope.workload_uuid().to_owned(),
                status: classify(&outcome, envelope),
                words,
                client_timing: None,
                proxy_timing: None,
                target_timing: None,
                sizes: vec![],
                result: String::new(),
                error_detail: error_detail(&outcome, envelope),
            };
        }
    };
    let mut sizes = vec![request.sizes(Point::M1)];
    let watch = Stopwatch::start();
    let sent = request.send(timeout).await;
    let client_timing = watch.stop();

    let outcome = match sent {
        Err(e) => Outcome::NoResponse { detail: e.to_string() },
        Ok(resp) => {
            let m4 = resp.sizes(Point::M4);
            let decoded = resp
                .body_text()
                .map_err(|e| e.to_string())
                .and_then(|t| decode_response(t).map_err(|e| e.to_string()));
            let (envelope, decode_error) = match decoded {
                Ok(env) => (Some(env), None),
                Err(e) => (None, Some(e)),
            };
            if let Some(env) = &envelope {
                sizes.extend(proxy_sizes(env));
            }
            sizes.push(m4);
            Outcome::Response {
                http_status: resp.status.as_u16(),
                envelope,
                decode_error,
            }
        }
    };

    let env = match &outcome {
        Outcome::Response {
            envelope: Some(env), ..
        } => Some(env),
        _ => None,
    };
    InvocationRecord {
        uuid: envelope.workload_uuid().to_owned(),
        status: classify(&outcome, envelope),
        words,
        client_timing: Some(client_timing),
        proxy_timing: env
            .and_then(|e| e.proxy())
            .and_then(|p| timing_from(p.start_time_ms(), p.stop_time_ms(), p.run_time_hr())),
        target_timing: env
            .and_then(|e| e.target())
            .and_then(|t| timing_from(t.start_time_ms(), t.stop_time_ms(), t.run_time_hr())),
        sizes,
        result: env
            .and_then(|e| e.target())
            .map(|t| t.result().to_owned())
            .unwrap_or_default(),
        error_detail: error_detail(&outcome, envelope),
    }
}

async fn preflight(plan: &WorkloadPlan, config: &RunConfig) -> Result<(), DriverError> {
    let target = plan
        .invocations
        .first()
        .map_or(config.target_uri.as_str(), |i| i.envelope.target_uri());
    let mut probe = RequestEnvelope::new(PREFLIGHT_UUID, target, "").map_err(WorkloadError::from)?;
    probe.set_extra(SLEEP_FIELD, "0").map_err(WorkloadError::from)?;
    if let Some(mode) = &config.mode {
        probe.set_extra(MODE_FIELD, mode.as_str()).map_err(WorkloadError::from)?;
    }
    let unreachable = |detail: String| DriverError::ProxyUnreachable {
        uri: plan.proxy_uri.clone(),
        detail,
    };
    let request = OutgoingRequest::post_json(&plan.proxy_uri, encode_request(&probe))
        .map_err(|e| unreachable(e.to_string()))?;
    request
        .send(Duration::from_millis(config.request_timeout_ms))
        .await
        .map(drop)
        .map_err(|e| unreachable(e.to_string()))
}

async fn execute(plan: &WorkloadPlan, timeout: Duration, store: &Arc<RunStore>) -> usize {
    let gauge = Arc::new(InFlight::default());
    match plan.dispatch {
        Dispatch::Synchronous => {
            let origin = Instant::now();
            for inv in &plan.invocations {
                tokio::time::sleep_until(origin + Duration::from_millis(inv.fire_offset_ms)).await;
                gauge.enter();
                let record = invoke(&plan.proxy_uri, &inv.envelope, inv.words, timeout).await;
                gauge.leave();
                store.append(record);
            }
        }
        Dispatch::Asynchronous { max_in_flight } => {
            let permits = Arc::new(Semaphore::new(max_in_flight));
            let proxy_uri: Arc<str> = Arc::from(plan.proxy_uri.as_str());
            let mut rest = plan.invocations.as_slice();
            while let Some(first) = rest.first() {
                let len = rest.iter().take_while(|i| i.batch == first.batch).count();
                let (batch, tail) = rest.split_at(len);
                rest = tail;
                let mut tasks = tokio::task::JoinSet::new();
                for inv in batch {
                    let permit = Arc::clone(&permits)
                        .acquire_owned()
                        .await
                        .expect("semaphore is never closed");
                    let (gauge, store, proxy_uri) = (Arc::clone(&gauge), Arc::clone(store), Arc::clone(&proxy_uri));
                    let (envelope, words) = (inv.envelope.clone(), inv.words);
                    tasks.spawn(async move {
                        gauge.enter();
                        let record = invoke(&proxy_uri, &envelope, words, timeout).await;
                        gauge.leave();
                        drop(permit);
                        store.append(record);
                    });
                }
                while tasks.join_next().await.is_some() {}
            }
        }
    }
    gauge.peak.load(Ordering::SeqCst)
}

fn expectation_events(plan: &WorkloadPlan, records: &[InvocationRecord]) -> Vec<LogEvent> {
    let Some(exp) = plan.expectation else {
        return vec![];
    };
    records
        .iter()
        .map(|r| {
            let observed = match r.status {
                Status::GatewayTimeout | Status::FunctionTimeout => ExpectedOutcome::Timeout,
                _ => ExpectedOutcome::Success,
            };
            let (level, verdict) = if observed == exp.outcome {
                (LogLevel::Info, "as expected")
            } else {
                (LogLevel::Warn, "UNEXPECTED")
            };
            LogEvent {
                at: Utc::now(),
                level,
                message: format!(
                    "timeout probe {} expected {:?} at {:?} level, observed {}: {verdict}",
                    r.uuid, exp.outcome, exp.level, r.status
                ),
            }
        })
        .collect()
}

/// Runs the configured operation end to end and writes `run.csv` and
/// `run.log` into the output directory.
pub async fn run_benchmark(config: &RunConfig) -> Result<RunReport, DriverError> {
    config.validate()?;
    let started = Utc::now();
    let plan = config.plan()?;
    std::fs::create_dir_all(&config.output_dir).map_err(|source| DriverError::OutputDir {
        path: config.output_dir.clone(),
        source,
    })?;
    preflight(&plan, config).await?;

    let store = Arc::new(RunStore::new());
    let timeout = Duration::from_millis(config.request_timeout_ms);
    let peak_in_flight = execute(&plan, timeout, &store).await;
    let store = Arc::try_unwrap(store).expect("all invocation tasks joined");
    let records = store.into_records();

    let summary = summarize(&records)?;
    let csv_path = config.output_dir.join("run.csv");
    let log_path = config.output_dir.join("run.log");
    write_csv(&records, &csv_path)?;
    let mut events = invocation_events(&records);
    events.extend(expectation_events(&plan, &records));
    let meta = RunMeta {
        name: config.name.clone(),
        started,
        stopped: Utc::now(),
    };
    write_log(&meta, &events, &log_path)?;

    Ok(RunReport {
        summary,
        records,
        peak_in_flight,
        csv_path,
        log_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauge_tracks_peak() {
        let g = InFlight::default();
        g.enter();
        g.enter();
        g.leave();
        g.enter();
        g.leave();
        g.leave();
        assert_eq!(g.peak.load(Ordering::SeqCst), 2);
        assert_eq!(g.now.load(Ordering::SeqCst), 0);
    }

    fn config(op: Operation) -> RunConfig {
        RunConfig {
            name: "t".into(),
            proxy_uri: "http://127.0.0.1:1/".into(),
            target_uri: "http://127.0.0.1:2/func/word".into(),
            operation: op,
            output_dir: PathBuf::from("unused"),
            request_timeout_ms: 1000,
            mode: Some("full".into()),
            payload: Some("F a a S".into()),
        }
    }

    #[test]
    fn payload_and_mode_override_the_plan() {
        let cfg = config(Operation::Batch(BatchSpec {
            total_requests: 2,
            batch_size: 1,
            dispatch: Dispatch::Synchronous,
            words_per_request: vec![100],
            seed: 1,
        }));
        let plan = cfg.plan().unwrap();
        for inv in &plan.invocations {
            assert_eq!(inv.envelope.workload_data(), "F a a S");
            assert_eq!(inv.words, 4);
            assert_eq!(inv.envelope.extra_str(MODE_FIELD), Some("full"));
        }
    }

    #[test]
    fn rejects_relative_uris_and_zero_timeout() {
        let mut cfg = config(Operation::Backoff(BackoffSpec::default()));
        cfg.proxy_uri = "/relative".into();
        assert!(matches!(cfg.validate(), Err(DriverError::InvalidConfig(_))));
        let mut cfg = config(Operation::Backoff(BackoffSpec::default()));
        cfg.request_timeout_ms = 0;
        assert!(cfg.validate().is_err());
    }

    #[tokio::test]
    async fn unreachable_proxy_fails_the_preflight() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(Operation::Backoff(BackoffSpec::default()));
        cfg.proxy_uri = "http://127.0.0.1:9/".into();
        cfg.output_dir = dir.path().join("out");
        let err = run_benchmark(&cfg).await.unwrap_err();
        assert!(matches!(err, DriverError::ProxyUnreachable { .. }), "{err}");
    }

    #[tokio::test]
    async fn unreachable_proxy_becomes_a_transport_error_record() {
        let env = RequestEnvelope::new("u", "http://127.0.0.1:2/func/word", "a").unwrap();
        let rec = invoke("http://127.0.0.1:9/", &env, 1, Duration::from_secs(1)).await;
        assert_eq!(rec.status, Status::TransportError);
        assert!(rec.size_at(Point::M1).is_some());
        assert!(rec.size_at(Point::M4).is_none());
    }
}
