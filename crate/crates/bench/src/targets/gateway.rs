//! Miniature FaaS gateway: cold starts, warm retention, an execution-time
//! watchdog and the optional workload echo header.

use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use http::{HeaderName, HeaderValue, Request, Response, StatusCode};
use tokio::sync::Mutex;

use faasbench_core::metrics::epoch_millis_now;
use faasbench_core::protocol::{
    decode_request, encode_response, ResponseEnvelope, MSG_EXECUTION_LIMIT, TARGET_GATEWAY_ERROR,
    TARGET_UUID,
};

use super::sniff_uuid;
use crate::server::{BoxFuture, Handler};
use crate::wire::json_response;

pub const ECHO_HEADER: HeaderName = HeaderName::from_static("x-workload-echo");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayConfig {
    pub execution_limit_ms: u64,
    pub cold_start_delay_ms: u64,
    pub warm_window_ms: u64,
    /// Copy the request workload into an `X-Workload-Echo` reply header.
    pub header_echo: bool,
    /// Grace added to the watchdog deadline; overruns below it are treated
    /// as timer jitter and the reply goes through.
    pub watchdog_slack_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            execution_limit_ms: 30_000,
            cold_start_delay_ms: 0,
            warm_window_ms: 300_000,
            header_echo: false,
            watchdog_slack_ms: 25,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.execution_limit_ms == 0 {
            return Err("execution limit must be positive".into());
        }
        Ok(())
    }
}

/// Retention state of the single emulated function instance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InstanceState {
    pub last_invocation_ms: Option<u64>,
}

impl InstanceState {
    /// Warm iff a previous call finished at most `warm_window_ms` ago.
    pub fn is_warm(&self, now_ms: u64, warm_window_ms: u64) -> bool {
        self.last_invocation_ms
            .is_some_and(|last| now_ms.saturating_sub(last) <= warm_window_ms)
    }

    pub fn touch(&mut self, now_ms: u64) {
        self.last_invocation_ms = Some(now_ms);
    }
}

struct Shared {
    inner: Box<dyn Handler>,
    config: GatewayConfig,
    state: Mutex<InstanceState>,
}

/// A handler wrapped with gateway behavior. Cheap to clone; clones share the
/// instance state.
#[derive(Clone)]
pub struct Gateway {
    shared: Arc<Shared>,
}

pub fn gateway_wrap<H: Handler>(inner: H, config: GatewayConfig, state: InstanceState) -> Gateway {
    Gateway {
        shared: Arc::new(Shared {
            inner: Box::new(inner),
            config,
            state: Mutex::new(state),
        }),
    }
}

impl Gateway {
    pub async fn state(&self) -> InstanceState {
        *self.shared.state.lock().await
    }
}

fn echo_value(data: &str) -> Option<HeaderValue> {
    let bytes: Vec<u8> = data
        .bytes()
        .map(|b| if (b < 0x20 && b != b'\t') || b == 0x7f { b' ' } else { b })
        .collect();
    HeaderValue::from_bytes(&bytes).ok()
}

impl Handler for Gateway {
    fn call(&self, req: Request<Bytes>) -> BoxFuture<Response<Bytes>> {
        let shared = Arc::clone(&self.shared);
        Box::pin(async move {
            let cfg = shared.config;
            let echo = if cfg.header_echo {
                std::str::from_utf8(req.body())
                    .ok()
                    .and_then(|t| decode_request(t).ok())
                    .and_then(|env| echo_value(env.workload_data()))
            } else {
                None
            };
            let uuid = sniff_uuid(req.body());

            {
                // held across the delay so concurrent arrivals share one cold start
                let mut state = shared.state.lock().await;
                if !state.is_warm(epoch_millis_now(), cfg.warm_window_ms) {
                    tokio::time::sleep(Duration::from_millis(cfg.cold_start_delay_ms)).await;
                    state.touch(epoch_millis_now());
                }
            }

            let deadline = Duration::from_millis(cfg.execution_limit_ms + cfg.watchdog_slack_ms);
            let mut resp = match tokio::time::timeout(deadline, shared.inner.call(req)).await {
                Ok(resp) => resp,
                Err(_) => {
                    let mut env = ResponseEnvelope::error(TARGET_GATEWAY_ERROR, MSG_EXECUTION_LIMIT)
                        .expect("constant field name");
                    if let Some(uuid) = &uuid {
                        env = env.with_extra(TARGET_UUID, uuid.as_str()).expect("constant field name");
                    }
                    json_response(StatusCode::GATEWAY_TIMEOUT, encode_response(&env))
                }
            };

            shared.state.lock().await.touch(epoch_millis_now());
            if let Some(value) = echo {
                resp.headers_mut().insert(ECHO_HEADER, value);
            }
            resp
        })
    }
}
