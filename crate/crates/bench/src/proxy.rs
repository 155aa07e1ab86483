//! The proxy function: receives driver requests, forwards them to the target
//! URI, and returns the target's reply enriched with its own timing and the
//! m2/m3 wire sizes.

use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use http::{Method, Request, Response, StatusCode};
use thiserror::Error;

use faasbench_core::metrics::{Point, SizeSample, Stopwatch, TimingSample};
use faasbench_core::protocol::{
    decode_request, decode_response, encode_request, encode_response, origin_of, Origin,
    ProxyReport, RequestEnvelope, ResponseEnvelope, MSG_BAD_TARGET_REPLY, MSG_GATEWAY_TIMEOUT,
    MSG_HOST_NOT_ALLOWED, MSG_MALFORMED_REQUEST, MSG_TARGET_UNREACHABLE, PROXY_ERROR, TARGET_UUID,
};

use crate::server::{BoxFuture, Handler};
use crate::targets::sniff_uuid;
use crate::wire::{json_response, ClientError, IncomingResponse, OutgoingRequest};

/// Names of the size fields the proxy adds to its reply.
pub const M2_HEADER: &str = "proxy_m2_header_b";
pub const M2_BODY: &str = "proxy_m2_body_b";
pub const M3_HEADER: &str = "proxy_m3_header_b";
pub const M3_BODY: &str = "proxy_m3_body_b";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyConfig {
    pub forward_timeout_ms: u64,
    /// Extra delay before forwarding; stands in for region distance.
    pub injected_latency_ms: u64,
    pub allowed_target_hosts: Option<Vec<String>>,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            forward_timeout_ms: 30_000,
            injected_latency_ms: 0,
            allowed_target_hosts: None,
        }
    }
}

impl ProxyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.forward_timeout_ms == 0 {
            return Err("forward timeout must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("host `{0}` is not on the allow-list")]
    HostNotAllowed(String),
    #[error("cannot reach target: {0}")]
    ConnectFailure(ClientError),
    #[error("target did not answer within {0:?}")]
    TimeoutFailure(Duration),
}

#[derive(Debug)]
pub struct ForwardReply {
    pub request_size: SizeSample,
    pub response_size: SizeSample,
    pub response: IncomingResponse,
}

/// POSTs the re-encoded envelope to `target_uri`.
pub async fn forward(
    envelope: &RequestEnvelope,
    target_uri: &str,
    timeout: Duration,
    allowed_hosts: Option<&[String]>,
) -> Result<ForwardReply, (Option<SizeSample>, ForwardError)> {
    let request = OutgoingRequest::post_json(target_uri, encode_request(envelope))
        .map_err(|e| (None, ForwardError::ConnectFailure(e)))?;
    if let Some(allowed) = allowed_hosts {
        if !allowed.iter().any(|h| h.eq_ignore_ascii_case(request.host())) {
            return Err((None, ForwardError::HostNotAllowed(request.host().to_owned())));
        }
    }
    let request_size = request.sizes(Point::M2);
    match request.send(timeout).await {
        Ok(response) => Ok(ForwardReply {
            request_size,
            response_size: response.sizes(Point::M3),
            response,
        }),
        Err(ClientError::Timeout(d)) => Err((Some(request_size), ForwardError::TimeoutFailure(d))),
        Err(e) => Err((Some(request_size), ForwardError::ConnectFailure(e))),
    }
}

fn with_sizes(mut env: ResponseEnvelope, sizes: &[SizeSample]) -> ResponseEnvelope {
    for s in sizes {
        let (h, b) = match s.point {
            Point::M2 => (M2_HEADER, M2_BODY),
            Point::M3 => (M3_HEADER, M3_BODY),
            _ => continue,
        };
        env = env
            .with_extra(h, s.header_bytes)
            .and_then(|e| e.with_extra(b, s.body_bytes))
            .expect("constant field names");
    }
    env
}

fn proxy_report(t: &TimingSample) -> ProxyReport {
    ProxyReport::new(t.epoch_start_ms, t.epoch_stop_ms, t.hr_elapsed).expect("stopwatch keeps stop >= start")
}

fn proxy_error(status: StatusCode, uuid: Option<&str>, message: &str, timing: Option<&TimingSample>, sizes: &[SizeSample]) -> Response<Bytes> {
    let mut env = ResponseEnvelope::error(PROXY_ERROR, message).expect("constant field name");
    if let Some(uuid) = uuid {
        env = env.with_uuid(uuid);
    }
    if let Some(t) = timing {
        env = env.with_proxy(proxy_report(t));
    }
    json_response(status, encode_response(&with_sizes(env, sizes)))
}

/// Merges the target reply with the proxy's own fields. Target-origin fields
/// pass through unchanged.
fn merge(request: &RequestEnvelope, target: ResponseEnvelope, timing: &TimingSample, sizes: &[SizeSample]) -> ResponseEnvelope {
    let uuid = target
        .extra_str(TARGET_UUID)
        .unwrap_or(request.workload_uuid())
        .to_owned();
    let mut out = ResponseEnvelope::default()
        .with_uuid(uuid)
        .with_proxy(proxy_report(timing));
    if let Some(report) = target.target() {
        out = out.with_target(report.clone());
    }
    for (k, v) in target.extra() {
        if origin_of(k) != Some(Origin::Proxy) {
            out = out.with_extra(k.clone(), v.clone()).expect("names validated on decode");
        }
    }
    with_sizes(out, sizes)
}

pub async fn handle_invocation(config: &ProxyConfig, req: Request<Bytes>) -> Response<Bytes> {
    if req.method() != Method::POST {
        return proxy_error(StatusCode::METHOD_NOT_ALLOWED, None, "method not allowed", None, &[]);
    }
    let envelope = match std::str::from_utf8(req.body()).ok().map(decode_request) {
        Some(Ok(env)) => env,
        _ => {
            let uuid = sniff_uuid(req.body());
            return proxy_error(StatusCode::BAD_REQUEST, uuid.as_deref(), MSG_MALFORMED_REQUEST, None, &[]);
        }
    };

    let stopwatch = Stopwatch::start();
    if config.injected_latency_ms > 0 {
        tokio::time::sleep(Duration::from_millis(config.injected_latency_ms)).await;
    }
    let result = forward(
        &envelope,
        envelope.target_uri(),
        Duration::from_millis(config.forward_timeout_ms),
        config.allowed_target_hosts.as_deref(),
    )
    .await;

    match result {
        Ok(reply) => {
            let decoded = reply.response.body_text().ok().map(decode_response);
            let timing = stopwatch.stop();
            let sizes = [reply.request_size, reply.response_size];
            match decoded {
                Some(Ok(target_env)) => {
                    let status = if reply.response.status.is_success() {
                        StatusCode::OK
                    } else {
                        reply.response.status
                    };
                    let merged = merge(&envelope, target_env, &timing, &sizes);
                    json_response(status, encode_response(&merged))
                }
                _ => proxy_error(
                    StatusCode::BAD_GATEWAY,
                    Some(envelope.workload_uuid()),
                    MSG_BAD_TARGET_REPLY,
                    Some(&timing),
                    &sizes,
                ),
            }
        }
        Err((m2, err)) => {
            let timing = stopwatch.stop();
            let (status, message) = match err {
                ForwardError::HostNotAllowed(_) => (StatusCode::FORBIDDEN, MSG_HOST_NOT_ALLOWED),
                ForwardError::ConnectFailure(_) => (StatusCode::BAD_GATEWAY, MSG_TARGET_UNREACHABLE),
                ForwardError::TimeoutFailure(_) => (StatusCode::GATEWAY_TIMEOUT, MSG_GATEWAY_TIMEOUT),
            };
            let sizes: Vec<SizeSample> = m2.into_iter().collect();
            proxy_error(status, Some(envelope.workload_uuid()), message, Some(&timing), &sizes)
        }
    }
}

/// [`handle_invocation`] bound to a fixed configuration.
#[derive(Debug, Clone)]
pub struct ProxyService {
    config: Arc<ProxyConfig>,
}

impl ProxyService {
    pub fn new(config: ProxyConfig) -> Self {
        Self {
            config: Arc::new(config),
        }
    }
}

impl Handler for ProxyService {
    fn call(&self, req: Request<Bytes>) -> BoxFuture<Response<Bytes>> {
        let config = Arc::clone(&self.config);
        Box::pin(async move { handle_invocation(&config, req).await })
    }
}
