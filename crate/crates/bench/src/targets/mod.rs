//! Target functions (word/letter counter, sleeper) and the gateway that hosts
//! them.
//!
//! Targets keep no logs of their own; everything they measure travels back in
//! the response envelope.

mod gateway;

use std::sync::Arc;
use std::time::{Duration, Instant};

use bytes::Bytes;
use http::{Request, Response, StatusCode};
use serde_json::Value;

use faasbench_core::metrics::epoch_millis_now;
use faasbench_core::protocol::{
    decode_request, encode_response, HrTime, RequestEnvelope, ResponseEnvelope, TargetReport,
    MODE_FIELD, MSG_BAD_SLEEP, MSG_MALFORMED_REQUEST, SLEEP_FIELD, TARGET_ERROR, TARGET_UUID,
};

use crate::server::{BoxFuture, Handler};
use crate::wire::json_response;

pub use gateway::{gateway_wrap, Gateway, GatewayConfig, InstanceState};

pub const WORD_ROUTE: &str = "/func/word";
pub const SLEEP_ROUTE: &str = "/func/sleep";

/// Maximal runs of characters other than U+0020.
pub fn count_words(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        let is_letter = c != ' ';
        if is_letter && !in_word {
            count += 1;
        }
        in_word = is_letter;
    }
    count
}

/// Characters other than U+0020; tabs and newlines count as letters.
pub fn count_letters(text: &str) -> usize {
    text.chars().filter(|&c| c != ' ').count()
}

/// Error reply from a target, echoing the request UUID when it is known.
pub(crate) fn target_error(status: StatusCode, uuid: Option<&str>, message: &str) -> Response<Bytes> {
    let mut env = ResponseEnvelope::error(TARGET_ERROR, message).expect("constant field name");
    if let Some(uuid) = uuid {
        env = env.with_extra(TARGET_UUID, uuid).expect("constant field name");
    }
    json_response(status, encode_response(&env))
}

/// Loose UUID lookup for requests that fail full decoding.
pub(crate) fn sniff_uuid(body: &[u8]) -> Option<String> {
    let v: Value = serde_json::from_slice(body).ok()?;
    v.get(faasbench_core::protocol::REQUEST_UUID)?
        .as_str()
        .map(str::to_owned)
}

fn decode(req: &Request<Bytes>) -> Result<RequestEnvelope, Box<Response<Bytes>>> {
    std::str::from_utf8(req.body())
        .ok()
        .and_then(|t| decode_request(t).ok())
        .ok_or_else(|| {
            Box::new(target_error(
                StatusCode::BAD_REQUEST,
                sniff_uuid(req.body()).as_deref(),
                MSG_MALFORMED_REQUEST,
            ))
        })
}

fn reply(env: &RequestEnvelope, start_ms: u64, mark: Instant, result: String) -> Response<Bytes> {
    let hr = HrTime::from(mark.elapsed());
    let stop_ms = epoch_millis_now().max(start_ms);
    let report = TargetReport::new(start_ms, stop_ms, hr, result).expect("stop clamped to start");
    let out = ResponseEnvelope::from_target(report)
        .with_extra(TARGET_UUID, env.workload_uuid())
        .expect("constant field name");
    json_response(StatusCode::OK, encode_response(&out))
}

/// Counts letters (default) or, in `full` mode, words and letters.
pub async fn handle_wordcount(req: Request<Bytes>) -> Response<Bytes> {
    let start_ms = epoch_millis_now();
    let mark = Instant::now();
    let env = match decode(&req) {
        Ok(env) => env,
        Err(resp) => return *resp,
    };
    let data = env.workload_data();
    let result = match env.extra_str(MODE_FIELD).unwrap_or("letters") {
        "letters" => count_letters(data).to_string(),
        "full" => format!("words={};letters={}", count_words(data), count_letters(data)),
        other => {
            return target_error(
                StatusCode::BAD_REQUEST,
                Some(env.workload_uuid()),
                &format!("bad mode parameter `{other}`"),
            )
        }
    };
    reply(&env, start_ms, mark, result)
}

fn sleep_param(env: &RequestEnvelope) -> Option<u64> {
    match env.extra().get(SLEEP_FIELD)? {
        Value::String(s) => s.trim().parse().ok(),
        Value::Number(n) => n.as_u64(),
        _ => None,
    }
}

/// Sleeps for `faasbench_sleep_ms`, then reports the slept milliseconds.
pub async fn handle_sleep(req: Request<Bytes>) -> Response<Bytes> {
    let start_ms = epoch_millis_now();
    let mark = Instant::now();
    let env = match decode(&req) {
        Ok(env) => env,
        Err(resp) => return *resp,
    };
    let Some(ms) = sleep_param(&env) else {
        return target_error(StatusCode::BAD_REQUEST, Some(env.workload_uuid()), MSG_BAD_SLEEP);
    };
    tokio::time::sleep(Duration::from_millis(ms)).await;
    reply(&env, start_ms, mark, ms.to_string())
}

/// Routes `/func/word` and `/func/sleep`, each behind its own gateway
/// instance.
#[derive(Clone)]
pub struct TargetService {
    word: Arc<Gateway>,
    sleep: Arc<Gateway>,
}

impl TargetService {
    pub fn new(config: GatewayConfig) -> Self {
        Self {
            word: Arc::new(gateway_wrap(handle_wordcount, config, InstanceState::default())),
            sleep: Arc::new(gateway_wrap(handle_sleep, config, InstanceState::default())),
        }
    }
}

impl Handler for TargetService {
    fn call(&self, req: Request<Bytes>) -> BoxFuture<Response<Bytes>> {
        if req.method() != http::Method::POST {
            return Box::pin(async {
                target_error(StatusCode::METHOD_NOT_ALLOWED, None, "method not allowed")
            });
        }
        match req.uri().path() {
            WORD_ROUTE => self.word.call(req),
            SLEEP_ROUTE => self.sleep.call(req),
            other => {
                let msg = format!("no function at `{other}`");
                Box::pin(async move { target_error(StatusCode::NOT_FOUND, None, &msg) })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use faasbench_core::protocol::{decode_response, encode_request};

    use super::*;

    // Independent tokenizer.
    fn oracle_words(s: &str) -> usize {
        s.split(' ').filter(|w| !w.is_empty()).count()
    }

    fn request(data: &str, extra: &[(&str, &str)]) -> Request<Bytes> {
        let mut env = RequestEnvelope::new("112c338d", "http://faas:8080/func/word", data).unwrap();
        for (k, v) in extra {
            env.set_extra(*k, *v).unwrap();
        }
        Request::new(Bytes::from(encode_request(&env)))
    }

    fn envelope(resp: &Response<Bytes>) -> ResponseEnvelope {
        decode_response(std::str::from_utf8(resp.body()).unwrap()).unwrap()
    }

    #[test]
    fn word_counts() {
        assert_eq!(count_words("F a a S"), 4);
        assert_eq!(count_words(""), 0);
        assert_eq!(count_words("ab  cd e"), 3);
        assert_eq!(count_words("   "), 0);
        assert_eq!(count_words(" lead trail "), 2);
        assert_eq!(count_words("tab\tis\nletter"), 1);
        for s in ["ab  cd e", " x ", "a", "héllo wörld  ß"] {
            assert_eq!(count_words(s), oracle_words(s));
        }
    }

    #[test]
    fn letter_counts() {
        assert_eq!(count_letters("F a a S"), 4);
        assert_eq!(count_letters("    "), 0);
        assert_eq!(count_letters("héllo wörld"), 10);
        assert_eq!(count_letters("a\tb"), 3);
    }

    #[tokio::test]
    async fn letters_mode_matches_listing() {
        let resp = handle_wordcount(request("F a a S", &[])).await;
        assert_eq!(resp.status(), StatusCode::OK);
        let env = envelope(&resp);
        assert_eq!(env.target().unwrap().result(), "4");
        assert_eq!(env.extra_str(TARGET_UUID), Some("112c338d"));
        assert!(env.workload_uuid().is_none());
    }

    #[tokio::test]
    async fn full_mode() {
        let resp = handle_wordcount(request("hello world", &[(MODE_FIELD, "full")])).await;
        assert_eq!(envelope(&resp).target().unwrap().result(), "words=2;letters=10");
    }

    #[tokio::test]
    async fn empty_data() {
        let resp = handle_wordcount(request("", &[])).await;
        assert_eq!(envelope(&resp).target().unwrap().result(), "0");
    }

    #[tokio::test]
    async fn malformed_body() {
        let resp = handle_wordcount(Request::new(Bytes::from_static(b"{\"faasbench_workload_uuid\":\"u1\"}"))).await;
        assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
        let env = envelope(&resp);
        assert_eq!(env.extra_str(TARGET_ERROR), Some(MSG_MALFORMED_REQUEST));
        assert_eq!(env.extra_str(TARGET_UUID), Some("u1"));
        let resp = handle_wordcount(Request::new(Bytes::from_static(b"\xff"))).await;
        assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn unknown_mode() {
        let resp = handle_wordcount(request("a", &[(MODE_FIELD, "bytes")])).await;
        assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn sleep_zero_is_immediate() {
        let resp = handle_sleep(request("", &[(SLEEP_FIELD, "0")])).await;
        let env = envelope(&resp);
        let t = env.target().unwrap();
        assert_eq!(t.result(), "0");
        assert!(t.run_time_hr().as_millis_f64() < 50.0);
    }

    #[tokio::test]
    async fn sleep_duration_within_tolerance() {
        let begin = Instant::now();
        let resp = handle_sleep(request("", &[(SLEEP_FIELD, "200")])).await;
        let wall = begin.elapsed().as_secs_f64() * 1000.0;
        let t = envelope(&resp).target().unwrap().clone();
        assert_eq!(t.result(), "200");
        assert!((160.0..=240.0).contains(&wall), "{wall}");
        assert!(t.run_time_hr().as_millis_f64() >= 200.0);
    }

    #[tokio::test]
    async fn bad_sleep_parameter() {
        for extra in [&[][..], &[(SLEEP_FIELD, "-5")][..], &[(SLEEP_FIELD, "soon")][..]] {
            let resp = handle_sleep(request("", extra)).await;
            assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
            assert_eq!(envelope(&resp).extra_str(TARGET_ERROR), Some(MSG_BAD_SLEEP));
        }
    }
}
