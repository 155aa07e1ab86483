//! Self-describing JSON messages exchanged between the benchmark driver, the
//! proxy function and the target functions.
//!
//! Every field name carries an origin prefix (`faasbench_`, `proxy_`,
//! `target_`) naming the component that authored it. The one exception is
//! `target_uri`, which the driver writes. Field order on the wire is stable so
//! that encoded byte sizes are reproducible between runs.

use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

pub const REQUEST_UUID: &str = "faasbench_workload_uuid";
pub const TARGET_URI: &str = "target_uri";
pub const REQUEST_DATA: &str = "faasbench_workload_data";

pub const RESPONSE_UUID: &str = "proxy_workload_uuid";
pub const TARGET_START_TIME: &str = "target_start_time";
pub const TARGET_STOP_TIME: &str = "target_stop_time";
pub const TARGET_HR_SECONDS: &str = "target_run_time_hr_seconds";
pub const TARGET_HR_NANOSECONDS: &str = "target_run_time_hr_nanoseconds";
pub const TARGET_RESULT: &str = "target_workload_result";

pub const PROXY_START_TIME: &str = "proxy_start_time";
pub const PROXY_STOP_TIME: &str = "proxy_stop_time";
pub const PROXY_HR_SECONDS: &str = "proxy_run_time_hr_seconds";
pub const PROXY_HR_NANOSECONDS: &str = "proxy_run_time_hr_nanoseconds";

/// UUID of the request as seen by the target. The proxy relays it as
/// `proxy_workload_uuid`.
pub const TARGET_UUID: &str = "target_workload_uuid";

pub const PROXY_ERROR: &str = "proxy_error";
pub const TARGET_ERROR: &str = "target_error";
/// Stamped by the gateway emulator when it aborts a function.
pub const TARGET_GATEWAY_ERROR: &str = "target_gateway_error";

pub const MSG_MALFORMED_REQUEST: &str = "malformed request";
pub const MSG_TARGET_UNREACHABLE: &str = "target unreachable";
pub const MSG_GATEWAY_TIMEOUT: &str = "gateway timeout";
pub const MSG_HOST_NOT_ALLOWED: &str = "host not allowed";
pub const MSG_BAD_TARGET_REPLY: &str = "malformed target reply";
pub const MSG_EXECUTION_LIMIT: &str = "execution limit exceeded";
pub const MSG_BAD_SLEEP: &str = "bad sleep parameter";
/// `target_error` value a function uses to report its own timeout.
pub const MSG_FUNCTION_TIMEOUT: &str = "function timeout";

/// Optional request fields understood by the bundled target functions.
pub const MODE_FIELD: &str = "faasbench_mode";
pub const SLEEP_FIELD: &str = "faasbench_sleep_ms";

const TARGET_CORE: [&str; 5] = [
    TARGET_START_TIME,
    TARGET_STOP_TIME,
    TARGET_HR_SECONDS,
    TARGET_HR_NANOSECONDS,
    TARGET_RESULT,
];

const PROXY_TIMING: [&str; 4] = [
    PROXY_START_TIME,
    PROXY_STOP_TIME,
    PROXY_HR_SECONDS,
    PROXY_HR_NANOSECONDS,
];

const NANOS_PER_SEC: u32 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{0}` has no origin prefix")]
    BadPrefix(String),
    #[error("field `{field}` out of range: {reason}")]
    RangeError { field: String, reason: String },
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
}

/// The component that authored a message field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Bench,
    Proxy,
    Target,
}

impl Origin {
    pub const ALL: [Origin; 3] = [Origin::Bench, Origin::Proxy, Origin::Target];

    pub fn prefix(self) -> &'static str {
        match self {
            Origin::Bench => "faasbench_",
            Origin::Proxy => "proxy_",
            Origin::Target => "target_",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Bench => "bench",
            Origin::Proxy => "proxy",
            Origin::Target => "target",
        })
    }
}

/// Resolves the origin of a field name from its prefix. `target_uri` belongs
/// to the driver even though it reads like a target field.
pub fn origin_of(field_name: &str) -> Option<Origin> {
    if field_name == TARGET_URI {
        return Some(Origin::Bench);
    }
    Origin::ALL
        .into_iter()
        .find(|o| field_name.starts_with(o.prefix()))
}

/// A `[second, nanosecond]` duration tuple taken from a monotonic clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HrTime {
    seconds: u64,
    nanoseconds: u32,
}

impl HrTime {
    pub const ZERO: HrTime = HrTime {
        seconds: 0,
        nanoseconds: 0,
    };

    pub fn new(seconds: u64, nanoseconds: u32) -> Result<Self, ProtocolError> {
        if nanoseconds >= NANOS_PER_SEC {
            return Err(ProtocolError::RangeError {
                field: "nanoseconds".into(),
                reason: format!("{nanoseconds} is not below 10^9"),
            });
        }
        Ok(Self {
            seconds,
            nanoseconds,
        })
    }

    pub fn from_nanos(total: u128) -> Self {
        let ns = u128::from(NANOS_PER_SEC);
        Self {
            seconds: (total / ns) as u64,
            nanoseconds: (total % ns) as u32,
        }
    }

    pub fn seconds(&self) -> u64 {
        self.seconds
    }

    pub fn nanoseconds(&self) -> u32 {
        self.nanoseconds
    }

    pub fn as_nanos(&self) -> u128 {
        u128::from(self.seconds) * u128::from(NANOS_PER_SEC) + u128::from(self.nanoseconds)
    }

    pub fn as_millis_f64(&self) -> f64 {
        self.as_nanos() as f64 / 1e6
    }
}

impl From<std::time::Duration> for HrTime {
    fn from(d: std::time::Duration) -> Self {
        Self {
            seconds: d.as_secs(),
            nanoseconds: d.subsec_nanos(),
        }
    }
}

fn check_extra_name(name: &str, reserved: &[&str]) -> Result<(), ProtocolError> {
    if name == TARGET_URI || origin_of(name).is_none() {
        return Err(ProtocolError::BadPrefix(name.to_owned()));
    }
    if reserved.contains(&name) {
        return Err(ProtocolError::InvalidEnvelope(format!(
            "`{name}` is a reserved field"
        )));
    }
    Ok(())
}

fn parse_object(text: &str) -> Result<Map<String, Value>, ProtocolError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(ProtocolError::MalformedMessage(format!(
            "expected a JSON object, found {}",
            json_kind(&other)
        ))),
        Err(e) => Err(ProtocolError::MalformedMessage(e.to_string())),
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn take_string(map: &mut Map<String, Value>, field: &str) -> Result<Option<String>, ProtocolError> {
    match map.shift_remove(field) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(ProtocolError::MalformedMessage(format!(
            "`{field}` must be a string, found {}",
            json_kind(&other)
        ))),
    }
}

fn take_u64(map: &mut Map<String, Value>, field: &str) -> Result<Option<u64>, ProtocolError> {
    let Some(value) = map.shift_remove(field) else {
        return Ok(None);
    };
    match &value {
        Value::Number(n) => {
            if let Some(v) = n.as_u64() {
                Ok(Some(v))
            } else if n.as_i64().is_some() {
                Err(ProtocolError::RangeError {
                    field: field.to_owned(),
                    reason: format!("{n} is negative"),
                })
            } else {
                Err(ProtocolError::MalformedMessage(format!(
                    "`{field}` must be an integer, found {n}"
                )))
            }
        }
        other => Err(ProtocolError::MalformedMessage(format!(
            "`{field}` must be an integer, found {}",
            json_kind(other)
        ))),
    }
}

fn require<T>(value: Option<T>, field: &str) -> Result<T, ProtocolError> {
    value.ok_or_else(|| ProtocolError::MissingField(field.to_owned()))
}

fn hr_from_parts(seconds: u64, nanos: u64, field: &str) -> Result<HrTime, ProtocolError> {
    if nanos >= u64::from(NANOS_PER_SEC) {
        return Err(ProtocolError::RangeError {
            field: field.to_owned(),
            reason: format!("{nanos} is not below 10^9"),
        });
    }
    HrTime::new(seconds, nanos as u32)
}

fn check_interval(start: u64, stop: u64, field: &str) -> Result<(), ProtocolError> {
    if stop < start {
        return Err(ProtocolError::RangeError {
            field: field.to_owned(),
            reason: format!("stop {stop} precedes start {start}"),
        });
    }
    Ok(())
}

fn check_extras(map: &Map<String, Value>) -> Result<(), ProtocolError> {
    match map.keys().find(|k| *k == TARGET_URI || origin_of(k).is_none()) {
        Some(k) => Err(ProtocolError::BadPrefix(k.clone())),
        None => Ok(()),
    }
}

/// Driver to proxy (and proxy to target) request message.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestEnvelope {
    workload_uuid: String,
    target_uri: String,
    workload_data: String,
    extra: Map<String, Value>,
}

impl RequestEnvelope {
    pub fn new(
        workload_uuid: impl Into<String>,
        target_uri: impl Into<String>,
        workload_data: impl Into<String>,
    ) -> Result<Self, ProtocolError> {
        let workload_uuid = workload_uuid.into();
        let target_uri = target_uri.into();
        if workload_uuid.is_empty() {
            return Err(ProtocolError::InvalidEnvelope(
                "workload uuid must not be empty".into(),
            ));
        }
        check_absolute_uri(&target_uri)?;
        Ok(Self {
            workload_uuid,
            target_uri,
            workload_data: workload_data.into(),
            extra: Map::new(),
        })
    }

    /// Adds an origin-prefixed field. Insertion order is kept on the wire.
    pub fn with_extra(
        mut self,
        name: impl Into<String>,
        value: impl Into<Value>,
    ) -> Result<Self, ProtocolError> {
        self.set_extra(name, value)?;
        Ok(self)
    }

    pub fn set_extra(
        &mut self,
        name: impl Into<String>,
        value: impl Into<Value>,
    ) -> Result<(), ProtocolError> {
        let name = name.into();
        check_extra_name(&name, &[REQUEST_UUID, REQUEST_DATA])?;
        self.extra.insert(name, value.into());
        Ok(())
    }

    pub fn workload_uuid(&self) -> &str {
        &self.workload_uuid
    }

    pub fn target_uri(&self) -> &str {
        &self.target_uri
    }

    pub fn workload_data(&self) -> &str {
        &self.workload_data
    }

    pub fn extra(&self) -> &Map<String, Value> {
        &self.extra
    }

    /// String value of an extra field, if present and a string.
    pub fn extra_str(&self, name: &str) -> Option<&str> {
        self.extra.get(name).and_then(Value::as_str)
    }
}

fn check_absolute_uri(uri: &str) -> Result<(), ProtocolError> {
    match url::Url::parse(uri) {
        Ok(u) if u.has_host() => Ok(()),
        Ok(_) => Err(ProtocolError::InvalidEnvelope(format!(
            "target uri `{uri}` has no authority"
        ))),
        Err(e) => Err(ProtocolError::InvalidEnvelope(format!(
            "target uri `{uri}` is not absolute: {e}"
        ))),
    }
}

pub fn encode_request(env: &RequestEnvelope) -> String {
    let mut map = Map::with_capacity(3 + env.extra.len());
    map.insert(REQUEST_UUID.into(), Value::String(env.workload_uuid.clone()));
    map.insert(TARGET_URI.into(), Value::String(env.target_uri.clone()));
    map.insert(REQUEST_DATA.into(), Value::String(env.workload_data.clone()));
    for (k, v) in &env.extra {
        map.insert(k.clone(), v.clone());
    }
    Value::Object(map).to_string()
}

pub fn decode_request(text: &str) -> Result<RequestEnvelope, ProtocolError> {
    let mut map = parse_object(text)?;
    let workload_uuid = require(take_string(&mut map, REQUEST_UUID)?, REQUEST_UUID)?;
    let target_uri = require(take_string(&mut map, TARGET_URI)?, TARGET_URI)?;
    let workload_data = require(take_string(&mut map, REQUEST_DATA)?, REQUEST_DATA)?;
    check_extras(&map)?;
    let mut env = RequestEnvelope::new(workload_uuid, target_uri, workload_data)?;
    env.extra = map;
    Ok(env)
}

/// Timing and result fields written by a target function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetReport {
    start_time_ms: u64,
    stop_time_ms: u64,
    run_time_hr: HrTime,
    result: String,
}

impl TargetReport {
    pub fn new(
        start_time_ms: u64,
        stop_time_ms: u64,
        run_time_hr: HrTime,
        result: impl Into<String>,
    ) -> Result<Self, ProtocolError> {
        check_interval(start_time_ms, stop_time_ms, TARGET_STOP_TIME)?;
        Ok(Self {
            start_time_ms,
            stop_time_ms,
            run_time_hr,
            result: result.into(),
        })
    }

    pub fn start_time_ms(&self) -> u64 {
        self.start_time_ms
    }

    pub fn stop_time_ms(&self) -> u64 {
        self.stop_time_ms
    }

    pub fn run_time_hr(&self) -> HrTime {
        self.run_time_hr
    }

    pub fn result(&self) -> &str {
        &self.result
    }
}

/// Timing fields the proxy stamps around its forward call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProxyReport {
    start_time_ms: u64,
    stop_time_ms: u64,
    run_time_hr: HrTime,
}

impl ProxyReport {
    pub fn new(
        start_time_ms: u64,
        stop_time_ms: u64,
        run_time_hr: HrTime,
    ) -> Result<Self, ProtocolError> {
        check_interval(start_time_ms, stop_time_ms, PROXY_STOP_TIME)?;
        Ok(Self {
            start_time_ms,
            stop_time_ms,
            run_time_hr,
        })
    }

    pub fn start_time_ms(&self) -> u64 {
        self.start_time_ms
    }

    pub fn stop_time_ms(&self) -> u64 {
        self.stop_time_ms
    }

    pub fn run_time_hr(&self) -> HrTime {
        self.run_time_hr
    }
}

/// Target or proxy reply.
///
/// A plain target reply carries only target fields; the proxy adds the
/// response UUID and its own timing. Error replies carry an `*_error` field
/// and may omit the timing blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResponseEnvelope {
    workload_uuid: Option<String>,
    target: Option<TargetReport>,
    proxy: Option<ProxyReport>,
    extra: Map<String, Value>,
}

impl ResponseEnvelope {
    pub fn from_target(report: TargetReport) -> Self {
        Self {
            target: Some(report),
            ..Self::default()
        }
    }

    /// An error reply carrying only the given status field.
    pub fn error(field: &str, message: impl Into<String>) -> Result<Self, ProtocolError> {
        Self::default().with_extra(field, message.into())
    }

    pub fn with_uuid(mut self, uuid: impl Into<String>) -> Self {
        self.workload_uuid = Some(uuid.into());
        self
    }

    pub fn with_target(mut self, report: TargetReport) -> Self {
        self.target = Some(report);
        self
    }

    pub fn with_proxy(mut self, report: ProxyReport) -> Self {
        self.proxy = Some(report);
        self
    }

    pub fn with_extra(
        mut self,
        name: impl Into<String>,
        value: impl Into<Value>,
    ) -> Result<Self, ProtocolError> {
        let name = name.into();
        let mut reserved = vec![RESPONSE_UUID];
        reserved.extend(TARGET_CORE);
        reserved.extend(PROXY_TIMING);
        check_extra_name(&name, &reserved)?;
        self.extra.insert(name, value.into());
        Ok(self)
    }

    pub fn workload_uuid(&self) -> Option<&str> {
        self.workload_uuid.as_deref()
    }

    pub fn target(&self) -> Option<&TargetReport> {
        self.target.as_ref()
    }

    pub fn proxy(&self) -> Option<&ProxyReport> {
        self.proxy.as_ref()
    }

    pub fn extra(&self) -> &Map<String, Value> {
        &self.extra
    }

    pub fn extra_str(&self, name: &str) -> Option<&str> {
        self.extra.get(name).and_then(Value::as_str)
    }

    pub fn extra_u64(&self, name: &str) -> Option<u64> {
        self.extra.get(name).and_then(Value::as_u64)
    }

    /// All `*_error` status fields in wire order.
    pub fn errors(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.extra
            .iter()
            .filter(|(k, _)| is_error_field(k))
            .map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_error(&self) -> bool {
        self.errors().next().is_some()
    }

    /// Every field with the `target_` prefix as it appears on the wire.
    pub fn target_fields(&self) -> Map<String, Value> {
        to_map(self)
            .into_iter()
            .filter(|(k, _)| origin_of(k) == Some(Origin::Target))
            .collect()
    }
}

fn is_error_field(name: &str) -> bool {
    name.ends_with("_error") && origin_of(name).is_some()
}

fn to_map(env: &ResponseEnvelope) -> Map<String, Value> {
    let mut map = Map::with_capacity(10 + env.extra.len());
    if let Some(uuid) = &env.workload_uuid {
        map.insert(RESPONSE_UUID.into(), Value::String(uuid.clone()));
    }
    if let Some(t) = &env.target {
        map.insert(TARGET_START_TIME.into(), t.start_time_ms.into());
        map.insert(TARGET_STOP_TIME.into(), t.stop_time_ms.into());
        map.insert(TARGET_HR_SECONDS.into(), t.run_time_hr.seconds.into());
        map.insert(TARGET_HR_NANOSECONDS.into(), t.run_time_hr.nanoseconds.into());
        map.insert(TARGET_RESULT.into(), Value::String(t.result.clone()));
    }
    if let Some(p) = &env.proxy {
        map.insert(PROXY_START_TIME.into(), p.start_time_ms.into());
        map.insert(PROXY_STOP_TIME.into(), p.stop_time_ms.into());
        map.insert(PROXY_HR_SECONDS.into(), p.run_time_hr.seconds.into());
        map.insert(PROXY_HR_NANOSECONDS.into(), p.run_time_hr.nanoseconds.into());
    }
    for (k, v) in &env.extra {
        map.insert(k.clone(), v.clone());
    }
    map
}

pub fn encode_response(env: &ResponseEnvelope) -> String {
    Value::Object(to_map(env)).to_string()
}

pub fn decode_response(text: &str) -> Result<ResponseEnvelope, ProtocolError> {
    let mut map = parse_object(text)?;
    check_extras(&map)?;
    let is_error = map.keys().any(|k| is_error_field(k));
    let from_proxy = map.keys().any(|k| origin_of(k) == Some(Origin::Proxy));

    let workload_uuid = take_string(&mut map, RESPONSE_UUID)?;
    if from_proxy && !is_error && workload_uuid.is_none() {
        return Err(ProtocolError::MissingField(RESPONSE_UUID.into()));
    }

    let has_target = TARGET_CORE.iter().any(|f| map.contains_key(*f));
    let target = if has_target || !is_error {
        let start = require(take_u64(&mut map, TARGET_START_TIME)?, TARGET_START_TIME)?;
        let stop = require(take_u64(&mut map, TARGET_STOP_TIME)?, TARGET_STOP_TIME)?;
        let secs = require(take_u64(&mut map, TARGET_HR_SECONDS)?, TARGET_HR_SECONDS)?;
        let nanos = require(
            take_u64(&mut map, TARGET_HR_NANOSECONDS)?,
            TARGET_HR_NANOSECONDS,
        )?;
        let result = require(take_string(&mut map, TARGET_RESULT)?, TARGET_RESULT)?;
        let hr = hr_from_parts(secs, nanos, TARGET_HR_NANOSECONDS)?;
        Some(TargetReport::new(start, stop, hr, result)?)
    } else {
        None
    };

    let proxy = if PROXY_TIMING.iter().any(|f| map.contains_key(*f)) {
        let start = require(take_u64(&mut map, PROXY_START_TIME)?, PROXY_START_TIME)?;
        let stop = require(take_u64(&mut map, PROXY_STOP_TIME)?, PROXY_STOP_TIME)?;
        let secs = require(take_u64(&mut map, PROXY_HR_SECONDS)?, PROXY_HR_SECONDS)?;
        let nanos = require(take_u64(&mut map, PROXY_HR_NANOSECONDS)?, PROXY_HR_NANOSECONDS)?;
        let hr = hr_from_parts(secs, nanos, PROXY_HR_NANOSECONDS)?;
        Some(ProxyReport::new(start, stop, hr)?)
    } else {
        None
    };

    Ok(ResponseEnvelope {
        workload_uuid,
        target,
        proxy,
        extra: map,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correlation {
    Valid,
    Invalid,
}

/// A response belongs to a request iff it echoes the request UUID byte for
/// byte.
pub fn correlate(req: &RequestEnvelope, resp: &ResponseEnvelope) -> Correlation {
    match resp.workload_uuid() {
        Some(uuid) if uuid.as_bytes() == req.workload_uuid().as_bytes() => Correlation::Valid,
        _ => Correlation::Invalid,
    }
}
