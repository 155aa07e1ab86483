use std::fmt;
use std::str::FromStr;

use crate::protocol::{
    correlate, Correlation, RequestEnvelope, ResponseEnvelope, MSG_FUNCTION_TIMEOUT,
    MSG_GATEWAY_TIMEOUT, PROXY_ERROR, TARGET_ERROR, TARGET_GATEWAY_ERROR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Success,
    /// The response UUID does not match the request.
    Invalid,
    GatewayTimeout,
    FunctionTimeout,
    /// No HTTP response reached the driver.
    TransportError,
    FunctionError,
}

impl Status {
    pub const ALL: [Status; 6] = [
        Status::Success,
        Status::Invalid,
        Status::GatewayTimeout,
        Status::FunctionTimeout,
        Status::TransportError,
        Status::FunctionError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "Success",
            Status::Invalid => "Invalid",
            Status::GatewayTimeout => "GatewayTimeout",
            Status::FunctionTimeout => "FunctionTimeout",
            Status::TransportError => "TransportError",
            Status::FunctionError => "FunctionError",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Status::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

/// What the driver saw on the wire for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// Connection failure or client-side timeout.
    NoResponse { detail: String },
    Response {
        http_status: u16,
        /// `None` when the body did not decode as an envelope.
        envelope: Option<ResponseEnvelope>,
        decode_error: Option<String>,
    },
}

/// Precedence: TransportError, GatewayTimeout, FunctionTimeout,
/// FunctionError, Invalid, Success.
pub fn classify(outcome: &Outcome, request: &RequestEnvelope) -> Status {
    let (http_status, env) = match outcome {
        Outcome::NoResponse { .. } => return Status::TransportError,
        Outcome::Response {
            http_status,
            envelope,
            ..
        } => (*http_status, envelope),
    };
    let Some(env) = env else {
        return Status::FunctionError;
    };
    if env.extra().contains_key(TARGET_GATEWAY_ERROR)
        || env.extra_str(PROXY_ERROR) == Some(MSG_GATEWAY_TIMEOUT)
    {
        return Status::GatewayTimeout;
    }
    if env.extra_str(TARGET_ERROR) == Some(MSG_FUNCTION_TIMEOUT) {
        return Status::FunctionTimeout;
    }
    if env.is_error() || !(200..300).contains(&http_status) {
        return Status::FunctionError;
    }
    if correlate(request, env) == Correlation::Invalid {
        return Status::Invalid;
    }
    if env.target().is_none() || env.proxy().is_none() {
        return Status::FunctionError;
    }
    Status::Success
}

/// Human-readable reason for a non-success outcome.
pub fn error_detail(outcome: &Outcome, request: &RequestEnvelope) -> Option<String> {
    match outcome {
        Outcome::NoResponse { detail } => Some(detail.clone()),
        Outcome::Response {
            http_status,
            envelope,
            decode_error,
        } => match envelope {
            None => Some(format!(
                "HTTP {http_status}: {}",
                decode_error.as_deref().unwrap_or("undecodable response")
            )),
            Some(env) => {
                let errors: Vec<String> = env
                    .errors()
                    .map(|(k, v)| match v.as_str() {
                        Some(s) => format!("{k}={s}"),
                        None => format!("{k}={v}"),
                    })
                    .collect();
                if !errors.is_empty() {
                    Some(errors.join("; "))
                } else if !(200..300).contains(http_status) {
                    Some(format!("HTTP {http_status}"))
                } else if correlate(request, env) == Correlation::Invalid {
                    Some(format!(
                        "uuid mismatch: expected {}, got {}",
                        request.workload_uuid(),
                        env.workload_uuid().unwrap_or("<none>")
                    ))
                } else if env.proxy().is_none() {
                    Some("response lacks proxy timing".into())
                } else {
                    None
                }
            }
        },
    }
}
