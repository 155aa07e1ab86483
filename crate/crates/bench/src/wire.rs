//! HTTP/1.1 exchange with exact accounting of the framed head and body
//! sizes. Every invocation opens its own connection.

use std::time::Duration;

use bytes::Bytes;
use http::header::{CONTENT_LENGTH, CONTENT_TYPE, HOST};
use http::{HeaderMap, HeaderValue, Method, Request, Response, StatusCode, Uri};
use http_body_util::{BodyExt, Full};
use hyper_util::rt::TokioIo;
use thiserror::Error;
use tokio::net::TcpStream;

use faasbench_core::metrics::{measure_http_sizes, Point, SizeSample};

pub const JSON: &str = "application/json";

/// Room for header-echo replies of the largest ladder rungs.
const MAX_RESPONSE_BUF: usize = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("unsupported uri `{0}`")]
    BadUri(String),
    #[error("connect to {addr} failed: {source}")]
    Connect {
        addr: String,
        source: std::io::Error,
    },
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("http exchange failed: {0}")]
    Http(#[from] hyper::Error),
}

/// Request start line, header lines and blank line as written on the wire.
pub fn request_head_bytes(method: &Method, path: &str, headers: &HeaderMap) -> Vec<u8> {
    let mut head = format!("{method} {path} HTTP/1.1\r\n").into_bytes();
    push_headers(&mut head, headers);
    head
}

/// Status line, header lines and blank line. Reason phrases are the
/// canonical ones hyper emits.
pub fn response_head_bytes(status: StatusCode, headers: &HeaderMap) -> Vec<u8> {
    let reason = status.canonical_reason().unwrap_or("");
    let mut head = format!("HTTP/1.1 {} {reason}\r\n", status.as_u16()).into_bytes();
    push_headers(&mut head, headers);
    head
}

fn push_headers(out: &mut Vec<u8>, headers: &HeaderMap) {
    for (name, value) in headers {
        out.extend_from_slice(name.as_str().as_bytes());
        out.extend_from_slice(b": ");
        out.extend_from_slice(value.as_bytes());
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(b"\r\n");
}

/// A fully framed POST, ready to send.
#[derive(Debug, Clone)]
pub struct OutgoingRequest {
    authority: String,
    path: String,
    headers: HeaderMap,
    body: Bytes,
}

impl OutgoingRequest {
    pub fn post_json(uri: &str, body: impl Into<Bytes>) -> Result<Self, ClientError> {
        let parsed: Uri = uri.parse().map_err(|_| ClientError::BadUri(uri.to_owned()))?;
        if parsed.scheme_str() != Some("http") {
            return Err(ClientError::BadUri(uri.to_owned()));
        }
        let authority = parsed
            .authority()
            .ok_or_else(|| ClientError::BadUri(uri.to_owned()))?;
        let path = parsed
            .path_and_query()
            .map_or("/", |p| p.as_str())
            .to_owned();
        let body = body.into();
        let mut headers = HeaderMap::new();
        headers.insert(
            HOST,
            HeaderValue::from_str(authority.as_str()).map_err(|_| ClientError::BadUri(uri.to_owned()))?,
        );
        headers.insert(CONTENT_TYPE, HeaderValue::from_static(JSON));
        headers.insert(CONTENT_LENGTH, HeaderValue::from(body.len()));
        let authority = if authority.port().is_some() {
            authority.to_string()
        } else {
            format!("{}:80", authority.host())
        };
        Ok(Self {
            authority,
            path,
            headers,
            body,
        })
    }

    pub fn host(&self) -> &str {
        self.authority.rsplit_once(':').map_or(&self.authority, |(h, _)| h)
    }

    pub fn sizes(&self, point: Point) -> SizeSample {
        let head = request_head_bytes(&Method::POST, &self.path, &self.headers);
        measure_http_sizes(&head, &self.body, point)
    }

    pub async fn send(self, timeout: Duration) -> Result<IncomingResponse, ClientError> {
        tokio::time::timeout(timeout, self.exchange())
            .await
            .map_err(|_| ClientError::Timeout(timeout))?
    }

    async fn exchange(self) -> Result<IncomingResponse, ClientError> {
        let stream = TcpStream::connect(&self.authority)
            .await
            .map_err(|source| ClientError::Connect {
                addr: self.authority.clone(),
                source,
            })?;
        let _ = stream.set_nodelay(true);
        let (mut sender, conn) = hyper::client::conn::http1::Builder::new()
            .max_buf_size(MAX_RESPONSE_BUF)
            .handshake(TokioIo::new(stream))
            .await?;
        let driver = tokio::spawn(conn);

        let mut req = Request::builder()
            .method(Method::POST)
            .uri(&self.path)
            .body(Full::new(self.body))
            .expect("request parts are pre-validated");
        *req.headers_mut() = self.headers;
        let resp = sender.send_request(req).await?;
        let (parts, body) = resp.into_parts();
        let body = body.collect().await?.to_bytes();
        driver.abort();
        Ok(IncomingResponse {
            status: parts.status,
            headers: parts.headers,
            body,
        })
    }
}

#[derive(Debug, Clone)]
pub struct IncomingResponse {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
}

impl IncomingResponse {
    pub fn sizes(&self, point: Point) -> SizeSample {
        let head = response_head_bytes(self.status, &self.headers);
        measure_http_sizes(&head, &self.body, point)
    }

    pub fn body_text(&self) -> Result<&str, std::str::Utf8Error> {
        std::str::from_utf8(&self.body)
    }
}

/// JSON response with the given status.
pub fn json_response(status: StatusCode, body: String) -> Response<Bytes> {
    let mut resp = Response::new(Bytes::from(body));
    *resp.status_mut() = status;
    resp.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static(JSON));
    resp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_head_layout() {
        let req = OutgoingRequest::post_json("http://faas:8080/func/word", "{}").unwrap();
        let head = request_head_bytes(&Method::POST, &req.path, &req.headers);
        assert_eq!(
            String::from_utf8(head).unwrap(),
            "POST /func/word HTTP/1.1\r\nhost: faas:8080\r\ncontent-type: application/json\r\ncontent-length: 2\r\n\r\n"
        );
        let s = req.sizes(Point::M1);
        assert_eq!(s.body_bytes, 2);
        assert_eq!(s.header_bytes, 96);
        assert_eq!(req.host(), "faas");
    }

    #[test]
    fn default_port_and_root_path() {
        let req = OutgoingRequest::post_json("http://faas", "").unwrap();
        assert_eq!(req.authority, "faas:80");
        assert_eq!(req.path, "/");
    }

    #[test]
    fn rejects_non_http() {
        assert!(OutgoingRequest::post_json("https://faas:8080/func/word", "").is_err());
        assert!(OutgoingRequest::post_json("/func/word", "").is_err());
    }

    #[test]
    fn response_head_layout() {
        let mut h = HeaderMap::new();
        h.insert(CONTENT_LENGTH, HeaderValue::from(12));
        let head = response_head_bytes(StatusCode::GATEWAY_TIMEOUT, &h);
        assert_eq!(
            String::from_utf8(head).unwrap(),
            "HTTP/1.1 504 Gateway Timeout\r\ncontent-length: 12\r\n\r\n"
        );
    }
}
