//! Minimal HTTP/1.1 service host with readiness on bind and graceful
//! shutdown.

use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::pin::Pin;
use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use http::{Request, Response};
use http_body_util::{BodyExt, Full};
use hyper::service::service_fn;
use hyper_util::rt::TokioIo;
use hyper_util::server::graceful::GracefulShutdown;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub type BoxFuture<T> = Pin<Box<dyn Future<Output = T> + Send>>;

/// Request handler with the body already collected.
pub trait Handler: Send + Sync + 'static {
    fn call(&self, req: Request<Bytes>) -> BoxFuture<Response<Bytes>>;
}

impl<F, Fut> Handler for F
where
    F: Fn(Request<Bytes>) -> Fut + Send + Sync + 'static,
    Fut: Future<Output = Response<Bytes>> + Send + 'static,
{
    fn call(&self, req: Request<Bytes>) -> BoxFuture<Response<Bytes>> {
        Box::pin(self(req))
    }
}

impl Handler for Arc<dyn Handler> {
    fn call(&self, req: Request<Bytes>) -> BoxFuture<Response<Bytes>> {
        (**self).call(req)
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindError {
        addr: SocketAddr,
        source: std::io::Error,
    },
}

const DRAIN_TIMEOUT: Duration = Duration::from_secs(5);

/// Running service. Dropping the handle also stops the listener.
#[derive(Debug)]
pub struct ServiceHandle {
    local_addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// `http://<addr>` with the given path appended.
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.local_addr)
    }

    /// Stops accepting, then waits for in-flight requests to drain.
    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    /// Resolves when the service stops on its own (it normally never does).
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
    }
}

/// Binds `addr` and serves `handler`. The listener is accepting connections
/// when this returns.
pub async fn serve<H: Handler>(addr: SocketAddr, handler: H) -> Result<ServiceHandle, ServeError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::BindError { addr, source })?;
    let local_addr = listener
        .local_addr()
        .map_err(|source| ServeError::BindError { addr, source })?;
    let (stop_tx, mut stop_rx) = oneshot::channel();
    let handler = Arc::new(handler);

    let task = tokio::spawn(async move {
        let graceful = GracefulShutdown::new();
        loop {
            tokio::select! {
                accepted = listener.accept() => {
                    let Ok((stream, _)) = accepted else { continue };
                    let _ = stream.set_nodelay(true);
                    let handler = Arc::clone(&handler);
                    let service = service_fn(move |req: Request<hyper::body::Incoming>| {
                        let handler = Arc::clone(&handler);
                        async move {
                            let (parts, body) = req.into_parts();
                            let resp = match body.collect().await {
                                Ok(b) => handler.call(Request::from_parts(parts, b.to_bytes())).await,
                                Err(_) => {
                                    let mut r = Response::new(Bytes::new());
                                    *r.status_mut() = http::StatusCode::BAD_REQUEST;
                                    r
                                }
                            };
                            Ok::<_, Infallible>(resp.map(Full::new))
                        }
                    });
                    let conn = hyper::server::conn::http1::Builder::new()
                        .serve_connection(TokioIo::new(stream), service);
                    let conn = graceful.watch(conn);
                    tokio::spawn(async move {
                        let _ = conn.await;
                    });
                }
                _ = &mut stop_rx => break,
            }
        }
        drop(listener);
        let _ = tokio::time::timeout(DRAIN_TIMEOUT, graceful.shutdown()).await;
    });

    Ok(ServiceHandle {
        local_addr,
        stop: Some(stop_tx),
        task: Some(task),
    })
}
