//! Role-based service start-up, plus an in-process proxy and target for
//! self-contained runs.

use std::net::SocketAddr;

use crate::proxy::{ProxyConfig, ProxyService};
use crate::server::{serve as serve_handler, ServeError, ServiceHandle};
use crate::targets::{GatewayConfig, TargetService};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    Proxy(ProxyConfig),
    Target(GatewayConfig),
}

/// Starts the named server on `addr`; it accepts connections on return.
pub async fn serve(role: Role, addr: SocketAddr) -> Result<ServiceHandle, ServeError> {
    match role {
        Role::Proxy(cfg) => serve_handler(addr, ProxyService::new(cfg)).await,
        Role::Target(cfg) => serve_handler(addr, TargetService::new(cfg)).await,
    }
}

/// Proxy and target on ephemeral loopback ports.
#[derive(Debug)]
pub struct LocalStack {
    pub proxy: ServiceHandle,
    pub target: ServiceHandle,
}

impl LocalStack {
    pub async fn start(proxy: ProxyConfig, gateway: GatewayConfig) -> Result<Self, ServeError> {
        let any: SocketAddr = ([127, 0, 0, 1], 0).into();
        let target = serve(Role::Target(gateway), any).await?;
        let proxy = serve(Role::Proxy(proxy), any).await?;
        Ok(Self { proxy, target })
    }

    pub fn proxy_uri(&self) -> String {
        self.proxy.url("/")
    }

    pub fn target_uri(&self, route: &str) -> String {
        self.target.url(route)
    }

    pub async fn shutdown(self) {
        self.proxy.shutdown().await;
        self.target.shutdown().await;
    }
}
