//! Driver, proxy function, target functions and gateway emulator of the
//! FaaS benchmark, plus the plumbing that serves them over HTTP/1.1.

pub mod config;
pub mod driver;
pub mod proxy;
pub mod report;
pub mod server;
pub mod stack;
pub mod targets;
pub mod wire;
