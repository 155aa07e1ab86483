//! Core of the FaaS benchmarking toolkit: the JSON message protocol shared by
//! driver, proxy and target functions, workload generation, and metrics.

pub mod metrics;
pub mod protocol;
pub mod workload;
