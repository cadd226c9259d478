//! Scenario driver for the subdiffusion inverse pipeline: configuration,
//! noise, the forward/order/continuation/recovery stages, artifact output
//! and reference checks.

pub mod config;
pub mod error;
pub mod noise;
pub mod pipeline;
pub mod scenario;
pub mod verify;

pub use config::Config;
pub use error::{HarnessError, Result};
pub use scenario::Scenario;
