//! Grid-forming converter / infinite-bus simulation and data-driven system
//! identification.
//!
//! The crate simulates a converter tied to an infinite bus through an LCL
//! filter under grid-forming droop control, records disturbance-response
//! datasets with exact state derivatives, and recovers the governing
//! equations from that data two ways: sparse regression over a candidate
//! function library ([`sindy`]) and recurrent-policy symbolic regression
//! trained with a risk-seeking policy gradient ([`dsr`]). The [`metrics`]
//! module scores both models per state derivative and renders comparison
//! reports; [`pipeline`] and the `cibsysid` binary orchestrate the full
//! experiment.

pub mod config;
pub mod dataset;
pub mod dsr;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod plant;
pub mod simulator;
pub mod sindy;

pub use error::{Error, Result};
