//! Minimum downlink power resource allocation for a two-user MISO wireless
//! powered communication network whose energy harvesters follow a
//! circuit-based non-linear model.
//!
//! The crate is layered bottom-up: special functions, the EH law, the
//! system model, a feasibility classifier for the downlink fraction, a dense
//! interior-point solver for complex semidefinite programs, the SCA-based
//! allocator, two surrogate-model baselines, and a Monte-Carlo sweep driver.

pub mod allocator;
pub mod baselines;
pub mod config;
pub mod conic;
pub mod eh_model;
pub mod error;
pub mod experiments;
pub mod feasibility;
pub mod specfun;
pub mod system;

pub use error::{Error, Result};
