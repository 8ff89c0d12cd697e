//! Hardware-aware dropout configuration search.
//!
//! Trains a weight-sharing supernet whose layers carry selectable dropout
//! designs, then searches the per-layer configuration space with an
//! evolutionary loop against a weighted objective over accuracy, calibration
//! error, predictive entropy, and modelled hardware latency.

pub mod dropout;
pub mod error;
pub mod evosearch;
pub mod harness;
pub mod hwmodel;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod supernet;
pub mod tensor;

pub use error::{Error, Result};
