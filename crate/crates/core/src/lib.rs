//! Personalized quantum federated learning for anomaly detection, simulated on
//! a statevector engine.
//!
//! The crate is organised bottom-up: [`quantum`] simulates circuits,
//! [`encoding`] loads classical vectors, [`model`] is the hybrid classifier,
//! [`training`] runs local optimisation, [`federation`] orchestrates rounds,
//! [`data`] builds and partitions datasets, [`metrics`] scores anomalies and
//! [`runner`] ties everything into reproducible experiments.

pub mod data;
pub mod encoding;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod quantum;
pub mod runner;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
