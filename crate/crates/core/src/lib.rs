//! Differentially private and federated training of small text classifiers.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: loading, hashing featurizer, splits and client partitions.
//! * [`models`]: linear and tiny-transformer classifiers with exact
//!   per-example gradients over a flat [`models::ParamVector`].
//! * [`dp`]: clipping, DP-SGD steps, the RDP accountant and noise calibration.
//! * [`federated`]: the FedAvg simulator.
//! * [`harness`]: the experiment grid runner and result summaries.
//! * [`cli`]: the `privtext` command-line front end.

pub mod cli;
pub mod corpus;
pub mod dp;
pub mod error;
pub mod federated;
pub mod harness;
pub mod hash;
pub mod models;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
