//! Finite-key and asymptotic key-rate lower bounds for QKD with an untrusted
//! source.

pub mod channel_sim;
pub mod cli;
pub mod config;
pub mod error;
pub mod figures;
pub mod numerics;
pub mod observed_bounds;
pub mod optimizer;
pub mod oracle;
pub mod photon_bounds;
pub mod protocols;
pub mod source_model;
pub mod trusted_baseline;

pub use error::{Condition, QkdError, Result};
