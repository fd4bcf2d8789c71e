//! Robust variable screening for ultra-high-dimensional linear regression.
//!
//! Marginal regression slopes are estimated by minimum density power
//! divergence (DPD), which keeps screening rankings stable under heavy
//! response contamination. The crate provides the DPD screeners, six
//! reference screeners, an iterative screening loop with L1-penalized DPD
//! refits, robustness diagnostics (influence functions, sensitivity,
//! efficiency), and a seeded Monte Carlo benchmark harness. A CLI binary
//! (`dpd-screen`) exposes the four user-facing workflows.

pub mod commands;
pub mod data;
pub mod error;
pub mod io;
pub mod isis;
pub mod mdpde;
pub mod numeric;
pub mod penalized;
pub mod robustness;
pub mod simbench;
pub mod screeners;

pub use data::{ColMatrix, Dataset};
pub use error::{Error, Result};
