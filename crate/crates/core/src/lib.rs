//! Minimum Bregman-divergence estimation under a two-parameter logarithmic
//! divergence family: divergence evaluation, estimation (i.i.d. and fixed-
//! design regression), sandwich asymptotics and influence functions, data-
//! driven tuning-parameter selection, and divergence-based hypothesis tests.

pub mod asymptotics;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod hypothesis;
pub mod kernel;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod quad;
pub mod seeds;
pub mod tuning;

pub use error::{Error, Result};
pub use kernel::{DpdAlpha, TuningPair};
pub use quad::QuadratureSpec;
