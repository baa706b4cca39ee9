//! Two-stage neural-network sufficient dimension reduction (NN-SDR) for the
//! mean subspace of a regression, with classical OPG/MAVE baselines, the
//! simulation designs used to benchmark them, and the normalized subspace
//! accuracy metric.
//!
//! - [`nnsdr`] — the two-stage estimator: unconstrained MLP + gradient outer
//!   products, then a Stiefel-constrained bottleneck refinement.
//! - [`baselines`] — OPG and MAVE via local linear smoothing.
//! - [`mlp`] — the underlying network: manual backprop, inverted dropout,
//!   RMSProp mini-batch training with a per-update constraint hook.
//! - [`linalg`] — dense symmetric eigen, thin SVD, polar retraction,
//!   Cholesky; all hand-rolled, deterministic f64.
//! - [`simgen`] — reproducible generators for the benchmark designs M1-M7
//!   and the collinear design MC.
//! - [`metrics`] — subspace distance and out-of-sample prediction error.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod mlp;
pub mod nnsdr;
pub mod seed;
pub mod simgen;

pub use dataset::{DataSet, Standardizer};
pub use error::{Error, Result};
pub use linalg::{Matrix, StiefelMatrix};
pub use metrics::EvalReport;
pub use simgen::{ModelId, SimSample, SimSpec};
