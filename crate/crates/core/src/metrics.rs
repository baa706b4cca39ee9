//! Evaluation: the normalized subspace distance and out-of-sample mean
//! squared prediction error.

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::linalg::{eigen_sym, projection_matrix, StiefelMatrix};
use serde::{Deserialize, Serialize};

/// One evaluated fit, as written to benchmark result files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub method: String,
    pub seed: u64,
    /// Subspace estimation error in [0, 1]; absent without ground truth.
    pub acc_err: Option<f64>,
    pub mspe: Option<f64>,
    pub runtime_seconds: f64,
}

/// Normalized projection distance `||P_true - P_hat||_F / sqrt(2k)`.
///
/// Symmetric in its arguments, invariant to right-orthogonal rotation of
/// either argument, and valued in [0, 1].
pub fn subspace_error(b_true: &StiefelMatrix, b_hat: &StiefelMatrix) -> Result<f64> {
    if b_true.p() != b_hat.p() || b_true.k() != b_hat.k() {
        return Err(Error::contract(format!(
            "subspace dimensions differ: {}x{} vs {}x{}",
            b_true.p(),
            b_true.k(),
            b_hat.p(),
            b_hat.k()
        )));
    }
    let k = b_true.k() as f64;
    let d = projection_matrix(b_true)
        .sub(&projection_matrix(b_hat))
        .frob_norm()
        / (2.0 * k).sqrt();
    // Guard against floating drift just above 1.
    Ok(d.min(1.0))
}

/// Spectral-norm variant: largest singular value of `P_true - P_hat`,
/// already in [0, 1] without normalization.
pub fn subspace_error_spectral(b_true: &StiefelMatrix, b_hat: &StiefelMatrix) -> Result<f64> {
    if b_true.p() != b_hat.p() || b_true.k() != b_hat.k() {
        return Err(Error::contract("subspace dimensions differ"));
    }
    let d = projection_matrix(b_true).sub(&projection_matrix(b_hat));
    let e = eigen_sym(&d)?;
    Ok(e.values
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .min(1.0))
}

/// Mean squared prediction error of `predict` over a test set.
pub fn mspe(
    mut predict: impl FnMut(&[f64]) -> Result<f64>,
    test: &DataSet,
) -> Result<f64> {
    if test.n() == 0 {
        return Err(Error::contract("test set is empty"));
    }
    let mut total = 0.0;
    for i in 0..test.n() {
        let yhat = predict(test.row(i)).map_err(|e| Error::Prediction {
            index: i,
            message: e.to_string(),
        })?;
        let r = test.y()[i] - yhat;
        total += r * r;
    }
    Ok(total / test.n() as f64)
}
