//! The two-stage neural-network estimator of the mean subspace.
//!
//! Stage 1 trains an unconstrained MLP on the raw predictors, harvests its
//! input gradients at the sample points, and takes the top-k eigenvectors of
//! their averaged outer product. Stage 2 refines: a bottleneck network whose
//! first layer is a Stiefel-constrained `p -> k` linear map (no bias, no
//! dropout) is warm-started from stage 1 and trained jointly, with the
//! reduction layer retracted back onto the manifold after every update.

use crate::dataset::{DataSet, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{polar_retract, Matrix, StiefelMatrix};
use crate::mlp::{self, Activation, LayerSpec, MlpParams, TrainConfig};
use crate::seed;
use serde::{Deserialize, Serialize};

/// Seed-stream tags for the stages of a fit.
const TAG_STAGE1_TRAIN: u64 = 10;
const TAG_STAGE2_TRAIN: u64 = 11;
const TAG_INIT: u64 = 12;

/// Configuration of the two-stage estimator.
///
/// All random streams (weight init, dropout, shuffling of both stages) are
/// derived from `rng_seed`; the seeds inside the stage `TrainConfig`s are
/// overwritten by `fit_stage1`/`fit_refinement`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnSdrConfig {
    /// Target reduction dimension.
    pub k: usize,
    /// Hidden-layer widths of the wrapped network.
    pub hidden: Vec<usize>,
    /// Dropout rate after each fully connected hidden layer (never on the
    /// reduction layer).
    pub dropout_rate: f64,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    pub rng_seed: u64,
    /// Standardize predictors internally; off by default.
    pub standardize: bool,
}

impl NnSdrConfig {
    pub fn new(k: usize) -> Self {
        NnSdrConfig {
            k,
            hidden: vec![512],
            dropout_rate: 0.4,
            stage1: TrainConfig {
                epochs: 200,
                ..TrainConfig::default()
            },
            stage2: TrainConfig {
                epochs: 400,
                ..TrainConfig::default()
            },
            rng_seed: 0,
            standardize: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.k < 1 || self.k >= p {
            return Err(Error::contract(format!(
                "need 1 <= k < p, got k={}, p={p}",
                self.k
            )));
        }
        if self.hidden.is_empty() {
            return Err(Error::contract("hidden widths must be nonempty"));
        }
        self.stage1.validate()?;
        self.stage2.validate()
    }
}

/// Stage-1 output: trained unconstrained net, gradient outer-product matrix,
/// and its leading eigenvectors.
#[derive(Debug, Clone)]
pub struct NnOpgFit {
    /// Parameters of the unconstrained stage-1 network.
    pub theta1: MlpParams,
    /// Averaged outer product of the input gradients (`p x p`).
    pub sigma_hat: Matrix,
    /// Top-k eigenvectors of `sigma_hat`.
    pub b_hat: StiefelMatrix,
    /// All `p` eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Stage-1 per-epoch training loss.
    pub epoch_losses: Vec<f64>,
    /// Stage-1 update count.
    pub updates: u64,
}

/// Loss histories for both stages.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub stage1_losses: Vec<f64>,
    pub stage2_losses: Vec<f64>,
    pub stage1_updates: u64,
    pub stage2_updates: u64,
}

/// A fitted reduction: the basis estimate, the wrapped network on the
/// reduced coordinates, and training diagnostics.
#[derive(Debug, Clone)]
pub struct NnSdrModel {
    /// Basis estimate in the original predictor coordinates.
    pub b_hat: StiefelMatrix,
    /// The reduction layer as used for prediction (`k x p`, applied to the
    /// possibly standardized input).
    pub reduction: Matrix,
    /// Parameters of the wrapped network `g` on the k reduced coordinates.
    pub theta2: MlpParams,
    pub stage1: NnOpgFit,
    pub history: TrainingHistory,
    pub standardizer: Option<Standardizer>,
    pub config: NnSdrConfig,
}

/// `(1/n) * sum_i g_i g_i^T` for gradient rows `g_i`.
pub fn sigma_from_gradients(gradients: &Matrix) -> Matrix {
    let (n, p) = (gradients.rows(), gradients.cols());
    let mut sigma = Matrix::zeros(p, p);
    for i in 0..n {
        let g = gradients.row(i);
        for r in 0..p {
            if g[r] == 0.0 {
                continue;
            }
            let gr = g[r];
            let row = sigma.row_mut(r);
            for (c, gc) in g.iter().enumerate() {
                row[c] += gr * gc;
            }
        }
    }
    sigma.scale(1.0 / n as f64);
    sigma
}

/// Leading `k` eigenvectors of a symmetric PSD matrix plus its full spectrum.
pub fn top_k_eigenvectors(sigma: &Matrix, k: usize) -> Result<(StiefelMatrix, Vec<f64>)> {
    let e = crate::linalg::eigen_sym(sigma)?;
    let v = Matrix::from_fn(sigma.rows(), k, |i, j| e.vectors.get(i, j));
    Ok((StiefelMatrix::new(v)?, e.values))
}

fn stage1_specs(p: usize, hidden: &[usize], dropout: f64) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = p;
    for &w in hidden {
        specs.push(LayerSpec::new(prev, w, Activation::Relu).with_dropout(dropout));
        prev = w;
    }
    specs.push(LayerSpec::new(prev, 1, Activation::Identity));
    specs
}

/// Stage 1: train the unconstrained net, average the outer products of its
/// input gradients over the sample, eigendecompose.
pub fn fit_stage1(data: &DataSet, config: &NnSdrConfig) -> Result<NnOpgFit> {
    let (n, p) = (data.n(), data.p());
    if n < 2 || p < 2 {
        return Err(Error::contract("need n >= 2 and p >= 2"));
    }
    config.validate(p)?;

    let mut init_rng = seed::rng_for(config.rng_seed, &[TAG_INIT]);
    let init = MlpParams::init_glorot(&stage1_specs(p, &config.hidden, config.dropout_rate), &mut init_rng)?;
    let mut cfg = config.stage1.clone();
    cfg.rng_seed = seed::mix(config.rng_seed, &[TAG_STAGE1_TRAIN]);
    cfg.dropout_rate = config.dropout_rate;
    let outcome = mlp::train(data, init, &cfg, None)?;

    let mut gradients = Matrix::zeros(n, p);
    for i in 0..n {
        let g = mlp::grad_input(&outcome.params, data.row(i))?;
        gradients.row_mut(i).copy_from_slice(&g);
    }
    let sigma_hat = sigma_from_gradients(&gradients);
    let (b_hat, eigenvalues) = top_k_eigenvectors(&sigma_hat, config.k)?;

    Ok(NnOpgFit {
        theta1: outcome.params,
        sigma_hat,
        b_hat,
        eigenvalues,
        epoch_losses: outcome.epoch_losses,
        updates: outcome.updates,
    })
}

/// Stage 2: build the bottleneck network, warm-start it from stage 1, and
/// train all parameters jointly with the reduction layer retracted to the
/// Stiefel manifold after every update.
pub fn fit_refinement(
    data: &DataSet,
    stage1: NnOpgFit,
    config: &NnSdrConfig,
) -> Result<NnSdrModel> {
    let p = data.p();
    config.validate(p)?;
    if stage1.b_hat.p() != p || stage1.b_hat.k() != config.k {
        return Err(Error::contract(
            "stage-1 fit does not match the data dimension or k",
        ));
    }

    let b1 = stage1.b_hat.matrix();
    let w1 = &stage1.theta1.layers[0];
    let mut layers = Vec::with_capacity(stage1.theta1.layers.len() + 1);
    // Reduction layer: identity activation, no bias, no dropout.
    layers.push(mlp::Layer {
        weights: b1.transpose(),
        bias: None,
        activation: Activation::Identity,
        dropout: 0.0,
    });
    // First hidden layer re-expressed on the reduced coordinates.
    layers.push(mlp::Layer {
        weights: w1.weights.matmul(b1),
        bias: w1.bias.clone(),
        activation: w1.activation,
        dropout: w1.dropout,
    });
    // Remaining stage-1 layers carry over unchanged.
    for layer in &stage1.theta1.layers[1..] {
        layers.push(layer.clone());
    }
    let init = MlpParams { layers };
    init.validate()?;

    let mut cfg = config.stage2.clone();
    cfg.rng_seed = seed::mix(config.rng_seed, &[TAG_STAGE2_TRAIN]);
    cfg.dropout_rate = config.dropout_rate;

    let mut hook = stiefel_hook();
    let outcome = mlp::train(data, init, &cfg, Some(&mut hook))?;

    let mut params = outcome.params;
    let reduction = params.layers.remove(0).weights;
    let theta2 = MlpParams {
        layers: params.layers,
    };
    let b_hat = StiefelMatrix::new(reduction.transpose())?;

    let history = TrainingHistory {
        stage1_losses: stage1.epoch_losses.clone(),
        stage2_losses: outcome.epoch_losses,
        stage1_updates: stage1.updates,
        stage2_updates: outcome.updates,
    };
    Ok(NnSdrModel {
        b_hat,
        reduction,
        theta2,
        stage1,
        history,
        standardizer: None,
        config: config.clone(),
    })
}

/// The per-update constraint: retract the first layer's weight matrix back
/// onto the Stiefel manifold via the polar decomposition.
pub fn stiefel_hook() -> impl FnMut(&mut MlpParams) -> Result<()> {
    |params: &mut MlpParams| {
        let w = &params.layers[0].weights;
        let retracted = polar_retract(&w.transpose())?;
        params.layers[0].weights = retracted.matrix().transpose();
        Ok(())
    }
}

/// Convenience wrapper usable as a [`ConstraintHook`] argument.
pub fn apply_stiefel_hook(params: &mut MlpParams) -> Result<()> {
    stiefel_hook()(params)
}

/// The full two-stage procedure.
pub fn fit(data: &DataSet, config: &NnSdrConfig) -> Result<NnSdrModel> {
    if config.standardize {
        let std = Standardizer::fit(data.x());
        let z = DataSet::new(std.transform(data.x()), data.y().to_vec())?;
        let stage1 = fit_stage1(&z, config)?;
        let mut model = fit_refinement(&z, stage1, config)?;
        // Map the basis back to raw coordinates for subspace comparisons;
        // prediction keeps using the standardized reduction.
        model.b_hat = polar_retract(&std.back_map_basis(&model.b_hat.clone().into_matrix()))?;
        model.standardizer = Some(std);
        Ok(model)
    } else {
        let stage1 = fit_stage1(data, config)?;
        fit_refinement(data, stage1, config)
    }
}

/// Eval-mode prediction of the fitted bottleneck network.
pub fn predict(model: &NnSdrModel, x_new: &[f64]) -> Result<f64> {
    if x_new.len() != model.reduction.cols() {
        return Err(Error::contract(format!(
            "input has dimension {}, expected {}",
            x_new.len(),
            model.reduction.cols()
        )));
    }
    let reduced = match &model.standardizer {
        Some(std) => model.reduction.matvec(&std.transform_row(x_new)),
        None => model.reduction.matvec(x_new),
    };
    mlp::predict_scalar(&model.theta2, &reduced)
}

impl NnSdrModel {
    /// Serialize as `{"B": .., "net": .., "config": ..}` (plus the
    /// standardizer when one was fitted).
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "method": "nn",
            "B": self.reduction.transpose().to_nested(),
            "net": self.theta2.to_json(),
            "config": serde_json::to_value(&self.config).expect("config serialization"),
        });
        if let Some(std) = &self.standardizer {
            v["standardize"] = serde_json::to_value(std).expect("standardizer serialization");
        }
        v
    }

    /// Rebuild a predictor from the JSON produced by [`Self::to_json`].
    /// Training diagnostics are not persisted; the stage-1 slot is refilled
    /// with placeholder values derived from the stored reduction.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let b_rows: Vec<Vec<f64>> = serde_json::from_value(
            v.get("B")
                .cloned()
                .ok_or_else(|| Error::contract("model JSON is missing key \"B\""))?,
        )?;
        let b = Matrix::from_rows(&b_rows)?;
        let theta2 = MlpParams::from_json(
            v.get("net")
                .ok_or_else(|| Error::contract("model JSON is missing key \"net\""))?,
        )?;
        let config: NnSdrConfig = serde_json::from_value(
            v.get("config")
                .cloned()
                .ok_or_else(|| Error::contract("model JSON is missing key \"config\""))?,
        )?;
        let standardizer: Option<Standardizer> = match v.get("standardize") {
            Some(s) => Some(serde_json::from_value(s.clone())?),
            None => None,
        };
        let reduction = b.transpose();
        let b_hat = match &standardizer {
            Some(std) => polar_retract(&std.back_map_basis(&b))?,
            None => StiefelMatrix::new(b.clone())?,
        };
        let stage1 = NnOpgFit {
            theta1: theta2.clone(),
            sigma_hat: Matrix::zeros(b.rows(), b.rows()),
            b_hat: b_hat.clone(),
            eigenvalues: vec![0.0; b.rows()],
            epoch_losses: Vec::new(),
            updates: 0,
        };
        Ok(NnSdrModel {
            b_hat,
            reduction,
            theta2,
            stage1,
            history: TrainingHistory::default(),
            standardizer,
            config,
        })
    }
}
