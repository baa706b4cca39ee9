//! From-scratch multilayer perceptron: ReLU/identity layers, squared-error
//! loss, manual reverse-mode gradients with respect to parameters and inputs,
//! inverted dropout, and a mini-batch RMSProp training loop with an optional
//! per-update constraint hook.
//!
//! Training is fully deterministic given `TrainConfig::rng_seed`: dropout
//! masks and the epoch-end shuffles both come from one ChaCha8 stream.

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Component-wise activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            // Subgradient at 0 is taken as 0 in `derivative`.
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Shape and behaviour of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Dropout rate applied to this layer's output during training, in [0, 1).
    pub dropout: f64,
    pub has_bias: bool,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            in_dim,
            out_dim,
            activation,
            dropout: 0.0,
            has_bias: true,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }
}

/// One dense layer: `weights` is `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
    pub dropout: f64,
}

impl Layer {
    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// The full parameter vector of an MLP: an ordered list of layers whose
/// dimensions chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Glorot-uniform weights (`±sqrt(6/(in+out))`), zero biases.
    pub fn init_glorot(specs: &[LayerSpec], rng: &mut ChaCha8Rng) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::contract("network needs at least one layer"));
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if i > 0 && spec.in_dim != specs[i - 1].out_dim {
                return Err(Error::contract(format!(
                    "layer {i} in_dim {} does not chain with previous out_dim {}",
                    spec.in_dim,
                    specs[i - 1].out_dim
                )));
            }
            if !(0.0..1.0).contains(&spec.dropout) {
                return Err(Error::contract("dropout rate must lie in [0, 1)"));
            }
            let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
            let weights = Matrix::from_fn(spec.out_dim, spec.in_dim, |_, _| {
                rng.random::<f64>() * 2.0 * limit - limit
            });
            layers.push(Layer {
                weights,
                bias: spec.has_bias.then(|| vec![0.0; spec.out_dim]),
                activation: spec.activation,
                dropout: spec.dropout,
            });
        }
        Ok(MlpParams { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::contract("network needs at least one layer"));
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[1].in_dim() != w[0].out_dim() {
                return Err(Error::contract(format!(
                    "layer {} in_dim {} does not chain with previous out_dim {}",
                    i + 1,
                    w[1].in_dim(),
                    w[0].out_dim()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if !l.weights.is_finite() || l.bias.iter().flatten().any(|b| !b.is_finite()) {
                return Err(Error::contract(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().flatten().all(|b| b.is_finite()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MlpParamsJson::from(self)).expect("mlp serialization")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let raw: MlpParamsJson = serde_json::from_value(v.clone())?;
        raw.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    weights: Vec<Vec<f64>>,
    bias: Option<Vec<f64>>,
    activation: Activation,
    dropout: f64,
}

#[derive(Serialize, Deserialize)]
struct MlpParamsJson {
    layers: Vec<LayerJson>,
}

impl From<&MlpParams> for MlpParamsJson {
    fn from(p: &MlpParams) -> Self {
        MlpParamsJson {
            layers: p
                .layers
                .iter()
                .map(|l| LayerJson {
                    weights: l.weights.to_nested(),
                    bias: l.bias.clone(),
                    activation: l.activation,
                    dropout: l.dropout,
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpParamsJson> for MlpParams {
    type Error = Error;

    fn try_from(raw: MlpParamsJson) -> Result<Self> {
        let mut layers = Vec::with_capacity(raw.layers.len());
        for l in raw.layers {
            let weights = Matrix::from_rows(&l.weights)?;
            if let Some(b) = &l.bias {
                if b.len() != weights.rows() {
                    return Err(Error::contract("bias length does not match layer out_dim"));
                }
            }
            layers.push(Layer {
                weights,
                bias: l.bias,
                activation: l.activation,
                dropout: l.dropout,
            });
        }
        let params = MlpParams { layers };
        params.validate()?;
        Ok(params)
    }
}

/// Mini-batch RMSProp settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    /// Rate used when assembling hidden-layer specs; the layers themselves
    /// carry the rate that `train` applies.
    pub dropout_rate: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            dropout_rate: 0.4,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::contract("epochs and batch_size must be >= 1"));
        }
        if self.learning_rate <= 0.0 || !(0.0..1.0).contains(&self.rmsprop_decay) {
            return Err(Error::contract("invalid learning_rate or rmsprop_decay"));
        }
        if self.rmsprop_epsilon <= 0.0 || !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::contract("invalid rmsprop_epsilon or dropout_rate"));
        }
        Ok(())
    }
}

/// Per-layer state captured by a forward pass, consumed by [`backward`].
#[derive(Debug, Clone, Default)]
pub struct Cache {
    input: Vec<f64>,
    /// Pre-activation `z = W h + b` per layer.
    pre: Vec<Vec<f64>>,
    /// Layer output after activation and dropout.
    post: Vec<Vec<f64>>,
    /// Inverted-dropout scale factors (0 or 1/(1-rate)); `None` when the
    /// layer has no dropout or the pass ran in eval mode.
    masks: Vec<Option<Vec<f64>>>,
}

/// Gradient of the loss with respect to every weight and bias.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Gradients {
            weights: params
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| l.bias.as_ref().map(|b| vec![0.0; b.len()]))
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for w in &mut self.weights {
            w.scale(0.0);
        }
        for b in self.biases.iter_mut().flatten() {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            w.scale(s);
        }
        for b in self.biases.iter_mut().flatten() {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Forward pass. `dropout_rng: Some(..)` runs in train mode (fresh inverted
/// dropout masks per call); `None` is the deterministic eval mode.
///
/// Returns the output vector of the last layer together with the cache
/// needed by [`backward`].
pub fn forward(
    params: &MlpParams,
    x: &[f64],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<f64>, Cache)> {
    let mut cache = Cache::default();
    let out = forward_into(params, x, dropout_rng, &mut cache)?;
    Ok((out, cache))
}

fn forward_into(
    params: &MlpParams,
    x: &[f64],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
    cache: &mut Cache,
) -> Result<Vec<f64>> {
    if x.len() != params.input_dim() {
        return Err(Error::contract(format!(
            "input dimension {} does not match network input {}",
            x.len(),
            params.input_dim()
        )));
    }
    cache.input.clear();
    cache.input.extend_from_slice(x);
    cache.pre.clear();
    cache.post.clear();
    cache.masks.clear();

    let mut h = x.to_vec();
    for layer in &params.layers {
        let mut z = layer.weights.matvec(&h);
        if let Some(b) = &layer.bias {
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += bi;
            }
        }
        let mut out: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
        let mask = match (&mut dropout_rng, layer.dropout > 0.0) {
            (Some(rng), true) => {
                let keep = 1.0 - layer.dropout;
                let mask: Vec<f64> = out
                    .iter()
                    .map(|_| {
                        if rng.random::<f64>() < layer.dropout {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                for (o, m) in out.iter_mut().zip(&mask) {
                    *o *= m;
                }
                Some(mask)
            }
            _ => None,
        };
        cache.pre.push(z);
        cache.post.push(out.clone());
        cache.masks.push(mask);
        h = out;
    }
    Ok(h)
}

/// Scalar eval-mode output (networks with `output_dim == 1`).
pub fn predict_scalar(params: &MlpParams, x: &[f64]) -> Result<f64> {
    if params.output_dim() != 1 {
        return Err(Error::contract("predict_scalar needs output_dim == 1"));
    }
    let (out, _) = forward(params, x, None)?;
    Ok(out[0])
}

/// Reverse-mode gradient for the parameters, given the upstream gradient of
/// the loss with respect to the network output. Honors the dropout masks
/// recorded in `cache`.
pub fn backward(params: &MlpParams, cache: &Cache, dloss_dy: &[f64]) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(params);
    backward_accumulate(params, cache, dloss_dy, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but adds into an existing gradient accumulator.
pub fn backward_accumulate(
    params: &MlpParams,
    cache: &Cache,
    dloss_dy: &[f64],
    grads: &mut Gradients,
) -> Result<()> {
    if cache.pre.len() != params.layers.len() {
        return Err(Error::contract("cache does not match network depth"));
    }
    if dloss_dy.len() != params.output_dim() {
        return Err(Error::contract("upstream gradient has wrong dimension"));
    }
    let mut d = dloss_dy.to_vec();
    for (i, layer) in params.layers.iter().enumerate().rev() {
        if cache.pre[i].len() != layer.out_dim() {
            return Err(Error::contract("stale cache: layer width mismatch"));
        }
        if let Some(mask) = &cache.masks[i] {
            for (dv, m) in d.iter_mut().zip(mask) {
                *dv *= m;
            }
        }
        for (dv, z) in d.iter_mut().zip(&cache.pre[i]) {
            *dv *= layer.activation.derivative(*z);
        }
        let input = if i == 0 {
            &cache.input
        } else {
            &cache.post[i - 1]
        };
        let gw = &mut grads.weights[i];
        for (o, dv) in d.iter().enumerate() {
            if *dv != 0.0 {
                let row = gw.row_mut(o);
                for (g, inp) in row.iter_mut().zip(input) {
                    *g += dv * inp;
                }
            }
        }
        if let Some(gb) = &mut grads.biases[i] {
            for (g, dv) in gb.iter_mut().zip(&d) {
                *g += dv;
            }
        }
        d = layer.weights.tr_matvec(&d);
    }
    Ok(())
}

/// Gradient of the scalar eval-mode output with respect to the input.
pub fn grad_input(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    if params.output_dim() != 1 {
        return Err(Error::contract("grad_input needs output_dim == 1"));
    }
    let (_, cache) = forward(params, x, None)?;
    let mut d = vec![1.0];
    for (i, layer) in params.layers.iter().enumerate().rev() {
        for (dv, z) in d.iter_mut().zip(&cache.pre[i]) {
            *dv *= layer.activation.derivative(*z);
        }
        d = layer.weights.tr_matvec(&d);
    }
    Ok(d)
}

/// Per-parameter running mean of squared gradients.
#[derive(Debug, Clone)]
pub struct RmsPropState {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Option<Vec<f64>>>,
}

impl RmsPropState {
    pub fn zeros_like(params: &MlpParams) -> Self {
        let g = Gradients::zeros_like(params);
        RmsPropState {
            weights: g.weights,
            biases: g.biases,
        }
    }
}

/// One RMSProp update:
/// `state <- decay*state + (1-decay)*g^2`, `theta <- theta - lr*g/sqrt(state+eps)`.
pub fn rmsprop_step(
    params: &mut MlpParams,
    grads: &Gradients,
    state: &mut RmsPropState,
    cfg: &TrainConfig,
) {
    let lr = cfg.learning_rate;
    let decay = cfg.rmsprop_decay;
    let eps = cfg.rmsprop_epsilon;
    for (i, layer) in params.layers.iter_mut().enumerate() {
        let gw = &grads.weights[i];
        let sw = &mut state.weights[i];
        for r in 0..layer.weights.rows() {
            let wrow = layer.weights.row_mut(r);
            let srow = sw.row_mut(r);
            let grow = gw.row(r);
            for ((w, s), g) in wrow.iter_mut().zip(srow.iter_mut()).zip(grow) {
                *s = decay * *s + (1.0 - decay) * g * g;
                *w -= lr * g / (*s + eps).sqrt();
            }
        }
        if let (Some(b), Some(gb), Some(sb)) = (
            layer.bias.as_mut(),
            grads.biases[i].as_ref(),
            state.biases[i].as_mut(),
        ) {
            for ((w, s), g) in b.iter_mut().zip(sb.iter_mut()).zip(gb) {
                *s = decay * *s + (1.0 - decay) * g * g;
                *w -= lr * g / (*s + eps).sqrt();
            }
        }
    }
}

/// Transformation applied to the parameters after every gradient update
/// (used to retract the reduction layer back onto the Stiefel manifold).
pub type ConstraintHook<'a> = &'a mut dyn FnMut(&mut MlpParams) -> Result<()>;

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Eval-mode mean squared error over the full dataset after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Total number of RMSProp updates performed (`epochs * ceil(n/m)`).
    pub updates: u64,
}

/// Mean squared error of the eval-mode network over a dataset.
pub fn mean_squared_error(params: &MlpParams, data: &DataSet) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.n() {
        let r = predict_scalar(params, data.row(i))? - data.y()[i];
        total += r * r;
    }
    Ok(total / data.n() as f64)
}

/// Mini-batch RMSProp training of the squared-error objective
/// `(1/n) * sum_i (y_i - f(x_i))^2`.
///
/// Each epoch runs `ceil(n/m)` updates over consecutive index chunks (the
/// last chunk holds the remainder); the update direction for a chunk is
/// `(1/n) * sum_{i in chunk} grad L_i` with no further batch-size scaling.
/// The dataset order is reshuffled after every epoch. The hook, when given,
/// runs after every update.
pub fn train(
    data: &DataSet,
    init: MlpParams,
    cfg: &TrainConfig,
    mut hook: Option<ConstraintHook<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.validate()?;
    if data.n() == 0 {
        return Err(Error::contract("training data is empty"));
    }
    if init.input_dim() != data.p() || init.output_dim() != 1 {
        return Err(Error::contract(format!(
            "network {}->{} does not match data with p={}",
            init.input_dim(),
            init.output_dim(),
            data.p()
        )));
    }

    let n = data.n();
    let m = cfg.batch_size.min(n);
    let batches = n.div_ceil(m);
    let inv_n = 1.0 / n as f64;

    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = Gradients::zeros_like(&params);
    let mut state = RmsPropState::zeros_like(&params);
    let mut cache = Cache::default();
    let mut updates: u64 = 0;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        for batch in 0..batches {
            let lo = batch * m;
            let hi = ((batch + 1) * m).min(n);
            grads.clear();
            for &i in &order[lo..hi] {
                let out = forward_into(&params, data.row(i), Some(&mut rng), &mut cache)?;
                let dloss = [2.0 * (out[0] - data.y()[i])];
                backward_accumulate(&params, &cache, &dloss, &mut grads)?;
            }
            grads.scale(inv_n);
            rmsprop_step(&mut params, &grads, &mut state, cfg);
            if let Some(h) = hook.as_mut() {
                h(&mut params)?;
            }
            updates += 1;
            if !params.is_finite() {
                return Err(Error::Divergence { epoch, batch });
            }
        }
        epoch_losses.push(mean_squared_error(&params, data)?);
        order.shuffle(&mut rng);
    }

    Ok(TrainOutcome {
        params,
        epoch_losses,
        updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn identity_net(dim: usize) -> MlpParams {
        MlpParams {
            layers: vec![Layer {
                weights: Matrix::identity(dim),
                bias: Some(vec![0.0; dim]),
                activation: Activation::Identity,
                dropout: 0.0,
            }],
        }
    }

    fn random_net(seed: u64, dims: &[usize], dropout: f64) -> MlpParams {
        let mut specs = Vec::new();
        for w in dims.windows(2) {
            let act = if w[1] == *dims.last().unwrap() && w == &dims[dims.len() - 2..] {
                Activation::Identity
            } else {
                Activation::Relu
            };
            specs.push(LayerSpec::new(w[0], w[1], act).with_dropout(if act == Activation::Relu {
                dropout
            } else {
                0.0
            }));
        }
        let mut rng = seed::rng_for(seed, &[0]);
        MlpParams::init_glorot(&specs, &mut rng).unwrap()
    }

    #[test]
    fn forward_identity_net() {
        let net = identity_net(2);
        let (out, _) = forward(&net, &[1.0, 2.0], None).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn forward_relu_hand_example() {
        // relu(1*1 + (-1)*2 - 3) = relu(-4) = 0
        let net = MlpParams {
            layers: vec![Layer {
                weights: Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap(),
                bias: Some(vec![-3.0]),
                activation: Activation::Relu,
                dropout: 0.0,
            }],
        };
        let (out, _) = forward(&net, &[1.0, 2.0], None).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    // Direct-composition oracle: re-evaluate Def-style layer maps by hand.
    #[test]
    fn forward_matches_straight_line_composition() {
        let net = random_net(1, &[3, 4, 1], 0.0);
        let x = [0.3, -0.7, 1.1];
        let mut h: Vec<f64> = x.to_vec();
        for layer in &net.layers {
            let mut z = vec![0.0; layer.out_dim()];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut s = layer.bias.as_ref().map_or(0.0, |b| b[o]);
                for (i, hi) in h.iter().enumerate() {
                    s += layer.weights.get(o, i) * hi;
                }
                *zo = s;
            }
            h = z.iter().map(|&v| layer.activation.apply(v)).collect();
        }
        let (out, _) = forward(&net, &x, None).unwrap();
        assert!((out[0] - h[0]).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = identity_net(2);
        assert!(forward(&net, &[1.0], None).is_err());
    }

    #[test]
    fn backward_zero_upstream_gives_zero_gradient() {
        let net = random_net(2, &[3, 5, 1], 0.0);
        let (_, cache) = forward(&net, &[0.1, 0.2, 0.3], None).unwrap();
        let grads = backward(&net, &cache, &[0.0]).unwrap();
        for w in &grads.weights {
            assert_eq!(w.frob_norm(), 0.0);
        }
    }

    #[test]
    fn backward_linear_closed_form() {
        // f(x) = Wx, loss (y - Wx)^2, dloss/dW = -2(y - Wx) x^T.
        let mut net = identity_net(1);
        net.layers[0].weights.set(0, 0, 1.5);
        let x = [2.0];
        let y = 5.0;
        let (out, cache) = forward(&net, &x, None).unwrap();
        let grads = backward(&net, &cache, &[-2.0 * (y - out[0])]).unwrap();
        let expected = -2.0 * (y - 1.5 * 2.0) * 2.0;
        assert!((grads.weights[0].get(0, 0) - expected).abs() < 1e-12);
    }

    /// Central finite differences of the eval-mode loss at non-kink points.
    fn finite_diff_param_grad(net: &MlpParams, x: &[f64], y: f64) -> Gradients {
        let h = 1e-6;
        let mut fd = Gradients::zeros_like(net);
        let loss = |net: &MlpParams| {
            let (out, _) = forward(net, x, None).unwrap();
            (y - out[0]) * (y - out[0])
        };
        for li in 0..net.layers.len() {
            for r in 0..net.layers[li].weights.rows() {
                for c in 0..net.layers[li].weights.cols() {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    plus.layers[li].weights.set(r, c, net.layers[li].weights.get(r, c) + h);
                    minus.layers[li].weights.set(r, c, net.layers[li].weights.get(r, c) - h);
                    fd.weights[li].set(r, c, (loss(&plus) - loss(&minus)) / (2.0 * h));
                }
            }
            if net.layers[li].bias.is_some() {
                let len = net.layers[li].bias.as_ref().unwrap().len();
                for b in 0..len {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    plus.layers[li].bias.as_mut().unwrap()[b] += h;
                    minus.layers[li].bias.as_mut().unwrap()[b] -= h;
                    fd.biases[li].as_mut().unwrap()[b] = (loss(&plus) - loss(&minus)) / (2.0 * h);
                }
            }
        }
        fd
    }

    fn near_kink(net: &MlpParams, x: &[f64]) -> bool {
        let (_, cache) = forward(net, x, None).unwrap();
        cache
            .pre
            .iter()
            .zip(&net.layers)
            .any(|(z, l)| l.activation == Activation::Relu && z.iter().any(|v| v.abs() < 1e-4))
    }

    // Finite-difference oracle for backward.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seed::rng_for(77, &[1]);
        let mut checked = 0;
        for t in 0..40 {
            let net = random_net(100 + t, &[4, 6, 3, 1], 0.0);
            let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let y: f64 = rng.random::<f64>();
            if near_kink(&net, &x) {
                continue;
            }
            let (out, cache) = forward(&net, &x, None).unwrap();
            let grads = backward(&net, &cache, &[-2.0 * (y - out[0])]).unwrap();
            let fd = finite_diff_param_grad(&net, &x, y);
            for li in 0..net.layers.len() {
                for (a, b) in grads.weights[li].data().iter().zip(fd.weights[li].data()) {
                    let scale = a.abs().max(b.abs()).max(1e-3);
                    assert!(
                        (a - b).abs() / scale < 1e-5,
                        "weight grad mismatch: {a} vs {b}"
                    );
                }
            }
            checked += 1;
        }
        assert!(checked >= 20, "too many kink skips ({checked} checked)");
    }

    #[test]
    fn grad_input_linear_and_kink_sides() {
        // Linear net f(x) = w'x.
        let net = MlpParams {
            layers: vec![Layer {
                weights: Matrix::from_rows(&[vec![2.0, -3.0]]).unwrap(),
                bias: Some(vec![0.5]),
                activation: Activation::Identity,
                dropout: 0.0,
            }],
        };
        let g = grad_input(&net, &[10.0, -4.0]).unwrap();
        assert_eq!(g, vec![2.0, -3.0]);

        // f(x) = relu(x1): derivative 1 on the positive side, 0 on the negative.
        let relu_net = MlpParams {
            layers: vec![Layer {
                weights: Matrix::from_rows(&[vec![1.0]]).unwrap(),
                bias: None,
                activation: Activation::Relu,
                dropout: 0.0,
            }],
        };
        assert_eq!(grad_input(&relu_net, &[2.0]).unwrap(), vec![1.0]);
        assert_eq!(grad_input(&relu_net, &[-2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn grad_input_matches_finite_differences() {
        let mut rng = seed::rng_for(31, &[2]);
        let h = 1e-6;
        let mut checked = 0;
        for t in 0..40 {
            let net = random_net(500 + t, &[5, 8, 1], 0.0);
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            if near_kink(&net, &x) {
                continue;
            }
            let g = grad_input(&net, &x).unwrap();
            for i in 0..5 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (predict_scalar(&net, &xp).unwrap() - predict_scalar(&net, &xm).unwrap())
                    / (2.0 * h);
                let scale = g[i].abs().max(fd.abs()).max(1e-3);
                assert!((g[i] - fd).abs() / scale < 1e-5);
            }
            checked += 1;
        }
        assert!(checked >= 20);
    }

    #[test]
    fn rmsprop_zero_gradient_decays_state() {
        let mut net = identity_net(1);
        let mut state = RmsPropState::zeros_like(&net);
        state.weights[0].set(0, 0, 0.4);
        let grads = Gradients::zeros_like(&net);
        let cfg = TrainConfig::default();
        rmsprop_step(&mut net, &grads, &mut state, &cfg);
        assert_eq!(net.layers[0].weights.get(0, 0), 1.0);
        assert!((state.weights[0].get(0, 0) - 0.9 * 0.4).abs() < 1e-15);
    }

    // Hand arithmetic oracle: g=1, s=0, decay=0.9, lr=1e-3, eps=1e-8.
    #[test]
    fn rmsprop_scalar_hand_example() {
        let mut net = identity_net(1);
        let mut state = RmsPropState::zeros_like(&net);
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0].set(0, 0, 1.0);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        rmsprop_step(&mut net, &grads, &mut state, &cfg);
        assert!((state.weights[0].get(0, 0) - 0.1).abs() < 1e-15);
        let expected = 1.0 - 1e-3 / (0.1f64 + 1e-8).sqrt();
        assert!((net.layers[0].weights.get(0, 0) - expected).abs() < 1e-15);
    }

    // Closed-form recursion oracle: second identical step is smaller.
    #[test]
    fn rmsprop_second_step_shrinks() {
        let mut net = identity_net(1);
        let mut state = RmsPropState::zeros_like(&net);
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0].set(0, 0, 2.0);
        let cfg = TrainConfig::default();
        let w0 = net.layers[0].weights.get(0, 0);
        rmsprop_step(&mut net, &grads, &mut state, &cfg);
        let step1 = (net.layers[0].weights.get(0, 0) - w0).abs();
        let w1 = net.layers[0].weights.get(0, 0);
        rmsprop_step(&mut net, &grads, &mut state, &cfg);
        let step2 = (net.layers[0].weights.get(0, 0) - w1).abs();
        let bound = cfg.learning_rate * 2.0 / ((1.0 - cfg.rmsprop_decay) * 4.0).sqrt();
        assert!(step2 < step1);
        assert!(step2 < bound);
    }

    fn toy_dataset(n: usize, slope: f64, seed: u64) -> DataSet {
        let mut rng = seed::rng_for(seed, &[9]);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>() * 4.0 - 2.0]).collect();
        let y = rows.iter().map(|r| slope * r[0]).collect();
        DataSet::new(Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn train_zero_target_zero_init_is_fixed_point() {
        let mut net = identity_net(1);
        net.layers[0].weights.set(0, 0, 0.0);
        let data = DataSet::new(
            Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap(),
            vec![0.0; 3],
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let out = train(&data, net, &cfg, None).unwrap();
        assert_eq!(out.params.layers[0].weights.get(0, 0), 0.0);
        assert_eq!(out.params.layers[0].bias.as_ref().unwrap()[0], 0.0);
    }

    // Ordinary least squares oracle: y = 2x exactly, linear net recovers 2.
    // RMSProp moves roughly lr per update, so give it enough updates to
    // cross the initialization gap.
    #[test]
    fn train_linear_regression_recovers_slope() {
        let data = toy_dataset(512, 2.0, 4);
        let net = random_net(8, &[1, 1], 0.0);
        let cfg = TrainConfig {
            epochs: 200,
            rng_seed: 5,
            ..TrainConfig::default()
        };
        let out = train(&data, net, &cfg, None).unwrap();
        let w = out.params.layers[0].weights.get(0, 0);
        assert!((w - 2.0).abs() < 0.05, "slope {w}");
    }

    // Loss-trajectory recording: non-increasing trend every 10 epochs.
    #[test]
    fn train_loss_trend_non_increasing() {
        let data = toy_dataset(128, 1.5, 6);
        let net = random_net(9, &[1, 8, 1], 0.0);
        let cfg = TrainConfig {
            epochs: 100,
            rng_seed: 7,
            ..TrainConfig::default()
        };
        let out = train(&data, net, &cfg, None).unwrap();
        let sampled: Vec<f64> = out.epoch_losses.iter().step_by(10).copied().collect();
        for w in sampled.windows(2) {
            assert!(
                w[1] <= w[0] * 1.05 + 1e-12,
                "loss rose from {} to {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn train_update_count_is_epochs_times_ceil() {
        let data = toy_dataset(100, 1.0, 11);
        let net = random_net(10, &[1, 4, 1], 0.0);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 32,
            rng_seed: 1,
            ..TrainConfig::default()
        };
        let out = train(&data, net, &cfg, None).unwrap();
        assert_eq!(out.updates, 3 * 100usize.div_ceil(32) as u64);
    }

    #[test]
    fn train_is_bitwise_deterministic() {
        let data = toy_dataset(50, -1.0, 12);
        let cfg = TrainConfig {
            epochs: 20,
            rng_seed: 99,
            ..TrainConfig::default()
        };
        let a = train(&data, random_net(13, &[1, 6, 1], 0.3), &cfg, None).unwrap();
        let b = train(&data, random_net(13, &[1, 6, 1], 0.3), &cfg, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn train_hook_runs_after_every_update() {
        let data = toy_dataset(40, 1.0, 14);
        let net = random_net(15, &[1, 3, 1], 0.0);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 16,
            rng_seed: 3,
            ..TrainConfig::default()
        };
        let mut calls = 0usize;
        let mut hook = |_: &mut MlpParams| {
            calls += 1;
            Ok(())
        };
        let out = train(&data, net, &cfg, Some(&mut hook)).unwrap();
        assert_eq!(calls as u64, out.updates);
    }

    #[test]
    fn train_reports_divergence_location() {
        let data = toy_dataset(10, 1.0, 15);
        let mut net = identity_net(1);
        net.layers[0].weights.set(0, 0, f64::MAX);
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: f64::MAX,
            ..TrainConfig::default()
        };
        match train(&data, net, &cfg, None) {
            Err(Error::Divergence { epoch: 0, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    // Dropout expectation: train-mode forwards average to the eval output
    // for a linear output layer.
    #[test]
    fn dropout_expectation_matches_eval() {
        let net = random_net(20, &[3, 16, 1], 0.4);
        let x = [0.4, -0.2, 0.9];
        let eval = predict_scalar(&net, &x).unwrap();
        let mut rng = seed::rng_for(21, &[4]);
        let n = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let (out, _) = forward(&net, &x, Some(&mut rng)).unwrap();
            sum += out[0];
            sumsq += out[0] * out[0];
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - eval).abs() <= 3.0 * se.max(1e-12),
            "mean {mean} vs eval {eval} (se {se})"
        );
    }

    #[test]
    fn params_json_roundtrip_exact_fields() {
        let net = random_net(22, &[2, 3, 1], 0.4);
        let v = net.to_json();
        let layer0 = &v["layers"][0];
        assert!(layer0.get("weights").is_some());
        assert!(layer0.get("bias").is_some());
        assert_eq!(layer0["activation"], "relu");
        assert_eq!(layer0["dropout"], 0.4);
        let back = MlpParams::from_json(&v).unwrap();
        assert_eq!(net, back);
    }
}
