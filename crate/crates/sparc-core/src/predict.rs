//! Feedforward velocity predictor, trained from scratch.
//!
//! The network maps a normalized window of recent world states to the
//! pedestrian's next per-step velocity. Architecture is input -> 64 -> 64 -> 2
//! with rectifier hidden activations. Training is plain minibatch Adam with
//! MSE loss and a step learning-rate schedule, fully deterministic given the
//! seed. Inference is read-only and safe to share across threads.

use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Episode;
use crate::rng::stream_rng;
use crate::vec2::Vec2;

/// Raw features per world state: (veh_par, veh_speed, ped_par, ped_perp).
pub const STEP_FEATURES: usize = 4;
/// Output dimension: pedestrian velocity (par, perp).
pub const TARGET_DIM: usize = 2;

const HIDDEN: [usize; 2] = [64, 64];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("history must be non-empty")]
    EmptyHistory,
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training loss became non-finite at epoch {epoch} (loss {loss})")]
    NonFiniteLoss { epoch: u32, loss: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Per-feature z-score normalization computed on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    /// No-op normalization.
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; STEP_FEATURES],
            std: vec![1.0; STEP_FEATURES],
        }
    }

    /// Mean and population standard deviation per raw feature. Degenerate
    /// (constant) features get std 1 so the normalized slot is exactly zero.
    pub fn fit(rows: &[[f64; STEP_FEATURES]]) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; STEP_FEATURES];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; STEP_FEATURES];
        for r in rows {
            for ((v, m), x) in var.iter_mut().zip(&mean).zip(r) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    fn apply(&self, raw: &[f64; STEP_FEATURES], out: &mut [f64]) {
        for i in 0..STEP_FEATURES {
            out[i] = (raw[i] - self.mean[i]) / self.std[i];
        }
    }
}

/// Flatten the last `window` states of `history` oldest-first into a
/// normalized feature vector of length `4 * window`, zero-padded at the front
/// when the history is shorter than the window.
pub fn build_features(
    history: &[[f64; STEP_FEATURES]],
    window: usize,
    norm: &FeatureNorm,
) -> Result<Vec<f64>, ModelError> {
    if history.is_empty() {
        return Err(ModelError::EmptyHistory);
    }
    let mut out = vec![0.0; STEP_FEATURES * window];
    let take = history.len().min(window);
    let pad = window - take;
    for (k, raw) in history[history.len() - take..].iter().enumerate() {
        let off = (pad + k) * STEP_FEATURES;
        norm.apply(raw, &mut out[off..off + STEP_FEATURES]);
    }
    Ok(out)
}

/// One affine layer; weights are `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// The bare network: affine layers with rectifier activations on all but the
/// last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Mlp {
    /// Seeded uniform fan-in/fan-out initialization: weights drawn from
    /// +/- sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn seeded(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                    rng.random_range(-limit..=limit)
                });
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w.ncols())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.nrows())
    }

    /// Forward pass on a single input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut a = Array1::from_vec(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.w.dot(&a) + &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a.to_vec())
    }

    /// Forward pass on a batch (rows are samples).
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        if x.ncols() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w.t()) + &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    /// Mean over the batch of the half-squared error summed per coordinate,
    /// and its exact reverse-mode gradient.
    pub fn loss_and_grad(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
    ) -> Result<(f64, Gradients), ModelError> {
        let batch = x.nrows();
        if batch == 0 {
            return Err(ModelError::EmptyBatch);
        }
        if x.ncols() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        if y.ncols() != self.output_dim() || y.nrows() != batch {
            return Err(ModelError::DimensionMismatch {
                expected: self.output_dim(),
                got: y.ncols(),
            });
        }

        let last = self.layers.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.w.t()) + &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }

        let err = &acts[self.layers.len()] - y;
        let loss = 0.5 * err.iter().map(|e| e * e).sum::<f64>() / batch as f64;

        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta = err / batch as f64;
        for l in (0..self.layers.len()).rev() {
            let dw = delta.t().dot(&acts[l]);
            let db = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut d_prev = delta.dot(&self.layers[l].w);
                // Rectifier gate: activation zero means the unit was off.
                Zip::from(&mut d_prev).and(&acts[l]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d_prev;
            }
            grads.push((dw, db));
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
}

impl AdamState {
    pub fn zeros_like(net: &Mlp) -> Self {
        let zeros = |l: &Dense| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.dim()));
        Self {
            m: net.layers.iter().map(zeros).collect(),
            v: net.layers.iter().map(zeros).collect(),
        }
    }
}

/// One Adam update with bias correction. `t` is the 1-based step index.
pub fn adam_step(
    net: &mut Mlp,
    grads: &Gradients,
    state: &mut AdamState,
    t: u64,
    lr: f64,
    hp: &AdamParams,
) {
    debug_assert!(t >= 1);
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    for (i, layer) in net.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[i];
        let (mw, mb) = &mut state.m[i];
        let (vw, vb) = &mut state.v[i];
        Zip::from(&mut layer.w)
            .and(gw)
            .and(mw)
            .and(vw)
            .for_each(|p, &g, m, v| {
                *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
                *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + hp.eps);
            });
        Zip::from(&mut layer.b)
            .and(gb)
            .and(mb)
            .and(vb)
            .for_each(|p, &g, m, v| {
                *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
                *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + hp.eps);
            });
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    /// Halve (by `lr_decay_factor`) every this many epochs.
    pub lr_decay_every: u32,
    pub lr_decay_factor: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 50,
            lr_decay_every: 10,
            lr_decay_factor: 0.5,
            batch_size: 256,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(ModelError::InvalidModel(format!(
                "lr_decay_factor must be in (0, 1], got {}",
                self.lr_decay_factor
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidModel("batch_size must be > 0".into()));
        }
        if self.lr_decay_every == 0 {
            return Err(ModelError::InvalidModel("lr_decay_every must be > 0".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn effective_lr(&self, epoch: u32) -> f64 {
        self.learning_rate
            * self
                .lr_decay_factor
                .powi((epoch / self.lr_decay_every) as i32)
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Normalized features and targets ready for training.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub norm: FeatureNorm,
    pub feature_window: usize,
}

/// Build the supervised set from episodes: one sample per recorded step, with
/// the feature window ending at that step and the realized velocity as target.
/// Normalization statistics are fit on the same episodes.
pub fn build_training_set(
    episodes: &[Episode],
    feature_window: usize,
) -> Result<TrainingSet, ModelError> {
    let mut raw: Vec<[f64; STEP_FEATURES]> = Vec::new();
    for ep in episodes {
        for s in &ep.steps {
            raw.push(s.raw_features());
        }
    }
    if raw.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let norm = FeatureNorm::fit(&raw)?;

    let n = raw.len();
    let in_dim = STEP_FEATURES * feature_window;
    let mut x = Array2::zeros((n, in_dim));
    let mut y = Array2::zeros((n, TARGET_DIM));
    let mut row = 0;
    let mut ep_rows: Vec<[f64; STEP_FEATURES]> = Vec::new();
    for ep in episodes {
        ep_rows.clear();
        for s in &ep.steps {
            ep_rows.push(s.raw_features());
            let feats = build_features(&ep_rows, feature_window, &norm)?;
            x.row_mut(row)
                .assign(&ndarray::ArrayView1::from(feats.as_slice()));
            y[[row, 0]] = s.dvel_par;
            y[[row, 1]] = s.dvel_perp;
            row += 1;
        }
    }
    Ok(TrainingSet {
        x,
        y,
        norm,
        feature_window,
    })
}

/// The trained artifact: network plus the feature pipeline it was fit with.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub net: Mlp,
    pub feature_window: usize,
    pub norm: FeatureNorm,
}

impl MlpModel {
    /// Predict the pedestrian velocity from a raw state history
    /// (oldest-first, ending at the current state).
    pub fn predict(&self, history: &[[f64; STEP_FEATURES]]) -> Result<Vec2, ModelError> {
        let feats = build_features(history, self.feature_window, &self.norm)?;
        let out = self.net.forward(&feats)?;
        Ok(Vec2::new(out[0], out[1]))
    }
}

/// Final model plus the per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub epoch_losses: Vec<f64>,
}

/// Train the default architecture on the set. Deterministic given
/// `(set, cfg)`: initialization and epoch shuffles come from the config seed.
pub fn train(set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    let n = set.x.nrows();
    if n == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let in_dim = set.x.ncols();
    let dims = [in_dim, HIDDEN[0], HIDDEN[1], TARGET_DIM];
    let mut rng = stream_rng(cfg.seed, 0);
    let mut net = Mlp::seeded(&dims, &mut rng);
    let mut state = AdamState::zeros_like(&net);
    let hp = cfg.adam();
    let mut t: u64 = 0;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs as usize);

    let mut order: Vec<usize> = (0..n).collect();
    let bs = cfg.batch_size.min(n);
    let mut xb = Array2::zeros((bs, in_dim));
    let mut yb = Array2::zeros((bs, TARGET_DIM));

    for epoch in 0..cfg.epochs {
        let lr = cfg.effective_lr(epoch);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(bs) {
            let k = chunk.len();
            for (r, &idx) in chunk.iter().enumerate() {
                xb.row_mut(r).assign(&set.x.row(idx));
                yb.row_mut(r).assign(&set.y.row(idx));
            }
            let xv = xb.slice(ndarray::s![..k, ..]).to_owned();
            let yv = yb.slice(ndarray::s![..k, ..]).to_owned();
            let (loss, grads) = net.loss_and_grad(&xv, &yv)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, loss });
            }
            t += 1;
            adam_step(&mut net, &grads, &mut state, t, lr, &hp);
            epoch_loss += loss * k as f64;
        }
        epoch_losses.push(epoch_loss / n as f64);
    }

    Ok(TrainOutcome {
        model: MlpModel {
            net,
            feature_window: set.feature_window,
            norm: set.norm.clone(),
        },
        epoch_losses,
    })
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    #[serde(rename = "in")]
    in_dim: usize,
    #[serde(rename = "out")]
    out_dim: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    feature_window: usize,
    feature_norm: FeatureNorm,
    layers: Vec<LayerFile>,
}

/// Serialize a model to JSON. Weights use the shortest decimal encoding that
/// parses back to the identical float, so a round-trip reproduces forward
/// outputs bit-exactly.
pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let file = ModelFile {
        feature_window: model.feature_window,
        feature_norm: model.norm.clone(),
        layers: model
            .net
            .layers
            .iter()
            .map(|l| LayerFile {
                in_dim: l.w.ncols(),
                out_dim: l.w.nrows(),
                w: l.w.iter().copied().collect(),
                b: l.b.to_vec(),
            })
            .collect(),
    };
    let s = serde_json::to_string(&file)?;
    std::fs::write(path, s)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel, ModelError> {
    let s = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&s)?;
    model_from_file(file)
}

fn model_from_file(file: ModelFile) -> Result<MlpModel, ModelError> {
    let bad = |m: String| Err(ModelError::InvalidModel(m));
    if file.layers.is_empty() {
        return bad("model has no layers".into());
    }
    if file.feature_window == 0 {
        return bad("feature_window must be >= 1".into());
    }
    if file.feature_norm.mean.len() != STEP_FEATURES
        || file.feature_norm.std.len() != STEP_FEATURES
    {
        return bad(format!(
            "feature_norm must have {STEP_FEATURES} entries, got mean={}, std={}",
            file.feature_norm.mean.len(),
            file.feature_norm.std.len()
        ));
    }
    for (i, s) in file.feature_norm.std.iter().enumerate() {
        if !(*s > 0.0) {
            return bad(format!("feature_norm.std[{i}] must be > 0, got {s}"));
        }
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    let mut prev_out = STEP_FEATURES * file.feature_window;
    for (i, l) in file.layers.iter().enumerate() {
        if l.in_dim != prev_out {
            return bad(format!(
                "layer {i}: input dim {} does not chain from previous dim {prev_out}",
                l.in_dim
            ));
        }
        if l.w.len() != l.in_dim * l.out_dim {
            return bad(format!(
                "layer {i}: weight matrix has {} entries, expected {}x{}",
                l.w.len(),
                l.out_dim,
                l.in_dim
            ));
        }
        if l.b.len() != l.out_dim {
            return bad(format!(
                "layer {i}: bias has {} entries, expected {}",
                l.b.len(),
                l.out_dim
            ));
        }
        if l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()) {
            return bad(format!("layer {i}: non-finite parameter"));
        }
        let w = Array2::from_shape_vec((l.out_dim, l.in_dim), l.w.clone())
            .expect("shape checked above");
        layers.push(Dense {
            w,
            b: Array1::from_vec(l.b.clone()),
        });
        prev_out = l.out_dim;
    }
    if prev_out != TARGET_DIM {
        return bad(format!(
            "final layer must have {TARGET_DIM} outputs, got {prev_out}"
        ));
    }
    Ok(MlpModel {
        net: Mlp { layers },
        feature_window: file.feature_window,
        norm: file.feature_norm,
    })
}
