//! Fully connected softmax classifier trained by minibatch cross-entropy
//! minimization. Its softmax output is the estimate `q(y|x)` that gets
//! compared against the oracle.
//!
//! Weights are row-major `(out_dim, in_dim)`. Inputs are standardized with
//! per-dimension constants measured on the training set; the constants are
//! part of the model, so callers always pass original coordinates.

use std::io::{Read, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::LabeledDataset;
use crate::math::{format_float, log_sum_exp, softmax_in_place};
use crate::oracle::PosteriorVector;
use crate::rng::RngKey;

const CHECKPOINT_FORMAT: &str = "twopath-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    /// `ln(1 + e^z)`
    Softplus,
    /// `z * sigmoid(z)`
    Silu,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Activation::Silu => z * sigmoid(z),
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Softplus => sigmoid(z),
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
        }
    }

    fn init_gain(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
            _ => std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub num_categories: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl MlpConfig {
    /// `input_dim -> hidden... -> num_categories` with the default training
    /// schedule (Adam, learning rate 1e-3, batch 128, 30 epochs, softplus).
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>, num_categories: usize) -> Self {
        Self {
            input_dim,
            hidden_layers,
            num_categories,
            activation: Activation::Softplus,
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 30,
            seed: 0,
            optimizer: Optimizer::adam(),
        }
    }

    /// `1 -> 64 -> 64 -> K`
    pub fn default_1d(num_categories: usize) -> Self {
        Self::new(1, vec![64, 64], num_categories)
    }

    /// `d -> 128 -> 64 -> K`
    pub fn default_embedded(input_dim: usize, num_categories: usize) -> Self {
        Self::new(input_dim, vec![128, 64], num_categories)
    }

    /// Architecture default for the given input dimension.
    pub fn default_for(input_dim: usize, num_categories: usize) -> Self {
        if input_dim == 1 {
            Self::default_1d(num_categories)
        } else {
            Self::default_embedded(input_dim, num_categories)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.input_dim == 0 {
            return bad("input_dim must be >= 1".into());
        }
        if self.hidden_layers.contains(&0) {
            return bad(format!("hidden widths must be >= 1, got {:?}", self.hidden_layers));
        }
        if self.num_categories < 2 {
            return bad(format!("num_categories must be >= 2, got {}", self.num_categories));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        match self.optimizer {
            Optimizer::Sgd => {}
            Optimizer::Momentum { beta } if (0.0..1.0).contains(&beta) => {}
            Optimizer::Adam { beta1, beta2, eps }
                if (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0 => {}
            other => return bad(format!("invalid optimizer parameters {other:?}")),
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_layers);
        w.push(self.num_categories);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], biases: vec![0.0; out_dim] }
    }

    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, row) in self.weights.chunks_exact(self.in_dim).enumerate() {
            out[o] = self.biases[o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
        }
    }
}

/// Per-dimension affine standardization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Sample mean and (population) standard deviation per dimension; constant
    /// dimensions get scale 1.
    pub fn fit(data: &LabeledDataset) -> Self {
        let d = data.dim();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for (x, _) in data.iter() {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for (x, _) in data.iter() {
            for j in 0..d {
                var[j] += (x[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.mean[j]) / self.scale[j];
        }
    }
}

/// Gradients laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    /// Weights then biases, layer by layer (same order as [`MlpModel::parameters`]).
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub standardizer: Standardizer,
    pub layers: Vec<Layer>,
}

/// Per-sample forward cache: standardized input, pre-activations and
/// activations for every layer.
struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl MlpModel {
    /// All-zero parameters with identity standardization.
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let w = config.widths();
        let layers = w.windows(2).map(|p| Layer::zeros(p[0], p[1])).collect();
        let standardizer = Standardizer::identity(config.input_dim);
        Ok(Self { config, standardizer, layers })
    }

    /// Fan-in scaled uniform weights `U(-g sqrt(3 / fan_in), g sqrt(3 / fan_in))`
    /// drawn from stream 0 of the config seed; zero biases.
    pub fn init(config: MlpConfig, standardizer: Standardizer) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        if standardizer.mean.len() != model.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: model.config.input_dim,
                actual: standardizer.mean.len(),
            });
        }
        model.standardizer = standardizer;
        let mut rng = RngKey::new(model.config.seed, 0).rng();
        let n_layers = model.layers.len();
        let hidden_gain = model.config.activation.init_gain();
        for (i, layer) in model.layers.iter_mut().enumerate() {
            let gain = if i + 1 == n_layers { 1.0 } else { hidden_gain };
            let limit = gain * (3.0 / layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                *w = (2.0 * rng.random::<f64>() - 1.0) * limit;
            }
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn num_categories(&self) -> usize {
        self.config.num_categories
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_parameters() {
            return Err(Error::DimensionMismatch { expected: self.num_parameters(), actual: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *p = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch { expected: self.config.input_dim, actual: x.len() });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut input = vec![0.0; x.len()];
        self.standardizer.apply(x, &mut input);
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(input);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.out_dim];
            layer.affine(post.last().expect("input pushed"), &mut z);
            if i < last {
                let act = self.config.activation;
                post.push(z.iter().map(|&v| act.apply(v)).collect());
            }
            pre.push(z);
        }
        Trace { pre, post }
    }

    /// Output-layer logits for one input.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).pre.pop().expect("at least one layer"))
    }

    /// Softmax of the logits (max-subtracted).
    pub fn forward(&self, x: &[f64]) -> Result<PosteriorVector> {
        Ok(PosteriorVector::from_log_weights(self.logits(x)?))
    }

    /// The network's estimate `q(y|x)`; identical to [`forward`](Self::forward).
    pub fn predict_posterior(&self, x: &[f64]) -> Result<PosteriorVector> {
        self.forward(x)
    }

    fn check_batch(&self, data: &LabeledDataset, indices: &[usize]) -> Result<()> {
        if indices.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if data.dim() != self.config.input_dim {
            return Err(Error::DimensionMismatch { expected: self.config.input_dim, actual: data.dim() });
        }
        if let Some(&i) = indices.iter().find(|&&i| data.y(i) >= self.config.num_categories) {
            return Err(Error::Schema(format!(
                "label {} out of range for {} categories",
                data.y(i),
                self.config.num_categories
            )));
        }
        Ok(())
    }

    /// Mean cross-entropy `-ln q(y_i|x_i)` over the selected samples.
    pub fn loss_on(&self, data: &LabeledDataset, indices: &[usize]) -> Result<f64> {
        self.check_batch(data, indices)?;
        let total: f64 = indices
            .iter()
            .map(|&i| {
                let z = self.trace(data.x(i)).pre.pop().expect("layer");
                log_sum_exp(&z) - z[data.y(i)]
            })
            .sum();
        Ok(total / indices.len() as f64)
    }

    pub fn loss(&self, data: &LabeledDataset) -> Result<f64> {
        let all: Vec<usize> = (0..data.len()).collect();
        self.loss_on(data, &all)
    }

    /// Exact gradient of [`loss_on`](Self::loss_on) by backpropagation,
    /// returned together with the loss.
    pub fn gradient_on(&self, data: &LabeledDataset, indices: &[usize]) -> Result<(f64, Gradients)> {
        self.check_batch(data, indices)?;
        let mut grads = Gradients {
            layers: self.layers.iter().map(|l| Layer::zeros(l.in_dim, l.out_dim)).collect(),
        };
        let inv_b = 1.0 / indices.len() as f64;
        let act = self.config.activation;
        let mut total = 0.0;
        for &i in indices {
            let tr = self.trace(data.x(i));
            let y = data.y(i);
            let logits = tr.pre.last().expect("layer");
            total += log_sum_exp(logits) - logits[y];

            let mut delta = logits.clone();
            softmax_in_place(&mut delta);
            delta[y] -= 1.0;
            delta.iter_mut().for_each(|d| *d *= inv_b);

            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let g = &mut grads.layers[li];
                let input = &tr.post[li];
                for (o, d) in delta.iter().enumerate() {
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
                if li == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.in_dim];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                for (p, z) in prev.iter_mut().zip(&tr.pre[li - 1]) {
                    *p *= act.derivative(*z);
                }
                delta = prev;
            }
        }
        Ok((total * inv_b, grads))
    }

    pub fn gradient(&self, data: &LabeledDataset) -> Result<(f64, Gradients)> {
        let all: Vec<usize> = (0..data.len()).collect();
        self.gradient_on(data, &all)
    }

    /// Fraction of samples whose argmax prediction equals the label.
    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut hits = 0usize;
        for (x, y) in data.iter() {
            if self.forward(x)?.argmax() == y {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Versioned JSON checkpoint: config, standardization and row-major parameters.
    pub fn write_checkpoint<W: Write>(&self, out: W) -> Result<()> {
        let doc = CheckpointRef { format: CHECKPOINT_FORMAT, version: CHECKPOINT_VERSION, model: self };
        serde_json::to_writer_pretty(out, &doc)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(input: R) -> Result<Self> {
        let doc: Checkpoint = serde_json::from_reader(input)?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format `{}`", doc.format)));
        }
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", doc.version)));
        }
        let model = doc.model;
        model.config.validate()?;
        let widths = model.config.widths();
        if model.layers.len() + 1 != widths.len() {
            return Err(Error::Checkpoint("layer count does not match config".into()));
        }
        for (l, p) in model.layers.iter().zip(widths.windows(2)) {
            if l.in_dim != p[0]
                || l.out_dim != p[1]
                || l.weights.len() != p[0] * p[1]
                || l.biases.len() != p[1]
            {
                return Err(Error::Checkpoint(format!(
                    "layer shape {}x{} does not chain {:?}",
                    l.out_dim, l.in_dim, widths
                )));
            }
        }
        let s = &model.standardizer;
        if s.mean.len() != model.config.input_dim || s.scale.len() != model.config.input_dim {
            return Err(Error::Checkpoint("standardization length does not match input_dim".into()));
        }
        if !model.all_finite() || s.scale.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Checkpoint("non-finite or invalid parameters".into()));
        }
        Ok(model)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    model: &'a MlpModel,
}

#[derive(Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: MlpModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub seed: u64,
    /// Full-dataset mean loss before the first update.
    pub initial_loss: f64,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Full-dataset mean loss after training.
    pub final_loss: f64,
    pub wall_time_secs: f64,
    /// Relative change of the last two epoch losses fell below 1e-3.
    pub converged: bool,
}

impl TrainReport {
    /// CSV `stage,epoch,loss` with one `initial` row, one `epoch` row per
    /// epoch and one `final` row. Wall time is left out so reruns match byte
    /// for byte.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["stage", "epoch", "loss"])?;
        w.write_record(["initial".to_string(), "0".to_string(), format_float(self.initial_loss)])?;
        for (e, l) in self.epoch_losses.iter().enumerate() {
            w.write_record(["epoch".to_string(), (e + 1).to_string(), format_float(*l)])?;
        }
        w.write_record([
            "final".to_string(),
            self.epoch_losses.len().to_string(),
            format_float(self.final_loss),
        ])?;
        w.flush()?;
        Ok(())
    }
}

enum OptState {
    Sgd,
    Momentum { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl OptState {
    fn new(opt: Optimizer, n: usize) -> Self {
        match opt {
            Optimizer::Sgd => OptState::Sgd,
            Optimizer::Momentum { .. } => OptState::Momentum { velocity: vec![0.0; n] },
            Optimizer::Adam { .. } => OptState::Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 },
        }
    }

    fn step(&mut self, opt: Optimizer, lr: f64, model: &mut MlpModel, grads: &Gradients) {
        let params = model
            .layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()));
        let g = grads.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases));
        match (self, opt) {
            (OptState::Sgd, _) => {
                for (p, g) in params.zip(g) {
                    *p -= lr * g;
                }
            }
            (OptState::Momentum { velocity }, Optimizer::Momentum { beta }) => {
                for ((p, g), vel) in params.zip(g).zip(velocity.iter_mut()) {
                    *vel = beta * *vel + g;
                    *p -= lr * *vel;
                }
            }
            (OptState::Adam { m, v, t }, Optimizer::Adam { beta1, beta2, eps }) => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for (((p, g), mi), vi) in params.zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = beta1 * *mi + (1.0 - beta1) * g;
                    *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                    *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                }
            }
            _ => unreachable!("optimizer state built from the same config"),
        }
    }
}

/// Minibatch training for `config.epochs` passes, reshuffling every epoch
/// from stream 1 of `config.seed`. `(config, data)` determine the result.
pub fn train(config: &MlpConfig, data: &LabeledDataset) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if data.dim() != config.input_dim {
        return Err(Error::DimensionMismatch { expected: config.input_dim, actual: data.dim() });
    }
    let start = Instant::now();
    let mut model = MlpModel::init(config.clone(), Standardizer::fit(data))?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let initial_loss = model.loss_on(data, &order)?;
    if !initial_loss.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss: initial_loss });
    }

    let mut shuffle_rng = RngKey::new(config.seed, 1).rng();
    let mut state = OptState::new(config.optimizer, model.num_parameters());
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = model.gradient_on(data, batch)?;
            sum += loss * batch.len() as f64;
            state.step(config.optimizer, config.learning_rate, &mut model, &grads);
        }
        let mean = sum / data.len() as f64;
        if !mean.is_finite() || !model.all_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }

    order.sort_unstable();
    let final_loss = model.loss_on(data, &order)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs, loss: final_loss });
    }
    let converged = match epoch_losses.as_slice() {
        [.., a, b] => ((a - b) / a.max(1e-300)).abs() < 1e-3,
        _ => false,
    };
    let report = TrainReport {
        seed: config.seed,
        initial_loss,
        epoch_losses,
        final_loss,
        wall_time_secs: start.elapsed().as_secs_f64(),
        converged,
    };
    Ok((model, report))
}
