//! Dense feed-forward network trained from scratch.
//!
//! Hidden layers use `tanh`, the two output units use independent logistic
//! sigmoids, and training minimizes the batch-mean quadratic cost
//! `½ Σ_j (ŷ_j - y_j)²` with L2 weight decay, momentum, per-epoch learning
//! rate decay, shuffled mini-batches and early stopping on a validation set.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Direction;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    /// Extra narrow layer inserted after the middle hidden layer.
    pub bottleneck: Option<usize>,
    pub output_dim: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate factor applied once per epoch.
    pub lr_decay: f64,
    pub momentum: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Logistic midpoint `x₀` of the output units.
    pub sigmoid_midpoint: f64,
    pub rng_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: 1,
            hidden_layers: vec![400; 5],
            bottleneck: None,
            output_dim: 2,
            learning_rate: 0.05,
            lr_decay: 0.97,
            momentum: 0.9,
            l2_lambda: 1e-4,
            batch_size: 100,
            max_epochs: 50,
            early_stop_patience: 5,
            sigmoid_midpoint: 0.0,
            rng_seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Widths from input to output, bottleneck included.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        let insert_after = self.hidden_layers.len().div_ceil(2);
        for (i, w) in self.hidden_layers.iter().enumerate() {
            sizes.push(*w);
            if i + 1 == insert_after {
                if let Some(b) = self.bottleneck {
                    sizes.push(b);
                }
            }
        }
        if self.hidden_layers.is_empty() {
            if let Some(b) = self.bottleneck {
                sizes.push(b);
            }
        }
        sizes.push(self.output_dim);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes().contains(&0) {
            return Err(Error::Config(format!("zero-width layer in {:?}", self.layer_sizes())));
        }
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(what.to_string()))
            }
        };
        check(self.learning_rate > 0.0, "learning_rate must be positive")?;
        check(
            self.lr_decay > 0.0 && self.lr_decay <= 1.0,
            "lr_decay must lie in (0, 1]",
        )?;
        check((0.0..1.0).contains(&self.momentum), "momentum must lie in [0, 1)")?;
        check(self.l2_lambda >= 0.0, "l2_lambda must be non-negative")?;
        check(self.batch_size > 0, "batch_size must be positive")?;
        check(self.max_epochs > 0, "max_epochs must be positive")?;
        check(self.early_stop_patience > 0, "early_stop_patience must be positive")
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    vel_w: Vec<f64>,
    vel_b: Vec<f64>,
}

impl Dense {
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs))
            .zip(&self.biases)
        {
            *o = b + dot(row, x);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64, midpoint: f64) -> f64 {
    1.0 / (1.0 + (-(x - midpoint)).exp())
}

/// One training or evaluation example.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub input: &'a [f64],
    pub target: &'a [f64],
}

/// Per-layer activations from one forward pass; entry 0 is the input.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Activations {
    pub layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// `∂E/∂w` and `∂E/∂b` per layer, same shapes as the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &NetworkModel) -> Self {
        Gradients {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub train: f64,
    pub validation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// 1-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
    pub loss_curve: Vec<EpochLoss>,
}

/// Tracks the best validation loss and decides when to stop.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
        }
    }

    /// Records one epoch's validation loss; returns whether it is a new best.
    pub fn observe(&mut self, validation_loss: f64) -> bool {
        self.epoch += 1;
        if validation_loss < self.best {
            self.best = validation_loss;
            self.best_epoch = self.epoch;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.epoch - self.best_epoch >= self.patience
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    config: NetworkConfig,
    layers: Vec<Dense>,
}

impl NetworkModel {
    /// Gaussian weights with variance `2 / fan_in`, zero biases and velocities.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let sizes = config.layer_sizes();
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
                Dense {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect(),
                    biases: vec![0.0; fan_out],
                    vel_w: vec![0.0; fan_in * fan_out],
                    vel_b: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(NetworkModel {
            config: config.clone(),
            layers,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.outputs, l.inputs)).collect()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.layers[layer].weights
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.layers[layer].weights
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.layers[layer].biases
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.layers[layer].biases
    }

    fn empty_activations(&self) -> Activations {
        let mut layers = vec![vec![0.0; self.config.input_dim]];
        layers.extend(self.layers.iter().map(|l| vec![0.0; l.outputs]));
        Activations { layers }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.config.input_dim {
            return Err(Error::Dimension(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    fn forward_into(&self, input: &[f64], acts: &mut Activations) {
        acts.layers[0].copy_from_slice(input);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.layers.split_at_mut(i + 1);
            let out = &mut rest[0];
            layer.forward(&done[i], out);
            if i == last {
                let x0 = self.config.sigmoid_midpoint;
                out.iter_mut().for_each(|v| *v = sigmoid(*v, x0));
            } else {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Activations)> {
        self.check_input(input)?;
        let mut acts = self.empty_activations();
        self.forward_into(input, &mut acts);
        Ok((acts.output().to_vec(), acts))
    }

    /// Argmax of the outputs; a tie resolves to index 0 (down).
    pub fn predict_class(&self, input: &[f64]) -> Result<Direction> {
        let (out, _) = self.forward(input)?;
        Ok(Direction::from_index(argmax(&out)))
    }

    pub fn predict_all<'a, I>(&self, inputs: I) -> Result<Vec<Direction>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut acts = self.empty_activations();
        inputs
            .into_iter()
            .map(|x| {
                self.check_input(x)?;
                self.forward_into(x, &mut acts);
                Ok(Direction::from_index(argmax(acts.output())))
            })
            .collect()
    }

    fn check_batch(&self, batch: &[Example<'_>]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptySplit("empty batch".into()));
        }
        for ex in batch {
            self.check_input(ex.input)?;
            if ex.target.len() != self.config.output_dim {
                return Err(Error::Dimension("target width differs from output layer".into()));
            }
        }
        Ok(())
    }

    /// Batch-mean quadratic cost.
    pub fn loss(&self, batch: &[Example<'_>]) -> Result<f64> {
        self.check_batch(batch)?;
        let mut acts = self.empty_activations();
        let mut total = 0.0;
        for ex in batch {
            self.forward_into(ex.input, &mut acts);
            total += half_squared_error(acts.output(), ex.target);
        }
        Ok(total / batch.len() as f64)
    }

    /// Reverse-mode gradients of the batch-mean quadratic cost; also returns
    /// the cost itself.
    pub fn backward(&self, batch: &[Example<'_>]) -> Result<(f64, Gradients)> {
        self.check_batch(batch)?;
        let mut grads = Gradients::zeros_like(self);
        let mut acts = self.empty_activations();
        let mut deltas: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for ex in batch {
            self.forward_into(ex.input, &mut acts);
            total += half_squared_error(acts.output(), ex.target);
            let last = self.layers.len() - 1;
            for ((d, y), t) in deltas[last].iter_mut().zip(acts.output()).zip(ex.target) {
                *d = (y - t) * y * (1.0 - y) * scale;
            }
            for l in (0..self.layers.len()).rev() {
                let input = &acts.layers[l];
                let layer = &self.layers[l];
                for (o, d) in deltas[l].iter().enumerate() {
                    axpy(
                        *d,
                        input,
                        &mut grads.weights[l][o * layer.inputs..(o + 1) * layer.inputs],
                    );
                    grads.biases[l][o] += d;
                }
                if l > 0 {
                    let (lower, upper) = deltas.split_at_mut(l);
                    let prev = &mut lower[l - 1];
                    prev.iter_mut().for_each(|v| *v = 0.0);
                    for (o, d) in upper[0].iter().enumerate() {
                        axpy(*d, &layer.weights[o * layer.inputs..(o + 1) * layer.inputs], prev);
                    }
                    for (p, a) in prev.iter_mut().zip(input) {
                        *p *= 1.0 - a * a;
                    }
                }
            }
        }
        Ok((total * scale, grads))
    }

    /// Momentum step with L2 decay at rate `η·decay^epoch` (epoch 0-based).
    /// With zero momentum a weight moves exactly by `w - η ∂E/∂w - η λ w`.
    pub fn sgd_step(&mut self, grads: &Gradients, epoch: usize) -> Result<()> {
        if grads.weights.len() != self.layers.len()
            || self
                .layers
                .iter()
                .zip(grads.weights.iter().zip(&grads.biases))
                .any(|(l, (w, b))| l.weights.len() != w.len() || l.biases.len() != b.len())
        {
            return Err(Error::Dimension("gradient shapes differ from model".into()));
        }
        let eta = self.effective_learning_rate(epoch);
        let mu = self.config.momentum;
        let lambda = self.config.l2_lambda;
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
            for ((w, v), g) in layer.weights.iter_mut().zip(layer.vel_w.iter_mut()).zip(gw) {
                let mut next = *w - eta * g - eta * lambda * *w;
                if mu != 0.0 {
                    next += mu * *v;
                }
                *v = next - *w;
                *w = next;
            }
            for ((b, v), g) in layer.biases.iter_mut().zip(layer.vel_b.iter_mut()).zip(gb) {
                let mut next = *b - eta * g;
                if mu != 0.0 {
                    next += mu * *v;
                }
                *v = next - *b;
                *b = next;
            }
        }
        Ok(())
    }

    pub fn effective_learning_rate(&self, epoch: usize) -> f64 {
        self.config.learning_rate * self.config.lr_decay.powi(epoch as i32)
    }

    /// Mini-batch training with early stopping; the best-validation weights
    /// are restored before returning.
    pub fn train(&mut self, train: &[Example<'_>], validation: &[Example<'_>]) -> Result<TrainReport> {
        if validation.is_empty() {
            return Err(Error::Config("validation set is empty".into()));
        }
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        if self.config.batch_size > train.len() {
            return Err(Error::Config(format!(
                "batch size {} exceeds {} training examples",
                self.config.batch_size,
                train.len()
            )));
        }
        self.check_batch(train)?;
        self.check_batch(validation)?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut batch = Vec::with_capacity(self.config.batch_size);
        let mut stopper = EarlyStopping::new(self.config.early_stop_patience);
        let mut best_layers = self.layers.clone();
        let mut curve = Vec::new();

        for epoch in 0..self.config.max_epochs {
            order.shuffle(&mut rng);
            let mut train_loss = 0.0;
            for chunk in order.chunks(self.config.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| train[i]));
                let (loss, grads) = self.backward(&batch)?;
                train_loss += loss * chunk.len() as f64;
                self.sgd_step(&grads, epoch)?;
            }
            let validation_loss = self.loss(validation)?;
            curve.push(EpochLoss {
                train: train_loss / train.len() as f64,
                validation: validation_loss,
            });
            if stopper.observe(validation_loss) {
                best_layers.clone_from(&self.layers);
            }
            if stopper.should_stop() {
                break;
            }
        }

        self.layers = best_layers;
        let (best_epoch, best_validation_loss) = stopper.best();
        Ok(TrainReport {
            epochs_run: curve.len(),
            best_epoch,
            best_validation_loss,
            stopped_early: curve.len() < self.config.max_epochs,
            loss_curve: curve,
        })
    }

    pub fn save_checkpoint<W: Write>(&self, sink: W) -> Result<()> {
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerState {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(sink, &ckpt)?;
        Ok(())
    }

    pub fn load_checkpoint<R: Read>(source: R) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_reader(source)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                ckpt.format_version
            )));
        }
        ckpt.config.validate()?;
        let sizes = ckpt.config.layer_sizes();
        if sizes.len() != ckpt.layers.len() + 1 {
            return Err(Error::Format("checkpoint layer count disagrees with config".into()));
        }
        let mut layers = Vec::with_capacity(ckpt.layers.len());
        for (state, w) in ckpt.layers.into_iter().zip(sizes.windows(2)) {
            if state.inputs != w[0]
                || state.outputs != w[1]
                || state.weights.len() != w[0] * w[1]
                || state.biases.len() != w[1]
            {
                return Err(Error::Format("checkpoint layer shape disagrees with config".into()));
            }
            layers.push(Dense {
                inputs: state.inputs,
                outputs: state.outputs,
                vel_w: vec![0.0; state.weights.len()],
                vel_b: vec![0.0; state.biases.len()],
                weights: state.weights,
                biases: state.biases,
            });
        }
        Ok(NetworkModel {
            config: ckpt.config,
            layers,
        })
    }
}

fn half_squared_error(output: &[f64], target: &[f64]) -> f64 {
    0.5 * output.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum::<f64>()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    config: NetworkConfig,
    layers: Vec<LayerState>,
}

#[derive(Serialize, Deserialize)]
struct LayerState {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(sizes: &[usize], seed: u64) -> NetworkConfig {
        NetworkConfig {
            input_dim: sizes[0],
            hidden_layers: sizes[1..sizes.len() - 1].to_vec(),
            output_dim: sizes[sizes.len() - 1],
            rng_seed: seed,
            ..NetworkConfig::default()
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let inputs = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let targets = (0..n)
            .map(|_| Direction::from_index(rng.gen_range(0..2)).one_hot().to_vec())
            .collect();
        (inputs, targets)
    }

    fn examples<'a>(inputs: &'a [Vec<f64>], targets: &'a [Vec<f64>]) -> Vec<Example<'a>> {
        inputs
            .iter()
            .zip(targets)
            .map(|(i, t)| Example { input: i, target: t })
            .collect()
    }

    #[test]
    fn same_seed_same_weights() {
        let cfg = small(&[6, 5, 2], 9);
        assert_eq!(NetworkModel::init(&cfg).unwrap(), NetworkModel::init(&cfg).unwrap());
    }

    #[test]
    fn init_variance_matches_fan_in() {
        let cfg = small(&[400, 400, 2], 3);
        let model = NetworkModel::init(&cfg).unwrap();
        let w = model.weights(0);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        assert!((var / (2.0 / 400.0) - 1.0).abs() < 0.2, "variance {var}");
        assert!(model.biases(0).iter().all(|b| *b == 0.0));
    }

    #[test]
    fn bottleneck_shape_chain() {
        let cfg = NetworkConfig {
            input_dim: 448,
            bottleneck: Some(1),
            ..NetworkConfig::default()
        };
        assert_eq!(cfg.layer_sizes(), vec![448, 400, 400, 400, 1, 400, 400, 2]);
        let model = NetworkModel::init(&cfg).unwrap();
        assert_eq!(model.layer_shapes()[3], (1, 400));
        assert_eq!(model.layer_shapes()[4], (400, 1));
    }

    #[test]
    fn zero_width_rejected() {
        let cfg = NetworkConfig {
            hidden_layers: vec![4, 0],
            ..NetworkConfig::default()
        };
        assert!(matches!(NetworkModel::init(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weights_give_half() {
        let mut model = NetworkModel::init(&small(&[3, 4, 2], 1)).unwrap();
        for l in 0..2 {
            model.weights_mut(l).iter_mut().for_each(|w| *w = 0.0);
        }
        let (out, acts) = model.forward(&[0.3, -2.0, 7.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
        assert!(acts.layers[1].iter().all(|a| *a == 0.0));
        assert!(model.forward(&[1.0]).is_err());
    }

    #[test]
    fn forward_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20 {
            let mut model = NetworkModel::init(&small(&[2, 3, 2], seed)).unwrap();
            for l in 0..2 {
                model
                    .biases_mut(l)
                    .iter_mut()
                    .for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (w0, b0, w1, b1) = (model.weights(0), model.biases(0), model.weights(1), model.biases(1));
            let mut h = [0.0; 3];
            for j in 0..3 {
                let mut z = b0[j];
                for i in 0..2 {
                    z += w0[j * 2 + i] * x[i];
                }
                h[j] = (z.exp() - (-z).exp()) / (z.exp() + (-z).exp());
            }
            let mut expect = [0.0; 2];
            for k in 0..2 {
                let mut z = b1[k];
                for j in 0..3 {
                    z += w1[k * 3 + j] * h[j];
                }
                expect[k] = 1.0 / (1.0 + (-z).exp());
            }
            let (out, _) = model.forward(&x).unwrap();
            for k in 0..2 {
                assert!((out[k] - expect[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let model = NetworkModel::init(&small(&[3, 4, 2], 2)).unwrap();
        let x = vec![0.1, 0.2, 0.3];
        let (y, _) = model.forward(&x).unwrap();
        let (loss, g) = model.backward(&[Example { input: &x, target: &y }]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g
            .weights
            .iter()
            .flatten()
            .chain(g.biases.iter().flatten())
            .all(|v| *v == 0.0));
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = NetworkModel::init(&small(&[4, 3, 2], 4)).unwrap();
        let (xs, ys) = random_batch(&mut rng, 6, 4);
        let once = examples(&xs, &ys);
        let twice: Vec<_> = once.iter().chain(once.iter()).copied().collect();
        let (_, a) = model.backward(&once).unwrap();
        let (_, b) = model.backward(&twice).unwrap();
        for (x, y) in a.weights.iter().flatten().zip(b.weights.iter().flatten()) {
            assert!((x - y).abs() <= 1e-15 + 1e-12 * x.abs());
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let model = NetworkModel::init(&small(&[5, 4, 4, 2], 8)).unwrap();
        let (xs, ys) = random_batch(&mut rng, 3, 5);
        let batch = examples(&xs, &ys);
        let (_, g) = model.backward(&batch).unwrap();
        let eps = 1e-5;
        for l in 0..3 {
            for i in 0..model.weights(l).len() {
                let mut plus = model.clone();
                plus.weights_mut(l)[i] += eps;
                let mut minus = model.clone();
                minus.weights_mut(l)[i] -= eps;
                let fd = (plus.loss(&batch).unwrap() - minus.loss(&batch).unwrap()) / (2.0 * eps);
                let an = g.weights[l][i];
                assert!((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6) < 1e-5);
            }
        }
    }

    #[test]
    fn plain_step_without_momentum_or_decay() {
        // E(w) = ½ (w - 3)², η = 0.1: w_k = 3 + (w_0 - 3)·0.9^k
        let mut cfg = small(&[1, 1], 0);
        cfg.hidden_layers.clear();
        cfg.output_dim = 1;
        cfg.momentum = 0.0;
        cfg.l2_lambda = 0.0;
        cfg.lr_decay = 1.0;
        cfg.learning_rate = 0.1;
        let mut model = NetworkModel::init(&cfg).unwrap();
        model.weights_mut(0)[0] = 0.0;
        for k in 1..=20 {
            let w = model.weights(0)[0];
            let grads = Gradients {
                weights: vec![vec![w - 3.0]],
                biases: vec![vec![0.0]],
            };
            model.sgd_step(&grads, k).unwrap();
            let expect = 3.0 - 3.0 * 0.9f64.powi(k as i32);
            assert!((model.weights(0)[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_weight_decay_shrinks_geometrically() {
        let mut cfg = small(&[3, 2], 1);
        cfg.hidden_layers.clear();
        cfg.momentum = 0.0;
        cfg.l2_lambda = 0.5;
        cfg.learning_rate = 0.1;
        cfg.lr_decay = 0.9;
        let mut model = NetworkModel::init(&cfg).unwrap();
        let before = model.weights(0).to_vec();
        let zero = Gradients::zeros_like(&model);
        model.sgd_step(&zero, 2).unwrap();
        let factor = 1.0 - 0.1 * 0.81 * 0.5;
        for (a, b) in before.iter().zip(model.weights(0)) {
            assert!((a * factor - b).abs() < 1e-15);
        }
    }

    #[test]
    fn decayed_step_magnitude() {
        let mut cfg = small(&[1, 1], 0);
        cfg.hidden_layers.clear();
        cfg.output_dim = 1;
        cfg.momentum = 0.0;
        cfg.l2_lambda = 0.0;
        cfg.lr_decay = 0.95;
        let mut model = NetworkModel::init(&cfg).unwrap();
        let grads = Gradients {
            weights: vec![vec![1.0]],
            biases: vec![vec![0.0]],
        };
        let before = model.weights(0)[0];
        model.sgd_step(&grads, 10).unwrap();
        let step = before - model.weights(0)[0];
        assert!((step - 0.05 * 0.95f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn early_stopping_rule() {
        let mut s = EarlyStopping::new(3);
        let mut stopped_at = None;
        for (e, loss) in [1.0, 1.1, 1.2, 1.3, 1.4].iter().enumerate() {
            s.observe(*loss);
            if s.should_stop() {
                stopped_at = Some(e + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(4));
        assert_eq!(s.best(), (1, 1.0));
    }

    #[test]
    fn unlimited_patience_runs_every_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = small(&[4, 6, 2], 3);
        cfg.max_epochs = 7;
        cfg.batch_size = 5;
        cfg.early_stop_patience = usize::MAX;
        let (xs, ys) = random_batch(&mut rng, 20, 4);
        let ex = examples(&xs, &ys);
        let mut model = NetworkModel::init(&cfg).unwrap();
        let report = model.train(&ex[..15], &ex[15..]).unwrap();
        assert_eq!(report.epochs_run, 7);
        assert!(!report.stopped_early);
        let min = report
            .loss_curve
            .iter()
            .map(|e| e.validation)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_validation_loss, min);
        // restored weights reproduce the best validation loss
        assert_eq!(model.loss(&ex[15..]).unwrap(), min);
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = small(&[4, 6, 2], 3);
        cfg.batch_size = 4;
        cfg.max_epochs = 5;
        let (xs, ys) = random_batch(&mut rng, 30, 4);
        let ex = examples(&xs, &ys);
        let run = || {
            let mut m = NetworkModel::init(&cfg).unwrap();
            let r = m.train(&ex[..20], &ex[20..]).unwrap();
            (m, r)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn training_rejects_bad_splits() {
        let cfg = small(&[2, 2, 2], 0);
        let mut model = NetworkModel::init(&cfg).unwrap();
        let x = vec![0.0, 1.0];
        let t = vec![1.0, 0.0];
        let ex = [Example { input: &x, target: &t }];
        assert!(matches!(model.train(&ex, &[]), Err(Error::Config(_))));
        assert!(matches!(model.train(&ex, &ex), Err(Error::Config(_))));
    }

    #[test]
    fn argmax_tie_goes_down() {
        assert_eq!(argmax(&[0.8, 0.3]), 0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.3]), 1);
    }

    #[test]
    fn checkpoint_reproduces_predictions() {
        let model = NetworkModel::init(&NetworkConfig {
            bottleneck: Some(2),
            ..small(&[5, 7, 6, 2], 12)
        })
        .unwrap();
        let mut buf = Vec::new();
        model.save_checkpoint(&mut buf).unwrap();
        let loaded = NetworkModel::load_checkpoint(buf.as_slice()).unwrap();
        let x = [0.1, -0.4, 0.9, 0.0, 0.33];
        let a = model.forward(&x).unwrap().0;
        let b = loaded.forward(&x).unwrap().0;
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
