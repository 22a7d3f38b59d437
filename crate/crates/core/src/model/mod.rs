//! The two-branch classifier.
//!
//! ```text
//! image ─ conv 5x5/4 ─ ReLU ─ dropout ─ conv 3x3/2 ─ ReLU ─ dropout ─ flatten ─┐
//! sensors (7) ─────────────────────────────────────────────────────────────── concat ─ dense 128 (linear) ─ dense 7 (softmax)
//! ```
//!
//! The flattened image features come first in the concatenated vector,
//! followed by the seven sensor readings.

mod checkpoint;

use rand::Rng;

use crate::dataset::{ActionLabel, Sample};
use crate::nn::{
    dropout_mask, softmax_in_place, Activation, Conv2d, Dense, GradCheck, NnError, Param, Real, Tensor,
};
use crate::seed;
use crate::sim::{InputMode, Observation, SensorVector, OBS_SIZE};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointError};

pub const DROPOUT_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub filters: usize,
    pub stride: usize,
}

/// Layer sizes. [`Architecture::standard`] is the full-size network;
/// smaller instances exist for gradient checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_size: usize,
    pub in_channels: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub hidden: usize,
    pub sensor_dim: usize,
    pub classes: usize,
}

impl Architecture {
    pub const fn standard(mode: InputMode) -> Self {
        Self {
            input_size: OBS_SIZE,
            in_channels: mode.channels(),
            conv1: ConvSpec { kernel: 5, filters: 16, stride: 4 },
            conv2: ConvSpec { kernel: 3, filters: 32, stride: 2 },
            hidden: 128,
            sensor_dim: SensorVector::LEN,
            classes: ActionLabel::COUNT,
        }
    }

    /// 8×8 input, 2 then 4 filters, 16 hidden units.
    pub const fn tiny(in_channels: usize) -> Self {
        Self {
            input_size: 8,
            in_channels,
            conv1: ConvSpec { kernel: 3, filters: 2, stride: 1 },
            conv2: ConvSpec { kernel: 3, filters: 4, stride: 1 },
            hidden: 16,
            sensor_dim: SensorVector::LEN,
            classes: ActionLabel::COUNT,
        }
    }

    pub const fn conv1_out(&self) -> usize {
        (self.input_size - self.conv1.kernel) / self.conv1.stride + 1
    }

    pub const fn conv2_out(&self) -> usize {
        (self.conv1_out() - self.conv2.kernel) / self.conv2.stride + 1
    }

    /// Width of the flattened second-conv output.
    pub const fn flatten_width(&self) -> usize {
        self.conv2_out() * self.conv2_out() * self.conv2.filters
    }

    /// Width of the first dense layer's input: image features plus sensors.
    pub const fn dense_input_width(&self) -> usize {
        self.flatten_width() + self.sensor_dim
    }

    pub const fn param_count(&self) -> usize {
        let c1 = self.conv1.kernel * self.conv1.kernel * self.in_channels * self.conv1.filters + self.conv1.filters;
        let c2 = self.conv2.kernel * self.conv2.kernel * self.conv1.filters * self.conv2.filters + self.conv2.filters;
        let d1 = self.dense_input_width() * self.hidden + self.hidden;
        let d2 = self.hidden * self.classes + self.classes;
        c1 + c2 + d1 + d2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub mode: InputMode,
    pub seed: u64,
    pub dropout: bool,
    /// When false the sensor inputs are replaced by zeros (ablation).
    pub sensor_branch: bool,
}

impl ModelConfig {
    pub fn new(mode: InputMode, seed: u64) -> Self {
        Self { mode, seed, dropout: true, sensor_branch: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedModel<T> {
    pub arch: Architecture,
    pub mode: InputMode,
    pub sensor_branch: bool,
    pub dropout: bool,
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub dense1: Dense<T>,
    pub dense2: Dense<T>,
}

/// Per-parameter gradient buffers, in the same order as
/// [`MixedModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixedGrads<T> {
    pub buffers: [Vec<T>; 8],
}

impl<T: Real> MixedGrads<T> {
    pub fn add_assign(&mut self, other: &MixedGrads<T>) {
        for (a, b) in self.buffers.iter_mut().zip(&other.buffers) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.buffers.iter().flatten().all(|v| v.is_finite())
    }

    pub fn flatten(&self) -> Vec<T> {
        self.buffers.iter().flatten().copied().collect()
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Vec<T>,
    /// Conv1 output after ReLU, before dropout.
    act1: Vec<T>,
    mask1: Option<Vec<T>>,
    /// Conv2 input (conv1 output after dropout).
    conv2_in: Vec<T>,
    act2: Vec<T>,
    mask2: Option<Vec<T>>,
    /// Flattened conv2 features after dropout, then sensors.
    features: Vec<T>,
    hidden: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T> ForwardCache<T> {
    /// Conv1 activations, HWC.
    pub fn conv1_output(&self) -> &[T] {
        &self.act1
    }

    /// Conv2 activations, HWC.
    pub fn conv2_output(&self) -> &[T] {
        &self.act2
    }

    /// The concatenated dense input: image features, then sensors.
    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn hidden(&self) -> &[T] {
        &self.hidden
    }
}

const PARAM_NAMES: [&str; 8] = [
    "conv1.filters",
    "conv1.bias",
    "conv2.filters",
    "conv2.bias",
    "dense1.weights",
    "dense1.bias",
    "dense2.weights",
    "dense2.bias",
];

fn uniform<T: Real>(n: usize, limit: f64, rng: &mut impl Rng) -> Vec<T> {
    (0..n).map(|_| T::of(rng.random_range(-limit..limit))).collect()
}

/// Scales 8-bit pixels into [0, 1].
pub fn scale_pixels<T: Real>(obs: &Observation) -> Vec<T> {
    let k = 1.0 / 255.0;
    obs.pixels.iter().map(|&p| T::of(f64::from(p) * k)).collect()
}

/// Index of the largest probability; ties go to the lowest code.
pub fn argmax_label<T: Real>(probs: &[T]) -> ActionLabel {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    ActionLabel::from_code(best as u8).expect("seven-way output")
}

impl<T: Real> MixedModel<T> {
    /// Freshly initialized model for the standard architecture.
    pub fn build(config: &ModelConfig) -> Self {
        Self::with_architecture(Architecture::standard(config.mode), config)
    }

    /// He-uniform convolutions, Xavier-uniform dense layers, zero biases.
    pub fn with_architecture(arch: Architecture, config: &ModelConfig) -> Self {
        let (c1, c2) = (arch.conv1, arch.conv2);
        let mut conv1 = Conv2d::zeros(c1.kernel, c1.kernel, arch.in_channels, c1.filters, c1.stride);
        let fan_in = (c1.kernel * c1.kernel * arch.in_channels) as f64;
        conv1.filters.data = uniform(conv1.filters.len(), (6.0 / fan_in).sqrt(), &mut seed::stream(config.seed, &[1]));

        let mut conv2 = Conv2d::zeros(c2.kernel, c2.kernel, c1.filters, c2.filters, c2.stride);
        let fan_in = (c2.kernel * c2.kernel * c1.filters) as f64;
        conv2.filters.data = uniform(conv2.filters.len(), (6.0 / fan_in).sqrt(), &mut seed::stream(config.seed, &[2]));

        let mut dense1 = Dense::zeros(arch.dense_input_width(), arch.hidden, Activation::Linear);
        let limit = (6.0 / (arch.dense_input_width() + arch.hidden) as f64).sqrt();
        dense1.weights.data = uniform(dense1.weights.len(), limit, &mut seed::stream(config.seed, &[3]));

        let mut dense2 = Dense::zeros(arch.hidden, arch.classes, Activation::Softmax);
        let limit = (6.0 / (arch.hidden + arch.classes) as f64).sqrt();
        dense2.weights.data = uniform(dense2.weights.len(), limit, &mut seed::stream(config.seed, &[4]));

        Self {
            arch,
            mode: config.mode,
            sensor_branch: config.sensor_branch,
            dropout: config.dropout,
            conv1,
            conv2,
            dense1,
            dense2,
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count() + self.dense1.param_count() + self.dense2.param_count()
    }

    fn tensors(&self) -> [&Tensor<T>; 8] {
        [
            &self.conv1.filters,
            &self.conv1.bias,
            &self.conv2.filters,
            &self.conv2.bias,
            &self.dense1.weights,
            &self.dense1.bias,
            &self.dense2.weights,
            &self.dense2.bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 8] {
        [
            &mut self.conv1.filters,
            &mut self.conv1.bias,
            &mut self.conv2.filters,
            &mut self.conv2.bias,
            &mut self.dense1.weights,
            &mut self.dense1.bias,
            &mut self.dense2.weights,
            &mut self.dense2.bias,
        ]
    }

    pub fn param_sizes(&self) -> [usize; 8] {
        self.tensors().map(|t| t.len())
    }

    pub fn zero_grads(&self) -> MixedGrads<T> {
        MixedGrads { buffers: self.param_sizes().map(|n| vec![T::zero(); n]) }
    }

    /// Parameters paired with `grads`, for the optimizer.
    pub fn params<'a>(&'a mut self, grads: &'a MixedGrads<T>) -> Vec<Param<'a, T>> {
        self.tensors_mut()
            .into_iter()
            .zip(&grads.buffers)
            .zip(PARAM_NAMES)
            .map(|((t, g), name)| Param { name, value: &mut t.data[..], grad: &g[..] })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> MixedModel<U> {
        let conv = |c: &Conv2d<T>| Conv2d {
            filters: Tensor::new(c.filters.shape(), c.filters.data.iter().map(|v| U::of(v.as_f64())).collect()).unwrap(),
            bias: Tensor::new(c.bias.shape(), c.bias.data.iter().map(|v| U::of(v.as_f64())).collect()).unwrap(),
            stride: c.stride,
        };
        let dense = |d: &Dense<T>| Dense {
            weights: Tensor::new(d.weights.shape(), d.weights.data.iter().map(|v| U::of(v.as_f64())).collect()).unwrap(),
            bias: Tensor::new(d.bias.shape(), d.bias.data.iter().map(|v| U::of(v.as_f64())).collect()).unwrap(),
            activation: d.activation,
        };
        MixedModel {
            arch: self.arch,
            mode: self.mode,
            sensor_branch: self.sensor_branch,
            dropout: self.dropout,
            conv1: conv(&self.conv1),
            conv2: conv(&self.conv2),
            dense1: dense(&self.dense1),
            dense2: dense(&self.dense2),
        }
    }

    fn check_inputs(&self, input: &[T], sensors: &[T]) -> Result<(), NnError> {
        let a = &self.arch;
        let expected = a.input_size * a.input_size * a.in_channels;
        if input.len() != expected {
            return Err(NnError::Shape(format!(
                "image has {} values, model expects {}x{}x{}",
                input.len(),
                a.input_size,
                a.input_size,
                a.in_channels
            )));
        }
        if sensors.len() != a.sensor_dim {
            return Err(NnError::Shape(format!("{} sensor values, expected {}", sensors.len(), a.sensor_dim)));
        }
        Ok(())
    }

    /// Forward pass on a scaled image (`[0, 1]`, HWC). `rng` is only drawn
    /// from in the training phase with dropout enabled.
    pub fn forward_scaled<R: Rng + ?Sized>(
        &self,
        input: Vec<T>,
        sensors: &[T],
        phase: Phase,
        rng: &mut R,
    ) -> Result<ForwardCache<T>, NnError> {
        self.check_inputs(&input, sensors)?;
        let a = &self.arch;
        let (h1, h2) = (a.conv1_out(), a.conv2_out());
        let drop = phase == Phase::Train && self.dropout;

        let mut act1 = vec![T::zero(); h1 * h1 * a.conv1.filters];
        self.conv1.forward_single(&input, a.input_size, a.input_size, &mut act1);
        act1.iter_mut().for_each(|v| *v = v.max(T::zero()));
        let mask1 = drop.then(|| dropout_mask::<T, R>(act1.len(), DROPOUT_RATE, rng));
        let conv2_in = match &mask1 {
            Some(m) => act1.iter().zip(m).map(|(x, m)| *x * *m).collect(),
            None => act1.clone(),
        };

        let mut act2 = vec![T::zero(); h2 * h2 * a.conv2.filters];
        self.conv2.forward_single(&conv2_in, h1, h1, &mut act2);
        act2.iter_mut().for_each(|v| *v = v.max(T::zero()));
        let mask2 = drop.then(|| dropout_mask::<T, R>(act2.len(), DROPOUT_RATE, rng));

        let mut features = Vec::with_capacity(a.dense_input_width());
        match &mask2 {
            Some(m) => features.extend(act2.iter().zip(m).map(|(x, m)| *x * *m)),
            None => features.extend_from_slice(&act2),
        }
        if self.sensor_branch {
            features.extend_from_slice(sensors);
        } else {
            features.extend(std::iter::repeat_n(T::zero(), a.sensor_dim));
        }

        let mut hidden = vec![T::zero(); a.hidden];
        self.dense1.affine_single(&features, &mut hidden);
        let mut logits = vec![T::zero(); a.classes];
        self.dense2.affine_single(&hidden, &mut logits);
        let mut probs = logits.clone();
        softmax_in_place(&mut probs);

        Ok(ForwardCache { input, act1, mask1, conv2_in, act2, mask2, features, hidden, logits, probs })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        image: &Observation,
        sensors: &SensorVector,
        phase: Phase,
        rng: &mut R,
    ) -> Result<ForwardCache<T>, NnError> {
        if image.channels != self.arch.in_channels {
            return Err(NnError::Shape(format!(
                "{}-channel image for a {} model",
                image.channels, self.mode
            )));
        }
        let s: Vec<T> = sensors.0.iter().map(|&v| T::of(f64::from(v))).collect();
        self.forward_scaled(scale_pixels(image), &s, phase, rng)
    }

    /// Deterministic inference-mode class probabilities.
    pub fn probabilities(&self, image: &Observation, sensors: &SensorVector) -> Result<Vec<T>, NnError> {
        Ok(self.forward(image, sensors, Phase::Eval, &mut seed::rng(0))?.probs)
    }

    pub fn predict_label(&self, image: &Observation, sensors: &SensorVector) -> Result<ActionLabel, NnError> {
        Ok(argmax_label(&self.probabilities(image, sensors)?))
    }

    /// Backpropagates `grad_logits` (gradient with respect to the pre-softmax
    /// outputs), accumulating into `grads`. Returns the gradient with respect
    /// to the sensor inputs (zeros when the sensor branch is disabled).
    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &[T], grads: &mut MixedGrads<T>) -> Vec<T> {
        let a = &self.arch;
        let (h1, _) = (a.conv1_out(), a.conv2_out());
        let [g_c1w, g_c1b, g_c2w, g_c2b, g_d1w, g_d1b, g_d2w, g_d2b] = &mut grads.buffers;

        let mut g_hidden = vec![T::zero(); a.hidden];
        self.dense2.backward_single(&cache.hidden, grad_logits, g_d2w, g_d2b, Some(&mut g_hidden));

        let mut g_features = vec![T::zero(); a.dense_input_width()];
        self.dense1.backward_single(&cache.features, &g_hidden, g_d1w, g_d1b, Some(&mut g_features));

        let flat = a.flatten_width();
        let sensor_grad = if self.sensor_branch { g_features[flat..].to_vec() } else { vec![T::zero(); a.sensor_dim] };

        let mut g_act2: Vec<T> = g_features[..flat].to_vec();
        if let Some(m) = &cache.mask2 {
            g_act2.iter_mut().zip(m).for_each(|(g, m)| *g *= *m);
        }
        g_act2.iter_mut().zip(&cache.act2).for_each(|(g, &x)| {
            if x <= T::zero() {
                *g = T::zero();
            }
        });

        let mut g_conv2_in = vec![T::zero(); cache.conv2_in.len()];
        self.conv2.backward_single(&cache.conv2_in, h1, h1, &g_act2, g_c2w, g_c2b, Some(&mut g_conv2_in));
        if let Some(m) = &cache.mask1 {
            g_conv2_in.iter_mut().zip(m).for_each(|(g, m)| *g *= *m);
        }
        g_conv2_in.iter_mut().zip(&cache.act1).for_each(|(g, &x)| {
            if x <= T::zero() {
                *g = T::zero();
            }
        });
        self.conv1.backward_single(&cache.input, a.input_size, a.input_size, &g_conv2_in, g_c1w, g_c1b, None);
        sensor_grad
    }

    /// Gradient of one logit with respect to the sensor inputs, inference mode.
    pub fn sensor_logit_gradient(&self, image: &Observation, sensors: &SensorVector, class: usize) -> Result<Vec<T>, NnError> {
        let cache = self.forward(image, sensors, Phase::Eval, &mut seed::rng(0))?;
        let mut onehot = vec![T::zero(); self.arch.classes];
        onehot[class] = T::one();
        let mut scratch = self.zero_grads();
        Ok(self.backward(&cache, &onehot, &mut scratch))
    }

    /// Forward and backward for one labelled sample under cross-entropy,
    /// with the loss gradient scaled by `scale` (usually 1 / batch size).
    /// Returns the unscaled loss and the probabilities.
    pub fn accumulate_sample<R: Rng + ?Sized>(
        &self,
        sample: &Sample,
        scale: T,
        phase: Phase,
        rng: &mut R,
        grads: &mut MixedGrads<T>,
    ) -> Result<(f64, Vec<T>), NnError> {
        let cache = self.forward(&sample.observation, &sample.sensors, phase, rng)?;
        let label = sample.label as usize;
        let loss = -cache.probs[label].as_f64().max(crate::nn::LOG_CLAMP).ln();
        let mut g = cache.probs.clone();
        g[label] -= T::one();
        g.iter_mut().for_each(|v| *v *= scale);
        self.backward(&cache, &g, grads);
        Ok((loss, cache.probs))
    }
}

/// Builds the standard model.
pub fn build_mixed(config: &ModelConfig) -> MixedModel<f32> {
    MixedModel::build(config)
}

/// Checks every parameter gradient of the shrunken model in 64-bit mode with
/// dropout off, on `examples` random labelled inputs.
///
/// Biases start from small random values instead of zero. With zero biases a
/// patch of dead first-layer units puts second-layer pre-activations exactly
/// on the ReLU kink, where central differences disagree with any subgradient.
pub fn check_tiny_gradients(seed: u64, examples: usize, tolerance: f64) -> crate::nn::GradCheckReport {
    let (mut model, batch) = tiny_gradcheck_setup(seed, examples);
    crate::nn::grad_check(&mut model, &batch[..], tolerance, usize::MAX, seed)
}

/// The model and batch [`check_tiny_gradients`] runs on.
pub fn tiny_gradcheck_setup(seed: u64, examples: usize) -> (MixedModel<f64>, Vec<ScaledExample>) {
    let arch = Architecture::tiny(1);
    let config = ModelConfig { dropout: false, ..ModelConfig::new(InputMode::Gray, seed) };
    let mut model = MixedModel::<f64>::with_architecture(arch, &config);
    let mut rng = seed::stream(seed, &[5]);
    for (i, t) in model.tensors_mut().into_iter().enumerate() {
        if i % 2 == 1 {
            t.data.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
    }
    let batch = (0..examples)
        .map(|_| ScaledExample {
            image: (0..arch.input_size * arch.input_size * arch.in_channels).map(|_| rng.random::<f64>()).collect(),
            sensors: (0..arch.sensor_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            label: rng.random_range(0..arch.classes),
        })
        .collect();
    (model, batch)
}

/// A labelled input already scaled for the network, used by the gradient checker.
#[derive(Debug, Clone)]
pub struct ScaledExample {
    pub image: Vec<f64>,
    pub sensors: Vec<f64>,
    pub label: usize,
}

impl GradCheck for MixedModel<f64> {
    type Batch = [ScaledExample];

    fn num_params(&self) -> usize {
        self.param_count()
    }

    fn param(&self, index: usize) -> f64 {
        let mut i = index;
        for t in self.tensors() {
            if i < t.len() {
                return t.data[i];
            }
            i -= t.len();
        }
        panic!("parameter index {index} out of range");
    }

    fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for t in self.tensors_mut() {
            if i < t.len() {
                t.data[i] = value;
                return;
            }
            i -= t.len();
        }
        panic!("parameter index {index} out of range");
    }

    fn loss(&self, batch: &[ScaledExample]) -> f64 {
        let mut rng = seed::rng(0);
        let total: f64 = batch
            .iter()
            .map(|ex| {
                let c = self.forward_scaled(ex.image.clone(), &ex.sensors, Phase::Eval, &mut rng).unwrap();
                -c.probs[ex.label].max(crate::nn::LOG_CLAMP).ln()
            })
            .sum();
        total / batch.len() as f64
    }

    fn gradient(&self, batch: &[ScaledExample]) -> Vec<f64> {
        let mut rng = seed::rng(0);
        let mut grads = self.zero_grads();
        let scale = 1.0 / batch.len() as f64;
        for ex in batch {
            let c = self.forward_scaled(ex.image.clone(), &ex.sensors, Phase::Eval, &mut rng).unwrap();
            let mut g = c.probs.clone();
            g[ex.label] -= 1.0;
            g.iter_mut().for_each(|v| *v *= scale);
            self.backward(&c, &g, &mut grads);
        }
        grads.flatten()
    }
}

#[cfg(test)]
mod tests;
