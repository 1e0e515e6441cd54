//! Mirroring neural network: a converging-then-diverging fully connected net
//! trained by online backpropagation to reproduce its input, whose narrowest
//! hidden layer provides the feature code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{affine, euclidean_distance, sigmoid_scalar, Matrix, Rng};

pub const DEFAULT_SUCCESS_FRACTION: f64 = 0.95;
pub const DEFAULT_MAX_EPOCHS: usize = 5000;

/// Activation of the reconstruction layer. Hidden layers are always sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    #[default]
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnnConfig {
    pub layer_dims: Vec<usize>,
    /// Largest input/output euclidean distance at which a sample counts as mirrored.
    pub mirror_threshold: f64,
    pub success_fraction: f64,
    pub learning_rate: f64,
    pub weight_init_lo: f64,
    pub weight_init_hi: f64,
    pub max_epochs: usize,
    pub output_activation: OutputActivation,
}

impl MnnConfig {
    /// Config with the given architecture, mirror threshold and learning
    /// rate; the remaining fields take their defaults.
    pub fn new(layer_dims: Vec<usize>, mirror_threshold: f64, learning_rate: f64) -> Self {
        Self {
            layer_dims,
            mirror_threshold,
            success_fraction: DEFAULT_SUCCESS_FRACTION,
            learning_rate,
            weight_init_lo: -0.25,
            weight_init_hi: 0.25,
            max_epochs: DEFAULT_MAX_EPOCHS,
            output_activation: OutputActivation::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = &self.layer_dims;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if dims.len() < 3 {
            return bad(format!("layer_dims needs at least 3 layers, got {dims:?}"));
        }
        if dims.contains(&0) {
            return bad(format!("layer_dims contains a zero width: {dims:?}"));
        }
        if dims[0] != dims[dims.len() - 1] {
            return bad(format!("layer_dims must mirror (first == last): {dims:?}"));
        }
        let interior = &dims[1..dims.len() - 1];
        let narrowest = *interior.iter().min().expect("at least one interior layer");
        if interior.iter().filter(|&&d| d == narrowest).count() != 1 {
            return bad(format!("layer_dims has no unique narrowest hidden layer: {dims:?}"));
        }
        if narrowest >= dims[0] {
            return bad(format!(
                "bottleneck width {narrowest} must be smaller than input width {}",
                dims[0]
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.mirror_threshold > 0.0 && self.mirror_threshold.is_finite()) {
            return bad(format!("mirror_threshold must be > 0, got {}", self.mirror_threshold));
        }
        if !(self.success_fraction > 0.0 && self.success_fraction <= 1.0) {
            return bad(format!("success_fraction must be in (0, 1], got {}", self.success_fraction));
        }
        if !(self.weight_init_lo <= self.weight_init_hi)
            || !self.weight_init_lo.is_finite()
            || !self.weight_init_hi.is_finite()
        {
            return bad(format!(
                "weight init range [{}, {}] is not a finite interval",
                self.weight_init_lo, self.weight_init_hi
            ));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_dims[0]
    }

    /// Layer index (0 = input) of the narrowest hidden layer.
    pub fn bottleneck_layer(&self) -> usize {
        let last = self.layer_dims.len() - 1;
        (1..last)
            .min_by_key(|&i| self.layer_dims[i])
            .expect("validated config has interior layers")
    }

    pub fn bottleneck_width(&self) -> usize {
        self.layer_dims[self.bottleneck_layer()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mnn {
    config: MnnConfig,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorReport {
    pub epochs_run: usize,
    pub mirrored_fraction: f64,
    pub mean_reconstruction_distance: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub output: Vec<f64>,
    pub code: Vec<f64>,
}

impl Mnn {
    /// Every weight and bias drawn independently from the config's init range.
    pub fn init(config: MnnConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (lo, hi) = (config.weight_init_lo, config.weight_init_hi);
        let draw = |rng: &mut Rng| -> Result<f64> {
            if lo == hi {
                Ok(lo)
            } else {
                rng.uniform(lo, hi)
            }
        };
        let mut weights = Vec::with_capacity(config.layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(config.layer_dims.len() - 1);
        for pair in config.layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let data = (0..fan_in * fan_out)
                .map(|_| draw(rng))
                .collect::<Result<Vec<_>>>()?;
            weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
            biases.push((0..fan_out).map(|_| draw(rng)).collect::<Result<Vec<_>>>()?);
        }
        Ok(Self {
            config,
            weights,
            biases,
        })
    }

    /// Builds a network from explicit parameters, checking every shape.
    pub fn from_parts(config: MnnConfig, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let mnn = Self {
            config,
            weights,
            biases,
        };
        mnn.check()?;
        Ok(mnn)
    }

    fn check(&self) -> Result<()> {
        self.config.validate()?;
        let dims = &self.config.layer_dims;
        let transitions = dims.len() - 1;
        if self.weights.len() != transitions || self.biases.len() != transitions {
            return Err(Error::DimensionMismatch {
                context: "layer count",
                expected: transitions,
                found: self.weights.len().min(self.biases.len()),
            });
        }
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.cols() != dims[i] || w.rows() != dims[i + 1] || w.as_slice().len() != dims[i] * dims[i + 1] {
                return Err(Error::DimensionMismatch {
                    context: "weight matrix shape",
                    expected: dims[i] * dims[i + 1],
                    found: w.as_slice().len(),
                });
            }
            if b.len() != dims[i + 1] {
                return Err(Error::DimensionMismatch {
                    context: "bias length",
                    expected: dims[i + 1],
                    found: b.len(),
                });
            }
        }
        if !self.parameters().iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidConfig("network parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn config(&self) -> &MnnConfig {
        &self.config
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn input_width(&self) -> usize {
        self.config.input_width()
    }

    pub fn code_width(&self) -> usize {
        self.config.bottleneck_width()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    /// All parameters flattened: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// Copy of this network with parameters replaced, in [`Mnn::parameters`] order.
    pub fn with_parameters(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.parameter_count(),
                found: params.len(),
            });
        }
        let mut next = self.clone();
        let mut offset = 0;
        for (w, b) in next.weights.iter_mut().zip(next.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&params[offset..offset + n]);
            offset += n;
            let m = b.len();
            b.copy_from_slice(&params[offset..offset + m]);
            offset += m;
        }
        Ok(next)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "mnn input",
                expected: self.input_width(),
                found: x.len(),
            });
        }
        Ok(())
    }

    fn is_output_layer(&self, transition: usize) -> bool {
        transition == self.weights.len() - 1
    }

    fn activate(&self, transition: usize, z: f64) -> f64 {
        if self.is_output_layer(transition) && self.config.output_activation == OutputActivation::Linear {
            z
        } else {
            sigmoid_scalar(z)
        }
    }

    /// Activations of every layer, input included.
    fn activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.to_vec());
        for (t, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = affine(w, acts.last().expect("non-empty"), b)?;
            acts.push(z.into_iter().map(|v| self.activate(t, v)).collect());
        }
        Ok(acts)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        let mut acts = self.activations(x)?;
        let output = acts.pop().expect("output layer");
        let code = acts.swap_remove(self.config.bottleneck_layer());
        Ok(Forward { output, code })
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output)
    }

    /// Bottleneck activations for `x`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.code)
    }

    pub fn reconstruction_distance(&self, x: &[f64]) -> Result<f64> {
        euclidean_distance(x, &self.reconstruct(x)?)
    }

    pub fn is_mirrored(&self, x: &[f64], threshold: f64) -> Result<bool> {
        Ok(self.reconstruction_distance(x)? <= threshold)
    }

    /// Training loss `½‖output − x‖²`.
    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        let out = self.reconstruct(x)?;
        Ok(0.5 * out.iter().zip(x).map(|(o, t)| (o - t) * (o - t)).sum::<f64>())
    }

    /// Per-layer deltas `∂loss/∂z`, last layer last. Fails on the first
    /// non-finite delta, naming its weight layer.
    fn deltas(&self, acts: &[Vec<f64>], target: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.weights.len();
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n];
        let out = &acts[n];
        let linear_out = self.config.output_activation == OutputActivation::Linear;
        deltas[n - 1] = out
            .iter()
            .zip(target)
            .map(|(&o, &t)| if linear_out { o - t } else { (o - t) * o * (1.0 - o) })
            .collect();
        for t in (0..n - 1).rev() {
            let back = self.weights[t + 1].transpose_mul(&deltas[t + 1])?;
            deltas[t] = back
                .iter()
                .zip(&acts[t + 1])
                .map(|(&g, &a)| g * a * (1.0 - a))
                .collect();
        }
        for (t, d) in deltas.iter().enumerate().rev() {
            if !d.iter().all(|v| v.is_finite()) {
                return Err(Error::NumericFailure { layer: t });
            }
        }
        Ok(deltas)
    }

    /// Analytic gradient of [`Mnn::loss`], flattened like [`Mnn::parameters`].
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let acts = self.activations(x)?;
        let deltas = self.deltas(&acts, x)?;
        let mut grad = Vec::with_capacity(self.parameter_count());
        for (t, delta) in deltas.iter().enumerate() {
            for &d in delta {
                grad.extend(acts[t].iter().map(|a| d * a));
            }
            grad.extend_from_slice(delta);
        }
        Ok(grad)
    }

    /// Central-difference estimate of the loss gradient, one parameter at a time.
    pub fn numeric_gradient(&self, x: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        if !(epsilon > 0.0) {
            return Err(Error::Precondition(format!("epsilon must be > 0, got {epsilon}")));
        }
        self.check_input(x)?;
        let base = self.parameters();
        let mut probe = self.clone();
        let mut grad = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            probe.set_parameter(i, base[i] + epsilon);
            let plus = probe.loss(x)?;
            probe.set_parameter(i, base[i] - epsilon);
            let minus = probe.loss(x)?;
            probe.set_parameter(i, base[i]);
            grad.push((plus - minus) / (2.0 * epsilon));
        }
        Ok(grad)
    }

    fn set_parameter(&mut self, mut index: usize, value: f64) {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            if index < n {
                w.as_mut_slice()[index] = value;
                return;
            }
            index -= n;
            if index < b.len() {
                b[index] = value;
                return;
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }

    /// One in-place gradient-descent update against `x` as its own target.
    /// Parameters are untouched when the gradient is not finite.
    pub fn step(&mut self, x: &[f64], learning_rate: f64) -> Result<()> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Precondition(format!(
                "learning_rate must be finite and >= 0, got {learning_rate}"
            )));
        }
        let acts = self.activations(x)?;
        let deltas = self.deltas(&acts, x)?;
        if learning_rate == 0.0 {
            return Ok(());
        }
        for (t, delta) in deltas.iter().enumerate() {
            let input = &acts[t];
            let cols = input.len();
            let w = self.weights[t].as_mut_slice();
            for (r, &d) in delta.iter().enumerate() {
                let scaled = learning_rate * d;
                for (wv, &a) in w[r * cols..(r + 1) * cols].iter_mut().zip(input) {
                    *wv -= scaled * a;
                }
            }
            for (bv, &d) in self.biases[t].iter_mut().zip(delta) {
                *bv -= learning_rate * d;
            }
        }
        Ok(())
    }

    /// Functional form of [`Mnn::step`]: the updated network and its
    /// post-update reconstruction distance on `x`.
    pub fn backprop_step(&self, x: &[f64], learning_rate: f64) -> Result<(Mnn, f64)> {
        let mut next = self.clone();
        next.step(x, learning_rate)?;
        let distance = next.reconstruction_distance(x)?;
        Ok((next, distance))
    }

    /// Mirror statistics of this network over `data`.
    pub fn mirror_stats(&self, data: &[Vec<f64>], threshold: f64) -> Result<(f64, f64)> {
        let mut mirrored = 0usize;
        let mut total = 0.0;
        for x in data {
            let d = self.reconstruction_distance(x)?;
            total += d;
            if d <= threshold {
                mirrored += 1;
            }
        }
        let n = data.len().max(1) as f64;
        Ok((mirrored as f64 / n, total / n))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mnn: Mnn = serde_json::from_str(text)?;
        mnn.check()?;
        Ok(mnn)
    }
}

/// Presents the whole ensemble repeatedly (shuffled, one online update per
/// sample) until at least `success_fraction` of the samples are mirrored or
/// `max_epochs` runs out.
///
/// On budget exhaustion the error carries both the report and the network.
pub fn train_mirror(
    mnn: Mnn,
    data: &[Vec<f64>],
    config: &MnnConfig,
    rng: &mut Rng,
) -> Result<(Mnn, MirrorReport)> {
    config.validate()?;
    if config.layer_dims != mnn.config.layer_dims {
        return Err(Error::InvalidConfig(format!(
            "training config dims {:?} do not match network dims {:?}",
            config.layer_dims, mnn.config.layer_dims
        )));
    }
    if data.is_empty() {
        return Err(Error::Precondition("mirror training needs at least one sample".into()));
    }
    for x in data {
        mnn.check_input(x)?;
    }

    let mut mnn = mnn;
    mnn.config = config.clone();
    let report_at = |mnn: &Mnn, epochs_run: usize| -> Result<MirrorReport> {
        let (mirrored_fraction, mean_reconstruction_distance) = mnn.mirror_stats(data, config.mirror_threshold)?;
        Ok(MirrorReport {
            epochs_run,
            mirrored_fraction,
            mean_reconstruction_distance,
            converged: mirrored_fraction >= config.success_fraction,
        })
    };

    let mut report = report_at(&mnn, 0)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.max_epochs {
        if report.converged {
            break;
        }
        rng.shuffle(&mut order);
        for &i in &order {
            mnn.step(&data[i], config.learning_rate)?;
        }
        report = report_at(&mnn, epoch)?;
    }
    if report.converged {
        Ok((mnn, report))
    } else {
        Err(Error::TrainingFailure {
            report,
            mnn: Box::new(mnn),
        })
    }
}
