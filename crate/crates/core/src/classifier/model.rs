//! Per-point shared MLP, symmetric max-pool, and a small dense head producing
//! two logits (HC, PD). Gradients are written out by hand.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::AttributedPoint;
use crate::signal::normalize_patch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
    }

    /// Multiplies `grad` by the derivative, given the post-activation values.
    fn backprop(self, grad: &mut Array2<f64>, post: &Array2<f64>) {
        if self == Activation::Relu {
            grad.zip_mut_with(post, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    /// Widths of the shared per-point layers; the last one is the pooled width.
    pub point_widths: Vec<usize>,
    /// Hidden widths of the head; a final 2-logit layer is always appended.
    pub head_widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: 3,
            point_widths: vec![64, 128, 256],
            head_widths: vec![128],
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    fn point_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input_channels;
        for &w in &self.point_widths {
            dims.push((prev, w));
            prev = w;
        }
        dims
    }

    fn head_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = *self.point_widths.last().unwrap_or(&self.input_channels);
        for &w in &self.head_widths {
            dims.push((prev, w));
            prev = w;
        }
        dims.push((prev, 2));
        dims
    }

    fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.point_widths.iter().chain(&self.head_widths).any(|&w| w == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in x out`, so a layer maps row vectors: `y = x W + b`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..bound));
        Dense { weight, bias }
    }

    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight);
        z += &self.bias;
        z
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// A patch encoded for the network: normalized features, row-major
/// `points x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPatch {
    pub data: Vec<f64>,
    pub points: usize,
    pub channels: usize,
}

impl EncodedPatch {
    /// Normalizes the points and lays out their features.
    pub fn from_points(points: &[AttributedPoint]) -> Self {
        Self::from_normalized(&normalize_patch(points))
    }

    /// Lays out already-normalized points.
    pub fn from_normalized(points: &[AttributedPoint]) -> Self {
        let channels = points.first().map_or(3, AttributedPoint::channels);
        let mut data = Vec::with_capacity(points.len() * channels);
        for p in points {
            p.extend_features(&mut data);
        }
        EncodedPatch { data, points: points.len(), channels }
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.points, self.channels), &self.data)
            .expect("encoded patch shape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSetModel {
    pub config: ModelConfig,
    pub point_layers: Vec<Dense>,
    /// Hidden head layers followed by the output layer.
    pub head_layers: Vec<Dense>,
}

/// Parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub point_layers: Vec<Dense>,
    pub head_layers: Vec<Dense>,
}

impl Gradients {
    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.point_layers.iter().chain(&self.head_layers)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Region {
    active: Vec<bool>,
    argmax: Vec<usize>,
}

/// Intermediate values kept for the backward pass.
struct Trace {
    points: usize,
    /// Stacked patch features, `(batch * points) x channels`.
    input: Array2<f64>,
    /// Post-activation outputs of each point layer, `rows x width`.
    point_acts: Vec<Array2<f64>>,
    /// Row index (within the patch) of the pooled maximum, `batch x width`.
    argmax: Array2<usize>,
    /// Pooled features followed by each hidden head activation.
    head_inputs: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

pub(crate) fn softmax_pd(l_hc: f64, l_pd: f64) -> f64 {
    // 1 / (1 + e^(l_hc - l_pd)), stable for either sign.
    let d = l_pd - l_hc;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// `-ln softmax(logits)[target]` for two classes.
pub(crate) fn cross_entropy(l_hc: f64, l_pd: f64, pd: bool) -> f64 {
    let (own, other) = if pd { (l_pd, l_hc) } else { (l_hc, l_pd) };
    let m = own.max(other);
    (m + ((own - m).exp() + (other - m).exp()).ln()) - own
}

impl PointSetModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let point_layers = config
            .point_dims()
            .into_iter()
            .map(|(i, o)| Dense::init(i, o, &mut rng))
            .collect();
        let head_layers = config
            .head_dims()
            .into_iter()
            .map(|(i, o)| Dense::init(i, o, &mut rng))
            .collect();
        Ok(PointSetModel { config, point_layers, head_layers })
    }

    /// Zeroes the output layer, so every input gets equal logits.
    pub fn zero_output_layer(&mut self) {
        if let Some(last) = self.head_layers.last_mut() {
            last.weight.fill(0.0);
            last.bias.fill(0.0);
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.point_layers.iter().chain(&self.head_layers)
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.point_layers.iter_mut().chain(self.head_layers.iter_mut())
    }

    pub(crate) fn zero_gradients(&self) -> Gradients {
        let zeros = |layers: &[Dense]| {
            layers
                .iter()
                .map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect()
        };
        Gradients {
            point_layers: zeros(&self.point_layers),
            head_layers: zeros(&self.head_layers),
        }
    }

    fn check_batch(&self, patches: &[&EncodedPatch]) -> Result<usize> {
        let first = patches
            .first()
            .ok_or_else(|| Error::invalid("empty batch"))?;
        for p in patches {
            if p.channels != self.config.input_channels {
                return Err(Error::ChannelMismatch {
                    expected: self.config.input_channels,
                    got: p.channels,
                });
            }
            if p.points != first.points || p.points == 0 {
                return Err(Error::invalid("patches in a batch must share a non-zero point count"));
            }
        }
        Ok(first.points)
    }

    fn run(&self, patches: &[&EncodedPatch]) -> Result<Trace> {
        let points = self.check_batch(patches)?;
        let batch = patches.len();
        let channels = self.config.input_channels;
        let mut stacked = Vec::with_capacity(batch * points * channels);
        for p in patches {
            stacked.extend_from_slice(&p.data);
        }
        let input = Array2::from_shape_vec((batch * points, channels), stacked)
            .map_err(|e| Error::Numeric(e.to_string()))?;

        let act = self.config.activation;
        let mut point_acts: Vec<Array2<f64>> = Vec::with_capacity(self.point_layers.len());
        for layer in &self.point_layers {
            let prev = point_acts.last().unwrap_or(&input);
            let mut z = layer.forward(&prev.view());
            act.apply(&mut z);
            point_acts.push(z);
        }
        let last = point_acts.last().unwrap_or(&input);
        let width = last.ncols();

        let mut pooled = Array2::<f64>::zeros((batch, width));
        let mut argmax = Array2::<usize>::zeros((batch, width));
        for b in 0..batch {
            let block = last.slice(ndarray::s![b * points..(b + 1) * points, ..]);
            for c in 0..width {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for (r, &v) in block.column(c).iter().enumerate() {
                    if v > best {
                        best = v;
                        arg = r;
                    }
                }
                pooled[[b, c]] = best;
                argmax[[b, c]] = arg;
            }
        }

        let mut head_inputs = vec![pooled];
        let n_head = self.head_layers.len();
        let mut logits = None;
        for (k, layer) in self.head_layers.iter().enumerate() {
            let mut z = layer.forward(&head_inputs[k].view());
            if k + 1 < n_head {
                act.apply(&mut z);
                head_inputs.push(z);
            } else {
                logits = Some(z);
            }
        }
        let logits = logits.expect("head has an output layer");
        Ok(Trace { points, input, point_acts, argmax, head_inputs, logits })
    }

    /// Raw `(HC, PD)` logits for each patch.
    pub fn logits(&self, patches: &[&EncodedPatch]) -> Result<Vec<[f64; 2]>> {
        let trace = self.run(patches)?;
        Ok(trace
            .logits
            .rows()
            .into_iter()
            .map(|r| [r[0], r[1]])
            .collect())
    }

    /// PD probability for each patch in the batch.
    pub fn forward_batch(&self, patches: &[&EncodedPatch]) -> Result<Vec<f64>> {
        Ok(self
            .logits(patches)?
            .into_iter()
            .map(|[a, b]| softmax_pd(a, b))
            .collect())
    }

    /// PD probability of one normalized patch.
    pub fn forward(&self, patch: &EncodedPatch) -> Result<f64> {
        Ok(self.forward_batch(&[patch])?[0])
    }

    /// Probabilities for an arbitrary number of equally sized patches,
    /// evaluated in chunks to bound memory.
    pub fn predict(&self, patches: &[EncodedPatch]) -> Result<Vec<f64>> {
        const CHUNK: usize = 32;
        let mut out = Vec::with_capacity(patches.len());
        for chunk in patches.chunks(CHUNK) {
            let refs: Vec<&EncodedPatch> = chunk.iter().collect();
            out.extend(self.forward_batch(&refs)?);
        }
        Ok(out)
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, patches: &[&EncodedPatch], labels: &[bool]) -> Result<f64> {
        if patches.len() != labels.len() {
            return Err(Error::LengthMismatch { expected: patches.len(), got: labels.len() });
        }
        let trace = self.run(patches)?;
        Ok(mean_cross_entropy(&trace.logits, labels))
    }

    /// Single-patch loss together with its linear region: which ReLUs are
    /// active and which rows win the pooling. Within one region the loss is
    /// a smooth function of the parameters.
    pub(crate) fn loss_and_region(&self, patch: &EncodedPatch, pd: bool) -> Result<(f64, Region)> {
        let trace = self.run(&[patch])?;
        let mut active = Vec::new();
        if self.config.activation == Activation::Relu {
            for a in trace.point_acts.iter().chain(&trace.head_inputs[1..]) {
                active.extend(a.iter().map(|&v| v > 0.0));
            }
        }
        let region = Region { active, argmax: trace.argmax.iter().copied().collect() };
        Ok((mean_cross_entropy(&trace.logits, &[pd]), region))
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        patches: &[&EncodedPatch],
        labels: &[bool],
    ) -> Result<(f64, Gradients, Vec<f64>)> {
        if patches.len() != labels.len() {
            return Err(Error::LengthMismatch { expected: patches.len(), got: labels.len() });
        }
        let trace = self.run(patches)?;
        let batch = patches.len();
        let loss = mean_cross_entropy(&trace.logits, labels);
        let probs: Vec<f64> = trace
            .logits
            .rows()
            .into_iter()
            .map(|r| softmax_pd(r[0], r[1]))
            .collect();

        // d loss / d logits = (softmax - onehot) / batch
        let mut grad = Array2::<f64>::zeros((batch, 2));
        for (b, (&p, &pd)) in probs.iter().zip(labels).enumerate() {
            let target = if pd { 1.0 } else { 0.0 };
            grad[[b, 1]] = (p - target) / batch as f64;
            grad[[b, 0]] = -grad[[b, 1]];
        }

        let act = self.config.activation;
        let mut grads = self.zero_gradients();
        for k in (0..self.head_layers.len()).rev() {
            let input = &trace.head_inputs[k];
            grads.head_layers[k].weight = input.t().dot(&grad);
            grads.head_layers[k].bias = grad.sum_axis(Axis(0));
            let mut upstream = grad.dot(&self.head_layers[k].weight.t());
            if k > 0 {
                act.backprop(&mut upstream, input);
            }
            grad = upstream;
        }

        // Route pooled gradients to the arg-max rows.
        let last = trace.point_acts.last().unwrap_or(&trace.input);
        let mut grad_points = Array2::<f64>::zeros(last.raw_dim());
        for b in 0..batch {
            for c in 0..last.ncols() {
                let row = b * trace.points + trace.argmax[[b, c]];
                grad_points[[row, c]] += grad[[b, c]];
            }
        }
        for k in (0..self.point_layers.len()).rev() {
            act.backprop(&mut grad_points, &trace.point_acts[k]);
            let input = if k == 0 { &trace.input } else { &trace.point_acts[k - 1] };
            grads.point_layers[k].weight = input.t().dot(&grad_points);
            grads.point_layers[k].bias = grad_points.sum_axis(Axis(0));
            if k > 0 {
                grad_points = grad_points.dot(&self.point_layers[k].weight.t());
            }
        }
        Ok((loss, grads, probs))
    }
}

fn mean_cross_entropy(logits: &Array2<f64>, labels: &[bool]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(r, &pd)| cross_entropy(r[0], r[1], pd))
        .sum();
    total / labels.len() as f64
}
