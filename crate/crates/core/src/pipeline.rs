//! End-to-end classifier: CNN compressor → angle projector → circuit (or its
//! surrogate) → softmax head, trained with cross-entropy under AdamW and a
//! cosine learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::ansatz::{CircuitSpec, MeasurementModel, ParamVector};
use crate::data::{Dataset, Image};
use crate::error::{Error, Result};
use crate::gradcheck::jacobian;
use crate::nn::{Activation, Dense, Mlp};
use crate::rng::{derive_seed, stream};
use crate::surrogate::{sample_params, FitConfig, SampleBatch, SurrogateNet};

/// Probabilities are floored here before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// `−ln max(probs[label], 1e-12)`
pub fn ce_loss(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or(Error::Index {
        index: label,
        len: probs.len(),
    })?;
    Ok(-libm::log(p.max(PROB_FLOOR)))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `η₀ (1 + cos(π · step / total)) / 2`
pub fn cosine_lr(step: u64, total: u64, eta0: f64) -> f64 {
    if total == 0 {
        return eta0;
    }
    let frac = step.min(total) as f64 / total as f64;
    eta0 * (1.0 + libm::cos(PI * frac)) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 3e-4,
        }
    }
}

/// First and second moments, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn for_shapes(lens: &[usize]) -> Self {
        AdamState {
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// Bias-corrected Adam step followed by decoupled decay `p ← p (1 − ηλ)`.
pub fn adamw_update(
    params: Vec<&mut [f64]>,
    grads: Vec<&[f64]>,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension {
            expected: state.m.len(),
            found: params.len(),
        });
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    let decay = 1.0 - lr * cfg.weight_decay;
    for (((p, g), m), v) in params
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::Dimension {
                expected: m.len(),
                found: p.len(),
            });
        }
        for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / (libm::sqrt(*v / c2) + cfg.eps);
            *p *= decay;
        }
    }
    Ok(())
}

/// 3×3 convolution, stride 1, zero padding 1, channels-first layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let a = libm::sqrt(6.0 / (9 * in_channels) as f64);
        Conv2d {
            in_channels,
            out_channels,
            weights: (0..out_channels * in_channels * 9)
                .map(|_| rng.random_range(-a..a))
                .collect(),
            bias: vec![0.0; out_channels],
        }
    }

    fn zeroed(&self) -> Conv2d {
        Conv2d {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.out_channels * h * w];
        for o in 0..self.out_channels {
            let out = &mut y[o * h * w..(o + 1) * h * w];
            out.iter_mut().for_each(|v| *v = self.bias[o]);
            for i in 0..self.in_channels {
                let xin = &x[i * h * w..(i + 1) * h * w];
                let k = &self.weights[(o * self.in_channels + i) * 9..][..9];
                for r in 0..h {
                    for c in 0..w {
                        let mut acc = 0.0;
                        for dr in 0..3 {
                            let rr = r + dr;
                            if rr == 0 || rr > h {
                                continue;
                            }
                            for dc in 0..3 {
                                let cc = c + dc;
                                if cc == 0 || cc > w {
                                    continue;
                                }
                                acc += k[dr * 3 + dc] * xin[(rr - 1) * w + cc - 1];
                            }
                        }
                        out[r * w + c] += acc;
                    }
                }
            }
        }
        y
    }

    /// Accumulates weight gradients and returns `∂/∂x`.
    pub fn backward(&self, x: &[f64], h: usize, w: usize, dy: &[f64], grad: &mut Conv2d) -> Vec<f64> {
        let mut dx = vec![0.0; x.len()];
        for o in 0..self.out_channels {
            let d = &dy[o * h * w..(o + 1) * h * w];
            grad.bias[o] += d.iter().sum::<f64>();
            for i in 0..self.in_channels {
                let base = (o * self.in_channels + i) * 9;
                let xin = &x[i * h * w..(i + 1) * h * w];
                let dxin = &mut dx[i * h * w..(i + 1) * h * w];
                for r in 0..h {
                    for c in 0..w {
                        let g = d[r * w + c];
                        if g == 0.0 {
                            continue;
                        }
                        for dr in 0..3 {
                            let rr = r + dr;
                            if rr == 0 || rr > h {
                                continue;
                            }
                            for dc in 0..3 {
                                let cc = c + dc;
                                if cc == 0 || cc > w {
                                    continue;
                                }
                                let at = (rr - 1) * w + cc - 1;
                                grad.weights[base + dr * 3 + dc] += g * xin[at];
                                dxin[at] += g * self.weights[base + dr * 3 + dc];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// 2×2 max-pool; returns the pooled map and the winning input index of
/// every output cell.
fn max_pool2(x: &[f64], channels: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(channels * oh * ow);
    let mut idx = Vec::with_capacity(channels * oh * ow);
    for ch in 0..channels {
        for r in 0..oh {
            for c in 0..ow {
                let mut best = ch * h * w + 2 * r * w + 2 * c;
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let at = ch * h * w + (2 * r + dr) * w + 2 * c + dc;
                    if x[at] > x[best] {
                        best = at;
                    }
                }
                y.push(x[best]);
                idx.push(best);
            }
        }
    }
    (y, idx)
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Two blocks of conv3×3 → ReLU → max-pool 2×2, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Compressor {
    pub side: usize,
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

#[derive(Debug, Clone)]
pub struct CompressorTrace {
    x: Vec<f64>,
    a1: Vec<f64>,
    idx1: Vec<usize>,
    p1: Vec<f64>,
    a2: Vec<f64>,
    idx2: Vec<usize>,
}

impl Compressor {
    pub fn new<R: Rng + ?Sized>(side: usize, channels: usize, c1: usize, c2: usize, rng: &mut R) -> Result<Self> {
        if side == 0 || side % 4 != 0 {
            return Err(Error::Config("compressor input side must be a positive multiple of 4".into()));
        }
        if channels == 0 || c1 == 0 || c2 == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(Compressor {
            side,
            conv1: Conv2d::new(channels, c1, rng),
            conv2: Conv2d::new(c1, c2, rng),
        })
    }

    pub fn feature_len(&self) -> usize {
        self.conv2.out_channels * (self.side / 4) * (self.side / 4)
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, CompressorTrace) {
        let s = self.side;
        let mut a1 = self.conv1.forward(x, s, s);
        relu(&mut a1);
        let (p1, idx1) = max_pool2(&a1, self.conv1.out_channels, s, s);
        let mut a2 = self.conv2.forward(&p1, s / 2, s / 2);
        relu(&mut a2);
        let (p2, idx2) = max_pool2(&a2, self.conv2.out_channels, s / 2, s / 2);
        (
            p2,
            CompressorTrace {
                x: x.to_vec(),
                a1,
                idx1,
                p1,
                a2,
                idx2,
            },
        )
    }

    pub fn backward(&self, tr: &CompressorTrace, dfeat: &[f64], grad: &mut Compressor) {
        let s = self.side;
        let mut da2 = vec![0.0; tr.a2.len()];
        for (&i, d) in tr.idx2.iter().zip(dfeat) {
            da2[i] += d;
        }
        da2.iter_mut().zip(&tr.a2).for_each(|(d, a)| {
            if *a <= 0.0 {
                *d = 0.0
            }
        });
        let dp1 = self.conv2.backward(&tr.p1, s / 2, s / 2, &da2, &mut grad.conv2);
        let mut da1 = vec![0.0; tr.a1.len()];
        for (&i, d) in tr.idx1.iter().zip(&dp1) {
            da1[i] += d;
        }
        da1.iter_mut().zip(&tr.a1).for_each(|(d, a)| {
            if *a <= 0.0 {
                *d = 0.0
            }
        });
        self.conv1.backward(&tr.x, s, s, &da1, &mut grad.conv1);
    }

    fn zeroed(&self) -> Compressor {
        Compressor {
            side: self.side,
            conv1: self.conv1.zeroed(),
            conv2: self.conv2.zeroed(),
        }
    }
}

/// Image pixels in channels-first order.
pub fn image_to_chw(image: &Image) -> Vec<f64> {
    let (h, w, c) = (image.height, image.width, image.channels);
    let mut out = vec![0.0; h * w * c];
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                out[ch * h * w + r * w + col] = image.get(r, col, ch);
            }
        }
    }
    out
}

/// Classical weights of the classifier: compressor, two-layer projector with
/// `π·tanh` output, and a dense head over the measurement vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub compressor: Compressor,
    pub projector: Mlp,
    pub head: Dense,
}

/// Per-sample activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ClassicalTrace {
    compressor: CompressorTrace,
    projector: Vec<Vec<f64>>,
}

impl PipelineModel {
    pub fn new(arch: &Architecture, p: usize, d: usize, seed: u64) -> Result<Self> {
        let compressor = Compressor::new(
            arch.image_side,
            arch.channels,
            arch.conv1,
            arch.conv2,
            &mut stream(seed, 1),
        )?;
        let projector = Mlp::new(
            &[compressor.feature_len(), arch.projector_hidden, p],
            &[Activation::Tanh, Activation::Tanh],
            &mut stream(seed, 2),
        )?;
        if arch.classes < 2 {
            return Err(Error::Config("a classifier needs at least two classes".into()));
        }
        let head = Dense::new(d, arch.classes, &mut stream(seed, 3));
        Ok(PipelineModel {
            compressor,
            projector,
            head,
        })
    }

    pub fn num_angles(&self) -> usize {
        self.projector.outputs()
    }

    pub fn num_classes(&self) -> usize {
        self.head.outputs
    }

    /// `Γ(C(x))`, angles in `(−π, π)`.
    pub fn angles(&self, x: &[f64]) -> (Vec<f64>, ClassicalTrace) {
        let (feat, ctr) = self.compressor.forward(x);
        let ptr = self.projector.trace(&feat);
        let theta = ptr.last().unwrap().iter().map(|v| PI * v).collect();
        (
            theta,
            ClassicalTrace {
                compressor: ctr,
                projector: ptr,
            },
        )
    }

    /// Pushes `∂L/∂θ` back through the projector and compressor.
    pub fn backward_angles(&self, tr: &ClassicalTrace, dtheta: &[f64], grad: &mut PipelineModel) {
        let dy: Vec<f64> = dtheta.iter().map(|g| PI * g).collect();
        let dfeat = self.projector.backward(&tr.projector, &dy, &mut grad.projector);
        self.compressor.backward(&tr.compressor, &dfeat, &mut grad.compressor);
    }

    pub fn head_probs(&self, m: &[f64]) -> Vec<f64> {
        softmax(&self.head.forward(m))
    }

    /// Cross-entropy at `m` and its gradient with respect to `m`; head
    /// gradients (scaled by `weight`) accumulate into `grad`.
    pub fn head_backward(&self, m: &[f64], label: usize, weight: f64, grad: &mut PipelineModel) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let probs = self.head_probs(m);
        let loss = ce_loss(&probs, label)?;
        let mut dlogits = probs.clone();
        dlogits[label] -= 1.0;
        dlogits.iter_mut().for_each(|v| *v *= weight);
        let dm = self.head.backward(m, &dlogits, &mut grad.head);
        Ok((loss, probs, dm))
    }

    pub fn zeroed(&self) -> PipelineModel {
        PipelineModel {
            compressor: self.compressor.zeroed(),
            projector: self.projector.zeroed(),
            head: self.head.zeroed(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = vec![
            &self.compressor.conv1.weights,
            &self.compressor.conv1.bias,
            &self.compressor.conv2.weights,
            &self.compressor.conv2.bias,
        ];
        t.extend(self.projector.tensors());
        t.push(&self.head.weights);
        t.push(&self.head.bias);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = vec![
            &mut self.compressor.conv1.weights,
            &mut self.compressor.conv1.bias,
            &mut self.compressor.conv2.weights,
            &mut self.compressor.conv2.bias,
        ];
        t.extend(self.projector.tensors_mut());
        t.push(&mut self.head.weights);
        t.push(&mut self.head.bias);
        t
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// What stands in for the circuit in a forward pass.
pub enum Stage<'a> {
    Surrogate(&'a SurrogateNet),
    Circuit(&'a dyn MeasurementModel),
}

/// Class distribution for one image.
pub fn forward_pipeline(image: &Image, model: &PipelineModel, stage: Stage<'_>) -> Result<Vec<f64>> {
    let (theta, _) = model.angles(&image_to_chw(image));
    let m = match stage {
        Stage::Surrogate(net) => net.predict(&theta)?,
        Stage::Circuit(c) => c.measure(&theta)?,
    };
    Ok(model.head_probs(&m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub image_side: usize,
    pub channels: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub projector_hidden: usize,
    pub classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            image_side: 8,
            channels: 1,
            conv1: 8,
            conv2: 16,
            projector_hidden: 64,
            classes: 2,
        }
    }
}

/// Surrogate settings inside the classifier loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSettings {
    pub hidden: Vec<usize>,
    /// Extra jittered circuit evaluations per sample and batch.
    pub jitter: usize,
    pub sigma: f64,
    pub fit: FitConfig,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        SurrogateSettings {
            hidden: vec![256, 256],
            jitter: 1,
            sigma: 0.1,
            fit: FitConfig {
                epochs: 40,
                ..FitConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainPath {
    #[default]
    Surrogate,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta0: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub arch: Architecture,
    pub circuit: CircuitSpec,
    pub surrogate: SurrogateSettings,
    pub augment_crop: bool,
    pub augment_flip: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta0: 7e-4,
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 20,
            seed: 0,
            arch: Architecture::default(),
            circuit: CircuitSpec::desk_scale(),
            surrogate: SurrogateSettings::default(),
            augment_crop: false,
            augment_flip: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0) || !(self.adam.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate must be positive and weight decay non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) || !(self.adam.eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.surrogate.sigma >= 0.0) || !(self.surrogate.fit.lr > 0.0) || !(self.surrogate.fit.input_spread > 0.0) {
            return Err(Error::Config("surrogate sigma, fit lr and input spread must be positive".into()));
        }
        if self.arch.image_side % 4 != 0 || self.arch.image_side == 0 {
            return Err(Error::Config("image side must be a positive multiple of 4".into()));
        }
        Ok(())
    }

    pub fn batches_per_epoch(&self, samples: usize) -> u64 {
        samples.div_ceil(self.batch_size) as u64
    }
}

/// Everything a run needs to continue: weights, optimizer moments, the
/// warm-started surrogate and the position in the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub model: PipelineModel,
    pub surrogate: SurrogateNet,
    pub adam: AdamState,
    pub step: u64,
    pub epoch: usize,
}

impl PipelineState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let p = cfg.circuit.param_count();
        let d = cfg.circuit.num_main();
        let model = PipelineModel::new(&cfg.arch, p, d, cfg.seed)?;
        let surrogate = SurrogateNet::new(p, &cfg.surrogate.hidden, d, derive_seed(cfg.seed, 4))?;
        let lens: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        Ok(PipelineState {
            model,
            surrogate,
            adam: AdamState::for_shapes(&lens),
            step: 0,
            epoch: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
    pub surrogate_mse: Option<f64>,
}

fn check_dataset(ds: &Dataset, cfg: &TrainConfig) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset has no samples".into()));
    }
    let (h, w, c) = ds.image_shape().unwrap();
    if h != cfg.arch.image_side || w != cfg.arch.image_side || c != cfg.arch.channels {
        return Err(Error::Config(alloc::format!(
            "images are {h}x{w}x{c}, the model expects {s}x{s}x{}",
            cfg.arch.channels,
            s = cfg.arch.image_side
        )));
    }
    if ds.class_count > cfg.arch.classes {
        return Err(Error::Config("dataset has more classes than the head".into()));
    }
    Ok(())
}

/// Zero-pad by 2 then crop back at a random offset, and/or mirror columns.
fn augment<R: Rng + ?Sized>(x: &mut [f64], channels: usize, side: usize, crop: bool, flip: bool, rng: &mut R) {
    if crop {
        let dr = rng.random_range(0..5i64) as isize - 2;
        let dc = rng.random_range(0..5i64) as isize - 2;
        let src = x.to_vec();
        for ch in 0..channels {
            for r in 0..side {
                for c in 0..side {
                    let (sr, sc) = (r as isize + dr, c as isize + dc);
                    let inside = sr >= 0 && sc >= 0 && (sr as usize) < side && (sc as usize) < side;
                    x[ch * side * side + r * side + c] = if inside {
                        src[ch * side * side + sr as usize * side + sc as usize]
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    if flip && rng.random_bool(0.5) {
        for row in x.chunks_exact_mut(side) {
            row.reverse();
        }
    }
}

struct BatchOutcome {
    grads: PipelineModel,
    loss: f64,
    correct: usize,
    surrogate_mse: Option<f64>,
}

/// One epoch of classifier training. With [`TrainPath::Surrogate`] the
/// circuit is queried at the batch angles (plus jitter), the surrogate is
/// refitted, and gradients flow through the frozen surrogate. With
/// [`TrainPath::Direct`] gradients come from parameter shifts on `circuit`.
///
/// On a non-finite loss the state is left as it was before the failing
/// batch and a divergence error is returned.
pub fn train_epoch_with(
    ds: &Dataset,
    state: &mut PipelineState,
    cfg: &TrainConfig,
    circuit: &dyn MeasurementModel,
    path: TrainPath,
) -> Result<Metrics> {
    check_dataset(ds, cfg)?;
    if circuit.num_params() != state.model.num_angles() || circuit.num_outputs() != state.model.head.inputs {
        return Err(Error::Config("circuit shape does not match the model".into()));
    }
    let epoch = state.epoch;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut shuffle = stream(cfg.seed, 0x1000_0000 + epoch as u64);
    for i in (1..order.len()).rev() {
        let j = shuffle.random_range(0..=i);
        order.swap(i, j);
    }
    let total = cfg.batches_per_epoch(ds.len()) * cfg.epochs as u64;
    let (mut loss_sum, mut correct, mut mse_sum, mut mse_n) = (0.0, 0usize, 0.0, 0usize);
    let mut lr = cosine_lr(state.step, total, cfg.eta0);
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        lr = cosine_lr(state.step, total, cfg.eta0);
        let batch_seed = derive_seed(cfg.seed, ((epoch as u64) << 32) | b as u64);
        let out = match path {
            TrainPath::Surrogate => surrogate_batch(ds, chunk, state, cfg, circuit, batch_seed)?,
            TrainPath::Direct => direct_batch(ds, chunk, state, cfg, circuit, batch_seed)?,
        };
        if !out.loss.is_finite() || !out.grads.is_finite() {
            return Err(Error::Divergence(alloc::format!(
                "non-finite loss at epoch {epoch}, batch {b}"
            )));
        }
        let snapshot = (state.model.clone(), state.adam.clone());
        adamw_update(
            state.model.tensors_mut(),
            out.grads.tensors(),
            &mut state.adam,
            lr,
            &cfg.adam,
        )?;
        if !state.model.is_finite() {
            (state.model, state.adam) = snapshot;
            return Err(Error::Divergence(alloc::format!(
                "non-finite weights after epoch {epoch}, batch {b}"
            )));
        }
        state.step += 1;
        loss_sum += out.loss;
        correct += out.correct;
        if let Some(m) = out.surrogate_mse {
            mse_sum += m;
            mse_n += 1;
        }
    }
    state.epoch += 1;
    Ok(Metrics {
        epoch,
        split: Split::Train,
        loss: loss_sum / ds.len() as f64,
        accuracy: correct as f64 / ds.len() as f64,
        lr,
        surrogate_mse: (mse_n > 0).then(|| mse_sum / mse_n as f64),
    })
}

/// Surrogate-path epoch.
pub fn train_epoch(ds: &Dataset, state: &mut PipelineState, cfg: &TrainConfig, circuit: &dyn MeasurementModel) -> Result<Metrics> {
    train_epoch_with(ds, state, cfg, circuit, TrainPath::Surrogate)
}

/// Parameter-shift baseline epoch.
pub fn train_epoch_direct(
    ds: &Dataset,
    state: &mut PipelineState,
    cfg: &TrainConfig,
    circuit: &dyn MeasurementModel,
) -> Result<Metrics> {
    train_epoch_with(ds, state, cfg, circuit, TrainPath::Direct)
}

fn batch_angles(
    ds: &Dataset,
    chunk: &[usize],
    model: &PipelineModel,
    cfg: &TrainConfig,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<ClassicalTrace>) {
    let mut rng = stream(seed, 0xa6);
    chunk
        .iter()
        .map(|&i| {
            let mut x = image_to_chw(&ds.images[i]);
            if cfg.augment_crop || cfg.augment_flip {
                augment(&mut x, cfg.arch.channels, cfg.arch.image_side, cfg.augment_crop, cfg.augment_flip, &mut rng);
            }
            model.angles(&x)
        })
        .unzip()
}

fn surrogate_batch(
    ds: &Dataset,
    chunk: &[usize],
    state: &mut PipelineState,
    cfg: &TrainConfig,
    circuit: &dyn MeasurementModel,
    seed: u64,
) -> Result<BatchOutcome> {
    let (thetas, traces) = batch_angles(ds, chunk, &state.model, cfg, seed);
    let mut points: Vec<ParamVector> = Vec::with_capacity(thetas.len() * (1 + cfg.surrogate.jitter));
    for (k, theta) in thetas.iter().enumerate() {
        let mut s = sample_params(theta, cfg.surrogate.sigma, cfg.surrogate.jitter, derive_seed(seed, k as u64))?;
        points.append(&mut s);
    }
    let batch = SampleBatch::evaluate(circuit, points)?;
    let mse = state.surrogate.fit(&batch, &cfg.surrogate.fit)?;
    let weight = 1.0 / chunk.len() as f64;
    let mut grads = state.model.zeroed();
    let (mut loss, mut correct) = (0.0, 0);
    for ((&i, theta), tr) in chunk.iter().zip(&thetas).zip(&traces) {
        let (m, strace) = state.surrogate.forward_traced(theta)?;
        let (l, probs, dm) = state.model.head_backward(&m, ds.labels[i], weight, &mut grads)?;
        loss += l;
        correct += usize::from(argmax(&probs) == ds.labels[i]);
        let dtheta = state.surrogate.vjp_traced(&strace, &dm);
        state.model.backward_angles(tr, &dtheta, &mut grads);
    }
    Ok(BatchOutcome {
        grads,
        loss,
        correct,
        surrogate_mse: Some(mse),
    })
}

fn direct_batch(
    ds: &Dataset,
    chunk: &[usize],
    state: &mut PipelineState,
    cfg: &TrainConfig,
    circuit: &dyn MeasurementModel,
    seed: u64,
) -> Result<BatchOutcome> {
    let (thetas, traces) = batch_angles(ds, chunk, &state.model, cfg, seed);
    let pts: Vec<ParamVector> = thetas.iter().map(|t| ParamVector::new(t.clone())).collect();
    let ms = circuit.measure_batch(&pts)?;
    let weight = 1.0 / chunk.len() as f64;
    let mut grads = state.model.zeroed();
    let (mut loss, mut correct) = (0.0, 0);
    for (((&i, theta), tr), m) in chunk.iter().zip(&thetas).zip(&traces).zip(&ms) {
        let (l, probs, dm) = state.model.head_backward(m, ds.labels[i], weight, &mut grads)?;
        loss += l;
        correct += usize::from(argmax(&probs) == ds.labels[i]);
        let mut dtheta = vec![0.0; theta.len()];
        for (j, row) in jacobian(circuit, theta)?.iter().enumerate() {
            dtheta[j] = crate::nn::dot(row, &dm);
        }
        state.model.backward_angles(tr, &dtheta, &mut grads);
    }
    Ok(BatchOutcome {
        grads,
        loss,
        correct,
        surrogate_mse: None,
    })
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
}

/// Accuracy, loss and confusion matrix with the true circuit in the loop.
pub fn evaluate(ds: &Dataset, model: &PipelineModel, circuit: &dyn MeasurementModel) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset has no samples".into()));
    }
    let thetas: Vec<ParamVector> = ds
        .images
        .iter()
        .map(|im| ParamVector::new(model.angles(&image_to_chw(im)).0))
        .collect();
    let ms = circuit.measure_batch(&thetas)?;
    score(ds, model, ms.iter().map(|m| &m[..]))
}

/// As [`evaluate`], with the surrogate standing in for the circuit.
pub fn evaluate_surrogate(ds: &Dataset, model: &PipelineModel, net: &SurrogateNet) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset has no samples".into()));
    }
    let ms = ds
        .images
        .iter()
        .map(|im| net.predict(&model.angles(&image_to_chw(im)).0))
        .collect::<Result<Vec<_>>>()?;
    score(ds, model, ms.iter().map(|m| &m[..]))
}

fn score<'a>(ds: &Dataset, model: &PipelineModel, ms: impl Iterator<Item = &'a [f64]>) -> Result<Evaluation> {
    let c = model.num_classes();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut predictions = Vec::with_capacity(ds.len());
    let mut loss = 0.0;
    for (m, &label) in ms.zip(&ds.labels) {
        let probs = model.head_probs(m);
        loss += ce_loss(&probs, label)?;
        let pred = argmax(&probs);
        confusion[label][pred] += 1;
        predictions.push(pred);
    }
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / ds.len() as f64,
        mean_loss: loss / ds.len() as f64,
        confusion,
        predictions,
    })
}

/// Loss of one labelled image and the gradient of every classical weight,
/// with `circuit` in the loop and circuit derivatives from parameter shifts.
pub fn sample_loss_and_grad(
    image: &Image,
    label: usize,
    model: &PipelineModel,
    circuit: &dyn MeasurementModel,
) -> Result<(f64, PipelineModel)> {
    let (theta, tr) = model.angles(&image_to_chw(image));
    let m = circuit.measure(&theta)?;
    let mut grads = model.zeroed();
    let (loss, _, dm) = model.head_backward(&m, label, 1.0, &mut grads)?;
    let mut dtheta = vec![0.0; theta.len()];
    for (j, row) in jacobian(circuit, &theta)?.iter().enumerate() {
        dtheta[j] = crate::nn::dot(row, &dm);
    }
    model.backward_angles(&tr, &dtheta, &mut grads);
    Ok((loss, grads))
}

/// Loss of one labelled image with `circuit` in the loop.
pub fn sample_loss(image: &Image, label: usize, model: &PipelineModel, circuit: &dyn MeasurementModel) -> Result<f64> {
    ce_loss(&forward_pipeline(image, model, Stage::Circuit(circuit))?, label)
}
