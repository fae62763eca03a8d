//! Neural surrogate `S_w(θ) ≈ m(θ)` of the circuit's measurement map, fitted
//! on samples around the current point and differentiated classically in
//! place of the circuit.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ansatz::{MeasurementModel, MeasurementVector, ParamVector};
use crate::error::{Error, Result};
use crate::gradcheck::probe_gradient;
use crate::loss::LossAdapter;
use crate::nn::{Activation, Mlp};
use crate::rng::stream;

const INPUT_SCALE_FLOOR: f64 = 1e-6;
const OUTPUT_SCALE_FLOOR: f64 = 1e-3;

/// `[p, h₁, …, d]` tanh network with affine input and output normalization.
///
/// The network sees `(θ − input_shift) / input_scale` and its raw output `z`
/// is reported as `output_shift + output_scale · z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNet {
    pub mlp: Mlp,
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_shift: Vec<f64>,
    pub output_scale: Vec<f64>,
    /// Set by the first fit. Later fits renormalize without changing the
    /// function so that warm starts survive.
    pub fitted: bool,
}

/// Hidden activations kept from a forward pass, for a later VJP.
#[derive(Debug, Clone)]
pub struct SurrogateTrace(Vec<Vec<f64>>);

impl SurrogateNet {
    pub fn new(p: usize, hidden: &[usize], d: usize, seed: u64) -> Result<Self> {
        let mut sizes = vec![p];
        sizes.extend_from_slice(hidden);
        sizes.push(d);
        let mut acts = vec![Activation::Tanh; hidden.len()];
        acts.push(Activation::Identity);
        let mlp = Mlp::new(&sizes, &acts, &mut stream(seed, 0x5u64))?;
        Ok(SurrogateNet {
            mlp,
            input_shift: vec![0.0; p],
            input_scale: vec![1.0; p],
            output_shift: vec![0.0; d],
            output_scale: vec![1.0; d],
            fitted: false,
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.mlp.sizes()
    }

    pub fn num_params(&self) -> usize {
        self.mlp.inputs()
    }

    pub fn num_outputs(&self) -> usize {
        self.mlp.outputs()
    }

    pub fn is_finite(&self) -> bool {
        self.mlp.is_finite()
            && [&self.input_shift, &self.input_scale, &self.output_shift, &self.output_scale]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn check_input(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::Dimension {
                expected: self.num_params(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    fn normalize(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.input_shift.iter().zip(&self.input_scale))
            .map(|(t, (c, s))| (t - c) / s)
            .collect()
    }

    fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.output_shift.iter().zip(&self.output_scale))
            .map(|(z, (a, r))| a + r * z)
            .collect()
    }

    /// Raw prediction; values may stray slightly outside `[−1, 1]`.
    pub fn predict(&self, theta: &[f64]) -> Result<MeasurementVector> {
        self.check_input(theta)?;
        Ok(MeasurementVector::new(
            self.denormalize(&self.mlp.forward(&self.normalize(theta))),
        ))
    }

    pub fn forward_traced(&self, theta: &[f64]) -> Result<(MeasurementVector, SurrogateTrace)> {
        self.check_input(theta)?;
        let trace = self.mlp.trace(&self.normalize(theta));
        let out = self.denormalize(trace.last().unwrap());
        Ok((MeasurementVector::new(out), SurrogateTrace(trace)))
    }

    /// `(∂S/∂θ)ᵀ upstream` at the traced point.
    pub fn vjp_traced(&self, trace: &SurrogateTrace, upstream: &[f64]) -> Vec<f64> {
        let dz: Vec<f64> = upstream.iter().zip(&self.output_scale).map(|(u, r)| u * r).collect();
        self.mlp
            .backward_input(&trace.0, &dz)
            .iter()
            .zip(&self.input_scale)
            .map(|(g, s)| g / s)
            .collect()
    }

    pub fn vjp(&self, theta: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.num_outputs() {
            return Err(Error::Dimension {
                expected: self.num_outputs(),
                found: upstream.len(),
            });
        }
        let (_, trace) = self.forward_traced(theta)?;
        Ok(self.vjp_traced(&trace, upstream))
    }

    /// Jacobian `∂S_k/∂θ_j`, one row per output.
    pub fn jacobian(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (_, trace) = self.forward_traced(theta)?;
        Ok((0..self.num_outputs())
            .map(|k| {
                let mut e = vec![0.0; self.num_outputs()];
                e[k] = 1.0;
                self.vjp_traced(&trace, &e)
            })
            .collect())
    }

    /// Replaces the normalization constants without changing the function
    /// the net computes.
    pub fn renormalize(
        &mut self,
        input_shift: Vec<f64>,
        input_scale: Vec<f64>,
        output_shift: Vec<f64>,
        output_scale: Vec<f64>,
    ) {
        let first = &mut self.mlp.layers[0];
        for (row, b) in first.weights.chunks_exact_mut(first.inputs).zip(first.bias.iter_mut()) {
            for (i, w) in row.iter_mut().enumerate() {
                *b += *w * (input_shift[i] - self.input_shift[i]) / self.input_scale[i];
                *w *= input_scale[i] / self.input_scale[i];
            }
        }
        let last = self.mlp.layers.last_mut().unwrap();
        for (k, (row, b)) in last
            .weights
            .chunks_exact_mut(last.inputs)
            .zip(last.bias.iter_mut())
            .enumerate()
        {
            let ratio = self.output_scale[k] / output_scale[k];
            row.iter_mut().for_each(|w| *w *= ratio);
            *b = *b * ratio + (self.output_shift[k] - output_shift[k]) / output_scale[k];
        }
        self.input_shift = input_shift;
        self.input_scale = input_scale;
        self.output_shift = output_shift;
        self.output_scale = output_scale;
    }

    /// `(1/2N) Σᵢ ‖S(θᵢ) − mᵢ‖²`
    pub fn mse(&self, batch: &SampleBatch) -> Result<f64> {
        let mut total = 0.0;
        for (theta, target) in &batch.points {
            let s = self.predict(theta)?;
            total += s.iter().zip(target.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / (2.0 * batch.len() as f64))
    }

    /// Fits the net to `batch` by full-batch gradient descent with momentum
    /// on the normalized squared error, then returns the batch MSE. A
    /// blown-up loss restarts the fit at half the rate.
    pub fn fit(&mut self, batch: &SampleBatch, cfg: &FitConfig) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("cannot fit a surrogate to an empty batch".into()));
        }
        batch.check_dims(self.num_params(), self.num_outputs())?;
        if cfg.normalize {
            let (is, mut isc) = column_stats(batch.points.iter().map(|(t, _)| &t[..]), INPUT_SCALE_FLOOR);
            isc.iter_mut().for_each(|s| *s /= cfg.input_spread);
            let (os, osc) = column_stats(batch.points.iter().map(|(_, m)| &m[..]), OUTPUT_SCALE_FLOOR);
            if self.fitted {
                self.renormalize(is, isc, os, osc);
            } else {
                (self.input_shift, self.input_scale) = (is, isc);
                (self.output_shift, self.output_scale) = (os, osc);
            }
        }
        let inputs: Vec<Vec<f64>> = batch.points.iter().map(|(t, _)| self.normalize(t)).collect();
        let targets: Vec<Vec<f64>> = batch
            .points
            .iter()
            .map(|(_, m)| {
                m.iter()
                    .zip(self.output_shift.iter().zip(&self.output_scale))
                    .map(|(v, (a, r))| (v - a) / r)
                    .collect()
            })
            .collect();
        let n = batch.len() as f64;
        // Targets have unit variance per output, so a loss this far above
        // the trivial predictor's means the iteration has blown up.
        let blown = EXPLODED_LOSS * n * self.num_outputs() as f64;
        let start = self.mlp.clone();
        let mut lr = cfg.lr;
        let mut retries = 0;
        let mut velocity = self.mlp.zeroed();
        let mut epoch = 0;
        while epoch <= cfg.epochs {
            let mut grad = self.mlp.zeroed();
            let mut loss = 0.0;
            for (x, y) in inputs.iter().zip(&targets) {
                let trace = self.mlp.trace(x);
                let r: Vec<f64> = trace.last().unwrap().iter().zip(y).map(|(a, b)| a - b).collect();
                loss += 0.5 * r.iter().map(|v| v * v).sum::<f64>();
                self.mlp.backward(&trace, &r, &mut grad);
            }
            if !(loss <= blown) {
                self.mlp = start.clone();
                if retries == MAX_FIT_RETRIES {
                    return Err(Error::Divergence(
                        "surrogate fit blew up at every tried rate; lower the fit learning rate".into(),
                    ));
                }
                retries += 1;
                lr *= 0.5;
                velocity = self.mlp.zeroed();
                epoch = 0;
                continue;
            }
            if epoch == cfg.epochs {
                break;
            }
            epoch += 1;
            for ((w, v), g) in self
                .mlp
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grad.tensors())
            {
                for ((w, v), g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = cfg.momentum * *v - lr * g / n;
                    *w += *v;
                }
            }
        }
        self.fitted = true;
        let mse = self.mse(batch)?;
        if !mse.is_finite() || !self.is_finite() {
            return Err(Error::Divergence(
                "surrogate fit produced non-finite weights; lower the fit learning rate".into(),
            ));
        }
        Ok(mse)
    }
}

/// Halvings of the fit rate tried before a fit is declared divergent.
const MAX_FIT_RETRIES: usize = 8;

/// Per-sample, per-output normalized loss treated as a blow-up.
const EXPLODED_LOSS: f64 = 50.0;

fn column_stats<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, floor: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rows.clone().count() as f64;
    let width = rows.clone().next().map_or(0, |r| r.len());
    let mut mean = vec![0.0; width];
    for r in rows.clone() {
        crate::nn::axpy(1.0 / n, r, &mut mean);
    }
    let mut var = vec![0.0; width];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (x - m) * (x - m) / n;
        }
    }
    let scale = var.iter().map(|v| libm::sqrt(*v).max(floor)).collect();
    (mean, scale)
}

/// Inner-loop settings for [`SurrogateNet::fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Refresh input/output normalization from the batch before fitting.
    pub normalize: bool,
    /// Standard deviation of each normalized input coordinate.
    pub input_spread: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epochs: 300,
            lr: 0.05,
            momentum: 0.9,
            normalize: true,
            input_spread: 0.1,
        }
    }
}

/// Parameter vectors paired with the circuit's measurements there.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleBatch {
    pub points: Vec<(ParamVector, MeasurementVector)>,
}

impl SampleBatch {
    pub fn new(points: Vec<(ParamVector, MeasurementVector)>) -> Result<Self> {
        let batch = SampleBatch { points };
        if let Some((t, m)) = batch.points.first() {
            batch.check_dims(t.len(), m.len())?;
        }
        Ok(batch)
    }

    /// Measures every θ on `model`.
    pub fn evaluate<M: MeasurementModel + ?Sized>(model: &M, thetas: Vec<ParamVector>) -> Result<Self> {
        let targets = model.measure_batch(&thetas)?;
        SampleBatch::new(thetas.into_iter().zip(targets).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extend(&mut self, other: SampleBatch) -> Result<()> {
        if let Some((t, m)) = self.points.first() {
            other.check_dims(t.len(), m.len())?;
        }
        self.points.extend(other.points);
        Ok(())
    }

    fn check_dims(&self, p: usize, d: usize) -> Result<()> {
        for (t, m) in &self.points {
            if t.len() != p {
                return Err(Error::Dimension {
                    expected: p,
                    found: t.len(),
                });
            }
            if m.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: m.len(),
                });
            }
        }
        Ok(())
    }
}

/// `θ_t` followed by `count` draws of `θ_t + σξ`, `ξ ~ N(0, I)`.
pub fn sample_params(theta_t: &[f64], sigma: f64, count: usize, seed: u64) -> Result<Vec<ParamVector>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config("sampling radius must be finite and non-negative".into()));
    }
    let mut rng = stream(seed, 0x5a);
    let mut out = Vec::with_capacity(count + 1);
    out.push(ParamVector::new(theta_t.to_vec()));
    for _ in 0..count {
        out.push(ParamVector::new(
            theta_t
                .iter()
                .map(|t| {
                    let xi: f64 = rng.sample(StandardNormal);
                    t + sigma * xi
                })
                .collect(),
        ));
    }
    Ok(out)
}

/// `∇_θ ℓ(S(θ))` by backpropagation through the net.
pub fn surrogate_grad(net: &SurrogateNet, theta: &[f64], loss: &dyn LossAdapter) -> Result<Vec<f64>> {
    let (m, trace) = net.forward_traced(theta)?;
    let (_, dl_dm) = loss.loss_and_grad(&m);
    Ok(net.vjp_traced(&trace, &dl_dm))
}

/// Step-length bound around the current point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegion {
    pub radius: f64,
    pub shrink: f64,
    pub grow: f64,
    pub max_radius: f64,
}

impl Default for TrustRegion {
    fn default() -> Self {
        TrustRegion {
            radius: 0.3,
            shrink: 0.5,
            grow: 1.2,
            max_radius: 1.0,
        }
    }
}

impl TrustRegion {
    pub fn new(radius: f64, shrink: f64, grow: f64, max_radius: f64) -> Result<Self> {
        let ok = radius > 0.0
            && radius <= max_radius
            && shrink > 0.0
            && shrink < 1.0
            && grow >= 1.0
            && max_radius.is_finite();
        if !ok {
            return Err(Error::Config(
                "trust region needs 0 < radius ≤ max, 0 < shrink < 1 and grow ≥ 1".into(),
            ));
        }
        Ok(TrustRegion {
            radius,
            shrink,
            grow,
            max_radius,
        })
    }

    pub fn on_accept(&mut self) {
        self.radius = (self.radius * self.grow).min(self.max_radius);
    }

    pub fn on_reject(&mut self) {
        self.radius = (self.radius * self.shrink).max(f64::MIN_POSITIVE);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOutcome {
    pub theta_next: ParamVector,
    pub accepted: bool,
    pub loss_before: f64,
    pub loss_after: f64,
    /// Length of the proposed (clamped) step.
    pub step_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Proposes `θ − η g` clipped to the trust radius and keeps it only if the
/// true loss drops. `loss_before` is the true loss at `theta`.
pub fn descent_step_with_grad<F>(
    theta: &[f64],
    grad: &[f64],
    eta: f64,
    trust: &mut TrustRegion,
    loss_before: f64,
    mut true_loss: F,
) -> Result<DescentOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(eta > 0.0) {
        return Err(Error::Config("step size must be positive".into()));
    }
    if grad.len() != theta.len() {
        return Err(Error::Dimension {
            expected: theta.len(),
            found: grad.len(),
        });
    }
    let mut step: Vec<f64> = grad.iter().map(|g| -eta * g).collect();
    let mut step_norm = norm(&step);
    if step_norm == 0.0 {
        return Ok(DescentOutcome {
            theta_next: ParamVector::new(theta.to_vec()),
            accepted: true,
            loss_before,
            loss_after: loss_before,
            step_norm,
        });
    }
    if step_norm > trust.radius {
        let s = trust.radius / step_norm;
        step.iter_mut().for_each(|x| *x *= s);
        step_norm = trust.radius;
    }
    let candidate: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
    let loss_after = true_loss(&candidate)?;
    let accepted = loss_after < loss_before;
    if accepted {
        trust.on_accept();
    } else {
        trust.on_reject();
    }
    Ok(DescentOutcome {
        theta_next: ParamVector::new(if accepted { candidate } else { theta.to_vec() }),
        accepted,
        loss_before,
        loss_after,
        step_norm,
    })
}

/// One surrogate-gradient step; the true loss is queried at `theta` and at
/// the candidate.
pub fn descent_step<F>(
    theta: &[f64],
    net: &SurrogateNet,
    loss: &dyn LossAdapter,
    eta: f64,
    trust: &mut TrustRegion,
    mut true_loss: F,
) -> Result<DescentOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let before = true_loss(theta)?;
    let grad = surrogate_grad(net, theta, loss)?;
    descent_step_with_grad(theta, &grad, eta, trust, before, true_loss)
}

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// `η₀ / (1 + t)`
    #[default]
    Harmonic,
    Constant,
}

impl Schedule {
    pub fn eta(self, t: usize, eta0: f64) -> f64 {
        match self {
            Schedule::Harmonic => schedule(t, eta0),
            Schedule::Constant => eta0,
        }
    }
}

/// `η₀ / (1 + t)`
pub fn schedule(t: usize, eta0: f64) -> f64 {
    eta0 / (1.0 + t as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    pub probes: usize,
    pub initial_norm: f64,
    pub final_norm: f64,
    /// `initial_norm / final_norm`
    pub reduction: f64,
    /// Loss at the end is not below the loss at the start, or went non-finite.
    pub loss_not_decreasing: bool,
}

/// Summarizes probed gradient norms and the loss trace of a run.
pub fn stationarity_monitor(norms: &[f64], losses: &[f64]) -> Result<StationarityReport> {
    let (Some(&first), Some(&last)) = (norms.first(), norms.last()) else {
        return Err(Error::Empty("no gradient probes recorded".into()));
    };
    let loss_not_decreasing = match (losses.first(), losses.last()) {
        (Some(a), Some(b)) => losses.iter().any(|l| !l.is_finite()) || b >= a,
        _ => false,
    };
    Ok(StationarityReport {
        probes: norms.len(),
        initial_norm: first,
        final_norm: last,
        reduction: first / last,
        loss_not_decreasing,
    })
}

/// `count` distinct indices below `p`, sorted.
pub fn probe_indices(p: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p).collect();
    let mut rng = stream(seed, 0x9b);
    let k = count.min(p);
    for i in 0..k {
        let j = rng.random_range(i..p);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Settings of the surrogate-driven optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub hidden: Vec<usize>,
    pub samples: usize,
    pub sigma: f64,
    pub fit: FitConfig,
    pub trust: TrustRegion,
    pub eta0: f64,
    pub schedule: Schedule,
    pub steps: usize,
    /// Probe the true gradient every this many steps; 0 disables probing.
    pub probe_every: usize,
    pub probe_count: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            hidden: vec![256, 256],
            samples: 32,
            sigma: 0.1,
            fit: FitConfig::default(),
            trust: TrustRegion::default(),
            eta0: 0.5,
            schedule: Schedule::Harmonic,
            steps: 100,
            probe_every: 0,
            probe_count: 16,
            seed: 0,
        }
    }
}

/// One row of the optimizer log; losses and probes refer to the point held
/// after the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub eta: f64,
    pub surrogate_mse: f64,
    pub true_loss: f64,
    pub accepted: bool,
    pub trust_radius: f64,
    pub grad_probe_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerRun {
    pub theta: ParamVector,
    pub initial_loss: f64,
    pub initial_probe_norm: Option<f64>,
    pub records: Vec<StepRecord>,
    pub net: SurrogateNet,
}

impl OptimizerRun {
    pub fn probe_norms(&self) -> Vec<f64> {
        self.initial_probe_norm
            .into_iter()
            .chain(self.records.iter().filter_map(|r| r.grad_probe_norm))
            .collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        core::iter::once(self.initial_loss)
            .chain(self.records.iter().map(|r| r.true_loss))
            .collect()
    }
}

/// Minimizes `loss(m(θ))` by refitting a surrogate around each iterate and
/// stepping along its gradient.
pub fn optimize<M: MeasurementModel + ?Sized>(
    model: &M,
    loss: &dyn LossAdapter,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptimizerRun> {
    let p = model.num_params();
    if theta0.len() != p {
        return Err(Error::Dimension {
            expected: p,
            found: theta0.len(),
        });
    }
    let mut net = SurrogateNet::new(p, &cfg.hidden, model.num_outputs(), cfg.seed)?;
    let mut trust = cfg.trust;
    let probe = probe_indices(p, cfg.probe_count, cfg.seed);
    let probe_norm = |theta: &[f64]| -> Result<f64> { Ok(norm(&probe_gradient(model, theta, loss, &probe)?)) };
    let mut theta = theta0.to_vec();
    let initial_probe_norm = if cfg.probe_every > 0 { Some(probe_norm(&theta)?) } else { None };
    let mut initial_loss = None;
    let mut records = Vec::with_capacity(cfg.steps);
    for t in 0..cfg.steps {
        let thetas = sample_params(&theta, cfg.sigma, cfg.samples, crate::rng::derive_seed(cfg.seed, t as u64))?;
        let batch = SampleBatch::evaluate(model, thetas)?;
        let loss_before = loss.loss(&batch.points[0].1);
        initial_loss.get_or_insert(loss_before);
        let surrogate_mse = net.fit(&batch, &cfg.fit)?;
        let eta = cfg.schedule.eta(t, cfg.eta0);
        let grad = surrogate_grad(&net, &theta, loss)?;
        let out = descent_step_with_grad(&theta, &grad, eta, &mut trust, loss_before, |c| {
            Ok(loss.loss(&model.measure(c)?))
        })?;
        if !out.loss_after.is_finite() {
            return Err(Error::Divergence("true loss became non-finite".into()));
        }
        theta = out.theta_next.into_vec();
        let last = t + 1 == cfg.steps;
        let grad_probe_norm = if cfg.probe_every > 0 && ((t + 1) % cfg.probe_every == 0 || last) {
            Some(probe_norm(&theta)?)
        } else {
            None
        };
        records.push(StepRecord {
            step: t,
            eta,
            surrogate_mse,
            true_loss: if out.accepted { out.loss_after } else { out.loss_before },
            accepted: out.accepted,
            trust_radius: trust.radius,
            grad_probe_norm,
        });
    }
    let initial_loss = match initial_loss {
        Some(l) => l,
        None => loss.loss(&model.measure(theta0)?),
    };
    Ok(OptimizerRun {
        theta: ParamVector::new(theta),
        initial_loss,
        initial_probe_norm,
        records,
        net,
    })
}
