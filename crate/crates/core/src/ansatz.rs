//! Layered measure-and-reset circuits.
//!
//! Every layer applies one 7-angle two-qubit module per entangling pair, then
//! measures all ancillas in the computational basis and resets them to `|0⟩`.
//! Main qubits are the non-ancilla wires in increasing order; the circuit
//! output is one `⟨Z⟩` per main qubit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ZERO};
use crate::qstate::{
    apply_kernel, subregister_offsets, validate_wires, wire_mask, DensityMatrix, GateMatrix,
    PureState, QuantumState, MAX_QUBITS,
};

/// Angles consumed by one two-qubit module.
pub const ANGLES_PER_MODULE: usize = 7;

/// Largest register the density-matrix backend accepts (2^12 × 2^12 complex
/// doubles is about 268 MB).
pub const EXACT_QUBIT_CAP: usize = 12;

/// Upper bound on stored amplitudes for the branch-sum backend.
const BRANCH_AMPLITUDE_BUDGET: usize = 1 << 24;

/// `p = 7 (n − 1) L` for the ladder layout.
pub fn param_count(n: usize, layers: usize) -> usize {
    ANGLES_PER_MODULE * n.saturating_sub(1) * layers
}

/// Which wire pairs carry a module in each layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntanglerPattern {
    /// `(0,1), (1,2), …, (n−2, n−1)` in that order.
    Ladder,
    /// Explicit ordered pair list, reused by every layer.
    Custom(Vec<(usize, usize)>),
}

/// Geometry of a layered measure-and-reset circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitSpec {
    n: usize,
    ancillas: Vec<usize>,
    layers: usize,
    pattern: EntanglerPattern,
}

impl CircuitSpec {
    /// Ladder circuit on `n` wires with the given ancillas.
    pub fn new(n: usize, ancillas: Vec<usize>, layers: usize) -> Result<Self> {
        CircuitSpec::with_pattern(n, ancillas, layers, EntanglerPattern::Ladder)
    }

    pub fn with_pattern(
        n: usize,
        ancillas: Vec<usize>,
        layers: usize,
        pattern: EntanglerPattern,
    ) -> Result<Self> {
        if !(2..=MAX_QUBITS).contains(&n) {
            return Err(Error::Size(format!("circuit needs 2..={MAX_QUBITS} qubits, got {n}")));
        }
        if layers == 0 {
            return Err(Error::Size("circuit needs at least one layer".into()));
        }
        if ancillas.len() >= n {
            return Err(Error::Size(format!(
                "{} ancillas leave no main qubit on {n} wires",
                ancillas.len()
            )));
        }
        validate_wires(n, &ancillas, ancillas.len())?;
        if let EntanglerPattern::Custom(pairs) = &pattern {
            if pairs.is_empty() {
                return Err(Error::Config("entangler pattern has no pairs".into()));
            }
            for &(a, b) in pairs {
                validate_wires(n, &[a, b], 2)?;
            }
        }
        Ok(CircuitSpec {
            n,
            ancillas,
            layers,
            pattern,
        })
    }

    /// 15 qubits, ancillas at wires 3, 6, 9, 12, six layers (588 angles).
    pub fn full_scale() -> Self {
        CircuitSpec::new(15, vec![3, 6, 9, 12], 6).expect("valid geometry")
    }

    /// 6 qubits, ancillas at wires 1 and 5, three layers (105 angles).
    pub fn desk_scale() -> Self {
        CircuitSpec::new(6, vec![1, 5], 3).expect("valid geometry")
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn ancillas(&self) -> &[usize] {
        &self.ancillas
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn pattern(&self) -> &EntanglerPattern {
        &self.pattern
    }

    /// Non-ancilla wires in increasing order.
    pub fn main_wires(&self) -> Vec<usize> {
        (0..self.n).filter(|w| !self.ancillas.contains(w)).collect()
    }

    pub fn num_main(&self) -> usize {
        self.n - self.ancillas.len()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        match &self.pattern {
            EntanglerPattern::Ladder => (0..self.n - 1).map(|w| (w, w + 1)).collect(),
            EntanglerPattern::Custom(pairs) => pairs.clone(),
        }
    }

    pub fn modules_per_layer(&self) -> usize {
        match &self.pattern {
            EntanglerPattern::Ladder => self.n - 1,
            EntanglerPattern::Custom(pairs) => pairs.len(),
        }
    }

    pub fn params_per_layer(&self) -> usize {
        ANGLES_PER_MODULE * self.modules_per_layer()
    }

    pub fn param_count(&self) -> usize {
        self.params_per_layer() * self.layers
    }

    /// Slice of `theta` feeding layer `layer`.
    pub fn layer_params<'a>(&self, theta: &'a [f64], layer: usize) -> &'a [f64] {
        let per = self.params_per_layer();
        &theta[layer * per..(layer + 1) * per]
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                found: theta.len(),
            });
        }
        Ok(())
    }
}

/// Role of an angle inside its module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleKind {
    Rz,
    Ry,
    /// The controlled rotation closing each module.
    Crx,
}

/// Kind of the angle at flat index `index`.
pub fn angle_kind(index: usize) -> AngleKind {
    match index % ANGLES_PER_MODULE {
        1 | 4 => AngleKind::Ry,
        6 => AngleKind::Crx,
        _ => AngleKind::Rz,
    }
}

/// Flat angle vector θ (radians).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    /// Uniform angles in `[−π, π)`.
    pub fn random(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ParamVector(
            (0..len)
                .map(|_| rng.random_range(-core::f64::consts::PI..core::f64::consts::PI))
                .collect(),
        )
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

/// One `⟨Z⟩` per main qubit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementVector(Vec<f64>);

impl MeasurementVector {
    pub fn new(values: Vec<f64>) -> Self {
        MeasurementVector(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for MeasurementVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for MeasurementVector {
    fn from(v: Vec<f64>) -> Self {
        MeasurementVector(v)
    }
}

/// Two-qubit module: `CRx(θ7) · (Rz(θ1)Ry(θ2)Rz(θ3) ⊗ Rz(θ4)Ry(θ5)Rz(θ6))`,
/// the controlled rotation acting with the first qubit as control.
pub fn u_module(params: &[f64]) -> Result<GateMatrix> {
    if params.len() != ANGLES_PER_MODULE {
        return Err(Error::Size(format!(
            "module takes {ANGLES_PER_MODULE} angles, got {}",
            params.len()
        )));
    }
    let euler = |a: f64, b: f64, c: f64| -> Result<GateMatrix> {
        GateMatrix::rz(a).compose(&GateMatrix::ry(b))?.compose(&GateMatrix::rz(c))
    };
    let qa = euler(params[0], params[1], params[2])?;
    let qb = euler(params[3], params[4], params[5])?;
    GateMatrix::crx(params[6]).compose(&GateMatrix::tensor(&qa, &qb)?)
}

/// A gate together with the wires it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedGate {
    pub gate: GateMatrix,
    pub wires: [usize; 2],
}

/// Module list of one layer, in application order.
pub fn build_layer_unitary(
    spec: &CircuitSpec,
    layer_params: &[f64],
    _layer_index: usize,
) -> Result<Vec<PlacedGate>> {
    if layer_params.len() != spec.params_per_layer() {
        return Err(Error::Dimension {
            expected: spec.params_per_layer(),
            found: layer_params.len(),
        });
    }
    spec.pairs()
        .into_iter()
        .zip(layer_params.chunks_exact(ANGLES_PER_MODULE))
        .map(|((a, b), angles)| {
            Ok(PlacedGate {
                gate: u_module(angles)?,
                wires: [a, b],
            })
        })
        .collect()
}

fn apply_layer<S: QuantumState>(state: &mut S, gates: &[PlacedGate]) -> Result<()> {
    for g in gates {
        state.apply_gate(&g.gate, &g.wires)?;
    }
    Ok(())
}

/// Measures every ancilla, resets it to `|0⟩` and sums the branches:
/// `ρ ↦ Σ_x R_x M_x ρ M_x R_x†`. The ancilla marginal of the result is
/// exactly `|0…0⟩⟨0…0|`.
pub fn measure_reset_channel(rho: &DensityMatrix, ancillas: &[usize]) -> Result<DensityMatrix> {
    let n = rho.num_qubits();
    validate_wires(n, ancillas, ancillas.len())?;
    if ancillas.is_empty() {
        return Ok(rho.clone());
    }
    let main: Vec<usize> = (0..n).filter(|w| !ancillas.contains(w)).collect();
    let main_off = subregister_offsets(n, &main);
    let anc_off = subregister_offsets(n, ancillas);
    let m = rho.matrix();
    let mut out = CMatrix::zeros(rho.dim(), rho.dim());
    for &r in &main_off {
        for &c in &main_off {
            out[(r, c)] = anc_off.iter().map(|&x| m[(r | x, c | x)]).sum();
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// Runs the full density-matrix evolution and hands the state after each
/// layer (unitary then measure-and-reset) to `observe`.
pub fn evolve_exact_with(
    spec: &CircuitSpec,
    theta: &[f64],
    mut observe: impl FnMut(usize, &DensityMatrix),
) -> Result<DensityMatrix> {
    spec.check_theta(theta)?;
    if spec.num_qubits() > EXACT_QUBIT_CAP {
        return Err(Error::Backend(format!(
            "{} qubits exceed the density-matrix cap of {EXACT_QUBIT_CAP}; use forward_trajectory",
            spec.num_qubits()
        )));
    }
    let mut rho = DensityMatrix::new_zero_state(spec.num_qubits())?;
    for layer in 0..spec.layers() {
        let gates = build_layer_unitary(spec, spec.layer_params(theta, layer), layer)?;
        apply_layer(&mut rho, &gates)?;
        rho = measure_reset_channel(&rho, spec.ancillas())?;
        observe(layer, &rho);
    }
    Ok(rho)
}

/// Final `n`-qubit density matrix of the circuit.
pub fn evolve_exact(spec: &CircuitSpec, theta: &[f64]) -> Result<DensityMatrix> {
    evolve_exact_with(spec, theta, |_, _| {})
}

/// Exact `⟨Z⟩` on every main qubit via density-matrix evolution (n ≤ 12).
pub fn forward_exact(spec: &CircuitSpec, theta: &[f64]) -> Result<MeasurementVector> {
    let rho = evolve_exact(spec, theta)?;
    spec.main_wires()
        .into_iter()
        .map(|w| rho.expect_z(w))
        .collect::<Result<Vec<_>>>()
        .map(MeasurementVector)
}

/// Exact `⟨Z⟩` on every main qubit by carrying the ensemble of unnormalized
/// pure branches, one per ancilla outcome history. Agrees with
/// [`forward_exact`] and is much cheaper while `2^(n_a (L−1))` stays small.
/// The final layer's measurement is skipped: it does not change main-qubit
/// statistics.
pub fn forward_branches(spec: &CircuitSpec, theta: &[f64]) -> Result<MeasurementVector> {
    spec.check_theta(theta)?;
    let n = spec.num_qubits();
    let n_a = spec.ancillas().len();
    let max_branches = 1usize
        .checked_shl((n_a * (spec.layers() - 1)) as u32)
        .unwrap_or(usize::MAX);
    if max_branches.saturating_mul(1 << n) > BRANCH_AMPLITUDE_BUDGET {
        return Err(Error::Backend(format!(
            "branch ensemble of up to {max_branches} states on {n} qubits exceeds the budget; \
             use forward_exact or forward_trajectory"
        )));
    }
    let main_off = subregister_offsets(n, &spec.main_wires());
    let anc_off = subregister_offsets(n, spec.ancillas());
    let mut branches = vec![PureState::new_zero_state(n)?.into_amplitudes()];
    for layer in 0..spec.layers() {
        let gates = build_layer_unitary(spec, spec.layer_params(theta, layer), layer)?;
        for amps in &mut branches {
            for g in &gates {
                apply_kernel(amps, 0, 1, n, &g.gate, &g.wires, false);
            }
        }
        if layer + 1 == spec.layers() || n_a == 0 {
            continue;
        }
        let mut next = Vec::with_capacity(branches.len() * anc_off.len());
        for amps in &branches {
            for &x in &anc_off {
                let mut reset = vec![ZERO; amps.len()];
                let mut weight = 0.0;
                for &i in &main_off {
                    let a = amps[i | x];
                    weight += a.norm_sqr();
                    reset[i] = a;
                }
                if weight > 0.0 {
                    next.push(reset);
                }
            }
        }
        branches = next;
    }
    let main = spec.main_wires();
    let mut out = vec![0.0; main.len()];
    for amps in &branches {
        for (i, a) in amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (o, &w) in out.iter_mut().zip(&main) {
                *o += if i & wire_mask(n, w) == 0 { p } else { -p };
            }
        }
    }
    Ok(MeasurementVector(out))
}

/// Monte-Carlo estimate of the main-qubit `⟨Z⟩` values.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    pub mean: MeasurementVector,
    /// Standard error of each mean (sample standard deviation / √shots).
    pub std_error: Vec<f64>,
    pub shots: usize,
}

/// Samples ancilla outcomes with Born probabilities on a statevector, resets
/// them, and averages the final main-qubit `⟨Z⟩` over `shots` trajectories.
/// Unbiased for [`forward_exact`]; reproducible for a given `seed`.
pub fn trajectory_estimate(
    spec: &CircuitSpec,
    theta: &[f64],
    shots: usize,
    seed: u64,
) -> Result<TrajectoryEstimate> {
    spec.check_theta(theta)?;
    if shots == 0 {
        return Err(Error::Config("trajectory sampling needs at least one shot".into()));
    }
    let n = spec.num_qubits();
    let main = spec.main_wires();
    let layers: Vec<Vec<PlacedGate>> = (0..spec.layers())
        .map(|l| build_layer_unitary(spec, spec.layer_params(theta, l), l))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; main.len()];
    let mut sum_sq = vec![0.0; main.len()];
    for _ in 0..shots {
        let mut state = PureState::new_zero_state(n)?;
        for (l, gates) in layers.iter().enumerate() {
            apply_layer(&mut state, gates)?;
            if l + 1 < layers.len() {
                for &a in spec.ancillas() {
                    let u: f64 = rng.random();
                    measure_and_reset(&mut state, a, u);
                }
            }
        }
        for (k, &w) in main.iter().enumerate() {
            let z = state.expect_z(w)?;
            sum[k] += z;
            sum_sq[k] += z * z;
        }
    }
    let s = shots as f64;
    let mean: Vec<f64> = sum.iter().map(|v| v / s).collect();
    let std_error = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| {
            if shots < 2 {
                return 0.0;
            }
            let var = ((sq - s * m * m) / (s - 1.0)).max(0.0);
            libm::sqrt(var / s)
        })
        .collect();
    Ok(TrajectoryEstimate {
        mean: MeasurementVector(mean),
        std_error,
        shots,
    })
}

/// [`trajectory_estimate`] without the error bars.
pub fn forward_trajectory(
    spec: &CircuitSpec,
    theta: &[f64],
    shots: usize,
    seed: u64,
) -> Result<MeasurementVector> {
    Ok(trajectory_estimate(spec, theta, shots, seed)?.mean)
}

/// Projects `wire` onto the outcome selected by the uniform draw `u`,
/// renormalizes, and resets the wire to `|0⟩`.
fn measure_and_reset(state: &mut PureState, wire: usize, u: f64) {
    let p1 = state.prob_one(wire);
    let outcome_one = u < p1;
    let p = if outcome_one { p1 } else { 1.0 - p1 };
    let scale = 1.0 / libm::sqrt(p);
    let m = wire_mask(state.num_qubits(), wire);
    let amps = state.amplitudes_mut();
    for i in 0..amps.len() {
        if i & m != 0 {
            continue;
        }
        let kept = if outcome_one { amps[i | m] } else { amps[i] };
        amps[i] = kept * scale;
        amps[i | m] = ZERO;
    }
}

/// Backend used by [`CircuitModel`] for exact evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExactMethod {
    /// Full density-matrix evolution.
    #[default]
    Density,
    /// Ensemble of pure branches.
    Branches,
}

/// Anything mapping a parameter vector to a measurement vector.
pub trait MeasurementModel {
    fn num_params(&self) -> usize;

    fn num_outputs(&self) -> usize;

    fn measure(&self, theta: &[f64]) -> Result<MeasurementVector>;

    /// Evaluates many parameter vectors; results keep the input order.
    fn measure_batch(&self, thetas: &[ParamVector]) -> Result<Vec<MeasurementVector>> {
        thetas.iter().map(|t| self.measure(t)).collect()
    }
}

/// The quantum forward map of a [`CircuitSpec`], evaluated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitModel {
    pub spec: CircuitSpec,
    pub method: ExactMethod,
}

impl CircuitModel {
    pub fn new(spec: CircuitSpec) -> Self {
        CircuitModel {
            spec,
            method: ExactMethod::Density,
        }
    }

    pub fn with_method(spec: CircuitSpec, method: ExactMethod) -> Self {
        CircuitModel { spec, method }
    }
}

impl MeasurementModel for CircuitModel {
    fn num_params(&self) -> usize {
        self.spec.param_count()
    }

    fn num_outputs(&self) -> usize {
        self.spec.num_main()
    }

    fn measure(&self, theta: &[f64]) -> Result<MeasurementVector> {
        match self.method {
            ExactMethod::Density => forward_exact(&self.spec, theta),
            ExactMethod::Branches => forward_branches(&self.spec, theta),
        }
    }
}

/// Shot-sampled forward map. The trajectory seed is derived from `seed` and
/// the bits of θ, so repeated queries at one point agree.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryModel {
    pub spec: CircuitSpec,
    pub shots: usize,
    pub seed: u64,
}

impl MeasurementModel for TrajectoryModel {
    fn num_params(&self) -> usize {
        self.spec.param_count()
    }

    fn num_outputs(&self) -> usize {
        self.spec.num_main()
    }

    fn measure(&self, theta: &[f64]) -> Result<MeasurementVector> {
        let seed = theta
            .iter()
            .fold(self.seed, |acc, t| crate::rng::derive_seed(acc, t.to_bits()));
        forward_trajectory(&self.spec, theta, self.shots, seed)
    }
}

/// Dense `2^n × 2^n` unitary of one layer, built column by column from basis
/// states. Verification only; `n ≤ 10`.
pub fn layer_unitary_dense(spec: &CircuitSpec, layer_params: &[f64], layer: usize) -> Result<CMatrix> {
    let n = spec.num_qubits();
    if n > crate::channels::KRAUS_QUBIT_CAP {
        return Err(Error::Backend(format!(
            "dense layer unitary on {n} qubits exceeds the cap of {}",
            crate::channels::KRAUS_QUBIT_CAP
        )));
    }
    let gates = build_layer_unitary(spec, layer_params, layer)?;
    let dim = 1usize << n;
    let mut u = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut col = vec![ZERO; dim];
        col[j] = C64::new(1.0, 0.0);
        for g in &gates {
            apply_kernel(&mut col, 0, 1, n, &g.gate, &g.wires, false);
        }
        u.set_column(j, &col);
    }
    Ok(u)
}
