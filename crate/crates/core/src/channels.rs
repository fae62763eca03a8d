//! Kraus representation of one measure-and-reset layer on the main register,
//! and the numerical checks that go with it: completeness, factorization of
//! the post-reset state, and witnesses that the channel is neither unitary
//! nor collapsing.

use alloc::string::String;
use alloc::vec::Vec;

use crate::ansatz::{layer_unitary_dense, measure_reset_channel, CircuitSpec};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::qstate::{subregister_offsets, DensityMatrix, QuantumState};

/// Largest register for which a dense layer unitary is built.
pub const KRAUS_QUBIT_CAP: usize = 10;

/// Frobenius norm below which a Kraus operator counts as absent.
pub const BRANCH_NORM_FLOOR: f64 = 1e-8;

/// Operators `{K_x}` of a channel `ρ ↦ Σ_x K_x ρ K_x†` on the main register.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    operators: Vec<CMatrix>,
    ancillas: Vec<usize>,
    n_main: usize,
}

impl KrausSet {
    /// All operators must be square `2^n_main × 2^n_main`.
    pub fn new(operators: Vec<CMatrix>, ancillas: Vec<usize>, n_main: usize) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::Empty("Kraus set has no operators".into()));
        }
        let dim = 1usize << n_main;
        for k in &operators {
            if k.rows() != dim || k.cols() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: k.rows().max(k.cols()),
                });
            }
        }
        Ok(KrausSet {
            operators,
            ancillas,
            n_main,
        })
    }

    /// The identity channel on `n_main` qubits.
    pub fn identity(n_main: usize) -> Self {
        KrausSet {
            operators: alloc::vec![CMatrix::identity(1 << n_main)],
            ancillas: Vec::new(),
            n_main,
        }
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn into_operators(self) -> Vec<CMatrix> {
        self.operators
    }

    pub fn ancillas(&self) -> &[usize] {
        &self.ancillas
    }

    pub fn n_main(&self) -> usize {
        self.n_main
    }

    pub fn dim(&self) -> usize {
        1 << self.n_main
    }

    /// `‖Σ_x K_x†K_x − I‖_max`
    pub fn completeness_residual(&self) -> f64 {
        let mut sum = CMatrix::zeros(self.dim(), self.dim());
        for k in &self.operators {
            sum.add_assign(&k.adjoint().matmul(k).expect("square"));
        }
        sum.max_abs_diff(&CMatrix::identity(self.dim()))
    }

    /// The channel `later ∘ self`, with operators `L_y K_x` for every pair.
    pub fn then(&self, later: &KrausSet) -> Result<KrausSet> {
        if later.n_main != self.n_main {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: later.dim(),
            });
        }
        let mut operators = Vec::with_capacity(self.operators.len() * later.operators.len());
        for k in &self.operators {
            for l in &later.operators {
                operators.push(l.matmul(k)?);
            }
        }
        Ok(KrausSet {
            operators,
            ancillas: self.ancillas.clone(),
            n_main: self.n_main,
        })
    }
}

/// Slices `K_x[i, j] = ⟨x, i| U |0…0, j⟩` out of a dense `n`-qubit unitary,
/// with ancilla and main bits interleaved according to their wire positions.
pub fn kraus_from_unitary(u: &CMatrix, n: usize, ancillas: &[usize]) -> Result<KrausSet> {
    let dim = 1usize << n;
    if u.rows() != dim || u.cols() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: u.rows(),
        });
    }
    let main: Vec<usize> = (0..n).filter(|w| !ancillas.contains(w)).collect();
    let main_off = subregister_offsets(n, &main);
    let anc_off = subregister_offsets(n, ancillas);
    let operators = anc_off
        .iter()
        .map(|&x| {
            let mut k = CMatrix::zeros(main_off.len(), main_off.len());
            for (i, &mi) in main_off.iter().enumerate() {
                for (j, &mj) in main_off.iter().enumerate() {
                    k[(i, j)] = u[(mi | x, mj)];
                }
            }
            k
        })
        .collect();
    KrausSet::new(operators, ancillas.to_vec(), main.len())
}

/// Kraus set of layer `layer_index` of `spec` (n ≤ 10).
pub fn layer_kraus(spec: &CircuitSpec, layer_params: &[f64], layer_index: usize) -> Result<KrausSet> {
    let u = layer_unitary_dense(spec, layer_params, layer_index)?;
    kraus_from_unitary(&u, spec.num_qubits(), spec.ancillas())
}

/// Composition of every layer's Kraus set: the whole circuit as a channel on
/// the main register, with one operator per outcome history.
pub fn circuit_kraus(spec: &CircuitSpec, theta: &[f64]) -> Result<KrausSet> {
    let mut total = KrausSet::identity(spec.num_main());
    for layer in 0..spec.layers() {
        total = total.then(&layer_kraus(spec, spec.layer_params(theta, layer), layer)?)?;
    }
    Ok(total)
}

/// `Σ_x K_x ρ K_x†`
pub fn apply_kraus(rho_main: &DensityMatrix, ks: &KrausSet) -> Result<DensityMatrix> {
    if rho_main.dim() != ks.dim() {
        return Err(Error::Dimension {
            expected: ks.dim(),
            found: rho_main.dim(),
        });
    }
    let mut out = CMatrix::zeros(ks.dim(), ks.dim());
    for k in ks.operators() {
        out.add_assign(&k.matmul(rho_main.matrix())?.matmul(&k.adjoint())?);
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// Places `σ` on the main wires with every ancilla in `|0⟩`.
pub fn embed_with_zero_ancillas(sigma: &CMatrix, n: usize, ancillas: &[usize]) -> CMatrix {
    let main: Vec<usize> = (0..n).filter(|w| !ancillas.contains(w)).collect();
    let main_off = subregister_offsets(n, &main);
    let mut out = CMatrix::zeros(1 << n, 1 << n);
    for (i, &mi) in main_off.iter().enumerate() {
        for (j, &mj) in main_off.iter().enumerate() {
            out[(mi, mj)] = sigma[(i, j)];
        }
    }
    out
}

/// `‖M(ρ) − |0…0⟩⟨0…0|_anc ⊗ Σ_x K_x ρ K_x†‖_max` for one layer.
///
/// The left side runs the circuit's measure-and-reset channel after applying
/// the layer gates to `rho_full`; the right side uses the rectangular
/// operators `K_x = ⟨x|_anc U` (main register ← full register), so `rho_full`
/// may hold arbitrary ancilla states.
pub fn check_factorization(
    spec: &CircuitSpec,
    layer_params: &[f64],
    rho_full: &DensityMatrix,
) -> Result<f64> {
    let n = spec.num_qubits();
    if rho_full.num_qubits() != n {
        return Err(Error::Dimension {
            expected: 1 << n,
            found: rho_full.dim(),
        });
    }
    let gates = crate::ansatz::build_layer_unitary(spec, layer_params, 0)?;
    let mut evolved = rho_full.clone();
    for g in &gates {
        evolved.apply_gate(&g.gate, &g.wires)?;
    }
    let lhs = measure_reset_channel(&evolved, spec.ancillas())?;

    let u = layer_unitary_dense(spec, layer_params, 0)?;
    let main = spec.main_wires();
    let main_off = subregister_offsets(n, &main);
    let anc_off = subregister_offsets(n, spec.ancillas());
    let dim = 1usize << n;
    let mut sum = CMatrix::zeros(main_off.len(), main_off.len());
    for &x in &anc_off {
        let mut k = CMatrix::zeros(main_off.len(), dim);
        for (i, &mi) in main_off.iter().enumerate() {
            for j in 0..dim {
                k[(i, j)] = u[(mi | x, j)];
            }
        }
        sum.add_assign(&k.matmul(rho_full.matrix())?.matmul(&k.adjoint())?);
    }
    let rhs = embed_with_zero_ancillas(&sum, n, spec.ancillas());
    Ok(lhs.matrix().max_abs_diff(&rhs))
}

/// Structural summary of a Kraus set.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessReport {
    /// Operators with Frobenius norm above [`BRANCH_NORM_FLOOR`].
    pub effective_branches: usize,
    /// Minimum over pairs of effective operators of the phase-optimal
    /// distance `min_{|c|=1} ‖K_x/‖K_x‖ − c·K_y/‖K_y‖‖_F`; zero with fewer
    /// than two effective branches.
    pub pairwise_distinctness: f64,
    /// A single effective branch proportional to a unitary.
    pub unitary_channel: bool,
    /// The channel sends every input to the same output state.
    pub collapse_flag: bool,
}

/// Branch count, distinctness and collapse diagnostics of `ks`.
pub fn nonunitarity_witness(ks: &KrausSet) -> WitnessReport {
    const TOL: f64 = 1e-8;
    let effective: Vec<(&CMatrix, f64)> = ks
        .operators()
        .iter()
        .map(|k| (k, k.frobenius_norm()))
        .filter(|(_, norm)| *norm > BRANCH_NORM_FLOOR)
        .collect();

    let mut distinctness = if effective.len() < 2 { 0.0 } else { f64::INFINITY };
    for (a, (ka, na)) in effective.iter().enumerate() {
        for (kb, nb) in &effective[a + 1..] {
            let overlap = ka.inner(kb).norm() / (na * nb);
            distinctness = f64::min(distinctness, libm::sqrt((2.0 - 2.0 * overlap).max(0.0)));
        }
    }

    let dim = ks.dim();
    let unitary_channel = effective.len() == 1 && {
        let (k, norm) = effective[0];
        let mut gram = k.adjoint().matmul(k).expect("square");
        gram.scale(C64::new(dim as f64 / (norm * norm), 0.0));
        gram.max_abs_diff(&CMatrix::identity(dim)) < TOL
    };

    // Φ(|i⟩⟨j|) = Σ_x K_x|i⟩⟨j|K_x†; constant iff Φ(|i⟩⟨i|) is the same for
    // every i and the off-diagonal images vanish.
    let image = |i: usize, j: usize| -> CMatrix {
        let mut out = CMatrix::zeros(dim, dim);
        for (k, _) in &effective {
            out.add_assign(&CMatrix::outer(&k.column(i), &k.column(j)));
        }
        out
    };
    let reference = image(0, 0);
    let mut collapse_flag = true;
    'outer: for i in 0..dim {
        for j in 0..dim {
            let img = image(i, j);
            let dev = if i == j {
                img.max_abs_diff(&reference)
            } else {
                img.max_abs()
            };
            if dev > TOL {
                collapse_flag = false;
                break 'outer;
            }
        }
    }
    if effective.is_empty() {
        collapse_flag = false;
    }

    WitnessReport {
        effective_branches: effective.len(),
        pairwise_distinctness: distinctness,
        unitary_channel,
        collapse_flag,
    }
}

/// One row of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckRecord {
    /// Passes when `residual < tolerance`.
    pub fn below(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        CheckRecord {
            name: name.into(),
            residual,
            tolerance,
            passed: residual < tolerance && residual.is_finite(),
        }
    }

    /// Passes when `value > threshold`.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        CheckRecord {
            name: name.into(),
            residual: value,
            tolerance: threshold,
            passed: value > threshold,
        }
    }
}

/// Purity of the main register after running `spec` from `|0…0⟩`.
pub fn main_register_purity(spec: &CircuitSpec, theta: &[f64]) -> Result<f64> {
    let rho = crate::ansatz::evolve_exact(spec, theta)?;
    if spec.ancillas().is_empty() {
        return Ok(rho.purity());
    }
    Ok(rho.partial_trace(spec.ancillas())?.purity())
}

/// Main-register state after running the Kraus form of `spec` on `rho_main`.
pub fn run_kraus_layers(spec: &CircuitSpec, theta: &[f64], rho_main: &DensityMatrix) -> Result<DensityMatrix> {
    let mut rho = rho_main.clone();
    for layer in 0..spec.layers() {
        rho = apply_kraus(&rho, &layer_kraus(spec, spec.layer_params(theta, layer), layer)?)?;
    }
    Ok(rho)
}

/// Runs the completeness, factorization and witness checks on `spec` with
/// random layers drawn from `seed`. Used by the `verify` command.
pub fn verification_suite(spec: &CircuitSpec, trials: usize, seed: u64) -> Result<Vec<CheckRecord>> {
    verification_suite_with(spec, trials, seed, |ks| ks)
}

/// [`verification_suite`] with a hook that may alter every extracted Kraus
/// set before it is checked (negative testing of the report path).
pub fn verification_suite_with(
    spec: &CircuitSpec,
    trials: usize,
    seed: u64,
    mut tamper: impl FnMut(KrausSet) -> KrausSet,
) -> Result<Vec<CheckRecord>> {
    use crate::ansatz::ParamVector;
    use crate::qstate::PureState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    if trials == 0 {
        return Err(Error::Config("verification needs at least one trial".into()));
    }
    let n = spec.num_qubits();
    let per_layer = spec.params_per_layer();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut completeness: f64 = 0.0;
    let mut factorization: f64 = 0.0;
    let mut min_branches = usize::MAX;
    let mut min_purity_drop = f64::INFINITY;
    let mut any_collapse = false;
    let mut min_distance = f64::INFINITY;
    for t in 0..trials {
        let layer_theta = ParamVector::random(per_layer, seed.wrapping_add(1 + t as u64));
        let ks = tamper(layer_kraus(spec, &layer_theta, 0)?);
        completeness = completeness.max(ks.completeness_residual());
        let w = nonunitarity_witness(&ks);
        min_branches = min_branches.min(w.effective_branches);
        any_collapse |= w.collapse_flag;

        let amps: Vec<C64> = (0..1usize << n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re, im)
            })
            .collect();
        let rho = PureState::normalized(amps)?.to_density();
        factorization = factorization.max(check_factorization(spec, &layer_theta, &rho)?);

        let single = CircuitSpec::with_pattern(n, spec.ancillas().to_vec(), 1, spec.pattern().clone())?;
        let purity = main_register_purity(&single, &layer_theta)?;
        min_purity_drop = min_purity_drop.min(1.0 - purity);

        let deep = CircuitSpec::with_pattern(n, spec.ancillas().to_vec(), 3, spec.pattern().clone())?;
        let deep_theta = ParamVector::random(deep.param_count(), seed.wrapping_add(0x8000 + t as u64));
        let mut random_main = || -> Result<DensityMatrix> {
            let amps: Vec<C64> = (0..1usize << spec.num_main())
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re, im)
                })
                .collect();
            Ok(PureState::normalized(amps)?.to_density())
        };
        let (a, b) = (random_main()?, random_main()?);
        let da = run_kraus_layers(&deep, &deep_theta, &a)?;
        let db = run_kraus_layers(&deep, &deep_theta, &b)?;
        min_distance = min_distance.min(da.trace_distance(&db)?);
    }
    Ok(alloc::vec![
        CheckRecord::below("kraus_completeness", completeness, 1e-9),
        CheckRecord::below("factorization", factorization, 1e-9),
        CheckRecord::above("min_effective_branches", min_branches as f64, 1.5),
        CheckRecord::above("min_purity_drop", min_purity_drop, 1e-6),
        CheckRecord::below("collapse_detected", if any_collapse { 1.0 } else { 0.0 }, 0.5),
        CheckRecord::above("min_trace_distance_after_3_layers", min_distance, 0.01),
    ])
}

impl core::fmt::Display for WitnessReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "branches={} distinctness={:.6} unitary_channel={} collapse={}",
            self.effective_branches, self.pairwise_distinctness, self.unitary_channel, self.collapse_flag
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::ParamVector;
    use crate::qstate::{GateMatrix, PureState};
    use alloc::vec;

    fn cnot_kraus() -> KrausSet {
        // Main wire 0 controls ancilla wire 1.
        kraus_from_unitary(&GateMatrix::cnot().to_matrix(), 2, &[1]).unwrap()
    }

    #[test]
    fn identity_unitary_gives_trivial_kraus() {
        let ks = kraus_from_unitary(&CMatrix::identity(4), 2, &[1]).unwrap();
        assert!(ks.operators()[0].max_abs_diff(&CMatrix::identity(2)) < 1e-15);
        assert!(ks.operators()[1].max_abs() < 1e-15);
        let w = nonunitarity_witness(&ks);
        assert_eq!(w.effective_branches, 1);
        assert!(w.unitary_channel);
        assert!(!w.collapse_flag);
    }

    #[test]
    fn cnot_slices_into_projectors() {
        let ks = cnot_kraus();
        let p0 = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let p1 = CMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(ks.operators()[0].max_abs_diff(&p0) < 1e-15);
        assert!(ks.operators()[1].max_abs_diff(&p1) < 1e-15);
        assert!(ks.completeness_residual() < 1e-15);
        let w = nonunitarity_witness(&ks);
        assert_eq!(w.effective_branches, 2);
        assert!(w.pairwise_distinctness > 0.5);
        assert!(!w.collapse_flag);
        assert!(!w.unitary_channel);
    }

    #[test]
    fn cnot_set_dephases_plus_state() {
        let mut plus = PureState::new_zero_state(1).unwrap();
        plus.apply_gate(&GateMatrix::hadamard(), &[0]).unwrap();
        let out = apply_kraus(&plus.to_density(), &cnot_kraus()).unwrap();
        let want = CMatrix::from_real(2, 2, &[0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(out.matrix().max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn identity_set_leaves_state_alone() {
        let spec = CircuitSpec::new(3, vec![1], 1).unwrap();
        let rho = crate::ansatz::evolve_exact(&spec, &ParamVector::random(14, 4))
            .unwrap()
            .partial_trace(&[1])
            .unwrap();
        let out = apply_kraus(&rho, &KrausSet::identity(2)).unwrap();
        assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-15);
        assert!(apply_kraus(&rho, &KrausSet::identity(3)).is_err());
    }

    #[test]
    fn reset_channel_that_forgets_input_is_flagged_as_collapse() {
        // K_0 = |0⟩⟨0|, K_1 = |0⟩⟨1|: amplitude reset of the main qubit.
        let k0 = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let k1 = CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let ks = KrausSet::new(vec![k0, k1], vec![1], 1).unwrap();
        assert!(ks.completeness_residual() < 1e-15);
        assert!(nonunitarity_witness(&ks).collapse_flag);
    }

    #[test]
    fn random_layer_kraus_is_complete() {
        let spec = CircuitSpec::new(4, vec![1, 3], 1).unwrap();
        for seed in 0..5 {
            let ks = layer_kraus(&spec, &ParamVector::random(21, seed), 0).unwrap();
            assert_eq!(ks.operators().len(), 4);
            assert!(ks.completeness_residual() < 1e-12);
        }
    }

    #[test]
    fn identity_layer_factorizes_exactly() {
        let spec = CircuitSpec::new(3, vec![1], 1).unwrap();
        let mut rho = DensityMatrix::new_zero_state(3).unwrap();
        rho.apply_gate(&GateMatrix::hadamard(), &[1]).unwrap();
        rho.apply_gate(&GateMatrix::cnot(), &[1, 2]).unwrap();
        let r = check_factorization(&spec, &[0.0; 14], &rho).unwrap();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn kraus_set_rejects_bad_shapes() {
        assert!(KrausSet::new(vec![], vec![], 1).is_err());
        assert!(KrausSet::new(vec![CMatrix::identity(4)], vec![], 1).is_err());
    }
}
