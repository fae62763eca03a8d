//! Pure states, density matrices and local gate application.
//!
//! Wire 0 is the most significant bit of a basis index: for `n` qubits the
//! bit of wire `w` has value `1 << (n - 1 - w)`. Gates are applied by
//! stride iteration over the touched index groups; the global `2^n × 2^n`
//! operator is never formed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ONE, ZERO};

/// Largest register a [`PureState`] may hold.
pub const MAX_QUBITS: usize = 24;

const NORM_TOL: f64 = 1e-10;

/// Bit mask of `wire` in a basis index over `n` qubits.
#[inline]
pub fn wire_mask(n: usize, wire: usize) -> usize {
    1 << (n - 1 - wire)
}

/// Checks that `wires` are distinct, in range and `expected` in number.
pub fn validate_wires(n: usize, wires: &[usize], expected: usize) -> Result<()> {
    if wires.len() != expected {
        return Err(Error::Wire(format!(
            "gate acts on {expected} wire(s) but {} given",
            wires.len()
        )));
    }
    for (i, &w) in wires.iter().enumerate() {
        if w >= n {
            return Err(Error::Wire(format!("wire {w} out of range for {n} qubits")));
        }
        if wires[..i].contains(&w) {
            return Err(Error::Wire(format!("wire {w} used twice")));
        }
    }
    Ok(())
}

/// A 1- or 2-qubit unitary. For two qubits the first wire the gate is
/// applied to is the more significant bit of the 4×4 index.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    arity: usize,
    entries: [C64; 16],
}

impl GateMatrix {
    /// Validates shape and unitarity (`‖G†G − I‖_max < 1e-10`).
    pub fn new(arity: usize, entries: &[C64]) -> Result<Self> {
        let gate = GateMatrix::new_unchecked(arity, entries)?;
        let residual = gate.to_matrix().unitarity_residual();
        if residual >= NORM_TOL {
            return Err(Error::Invariant(format!(
                "gate is not unitary (residual {residual:.3e})"
            )));
        }
        Ok(gate)
    }

    /// Shape check only. Used for matrices unitary by construction.
    pub fn new_unchecked(arity: usize, entries: &[C64]) -> Result<Self> {
        if !(1..=2).contains(&arity) {
            return Err(Error::Size(format!("gate arity {arity} not in 1..=2")));
        }
        let dim = 1 << arity;
        if entries.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        let mut buf = [ZERO; 16];
        buf[..entries.len()].copy_from_slice(entries);
        Ok(GateMatrix {
            arity,
            entries: buf,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        1 << self.arity
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries[..self.dim() * self.dim()]
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.entries[r * self.dim() + c]
    }

    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_vec(self.dim(), self.dim(), self.entries().to_vec()).expect("shape")
    }

    pub fn from_matrix(m: &CMatrix) -> Result<Self> {
        let arity = match m.rows() {
            2 => 1,
            4 => 2,
            r => return Err(Error::Size(format!("{r}×{r} matrix is not a 1- or 2-qubit gate"))),
        };
        GateMatrix::new(arity, m.as_slice())
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.to_matrix().unitarity_residual()
    }

    /// `self · rhs` for gates of equal arity.
    pub fn compose(&self, rhs: &GateMatrix) -> Result<GateMatrix> {
        if self.arity != rhs.arity {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: rhs.dim(),
            });
        }
        let m = self.to_matrix().matmul(&rhs.to_matrix())?;
        GateMatrix::new_unchecked(self.arity, m.as_slice())
    }

    /// `a ⊗ b` of two single-qubit gates.
    pub fn tensor(a: &GateMatrix, b: &GateMatrix) -> Result<GateMatrix> {
        if a.arity != 1 || b.arity != 1 {
            return Err(Error::Size("tensor expects two single-qubit gates".into()));
        }
        GateMatrix::new_unchecked(2, a.to_matrix().kron(&b.to_matrix()).as_slice())
    }

    pub fn identity(arity: usize) -> GateMatrix {
        let dim = 1 << arity;
        GateMatrix::new_unchecked(arity, CMatrix::identity(dim).as_slice()).expect("arity")
    }

    pub fn pauli_x() -> GateMatrix {
        GateMatrix::new_unchecked(1, &[ZERO, ONE, ONE, ZERO]).expect("arity")
    }

    pub fn hadamard() -> GateMatrix {
        let h = C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
        GateMatrix::new_unchecked(1, &[h, h, h, -h]).expect("arity")
    }

    /// Controlled-NOT, control on the first wire.
    pub fn cnot() -> GateMatrix {
        let mut m = [ZERO; 16];
        m[0] = ONE;
        m[5] = ONE;
        m[11] = ONE;
        m[14] = ONE;
        GateMatrix::new_unchecked(2, &m).expect("arity")
    }

    /// `exp(−iθX/2)`
    pub fn rx(theta: f64) -> GateMatrix {
        let (c, s) = half_angle(theta);
        let mis = C64::new(0.0, -s);
        GateMatrix::new_unchecked(1, &[C64::new(c, 0.0), mis, mis, C64::new(c, 0.0)])
            .expect("arity")
    }

    /// `exp(−iθY/2)`
    pub fn ry(theta: f64) -> GateMatrix {
        let (c, s) = half_angle(theta);
        GateMatrix::new_unchecked(
            1,
            &[C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)],
        )
        .expect("arity")
    }

    /// `exp(−iθZ/2)`
    pub fn rz(theta: f64) -> GateMatrix {
        let (c, s) = half_angle(theta);
        GateMatrix::new_unchecked(1, &[C64::new(c, -s), ZERO, ZERO, C64::new(c, s)])
            .expect("arity")
    }

    /// `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ Rx(θ)`, control on the first wire.
    pub fn crx(theta: f64) -> GateMatrix {
        let rx = GateMatrix::rx(theta);
        let mut m = [ZERO; 16];
        m[0] = ONE;
        m[5] = ONE;
        m[10] = rx.get(0, 0);
        m[11] = rx.get(0, 1);
        m[14] = rx.get(1, 0);
        m[15] = rx.get(1, 1);
        GateMatrix::new_unchecked(2, &m).expect("arity")
    }
}

fn half_angle(theta: f64) -> (f64, f64) {
    (libm::cos(0.5 * theta), libm::sin(0.5 * theta))
}

/// Inserts a zero bit at position `mask` (a power of two) into `k`.
#[inline]
fn insert_zero(k: usize, mask: usize) -> usize {
    let low = k & (mask - 1);
    ((k ^ low) << 1) | low
}

/// Applies `gate` to the logical register of `n` qubits stored in `data`.
/// Logical index `i` owns the contiguous run `data[offset + i*run ..][..run]`,
/// so `run = 1` transforms a vector and `run = 2^n` transforms the row index
/// of a row-major matrix. With `conj` the entrywise conjugate of the gate is
/// used, which right-multiplies rows by `G†`.
pub(crate) fn apply_kernel(
    data: &mut [C64],
    offset: usize,
    run: usize,
    n: usize,
    gate: &GateMatrix,
    wires: &[usize],
    conj: bool,
) {
    let g: [C64; 16] = if conj {
        gate.entries.map(|v| v.conj())
    } else {
        gate.entries
    };
    let dim = 1usize << n;
    match gate.arity {
        1 => {
            let m = wire_mask(n, wires[0]);
            for k in 0..dim / 2 {
                let i0 = insert_zero(k, m);
                let i1 = i0 | m;
                let (b0, b1) = (offset + i0 * run, offset + i1 * run);
                for t in 0..run {
                    let x0 = data[b0 + t];
                    let x1 = data[b1 + t];
                    data[b0 + t] = g[0] * x0 + g[1] * x1;
                    data[b1 + t] = g[2] * x0 + g[3] * x1;
                }
            }
        }
        _ => {
            let ma = wire_mask(n, wires[0]);
            let mb = wire_mask(n, wires[1]);
            let (lo, hi) = if ma < mb { (ma, mb) } else { (mb, ma) };
            for k in 0..dim / 4 {
                let i00 = insert_zero(insert_zero(k, lo), hi);
                let idx = [i00, i00 | mb, i00 | ma, i00 | ma | mb];
                let base = idx.map(|i| offset + i * run);
                for t in 0..run {
                    let x = [
                        data[base[0] + t],
                        data[base[1] + t],
                        data[base[2] + t],
                        data[base[3] + t],
                    ];
                    for (r, b) in base.iter().enumerate() {
                        data[b + t] = g[4 * r] * x[0]
                            + g[4 * r + 1] * x[1]
                            + g[4 * r + 2] * x[2]
                            + g[4 * r + 3] * x[3];
                    }
                }
            }
        }
    }
}

/// Common surface of the two simulation substrates.
pub trait QuantumState {
    fn num_qubits(&self) -> usize;

    /// Applies `I ⊗ … ⊗ g ⊗ … ⊗ I` with `g` on `wires`.
    fn apply_gate(&mut self, gate: &GateMatrix, wires: &[usize]) -> Result<()>;
}

/// Normalized amplitude vector over `2^n` basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    /// `|0…0⟩` on `n` qubits, `1 ≤ n ≤ 24`.
    pub fn new_zero_state(n: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(Error::Size(format!(
                "qubit count {n} outside 1..={MAX_QUBITS}"
            )));
        }
        let mut amplitudes = vec![ZERO; 1 << n];
        amplitudes[0] = ONE;
        Ok(PureState { n, amplitudes })
    }

    /// Wraps an amplitude vector; its length must be a power of two and its
    /// norm 1 within 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() || len > 1 << MAX_QUBITS {
            return Err(Error::Size(format!(
                "amplitude length {len} is not 2^n with 1 ≤ n ≤ {MAX_QUBITS}"
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (libm::sqrt(norm) - 1.0).abs() >= NORM_TOL {
            return Err(Error::Invariant(format!("state norm {} ≠ 1", libm::sqrt(norm))));
        }
        Ok(PureState {
            n: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm = libm::sqrt(amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>());
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Invariant("cannot normalize a zero vector".into()));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        PureState::from_amplitudes(amplitudes)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.amplitudes.iter().map(|a| a.norm_sqr()).sum())
    }

    /// Probability that `wire` reads 1.
    pub fn prob_one(&self, wire: usize) -> f64 {
        let m = wire_mask(self.n, wire);
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// `⟨ψ|Z_w|ψ⟩`
    pub fn expect_z(&self, wire: usize) -> Result<f64> {
        if wire >= self.n {
            return Err(Error::Wire(format!("wire {wire} out of range for {} qubits", self.n)));
        }
        Ok(expect_z_diag(self.n, wire, self.amplitudes.iter().map(|a| a.norm_sqr())))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            n: self.n,
            m: CMatrix::outer(&self.amplitudes, &self.amplitudes),
        }
    }
}

impl QuantumState for PureState {
    fn num_qubits(&self) -> usize {
        self.n
    }

    fn apply_gate(&mut self, gate: &GateMatrix, wires: &[usize]) -> Result<()> {
        validate_wires(self.n, wires, gate.arity)?;
        apply_kernel(&mut self.amplitudes, 0, 1, self.n, gate, wires, false);
        Ok(())
    }
}

fn expect_z_diag(n: usize, wire: usize, diag: impl Iterator<Item = f64>) -> f64 {
    let m = wire_mask(n, wire);
    diag.enumerate()
        .map(|(i, p)| if i & m == 0 { p } else { -p })
        .sum()
}

/// `ρ = |ψ⟩⟨ψ|`
pub fn to_density(state: &PureState) -> DensityMatrix {
    state.to_density()
}

/// Hermitian, unit-trace, positive semidefinite operator on `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    m: CMatrix,
}

impl DensityMatrix {
    /// `|0…0⟩⟨0…0|`
    pub fn new_zero_state(n: usize) -> Result<Self> {
        Ok(PureState::new_zero_state(n)?.to_density())
    }

    /// `I / 2^n`
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(Error::Size(format!("qubit count {n} outside 1..={MAX_QUBITS}")));
        }
        let dim = 1 << n;
        let mut m = CMatrix::identity(dim);
        m.scale(C64::new(1.0 / dim as f64, 0.0));
        Ok(DensityMatrix { n, m })
    }

    /// Validates shape, Hermiticity (1e-10) and unit trace (1e-10).
    /// Positivity is not checked here.
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        let dim = m.rows();
        if !m.is_square() || dim < 2 || !dim.is_power_of_two() {
            return Err(Error::Size(format!(
                "{}×{} is not a 2^n × 2^n density matrix",
                m.rows(),
                m.cols()
            )));
        }
        let herm = m.hermiticity_residual();
        if herm >= NORM_TOL {
            return Err(Error::Invariant(format!("matrix not Hermitian (residual {herm:.3e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() >= NORM_TOL || tr.im.abs() >= NORM_TOL {
            return Err(Error::Invariant(format!("trace {tr} ≠ 1")));
        }
        Ok(DensityMatrix {
            n: dim.trailing_zeros() as usize,
            m,
        })
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        debug_assert!(m.is_square() && m.rows().is_power_of_two());
        DensityMatrix {
            n: m.rows().trailing_zeros() as usize,
            m,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.m[(r, c)]
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// `Tr(ρ²) = Σ|ρ_ij|²` for Hermitian ρ.
    pub fn purity(&self) -> f64 {
        self.m.as_slice().iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.m.hermiticity_residual()
    }

    /// `Tr(ρ Z_w)`, in `[−1, 1]`.
    pub fn expect_z(&self, wire: usize) -> Result<f64> {
        if wire >= self.n {
            return Err(Error::Wire(format!("wire {wire} out of range for {} qubits", self.n)));
        }
        let dim = self.dim();
        Ok(expect_z_diag(self.n, wire, (0..dim).map(|i| self.m[(i, i)].re)))
    }

    /// `self ⊗ rhs`; the wires of `rhs` follow those of `self`.
    pub fn kron(&self, rhs: &DensityMatrix) -> Result<DensityMatrix> {
        if self.n + rhs.n > MAX_QUBITS {
            return Err(Error::Size("tensor product exceeds qubit cap".into()));
        }
        Ok(DensityMatrix {
            n: self.n + rhs.n,
            m: self.m.kron(&rhs.m),
        })
    }

    /// Traces out `traced_wires`; the remaining wires keep their relative order.
    pub fn partial_trace(&self, traced_wires: &[usize]) -> Result<DensityMatrix> {
        validate_wires(self.n, traced_wires, traced_wires.len())?;
        if traced_wires.len() >= self.n {
            return Err(Error::Size("cannot trace out every wire".into()));
        }
        let kept: Vec<usize> = (0..self.n).filter(|w| !traced_wires.contains(w)).collect();
        let kept_offsets = subregister_offsets(self.n, &kept);
        let traced_offsets = subregister_offsets(self.n, traced_wires);
        let out_dim = kept_offsets.len();
        let mut out = CMatrix::zeros(out_dim, out_dim);
        for (r, &kr) in kept_offsets.iter().enumerate() {
            for (c, &kc) in kept_offsets.iter().enumerate() {
                out[(r, c)] = traced_offsets
                    .iter()
                    .map(|&t| self.m[(kr | t, kc | t)])
                    .sum();
            }
        }
        Ok(DensityMatrix::from_matrix_unchecked(out))
    }

    /// Minimum eigenvalue, for positivity checks.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let ev = crate::linalg::hermitian_eigenvalues(&self.m)?;
        Ok(ev.first().copied().unwrap_or(0.0))
    }

    /// Trace distance `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(0.5 * crate::linalg::trace_norm(&self.m.sub(&other.m))?)
    }
}

impl QuantumState for DensityMatrix {
    fn num_qubits(&self) -> usize {
        self.n
    }

    /// `ρ ↦ G ρ G†`
    fn apply_gate(&mut self, gate: &GateMatrix, wires: &[usize]) -> Result<()> {
        validate_wires(self.n, wires, gate.arity)?;
        let dim = self.dim();
        let data = self.m.as_mut_slice();
        apply_kernel(data, 0, dim, self.n, gate, wires, false);
        for r in 0..dim {
            apply_kernel(data, r * dim, 1, self.n, gate, wires, true);
        }
        Ok(())
    }
}

/// Basis-index contribution of every assignment of `wires` (a subregister of
/// an `n`-qubit register), enumerated with `wires[0]` as the most
/// significant bit.
pub fn subregister_offsets(n: usize, wires: &[usize]) -> Vec<usize> {
    let k = wires.len();
    (0..1usize << k)
        .map(|sub| {
            wires
                .iter()
                .enumerate()
                .filter(|(j, _)| sub & (1 << (k - 1 - j)) != 0)
                .fold(0, |acc, (_, &w)| acc | wire_mask(n, w))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn assert_amps(got: &[C64], want: &[f64]) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - c(*w)).norm() < 1e-12, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn zero_state_examples() {
        assert_amps(PureState::new_zero_state(1).unwrap().amplitudes(), &[1.0, 0.0]);
        assert_amps(PureState::new_zero_state(2).unwrap().amplitudes(), &[1.0, 0.0, 0.0, 0.0]);
        let s3 = PureState::new_zero_state(3).unwrap();
        assert_eq!(s3.amplitudes().len(), 8);
        assert_eq!(s3.amplitudes()[0], ONE);
        assert!(s3.amplitudes()[1..].iter().all(|a| *a == ZERO));
    }

    #[test]
    fn zero_state_rejects_bad_sizes() {
        assert!(matches!(PureState::new_zero_state(0), Err(Error::Size(_))));
        assert!(matches!(PureState::new_zero_state(25), Err(Error::Size(_))));
    }

    #[test]
    fn single_qubit_gates() {
        let mut s = PureState::new_zero_state(1).unwrap();
        s.apply_gate(&GateMatrix::pauli_x(), &[0]).unwrap();
        assert_amps(s.amplitudes(), &[0.0, 1.0]);

        let mut s = PureState::new_zero_state(1).unwrap();
        s.apply_gate(&GateMatrix::hadamard(), &[0]).unwrap();
        assert_amps(s.amplitudes(), &[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    }

    #[test]
    fn bell_state_from_h_and_cnot() {
        let mut s = PureState::new_zero_state(2).unwrap();
        s.apply_gate(&GateMatrix::hadamard(), &[0]).unwrap();
        s.apply_gate(&GateMatrix::cnot(), &[0, 1]).unwrap();
        assert_amps(s.amplitudes(), &[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]);
    }

    #[test]
    fn wire_zero_is_most_significant() {
        let mut s = PureState::new_zero_state(3).unwrap();
        s.apply_gate(&GateMatrix::pauli_x(), &[0]).unwrap();
        assert_eq!(s.amplitudes()[4], ONE);
        let mut s = PureState::new_zero_state(3).unwrap();
        s.apply_gate(&GateMatrix::pauli_x(), &[2]).unwrap();
        assert_eq!(s.amplitudes()[1], ONE);
    }

    #[test]
    fn reversed_wire_order_swaps_control() {
        // CNOT with control on wire 1: |01⟩ → |11⟩.
        let mut s = PureState::new_zero_state(2).unwrap();
        s.apply_gate(&GateMatrix::pauli_x(), &[1]).unwrap();
        s.apply_gate(&GateMatrix::cnot(), &[1, 0]).unwrap();
        assert_amps(s.amplitudes(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn wire_errors() {
        let mut s = PureState::new_zero_state(2).unwrap();
        assert!(matches!(s.apply_gate(&GateMatrix::cnot(), &[0, 0]), Err(Error::Wire(_))));
        assert!(matches!(s.apply_gate(&GateMatrix::hadamard(), &[2]), Err(Error::Wire(_))));
        assert!(matches!(s.apply_gate(&GateMatrix::hadamard(), &[0, 1]), Err(Error::Wire(_))));
        let mut rho = DensityMatrix::new_zero_state(2).unwrap();
        assert!(matches!(rho.apply_gate(&GateMatrix::cnot(), &[1, 5]), Err(Error::Wire(_))));
    }

    #[test]
    fn to_density_examples() {
        let rho = PureState::new_zero_state(1).unwrap().to_density();
        assert!(rho.matrix().max_abs_diff(&CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap()) < 1e-15);

        let mut plus = PureState::new_zero_state(1).unwrap();
        plus.apply_gate(&GateMatrix::hadamard(), &[0]).unwrap();
        let rho = plus.to_density();
        assert!(rho.matrix().as_slice().iter().all(|v| (v - c(0.5)).norm() < 1e-12));

        let bell = PureState::from_amplitudes(vec![c(FRAC_1_SQRT_2), ZERO, ZERO, c(FRAC_1_SQRT_2)]).unwrap();
        let rho = bell.to_density();
        for r in 0..4 {
            for col in 0..4 {
                let want = if (r == 0 || r == 3) && (col == 0 || col == 3) { 0.5 } else { 0.0 };
                assert!((rho.get(r, col) - c(want)).norm() < 1e-12);
            }
        }
        assert!((rho.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_examples() {
        let rho = DensityMatrix::new_zero_state(2).unwrap();
        let red = rho.partial_trace(&[1]).unwrap();
        assert!(red.matrix().max_abs_diff(&CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap()) < 1e-15);

        let bell = PureState::from_amplitudes(vec![c(FRAC_1_SQRT_2), ZERO, ZERO, c(FRAC_1_SQRT_2)])
            .unwrap()
            .to_density();
        let half = CMatrix::from_real(2, 2, &[0.5, 0.0, 0.0, 0.5]).unwrap();
        for w in 0..2 {
            let red = bell.partial_trace(&[w]).unwrap();
            assert!(red.matrix().max_abs_diff(&half) < 1e-12);
            assert!((red.purity() - 0.5).abs() < 1e-12);
        }
        assert!(matches!(bell.partial_trace(&[0, 1]), Err(Error::Size(_))));
    }

    #[test]
    fn expect_z_and_purity_examples() {
        let zero = DensityMatrix::new_zero_state(1).unwrap();
        assert_eq!(zero.expect_z(0).unwrap(), 1.0);
        let mut one = zero.clone();
        one.apply_gate(&GateMatrix::pauli_x(), &[0]).unwrap();
        assert_eq!(one.expect_z(0).unwrap(), -1.0);
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        assert_eq!(mixed.expect_z(0).unwrap(), 0.0);
        assert!((zero.purity() - 1.0).abs() < 1e-15);
        assert!((mixed.purity() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn from_matrix_validates() {
        let not_herm = CMatrix::from_vec(2, 2, vec![c(0.5), c(1.0), c(0.0), c(0.5)]).unwrap();
        assert!(matches!(DensityMatrix::from_matrix(not_herm), Err(Error::Invariant(_))));
        let bad_trace = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(DensityMatrix::from_matrix(bad_trace), Err(Error::Invariant(_))));
        assert!(GateMatrix::new(1, &[c(1.0), c(1.0), c(0.0), c(1.0)]).is_err());
    }

    #[test]
    fn rotation_gates_are_unitary() {
        for theta in [0.0, 0.3, -1.7, 3.0] {
            for g in [GateMatrix::rx(theta), GateMatrix::ry(theta), GateMatrix::rz(theta), GateMatrix::crx(theta)] {
                assert!(g.unitarity_residual() < 1e-14);
            }
        }
    }

    #[test]
    fn subregister_offsets_follow_wire_order() {
        assert_eq!(subregister_offsets(3, &[0, 2]), vec![0, 1, 4, 5]);
        assert_eq!(subregister_offsets(3, &[2, 0]), vec![0, 4, 1, 5]);
    }
}
