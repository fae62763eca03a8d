//! Dense reference simulators built on nalgebra. They share only gate
//! definitions with the library and nothing of its evolution code.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};
use surqnn_core::ansatz::{u_module, CircuitSpec};
use surqnn_core::{CMatrix, GateMatrix, C64};

pub type C = Complex<f64>;
pub type M = DMatrix<C>;
pub type V = DVector<C>;

pub fn c(z: C64) -> C {
    C::new(z.re, z.im)
}

pub fn from_lib(m: &CMatrix) -> M {
    M::from_fn(m.rows(), m.cols(), |r, k| c(m.as_slice()[r * m.cols() + k]))
}

pub fn max_diff(a: &M, b: &M) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn bit(idx: usize, n: usize, w: usize) -> usize {
    (idx >> (n - 1 - w)) & 1
}

/// `g` on `wires` of an `n`-qubit register, written out entry by entry.
pub fn embed(g: &GateMatrix, wires: &[usize], n: usize) -> M {
    let dim = 1usize << n;
    let sub = |idx: usize| wires.iter().fold(0, |acc, &w| (acc << 1) | bit(idx, n, w));
    M::from_fn(dim, dim, |r, k| {
        let same_elsewhere = (0..n).filter(|w| !wires.contains(w)).all(|w| bit(r, n, w) == bit(k, n, w));
        if same_elsewhere {
            c(g.get(sub(r), sub(k)))
        } else {
            C::new(0.0, 0.0)
        }
    })
}

pub fn z_on(n: usize, w: usize) -> M {
    let dim = 1usize << n;
    M::from_fn(dim, dim, |r, k| {
        if r == k {
            C::new(if bit(r, n, w) == 0 { 1.0 } else { -1.0 }, 0.0)
        } else {
            C::new(0.0, 0.0)
        }
    })
}

/// Dense unitary of one ladder layer.
pub fn layer_unitary(spec: &CircuitSpec, layer_params: &[f64]) -> M {
    let n = spec.num_qubits();
    let mut u = M::identity(1 << n, 1 << n);
    for ((a, b), angles) in spec.pairs().into_iter().zip(layer_params.chunks_exact(7)) {
        u = embed(&u_module(angles).unwrap(), &[a, b], n) * u;
    }
    u
}

/// `|x_anc → 0⟩⟨x_anc|` restricted to basis states whose ancilla bits read `x`.
pub fn reset_branch(n: usize, ancillas: &[usize], x: usize) -> M {
    let dim = 1usize << n;
    let mut k = M::zeros(dim, dim);
    for i in 0..dim {
        let bits = ancillas.iter().fold(0, |acc, &w| (acc << 1) | bit(i, n, w));
        if bits == x {
            let cleared = ancillas.iter().fold(i, |acc, &w| acc & !(1 << (n - 1 - w)));
            k[(cleared, i)] = C::new(1.0, 0.0);
        }
    }
    k
}

/// Full density-matrix evolution of the measure-and-reset circuit.
pub fn density_forward(spec: &CircuitSpec, theta: &[f64]) -> M {
    let n = spec.num_qubits();
    let dim = 1usize << n;
    let mut rho = M::zeros(dim, dim);
    rho[(0, 0)] = C::new(1.0, 0.0);
    let per = spec.params_per_layer();
    let branches: Vec<M> = (0..1usize << spec.ancillas().len())
        .map(|x| reset_branch(n, spec.ancillas(), x))
        .collect();
    for l in 0..spec.layers() {
        let u = layer_unitary(spec, &theta[l * per..(l + 1) * per]);
        let r = &u * rho * u.adjoint();
        rho = branches.iter().map(|k| k * &r * k.adjoint()).fold(M::zeros(dim, dim), |a, b| a + b);
    }
    rho
}

/// Sum over every ancilla outcome sequence of unnormalized pure branches.
pub fn branch_forward(spec: &CircuitSpec, theta: &[f64]) -> Vec<f64> {
    let n = spec.num_qubits();
    let per = spec.params_per_layer();
    let us: Vec<M> = (0..spec.layers())
        .map(|l| layer_unitary(spec, &theta[l * per..(l + 1) * per]))
        .collect();
    let ks: Vec<M> = (0..1usize << spec.ancillas().len())
        .map(|x| reset_branch(n, spec.ancillas(), x))
        .collect();
    let mains = spec.main_wires();
    let zs: Vec<M> = mains.iter().map(|&w| z_on(n, w)).collect();
    let mut out = vec![0.0; mains.len()];
    let mut psi0 = V::zeros(1 << n);
    psi0[0] = C::new(1.0, 0.0);
    fn walk(psi: V, layer: usize, us: &[M], ks: &[M], zs: &[M], out: &mut [f64]) {
        if layer == us.len() {
            for (o, z) in out.iter_mut().zip(zs) {
                *o += (psi.adjoint() * z * &psi)[(0, 0)].re;
            }
            return;
        }
        let v = &us[layer] * psi;
        for k in ks {
            let b = k * &v;
            if b.norm() > 0.0 {
                walk(b, layer + 1, us, ks, zs, out);
            }
        }
    }
    walk(psi0, 0, &us, &ks, &zs, &mut out);
    out
}

/// Reduced state after tracing out `traced` wires, by explicit summation.
pub fn partial_trace(rho: &M, n: usize, traced: &[usize]) -> M {
    let keep: Vec<usize> = (0..n).filter(|w| !traced.contains(w)).collect();
    let kd = 1usize << keep.len();
    let mut out = M::zeros(kd, kd);
    for r in 0..1usize << n {
        for k in 0..1usize << n {
            if traced.iter().all(|&w| bit(r, n, w) == bit(k, n, w)) {
                let rr = keep.iter().fold(0, |a, &w| (a << 1) | bit(r, n, w));
                let kk = keep.iter().fold(0, |a, &w| (a << 1) | bit(k, n, w));
                out[(rr, kk)] += rho[(r, k)];
            }
        }
    }
    out
}

pub fn expect(rho: &M, op: &M) -> f64 {
    (rho * op).trace().re
}

pub fn min_eigenvalue(rho: &M) -> f64 {
    let h = (rho + rho.adjoint()) * C::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}
