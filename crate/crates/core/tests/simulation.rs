mod common;

use common::*;
use proptest::prelude::*;
use surqnn_core::ansatz::{
    evolve_exact, forward_branches, forward_exact, measure_reset_channel, trajectory_estimate, u_module, CircuitSpec,
};
use surqnn_core::channels::main_register_purity;
use surqnn_core::qstate::QuantumState;
use surqnn_core::{CMatrix, DensityMatrix, GateMatrix, ParamVector, PureState, C64};

fn random_state(n: usize, seed: &[f64]) -> PureState {
    let amps: Vec<C64> = (0..1usize << n)
        .map(|i| C64::new(seed[(2 * i) % seed.len()] + 0.1 * i as f64, seed[(2 * i + 1) % seed.len()]))
        .collect();
    PureState::normalized(amps).unwrap()
}

fn random_mixed(n: usize, seed: &[f64]) -> DensityMatrix {
    let dim = 1usize << n;
    let a: Vec<C64> = (0..dim * dim)
        .map(|i| C64::new(seed[i % seed.len()] + (i as f64 * 0.37).sin(), seed[(i + 3) % seed.len()]))
        .collect();
    let a = CMatrix::from_vec(dim, dim, a).unwrap();
    let mut w = a.matmul(&a.adjoint()).unwrap();
    let t = w.trace();
    w.scale(C64::new(1.0 / t.re, 0.0));
    DensityMatrix::from_matrix(w).unwrap()
}

fn gate_strategy() -> impl Strategy<Value = (GateMatrix, bool)> {
    prop_oneof![
        prop::collection::vec(-3.2f64..3.2, 7).prop_map(|a| (u_module(&a).unwrap(), true)),
        (-3.2f64..3.2, -3.2f64..3.2, -3.2f64..3.2).prop_map(|(x, y, z)| {
            let g = GateMatrix::rz(x).compose(&GateMatrix::ry(y)).unwrap().compose(&GateMatrix::rx(z)).unwrap();
            (g, false)
        }),
    ]
}

fn wires_for(two: bool, n: usize, a: usize, b: usize) -> Vec<usize> {
    let a = a % n;
    if !two {
        return vec![a];
    }
    let b = (a + 1 + b % (n - 1)) % n;
    vec![a, b]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_preserve_norm_and_match_dense(
        (g, two) in gate_strategy(),
        n in 2usize..=4,
        a in 0usize..8,
        b in 0usize..8,
        seed in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let wires = wires_for(two, n, a, b);
        let psi = random_state(n, &seed);
        let mut out = psi.clone();
        out.apply_gate(&g, &wires).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-10);

        let dense = embed(&g, &wires, n);
        let v0 = V::from_iterator(1 << n, psi.amplitudes().iter().map(|z| c(*z)));
        let want = dense * v0;
        for (got, w) in out.amplitudes().iter().zip(want.iter()) {
            prop_assert!((c(*got) - w).norm() < 1e-12);
        }

        let mut rho = psi.to_density();
        rho.apply_gate(&g, &wires).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(rho.hermiticity_residual() < 1e-10);
        prop_assert!(rho.matrix().max_abs_diff(out.to_density().matrix()) < 1e-10);
    }

    #[test]
    fn mixed_states_keep_trace_hermiticity_and_psd(
        (g, two) in gate_strategy(),
        n in 2usize..=4,
        a in 0usize..8,
        b in 0usize..8,
        seed in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let wires = wires_for(two, n, a, b);
        let mut rho = random_mixed(n, &seed);
        rho.apply_gate(&g, &wires).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(rho.hermiticity_residual() < 1e-10);
        prop_assert!(min_eigenvalue(&from_lib(rho.matrix())) >= -1e-9);
    }

    #[test]
    fn expect_z_matches_dense_trace(n in 1usize..=4, w in 0usize..4, seed in prop::collection::vec(-1.0f64..1.0, 8)) {
        let w = w % n;
        let rho = random_mixed(n, &seed);
        let want = expect(&from_lib(rho.matrix()), &z_on(n, w));
        let got = rho.expect_z(w).unwrap();
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&got));
    }

    #[test]
    fn partial_trace_of_product_recovers_factor(
        na in 1usize..=2,
        nb in 1usize..=2,
        s1 in prop::collection::vec(-1.0f64..1.0, 6),
        s2 in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let ra = random_mixed(na, &s1);
        let rb = random_mixed(nb, &s2);
        let prod = ra.kron(&rb).unwrap();
        let b_wires: Vec<usize> = (na..na + nb).collect();
        let back = prod.partial_trace(&b_wires).unwrap();
        prop_assert!(back.matrix().max_abs_diff(ra.matrix()) < 1e-12);
        let a_wires: Vec<usize> = (0..na).collect();
        let other = prod.partial_trace(&a_wires).unwrap();
        let oracle = partial_trace(&from_lib(prod.matrix()), na + nb, &a_wires);
        prop_assert!(max_diff(&from_lib(other.matrix()), &oracle) < 1e-12);
    }

    #[test]
    fn measure_reset_output_is_a_state(n in 2usize..=4, seed in prop::collection::vec(-1.0f64..1.0, 8), anc in 0usize..4) {
        let rho = random_mixed(n, &seed);
        let ancillas = [anc % n];
        let out = measure_reset_channel(&rho, &ancillas).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(out.hermiticity_residual() < 1e-10);
        prop_assert!(min_eigenvalue(&from_lib(out.matrix())) >= -1e-9);
        let marginal = out.partial_trace(&(0..n).filter(|&w| w != ancillas[0]).collect::<Vec<_>>()).unwrap();
        prop_assert!((marginal.get(0, 0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_is_bounded_and_trace_preserving(seed in 0u64..1000, layers in 1usize..=3) {
        let spec = CircuitSpec::new(4, vec![1], layers).unwrap();
        let theta = ParamVector::random(spec.param_count(), seed);
        let m = forward_exact(&spec, &theta).unwrap();
        prop_assert!(m.iter().all(|v| (-1.0..=1.0).contains(v)));
        let rho = evolve_exact(&spec, &theta).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
    }
}

#[test]
fn exact_forward_matches_branch_enumeration() {
    for (spec, seed) in [
        (CircuitSpec::new(4, vec![1, 3], 2).unwrap(), 0),
        (CircuitSpec::desk_scale(), 0),
        (CircuitSpec::desk_scale(), 11),
    ] {
        let theta = ParamVector::random(spec.param_count(), seed);
        let want = branch_forward(&spec, &theta);
        let got = forward_exact(&spec, &theta).unwrap();
        let fast = forward_branches(&spec, &theta).unwrap();
        for ((g, f), w) in got.iter().zip(fast.iter()).zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            assert!((f - w).abs() < 1e-12, "{f} vs {w}");
        }
    }
}

#[test]
fn exact_evolution_matches_dense_density_oracle() {
    let spec = CircuitSpec::new(4, vec![1, 3], 2).unwrap();
    let theta = ParamVector::random(spec.param_count(), 3);
    let want = density_forward(&spec, &theta);
    let got = from_lib(evolve_exact(&spec, &theta).unwrap().matrix());
    assert!(max_diff(&got, &want) < 1e-12);
    assert!(min_eigenvalue(&got) >= -1e-9);
}

#[test]
fn without_ancillas_the_circuit_is_unitary() {
    let spec = CircuitSpec::new(3, vec![], 2).unwrap();
    let theta = ParamVector::random(spec.param_count(), 5);
    let rho = evolve_exact(&spec, &theta).unwrap();
    assert!((rho.purity() - 1.0).abs() < 1e-10);
    let per = spec.params_per_layer();
    let mut psi = V::zeros(8);
    psi[0] = C::new(1.0, 0.0);
    for l in 0..spec.layers() {
        psi = layer_unitary(&spec, &theta[l * per..(l + 1) * per]) * psi;
    }
    let m = forward_exact(&spec, &theta).unwrap();
    for (w, got) in m.iter().enumerate() {
        let want = (psi.adjoint() * z_on(3, w) * &psi)[(0, 0)].re;
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn controlled_flip_onto_ancilla_dephases_main_qubit() {
    // Ry(t) on the main wire, then CRx(π) onto the ancilla: a CNOT up to a
    // phase on the |1⟩ block. Two Kraus branches |0⟩⟨0| and |1⟩⟨1|.
    let t: f64 = 1.1;
    let spec = CircuitSpec::new(2, vec![1], 1).unwrap();
    let mut theta = vec![0.0; 7];
    theta[1] = t;
    theta[6] = std::f64::consts::PI;
    let m = forward_exact(&spec, &theta).unwrap();
    let main = V::from_vec(vec![C::new((t / 2.0).cos(), 0.0), C::new((t / 2.0).sin(), 0.0)]);
    let rho_in = &main * main.adjoint();
    let k0 = M::from_row_slice(2, 2, &[C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)]);
    let k1 = M::from_row_slice(2, 2, &[C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)]);
    let rho_out = &k0 * &rho_in * k0.adjoint() + &k1 * &rho_in * k1.adjoint();
    let z = M::from_row_slice(2, 2, &[C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(-1.0, 0.0)]);
    assert!((m[0] - expect(&rho_out, &z)).abs() < 1e-12);
    let purity = (&rho_out * &rho_out).trace().re;
    assert!((main_register_purity(&spec, &theta).unwrap() - purity).abs() < 1e-12);
    assert!(purity < 0.99);
}

#[test]
fn trajectories_agree_with_exact_at_many_shots() {
    let spec = CircuitSpec::desk_scale();
    let theta = ParamVector::random(spec.param_count(), 0);
    let exact = forward_exact(&spec, &theta).unwrap();
    let est = trajectory_estimate(&spec, &theta, 100_000, 1).unwrap();
    for ((m, e), s) in est.mean.iter().zip(exact.iter()).zip(&est.std_error) {
        assert!((m - e).abs() <= 3.0 * s, "{m} vs {e} (sigma {s})");
    }
    let zero = trajectory_estimate(&spec, &vec![0.0; spec.param_count()], 50, 2).unwrap();
    assert!(zero.mean.iter().all(|v| *v == 1.0));
}

#[test]
fn entangling_layers_leave_main_register_mixed() {
    let spec = CircuitSpec::desk_scale();
    for seed in 0..10 {
        let theta = ParamVector::random(spec.param_count(), seed);
        assert!(main_register_purity(&spec, &theta).unwrap() < 1.0 - 1e-6);
    }
}
