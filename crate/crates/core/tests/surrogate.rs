use proptest::prelude::*;
use surqnn_core::ansatz::{forward_exact, CircuitModel, CircuitSpec, ExactMethod};
use surqnn_core::gradcheck::{finite_diff, full_gradient, probe_gradient, DEFAULT_FD_STEP};
use surqnn_core::loss::SquaredError;
use surqnn_core::surrogate::{
    descent_step_with_grad, probe_indices, sample_params, schedule, stationarity_monitor, surrogate_grad, FitConfig,
    SampleBatch, SurrogateNet, TrustRegion,
};
use surqnn_core::{LossAdapter, MeasurementModel, MeasurementVector, Observable, ParamVector};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn desk_batch(seed: u64) -> (CircuitModel, ParamVector, SampleBatch) {
    let model = CircuitModel::with_method(CircuitSpec::desk_scale(), ExactMethod::Branches);
    let theta = ParamVector::random(model.num_params(), seed);
    let thetas = sample_params(&theta, 0.1, 32, seed + 1).unwrap();
    let batch = SampleBatch::evaluate(&model, thetas).unwrap();
    (model, theta, batch)
}

#[test]
fn sample_spread_matches_sigma() {
    let center = ParamVector::random(105, 3);
    let thetas = sample_params(&center, 0.1, 32, 9).unwrap();
    assert_eq!(thetas.len(), 33);
    assert_eq!(thetas[0], center);
    let mean_std = (0..105)
        .map(|j| {
            let xs: Vec<f64> = thetas[1..].iter().map(|t| t[j] - center[j]).collect();
            let m = xs.iter().sum::<f64>() / 32.0;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 31.0).sqrt()
        })
        .sum::<f64>()
        / 105.0;
    assert!((mean_std - 0.1).abs() < 0.02, "{mean_std}");
}

#[test]
fn fitting_is_bit_identical_across_runs() {
    let (_, _, batch) = desk_batch(5);
    let cfg = FitConfig {
        epochs: 60,
        ..FitConfig::default()
    };
    let run = || {
        let mut net = SurrogateNet::new(105, &[32, 32], 4, 17).unwrap();
        let mse = net.fit(&batch, &cfg).unwrap();
        (net, mse)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(ma.to_bits(), mb.to_bits());
    assert_eq!(a, b);
}

#[test]
fn desk_fit_is_locally_faithful() {
    let (model, theta, batch) = desk_batch(0);
    let mut net = SurrogateNet::new(105, &[256, 256], 4, 0).unwrap();
    let mse = net.fit(&batch, &FitConfig::default()).unwrap();
    assert!(mse < 1e-3, "{mse}");
    assert!((net.mse(&batch).unwrap() - mse).abs() < 1e-12);
    let bound = (2.0 * batch.len() as f64 * mse).sqrt();
    assert!(bound <= (2.0 * model.num_params() as f64 * mse).sqrt());
    for (t, m) in &batch.points {
        let pred = net.predict(t).unwrap();
        assert!(norm(&pred.iter().zip(m.iter()).map(|(a, b)| a - b).collect::<Vec<_>>()) <= bound);
    }
    let exact = forward_exact(&model.spec, &theta).unwrap();
    let pred = net.predict(&theta).unwrap();
    let worst = pred.iter().zip(exact.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 0.05, "{worst}");
}

#[test]
fn constant_fit_has_flat_gradient() {
    let theta = ParamVector::random(12, 1);
    let thetas = sample_params(&theta, 0.1, 32, 2).unwrap();
    let c = MeasurementVector::new(vec![0.25, -0.5]);
    let batch = SampleBatch::new(thetas.iter().map(|t| (t.clone(), c.clone())).collect()).unwrap();
    let mut net = SurrogateNet::new(12, &[16, 16], 2, 3).unwrap();
    net.fit(&batch, &FitConfig::default()).unwrap();
    let probe = sample_params(&theta, 0.1, 5, 8).unwrap();
    for t in &probe {
        let p = net.predict(t).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3, "{p:?}");
    }
    let g = surrogate_grad(&net, &theta, &Observable::total_z(2)).unwrap();
    assert!(norm(&g) < 1e-3, "{}", norm(&g));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn surrogate_gradient_matches_differences_through_predict(seed in 0u64..10_000, w in 0usize..3) {
        let net = SurrogateNet::new(9, &[12, 12], 3, seed).unwrap();
        let theta = ParamVector::random(9, seed + 1);
        let obs = Observable::Z(w);
        let g = surrogate_grad(&net, &theta, &obs).unwrap();
        for j in 0..9 {
            let fd = finite_diff(|t| obs.eval(&net.predict(t)?), &theta, j, DEFAULT_FD_STEP).unwrap();
            prop_assert!((g[j] - fd).abs() < 1e-6, "{} vs {}", g[j], fd);
        }
    }
}

#[test]
fn zero_gradient_leaves_theta_in_place() {
    let theta = vec![0.3, -0.1];
    let mut trust = TrustRegion::default();
    let out = descent_step_with_grad(&theta, &[0.0, 0.0], 0.5, &mut trust, 1.0, |_| Ok(0.0)).unwrap();
    assert!(out.accepted);
    assert_eq!(&out.theta_next[..], &theta[..]);
    assert_eq!(out.loss_after, out.loss_before);
}

fn quadratic(t: &[f64]) -> f64 {
    t.iter().enumerate().map(|(i, x)| 0.5 * (1.0 + i as f64) * x * x).sum()
}

fn quadratic_grad(t: &[f64]) -> Vec<f64> {
    t.iter().enumerate().map(|(i, x)| (1.0 + i as f64) * x).collect()
}

#[test]
fn exact_surrogate_descends_quadratic() {
    let mut theta = vec![0.8, -0.6, 0.4, 0.2];
    let mut trust = TrustRegion::default();
    let mut accepted = 0;
    for t in 0..60 {
        let before = quadratic(&theta);
        let out = descent_step_with_grad(&theta, &quadratic_grad(&theta), schedule(t, 0.2), &mut trust, before, |c| {
            Ok(quadratic(c))
        })
        .unwrap();
        if out.accepted {
            accepted += 1;
            assert!(out.loss_after < before);
        } else {
            assert_eq!(&out.theta_next[..], &theta[..]);
        }
        assert!(out.step_norm <= 1.0 + 1e-12);
        theta = out.theta_next.into_vec();
    }
    assert!(accepted > 0);
}

#[test]
fn harmonic_partial_sums() {
    let eta0 = 0.5;
    let t_max = 1_000_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for t in 0..t_max {
        let e = schedule(t, eta0);
        s1 += e;
        s2 += e * e;
    }
    let gamma = 0.577_215_664_901_532_9;
    assert!((s1 - eta0 * ((t_max as f64).ln() + gamma)).abs() < 1e-5);
    assert!(s2 < eta0 * eta0 * std::f64::consts::PI.powi(2) / 6.0);
    assert_eq!(schedule(0, eta0), eta0);
    assert_eq!(schedule(1, eta0), eta0 / 2.0);
}

#[test]
fn monitor_sees_converged_quadratic() {
    let mut theta = vec![0.8, -0.6, 0.4];
    let mut trust = TrustRegion::new(0.3, 0.5, 1.2, 1.0).unwrap();
    let mut norms = vec![norm(&quadratic_grad(&theta))];
    let mut losses = vec![quadratic(&theta)];
    for _ in 0..200 {
        let before = quadratic(&theta);
        let out = descent_step_with_grad(&theta, &quadratic_grad(&theta), 0.3, &mut trust, before, |c| Ok(quadratic(c)))
            .unwrap();
        theta = out.theta_next.into_vec();
        norms.push(norm(&quadratic_grad(&theta)));
        losses.push(quadratic(&theta));
    }
    let r = stationarity_monitor(&norms, &losses).unwrap();
    assert!(r.final_norm < 1e-4, "{}", r.final_norm);
    assert!(!r.loss_not_decreasing);
}

#[test]
fn monitor_flags_overshooting_rate() {
    let mut theta = vec![0.8, -0.6, 0.4];
    let mut norms = Vec::new();
    let mut losses = Vec::new();
    for _ in 0..20 {
        let g = quadratic_grad(&theta);
        norms.push(norm(&g));
        losses.push(quadratic(&theta));
        theta.iter_mut().zip(&g).for_each(|(t, g)| *t -= 1.5 * g);
    }
    assert!(stationarity_monitor(&norms, &losses).unwrap().loss_not_decreasing);
}

#[test]
fn surrogate_gradient_survives_a_flat_region() {
    let spec = CircuitSpec::new(10, vec![3, 6], 6).unwrap();
    let model = CircuitModel::with_method(spec, ExactMethod::Branches);
    let p = model.num_params();
    let loss = Observable::Z(model.num_outputs() - 1);
    let probe = probe_indices(p, 16, 0);
    let theta = ParamVector::random(p, 1);
    let g = probe_gradient(&model, &theta, &loss, &probe).unwrap();
    let mean_abs = g.iter().map(|v| v.abs()).sum::<f64>() / g.len() as f64;
    assert!(mean_abs < 1e-3, "{mean_abs}");
    let batch = SampleBatch::evaluate(&model, sample_params(&theta, 0.1, 32, 2).unwrap()).unwrap();
    let mut net = SurrogateNet::new(p, &[256, 256], model.num_outputs(), 0).unwrap();
    net.fit(&batch, &FitConfig::default()).unwrap();
    let s = norm(&surrogate_grad(&net, &theta, &loss).unwrap());
    assert!(s > 1e-2, "{s}");
}

#[test]
fn descent_on_small_circuit_tracks_true_gradient() {
    let spec = CircuitSpec::new(4, vec![1], 1).unwrap();
    let model = CircuitModel::new(spec);
    let loss = SquaredError::new(vec![0.9, -0.9, 0.9]);
    let mut theta = ParamVector::random(model.num_params(), 3).into_vec();
    let mut trust = TrustRegion::default();
    let mut net = SurrogateNet::new(model.num_params(), &[64, 64], 3, 0).unwrap();
    for t in 0..10 {
        let batch = SampleBatch::evaluate(&model, sample_params(&theta, 0.1, 32, 50 + t).unwrap()).unwrap();
        net.fit(&batch, &FitConfig::default()).unwrap();
        let before = loss.loss(&model.measure(&theta).unwrap());
        let g = surrogate_grad(&net, &theta, &loss).unwrap();
        let truth = full_gradient(&model, &theta, &loss).unwrap();
        let dot: f64 = g.iter().zip(&truth).map(|(a, b)| a * b).sum();
        assert!(dot > 0.0, "step {t}: surrogate direction is not a descent direction");
        let out = descent_step_with_grad(&theta, &g, 0.5, &mut trust, before, |c| Ok(loss.loss(&model.measure(c)?)))
            .unwrap();
        if out.accepted {
            assert!(out.loss_after < before);
        }
        theta = out.theta_next.into_vec();
    }
}
