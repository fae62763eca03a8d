//! Ground-truth gradients of the circuit: parameter-shift rules and central
//! finite differences.
//!
//! Ry/Rz angles use the two-term rule with ±π/2 shifts. The controlled Rx
//! closing each module has generator `|1⟩⟨1| ⊗ X/2` with spectrum
//! `{0, ±1/2}`, so its angle uses the four-term rule
//! `d₊[f(θ+π/2) − f(θ−π/2)] − d₋[f(θ+3π/2) − f(θ−3π/2)]`,
//! `d± = (√2 ± 1) / (4√2)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, SQRT_2};

use crate::ansatz::{angle_kind, AngleKind, MeasurementModel, ParamVector};
use crate::error::{Error, Result};
use crate::loss::{LossAdapter, Observable};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// `(f(θ + h e_i) − f(θ − h e_i)) / 2h`
pub fn finite_diff<F>(f: F, theta: &[f64], index: usize, h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    if index >= theta.len() {
        return Err(Error::Index {
            index,
            len: theta.len(),
        });
    }
    let mut probe = theta.to_vec();
    probe[index] = theta[index] + h;
    let up = f(&probe)?;
    probe[index] = theta[index] - h;
    let down = f(&probe)?;
    Ok((up - down) / (2.0 * h))
}

/// Central differences of every model output with respect to `θ_index`.
pub fn finite_diff_outputs<M: MeasurementModel + ?Sized>(
    model: &M,
    theta: &[f64],
    index: usize,
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    if index >= theta.len() {
        return Err(Error::Index {
            index,
            len: theta.len(),
        });
    }
    let mut up = theta.to_vec();
    up[index] += h;
    let mut down = theta.to_vec();
    down[index] -= h;
    let m = model.measure_batch(&[ParamVector::new(up), ParamVector::new(down)])?;
    Ok(m[0].iter().zip(m[1].iter()).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

fn shifted(theta: &[f64], index: usize, delta: f64) -> ParamVector {
    let mut v = theta.to_vec();
    v[index] += delta;
    ParamVector::new(v)
}

/// `(shift, coefficient)` pairs of the rule for the angle at `index`.
pub fn shift_terms(index: usize) -> Vec<(f64, f64)> {
    match angle_kind(index) {
        AngleKind::Rz | AngleKind::Ry => vec![(FRAC_PI_2, 0.5), (-FRAC_PI_2, -0.5)],
        AngleKind::Crx => {
            let d_plus = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
            let d_minus = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
            vec![
                (FRAC_PI_2, d_plus),
                (-FRAC_PI_2, -d_plus),
                (3.0 * FRAC_PI_2, -d_minus),
                (-3.0 * FRAC_PI_2, d_minus),
            ]
        }
    }
}

fn check_shape<M: MeasurementModel + ?Sized>(model: &M, theta: &[f64]) -> Result<()> {
    if theta.len() != model.num_params() {
        return Err(Error::Dimension {
            expected: model.num_params(),
            found: theta.len(),
        });
    }
    Ok(())
}

/// Exact derivatives of every main-qubit `⟨Z⟩` with respect to each angle
/// in `indices`, one row per index. All shifted circuits go out as a single
/// batch.
pub fn shift_rows<M: MeasurementModel + ?Sized>(
    model: &M,
    theta: &[f64],
    indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    check_shape(model, theta)?;
    let p = model.num_params();
    let mut points = Vec::new();
    let mut plan = Vec::with_capacity(indices.len());
    for &index in indices {
        if index >= p {
            return Err(Error::Index { index, len: p });
        }
        let terms = shift_terms(index);
        plan.push((points.len(), terms.clone()));
        points.extend(terms.iter().map(|&(delta, _)| shifted(theta, index, delta)));
    }
    let m = model.measure_batch(&points)?;
    let d = model.num_outputs();
    Ok(plan
        .into_iter()
        .map(|(start, terms)| {
            let mut row = vec![0.0; d];
            for (k, &(_, c)) in terms.iter().enumerate() {
                crate::nn::axpy(c, &m[start + k], &mut row);
            }
            row
        })
        .collect())
}

/// Exact derivative of every main-qubit `⟨Z⟩` with respect to `θ_index`.
pub fn shift_derivative<M: MeasurementModel + ?Sized>(model: &M, theta: &[f64], index: usize) -> Result<Vec<f64>> {
    if index >= model.num_params() {
        return Err(Error::Index {
            index,
            len: model.num_params(),
        });
    }
    Ok(shift_rows(model, theta, &[index])?.remove(0))
}

/// Parameter-shift derivative of `observable` with respect to `θ_index`.
pub fn parameter_shift<M: MeasurementModel + ?Sized>(
    model: &M,
    theta: &[f64],
    index: usize,
    observable: &Observable,
) -> Result<f64> {
    let d = shift_derivative(model, theta, index)?;
    observable.eval(&d)
}

/// Jacobian `∂m_k/∂θ_j`, stored as one row of length `d` per parameter.
pub fn jacobian<M: MeasurementModel + ?Sized>(model: &M, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let all: Vec<usize> = (0..model.num_params()).collect();
    shift_rows(model, theta, &all)
}

/// `∇_θ L(m(θ)) = Jᵀ ∂L/∂m`, with `J` from parameter shifts.
pub fn full_gradient<M: MeasurementModel + ?Sized>(
    model: &M,
    theta: &[f64],
    loss: &dyn LossAdapter,
) -> Result<Vec<f64>> {
    let m = model.measure(theta)?;
    let (_, dl_dm) = loss.loss_and_grad(&m);
    Ok(jacobian(model, theta)?
        .iter()
        .map(|row| row.iter().zip(&dl_dm).map(|(a, b)| a * b).sum())
        .collect())
}

/// Parameter-shift gradient restricted to `indices` (zeros elsewhere).
pub fn probe_gradient<M: MeasurementModel + ?Sized>(
    model: &M,
    theta: &[f64],
    loss: &dyn LossAdapter,
    indices: &[usize],
) -> Result<Vec<f64>> {
    let m = model.measure(theta)?;
    let (_, dl_dm) = loss.loss_and_grad(&m);
    let mut g = vec![0.0; model.num_params()];
    for (&j, row) in indices.iter().zip(shift_rows(model, theta, indices)?) {
        g[j] = crate::nn::dot(&row, &dl_dm);
    }
    Ok(g)
}

/// One row of a shift-versus-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub index: usize,
    pub shift_value: f64,
    pub fd_value: f64,
    pub abs_err: f64,
}

/// Compares parameter-shift and finite-difference derivatives of
/// `observable` for every parameter.
pub fn compare_all<M: MeasurementModel + ?Sized>(
    model: &M,
    theta: &[f64],
    observable: &Observable,
    h: f64,
) -> Result<Vec<GradReport>> {
    let weights = observable.weights(model.num_outputs())?;
    let dot = |v: &[f64]| -> f64 { crate::nn::dot(v, &weights) };
    let rows = jacobian(model, theta)?;
    (0..model.num_params())
        .map(|index| {
            let shift_value = dot(&rows[index]);
            let fd_value = dot(&finite_diff_outputs(model, theta, index, h)?);
            Ok(GradReport {
                index,
                shift_value,
                fd_value,
                abs_err: (shift_value - fd_value).abs(),
            })
        })
        .collect()
}

/// Sample variance of `∂L/∂θ_index` over `samples` uniformly random θ.
pub fn gradient_variance<M: MeasurementModel + ?Sized>(
    model: &M,
    index: usize,
    loss: &dyn LossAdapter,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::Config("variance needs at least two samples".into()));
    }
    let grads = (0..samples)
        .map(|s| {
            let theta = ParamVector::random(model.num_params(), seed.wrapping_add(s as u64));
            let m = model.measure(&theta)?;
            let (_, dl_dm) = loss.loss_and_grad(&m);
            let row = shift_derivative(model, &theta, index)?;
            Ok(row.iter().zip(&dl_dm).map(|(a, b)| a * b).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = grads.iter().sum::<f64>() / samples as f64;
    Ok(grads.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (samples - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{CircuitModel, CircuitSpec};
    use crate::qstate::{GateMatrix, PureState, QuantumState};

    fn ry_expectation(theta: &[f64]) -> Result<f64> {
        let mut s = PureState::new_zero_state(1)?;
        s.apply_gate(&GateMatrix::ry(theta[0]), &[0])?;
        s.expect_z(0)
    }

    #[test]
    fn finite_diff_examples() {
        let sq = |t: &[f64]| Ok(t[0] * t[0]);
        assert!((finite_diff(sq, &[1.0], 0, 1e-4).unwrap() - 2.0).abs() < 1e-6);
        let c = |_: &[f64]| Ok(3.0);
        assert_eq!(finite_diff(c, &[0.3, 0.1], 1, 1e-4).unwrap(), 0.0);
        let d = finite_diff(ry_expectation, &[FRAC_PI_2], 0, 1e-4).unwrap();
        assert!((d + 1.0).abs() < 1e-6);
        assert!(finite_diff(sq, &[1.0], 0, 0.0).is_err());
        assert!(finite_diff(sq, &[1.0], 1, 1e-4).is_err());
    }

    #[test]
    fn single_ry_shift_examples() {
        // Only the Ry on main wire 0 is non-zero, so ⟨Z₀⟩ = cos θ₁.
        let spec = CircuitSpec::new(2, alloc::vec![1], 1).unwrap();
        let model = CircuitModel::new(spec);
        let mut theta = alloc::vec![0.0; 7];
        let g0 = parameter_shift(&model, &theta, 1, &Observable::Z(0)).unwrap();
        assert!(g0.abs() < 1e-12);
        theta[1] = FRAC_PI_2;
        let g1 = parameter_shift(&model, &theta, 1, &Observable::Z(0)).unwrap();
        assert!((g1 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn index_out_of_range() {
        let model = CircuitModel::new(CircuitSpec::new(2, alloc::vec![1], 1).unwrap());
        assert!(matches!(
            parameter_shift(&model, &[0.0; 7], 7, &Observable::Z(0)),
            Err(Error::Index { index: 7, len: 7 })
        ));
    }

    #[test]
    fn crx_four_term_rule_matches_differences() {
        let spec = CircuitSpec::new(3, alloc::vec![1], 2).unwrap();
        let model = CircuitModel::new(spec);
        let theta = ParamVector::random(28, 5);
        for index in [6, 13, 20, 27] {
            let s = shift_derivative(&model, &theta, index).unwrap();
            let f = finite_diff_outputs(&model, &theta, index, 1e-4).unwrap();
            for (a, b) in s.iter().zip(&f) {
                assert!((a - b).abs() < 1e-6, "index {index}: {a} vs {b}");
            }
        }
    }
}
