//! Scalar losses on a measurement vector, with their gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Maps a measurement vector `m` to `(L(m), ∂L/∂m)`.
pub trait LossAdapter {
    fn loss_and_grad(&self, m: &[f64]) -> (f64, Vec<f64>);

    fn loss(&self, m: &[f64]) -> f64 {
        self.loss_and_grad(m).0
    }
}

/// A linear functional of the main-qubit expectations.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// `⟨Z⟩` of the k-th main qubit.
    Z(usize),
    /// `Σ_k w_k ⟨Z_k⟩`.
    Weighted(Vec<f64>),
}

impl Observable {
    /// Sum of all main-qubit `⟨Z⟩`.
    pub fn total_z(d: usize) -> Self {
        Observable::Weighted(vec![1.0; d])
    }

    pub fn weights(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            Observable::Z(k) if *k < d => {
                let mut w = vec![0.0; d];
                w[*k] = 1.0;
                Ok(w)
            }
            Observable::Z(k) => Err(Error::Index { index: *k, len: d }),
            Observable::Weighted(w) if w.len() == d => Ok(w.clone()),
            Observable::Weighted(w) => Err(Error::Dimension {
                expected: d,
                found: w.len(),
            }),
        }
    }

    pub fn eval(&self, m: &[f64]) -> Result<f64> {
        Ok(self.weights(m.len())?.iter().zip(m).map(|(w, v)| w * v).sum())
    }
}

impl LossAdapter for Observable {
    fn loss_and_grad(&self, m: &[f64]) -> (f64, Vec<f64>) {
        let w = self
            .weights(m.len())
            .unwrap_or_else(|e| panic!("observable does not fit measurement: {e}"));
        (w.iter().zip(m).map(|(a, b)| a * b).sum(), w)
    }
}

/// `½ ‖m − target‖²`
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredError {
    pub target: Vec<f64>,
}

impl SquaredError {
    pub fn new(target: Vec<f64>) -> Self {
        SquaredError { target }
    }
}

impl LossAdapter for SquaredError {
    fn loss_and_grad(&self, m: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(m.len(), self.target.len(), "target and measurement lengths differ");
        let grad: Vec<f64> = m.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        (0.5 * grad.iter().map(|g| g * g).sum::<f64>(), grad)
    }
}
