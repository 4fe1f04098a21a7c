//! Central finite-difference check of analytic adapter gradients.

use serde::{Deserialize, Serialize};

use crate::adapters::Adapter;
use crate::error::{Result, TeraError};
use crate::tensor::Matrix;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// A smooth scalar loss of the materialized update.
pub trait DeltaLoss {
    fn value(&self, delta: &Matrix) -> f64;
    /// `∂L/∂ΔW`.
    fn grad(&self, delta: &Matrix) -> Matrix;
}

/// `½ ‖W* − ΔW‖_F²`.
#[derive(Debug, Clone)]
pub struct FrobeniusLoss {
    pub target: Matrix,
}

impl DeltaLoss for FrobeniusLoss {
    fn value(&self, delta: &Matrix) -> f64 {
        let r = self.target.sub(delta).expect("target shape");
        0.5 * r.data().iter().map(|v| v * v).sum::<f64>()
    }

    fn grad(&self, delta: &Matrix) -> Matrix {
        delta.sub(&self.target).expect("target shape")
    }
}

/// `⟨U, ΔW⟩ + ½ c ‖ΔW‖_F²`: linear plus an optional quadratic term.
#[derive(Debug, Clone)]
pub struct LinearQuadraticLoss {
    pub weight: Matrix,
    pub quadratic: f64,
}

impl DeltaLoss for LinearQuadraticLoss {
    fn value(&self, delta: &Matrix) -> f64 {
        self.weight.inner(delta).expect("weight shape")
            + 0.5 * self.quadratic * delta.data().iter().map(|v| v * v).sum::<f64>()
    }

    fn grad(&self, delta: &Matrix) -> Matrix {
        self.weight.add(&delta.scale(self.quadratic)).expect("weight shape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat parameter index with the worst error.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Relative error with denominator `max(|a|, |b|, 1e-12)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Central differences `(L(p + h e) − L(p − h e)) / 2h` on every trainable
/// coordinate, against the adapter's analytic gradient.
pub fn finite_difference_check<A, L>(adapter: &A, loss: &L, h: f64) -> Result<GradCheckReport>
where
    A: Adapter + Clone,
    L: DeltaLoss + ?Sized,
{
    if !(h > 0.0) {
        return Err(TeraError::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let analytic = adapter.gradient(&loss.grad(&adapter.materialize_delta()))?;
    let p0 = adapter.params();
    let mut probe = adapter.clone();
    let mut p = p0.clone();
    let mut numeric = Vec::with_capacity(p0.len());
    for i in 0..p0.len() {
        p[i] = p0[i] + h;
        probe.set_params(&p)?;
        let plus = loss.value(&probe.materialize_delta());
        p[i] = p0[i] - h;
        probe.set_params(&p)?;
        let minus = loss.value(&probe.materialize_delta());
        p[i] = p0[i];
        numeric.push((plus - minus) / (2.0 * h));
    }
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    })
}
