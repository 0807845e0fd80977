//! Central finite-difference gradient oracle.
//!
//! Verification-only: every analytic gradient in the crate is checked against
//! this independent approximation. It must stay free of any code path it is
//! used to verify.

use crate::error::{PilotError, Result};

/// Central-difference gradient of a deterministic scalar function, one
/// coordinate at a time: `(f(x + h e_i) - f(x - h e_i)) / (2h)`.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if step <= 0.0 {
        return Err(PilotError::Input(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut work = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let up = f(&work)?;
        work[i] = orig - step;
        let down = f(&work)?;
        work[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(PilotError::Numerical(format!(
                "non-finite function value near coordinate {i}"
            )));
        }
        grad[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Symmetric relative error with an absolute floor, the standard gradient
/// check metric.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Largest pairwise [`rel_err`] between two gradient vectors.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}
