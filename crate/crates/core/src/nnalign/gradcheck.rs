//! Central finite-difference gradient checking.

use rand::Rng;

use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_abs_error: f64,
    /// `max |a - n| / max(1, |n|)` over all coordinates.
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Compares `analytic` with central differences of `f` at `probe_count`
/// randomly chosen coordinates of `theta` (all of them when `probe_count`
/// covers the whole vector).
///
/// `f` is evaluated twice at `theta` first; differing results are reported as
/// a determinism error since the comparison would be meaningless.
pub fn finite_difference_check<F, R>(
    mut f: F,
    theta: &[f64],
    analytic: &[f64],
    probe_count: usize,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let step = FD_STEP;
    if theta.len() != analytic.len() {
        return Err(Error::InvalidArgument(format!(
            "{} parameters but {} gradient entries",
            theta.len(),
            analytic.len()
        )));
    }
    let a = f(theta);
    let b = f(theta);
    if a.to_bits() != b.to_bits() {
        return Err(Error::Determinism(format!("objective returned {a} then {b}")));
    }
    let mut probes: Vec<usize> = if probe_count >= theta.len() {
        (0..theta.len()).collect()
    } else {
        rand::seq::index::sample(rng, theta.len(), probe_count).into_vec()
    };
    probes.sort_unstable();
    let mut x = theta.to_vec();
    let mut report = GradCheckReport {
        checked: probes.len(),
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for i in probes {
        let orig = x[i];
        x[i] = orig + step;
        let up = f(&x);
        x[i] = orig - step;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let abs = (analytic[i] - numeric).abs();
        let rel = abs / numeric.abs().max(1.0);
        if !rel.is_finite() {
            return Err(Error::Numeric(format!("non-finite difference at index {i}")));
        }
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}
