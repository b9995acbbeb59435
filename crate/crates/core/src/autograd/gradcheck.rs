use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative error used by [`gradcheck`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Per-coordinate result of a central-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the analytic gradient returned by `f` with central differences.
///
/// `f` maps a point to `(value, analytic gradient)`. Returns the maximum over
/// coordinates of `|a − n| / max(1e-8, |a| + |n|)`.
pub fn gradcheck<F>(f: F, x: &Tensor, epsilon: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<(f64, Vec<f64>)>,
{
    gradcheck_report(f, x, epsilon).map(|r| r.max_rel_error)
}

pub fn gradcheck_report<F>(mut f: F, x: &Tensor, epsilon: f64) -> Result<GradcheckReport>
where
    F: FnMut(&Tensor) -> Result<(f64, Vec<f64>)>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Oracle(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let (value, analytic) = f(x)?;
    if !value.is_finite() {
        return Err(Error::Oracle(format!(
            "f is not finite at the base point ({value})"
        )));
    }
    if analytic.len() != x.len() {
        return Err(Error::Oracle(format!(
            "analytic gradient has {} entries for {} coordinates",
            analytic.len(),
            x.len()
        )));
    }
    let mut numeric = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        let (hi, lo) = (orig + epsilon, orig - epsilon);
        probe.data_mut()[i] = hi;
        let (plus, _) = f(&probe)?;
        probe.data_mut()[i] = lo;
        let (minus, _) = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle(format!(
                "f is not finite at coordinate {i} perturbed by ±{epsilon}"
            )));
        }
        numeric.push((plus - minus) / (hi - lo));
    }
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .enumerate()
        .fold(
            (0, 0.0),
            |best, (i, e)| if e > best.1 { (i, e) } else { best },
        );
    Ok(GradcheckReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    })
}
