//! Central finite-difference verification of analytic gradients.

use crate::error::Result;

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compare an analytic gradient against central finite differences of `f`.
///
/// `f` must be a scalar-valued function of the flattened input point.
/// The relative error uses a small floor in the denominator so components
/// whose true gradient is zero do not fail on finite-difference noise.
pub fn grad_check<F>(
    mut f: F,
    point: &[f64],
    analytic: &[f64],
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    assert_eq!(point.len(), analytic.len(), "gradient length mismatch");
    let mut x = point.to_vec();
    let mut max_rel_err = 0.0;
    let mut worst_index = 0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x)?;
        x[i] = orig - h;
        let fm = f(&x)?;
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-3);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst_index,
        tolerance,
        pass: max_rel_err < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes() {
        // f(x) = sum x_i^2, grad = 2x
        let point = [0.7, -1.3, 2.5];
        let analytic: Vec<f64> = point.iter().map(|v| 2.0 * v).collect();
        let report = grad_check(
            |x| Ok(x.iter().map(|v| v * v).sum()),
            &point,
            &analytic,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_fails() {
        // Analytic gradient deliberately scaled by 2 must fail.
        let point = [0.7, -1.3, 2.5];
        let analytic: Vec<f64> = point.iter().map(|v| 4.0 * v).collect();
        let report = grad_check(
            |x| Ok(x.iter().map(|v| v * v).sum()),
            &point,
            &analytic,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(!report.pass);
    }
}
