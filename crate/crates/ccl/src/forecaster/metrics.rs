//! Forecast error metric.

use crate::error::{Error, Result};

/// Coefficient of variation of the RMSE:
/// `sqrt(sum((y_i - yhat_i)^2) / n) / (sum(y_i) / n)`.
///
/// Scale-invariant under joint positive scaling of `y` and `yhat`. Errors
/// when the target mean is zero rather than returning infinity.
pub fn cv_rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(Error::shape(
            "cv_rmse",
            "two equal nonempty lengths",
            format!("{} vs {}", y.len(), y_hat.len()),
        ));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::ZeroMeanTarget);
    }
    let mse = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    Ok(mse.sqrt() / mean)
}
