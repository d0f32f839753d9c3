//! Recovery quality metrics.

use crate::error::{Result, TrcError};
use crate::tensor::DenseTensor;

/// Mean squared error over all entries.
pub fn mse(reference: &DenseTensor, estimate: &DenseTensor) -> Result<f64> {
    if reference.dims() != estimate.dims() {
        return Err(TrcError::shape(reference.dims(), estimate.dims()));
    }
    let sum: f64 = reference
        .values()
        .iter()
        .zip(estimate.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// Peak signal-to-noise ratio in decibels: 10 log10(peak^2 / MSE) over all
/// entries. Identical tensors report +infinity.
pub fn psnr(reference: &DenseTensor, estimate: &DenseTensor, peak: f64) -> Result<f64> {
    let err = mse(reference, estimate)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}
