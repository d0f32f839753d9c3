//! M-estimator loss families and the half-quadratic machinery.
//!
//! Each family provides the loss f, its derivative f', the half-quadratic
//! weight f'(x)/x (continuously extended to 1 at x = 0), and the convex dual
//! potential phi such that min_q (q x^2 / 2 + phi(q)) = f(x) with the
//! minimizer q = weight(x). The shape parameter c is re-estimated from the
//! residual quartiles each solver iteration, floored at c_min.

use crate::error::{Result, TrcError};
use crate::tensor::DenseTensor;

/// The supported loss families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorFamily {
    Huber,
    Welsch,
    Cauchy,
}

impl EstimatorFamily {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorFamily::Huber => "huber",
            EstimatorFamily::Welsch => "welsch",
            EstimatorFamily::Cauchy => "cauchy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "huber" => Ok(EstimatorFamily::Huber),
            "welsch" => Ok(EstimatorFamily::Welsch),
            "cauchy" => Ok(EstimatorFamily::Cauchy),
            other => Err(TrcError::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// A loss family together with its shape parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimator {
    pub family: EstimatorFamily,
    pub c: f64,
}

impl Estimator {
    pub fn new(family: EstimatorFamily, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(TrcError::InvalidArgument(format!(
                "shape parameter must be positive, got {c}"
            )));
        }
        Ok(Self { family, c })
    }

    /// Loss value f(x); even, nonnegative, f(0) = 0. Evaluated through the
    /// ratio x/c so huge-but-finite arguments do not overflow.
    pub fn loss(&self, x: f64) -> f64 {
        let c = self.c;
        let r = x / c;
        match self.family {
            EstimatorFamily::Welsch => c * c * (1.0 - (-0.5 * r * r).exp()),
            EstimatorFamily::Cauchy => 0.5 * c * c * (1.0 + r * r).ln(),
            EstimatorFamily::Huber => {
                if x.abs() <= c {
                    0.5 * x * x
                } else {
                    c * x.abs() - 0.5 * c * c
                }
            }
        }
    }

    /// Derivative f'(x).
    pub fn deriv(&self, x: f64) -> f64 {
        let c = self.c;
        let r = x / c;
        match self.family {
            EstimatorFamily::Welsch => x * (-0.5 * r * r).exp(),
            EstimatorFamily::Cauchy => x / (1.0 + r * r),
            EstimatorFamily::Huber => {
                if x.abs() <= c {
                    x
                } else {
                    c * x.signum()
                }
            }
        }
    }

    /// Half-quadratic weight f'(x)/x in (0, 1]; the x = 0 limit is 1.
    pub fn weight(&self, x: f64) -> f64 {
        let c = self.c;
        let r = x / c;
        match self.family {
            EstimatorFamily::Welsch => (-0.5 * r * r).exp(),
            EstimatorFamily::Cauchy => 1.0 / (1.0 + r * r),
            EstimatorFamily::Huber => {
                if x.abs() <= c {
                    1.0
                } else {
                    c / x.abs()
                }
            }
        }
    }

    /// Dual potential phi(q) of the half-quadratic form, defined on (0, 1].
    pub fn hq_dual(&self, q: f64) -> f64 {
        let c2 = self.c * self.c;
        match self.family {
            EstimatorFamily::Welsch => c2 * (q * q.ln() - q + 1.0),
            EstimatorFamily::Cauchy => 0.5 * c2 * (q - q.ln() - 1.0),
            EstimatorFamily::Huber => 0.5 * c2 * (1.0 / q - 1.0),
        }
    }
}

/// Which quantiles feed the inner max of the shape-parameter rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantileMode {
    /// max(|Q(0.25)|, |Q(0.75)|): captures spread on either tail.
    #[default]
    Magnitude,
    /// max(Q(0.25), Q(0.75)) on signed values.
    Signed,
}

/// Parameters of the adaptive shape-parameter schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveC {
    pub eta: f64,
    pub c_min: f64,
    pub quantile_mode: QuantileMode,
}

impl Default for AdaptiveC {
    fn default() -> Self {
        Self {
            eta: 4.0,
            c_min: 0.15,
            quantile_mode: QuantileMode::Magnitude,
        }
    }
}

/// Linear-interpolation quantile of a sorted slice at position q*(n-1).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Shape parameter from the supported residuals:
/// c = max(eta * max(Q(0.25), Q(0.75)), c_min), quantiles per the configured mode.
pub fn adapt_c(cfg: &AdaptiveC, residuals_on_support: &[f64]) -> Result<f64> {
    if residuals_on_support.is_empty() {
        return Err(TrcError::InvalidArgument(
            "cannot adapt shape parameter from an empty residual vector".into(),
        ));
    }
    let mut sorted = residuals_on_support.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite residual"));
    let q25 = quantile_sorted(&sorted, 0.25);
    let q75 = quantile_sorted(&sorted, 0.75);
    let inner = match cfg.quantile_mode {
        QuantileMode::Magnitude => q25.abs().max(q75.abs()),
        QuantileMode::Signed => q25.max(q75),
    };
    Ok((cfg.eta * inner).max(cfg.c_min))
}

/// Half-quadratic weight tensor: weight(residual) on the support, 0 off it.
pub fn weight_tensor(
    estimator: &Estimator,
    residual: &DenseTensor,
    support_mask: &DenseTensor,
) -> Result<DenseTensor> {
    if residual.dims() != support_mask.dims() {
        return Err(TrcError::shape(residual.dims(), support_mask.dims()));
    }
    let mut out = DenseTensor::zeros(residual.dims())?;
    for ((o, r), m) in out
        .values_mut()
        .iter_mut()
        .zip(residual.values())
        .zip(support_mask.values())
    {
        if *m != 0.0 {
            *o = estimator.weight(*r);
        }
    }
    Ok(out)
}
