//! Confidence intervals for the streaming quantile estimate.
//!
//! Standardized by √η, the stationary law of the SGD iterate is asymptotically
//! normal with variance τ(1−τ)/(2f(θ(τ))), where f is the sampling density at
//! the quantile. Plugging the online density estimate f̂ into that variance
//! gives the two-sided interval
//!
//! ```text
//! θ_n ± z_{1−α/2} · sqrt(η · τ(1−τ) / (2 f̂))
//! ```
//!
//! whose coverage approaches 1−α as η shrinks and the run length grows. The
//! √η factor is what makes the width track the actual spread of the iterate
//! across different learning rates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantile::RationalQuantile;
use crate::special;

/// Density estimates below this floor make the interval effectively infinite;
/// the constructor refuses them and the harness reports such replications
/// separately.
pub const DENSITY_FLOOR: f64 = 1e-8;

/// A symmetric two-sided confidence interval for the quantile.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
    /// Confidence level 1 − α.
    pub level: f64,
    pub learning_rate: f64,
    pub f_hat: f64,
}

impl ConfidenceInterval {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() <= self.half_width
    }
}

/// Variance τ(1−τ)/(2·f_hat) of the √η-standardized limit distribution.
pub fn asymptotic_variance(quantile: RationalQuantile, f_hat: f64) -> Result<f64> {
    if !(f_hat.is_finite() && f_hat > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "density estimate must be positive, got {f_hat}"
        )));
    }
    let tau = quantile.value();
    Ok(tau * (1.0 - tau) / (2.0 * f_hat))
}

/// Builds the (1−α) interval around the current iterate.
pub fn confidence_interval(
    theta_n: f64,
    learning_rate: f64,
    quantile: RationalQuantile,
    f_hat: f64,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if !(learning_rate.is_finite() && learning_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    if !(f_hat.is_finite() && f_hat >= DENSITY_FLOOR) {
        return Err(Error::DensityFloor(f_hat));
    }
    let z = z_quantile(1.0 - alpha / 2.0)?;
    let half_width = z * (learning_rate * asymptotic_variance(quantile, f_hat)?).sqrt();
    Ok(ConfidenceInterval {
        center: theta_n,
        half_width,
        level: 1.0 - alpha,
        learning_rate,
        f_hat,
    })
}

/// Standard normal quantile Φ⁻¹(prob), accurate to better than 1e-9.
pub fn z_quantile(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "probability must lie in (0,1), got {prob}"
        )));
    }
    Ok(special::normal_quantile(prob))
}
