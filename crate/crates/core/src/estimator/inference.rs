use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::fit::TailIndexFit;
use super::likelihood::TailSample;
use super::threshold::TailThreshold;
use crate::error::{Error, Result};
use crate::models::ObservationSet;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub standard_error: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

fn covariance(fit: &TailIndexFit) -> Result<&nalgebra::DMatrix<f64>> {
    fit.covariance.as_ref().ok_or_else(|| Error::RankDeficient {
        eigenvalues: fit.gram_eigs.clone(),
        floor: 0.0,
    })
}

pub fn standard_errors(fit: &TailIndexFit) -> Result<Vec<f64>> {
    let cov = covariance(fit)?;
    Ok((0..fit.p()).map(|j| cov[(j, j)].sqrt()).collect())
}

/// Normal-approximation intervals `theta_j +- z * se_j`.
pub fn confidence_intervals(fit: &TailIndexFit, level: f64) -> Result<Vec<ConfidenceInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let z = stats::standard_normal_quantile(0.5 * (1.0 + level));
    Ok(standard_errors(fit)?
        .into_iter()
        .zip(fit.theta_hat.iter())
        .map(|(se, &estimate)| ConfidenceInterval {
            estimate,
            standard_error: se,
            lower: estimate - z * se,
            upper: estimate + z * se,
        })
        .collect())
}

/// `sqrt(n0) U (theta_hat - theta)` with `gram = U'U` (upper Cholesky factor);
/// approximately `N(0, I_p)` at the true `theta`.
pub fn standardized_deviation(fit: &TailIndexFit, theta: &DVector<f64>) -> Result<DVector<f64>> {
    if theta.len() != fit.p() {
        return Err(Error::Domain(format!(
            "theta has {} entries, fit has {}",
            theta.len(),
            fit.p()
        )));
    }
    let chol = fit
        .gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient {
            eigenvalues: fit.gram_eigs.clone(),
            floor: 0.0,
        })?;
    let upper = chol.l().transpose();
    Ok(upper * (&fit.theta_hat - theta) * (fit.n0() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub residuals: Vec<f64>,
    /// KS distance to the standard exponential.
    pub ks_statistic: f64,
    /// Asymptotic 1% critical value `1.63 / sqrt(n0)`.
    pub critical: f64,
    pub mean: f64,
}

impl ResidualCheck {
    pub fn passes(&self) -> bool {
        self.ks_statistic <= self.critical
    }
}

/// `exp(x_i' theta) log(y_i / w)` over the retained rows and their KS distance to Exp(1).
pub fn exponential_residuals(
    theta: &DVector<f64>,
    data: &ObservationSet,
    threshold: &TailThreshold,
) -> Result<ResidualCheck> {
    let sample = TailSample::new(data, threshold);
    if sample.is_empty() {
        return Err(Error::InsufficientTailData {
            needed: 1,
            found: 0,
        });
    }
    let residuals = sample.residuals(theta)?;
    let n0 = residuals.len();
    let mut sum = stats::CompensatedSum::default();
    residuals.iter().for_each(|&r| sum.add(r));
    Ok(ResidualCheck {
        ks_statistic: stats::ks_statistic(&residuals, stats::exponential_cdf),
        critical: stats::ks_critical_1pct(n0),
        mean: sum.value() / n0 as f64,
        residuals,
    })
}
