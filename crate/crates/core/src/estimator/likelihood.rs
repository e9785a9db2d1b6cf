//! Approximate negative log-likelihood of the linear tail-index model
//!
//! `sum_i { exp(x_i' theta) log(y_i / w) - x_i' theta } I(y_i > w)`
//!
//! and its first two derivatives. Each retained `log(y_i / w)` is positive,
//! so the objective is convex in `theta`.

use nalgebra::{DMatrix, DVector};

use super::threshold::TailThreshold;
use crate::error::{Error, Result};
use crate::models::ObservationSet;

/// Largest admissible linear index before `exp` is treated as an overflow.
pub const MAX_INDEX: f64 = 700.0;

/// Rows with `y > w`, stored row-major, with their log excesses `log(y / w)`.
#[derive(Debug, Clone)]
pub struct TailSample {
    p: usize,
    x: Vec<f64>,
    log_excess: Vec<f64>,
    rows: Vec<usize>,
}

impl TailSample {
    pub fn new(data: &ObservationSet, threshold: &TailThreshold) -> Self {
        Self::above(data, threshold.w)
    }

    /// Retained sample for an arbitrary threshold `w` (strict inequality).
    pub fn above(data: &ObservationSet, w: f64) -> Self {
        let p = data.p();
        let mut x = Vec::new();
        let mut log_excess = Vec::new();
        let mut rows = Vec::new();
        for (i, &y) in data.response.iter().enumerate() {
            if y > w {
                x.extend(data.design.row(i).iter());
                log_excess.push((y / w).ln());
                rows.push(i);
            }
        }
        TailSample {
            p,
            x,
            log_excess,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Original row indices of the retained observations.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn log_excess(&self) -> &[f64] {
        &self.log_excess
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn check_dim(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.p {
            return Err(Error::Domain(format!(
                "theta has {} entries, design has {} columns",
                theta.len(),
                self.p
            )));
        }
        Ok(())
    }

    /// `x_i' theta`, refusing indices whose exponential would overflow.
    #[inline]
    fn index(&self, i: usize, theta: &DVector<f64>) -> Result<f64> {
        let v: f64 = self
            .row(i)
            .iter()
            .zip(theta.iter())
            .map(|(a, b)| a * b)
            .sum();
        if !(v <= MAX_INDEX) {
            return Err(Error::Overflow {
                row: self.rows[i],
                index: v,
            });
        }
        Ok(v)
    }

    pub fn objective(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_dim(theta)?;
        let mut total = 0.0;
        for i in 0..self.len() {
            let v = self.index(i, theta)?;
            total += v.exp() * self.log_excess[i] - v;
        }
        Ok(total)
    }

    /// `sum_i x_i [exp(x_i' theta) log(y_i / w) - 1]`.
    pub fn score(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(theta)?;
        if self.is_empty() {
            log::warn!("score evaluated on an empty tail sample; returning zero");
        }
        let mut g = DVector::zeros(self.p);
        for i in 0..self.len() {
            let r = self.index(i, theta)?.exp() * self.log_excess[i] - 1.0;
            for (gj, xj) in g.iter_mut().zip(self.row(i)) {
                *gj += xj * r;
            }
        }
        Ok(g)
    }

    /// `sum_i x_i x_i' exp(x_i' theta) log(y_i / w)`.
    pub fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(theta)?;
        let p = self.p;
        let mut h = DMatrix::zeros(p, p);
        for i in 0..self.len() {
            let weight = self.index(i, theta)?.exp() * self.log_excess[i];
            let x = self.row(i);
            for a in 0..p {
                for b in a..p {
                    h[(a, b)] += weight * x[a] * x[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        Ok(h)
    }

    /// `(1/n0) sum_i x_i x_i'` over the retained rows.
    pub fn gram(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut g = DMatrix::zeros(p, p);
        for i in 0..self.len() {
            let x = self.row(i);
            for a in 0..p {
                for b in a..p {
                    g[(a, b)] += x[a] * x[b];
                }
            }
        }
        let n0 = self.len().max(1) as f64;
        for a in 0..p {
            for b in a..p {
                g[(a, b)] /= n0;
                g[(b, a)] = g[(a, b)];
            }
        }
        g
    }

    /// `exp(x_i' theta) log(y_i / w)`; standard exponential at the true `theta`.
    pub fn residuals(&self, theta: &DVector<f64>) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        (0..self.len())
            .map(|i| Ok(self.index(i, theta)?.exp() * self.log_excess[i]))
            .collect()
    }

    /// Constant-index MLE `log(n0 / sum log(y_i / w))`, the inverse Hill estimate.
    pub fn hill_intercept(&self) -> f64 {
        let s: f64 = self.log_excess.iter().sum();
        (self.len() as f64 / s).ln()
    }
}

pub fn objective(
    theta: &DVector<f64>,
    data: &ObservationSet,
    threshold: &TailThreshold,
) -> Result<f64> {
    TailSample::new(data, threshold).objective(theta)
}

pub fn score(
    theta: &DVector<f64>,
    data: &ObservationSet,
    threshold: &TailThreshold,
) -> Result<DVector<f64>> {
    TailSample::new(data, threshold).score(theta)
}

pub fn hessian(
    theta: &DVector<f64>,
    data: &ObservationSet,
    threshold: &TailThreshold,
) -> Result<DMatrix<f64>> {
    TailSample::new(data, threshold).hessian(theta)
}
