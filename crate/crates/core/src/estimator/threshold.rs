use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// How the truncation point `w` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum ThresholdSpec {
    /// `w = y_(ceil(tau n))`.
    Quantile(f64),
    /// `w = y_(n - n0)`, keeping the `n0` largest responses.
    TopCount(usize),
    /// Fixed `w`.
    Value(f64),
}

/// A resolved threshold: `w` and the exact count of responses strictly above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailThreshold {
    pub spec: ThresholdSpec,
    pub w: f64,
    pub n0: usize,
}

impl TailThreshold {
    /// Resolves `spec` against `response` for a design with `p` columns.
    pub fn resolve(response: &[f64], spec: ThresholdSpec, p: usize) -> Result<Self> {
        let n = response.len();
        if n == 0 {
            return Err(Error::Domain("response is empty".into()));
        }
        let w = match spec {
            ThresholdSpec::Quantile(tau) => {
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(Error::Domain(format!(
                        "quantile mass must lie in (0, 1), got {tau}"
                    )));
                }
                stats::order_statistic(response, tau)
            }
            ThresholdSpec::TopCount(k) => {
                if k == 0 || k > n {
                    return Err(Error::Domain(format!(
                        "top count must lie in [1, {n}], got {k}"
                    )));
                }
                // y_(n-k); keeping every point falls back to the sample minimum.
                let idx = (n - k).max(1);
                let mut copy = response.to_vec();
                let (_, v, _) = copy.select_nth_unstable_by(idx - 1, f64::total_cmp);
                *v
            }
            ThresholdSpec::Value(w) => w,
        };
        if !(w.is_finite() && w > 1.0) {
            return Err(Error::InvalidThreshold(format!(
                "resolved threshold w = {w} must exceed 1"
            )));
        }
        let n0 = response.iter().filter(|&&y| y > w).count();
        if n0 < p + 1 {
            return Err(Error::InsufficientTailData {
                needed: p + 1,
                found: n0,
            });
        }
        Ok(TailThreshold { spec, w, n0 })
    }
}

pub fn resolve_threshold(response: &[f64], spec: ThresholdSpec, p: usize) -> Result<TailThreshold> {
    TailThreshold::resolve(response, spec, p)
}
