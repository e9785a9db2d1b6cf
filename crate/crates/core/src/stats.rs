//! Streaming moments, order-statistic helpers and Kolmogorov–Smirnov tools.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Count and compensated power sums of `x - shift` up to the fourth power.
///
/// Accumulators built with the same shift merge exactly in any fixed order,
/// which is what the sharded Monte Carlo runner relies on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    shift: f64,
    count: u64,
    sums: [CompensatedSum; 4],
}

impl Moments {
    pub fn new(shift: f64) -> Self {
        Moments {
            shift,
            count: 0,
            sums: [CompensatedSum::default(); 4],
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let d = x - self.shift;
        let d2 = d * d;
        self.count += 1;
        self.sums[0].add(d);
        self.sums[1].add(d2);
        self.sums[2].add(d2 * d);
        self.sums[3].add(d2 * d2);
    }

    pub fn merge(&mut self, other: &Moments) {
        debug_assert_eq!(self.shift.to_bits(), other.shift.to_bits());
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(other.sums.iter()) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    fn raw(&self, k: usize) -> f64 {
        self.sums[k].value() / self.count as f64
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.shift + self.raw(0)
    }

    /// Second raw moment about zero, E[x^2].
    pub fn second_moment(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        let m1 = self.raw(0);
        self.raw(1) + 2.0 * self.shift * m1 + self.shift * self.shift
    }

    /// Plug-in (1/N) variance; 0 for a single observation.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        let m1 = self.raw(0);
        (self.raw(1) - m1 * m1).max(0.0)
    }

    pub fn fourth_central_moment(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        let (m1, m2, m3, m4) = (self.raw(0), self.raw(1), self.raw(2), self.raw(3));
        (m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4)).max(0.0)
    }

    /// Large-sample standard error of the plug-in variance, sqrt((mu4 - sigma^4)/N).
    pub fn variance_standard_error(&self) -> f64 {
        let v = self.variance();
        ((self.fourth_central_moment() - v * v).max(0.0) / self.count as f64).sqrt()
    }
}

/// One-based index `ceil(tau * n)` of the order statistic used as `Q_tau`,
/// clamped to `[1, n]`.
///
/// Products such as `0.995 * 1e7` land a few ulps above an integer; those are
/// snapped to the integer before taking the ceiling.
pub fn order_index(tau: f64, n: usize) -> usize {
    let v = tau * n as f64;
    let r = v.round();
    let k = if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
        r
    } else {
        v.ceil()
    };
    (k.max(1.0) as usize).min(n.max(1))
}

/// `Q_tau` as the `ceil(tau n)`-th smallest value. Reorders `values`.
pub fn order_statistic_in_place(values: &mut [f64], tau: f64) -> f64 {
    let k = order_index(tau, values.len());
    let (_, v, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// `Q_tau` of `values` without disturbing the input.
pub fn order_statistic(values: &[f64], tau: f64) -> f64 {
    let mut copy = values.to_vec();
    order_statistic_in_place(&mut copy, tau)
}

/// Asymptotic one-sample KS constant at the 1% level; critical value is `1.63 / sqrt(n)`.
pub const KS_CRITICAL_1PCT: f64 = 1.63;

pub fn ks_critical_1pct(n: usize) -> f64 {
    KS_CRITICAL_1PCT / (n as f64).sqrt()
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `sample` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Survival function of the Kolmogorov distribution, P(K > lambda).
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let s: f64 = (1..=20)
            .map(|k| {
                let odd = (2 * k - 1) as f64;
                (-odd * odd * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Approximate p-value of a one-sample KS statistic with Stephens' finite-n correction.
pub fn ks_pvalue(statistic: f64, n: usize) -> f64 {
    let rn = (n as f64).sqrt();
    kolmogorov_survival((rn + 0.12 + 0.11 / rn) * statistic)
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

pub fn exponential_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}
