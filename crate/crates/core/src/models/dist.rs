//! Noise laws used by the extremal-quantile designs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Positive noise `U` entering `Y = beta(X) + scale(X) * U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Noise {
    /// `|T|` with `T` Student-t with `dof` degrees of freedom; Pareto-like tail of index `dof`.
    AbsStudentT { dof: f64 },
    /// Exact Pareto on `[1, inf)` with survival `u^(-alpha)`.
    Pareto { alpha: f64 },
}

impl Noise {
    pub fn validate(&self) -> Result<()> {
        let a = self.tail_exponent();
        if !(a.is_finite() && a > 1.0) {
            return Err(Error::InvalidDgp(format!(
                "noise tail exponent must exceed 1, got {a}"
            )));
        }
        Ok(())
    }

    pub fn tail_exponent(&self) -> f64 {
        match *self {
            Noise::AbsStudentT { dof } => dof,
            Noise::Pareto { alpha } => alpha,
        }
    }

    /// The value `u` with `P(U > u) = upper`, for `upper` in (0, 1].
    pub fn upper_quantile(&self, upper: f64) -> f64 {
        match *self {
            Noise::AbsStudentT { dof } => student_t_upper_quantile(0.5 * upper, dof),
            Noise::Pareto { alpha } => upper.powf(-1.0 / alpha),
        }
    }

    /// `tau`-quantile of `U`.
    pub fn quantile(&self, tau: f64) -> f64 {
        self.upper_quantile(1.0 - tau)
    }

    pub fn survival(&self, u: f64) -> f64 {
        match *self {
            Noise::AbsStudentT { dof } => {
                if u <= 0.0 {
                    1.0
                } else {
                    2.0 * student_t_cdf(-u, dof)
                }
            }
            Noise::Pareto { alpha } => {
                if u <= 1.0 {
                    1.0
                } else {
                    u.powf(-alpha)
                }
            }
        }
    }
}

/// Upper-tail quantile of the standard Student-t: `t` with `P(T > t) = upper`.
///
/// Closed forms for 1, 2 and 4 degrees of freedom keep the sampler exact in
/// the far tail; other values go through the regularized incomplete beta.
pub fn student_t_upper_quantile(upper: f64, dof: f64) -> f64 {
    if upper <= 0.0 {
        return f64::INFINITY;
    }
    if upper >= 1.0 {
        return f64::NEG_INFINITY;
    }
    if upper > 0.5 {
        return -student_t_upper_quantile(1.0 - upper, dof);
    }
    if dof == 1.0 {
        1.0 / (std::f64::consts::PI * upper).tan()
    } else if dof == 2.0 {
        (1.0 - 2.0 * upper) / (2.0 * upper * (1.0 - upper)).sqrt()
    } else if dof == 4.0 {
        let a = 4.0 * upper * (1.0 - upper);
        let ra = a.sqrt();
        let q = (ra.acos() / 3.0).cos() / ra;
        2.0 * (q - 1.0).max(0.0).sqrt()
    } else {
        StudentsT::new(0.0, 1.0, dof)
            .expect("positive degrees of freedom")
            .inverse_cdf(1.0 - upper)
    }
}

pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .cdf(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Closed-form t(4) CDF, independent of the quantile routine.
    fn t4_cdf(t: f64) -> f64 {
        let s = t * t / (4.0 + t * t);
        0.5 + 0.375 * (t / (1.0 + t * t / 4.0).sqrt()) * (1.0 - s / 3.0)
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn t4_closed_form_cdf_agrees_with_statrs() {
        for &t in &[-5.0, -1.0, 0.0, 0.3, 2.0, 10.0] {
            assert!((t4_cdf(t) - student_t_cdf(t, 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn abs_t4_median_matches_root_find() {
        // P(|T| <= m) = 2 F(m) - 1 = 1/2.
        let m = bisect(|x| 2.0 * t4_cdf(x) - 1.0 - 0.5, 0.0, 10.0);
        assert!((m - 0.740_697).abs() < 1e-6);
        let got = Noise::AbsStudentT { dof: 4.0 }.quantile(0.5);
        assert!((got - m).abs() < 1e-12, "{got} vs {m}");
    }

    #[test]
    fn closed_forms_invert_cdf() {
        for &dof in &[1.0, 2.0, 4.0, 3.0, 7.5] {
            for &q in &[1e-8, 1e-4, 0.01, 0.2, 0.5, 0.7, 0.99] {
                let t = student_t_upper_quantile(q, dof);
                let back = 1.0 - student_t_cdf(t, dof);
                assert!(
                    (back - q).abs() <= 1e-9 * q.max(1e-3),
                    "dof {dof} q {q}: {back}"
                );
            }
        }
    }

    #[test]
    fn pareto_quantile_and_survival() {
        let n = Noise::Pareto { alpha: 2.0 };
        assert!((n.quantile(0.75) - 2.0).abs() < 1e-15);
        assert!((n.survival(2.0) - 0.25).abs() < 1e-15);
        assert_eq!(n.survival(0.5), 1.0);
    }

    #[test]
    fn tail_exponent_must_exceed_one() {
        assert!(Noise::Pareto { alpha: 1.0 }.validate().is_err());
        assert!(Noise::AbsStudentT { dof: 4.0 }.validate().is_ok());
    }
}
