//! Closed-form conditional laws of the covariates given `Y > w`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail index `Z = alpha(X)` uniform on `[lower, upper]`, `Y | Z` with survival `y^(-Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformTailOracle {
    pub lower: f64,
    pub upper: f64,
}

fn check_threshold(w: f64) -> Result<f64> {
    if !(w.is_finite() && w > 1.0) {
        return Err(Error::Domain(format!("threshold w must exceed 1, got {w}")));
    }
    Ok(w.ln())
}

impl UniformTailOracle {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && upper > lower && lower > 0.0) {
            return Err(Error::Domain(format!(
                "uniform index support must satisfy 0 < lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(UniformTailOracle { lower, upper })
    }

    fn width(&self) -> f64 {
        self.upper - self.lower
    }

    fn check_point(&self, z: f64) -> Result<()> {
        if !(self.lower..=self.upper).contains(&z) {
            return Err(Error::Domain(format!(
                "z = {z} outside support [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// `f(z | Y > w) = w^-(z - lower) log w / (1 - w^-(upper - lower))`.
    pub fn conditional_density(&self, w: f64, z: f64) -> Result<f64> {
        let lw = check_threshold(w)?;
        self.check_point(z)?;
        Ok((-(z - self.lower) * lw).exp() * lw / -(-self.width() * lw).exp_m1())
    }

    /// Exact `(E(Z | Y > w), Var(Z | Y > w))`.
    pub fn conditional_moments(&self, w: f64) -> Result<(f64, f64)> {
        let lw = check_threshold(w)?;
        let d = self.width();
        let s = d * lw;
        // mean = lower + d [1/s - 1/(e^s - 1)]
        // var  = d^2 [1/s^2 - 1/(4 sinh^2(s/2))], the closed forms rewritten in s = d log w.
        let (m, v) = if s < 0.05 {
            let s2 = s * s;
            (
                0.5 - s / 12.0 + s * s2 / 720.0 - s * s2 * s2 / 30240.0,
                1.0 / 12.0 - s2 / 240.0 + s2 * s2 / 6048.0 - s2 * s2 * s2 / 172800.0,
            )
        } else {
            let sh = (0.5 * s).sinh();
            (
                1.0 / s - 1.0 / s.exp_m1(),
                1.0 / (s * s) - 1.0 / (4.0 * sh * sh),
            )
        };
        Ok((self.lower + d * m, d * d * v))
    }
}

/// Envelope `c_ratio * w^-(z - lo) log w / (1 - w^-(hi - lo))` on the conditional
/// density of a tail index whose density is bounded within `[c, c_ratio * c]`.
pub fn density_bound_envelope(c_ratio: f64, w: f64, z: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(c_ratio >= 1.0) {
        return Err(Error::Domain(format!(
            "density ratio must be >= 1, got {c_ratio}"
        )));
    }
    let oracle = UniformTailOracle::new(lo, hi)?;
    Ok(c_ratio * oracle.conditional_density(w, z)?)
}

/// Support of `(X1, X2)` in `Y = X1 + X2 U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub x1_lo: f64,
    pub x1_hi: f64,
    pub x2_lo: f64,
    pub x2_hi: f64,
}

impl Rectangle {
    pub fn new(x1_lo: f64, x1_hi: f64, x2_lo: f64, x2_hi: f64) -> Self {
        Rectangle {
            x1_lo,
            x1_hi,
            x2_lo,
            x2_hi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x1_lo, self.x1_hi, self.x2_lo, self.x2_hi]
            .iter()
            .all(|v| v.is_finite())
            && self.x1_lo < self.x1_hi
            && self.x2_lo < self.x2_hi
            && self.x2_lo > 0.0;
        if !ok {
            return Err(Error::Domain(format!(
                "rectangle [{}, {}] x [{}, {}] needs lo < hi and x2_lo > 0",
                self.x1_lo, self.x1_hi, self.x2_lo, self.x2_hi
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x1: f64, x2: f64) -> bool {
        (self.x1_lo..=self.x1_hi).contains(&x1) && (self.x2_lo..=self.x2_hi).contains(&x2)
    }

    fn check_point(&self, x1: f64, x2: f64) -> Result<()> {
        self.validate()?;
        if !self.contains(x1, x2) {
            return Err(Error::Domain(format!(
                "point ({x1}, {x2}) outside the rectangle"
            )));
        }
        Ok(())
    }

    fn x2_normalizer(&self, alpha: f64) -> f64 {
        self.x2_hi.powf(alpha + 1.0) - self.x2_lo.powf(alpha + 1.0)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::Domain(format!("alpha must exceed 1, got {alpha}")));
    }
    Ok(())
}

/// Limit as `w -> inf` of the density of `(X1, X2) | Y > w` for uniform covariates:
/// `(alpha + 1) x2^alpha / ((x1_hi - x1_lo)(x2_hi^(alpha+1) - x2_lo^(alpha+1)))`.
pub fn extremal_limit_density(x1: f64, x2: f64, alpha: f64, rect: &Rectangle) -> Result<f64> {
    check_alpha(alpha)?;
    rect.check_point(x1, x2)?;
    Ok((alpha + 1.0) * x2.powf(alpha) / ((rect.x1_hi - rect.x1_lo) * rect.x2_normalizer(alpha)))
}

/// `int_a^b (w - x)^(-alpha) dx`, stable for `w` far above `b`.
fn x1_tail_integral(a: f64, b: f64, w: f64, alpha: f64) -> f64 {
    let k = alpha - 1.0;
    // [(w-b)^-k - (w-a)^-k] / k = (w-b)^-k [1 - ((w-b)/(w-a))^k] / k
    let ratio_log = (-(b - a) / (w - a)).ln_1p();
    (w - b).powf(-k) * -(k * ratio_log).exp_m1() / k
}

fn check_finite_w(w: f64, rect: &Rectangle) -> Result<()> {
    if !(w.is_finite() && w > rect.x1_hi) {
        return Err(Error::Domain(format!(
            "threshold w = {w} must exceed x1_hi = {}",
            rect.x1_hi
        )));
    }
    Ok(())
}

/// Exact density of `(X1, X2) | Y > w` for uniform `(X1, X2)` and `P(U > u) = u^(-alpha)`:
///
/// `(alpha+1)(alpha-1) [(w - x1)/x2]^(-alpha) /
///  ((x2_hi^(alpha+1) - x2_lo^(alpha+1)) [(w - x1_hi)^-(alpha-1) - (w - x1_lo)^-(alpha-1)])`.
///
/// Exact as long as `(w - x1)/x2 >= 1` on the whole rectangle, i.e. `w >= x1_hi + x2_hi`.
pub fn extremal_finite_w_density(
    x1: f64,
    x2: f64,
    w: f64,
    alpha: f64,
    rect: &Rectangle,
) -> Result<f64> {
    check_alpha(alpha)?;
    rect.check_point(x1, x2)?;
    check_finite_w(w, rect)?;
    let x1_mass = x1_tail_integral(rect.x1_lo, rect.x1_hi, w, alpha);
    let x2_mass = rect.x2_normalizer(alpha) / (alpha + 1.0);
    Ok(((w - x1) / x2).powf(-alpha) / (x1_mass * x2_mass))
}

/// Probability of the cell `[a1, b1] x [a2, b2]` under the finite-`w` conditional law.
pub fn extremal_finite_w_cell_probability(
    (a1, b1): (f64, f64),
    (a2, b2): (f64, f64),
    w: f64,
    alpha: f64,
    rect: &Rectangle,
) -> Result<f64> {
    check_alpha(alpha)?;
    rect.validate()?;
    check_finite_w(w, rect)?;
    let p1 =
        x1_tail_integral(a1, b1, w, alpha) / x1_tail_integral(rect.x1_lo, rect.x1_hi, w, alpha);
    Ok(p1 * x2_cell_fraction(a2, b2, alpha, rect))
}

/// Probability of the cell `[a1, b1] x [a2, b2]` under the limiting law.
pub fn extremal_limit_cell_probability(
    (a1, b1): (f64, f64),
    (a2, b2): (f64, f64),
    alpha: f64,
    rect: &Rectangle,
) -> Result<f64> {
    check_alpha(alpha)?;
    rect.validate()?;
    Ok((b1 - a1) / (rect.x1_hi - rect.x1_lo) * x2_cell_fraction(a2, b2, alpha, rect))
}

fn x2_cell_fraction(a2: f64, b2: f64, alpha: f64, rect: &Rectangle) -> f64 {
    (b2.powf(alpha + 1.0) - a2.powf(alpha + 1.0)) / rect.x2_normalizer(alpha)
}

/// Means and variances of `X1` and `X2` under the limiting law:
/// `((mean1, var1), (mean2, var2))`.
pub fn extremal_limit_moments(alpha: f64, rect: &Rectangle) -> Result<((f64, f64), (f64, f64))> {
    check_alpha(alpha)?;
    rect.validate()?;
    let mean1 = 0.5 * (rect.x1_lo + rect.x1_hi);
    let var1 = (rect.x1_hi - rect.x1_lo).powi(2) / 12.0;
    let raw = |k: f64| {
        let e = alpha + 1.0 + k;
        (alpha + 1.0) / e * (rect.x2_hi.powf(e) - rect.x2_lo.powf(e)) / rect.x2_normalizer(alpha)
    };
    let mean2 = raw(1.0);
    let var2 = raw(2.0) - mean2 * mean2;
    Ok(((mean1, var1), (mean2, var2)))
}
