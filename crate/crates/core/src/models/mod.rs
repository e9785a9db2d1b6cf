//! Data-generating processes for both tail frameworks, their samplers, and
//! exact analytic oracles for covariate laws conditional on extreme outcomes.
//!
//! Tail-index designs draw `Y | X = x` with survival `y^(-alpha(x))` on
//! `[1, inf)`. Extremal-quantile designs draw `Y = beta(X) + scale(X) * U`
//! with a constant-index noise `U`.

pub mod config;
pub mod dist;
pub mod io;
pub mod oracle;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub use config::{DgpConfig, DgpSpec, FunctionConfig, BUILTIN_DGPS};
pub use dist::Noise;
pub use oracle::{
    density_bound_envelope, extremal_finite_w_cell_probability, extremal_finite_w_density,
    extremal_limit_cell_probability, extremal_limit_density, extremal_limit_moments, Rectangle,
    UniformTailOracle,
};

/// Scalar covariate index function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IndexFunction {
    /// `intercept + slope * x`
    Affine { intercept: f64, slope: f64 },
    /// `offset + amplitude * cos(frequency * x)`
    Cosine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// `exp(intercept + slope * x)`
    ExpLinear { intercept: f64, slope: f64 },
}

impl IndexFunction {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            IndexFunction::Affine { intercept, slope } => intercept + slope * x,
            IndexFunction::Cosine {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * (frequency * x).cos(),
            IndexFunction::ExpLinear { intercept, slope } => (intercept + slope * x).exp(),
        }
    }

    /// Exact `(min, max)` of the function over `[lo, hi]`.
    pub fn range_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut candidates = vec![self.eval(lo), self.eval(hi)];
        if let IndexFunction::Cosine { frequency, .. } = *self {
            if frequency != 0.0 {
                // Interior extrema sit where frequency * x is a multiple of pi.
                let (a, b) = {
                    let (p, q) = (frequency * lo, frequency * hi);
                    (p.min(q), p.max(q))
                };
                let pi = std::f64::consts::PI;
                let first = (a / pi).ceil() as i64;
                let last = (b / pi).floor() as i64;
                for k in first..=last.min(first + 1) {
                    candidates.push(self.eval(k as f64 * pi / frequency));
                }
            }
        }
        let min = candidates.iter().copied().fold(f64::INFINITY, f64::min);
        let max = candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }
}

/// Covariate distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateLaw {
    Uniform { lo: f64, hi: f64 },
}

impl CovariateLaw {
    pub fn unit() -> Self {
        CovariateLaw::Uniform { lo: 0.0, hi: 1.0 }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            CovariateLaw::Uniform { lo, hi } => (lo, hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidDgp(format!(
                "covariate support [{lo}, {hi}] must be a bounded interval with lo < hi"
            )));
        }
        Ok(())
    }

    #[inline]
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => lo + (hi - lo) * rng::open_unit(rng),
        }
    }
}

/// A design that can be sampled row by row.
pub trait Dgp: Sync {
    fn label(&self) -> &str;
    /// Number of covariates, excluding the intercept.
    fn covariate_count(&self) -> usize;
    fn validate(&self) -> Result<()>;
    /// Draws one observation: covariates into `x`, response returned.
    fn draw(&self, rng: &mut StreamRng, x: &mut [f64]) -> f64;
}

/// Inverse CDF of the tail-index law: `v^(-1/alpha)` has survival `y^(-alpha)` on `[1, inf)`.
#[inline]
pub fn tail_index_inverse_cdf(v: f64, alpha: f64) -> f64 {
    (-v.ln() / alpha).exp()
}

/// `1 - F(y | x) = y^(-alpha(x))` for `y >= 1`, covariate uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailIndexDgp {
    pub name: String,
    pub alpha: IndexFunction,
    pub covariate: CovariateLaw,
}

impl TailIndexDgp {
    pub fn new(
        name: impl Into<String>,
        alpha: IndexFunction,
        covariate: CovariateLaw,
    ) -> Result<Self> {
        let dgp = TailIndexDgp {
            name: name.into(),
            alpha,
            covariate,
        };
        dgp.validate()?;
        Ok(dgp)
    }

    /// DGP1M: `alpha(x) = 1.5 + 10x`, `x ~ U[0, 1]`.
    pub fn dgp1m() -> Self {
        TailIndexDgp {
            name: "dgp1m-tail".into(),
            alpha: IndexFunction::Affine {
                intercept: 1.5,
                slope: 10.0,
            },
            covariate: CovariateLaw::unit(),
        }
    }

    /// DGP4M: `alpha(x) = 6.5 - 5 cos(20x)`, minima at `x = 0, pi/10, pi/5, 3pi/10`.
    pub fn dgp4m() -> Self {
        TailIndexDgp {
            name: "dgp4m-tail".into(),
            alpha: IndexFunction::Cosine {
                offset: 6.5,
                amplitude: -5.0,
                frequency: 20.0,
            },
            covariate: CovariateLaw::unit(),
        }
    }

    /// `alpha(x) = exp(theta0 + theta1 x)`, `x ~ U[0, 1]`: the linear tail-index regression model.
    pub fn exp_linear(theta0: f64, theta1: f64) -> Result<Self> {
        Self::new(
            "exp-linear",
            IndexFunction::ExpLinear {
                intercept: theta0,
                slope: theta1,
            },
            CovariateLaw::unit(),
        )
    }

    /// `alpha(X) = X` with `X ~ U[lo, hi]`, so the index itself is uniform.
    pub fn uniform_index(lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            "uniform-index",
            IndexFunction::Affine {
                intercept: 0.0,
                slope: 1.0,
            },
            CovariateLaw::Uniform { lo, hi },
        )
    }

    #[inline]
    pub fn alpha_at(&self, x: f64) -> f64 {
        self.alpha.eval(x)
    }

    pub fn survival(&self, y: f64, x: f64) -> f64 {
        if y <= 1.0 {
            1.0
        } else {
            y.powf(-self.alpha_at(x))
        }
    }

    /// `(min, max)` of `alpha` over the covariate support.
    pub fn alpha_range(&self) -> (f64, f64) {
        let (lo, hi) = self.covariate.support();
        self.alpha.range_on(lo, hi)
    }
}

impl Dgp for TailIndexDgp {
    fn label(&self) -> &str {
        &self.name
    }

    fn covariate_count(&self) -> usize {
        1
    }

    fn validate(&self) -> Result<()> {
        self.covariate.validate()?;
        let (min, _) = self.alpha_range();
        if !(min.is_finite() && min > 0.0) {
            return Err(Error::InvalidDgp(format!(
                "{}: tail exponent must be positive on the support, minimum is {min}",
                self.name
            )));
        }
        // alpha >= 1 everywhere; equality is tolerated only as an infimum.
        if min < 1.0 {
            return Err(Error::InvalidDgp(format!(
                "{}: tail exponent must exceed 1 on the support, minimum is {min}",
                self.name
            )));
        }
        Ok(())
    }

    #[inline]
    fn draw(&self, rng: &mut StreamRng, x: &mut [f64]) -> f64 {
        let xv = self.covariate.draw(rng);
        let v = rng::open_unit(rng);
        x[0] = xv;
        tail_index_inverse_cdf(v, self.alpha_at(xv))
    }
}

/// `Y = location(X) + scale(X) * U` with constant-index noise `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalQuantileDgp {
    pub name: String,
    pub location: IndexFunction,
    pub scale: IndexFunction,
    pub noise: Noise,
    pub covariate: CovariateLaw,
}

impl ExtremalQuantileDgp {
    pub fn new(
        name: impl Into<String>,
        location: IndexFunction,
        scale: IndexFunction,
        noise: Noise,
        covariate: CovariateLaw,
    ) -> Result<Self> {
        let dgp = ExtremalQuantileDgp {
            name: name.into(),
            location,
            scale,
            noise,
            covariate,
        };
        dgp.validate()?;
        Ok(dgp)
    }

    /// DGP1M: `Y = X + (11.5 - 10X) U`, `U ~ |t(4)|`.
    pub fn dgp1m() -> Self {
        ExtremalQuantileDgp {
            name: "dgp1m-extremal".into(),
            location: IndexFunction::Affine {
                intercept: 0.0,
                slope: 1.0,
            },
            scale: IndexFunction::Affine {
                intercept: 11.5,
                slope: -10.0,
            },
            noise: Noise::AbsStudentT { dof: 4.0 },
            covariate: CovariateLaw::unit(),
        }
    }

    /// DGP4M: `Y = X + (6.5 + 5 cos(20X)) U`, `U ~ |t(4)|`.
    pub fn dgp4m() -> Self {
        ExtremalQuantileDgp {
            name: "dgp4m-extremal".into(),
            location: IndexFunction::Affine {
                intercept: 0.0,
                slope: 1.0,
            },
            scale: IndexFunction::Cosine {
                offset: 6.5,
                amplitude: 5.0,
                frequency: 20.0,
            },
            noise: Noise::AbsStudentT { dof: 4.0 },
            covariate: CovariateLaw::unit(),
        }
    }

    pub fn scale_range(&self) -> (f64, f64) {
        let (lo, hi) = self.covariate.support();
        self.scale.range_on(lo, hi)
    }
}

impl Dgp for ExtremalQuantileDgp {
    fn label(&self) -> &str {
        &self.name
    }

    fn covariate_count(&self) -> usize {
        1
    }

    fn validate(&self) -> Result<()> {
        self.covariate.validate()?;
        self.noise.validate()?;
        let (min, _) = self.scale_range();
        if !(min.is_finite() && min > 0.0) {
            return Err(Error::InvalidDgp(format!(
                "{}: scale must be positive on the support, minimum is {min}",
                self.name
            )));
        }
        Ok(())
    }

    #[inline]
    fn draw(&self, rng: &mut StreamRng, x: &mut [f64]) -> f64 {
        let xv = self.covariate.draw(rng);
        let u = self.noise.upper_quantile(rng::open_unit(rng));
        x[0] = xv;
        self.location.eval(xv) + self.scale.eval(xv) * u
    }
}

/// `Y = X1 + X2 * U` with `(X1, X2)` uniform on a rectangle and `X2 > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangleDgp {
    pub name: String,
    pub rect: Rectangle,
    pub noise: Noise,
}

impl RectangleDgp {
    pub fn new(name: impl Into<String>, rect: Rectangle, noise: Noise) -> Result<Self> {
        let dgp = RectangleDgp {
            name: name.into(),
            rect,
            noise,
        };
        dgp.validate()?;
        Ok(dgp)
    }

    /// Pareto(2) noise on `[0, 1] x [1, 2]`.
    pub fn reference() -> Self {
        RectangleDgp {
            name: "rect-pareto".into(),
            rect: Rectangle::new(0.0, 1.0, 1.0, 2.0),
            noise: Noise::Pareto { alpha: 2.0 },
        }
    }
}

impl Dgp for RectangleDgp {
    fn label(&self) -> &str {
        &self.name
    }

    fn covariate_count(&self) -> usize {
        2
    }

    fn validate(&self) -> Result<()> {
        self.rect.validate()?;
        self.noise.validate()
    }

    #[inline]
    fn draw(&self, rng: &mut StreamRng, x: &mut [f64]) -> f64 {
        let r = &self.rect;
        let x1 = r.x1_lo + (r.x1_hi - r.x1_lo) * rng::open_unit(rng);
        let x2 = r.x2_lo + (r.x2_hi - r.x2_lo) * rng::open_unit(rng);
        let u = self.noise.upper_quantile(rng::open_unit(rng));
        x[0] = x1;
        x[1] = x2;
        x1 + x2 * u
    }
}

/// A sample `(x_i, y_i)`: design with a leading all-ones column plus response.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub design: DMatrix<f64>,
    pub response: Vec<f64>,
    pub seed: Option<u64>,
}

impl ObservationSet {
    pub fn new(design: DMatrix<f64>, response: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        let (n, p) = design.shape();
        if p < 1 || n < p {
            return Err(Error::Domain(format!(
                "observation set needs n >= p >= 1, got n = {n}, p = {p}"
            )));
        }
        if response.len() != n {
            return Err(Error::Domain(format!(
                "response has {} entries but design has {n} rows",
                response.len()
            )));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain(
                "observation set contains non-finite entries".into(),
            ));
        }
        if design.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Domain(
                "first design column must be identically 1".into(),
            ));
        }
        Ok(ObservationSet {
            design,
            response,
            seed,
        })
    }

    /// Builds the design from covariate columns, prepending the intercept.
    pub fn from_covariates(
        covariates: &[Vec<f64>],
        response: Vec<f64>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let n = response.len();
        if let Some(bad) = covariates.iter().find(|c| c.len() != n) {
            return Err(Error::Domain(format!(
                "covariate column has {} entries, response has {n}",
                bad.len()
            )));
        }
        let p = covariates.len() + 1;
        let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { covariates[j - 1][i] });
        Self::new(design, response, seed)
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    /// Covariate `j` (zero-based, excluding the intercept) as a slice.
    pub fn covariate(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.design.as_slice()[(j + 1) * n..(j + 2) * n]
    }
}

/// Draws block `block` (of `len` rows): row-major covariates and responses.
pub fn sample_block<D: Dgp + ?Sized>(
    dgp: &D,
    seed: u64,
    block: u64,
    len: usize,
) -> (Vec<f64>, Vec<f64>) {
    let k = dgp.covariate_count();
    let mut rng = rng::stream(seed, block);
    let mut xs = vec![0.0; len * k];
    let mut ys = Vec::with_capacity(len);
    for row in xs.chunks_exact_mut(k.max(1)).take(len) {
        ys.push(dgp.draw(&mut rng, row));
    }
    (xs, ys)
}

/// Draws `n` observations, deterministic in `(dgp, n, seed)`.
pub fn sample<D: Dgp + ?Sized>(dgp: &D, n: usize, seed: u64) -> Result<ObservationSet> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    dgp.validate()?;
    let k = dgp.covariate_count();
    let parts: Vec<(Vec<f64>, Vec<f64>)> = rng::blocks(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(b, _, len)| sample_block(dgp, seed, b, len))
        .collect();
    let mut design = DMatrix::from_element(n, k + 1, 1.0);
    let mut response = Vec::with_capacity(n);
    let mut row = 0;
    for (xs, ys) in parts {
        for (i, y) in ys.into_iter().enumerate() {
            for j in 0..k {
                design[(row, j + 1)] = xs[i * k + j];
            }
            response.push(y);
            row += 1;
        }
    }
    if response.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidDgp(format!(
            "{}: sampler produced a non-finite response",
            dgp.label()
        )));
    }
    ObservationSet::new(design, response, Some(seed))
}

pub fn sample_tail_index(dgp: &TailIndexDgp, n: usize, seed: u64) -> Result<ObservationSet> {
    sample(dgp, n, seed)
}

pub fn sample_extremal_quantile(
    dgp: &ExtremalQuantileDgp,
    n: usize,
    seed: u64,
) -> Result<ObservationSet> {
    sample(dgp, n, seed)
}

/// Either framework, for quantile evaluation.
#[derive(Debug, Clone, Copy)]
pub enum QuantileModel<'a> {
    TailIndex(&'a TailIndexDgp),
    Extremal(&'a ExtremalQuantileDgp),
}

/// `tau`-th conditional quantile of `Y` given `X = x`.
///
/// Tail-index model: `(1 - tau)^(-1/alpha(x))`. Extremal model:
/// `location(x) + scale(x) * Q_U(tau)`.
pub fn conditional_quantile(tau: f64, x: f64, model: QuantileModel<'_>) -> Result<f64> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau must lie in [0, 1), got {tau}")));
    }
    Ok(match model {
        QuantileModel::TailIndex(d) => (1.0 - tau).powf(-1.0 / d.alpha_at(x)),
        QuantileModel::Extremal(d) => d.location.eval(x) + d.scale.eval(x) * d.noise.quantile(tau),
    })
}
