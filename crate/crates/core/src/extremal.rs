//! The extremal-quantile counterpart: constant tail index, covariate-dependent
//! location and scale. Under this model the covariate law given `Y > w`
//! settles to a non-degenerate limit instead of collapsing.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    extremal_finite_w_cell_probability, extremal_finite_w_density, extremal_limit_cell_probability,
    extremal_limit_density, extremal_limit_moments, sample_block, DgpSpec, ExtremalQuantileDgp,
    Noise, Rectangle, RectangleDgp, TailIndexDgp,
};
use crate::montecarlo::with_shards;
use crate::output::{self, fmt17};
use crate::rng;
use crate::stats::{self, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub tau: f64,
    pub x: f64,
    /// `(1 - tau)^(-1/alpha(x))`.
    pub tail_index: f64,
    /// `location(x) + scale(x) (1 - tau)^(-1/alpha)`.
    pub extremal: f64,
    /// `location(x) + scale(x) Q_U(tau)` with the exact noise quantile.
    pub extremal_exact: f64,
    /// Some value exceeded the cap and was replaced by it.
    pub capped: bool,
}

/// Conditional quantiles of both frameworks on an `x` grid; values above
/// `cap` (or non-finite) are reported as `cap` with `capped` set.
pub fn compare_conditional_quantiles(
    x_grid: &[f64],
    taus: &[f64],
    tail_model: &TailIndexDgp,
    extremal_model: &ExtremalQuantileDgp,
    cap: f64,
) -> Result<Vec<QuantileRow>> {
    if !(cap > 0.0) {
        return Err(Error::Domain(format!("cap must be positive, got {cap}")));
    }
    let alpha = extremal_model.noise.tail_exponent();
    let mut rows = Vec::with_capacity(x_grid.len() * taus.len());
    for &tau in taus {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!("tau must lie in (0, 1), got {tau}")));
        }
        for &x in x_grid {
            let mut capped = false;
            let mut clip = |v: f64| {
                if v.is_finite() && v <= cap {
                    v
                } else {
                    capped = true;
                    cap
                }
            };
            let loc = extremal_model.location.eval(x);
            let scale = extremal_model.scale.eval(x);
            let tail_index = clip((1.0 - tau).powf(-1.0 / tail_model.alpha_at(x)));
            let extremal = clip(loc + scale * (1.0 - tau).powf(-1.0 / alpha));
            let extremal_exact = clip(loc + scale * extremal_model.noise.quantile(tau));
            rows.push(QuantileRow {
                tau,
                x,
                tail_index,
                extremal,
                extremal_exact,
                capped,
            });
        }
    }
    Ok(rows)
}

/// Largest `|exact - limit|` over a `grid x grid` lattice covering the rectangle.
pub fn sup_distance_exact_vs_limit(
    w: f64,
    alpha: f64,
    rect: &Rectangle,
    grid: usize,
) -> Result<f64> {
    if grid < 2 {
        return Err(Error::Domain(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    let at = |lo: f64, hi: f64, i: usize| {
        if i == grid - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (grid - 1) as f64
        }
    };
    let mut sup: f64 = 0.0;
    for i in 0..grid {
        let x1 = at(rect.x1_lo, rect.x1_hi, i);
        for j in 0..grid {
            let x2 = at(rect.x2_lo, rect.x2_hi, j);
            let d = extremal_finite_w_density(x1, x2, w, alpha, rect)?
                - extremal_limit_density(x1, x2, alpha, rect)?;
            sup = sup.max(d.abs());
        }
    }
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Pareto noise: the finite-`w` density is exact.
    Exact,
    /// Pareto-like noise: only the `w -> inf` limit is available.
    LimitOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyConfig {
    pub dgp: DgpSpec,
    pub n: usize,
    /// Thresholds as quantiles of the simulated `Y`.
    pub w_quantiles: Vec<f64>,
    /// Histogram cells per covariate axis.
    pub bins: usize,
    pub seed: u64,
    #[serde(skip, default = "crate::montecarlo::default_shards")]
    pub shards: usize,
}

pub const MIN_TAIL_COUNT: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub x1_lo: f64,
    pub x1_hi: f64,
    /// Equal to `x1_*` bounds' placeholder `NaN` for single-covariate designs.
    pub x2_lo: f64,
    pub x2_hi: f64,
    pub count: u64,
    pub empirical_density: f64,
    /// Cell-averaged exact density (exact mode only).
    pub exact_density: Option<f64>,
    pub limit_density: f64,
    /// `(count - n p) / sqrt(n p (1 - p))` against the exact cell probability.
    pub z_exact: Option<f64>,
    pub z_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdComparison {
    pub tau: f64,
    pub w: f64,
    pub n_tail: u64,
    pub mode: OracleMode,
    pub max_abs_z_exact: Option<f64>,
    pub max_abs_z_limit: f64,
    /// `sup |exact - limit|` on a 100 x 100 lattice (exact mode only).
    pub sup_exact_vs_limit: Option<f64>,
    /// `(mean, variance)` per covariate given `Y > w`.
    pub empirical_moments: Vec<(f64, f64)>,
    pub limit_moments: Vec<(f64, f64)>,
    pub cells: Vec<CellRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub config: NondegeneracyConfig,
    pub comparisons: Vec<ThresholdComparison>,
}

/// Simulates the design and compares the covariate histogram given `Y > w`
/// with the exact finite-`w` law (Pareto noise on a rectangle) and with the
/// limiting law.
pub fn verify_nondegeneracy(config: &NondegeneracyConfig) -> Result<NondegeneracyReport> {
    if config.bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    if config.n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if let Some(t) = config
        .w_quantiles
        .iter()
        .find(|t| !(**t > 0.0 && **t < 1.0))
    {
        return Err(Error::Config(format!(
            "threshold quantile must lie in (0, 1), got {t}"
        )));
    }
    let layout = Layout::from_spec(&config.dgp)?;
    config.dgp.as_dgp().validate()?;
    with_shards(config.shards, || verify_inner(config, &layout))?
}

/// Histogram geometry and oracle for each supported design.
enum Layout {
    Rectangle(RectangleDgp),
    Line(ExtremalQuantileDgp),
}

impl Layout {
    fn from_spec(spec: &DgpSpec) -> Result<Self> {
        match spec {
            DgpSpec::Rectangle(d) => Ok(Layout::Rectangle(d.clone())),
            DgpSpec::ExtremalQuantile(d) => Ok(Layout::Line(d.clone())),
            DgpSpec::TailIndex(d) => Err(Error::Config(format!(
                "{}: the non-degeneracy check needs an extremal-quantile design",
                d.name
            ))),
        }
    }

    fn dims(&self) -> usize {
        match self {
            Layout::Rectangle(_) => 2,
            Layout::Line(_) => 1,
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Layout::Rectangle(d) => {
                vec![(d.rect.x1_lo, d.rect.x1_hi), (d.rect.x2_lo, d.rect.x2_hi)]
            }
            Layout::Line(d) => vec![d.covariate.support()],
        }
    }
}

fn cell_of(v: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
    let j = ((v - lo) / (hi - lo) * bins as f64).floor();
    (j.max(0.0) as usize).min(bins - 1)
}

fn edge((lo, hi): (f64, f64), bins: usize, j: usize) -> f64 {
    if j == bins {
        hi
    } else {
        lo + (hi - lo) * j as f64 / bins as f64
    }
}

/// Composite Simpson on `[a, b]` with `panels` (even) sub-intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels + panels % 2;
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    h / 3.0 * (f(a) + f(b) + inner)
}

fn verify_inner(config: &NondegeneracyConfig, layout: &Layout) -> Result<NondegeneracyReport> {
    let dgp = config.dgp.as_dgp();
    let k = dgp.covariate_count();
    let dims = layout.dims();
    let bounds = layout.bounds();
    let bins = config.bins;
    let cells = bins.pow(dims as u32);
    let blocks: Vec<_> = rng::blocks(config.n).collect();

    let mut ys: Vec<f64> = blocks
        .par_iter()
        .map(|&(b, _, len)| sample_block(dgp, config.seed, b, len).1)
        .collect::<Vec<_>>()
        .concat();
    let ws: Vec<f64> = config
        .w_quantiles
        .iter()
        .map(|&t| stats::order_statistic_in_place(&mut ys, t))
        .collect();
    drop(ys);

    type Acc = (Vec<Vec<u64>>, Vec<Vec<Moments>>);
    let empty = || -> Acc {
        (
            vec![vec![0; cells]; ws.len()],
            vec![
                bounds
                    .iter()
                    .map(|b| Moments::new(0.5 * (b.0 + b.1)))
                    .collect();
                ws.len()
            ],
        )
    };
    let parts: Vec<Acc> = blocks
        .par_iter()
        .map(|&(b, _, len)| {
            let (xs, ys) = sample_block(dgp, config.seed, b, len);
            let mut acc = empty();
            for (i, &y) in ys.iter().enumerate() {
                let x = &xs[i * k..(i + 1) * k];
                for (t, &w) in ws.iter().enumerate() {
                    if y > w {
                        let mut c = 0;
                        for d in 0..dims {
                            c = c * bins + cell_of(x[d], bounds[d], bins);
                            acc.1[t][d].push(x[d]);
                        }
                        acc.0[t][c] += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = empty();
    for p in &parts {
        for (a, b) in total.0.iter_mut().zip(&p.0) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in total.1.iter_mut().zip(&p.1) {
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        }
    }

    let mut comparisons = Vec::with_capacity(ws.len());
    for (t, (&tau, &w)) in config.w_quantiles.iter().zip(&ws).enumerate() {
        let counts = &total.0[t];
        let n_tail: u64 = counts.iter().sum();
        if n_tail < MIN_TAIL_COUNT {
            return Err(Error::InsufficientTailData {
                needed: MIN_TAIL_COUNT as usize,
                found: n_tail as usize,
            });
        }
        let empirical_moments = total.1[t]
            .iter()
            .map(|m| (m.mean(), m.variance()))
            .collect();
        comparisons.push(match layout {
            Layout::Rectangle(d) => {
                rectangle_comparison(d, tau, w, bins, counts, n_tail, empirical_moments)?
            }
            Layout::Line(d) => line_comparison(d, tau, w, bins, counts, n_tail, empirical_moments)?,
        });
    }
    Ok(NondegeneracyReport {
        config: config.clone(),
        comparisons,
    })
}

fn z_score(count: u64, n: u64, p: f64) -> f64 {
    let n = n as f64;
    (count as f64 - n * p) / (n * p * (1.0 - p)).sqrt()
}

fn rectangle_comparison(
    d: &RectangleDgp,
    tau: f64,
    w: f64,
    bins: usize,
    counts: &[u64],
    n_tail: u64,
    empirical_moments: Vec<(f64, f64)>,
) -> Result<ThresholdComparison> {
    let rect = &d.rect;
    let alpha = d.noise.tail_exponent();
    let mode = match d.noise {
        Noise::Pareto { .. } => {
            if w < rect.x1_hi + rect.x2_hi {
                return Err(Error::Domain(format!(
                    "exact finite-w density needs w >= x1_hi + x2_hi = {}, got w = {w}; raise the threshold quantile",
                    rect.x1_hi + rect.x2_hi
                )));
            }
            OracleMode::Exact
        }
        Noise::AbsStudentT { .. } => OracleMode::LimitOnly,
    };
    let b1 = (rect.x1_lo, rect.x1_hi);
    let b2 = (rect.x2_lo, rect.x2_hi);
    let mut cells = Vec::with_capacity(counts.len());
    for i in 0..bins {
        let c1 = (edge(b1, bins, i), edge(b1, bins, i + 1));
        for j in 0..bins {
            let c2 = (edge(b2, bins, j), edge(b2, bins, j + 1));
            let area = (c1.1 - c1.0) * (c2.1 - c2.0);
            let count = counts[i * bins + j];
            let p_limit = extremal_limit_cell_probability(c1, c2, alpha, rect)?;
            let p_exact = match mode {
                OracleMode::Exact => {
                    Some(extremal_finite_w_cell_probability(c1, c2, w, alpha, rect)?)
                }
                OracleMode::LimitOnly => None,
            };
            cells.push(CellRow {
                x1_lo: c1.0,
                x1_hi: c1.1,
                x2_lo: c2.0,
                x2_hi: c2.1,
                count,
                empirical_density: count as f64 / (n_tail as f64 * area),
                exact_density: p_exact.map(|p| p / area),
                limit_density: p_limit / area,
                z_exact: p_exact.map(|p| z_score(count, n_tail, p)),
                z_limit: z_score(count, n_tail, p_limit),
            });
        }
    }
    let ((m1, v1), (m2, v2)) = extremal_limit_moments(alpha, rect)?;
    Ok(ThresholdComparison {
        tau,
        w,
        n_tail,
        mode,
        max_abs_z_exact: (mode == OracleMode::Exact).then(|| {
            cells
                .iter()
                .filter_map(|c| c.z_exact)
                .fold(0.0, |a: f64, z| a.max(z.abs()))
        }),
        max_abs_z_limit: cells.iter().fold(0.0, |a: f64, c| a.max(c.z_limit.abs())),
        sup_exact_vs_limit: match mode {
            OracleMode::Exact => Some(sup_distance_exact_vs_limit(w, alpha, rect, 100)?),
            OracleMode::LimitOnly => None,
        },
        empirical_moments,
        limit_moments: vec![(m1, v1), (m2, v2)],
        cells,
    })
}

/// Single covariate: the limiting density of `X | Y > w` is proportional to
/// `scale(x)^alpha` times the covariate density.
fn line_comparison(
    d: &ExtremalQuantileDgp,
    tau: f64,
    w: f64,
    bins: usize,
    counts: &[u64],
    n_tail: u64,
    empirical_moments: Vec<(f64, f64)>,
) -> Result<ThresholdComparison> {
    let alpha = d.noise.tail_exponent();
    let b = d.covariate.support();
    let weight = |x: f64| d.scale.eval(x).powf(alpha);
    const PANELS: usize = 4000;
    let norm = simpson(weight, b.0, b.1, PANELS);
    let raw = |k: i32| simpson(|x| x.powi(k) * weight(x), b.0, b.1, PANELS) / norm;
    let mean = raw(1);
    let mut cells = Vec::with_capacity(bins);
    for i in 0..bins {
        let c = (edge(b, bins, i), edge(b, bins, i + 1));
        let width = c.1 - c.0;
        let count = counts[i];
        let p = simpson(weight, c.0, c.1, PANELS / bins.max(1) + 2) / norm;
        cells.push(CellRow {
            x1_lo: c.0,
            x1_hi: c.1,
            x2_lo: f64::NAN,
            x2_hi: f64::NAN,
            count,
            empirical_density: count as f64 / (n_tail as f64 * width),
            exact_density: None,
            limit_density: p / width,
            z_exact: None,
            z_limit: z_score(count, n_tail, p),
        });
    }
    Ok(ThresholdComparison {
        tau,
        w,
        n_tail,
        mode: OracleMode::LimitOnly,
        max_abs_z_exact: None,
        max_abs_z_limit: cells.iter().fold(0.0, |a: f64, c| a.max(c.z_limit.abs())),
        sup_exact_vs_limit: None,
        empirical_moments,
        limit_moments: vec![(mean, raw(2) - mean * mean)],
        cells,
    })
}

/// One CSV row per (threshold, cell).
pub fn write_comparison_table(path: &Path, report: &NondegeneracyReport) -> Result<()> {
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    let rows = report.comparisons.iter().flat_map(|c| {
        c.cells.iter().map(move |cell| {
            vec![
                fmt17(c.tau),
                fmt17(c.w),
                c.n_tail.to_string(),
                fmt17(cell.x1_lo),
                fmt17(cell.x1_hi),
                fmt17(cell.x2_lo),
                fmt17(cell.x2_hi),
                cell.count.to_string(),
                fmt17(cell.empirical_density),
                opt(cell.exact_density),
                fmt17(cell.limit_density),
                opt(cell.z_exact),
                fmt17(cell.z_limit),
            ]
        })
    });
    output::write_csv(
        path,
        &[
            "tau",
            "w",
            "n_tail",
            "x1_lo",
            "x1_hi",
            "x2_lo",
            "x2_hi",
            "count",
            "empirical_density",
            "exact_density",
            "limit_density",
            "z_exact",
            "z_limit",
        ],
        rows,
    )
}
