//! Rank-condition diagnostics for the tail sample: conditional Gram matrices,
//! covariate variances given a tail event, histogram densities and mode-split
//! variances.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{ascending_eigenvalues, TailThreshold};
use crate::models::ObservationSet;
use crate::stats::{self, CompensatedSum, Moments};

/// Which end of the response distribution counts as the tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailSide {
    /// `y >= Q_tau`
    Right,
    /// `y <= Q_tau`
    Left,
}

impl TailSide {
    #[inline]
    pub fn contains(self, y: f64, q: f64) -> bool {
        match self {
            TailSide::Right => y >= q,
            TailSide::Left => y <= q,
        }
    }

    /// Probability mass of the tail event `{y >= Q_tau}` or `{y <= Q_tau}`.
    pub fn mass(self, tau: f64) -> f64 {
        match self {
            TailSide::Right => 1.0 - tau,
            TailSide::Left => tau,
        }
    }
}

/// `Q_tau` of `response` and the closed tail mask on that side.
pub fn tail_mask(response: &[f64], tau: f64, side: TailSide) -> Result<(f64, Vec<bool>)> {
    if response.is_empty() {
        return Err(Error::Domain("response is empty".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    let q = stats::order_statistic(response, tau);
    Ok((q, response.iter().map(|&y| side.contains(y, q)).collect()))
}

/// Running `sum x x'` over rows, in compensated arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramAccumulator {
    p: usize,
    count: u64,
    upper: Vec<CompensatedSum>,
}

impl GramAccumulator {
    pub fn new(p: usize) -> Self {
        GramAccumulator {
            p,
            count: 0,
            upper: vec![CompensatedSum::default(); p * (p + 1) / 2],
        }
    }

    #[inline]
    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.p);
        self.count += 1;
        let mut k = 0;
        for a in 0..self.p {
            for b in a..self.p {
                self.upper[k].add(x[a] * x[b]);
                k += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &GramAccumulator) {
        self.count += other.count;
        for (a, b) in self.upper.iter_mut().zip(&other.upper) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `(1/count) sum x x'`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.p, self.p);
        let n = self.count.max(1) as f64;
        let mut k = 0;
        for a in 0..self.p {
            for b in a..self.p {
                m[(a, b)] = self.upper[k].value() / n;
                m[(b, a)] = m[(a, b)];
                k += 1;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub matrix: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub n_tail: usize,
}

impl GramReport {
    fn from_accumulator(acc: &GramAccumulator) -> Result<Self> {
        if acc.count() == 0 {
            return Err(Error::InsufficientTailData {
                needed: 1,
                found: 0,
            });
        }
        let matrix = acc.matrix();
        Ok(GramReport {
            eigenvalues: ascending_eigenvalues(&matrix),
            matrix,
            n_tail: acc.count() as usize,
        })
    }
}

/// Gram matrix of the rows with `y > w`.
pub fn conditional_gram(data: &ObservationSet, threshold: &TailThreshold) -> Result<GramReport> {
    let mask: Vec<bool> = data.response.iter().map(|&y| y > threshold.w).collect();
    conditional_gram_masked(data, &mask)
}

/// Gram matrix of the masked rows.
pub fn conditional_gram_masked(data: &ObservationSet, mask: &[bool]) -> Result<GramReport> {
    check_mask(data.n(), mask)?;
    let mut acc = GramAccumulator::new(data.p());
    let mut row = vec![0.0; data.p()];
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        row.iter_mut()
            .zip(data.design.row(i).iter())
            .for_each(|(r, v)| *r = *v);
        acc.push(&row);
    }
    GramReport::from_accumulator(&acc)
}

fn check_mask(n: usize, mask: &[bool]) -> Result<()> {
    if mask.len() != n {
        return Err(Error::Domain(format!(
            "mask has {} entries, data has {n} rows",
            mask.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub n_tail: usize,
    /// Plug-in variance of each covariate over the masked rows.
    pub conditional: Vec<f64>,
    pub unconditional: Vec<f64>,
    pub ratios: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Per-covariate variance over the masked rows and its ratio to the full-sample variance.
pub fn conditional_variance(data: &ObservationSet, mask: &[bool]) -> Result<VarianceReport> {
    check_mask(data.n(), mask)?;
    let n_tail = mask.iter().filter(|&&m| m).count();
    if n_tail == 0 {
        return Err(Error::InsufficientTailData {
            needed: 1,
            found: 0,
        });
    }
    let mut warnings = Vec::new();
    if n_tail == 1 {
        let msg = "single row in the tail; conditional variance is 0".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let k = data.p() - 1;
    let mut conditional = Vec::with_capacity(k);
    let mut unconditional = Vec::with_capacity(k);
    for j in 0..k {
        let x = data.covariate(j);
        let shift = x[0];
        let mut all = Moments::new(shift);
        let mut tail = Moments::new(shift);
        for (&v, &m) in x.iter().zip(mask) {
            all.push(v);
            if m {
                tail.push(v);
            }
        }
        conditional.push(tail.variance());
        unconditional.push(all.variance());
    }
    let ratios = conditional
        .iter()
        .zip(&unconditional)
        .map(|(c, u)| c / u)
        .collect();
    Ok(VarianceReport {
        n_tail,
        conditional,
        unconditional,
        ratios,
        warnings,
    })
}

/// Bin counts on `((j-1)h, jh]`, `j = 1..1/h`, with 0 placed in the first bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramCounter {
    bins: usize,
    counts: Vec<u64>,
}

/// Number of bins `1/h`, requiring `h` to divide 1.
pub fn bin_count(h: f64) -> Result<usize> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::Domain(format!(
            "bin width must lie in (0, 1], got {h}"
        )));
    }
    let m = (1.0 / h).round();
    if ((1.0 / h) - m).abs() > 1e-9 * m {
        return Err(Error::Domain(format!("bin width {h} does not divide 1")));
    }
    Ok(m as usize)
}

/// Zero-based bin of `v` in `[0, 1]` for `bins` bins of width `1/bins`.
#[inline]
pub fn bin_index(v: f64, bins: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("histogram value {v} outside [0, 1]")));
    }
    let s = v * bins as f64;
    let r = s.round();
    // Values within rounding of an edge belong to the bin that edge closes.
    let j = if (s - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        s.ceil()
    };
    Ok((j as usize).clamp(1, bins) - 1)
}

impl HistogramCounter {
    pub fn new(h: f64) -> Result<Self> {
        let bins = bin_count(h)?;
        Ok(HistogramCounter {
            bins,
            counts: vec![0; bins],
        })
    }

    #[inline]
    pub fn push(&mut self, v: f64) -> Result<()> {
        self.counts[bin_index(v, self.bins)?] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &HistogramCounter) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn finish(self, n_total: usize, tail_mass: f64) -> Result<HistogramDensity> {
        if n_total == 0 {
            return Err(Error::Domain("histogram needs n_total >= 1".into()));
        }
        if !(tail_mass > 0.0 && tail_mass <= 1.0) {
            return Err(Error::Domain(format!(
                "tail mass must lie in (0, 1], got {tail_mass}"
            )));
        }
        let h = 1.0 / self.bins as f64;
        let scale = n_total as f64 * tail_mass * h;
        Ok(HistogramDensity {
            h,
            tail_mass,
            n_total,
            n_tail: self.total() as usize,
            masses: self.counts.iter().map(|&c| c as f64 / scale).collect(),
            counts: self.counts,
        })
    }
}

/// Histogram estimate of a covariate density given a tail event,
/// `count_j / (n_total * tail_mass * h)` on bin `((j-1)h, jh]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramDensity {
    pub h: f64,
    /// Nominal probability of the tail event.
    pub tail_mass: f64,
    pub n_total: usize,
    pub n_tail: usize,
    pub counts: Vec<u64>,
    pub masses: Vec<f64>,
}

impl HistogramDensity {
    pub fn bins(&self) -> Vec<(f64, f64)> {
        let m = self.counts.len() as f64;
        (0..self.counts.len())
            .map(|j| (j as f64 / m, (j + 1) as f64 / m))
            .collect()
    }

    /// `h * sum masses`, equal to `n_tail / (n_total * tail_mass)`.
    pub fn normalization(&self) -> f64 {
        self.n_tail as f64 / (self.n_total as f64 * self.tail_mass)
    }

    /// Binomial standard error of bin `j`'s mass when the true bin probability is `prob`.
    pub fn binomial_se(&self, prob: f64) -> f64 {
        let n = self.n_tail as f64;
        (n * prob * (1.0 - prob)).sqrt() / (self.n_total as f64 * self.tail_mass * self.h)
    }
}

/// Histogram of the masked `values` (each in `[0, 1]`), normalized by `n_total * tail_mass * h`.
pub fn histogram_density(
    values: &[f64],
    mask: &[bool],
    tail_mass: f64,
    h: f64,
) -> Result<HistogramDensity> {
    check_mask(values.len(), mask)?;
    let mut counter = HistogramCounter::new(h)?;
    for (&v, _) in values.iter().zip(mask).filter(|(_, m)| **m) {
        counter.push(v)?;
    }
    counter.finish(values.len(), tail_mass)
}

/// Mode locations and the midpoint cutoffs between neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePartition {
    pub modes: Vec<f64>,
    pub cutoffs: Vec<f64>,
}

impl ModePartition {
    pub fn from_modes(mut modes: Vec<f64>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Domain(
                "mode partition needs at least one mode".into(),
            ));
        }
        if modes.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("mode locations must be finite".into()));
        }
        modes.sort_by(f64::total_cmp);
        if modes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!("duplicate mode in {modes:?}")));
        }
        let cutoffs = modes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(ModePartition { modes, cutoffs })
    }

    /// Single segment; `Var_KM` reduces to the plain variance.
    pub fn single() -> Self {
        ModePartition {
            modes: vec![0.0],
            cutoffs: Vec::new(),
        }
    }

    /// Minima of `6.5 - 5 cos(20x)` on `[0, 1]` below `1/3`: `0, pi/10, pi/5, 3pi/10`.
    pub fn dgp4m() -> Self {
        let pi = std::f64::consts::PI;
        Self::from_modes(vec![0.0, pi / 10.0, pi / 5.0, 3.0 * pi / 10.0]).expect("distinct modes")
    }

    pub fn k(&self) -> usize {
        self.modes.len()
    }

    /// Segment of `v`: segments are `(-inf, c_1), [c_1, c_2), ..., [c_{K-1}, inf)`.
    #[inline]
    pub fn segment(&self, v: f64) -> usize {
        self.cutoffs.partition_point(|&c| c <= v)
    }

    /// Segment `l`'s edges, infinite at the ends.
    pub fn edges(&self, l: usize) -> (f64, f64) {
        let lo = if l == 0 {
            f64::NEG_INFINITY
        } else {
            self.cutoffs[l - 1]
        };
        let hi = self.cutoffs.get(l).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentVariance {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiModeVariance {
    /// Sum of segment variances.
    pub total: f64,
    pub segments: Vec<SegmentVariance>,
    pub warnings: Vec<String>,
}

/// Per-segment streaming moments for `Var_KM`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMoments {
    partition: ModePartition,
    moments: Vec<Moments>,
}

impl SegmentMoments {
    pub fn new(partition: &ModePartition) -> Self {
        // Shift each segment by its own mode to keep sums small.
        let moments = partition.modes.iter().map(|&m| Moments::new(m)).collect();
        SegmentMoments {
            partition: partition.clone(),
            moments,
        }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        let l = self.partition.segment(v);
        self.moments[l].push(v);
    }

    pub fn merge(&mut self, other: &SegmentMoments) {
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            a.merge(b);
        }
    }

    pub fn finish(&self) -> MultiModeVariance {
        let mut warnings = Vec::new();
        let mut total = 0.0;
        let segments = self
            .moments
            .iter()
            .enumerate()
            .map(|(l, m)| {
                let (lower, upper) = self.partition.edges(l);
                let variance = if m.count() == 0 {
                    let msg = format!("segment [{lower}, {upper}) is empty; contributes 0");
                    log::warn!("{msg}");
                    warnings.push(msg);
                    0.0
                } else {
                    m.variance()
                };
                total += variance;
                SegmentVariance {
                    lower,
                    upper,
                    count: m.count(),
                    variance,
                }
            })
            .collect();
        MultiModeVariance {
            total,
            segments,
            warnings,
        }
    }
}

/// `Var_KM`: sum over segments of the variance of masked values falling in each.
pub fn multimode_variance(
    values: &[f64],
    mask: &[bool],
    partition: &ModePartition,
) -> Result<MultiModeVariance> {
    check_mask(values.len(), mask)?;
    if !mask.iter().any(|&m| m) {
        return Err(Error::InsufficientTailData {
            needed: 1,
            found: 0,
        });
    }
    let mut acc = SegmentMoments::new(partition);
    for (&v, _) in values.iter().zip(mask).filter(|(_, m)| **m) {
        acc.push(v);
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub w: f64,
    pub n_tail: usize,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope of `log(min eigenvalue)` on `log(1 / (log w)^2)`.
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<DecayPoint>,
}

pub const MIN_DECAY_TAIL: usize = 100;

pub fn decay_rate_fit_points(points: Vec<DecayPoint>) -> Result<DecayFit> {
    if points.len() < 3 {
        return Err(Error::Domain(format!(
            "decay fit needs at least 3 grid points, got {}",
            points.len()
        )));
    }
    for p in &points {
        if !(p.w > 1.0 && p.min_eigenvalue > 0.0) {
            return Err(Error::Domain(format!(
                "decay fit needs w > 1 and a positive eigenvalue, got w = {}, eigenvalue = {}",
                p.w, p.min_eigenvalue
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| -2.0 * p.w.ln().ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.min_eigenvalue.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 1e-12) {
        return Err(Error::Domain(
            "decay fit grid has no spread in log log w".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit {
        slope,
        intercept: my - slope * mx,
        points,
    })
}

/// Decay of the smallest tail-Gram eigenvalue over a grid of thresholds.
pub fn decay_rate_fit(data: &ObservationSet, w_grid: &[f64]) -> Result<DecayFit> {
    let mut points = Vec::with_capacity(w_grid.len());
    for &w in w_grid {
        let mask: Vec<bool> = data.response.iter().map(|&y| y > w).collect();
        let n_tail = mask.iter().filter(|&&m| m).count();
        if n_tail < MIN_DECAY_TAIL {
            return Err(Error::InsufficientTailData {
                needed: MIN_DECAY_TAIL,
                found: n_tail,
            });
        }
        let g = conditional_gram_masked(data, &mask)?;
        points.push(DecayPoint {
            w,
            n_tail,
            min_eigenvalue: g.eigenvalues[0],
        });
    }
    decay_rate_fit_points(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiModeRecord {
    pub tail: MultiModeVariance,
    /// Same partition applied to every row.
    pub unconditional: f64,
    pub ratio: f64,
    /// Plain (single-segment) variance over every row.
    pub plain_unconditional: f64,
    pub plain_ratio: f64,
}

impl MultiModeRecord {
    pub fn new(tail: MultiModeVariance, unconditional: f64, plain_unconditional: f64) -> Self {
        MultiModeRecord {
            ratio: tail.total / unconditional,
            plain_ratio: tail.total / plain_unconditional,
            tail,
            unconditional,
            plain_unconditional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRecord {
    pub tau: f64,
    /// `Q_tau` of the response.
    pub w: f64,
    pub n_tail: usize,
    pub conditional_variance: Vec<f64>,
    pub variance_ratio: Vec<f64>,
    pub gram_eigenvalues: Vec<f64>,
    pub multimode: Option<MultiModeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailConditionReport {
    pub side: TailSide,
    pub n_total: usize,
    pub unconditional_variance: Vec<f64>,
    pub unconditional_gram_eigenvalues: Vec<f64>,
    pub records: Vec<TailRecord>,
    pub warnings: Vec<String>,
}

/// Per-`tau` rank diagnostics on an in-memory sample. The mode partition, if
/// any, applies to the first covariate.
pub fn tail_condition_report(
    data: &ObservationSet,
    taus: &[f64],
    side: TailSide,
    partition: Option<&ModePartition>,
) -> Result<TailConditionReport> {
    let all = vec![true; data.n()];
    let base = conditional_variance(data, &all)?;
    let base_gram = conditional_gram_masked(data, &all)?;
    let mut warnings = Vec::new();
    let unconditional_mm = match (partition, data.p() > 1) {
        (Some(part), true) => {
            let x = data.covariate(0);
            let mm = multimode_variance(x, &all, part)?;
            Some((
                mm.total,
                multimode_variance(x, &all, &ModePartition::single())?.total,
            ))
        }
        (Some(_), false) => return Err(Error::Domain("mode partition needs a covariate".into())),
        _ => None,
    };
    let mut records = Vec::with_capacity(taus.len());
    for &tau in taus {
        let (w, mask) = tail_mask(&data.response, tau, side)?;
        let v = conditional_variance(data, &mask)?;
        warnings.extend(v.warnings.iter().map(|m| format!("tau {tau}: {m}")));
        let g = conditional_gram_masked(data, &mask)?;
        let multimode = match (partition, unconditional_mm) {
            (Some(part), Some((u, plain))) => {
                let tail = multimode_variance(data.covariate(0), &mask, part)?;
                warnings.extend(tail.warnings.iter().map(|m| format!("tau {tau}: {m}")));
                Some(MultiModeRecord::new(tail, u, plain))
            }
            _ => None,
        };
        records.push(TailRecord {
            tau,
            w,
            n_tail: v.n_tail,
            conditional_variance: v.conditional,
            variance_ratio: v.ratios,
            gram_eigenvalues: g.eigenvalues,
            multimode,
        });
    }
    Ok(TailConditionReport {
        side,
        n_total: data.n(),
        unconditional_variance: base.unconditional,
        unconditional_gram_eigenvalues: base_gram.eigenvalues,
        records,
        warnings,
    })
}
