//! Seeded, sharded simulation runners.
//!
//! Rows are drawn in fixed blocks of [`rng::BLOCK_ROWS`], each from its own
//! counter-based stream. Blocks are summarized independently and the
//! summaries merged in block order, so results do not depend on how many
//! worker threads were used.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    GramAccumulator, GramReport, HistogramCounter, HistogramDensity, ModePartition,
    MultiModeRecord, SegmentMoments, TailConditionReport, TailRecord, TailSide,
};
use crate::error::{Error, Result};
use crate::estimator::{self, ThresholdSpec};
use crate::models::{sample_block, DgpSpec, TailIndexDgp, UniformTailOracle};
use crate::output::{self, fmt17};
use crate::rng;
use crate::stats::{self, Moments};

/// Minimum expected count in the smallest tail.
pub const MIN_TAIL_ROWS: f64 = 1000.0;

/// Runs `f` on a thread pool with `shards` workers.
pub fn with_shards<T: Send>(shards: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if shards == 0 {
        return Err(Error::Config("shard count must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(shards)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn default_shards() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dgp: DgpSpec,
    pub n: usize,
    pub taus: Vec<f64>,
    pub h: f64,
    pub seed: u64,
    #[serde(skip, default = "crate::montecarlo::default_shards")]
    pub shards: usize,
    /// Applied to the first covariate.
    pub partition: Option<ModePartition>,
}

impl ExperimentConfig {
    pub fn new(dgp: DgpSpec, n: usize, seed: u64) -> Self {
        ExperimentConfig {
            dgp,
            n,
            taus: vec![0.9, 0.95, 0.99, 0.995],
            h: 0.01,
            seed,
            shards: default_shards(),
            partition: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.as_dgp().validate()?;
        if self.taus.is_empty() {
            return Err(Error::Config("at least one tau is required".into()));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {t}")));
        }
        let max_tau = self.taus.iter().copied().fold(0.0, f64::max);
        let expected = self.n as f64 * (1.0 - max_tau);
        if expected < MIN_TAIL_ROWS {
            return Err(Error::Config(format!(
                "n (1 - max tau) = {expected} is below {MIN_TAIL_ROWS}; increase n or lower tau"
            )));
        }
        crate::diagnostics::bin_count(self.h).map_err(|e| Error::Config(e.to_string()))?;
        if self.shards == 0 {
            return Err(Error::Config("shard count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Streaming summaries over one block (or the merge of several).
#[derive(Debug, Clone)]
struct BlockSummary {
    all_moments: Vec<Moments>,
    all_gram: GramAccumulator,
    all_segments: Option<(SegmentMoments, SegmentMoments)>,
    tails: Vec<TailSummary>,
}

#[derive(Debug, Clone)]
struct TailSummary {
    moments: Vec<Moments>,
    gram: GramAccumulator,
    histogram: HistogramCounter,
    segments: Option<SegmentMoments>,
}

const MOMENT_SHIFT: f64 = 0.5;

impl BlockSummary {
    fn new(k: usize, taus: usize, h: f64, partition: Option<&ModePartition>) -> Result<Self> {
        let tail = TailSummary {
            moments: vec![Moments::new(MOMENT_SHIFT); k],
            gram: GramAccumulator::new(k + 1),
            histogram: HistogramCounter::new(h)?,
            segments: partition.map(SegmentMoments::new),
        };
        Ok(BlockSummary {
            all_moments: vec![Moments::new(MOMENT_SHIFT); k],
            all_gram: GramAccumulator::new(k + 1),
            all_segments: partition.map(|p| {
                (
                    SegmentMoments::new(p),
                    SegmentMoments::new(&ModePartition::single()),
                )
            }),
            tails: vec![tail; taus],
        })
    }

    fn merge(&mut self, other: &BlockSummary) {
        for (a, b) in self.all_moments.iter_mut().zip(&other.all_moments) {
            a.merge(b);
        }
        self.all_gram.merge(&other.all_gram);
        if let (Some((a, pa)), Some((b, pb))) =
            (self.all_segments.as_mut(), other.all_segments.as_ref())
        {
            a.merge(b);
            pa.merge(pb);
        }
        for (a, b) in self.tails.iter_mut().zip(&other.tails) {
            for (x, y) in a.moments.iter_mut().zip(&b.moments) {
                x.merge(y);
            }
            a.gram.merge(&b.gram);
            a.histogram.merge(&b.histogram);
            if let (Some(x), Some(y)) = (a.segments.as_mut(), b.segments.as_ref()) {
                x.merge(y);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankExperiment {
    pub config: ExperimentConfig,
    /// `Q_tau(Y)` per tau.
    pub quantiles: Vec<f64>,
    pub report: TailConditionReport,
    pub histograms: Vec<HistogramDensity>,
}

/// Draws `config.n` rows of the DGP and reports the covariate law on each
/// right tail `{Y >= Q_tau(Y)}`: variances, Gram eigenvalues, histogram of the
/// first covariate and, with a partition, `Var_KM`.
pub fn run_rank_experiment(config: &ExperimentConfig) -> Result<RankExperiment> {
    config.validate()?;
    with_shards(config.shards, || rank_experiment_inner(config))?
}

fn rank_experiment_inner(config: &ExperimentConfig) -> Result<RankExperiment> {
    let dgp = config.dgp.as_dgp();
    let k = dgp.covariate_count();
    let blocks: Vec<_> = rng::blocks(config.n).collect();

    // Pass 1: responses only, to fix the quantiles.
    let mut ys: Vec<f64> = blocks
        .par_iter()
        .map(|&(b, _, len)| sample_block(dgp, config.seed, b, len).1)
        .collect::<Vec<_>>()
        .concat();
    let quantiles: Vec<f64> = config
        .taus
        .iter()
        .map(|&tau| stats::order_statistic_in_place(&mut ys, tau))
        .collect();
    drop(ys);

    // Pass 2: regenerate each block and summarize.
    let partition = config.partition.as_ref();
    let summaries: Vec<BlockSummary> = blocks
        .par_iter()
        .map(|&(b, _, len)| -> Result<BlockSummary> {
            let (xs, ys) = sample_block(dgp, config.seed, b, len);
            let mut s = BlockSummary::new(k, config.taus.len(), config.h, partition)?;
            let mut row = vec![1.0; k + 1];
            for (i, &y) in ys.iter().enumerate() {
                let x = &xs[i * k..(i + 1) * k];
                row[1..].copy_from_slice(x);
                for (m, &v) in s.all_moments.iter_mut().zip(x) {
                    m.push(v);
                }
                s.all_gram.push(&row);
                if let Some((seg, plain)) = s.all_segments.as_mut() {
                    seg.push(x[0]);
                    plain.push(x[0]);
                }
                for (t, &q) in s.tails.iter_mut().zip(&quantiles) {
                    if y >= q {
                        for (m, &v) in t.moments.iter_mut().zip(x) {
                            m.push(v);
                        }
                        t.gram.push(&row);
                        t.histogram.push(x[0])?;
                        if let Some(seg) = t.segments.as_mut() {
                            seg.push(x[0]);
                        }
                    }
                }
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;

    let mut total = BlockSummary::new(k, config.taus.len(), config.h, partition)?;
    for s in &summaries {
        total.merge(s);
    }

    let unconditional_variance: Vec<f64> =
        total.all_moments.iter().map(Moments::variance).collect();
    let unconditional_gram = gram_report(&total.all_gram)?;
    let unconditional_mm = total
        .all_segments
        .as_ref()
        .map(|(seg, plain)| (seg.finish().total, plain.finish().total));

    let mut warnings = Vec::new();
    let mut records = Vec::with_capacity(config.taus.len());
    let mut histograms = Vec::with_capacity(config.taus.len());
    for ((t, &tau), &w) in total.tails.into_iter().zip(&config.taus).zip(&quantiles) {
        let n_tail = t.gram.count() as usize;
        let conditional_variance: Vec<f64> = t.moments.iter().map(Moments::variance).collect();
        let variance_ratio = conditional_variance
            .iter()
            .zip(&unconditional_variance)
            .map(|(c, u)| c / u)
            .collect();
        let multimode = match (t.segments, unconditional_mm) {
            (Some(seg), Some((u, plain))) => {
                let tail = seg.finish();
                warnings.extend(tail.warnings.iter().map(|m| format!("tau {tau}: {m}")));
                Some(MultiModeRecord::new(tail, u, plain))
            }
            _ => None,
        };
        records.push(TailRecord {
            tau,
            w,
            n_tail,
            conditional_variance,
            variance_ratio,
            gram_eigenvalues: gram_report(&t.gram)?.eigenvalues,
            multimode,
        });
        histograms.push(t.histogram.finish(config.n, TailSide::Right.mass(tau))?);
    }

    Ok(RankExperiment {
        config: config.clone(),
        quantiles,
        report: TailConditionReport {
            side: TailSide::Right,
            n_total: config.n,
            unconditional_variance,
            unconditional_gram_eigenvalues: unconditional_gram.eigenvalues,
            records,
            warnings,
        },
        histograms,
    })
}

fn gram_report(acc: &GramAccumulator) -> Result<GramReport> {
    if acc.count() == 0 {
        return Err(Error::InsufficientTailData {
            needed: 1,
            found: 0,
        });
    }
    let matrix = acc.matrix();
    Ok(GramReport {
        eigenvalues: estimator::ascending_eigenvalues(&matrix),
        matrix,
        n_tail: acc.count() as usize,
    })
}

/// Writes `report.json`, `config.json` and one `density_tau_<tau>.csv` per tau.
pub fn write_rank_outputs(result: &RankExperiment, dir: &Path) -> Result<Vec<PathBuf>> {
    output::ensure_dir(dir)?;
    let mut written = Vec::new();
    let config = dir.join("config.json");
    output::write_json(&config, &result.config)?;
    written.push(config);
    for (h, &tau) in result.histograms.iter().zip(&result.config.taus) {
        let path = dir.join(format!("density_tau_{}.csv", output::tau_label(tau)));
        output::write_histogram(&path, h)?;
        written.push(path);
    }
    let report = dir.join("report.json");
    output::write_json(&report, result)?;
    written.push(report);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    /// True `(theta0, theta1)` of `alpha(x) = exp(theta0 + theta1 x)`.
    pub theta: [f64; 2],
    pub n: usize,
    pub threshold: ThresholdSpec,
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
    #[serde(skip, default = "crate::montecarlo::default_shards")]
    pub shards: usize,
}

pub const MIN_REPLICATIONS: usize = 100;
/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub replication: usize,
    pub seed: u64,
    pub n0: usize,
    pub theta_hat: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub covered: Vec<bool>,
    /// `sqrt(n0) U (theta_hat - theta)`.
    pub standardized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub coverage: f64,
    pub standardized_mean: f64,
    pub standardized_variance: f64,
    /// KS distance of the standardized component to N(0, 1).
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub config: CoverageConfig,
    pub completed: usize,
    pub failures: Vec<ReplicationFailure>,
    pub components: Vec<ComponentSummary>,
    pub replications: Vec<Replication>,
}

/// Repeats fit-and-interval on independent samples of the exp-linear DGP.
pub fn run_coverage_experiment(config: &CoverageConfig) -> Result<CoverageResult> {
    if config.replications < MIN_REPLICATIONS {
        return Err(Error::Config(format!(
            "coverage needs at least {MIN_REPLICATIONS} replications, got {}",
            config.replications
        )));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::Config(format!(
            "level must lie in (0, 1), got {}",
            config.level
        )));
    }
    let dgp = TailIndexDgp::exp_linear(config.theta[0], config.theta[1])?;
    let truth = DVector::from_row_slice(&config.theta);
    let outcomes: Vec<std::result::Result<Replication, ReplicationFailure>> =
        with_shards(config.shards, || {
            (0..config.replications)
                .into_par_iter()
                .map(|r| {
                    let seed = rng::derive_seed(config.seed, r as u64);
                    replicate(&dgp, config, &truth, seed)
                        .map(|(n0, theta_hat, standard_errors, covered, standardized)| {
                            Replication {
                                replication: r,
                                seed,
                                n0,
                                theta_hat,
                                standard_errors,
                                covered,
                                standardized,
                            }
                        })
                        .map_err(|e| {
                            if e.is_internal() {
                                log::error!("replication {r}: {e}");
                            }
                            ReplicationFailure {
                                replication: r,
                                kind: e.kind().to_string(),
                                message: e.to_string(),
                            }
                        })
                })
                .collect()
        })?;

    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => replications.push(r),
            Err(f) => failures.push(f),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_SHARE * config.replications as f64 {
        return Err(Error::Domain(format!(
            "{} of {} replications failed (first: {})",
            failures.len(),
            config.replications,
            failures[0].message
        )));
    }
    if !failures.is_empty() {
        log::warn!(
            "{} replications failed and are excluded from the summaries",
            failures.len()
        );
    }

    let m = replications.len() as f64;
    let components = (0..2)
        .map(|j| {
            let coverage = replications.iter().filter(|r| r.covered[j]).count() as f64 / m;
            let z: Vec<f64> = replications.iter().map(|r| r.standardized[j]).collect();
            let mut mom = Moments::new(0.0);
            z.iter().for_each(|&v| mom.push(v));
            let ks = stats::ks_statistic(&z, stats::standard_normal_cdf);
            ComponentSummary {
                coverage,
                standardized_mean: mom.mean(),
                standardized_variance: mom.variance(),
                ks_statistic: ks,
                ks_pvalue: stats::ks_pvalue(ks, z.len()),
            }
        })
        .collect();
    Ok(CoverageResult {
        config: config.clone(),
        completed: replications.len(),
        failures,
        components,
        replications,
    })
}

type ReplicationOutcome = (usize, Vec<f64>, Vec<f64>, Vec<bool>, Vec<f64>);

fn replicate(
    dgp: &TailIndexDgp,
    config: &CoverageConfig,
    truth: &DVector<f64>,
    seed: u64,
) -> Result<ReplicationOutcome> {
    let data = crate::models::sample_tail_index(dgp, config.n, seed)?;
    let fit = estimator::fit(&data, config.threshold)?;
    let intervals = estimator::confidence_intervals(&fit, config.level)?;
    let z = estimator::standardized_deviation(&fit, truth)?;
    Ok((
        fit.n0(),
        fit.theta_hat.iter().copied().collect(),
        intervals.iter().map(|c| c.standard_error).collect(),
        intervals
            .iter()
            .zip(truth.iter())
            .map(|(c, &t)| c.contains(t))
            .collect(),
        z.iter().copied().collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    /// Support of the uniform tail index `Z = X`.
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub w_grid: Vec<f64>,
    pub seed: u64,
    #[serde(skip, default = "crate::montecarlo::default_shards")]
    pub shards: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub w: f64,
    pub n_tail: u64,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    pub variance_standard_error: f64,
    pub oracle_mean: f64,
    pub oracle_variance: f64,
    /// `1 / (log w)^2`.
    pub inverse_log_squared: f64,
}

impl RateRow {
    /// `(empirical - oracle) / SE`.
    pub fn z_score(&self) -> f64 {
        (self.empirical_variance - self.oracle_variance) / self.variance_standard_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub config: RateConfig,
    pub rows: Vec<RateRow>,
}

/// Empirical `Var(Z | Y > w)` under a uniform tail index against the closed form.
pub fn run_rate_experiment(config: &RateConfig) -> Result<RateResult> {
    let oracle = UniformTailOracle::new(config.lower, config.upper)?;
    let dgp = TailIndexDgp::uniform_index(config.lower, config.upper)?;
    if config.n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if let Some(w) = config.w_grid.iter().find(|w| !(**w > 1.0)) {
        return Err(Error::Config(format!("every w must exceed 1, got {w}")));
    }
    let shift = 0.5 * (config.lower + config.upper);
    let grid = &config.w_grid;
    let parts: Vec<Vec<Moments>> = with_shards(config.shards, || {
        rng::blocks(config.n)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(b, _, len)| {
                let (xs, ys) = sample_block(&dgp, config.seed, b, len);
                let mut acc = vec![Moments::new(shift); grid.len()];
                for (&x, &y) in xs.iter().zip(&ys) {
                    for (m, &w) in acc.iter_mut().zip(grid) {
                        if y > w {
                            m.push(x);
                        }
                    }
                }
                acc
            })
            .collect()
    })?;
    let mut acc = vec![Moments::new(shift); grid.len()];
    for p in &parts {
        for (a, b) in acc.iter_mut().zip(p) {
            a.merge(b);
        }
    }
    let rows = grid
        .iter()
        .zip(&acc)
        .map(|(&w, m)| {
            let (oracle_mean, oracle_variance) = oracle.conditional_moments(w)?;
            Ok(RateRow {
                w,
                n_tail: m.count(),
                empirical_mean: m.mean(),
                empirical_variance: m.variance(),
                variance_standard_error: m.variance_standard_error(),
                oracle_mean,
                oracle_variance,
                inverse_log_squared: w.ln().powi(-2),
            })
        })
        .collect::<Result<_>>()?;
    Ok(RateResult {
        config: config.clone(),
        rows,
    })
}

pub fn write_rate_table(path: &Path, result: &RateResult) -> Result<()> {
    let rows = result.rows.iter().map(|r| {
        vec![
            fmt17(r.w),
            r.n_tail.to_string(),
            fmt17(r.empirical_variance),
            fmt17(r.variance_standard_error),
            fmt17(r.oracle_variance),
            fmt17(r.inverse_log_squared),
        ]
    });
    output::write_csv(
        path,
        &[
            "w",
            "n_tail",
            "empirical_variance",
            "standard_error",
            "oracle_variance",
            "inverse_log_w_squared",
        ],
        rows,
    )
}
