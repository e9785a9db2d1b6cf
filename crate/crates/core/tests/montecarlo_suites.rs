//! Monte Carlo examples for the experiment runners, at desk scale.

use tailgauge::estimator::ThresholdSpec;
use tailgauge::extremal::{self, NondegeneracyConfig};
use tailgauge::models::{self, DgpSpec};
use tailgauge::montecarlo::{self, CoverageConfig, ExperimentConfig, RateConfig};

#[test]
fn rate_table_tracks_oracle() {
    let result = montecarlo::run_rate_experiment(&RateConfig {
        lower: 1.0,
        upper: 2.0,
        n: 10_000_000,
        w_grid: vec![10.0, 100.0, 1000.0],
        seed: 21,
        shards: 2,
    })
    .unwrap();
    for row in &result.rows {
        let ratio = row.empirical_variance / row.oracle_variance;
        assert!((0.9..=1.1).contains(&ratio), "w = {}: ratio {ratio}", row.w);
        assert!(row.n_tail >= 10_000 || row.w == 1000.0);
    }
}

#[test]
fn inverse_log_square_approaches_oracle() {
    let oracle = models::UniformTailOracle::new(1.0, 2.0).unwrap();
    let gaps: Vec<f64> = [1e2, 1e4, 1e8, 1e16, 1e32]
        .iter()
        .map(|&w| {
            let (_, var) = oracle.conditional_moments(w).unwrap();
            (1.0 / w.ln().powi(2) / var - 1.0).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|g| g[1] < g[0]), "{gaps:?}");
    assert!(gaps[4] < 1e-6);
}

#[test]
fn exp_linear_fit_within_three_standard_errors() {
    let result = montecarlo::run_coverage_experiment(&CoverageConfig {
        theta: [0.5, 1.0],
        n: 1_000_000,
        threshold: ThresholdSpec::Quantile(0.99),
        replications: 200,
        level: 0.95,
        seed: 77,
        shards: 2,
    })
    .unwrap();
    assert!(result.failures.is_empty());
    let within = result
        .replications
        .iter()
        .filter(|r| {
            r.theta_hat
                .iter()
                .zip(&r.standard_errors)
                .zip([0.5, 1.0])
                .all(|((t, se), truth)| (t - truth).abs() <= 3.0 * se)
        })
        .count();
    assert!(within as f64 >= 0.9 * 200.0, "{within} of 200");
}

#[test]
fn standardized_components_are_standard_normal() {
    let r = 500;
    let result = montecarlo::run_coverage_experiment(&CoverageConfig {
        theta: [0.5, 1.0],
        n: 100_000,
        threshold: ThresholdSpec::Quantile(0.99),
        replications: r,
        level: 0.95,
        seed: 4242,
        shards: 2,
    })
    .unwrap();
    for c in &result.components {
        let sd = c.standardized_variance.sqrt();
        assert!(
            c.standardized_mean.abs() <= 4.0 / (r as f64).sqrt() * sd,
            "{c:?}"
        );
        assert!((0.85..=1.15).contains(&c.standardized_variance), "{c:?}");
    }
}

#[test]
fn shard_counts_give_identical_tables() {
    let run = |shards| {
        let mut cfg =
            ExperimentConfig::new(DgpSpec::builtin("dgp1m-extremal").unwrap(), 400_000, 5);
        cfg.shards = shards;
        montecarlo::run_rank_experiment(&cfg).unwrap()
    };
    let (a, b) = (run(1), run(8));
    assert_eq!(a.histograms, b.histograms);
    assert_eq!(a.report, b.report);
    assert_eq!(a.quantiles, b.quantiles);
}

#[test]
fn reference_ratios_at_desk_scale() {
    let ratio = |name: &str, tau_index: usize| {
        let mut cfg = ExperimentConfig::new(DgpSpec::builtin(name).unwrap(), 10_000_000, 1);
        if name.starts_with("dgp4m") {
            cfg.partition = Some(tailgauge::diagnostics::ModePartition::dgp4m());
        }
        let out = montecarlo::run_rank_experiment(&cfg).unwrap();
        let rec = &out.report.records[tau_index];
        (
            rec.variance_ratio[0],
            rec.multimode.as_ref().map(|m| m.ratio),
            out.report.records[2].multimode.as_ref().map(|m| m.ratio),
        )
    };
    let (r1, _, _) = ratio("dgp1m-tail", 3);
    assert!((r1 - 0.04).abs() <= 0.02, "{r1}");
    let (_, r4, r4_99) = ratio("dgp4m-extremal", 3);
    let (r4, r4_99) = (r4.unwrap(), r4_99.unwrap());
    assert!(
        (r4 - 0.20).abs() <= 0.05 && (r4 - r4_99).abs() <= 0.05,
        "{r4} {r4_99}"
    );
}

#[test]
fn tail_covariate_variance_settles_at_the_limit() {
    let report = extremal::verify_nondegeneracy(&NondegeneracyConfig {
        dgp: DgpSpec::builtin("rect-pareto").unwrap(),
        n: 10_000_000,
        w_quantiles: vec![0.99, 0.999],
        bins: 10,
        seed: 8,
        shards: 2,
    })
    .unwrap();
    let last = report.comparisons.last().unwrap();
    for (emp, lim) in last.empirical_moments.iter().zip(&last.limit_moments) {
        assert!(emp.1 > 0.5 * lim.1, "{emp:?} vs {lim:?}");
        assert!((emp.1 - lim.1).abs() <= 0.1 * lim.1, "{emp:?} vs {lim:?}");
    }
    // x1 stays uniform.
    assert!((last.empirical_moments[0].1 - 1.0 / 12.0).abs() < 0.01);
}
