use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tailgauge::estimator::{self, TailThreshold, ThresholdSpec};
use tailgauge::models::{self, ObservationSet, TailIndexDgp};

const ROWS: usize = 20;
const W: f64 = 1.05;

/// 20 x 3 fixture: `x ~ U[-1, 1]^2`, `y = u^{-1/alpha(x)}` with
/// `alpha = exp(0.3 + 0.5 x1 - 0.4 x2)`, threshold `w = 1.05`.
fn fixture(rows: &[(f64, f64, f64)]) -> Option<(ObservationSet, TailThreshold)> {
    let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|&(a, b, u)| u.powf(-1.0 / (0.3 + 0.5 * a - 0.4 * b).exp()))
        .collect();
    let data = ObservationSet::from_covariates(&[x1, x2], y, None).ok()?;
    let threshold = TailThreshold::resolve(&data.response, ThresholdSpec::Value(W), 3).ok()?;
    Some((data, threshold))
}

fn rows() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.001..0.9f64), ROWS)
}

fn theta() -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, 3).prop_map(DVector::from_vec)
}

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Independent objective: direct loop over rows.
fn brute_objective(theta: &DVector<f64>, data: &ObservationSet, w: f64) -> f64 {
    (0..data.n())
        .filter(|&i| data.response[i] > w)
        .map(|i| {
            let idx: f64 = (0..data.p()).map(|j| data.design[(i, j)] * theta[j]).sum();
            idx.exp() * (data.response[i] / w).ln() - idx
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn score_matches_central_differences(rows in rows(), th in theta()) {
        let Some((data, t)) = fixture(&rows) else { return Ok(()) };
        let g = estimator::score(&th, &data, &t).unwrap();
        let step = 1e-6;
        let fd: Vec<f64> = (0..3)
            .map(|j| {
                let mut hi = th.clone();
                let mut lo = th.clone();
                hi[j] += step;
                lo[j] -= step;
                (brute_objective(&hi, &data, t.w) - brute_objective(&lo, &data, t.w)) / (2.0 * step)
            })
            .collect();
        let scale = sup(g.iter().copied()).max(1.0);
        prop_assert!(sup(fd.iter().zip(g.iter()).map(|(a, b)| a - b)) <= 1e-6 * scale, "{fd:?} vs {g}");
    }

    #[test]
    fn hessian_matches_score_differences(rows in rows(), th in theta()) {
        let Some((data, t)) = fixture(&rows) else { return Ok(()) };
        let h = estimator::hessian(&th, &data, &t).unwrap();
        let step = 1e-6;
        let mut fd = DMatrix::zeros(3, 3);
        for j in 0..3 {
            let mut hi = th.clone();
            let mut lo = th.clone();
            hi[j] += step;
            lo[j] -= step;
            let d = (estimator::score(&hi, &data, &t).unwrap() - estimator::score(&lo, &data, &t).unwrap()) / (2.0 * step);
            fd.set_column(j, &d);
        }
        let scale = sup(h.iter().copied()).max(1.0);
        prop_assert!(sup((&fd - &h).iter().copied()) <= 1e-5 * scale, "{fd} vs {h}");
        prop_assert_eq!(&h, &h.transpose());
        let eigs = estimator::ascending_eigenvalues(&h);
        prop_assert!(eigs[0] >= -1e-10 * scale);
    }

    #[test]
    fn objective_matches_brute_force(rows in rows(), th in theta()) {
        let Some((data, t)) = fixture(&rows) else { return Ok(()) };
        let a = estimator::objective(&th, &data, &t).unwrap();
        let b = brute_objective(&th, &data, t.w);
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn objective_is_convex(rows in rows(), a in theta(), b in theta(), lambda in 0.01..0.99f64) {
        let Some((data, t)) = fixture(&rows) else { return Ok(()) };
        let f = |th: &DVector<f64>| estimator::objective(th, &data, &t).unwrap();
        let mid = &a * lambda + &b * (1.0 - lambda);
        prop_assert!(f(&mid) <= lambda * f(&a) + (1.0 - lambda) * f(&b) + 1e-9);
    }
}

fn exp_linear_sample(n: usize, seed: u64) -> ObservationSet {
    models::sample_tail_index(&TailIndexDgp::exp_linear(0.5, 1.0).unwrap(), n, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn affine_reparameterization(seed in 0u64..1000, a in -2.0..2.0f64, b in prop_oneof![-5.0..-0.2f64, 0.2..5.0f64]) {
        let data = exp_linear_sample(20_000, seed);
        let x = data.covariate(0).to_vec();
        let moved = ObservationSet::from_covariates(&[x.iter().map(|v| a + b * v).collect()], data.response.clone(), None).unwrap();
        let spec = ThresholdSpec::Quantile(0.9);
        let f0 = estimator::fit(&data, spec).unwrap();
        let f1 = estimator::fit(&moved, spec).unwrap();
        let (t0, t1) = (&f0.theta_hat, &f1.theta_hat);
        prop_assert!((t1[1] - t0[1] / b).abs() <= 1e-8 * t0[1].abs().max(1.0));
        prop_assert!((t1[0] - (t0[0] - a * t0[1] / b)).abs() <= 1e-8 * t0[0].abs().max(1.0));
        for i in 0..data.n() {
            let i0 = (t0[0] + t0[1] * x[i]).exp();
            let i1 = (t1[0] + t1[1] * (a + b * x[i])).exp();
            prop_assert!((i0 - i1).abs() <= 1e-8 * i0);
        }
    }
}

#[test]
fn intercept_only_closed_form() {
    for seed in 0..5 {
        let full = exp_linear_sample(50_000, seed);
        let data = ObservationSet::new(
            DMatrix::from_element(full.n(), 1, 1.0),
            full.response.clone(),
            None,
        )
        .unwrap();
        let fit = estimator::fit(&data, ThresholdSpec::Quantile(0.95)).unwrap();
        let w = fit.threshold.w;
        let tail: Vec<f64> = data
            .response
            .iter()
            .filter(|&&y| y > w)
            .map(|y| (y / w).ln())
            .collect();
        let closed = (tail.len() as f64 / tail.iter().sum::<f64>()).ln();
        assert!(
            (fit.theta_hat[0] - closed).abs() <= 1e-8,
            "{} vs {closed}",
            fit.theta_hat[0]
        );
        let g = estimator::score(&DVector::from_element(1, closed), &data, &fit.threshold).unwrap();
        assert!(g[0].abs() <= 1e-10 * tail.len() as f64);
    }
}

#[test]
fn solver_is_deterministic() {
    let data = exp_linear_sample(100_000, 9);
    let a = estimator::fit(&data, ThresholdSpec::Quantile(0.99)).unwrap();
    let b = estimator::fit(&data, ThresholdSpec::Quantile(0.99)).unwrap();
    assert_eq!(a.theta_hat, b.theta_hat);
    assert!(a.solver_trace.converged);
    assert!(a.solver_trace.gradient_norm <= 1e-10 * a.solver_trace.objective.abs().max(1.0));
}

#[test]
fn residuals_at_truth() {
    let data = exp_linear_sample(1_000_000, 2);
    let t = TailThreshold::resolve(&data.response, ThresholdSpec::Quantile(0.99), 2).unwrap();
    let check =
        estimator::exponential_residuals(&DVector::from_vec(vec![0.5, 1.0]), &data, &t).unwrap();
    assert!(check.residuals.iter().all(|&r| r > 0.0));
    let n0 = check.residuals.len() as f64;
    assert!(
        (check.mean - 1.0).abs() <= 4.0 / n0.sqrt(),
        "{}",
        check.mean
    );
}

#[test]
fn no_retained_rows_gives_zero_score() {
    let (data, _) = fixture(&[(0.1, 0.2, 0.5); ROWS]).unwrap();
    let t = TailThreshold {
        spec: ThresholdSpec::Value(1e9),
        w: 1e9,
        n0: 0,
    };
    let g = estimator::score(&DVector::from_vec(vec![0.3, -0.2, 0.1]), &data, &t).unwrap();
    assert_eq!(g, DVector::zeros(3));
}
