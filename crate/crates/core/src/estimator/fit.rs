use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::likelihood::TailSample;
use super::threshold::{TailThreshold, ThresholdSpec};
use crate::error::{Error, Result};
use crate::models::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative gradient tolerance: stop when `|g| <= tol * max(1, |objective|)`.
    pub tolerance: f64,
    /// Gram eigenvalue floor, as a fraction of `trace / p`.
    pub eigen_floor: f64,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            tolerance: 1e-10,
            eigen_floor: 1e-12,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
    pub converged: bool,
    /// Total step halvings across all iterations.
    pub step_halvings: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailIndexFit {
    pub theta_hat: DVector<f64>,
    /// `(1/n0) sum x_i x_i'` over the retained rows.
    pub gram: DMatrix<f64>,
    /// Eigenvalues of `gram`, ascending.
    pub gram_eigs: Vec<f64>,
    /// `(n0 * gram)^{-1}`; `None` when the Gram matrix sits below the floor.
    pub covariance: Option<DMatrix<f64>>,
    pub threshold: TailThreshold,
    pub solver_trace: SolverTrace,
}

impl TailIndexFit {
    pub fn n0(&self) -> usize {
        self.threshold.n0
    }

    pub fn p(&self) -> usize {
        self.theta_hat.len()
    }
}

pub fn ascending_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut eigs: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

pub fn fit(data: &ObservationSet, spec: ThresholdSpec) -> Result<TailIndexFit> {
    fit_with(data, spec, &FitOptions::default())
}

pub fn fit_with(
    data: &ObservationSet,
    spec: ThresholdSpec,
    options: &FitOptions,
) -> Result<TailIndexFit> {
    let threshold = TailThreshold::resolve(&data.response, spec, data.p())?;
    let sample = TailSample::new(data, &threshold);
    if sample.len() != threshold.n0 {
        return Err(Error::Internal(format!(
            "retained {} rows but threshold counted {}",
            sample.len(),
            threshold.n0
        )));
    }

    let p = sample.p();
    let gram = sample.gram();
    let gram_eigs = ascending_eigenvalues(&gram);
    let floor = options.eigen_floor * gram.trace() / p as f64;
    if gram_eigs[0] <= floor {
        return Err(Error::RankDeficient {
            eigenvalues: gram_eigs,
            floor,
        });
    }

    let mut theta = DVector::zeros(p);
    theta[0] = sample.hill_intercept();
    let (theta_hat, solver_trace) = newton(&sample, theta, options)?;

    let covariance = (gram.clone() * threshold.n0 as f64).try_inverse();
    Ok(TailIndexFit {
        theta_hat,
        gram,
        gram_eigs,
        covariance,
        threshold,
        solver_trace,
    })
}

fn newton(
    sample: &TailSample,
    mut theta: DVector<f64>,
    options: &FitOptions,
) -> Result<(DVector<f64>, SolverTrace)> {
    let mut obj = sample.objective(&theta)?;
    let mut trace = SolverTrace {
        iterations: 0,
        gradient_norm: f64::INFINITY,
        objective: obj,
        converged: false,
        step_halvings: 0,
    };
    loop {
        let g = sample.score(&theta)?;
        trace.gradient_norm = g.norm();
        trace.objective = obj;
        if trace.gradient_norm <= options.tolerance * obj.abs().max(1.0) {
            trace.converged = true;
            return Ok((theta, trace));
        }
        if trace.iterations == options.max_iterations {
            return Err(Error::NonConvergence(Box::new(trace)));
        }
        trace.iterations += 1;

        let h = sample.hessian(&theta)?;
        let Some(chol) = h.clone().cholesky() else {
            return Err(Error::RankDeficient {
                eigenvalues: ascending_eigenvalues(&h),
                floor: 0.0,
            });
        };
        let step = chol.solve(&g);

        // Step halving until the objective does not increase beyond rounding.
        let slack = 4.0 * f64::EPSILON * obj.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let candidate = &theta - &step * t;
            match sample.objective(&candidate) {
                Ok(v) if v <= obj + slack => {
                    accepted = Some((candidate, v));
                    break;
                }
                Ok(_) | Err(Error::Overflow { .. }) => {
                    t *= 0.5;
                    trace.step_halvings += 1;
                }
                Err(e) => return Err(e),
            }
        }
        match accepted {
            Some((candidate, v)) => {
                theta = candidate;
                obj = v;
            }
            None => {
                trace.objective = obj;
                return Err(Error::NonConvergence(Box::new(trace)));
            }
        }
    }
}
