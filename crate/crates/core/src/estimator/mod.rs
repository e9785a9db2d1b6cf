//! Linear tail-index regression `alpha(x) = exp(x' theta)` fitted on the
//! observations above a threshold `w`.

pub mod fit;
pub mod inference;
pub mod likelihood;
pub mod threshold;

pub use fit::{ascending_eigenvalues, fit, fit_with, FitOptions, SolverTrace, TailIndexFit};
pub use inference::{
    confidence_intervals, exponential_residuals, standard_errors, standardized_deviation,
    ConfidenceInterval, ResidualCheck,
};
pub use likelihood::{hessian, objective, score, TailSample, MAX_INDEX};
pub use threshold::{resolve_threshold, TailThreshold, ThresholdSpec};
