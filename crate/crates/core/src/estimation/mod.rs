//! Parameter estimation for bipartite ERGMs.
//!
//! Three estimators share one [`FitResult`]:
//! - [`fit_mple`]: maximum pseudolikelihood, a logistic regression of tie
//!   indicators on change statistics. For dyad-independent models this is
//!   the exact MLE.
//! - [`fit_mcmle`]: Monte-Carlo MLE with Geyer–Thompson importance sampling
//!   and a bridge-sampled log-likelihood.
//! - [`fit_exact`]: MLE by enumerating all `2^(n·m)` graphs, for tiny graphs.

mod exact;
mod mcmle;
mod mple;
mod newton;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub use exact::{fit_exact, Enumeration, EXACT_DYAD_CAP};
pub use mcmle::{fit_mcmle, GeyerThompson, McmleOptions};
pub use mple::{fit_mple, DyadDesign};

use crate::linalg;
use crate::sampler::SamplerError;
use crate::statistics::{BoundModel, StatisticsError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EstimationError {
    #[error("terms are collinear: {}", terms.join(", "))]
    RankDeficient { terms: Vec<String> },
    #[error("separation: term {term} perfectly predicts tie presence or absence")]
    Separation { term: String },
    #[error("MLE does not exist: observed statistics lie on the boundary of the support ({term})")]
    NoMle { term: String },
    #[error("graph has {dyads} dyads; exact enumeration is limited to {cap}")]
    TooLarge { dyads: usize, cap: usize },
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize, trajectory: Vec<Vec<f64>> },
    #[error(
        "observed statistics stay outside the convex hull of sampled statistics at iteration {iteration} \
         (model may be near-degenerate)"
    )]
    OutsideHull { iteration: usize },
    #[error("simulated statistic {term} has zero variance")]
    DegenerateSample { term: String },
    #[error("gradient check failed: relative error {relative_error:e}")]
    GradientCheck { relative_error: f64 },
    #[error("initial theta has {found} entries, model has {expected}")]
    InitDimension { expected: usize, found: usize },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
}

impl EstimationError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            EstimationError::TooLarge { .. }
            | EstimationError::InitDimension { .. }
            | EstimationError::Statistics(_) => false,
            EstimationError::Sampler(e) => matches!(e, SamplerError::Inconsistent { .. }),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mple,
    Mcmle,
    Exact,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mple => "mple",
            Method::Mcmle => "mcmle",
            Method::Exact => "exact",
        }
    }
}

/// How the reported log-likelihood was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodKind {
    /// Closed form (dyad-independent model) or full enumeration.
    Exact,
    /// Pseudolikelihood of a dyad-dependent model; an approximation.
    Pseudo,
    /// Bridge sampling from the zero-coefficient model.
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    /// Euclidean norm of the final log-likelihood gradient (for MC-MLE, of
    /// `s_obs - mean simulated s`).
    pub gradient_norm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub terms: Vec<String>,
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub log_likelihood: f64,
    pub likelihood: LikelihoodKind,
    pub aic: f64,
    pub bic: f64,
    /// Number of dyads `n·m` used in the BIC penalty.
    pub dyads: usize,
    pub convergence: Convergence,
}

impl FitResult {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        method: Method,
        model: &BoundModel,
        theta: Vec<f64>,
        std_errors: Vec<f64>,
        log_likelihood: f64,
        likelihood: LikelihoodKind,
        convergence: Convergence,
    ) -> Self {
        let z_values: Vec<f64> = theta.iter().zip(&std_errors).map(|(t, s)| t / s).collect();
        let p_values = z_values.iter().map(|&z| two_sided_normal_p(z)).collect();
        let dyads = model.dyad_count();
        let (aic, bic) = information_criteria(log_likelihood, theta.len(), dyads);
        FitResult {
            method,
            terms: model.spec().names(),
            theta,
            std_errors,
            z_values,
            p_values,
            log_likelihood,
            likelihood,
            aic,
            bic,
            dyads,
            convergence,
        }
    }

    pub fn q(&self) -> usize {
        self.theta.len()
    }

    pub fn stars(&self) -> Vec<&'static str> {
        self.p_values.iter().map(|&p| significance_stars(p)).collect()
    }
}

/// `(aic, bic)` with `aic = -2l + 2q` and `bic = -2l + q ln(dyads)`.
pub fn information_criteria(log_likelihood: f64, q: usize, dyads: usize) -> (f64, f64) {
    let q = q as f64;
    let aic = -2.0 * log_likelihood + 2.0 * q;
    let bic = -2.0 * log_likelihood + q * (dyads as f64).ln();
    (aic, bic)
}

/// Two-sided p-value of a standard normal z statistic.
pub fn two_sided_normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Significance markers for thresholds 0.001, 0.01, 0.05 and 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        p if p < 0.1 => "•",
        _ => "",
    }
}

/// Names of the terms involved in the null direction of a singular
/// information matrix.
pub(crate) fn collinear_terms(model: &BoundModel, information: &nalgebra::DMatrix<f64>) -> Vec<String> {
    let names = model.spec().names();
    match linalg::null_direction(information) {
        Some(v) => {
            let max = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            names
                .into_iter()
                .zip(v.iter())
                .filter(|(_, c)| c.abs() > 1e-6 * max)
                .map(|(n, _)| n)
                .collect()
        }
        None => names,
    }
}

/// Standard errors from an information matrix.
pub(crate) fn std_errors_from_information(
    model: &BoundModel,
    information: &nalgebra::DMatrix<f64>,
) -> Result<Vec<f64>, EstimationError> {
    let inverse = linalg::spd_inverse(information)
        .ok_or_else(|| EstimationError::RankDeficient { terms: collinear_terms(model, information) })?;
    Ok(inverse.diagonal().iter().map(|v| v.sqrt()).collect())
}
