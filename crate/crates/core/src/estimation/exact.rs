use std::collections::HashMap;

use nalgebra::DVector;

use super::newton::{self, Evaluation, Settings, Status};
use super::{collinear_terms, std_errors_from_information, Convergence, EstimationError, FitResult, LikelihoodKind, Method};
use crate::graph::{Adjacency, BipartiteGraph};
use crate::linalg;
use crate::sampler::WorkingGraph;
use crate::statistics::BoundModel;

/// Hard cap on `n·m` for enumeration.
pub const EXACT_DYAD_CAP: usize = 22;

/// Distribution of the statistic vector over all graphs on a node set:
/// each distinct vector with the log of the number of graphs attaining it.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub support: Vec<Vec<f64>>,
    pub log_counts: Vec<f64>,
}

impl Enumeration {
    /// Visits all `2^(n·m)` graphs in Gray-code order, updating statistics
    /// with one change statistic per step.
    pub fn new(model: &BoundModel, template: &BipartiteGraph) -> Result<Self, EstimationError> {
        model.check_shape(template)?;
        let dyads = template.dyad_count();
        if dyads > EXACT_DYAD_CAP {
            return Err(EstimationError::TooLarge { dyads, cap: EXACT_DYAD_CAP });
        }
        let empty = template.with_cells(&vec![false; dyads]);
        let mut state = WorkingGraph::new(&empty);
        let m = template.second_size();
        let mut stats: Vec<i64> = model.evaluate_unchecked(&empty).iter().map(|&v| v as i64).collect();
        let mut delta = vec![0.0; model.len()];
        let mut counts: HashMap<Vec<i64>, u64> = HashMap::new();
        counts.insert(stats.clone(), 1);
        for step in 1u64..(1u64 << dyads) {
            let d = step.trailing_zeros() as usize;
            model.change_into(&state, d / m, d % m, &mut delta);
            let sign = if state.cells()[d] { -1 } else { 1 };
            for (s, v) in stats.iter_mut().zip(&delta) {
                *s += sign * (*v as i64);
            }
            state.toggle(d);
            match counts.get_mut(stats.as_slice()) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(stats.clone(), 1);
                }
            }
        }
        let mut entries: Vec<(Vec<i64>, u64)> = counts.into_iter().collect();
        entries.sort();
        Ok(Self {
            support: entries.iter().map(|(s, _)| s.iter().map(|&v| v as f64).collect()).collect(),
            log_counts: entries.iter().map(|&(_, c)| (c as f64).ln()).collect(),
        })
    }

    /// `ln kappa(theta)`.
    pub fn log_normalizer(&self, theta: &[f64]) -> f64 {
        linalg::log_sum_exp(self.support.iter().zip(&self.log_counts).map(|(s, lc)| lc + dot(s, theta)))
    }

    /// Probabilities of each support point under `theta`.
    pub fn weights(&self, theta: &[f64]) -> Vec<f64> {
        let log_kappa = self.log_normalizer(theta);
        self.support
            .iter()
            .zip(&self.log_counts)
            .map(|(s, lc)| (lc + dot(s, theta) - log_kappa).exp())
            .collect()
    }

    /// Mean and covariance of `s(Y)` under `theta`.
    pub fn moments(&self, theta: &[f64]) -> (DVector<f64>, nalgebra::DMatrix<f64>) {
        linalg::weighted_moments(&self.support, &self.weights(theta))
    }

    pub fn log_likelihood(&self, theta: &[f64], observed: &[f64]) -> f64 {
        dot(observed, theta) - self.log_normalizer(theta)
    }

    fn evaluate(&self, theta: &DVector<f64>, observed: &DVector<f64>) -> Evaluation {
        let t = theta.as_slice();
        let (mean, cov) = self.moments(t);
        Evaluation {
            value: self.log_likelihood(t, observed.as_slice()),
            gradient: observed - mean,
            curvature: cov,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact MLE by Newton's method on the enumerated likelihood.
pub fn fit_exact(model: &BoundModel, graph: &BipartiteGraph) -> Result<FitResult, EstimationError> {
    let enumeration = Enumeration::new(model, graph)?;
    let observed = DVector::from_vec(model.evaluate(graph)?.into_inner());
    let names = model.spec().names();
    let q = model.len();

    let (_, cov0) = enumeration.moments(&vec![0.0; q]);
    if linalg::is_singular(&cov0) {
        return Err(EstimationError::RankDeficient { terms: collinear_terms(model, &cov0) });
    }
    for j in 0..q {
        let (lo, hi) = enumeration
            .support
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s[j]), hi.max(s[j])));
        if observed[j] <= lo || observed[j] >= hi {
            return Err(EstimationError::NoMle { term: names[j].clone() });
        }
    }

    let outcome = newton::maximize(
        DVector::zeros(q),
        &Settings { tolerance: 1e-10, max_iterations: 200, bound: 50.0 },
        |theta| enumeration.evaluate(theta, &observed),
    );
    if outcome.status != Status::Converged || outcome.theta.iter().any(|t| t.abs() > 25.0) {
        let j = outcome.theta.iamax();
        return Err(EstimationError::NoMle { term: names[j].clone() });
    }
    let std_errors = std_errors_from_information(model, &outcome.curvature)?;
    Ok(FitResult::assemble(
        Method::Exact,
        model,
        outcome.theta.iter().copied().collect(),
        std_errors,
        outcome.value,
        LikelihoodKind::Exact,
        Convergence {
            converged: true,
            iterations: outcome.iterations,
            gradient_norm: outcome.gradient_norm,
            trajectory: Vec::new(),
        },
    ))
}
