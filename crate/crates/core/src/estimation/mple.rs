use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::newton::{self, Evaluation, Settings, Status};
use super::{
    collinear_terms, std_errors_from_information, Convergence, EstimationError, FitResult, LikelihoodKind,
    Method,
};
use crate::graph::{Adjacency, BipartiteGraph};
use crate::linalg;
use crate::statistics::BoundModel;

/// Largest |theta_j| accepted as a finite logistic estimate; beyond this the
/// fitted tie probabilities are within 1e-6 of 0 or 1 and the optimum is
/// taken to be at infinity.
pub(crate) const SEPARATION_BOUND: f64 = 15.0;

/// Change statistics of all dyads, collapsed into distinct covariate
/// patterns with tie and dyad counts.
#[derive(Debug, Clone)]
pub struct DyadDesign {
    pub rows: Vec<Vec<f64>>,
    pub ties: Vec<f64>,
    pub totals: Vec<f64>,
}

impl DyadDesign {
    pub fn new(model: &BoundModel, graph: &BipartiteGraph) -> Self {
        let mut groups: BTreeMap<Vec<i64>, (u64, u64)> = BTreeMap::new();
        let mut delta = vec![0.0; model.len()];
        for i in 0..graph.first_size() {
            for k in 0..graph.second_size() {
                model.change_into(graph, i, k, &mut delta);
                let key: Vec<i64> = delta.iter().map(|&v| v as i64).collect();
                let entry = groups.entry(key).or_default();
                entry.0 += u64::from(graph.has_edge(i, k));
                entry.1 += 1;
            }
        }
        let mut design = DyadDesign { rows: Vec::new(), ties: Vec::new(), totals: Vec::new() };
        for (key, (ties, total)) in groups {
            design.rows.push(key.into_iter().map(|v| v as f64).collect());
            design.ties.push(ties as f64);
            design.totals.push(total as f64);
        }
        design
    }

    /// Log pseudolikelihood with gradient and negative Hessian.
    pub(crate) fn evaluate(&self, theta: &DVector<f64>) -> Evaluation {
        let q = theta.len();
        let mut value = 0.0;
        let mut gradient = DVector::zeros(q);
        let mut curvature = DMatrix::zeros(q, q);
        for ((row, &ties), &total) in self.rows.iter().zip(&self.ties).zip(&self.totals) {
            let x = DVector::from_column_slice(row);
            let eta = x.dot(theta);
            // ln(1 + e^eta), stable on both tails
            let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            let p = 1.0 / (1.0 + (-eta).exp());
            value += ties * eta - total * softplus;
            gradient.axpy(ties - total * p, &x, 1.0);
            curvature.ger(total * p * (1.0 - p), &x, &x, 1.0);
        }
        Evaluation { value, gradient, curvature }
    }

    pub fn log_pseudolikelihood(&self, theta: &[f64]) -> f64 {
        self.evaluate(&DVector::from_column_slice(theta)).value
    }

    /// `sum_d (y_d - logistic(thetaᵀ delta_d)) delta_d`.
    pub fn score(&self, theta: &[f64]) -> Vec<f64> {
        self.evaluate(&DVector::from_column_slice(theta)).gradient.iter().copied().collect()
    }

    /// Unweighted Gram matrix of the full dyad design.
    fn gram(&self) -> DMatrix<f64> {
        let q = self.rows.first().map_or(0, Vec::len);
        let mut g = DMatrix::zeros(q, q);
        for (row, &total) in self.rows.iter().zip(&self.totals) {
            let x = DVector::from_column_slice(row);
            g.ger(total, &x, &x, 1.0);
        }
        g
    }

    /// A term whose non-zero change statistics occur only on ties or only on
    /// non-ties. All catalog change statistics are non-negative, so such a
    /// term alone separates the data.
    fn separating_term(&self) -> Option<usize> {
        let q = self.rows.first().map_or(0, Vec::len);
        (0..q).find(|&j| {
            let active: Vec<usize> = (0..self.rows.len()).filter(|&g| self.rows[g][j] != 0.0).collect();
            !active.is_empty()
                && (active.iter().all(|&g| self.ties[g] == self.totals[g])
                    || active.iter().all(|&g| self.ties[g] == 0.0))
        })
    }
}

/// Maximum pseudolikelihood fit by Newton iterations to gradient norm
/// `<= 1e-8`.
pub fn fit_mple(model: &BoundModel, graph: &BipartiteGraph) -> Result<FitResult, EstimationError> {
    model.check_shape(graph)?;
    let design = DyadDesign::new(model, graph);
    let names = model.spec().names();
    let gram = design.gram();
    if linalg::is_singular(&gram) {
        return Err(EstimationError::RankDeficient { terms: collinear_terms(model, &gram) });
    }
    if let Some(j) = design.separating_term() {
        return Err(EstimationError::Separation { term: names[j].clone() });
    }
    let outcome = newton::maximize(
        DVector::zeros(model.len()),
        &Settings { tolerance: 1e-8, max_iterations: 200, bound: 2.0 * SEPARATION_BOUND },
        |theta| design.evaluate(theta),
    );
    let largest = outcome
        .theta
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (j, t)| if t.abs() > acc.1 { (j, t.abs()) } else { acc });
    if outcome.status != Status::Converged || largest.1 > SEPARATION_BOUND {
        return Err(EstimationError::Separation { term: names[largest.0].clone() });
    }
    let std_errors = std_errors_from_information(model, &outcome.curvature)?;
    let likelihood = if model.is_dyad_independent() { LikelihoodKind::Exact } else { LikelihoodKind::Pseudo };
    Ok(FitResult::assemble(
        Method::Mple,
        model,
        outcome.theta.iter().copied().collect(),
        std_errors,
        outcome.value,
        likelihood,
        Convergence {
            converged: true,
            iterations: outcome.iterations,
            gradient_norm: outcome.gradient_norm,
            trajectory: Vec::new(),
        },
    ))
}
