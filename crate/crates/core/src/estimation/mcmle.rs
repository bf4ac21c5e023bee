use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::newton::{self, Evaluation, Settings, Status};
use super::{fit_mple, Convergence, DyadDesign, EstimationError, FitResult, LikelihoodKind, Method};
use crate::graph::{Adjacency, BipartiteGraph};
use crate::linalg;
use crate::sampler::{sample_statistics, SamplerConfig};
use crate::statistics::{BoundModel, StatisticVector};

/// Observed statistics are moved `1 / HULL_MARGIN` of the way inside the
/// sampled hull before a step is accepted.
const HULL_MARGIN: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmleOptions {
    /// Sampler settings for each iteration; `sample_count` is the number of
    /// networks simulated per iteration.
    pub sampler: SamplerConfig,
    pub max_iterations: usize,
    /// Convergence when every `|s_obs - mean| / sd <= tolerance`.
    pub tolerance: f64,
    /// Smallest step fraction tried before giving up on the hull.
    pub min_step: f64,
    /// Bridges between the zero model and the estimate.
    pub bridges: usize,
    /// Simulated networks per bridge.
    pub bridge_samples: usize,
    /// Add the Monte-Carlo error of the estimate to the standard errors.
    pub inflate_std_errors: bool,
    /// Compare the Geyer–Thompson gradient against finite differences at
    /// three random points every iteration.
    pub check_gradient: bool,
    /// Starting point; the MPLE when absent.
    pub init: Option<Vec<f64>>,
}

impl McmleOptions {
    pub fn for_shape(first_size: usize, second_size: usize) -> Self {
        Self {
            sampler: SamplerConfig::for_shape(first_size, second_size),
            max_iterations: 20,
            tolerance: 0.1,
            min_step: 1.0 / 1024.0,
            bridges: 20,
            bridge_samples: 200,
            inflate_std_errors: false,
            check_gradient: false,
            init: None,
        }
    }
}

/// Seed for an independent sampling stream derived from the base seed.
pub(crate) fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed ^ (stream << 32)
}

/// Importance-sampling approximation of the log-likelihood ratio
/// `l(theta_t + delta) - l(theta_t)` from networks sampled at `theta_t`:
///
/// `L(delta) = deltaᵀ target - ln( (1/M) sum_m exp(deltaᵀ s_m) )`.
///
/// Samples are centred on their mean internally; `L` is unchanged by this.
#[derive(Debug, Clone)]
pub struct GeyerThompson {
    centered: Vec<DVector<f64>>,
    mean: DVector<f64>,
    variance: Vec<f64>,
    scale: f64,
}

impl GeyerThompson {
    pub fn new(samples: &[StatisticVector]) -> Self {
        let (mean, cov) = linalg::mean_and_covariance(samples);
        let variance: Vec<f64> = cov.diagonal().iter().copied().collect();
        let scale = variance.iter().fold(1.0f64, |a, &v| a.max(v.sqrt()));
        let centered = samples.iter().map(|s| DVector::from_column_slice(s) - &mean).collect();
        Self { centered, mean, variance, scale }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    fn log_weights(&self, delta: &DVector<f64>) -> Vec<f64> {
        self.centered.iter().map(|c| c.dot(delta)).collect()
    }

    fn normalized_weights(&self, delta: &DVector<f64>) -> (Vec<f64>, f64) {
        let a = self.log_weights(delta);
        let lse = linalg::log_sum_exp(a.iter().copied());
        (a.iter().map(|v| (v - lse).exp()).collect(), lse)
    }

    pub fn objective(&self, delta: &[f64], target: &[f64]) -> f64 {
        let d = DVector::from_column_slice(delta);
        let t = DVector::from_column_slice(target) - &self.mean;
        let (_, lse) = self.normalized_weights(&d);
        d.dot(&t) - (lse - (self.centered.len() as f64).ln())
    }

    pub fn gradient(&self, delta: &[f64], target: &[f64]) -> Vec<f64> {
        let d = DVector::from_column_slice(delta);
        let t = DVector::from_column_slice(target) - &self.mean;
        self.evaluate(&d, &t).gradient.iter().copied().collect()
    }

    fn evaluate(&self, delta: &DVector<f64>, centered_target: &DVector<f64>) -> Evaluation {
        let (weights, lse) = self.normalized_weights(delta);
        let (mean, cov) = linalg::weighted_moments(&self.centered_slices(), &weights);
        Evaluation {
            value: delta.dot(centered_target) - (lse - (self.centered.len() as f64).ln()),
            gradient: centered_target - mean,
            curvature: cov,
        }
    }

    fn centered_slices(&self) -> Vec<&[f64]> {
        self.centered.iter().map(|c| c.as_slice()).collect()
    }

    /// Maximizer of `L` for a target, or `None` when the target is not
    /// strictly inside the convex hull of the samples (no finite maximum).
    pub fn maximize(&self, target: &[f64]) -> Option<Vec<f64>> {
        let t = DVector::from_column_slice(target) - &self.mean;
        self.maximize_centered(&t).map(|d| d.iter().copied().collect())
    }

    fn maximize_centered(&self, centered_target: &DVector<f64>) -> Option<DVector<f64>> {
        let q = centered_target.len();
        let outcome = newton::maximize(
            DVector::zeros(q),
            &Settings { tolerance: 1e-9 * self.scale, max_iterations: 100, bound: 1e4 },
            |d| self.evaluate(d, centered_target),
        );
        if outcome.status != Status::Converged {
            return None;
        }
        // A target on the hull boundary "converges" only because the weights
        // collapse onto a face; reject when the reweighted variance of some
        // standardized direction has all but vanished.
        let scaled = DMatrix::from_fn(q, q, |a, b| {
            outcome.curvature[(a, b)] / (self.variance[a] * self.variance[b]).sqrt()
        });
        let smallest = scaled.symmetric_eigenvalues().min();
        (smallest > 1e-6).then_some(outcome.theta)
    }

    /// Largest relative deviation between the analytic gradient and central
    /// finite differences at `delta`.
    pub fn gradient_check(&self, delta: &[f64], target: &[f64]) -> f64 {
        let analytic = self.gradient(delta, target);
        let mut worst = 0.0f64;
        let norm = analytic.iter().fold(0.0f64, |a, &g| a.max(g.abs())).max(1e-8 * self.scale);
        for j in 0..delta.len() {
            let h = 1e-6 * delta[j].abs().max(1.0 / self.scale);
            let mut up = delta.to_vec();
            let mut down = delta.to_vec();
            up[j] += h;
            down[j] -= h;
            let fd = (self.objective(&up, target) - self.objective(&down, target)) / (2.0 * h);
            worst = worst.max((fd - analytic[j]).abs() / norm);
        }
        worst
    }
}

/// Monte-Carlo MLE by iterated Geyer–Thompson maximization.
pub fn fit_mcmle(
    model: &BoundModel,
    graph: &BipartiteGraph,
    options: &McmleOptions,
) -> Result<FitResult, EstimationError> {
    let observed = model.evaluate(graph)?;
    let names = model.spec().names();
    let mut theta = match &options.init {
        Some(init) if init.len() != model.len() => {
            return Err(EstimationError::InitDimension { expected: model.len(), found: init.len() })
        }
        Some(init) => init.clone(),
        None => fit_mple(model, graph)?.theta,
    };
    let obs = DVector::from_column_slice(&observed);
    let mut trajectory = vec![theta.clone()];
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(stream_seed(options.sampler.seed, 0xffff));

    for iteration in 1..=options.max_iterations {
        let config = SamplerConfig {
            seed: stream_seed(options.sampler.seed, iteration as u64),
            ..options.sampler.clone()
        };
        let samples = sample_statistics(model, &theta, graph, &config)?;
        let gt = GeyerThompson::new(&samples);
        let (mean, cov) = linalg::mean_and_covariance(&samples);
        let sd: Vec<f64> = cov.diagonal().iter().map(|v| v.sqrt()).collect();
        if let Some(j) = sd.iter().position(|&s| s == 0.0) {
            return Err(EstimationError::DegenerateSample { term: names[j].clone() });
        }
        let deviation = &obs - &mean;
        let converged = deviation.iter().zip(&sd).all(|(d, s)| d.abs() / s <= options.tolerance);

        if options.check_gradient {
            for _ in 0..3 {
                let point: Vec<f64> = sd.iter().map(|s| rng.random_range(-0.5..0.5) / s).collect();
                let err = gt.gradient_check(&point, &observed);
                if err > 1e-4 {
                    return Err(EstimationError::GradientCheck { relative_error: err });
                }
            }
        }

        let mut gamma = 1.0;
        let delta = loop {
            let centered_target = &deviation * gamma;
            if gt.maximize_centered(&(&centered_target * HULL_MARGIN)).is_some() {
                if let Some(delta) = gt.maximize_centered(&centered_target) {
                    break delta;
                }
            }
            gamma *= 0.5;
            if gamma < options.min_step {
                return Err(EstimationError::OutsideHull { iteration });
            }
        };
        for (t, d) in theta.iter_mut().zip(delta.iter()) {
            *t += d;
        }
        trajectory.push(theta.clone());

        if converged && gamma == 1.0 {
            let information = cov;
            let inverse = linalg::spd_inverse(&information).ok_or_else(|| EstimationError::RankDeficient {
                terms: super::collinear_terms(model, &information),
            })?;
            let mut variance = inverse.clone();
            if options.inflate_std_errors {
                variance += &inverse * batch_mean_covariance(&samples) * &inverse;
            }
            let std_errors = variance.diagonal().iter().map(|v| v.sqrt()).collect();
            let (log_likelihood, likelihood) = if model.is_dyad_independent() {
                (DyadDesign::new(model, graph).log_pseudolikelihood(&theta), LikelihoodKind::Exact)
            } else {
                (bridge_log_likelihood(model, graph, &theta, &observed, options)?, LikelihoodKind::Bridge)
            };
            return Ok(FitResult::assemble(
                Method::Mcmle,
                model,
                theta,
                std_errors,
                log_likelihood,
                likelihood,
                Convergence { converged: true, iterations: iteration, gradient_norm: deviation.norm(), trajectory },
            ));
        }
    }
    Err(EstimationError::NonConvergence { iterations: options.max_iterations, trajectory })
}

/// Covariance of the sample mean estimated from 20 batch means.
fn batch_mean_covariance(samples: &[StatisticVector]) -> DMatrix<f64> {
    let batches = 20.min(samples.len());
    let size = samples.len() / batches;
    let means: Vec<Vec<f64>> = (0..batches)
        .map(|b| {
            let chunk = &samples[b * size..(b + 1) * size];
            let (mean, _) = linalg::mean_and_covariance(chunk);
            mean.iter().copied().collect()
        })
        .collect();
    let (_, cov) = linalg::mean_and_covariance(&means);
    cov / batches as f64
}

/// `l(theta) = thetaᵀ s_obs - ln kappa(theta)`, with `ln kappa(theta)`
/// bridged from `ln kappa(0) = n·m·ln 2` along `t·theta`, `t in [0, 1]`.
/// Each bridge samples at its midpoint and estimates
/// `ln kappa(hi) - ln kappa(lo) = ln E_mid[e^{(hi-mid)ᵀs}] - ln E_mid[e^{(lo-mid)ᵀs}]`.
pub(crate) fn bridge_log_likelihood(
    model: &BoundModel,
    graph: &BipartiteGraph,
    theta: &[f64],
    observed: &[f64],
    options: &McmleOptions,
) -> Result<f64, EstimationError> {
    let bridges = options.bridges.max(1);
    let half_step: Vec<f64> = theta.iter().map(|t| t / (2.0 * bridges as f64)).collect();
    let mut log_ratio = 0.0;
    for b in 0..bridges {
        let t_mid = (b as f64 + 0.5) / bridges as f64;
        let mid: Vec<f64> = theta.iter().map(|t| t * t_mid).collect();
        let config = SamplerConfig {
            seed: stream_seed(options.sampler.seed, 0x1_0000 + b as u64),
            sample_count: options.bridge_samples.max(options.sampler.chains),
            ..options.sampler.clone()
        };
        let samples = sample_statistics(model, &mid, graph, &config)?;
        let up = linalg::log_sum_exp(samples.iter().map(|s| s.dot(&half_step)));
        let down = linalg::log_sum_exp(samples.iter().map(|s| -s.dot(&half_step)));
        log_ratio += up - down;
    }
    let log_kappa = graph.dyad_count() as f64 * std::f64::consts::LN_2 + log_ratio;
    Ok(crate::statistics::dot(observed, theta) - log_kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::AttributeTable;
    use crate::estimation::{fit_exact, Enumeration};
    use crate::graph::Side;
    use crate::statistics::{ModelSpec, Term};

    fn nodematch_case() -> (BipartiteGraph, BoundModel) {
        let g = BipartiteGraph::unlabeled(3, 4, [(0, 0), (1, 0), (1, 1), (2, 2), (0, 3), (2, 3)]).unwrap();
        let mut attrs = AttributeTable::default();
        attrs.insert_categorical(&g, Side::First, "a", [("r0", "A"), ("r1", "A"), ("r2", "B")]).unwrap();
        let model = ModelSpec::from_terms([Term::Edges, Term::nodematch("a")]).unwrap().bind(&g, &attrs).unwrap();
        (g, model)
    }

    #[test]
    fn geyer_thompson_gradient_matches_finite_differences() {
        let samples: Vec<StatisticVector> = (0..50)
            .map(|i| StatisticVector(vec![(i % 7) as f64 + 1.0, ((i * 3) % 5) as f64, (i % 2) as f64 * 4.0]))
            .collect();
        let gt = GeyerThompson::new(&samples);
        let target = [3.5, 2.2, 1.9];
        for delta in [[0.0, 0.0, 0.0], [0.1, -0.2, 0.05], [-0.3, 0.2, 0.1]] {
            assert!(gt.gradient_check(&delta, &target) < 1e-4);
        }
    }

    #[test]
    fn hull_detection() {
        let samples: Vec<StatisticVector> =
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]].iter().map(|s| StatisticVector(s.to_vec())).collect();
        let gt = GeyerThompson::new(&samples);
        assert!(gt.maximize(&[0.5, 0.5]).is_some());
        assert!(gt.maximize(&[0.2, 0.7]).is_some());
        assert!(gt.maximize(&[1.5, 0.5]).is_none());
        assert!(gt.maximize(&[1.0, 0.5]).is_none());
    }

    #[test]
    fn matches_exact_mle_on_small_graph() {
        let (g, model) = nodematch_case();
        let exact = fit_exact(&model, &g).unwrap();
        let mut options = McmleOptions::for_shape(3, 4);
        options.sampler.sample_count = 20_000;
        options.sampler.chains = 4;
        options.sampler.seed = 5;
        options.check_gradient = true;
        options.bridge_samples = 4000;
        let fit = fit_mcmle(&model, &g, &options).unwrap();
        for (a, b) in fit.theta.iter().zip(&exact.theta) {
            assert!((a - b).abs() < 0.05, "{:?} vs {:?}", fit.theta, exact.theta);
        }
        assert_eq!(fit.likelihood, LikelihoodKind::Bridge);
        assert!((fit.log_likelihood - exact.log_likelihood).abs() < 0.05, "{} vs {}", fit.log_likelihood, exact.log_likelihood);
    }

    #[test]
    fn bridge_recovers_exact_log_likelihood() {
        let (g, model) = nodematch_case();
        let theta = [-0.4, 0.6];
        let observed = model.evaluate(&g).unwrap();
        let exact = Enumeration::new(&model, &g).unwrap().log_likelihood(&theta, &observed);
        let mut options = McmleOptions::for_shape(3, 4);
        options.bridge_samples = 5000;
        let bridged = bridge_log_likelihood(&model, &g, &theta, &observed, &options).unwrap();
        assert!((bridged - exact).abs() < 0.03, "{bridged} vs {exact}");
    }

    #[test]
    fn empty_graph_separation_propagates() {
        let g = BipartiteGraph::unlabeled(3, 3, []).unwrap();
        let model = ModelSpec::from_terms([Term::Edges]).unwrap().bind(&g, &AttributeTable::default()).unwrap();
        let err = fit_mcmle(&model, &g, &McmleOptions::for_shape(3, 3)).unwrap_err();
        assert_eq!(err, EstimationError::Separation { term: "edges".into() });
    }

    #[test]
    fn init_dimension_checked() {
        let (g, model) = nodematch_case();
        let options = McmleOptions { init: Some(vec![0.0]), ..McmleOptions::for_shape(3, 4) };
        assert!(matches!(fit_mcmle(&model, &g, &options), Err(EstimationError::InitDimension { .. })));
    }
}
