//! Simulation-based goodness of fit: observed statistics against their
//! distribution over networks simulated at the fitted coefficients.

use serde::{Deserialize, Serialize};

use crate::attributes::AttributeTable;
use crate::estimation::FitResult;
use crate::graph::{Adjacency, BipartiteGraph, Side};
use crate::linalg;
use crate::sampler::{run_chains, SamplerConfig, SamplerError, WorkingGraph};
use crate::statistics::{ModelSpec, StatisticVector, StatisticsError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GofError {
    #[error("fit did not converge; goodness of fit needs a converged fit")]
    NotConverged,
    #[error("fit terms {fit:?} do not match model terms {model:?}")]
    TermMismatch { fit: Vec<String>, model: Vec<String> },
    #[error("goodness of fit needs at least 2 simulated networks, got {0}")]
    TooFewSamples(usize),
    #[error("simulated covariance is singular (statistics involved: {})", statistics.join(", "))]
    SingularCovariance { statistics: Vec<String> },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub name: String,
    pub observed: f64,
    pub sim_min: f64,
    pub sim_mean: f64,
    pub sim_max: f64,
    pub p: f64,
}

/// Observed count of nodes with each degree against simulated counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub degree: usize,
    pub observed: usize,
    pub sim_min: usize,
    pub sim_mean: f64,
    pub sim_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeGof {
    pub first: Vec<DegreeRow>,
    pub second: Vec<DegreeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub rows: Vec<GofRow>,
    pub mahalanobis: f64,
    pub mahalanobis_squared: f64,
    pub sample_count: usize,
    pub seed: u64,
    /// Statistics responsible for a singular simulated covariance; when
    /// non-empty the distance uses a pseudo-inverse.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub singular_statistics: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degrees: Option<DegreeGof>,
}

impl GofReport {
    /// Summarizes simulated statistic vectors against the observed vector.
    /// A singular covariance falls back to the pseudo-inverse and is
    /// recorded in `singular_statistics` and `warnings`.
    pub fn from_samples(
        names: &[String],
        observed: &[f64],
        samples: &[StatisticVector],
        seed: u64,
    ) -> Result<Self, GofError> {
        let count = samples.len();
        if count < 2 {
            return Err(GofError::TooFewSamples(count));
        }
        let (mean, cov) = linalg::mean_and_covariance(samples);
        let rows = names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let column = samples.iter().map(|s| s[j]);
                let obs = observed[j];
                let below = column.clone().filter(|&v| v <= obs).count();
                let above = column.clone().filter(|&v| v >= obs).count();
                GofRow {
                    name: name.clone(),
                    observed: obs,
                    sim_min: column.clone().fold(f64::INFINITY, f64::min),
                    sim_mean: mean[j],
                    sim_max: column.fold(f64::NEG_INFINITY, f64::max),
                    p: (2.0 * below.min(above) as f64 / count as f64).min(1.0),
                }
            })
            .collect();

        let singular_statistics = singular_statistics(names, &cov);
        let mut warnings = Vec::new();
        let inverse = if singular_statistics.is_empty() {
            linalg::spd_inverse(&cov).expect("non-singular covariance")
        } else {
            warnings.push(format!(
                "simulated covariance is singular ({}); Mahalanobis distance uses a pseudo-inverse",
                singular_statistics.join(", ")
            ));
            linalg::symmetric_pseudo_inverse(&cov)
        };
        let d = nalgebra::DVector::from_column_slice(observed) - mean;
        let squared = (d.transpose() * inverse * &d)[(0, 0)].max(0.0);
        Ok(GofReport {
            rows,
            mahalanobis: squared.sqrt(),
            mahalanobis_squared: squared,
            sample_count: count,
            seed,
            singular_statistics,
            warnings,
            degrees: None,
        })
    }

    pub fn is_singular(&self) -> bool {
        !self.singular_statistics.is_empty()
    }

    /// Errors instead of accepting a pseudo-inverse fallback.
    pub fn require_nonsingular(self) -> Result<Self, GofError> {
        if self.is_singular() {
            Err(GofError::SingularCovariance { statistics: self.singular_statistics })
        } else {
            Ok(self)
        }
    }
}

/// Zero-variance statistics, or else those spanning the null direction of
/// the covariance.
fn singular_statistics(names: &[String], cov: &nalgebra::DMatrix<f64>) -> Vec<String> {
    let constant: Vec<String> =
        names.iter().enumerate().filter(|&(j, _)| cov[(j, j)] <= 0.0).map(|(_, n)| n.clone()).collect();
    if !constant.is_empty() {
        return constant;
    }
    match linalg::null_direction(cov) {
        Some(v) => {
            let max = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            names.iter().zip(v.iter()).filter(|(_, c)| c.abs() > 1e-6 * max).map(|(n, _)| n.clone()).collect()
        }
        None => Vec::new(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GofOptions {
    /// Also compare degree distributions of both partitions.
    pub degree_distribution: bool,
}

/// Simulates `config.sample_count` networks at `fit.theta` starting from
/// the observed graph and compares the model statistics.
pub fn gof(
    spec: &ModelSpec,
    graph: &BipartiteGraph,
    attrs: &AttributeTable,
    fit: &FitResult,
    config: &SamplerConfig,
) -> Result<GofReport, GofError> {
    gof_with(spec, graph, attrs, fit, config, &GofOptions::default())
}

pub fn gof_with(
    spec: &ModelSpec,
    graph: &BipartiteGraph,
    attrs: &AttributeTable,
    fit: &FitResult,
    config: &SamplerConfig,
    options: &GofOptions,
) -> Result<GofReport, GofError> {
    if !fit.convergence.converged {
        return Err(GofError::NotConverged);
    }
    let names = spec.names();
    if fit.terms != names {
        return Err(GofError::TermMismatch { fit: fit.terms.clone(), model: names });
    }
    if config.sample_count < 2 {
        return Err(GofError::TooFewSamples(config.sample_count));
    }
    let model = spec.bind(graph, attrs)?;
    let observed = model.evaluate(graph)?;
    let simulated = run_chains(&model, &fit.theta, graph, config, |state, stats| {
        let histograms = options.degree_distribution.then(|| degree_histograms(state));
        (StatisticVector(stats.to_vec()), histograms)
    })?;
    let (samples, histograms): (Vec<StatisticVector>, Vec<_>) = simulated.into_iter().unzip();
    let mut report = GofReport::from_samples(&names, &observed, &samples, config.seed)?;
    if options.degree_distribution {
        let histograms: Vec<[Vec<usize>; 2]> = histograms.into_iter().flatten().collect();
        report.degrees = Some(DegreeGof {
            first: degree_rows(graph, Side::First, &histograms, 0),
            second: degree_rows(graph, Side::Second, &histograms, 1),
        });
    }
    Ok(report)
}

fn degree_histograms(state: &WorkingGraph) -> [Vec<usize>; 2] {
    let (n, m) = (state.first_size(), state.second_size());
    let first: Vec<usize> = (0..n).map(|i| (0..m).filter(|&k| state.has_edge(i, k)).count()).collect();
    let second: Vec<usize> = (0..m).map(|k| (0..n).filter(|&i| state.has_edge(i, k)).count()).collect();
    [histogram(&first, m), histogram(&second, n)]
}

fn histogram(degrees: &[usize], max_degree: usize) -> Vec<usize> {
    let mut h = vec![0; max_degree + 1];
    for &d in degrees {
        h[d] += 1;
    }
    h
}

fn degree_rows(graph: &BipartiteGraph, side: Side, simulated: &[[Vec<usize>; 2]], which: usize) -> Vec<DegreeRow> {
    let max_degree = graph.size(side.other());
    let observed = histogram(graph.degrees(side), max_degree);
    (0..=max_degree)
        .map(|d| {
            let column = simulated.iter().map(|h| h[which][d]);
            DegreeRow {
                degree: d,
                observed: observed[d],
                sim_min: column.clone().min().unwrap_or(0),
                sim_mean: column.clone().sum::<usize>() as f64 / simulated.len() as f64,
                sim_max: column.max().unwrap_or(0),
            }
        })
        .filter(|r| r.observed > 0 || r.sim_max > 0)
        .collect()
}
