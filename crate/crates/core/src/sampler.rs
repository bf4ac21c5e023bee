//! Metropolis–Hastings sampling of bipartite networks from
//! `P(Y = y | theta) ∝ exp(thetaᵀ s(y))` by single-dyad toggles.
//!
//! Random numbers come from `Xoshiro256PlusPlus`; chain `c` of a multi-chain
//! run is seeded with `seed ^ c`, and retained samples are concatenated in
//! chain order, so output depends only on the configuration.

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::graph::{Adjacency, BipartiteGraph};
use crate::statistics::{BoundModel, StatisticVector, StatisticsError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SamplerError {
    #[error("theta has {found} entries but the model has {expected} terms")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("theta[{index}] is not finite")]
    NonFiniteTheta { index: usize },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("graph has no dyads to toggle")]
    NoDyads,
    #[error(
        "internal consistency failure after {retained} samples: tracked statistics {tracked} \
         differ from full evaluation {evaluated}"
    )]
    Inconsistent { retained: usize, tracked: StatisticVector, evaluated: StatisticVector },
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
}

/// Proposal distribution over dyad toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    /// With probability 1/2 pick a uniformly random edge to delete, otherwise
    /// a uniformly random empty dyad to add.
    TieNoTie,
    /// Pick a uniformly random dyad and flip it.
    UniformDyad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub proposal: Proposal,
    /// Proposals discarded before the first retained sample (per chain).
    pub burn_in: u64,
    /// Proposals between consecutive retained samples.
    pub interval: u64,
    /// Total retained samples over all chains.
    pub sample_count: usize,
    pub seed: u64,
    /// Independent chains; each runs its own burn-in.
    pub chains: usize,
    /// Re-evaluate statistics from scratch every this many retained samples.
    pub check_every: usize,
}

impl SamplerConfig {
    /// Defaults scaled to an `n x m` graph: burn-in `20nm`, interval `nm`,
    /// 1000 samples, tie/no-tie proposals, one chain, seed 0.
    pub fn for_shape(first_size: usize, second_size: usize) -> Self {
        let dyads = (first_size * second_size).max(1) as u64;
        Self {
            proposal: Proposal::TieNoTie,
            burn_in: 20 * dyads,
            interval: dyads,
            sample_count: 1000,
            seed: 0,
            chains: 1,
            check_every: 100,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.interval < 1 {
            return Err(SamplerError::InvalidConfig("interval must be at least 1".into()));
        }
        if self.sample_count < 1 {
            return Err(SamplerError::InvalidConfig("sample_count must be at least 1".into()));
        }
        if self.chains < 1 {
            return Err(SamplerError::InvalidConfig("chains must be at least 1".into()));
        }
        if self.chains > self.sample_count {
            return Err(SamplerError::InvalidConfig("more chains than samples".into()));
        }
        if self.check_every < 1 {
            return Err(SamplerError::InvalidConfig("check_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mutable working copy of a graph with O(1) toggle and O(1) uniform
/// selection of an edge or of an empty dyad.
///
/// `order` is a permutation of all dyad ids whose first `edges` entries are
/// the present dyads; `position` is its inverse.
#[derive(Debug, Clone)]
pub struct WorkingGraph {
    first_size: usize,
    second_size: usize,
    cells: Vec<bool>,
    order: Vec<u32>,
    position: Vec<u32>,
    edges: usize,
}

impl WorkingGraph {
    pub fn new(graph: &BipartiteGraph) -> Self {
        let cells = graph.cells().to_vec();
        let mut order: Vec<u32> = (0..cells.len() as u32).filter(|&d| cells[d as usize]).collect();
        let edges = order.len();
        order.extend((0..cells.len() as u32).filter(|&d| !cells[d as usize]));
        let mut position = vec![0; cells.len()];
        for (p, &d) in order.iter().enumerate() {
            position[d as usize] = p as u32;
        }
        Self { first_size: graph.first_size(), second_size: graph.second_size(), cells, order, position, edges }
    }

    /// Flips dyad `d` (row-major id).
    pub fn toggle(&mut self, d: usize) {
        let p = self.position[d] as usize;
        let boundary = if self.cells[d] {
            self.edges -= 1;
            self.edges
        } else {
            self.edges += 1;
            self.edges - 1
        };
        let other = self.order[boundary] as usize;
        self.order.swap(p, boundary);
        self.position[d] = boundary as u32;
        self.position[other] = p as u32;
        self.cells[d] = !self.cells[d];
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Snapshot as an immutable graph sharing `template`'s labels.
    pub fn to_graph(&self, template: &BipartiteGraph) -> BipartiteGraph {
        template.with_cells(&self.cells)
    }

    fn edge_at(&self, p: usize) -> usize {
        self.order[p] as usize
    }
}

impl Adjacency for WorkingGraph {
    fn first_size(&self) -> usize {
        self.first_size
    }

    fn second_size(&self) -> usize {
        self.second_size
    }

    #[inline]
    fn has_edge(&self, first: usize, second: usize) -> bool {
        self.cells[first * self.second_size + second]
    }

    fn edge_count(&self) -> usize {
        self.edges
    }
}

/// Probability that a tie/no-tie proposal from a state with `edges` edges
/// picks one particular dyad of the requested class.
fn tnt_pick_probability(edges: usize, dyads: usize, delete: bool) -> f64 {
    let class = if edges == 0 || edges == dyads { 1.0 } else { 0.5 };
    let members = if delete { edges } else { dyads - edges };
    class / members as f64
}

/// One Metropolis–Hastings chain.
pub struct Chain<'a> {
    model: &'a BoundModel,
    theta: &'a [f64],
    proposal: Proposal,
    state: WorkingGraph,
    stats: Vec<f64>,
    delta: Vec<f64>,
    rng: Xoshiro256PlusPlus,
    accepted: u64,
    proposed: u64,
}

impl<'a> Chain<'a> {
    pub fn new(
        model: &'a BoundModel,
        theta: &'a [f64],
        start: &BipartiteGraph,
        proposal: Proposal,
        seed: u64,
    ) -> Result<Self, SamplerError> {
        check_theta(model, theta)?;
        let stats = model.evaluate(start)?.into_inner();
        if start.dyad_count() == 0 {
            return Err(SamplerError::NoDyads);
        }
        Ok(Self {
            model,
            theta,
            proposal,
            state: WorkingGraph::new(start),
            delta: vec![0.0; stats.len()],
            stats,
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            accepted: 0,
            proposed: 0,
        })
    }

    /// Performs one proposal; returns whether it was accepted.
    pub fn step(&mut self) -> bool {
        let dyads = self.state.cells.len();
        let edges = self.state.edges;
        let (dyad, log_correction) = match self.proposal {
            Proposal::UniformDyad => (self.rng.random_range(0..dyads), 0.0),
            Proposal::TieNoTie => {
                let delete = if edges == 0 {
                    false
                } else if edges == dyads {
                    true
                } else {
                    self.rng.random_bool(0.5)
                };
                let dyad = if delete {
                    self.state.edge_at(self.rng.random_range(0..edges))
                } else {
                    self.state.edge_at(edges + self.rng.random_range(0..dyads - edges))
                };
                let after = if delete { edges - 1 } else { edges + 1 };
                let forward = tnt_pick_probability(edges, dyads, delete);
                let reverse = tnt_pick_probability(after, dyads, !delete);
                (dyad, (reverse / forward).ln())
            }
        };
        let m = self.state.second_size;
        let (i, k) = (dyad / m, dyad % m);
        self.model.change_into(&self.state, i, k, &mut self.delta);
        let sign = if self.state.cells[dyad] { -1.0 } else { 1.0 };
        let log_ratio = sign * crate::statistics::dot(&self.delta, self.theta) + log_correction;
        self.proposed += 1;
        let accept = log_ratio >= 0.0 || self.rng.random::<f64>().ln() < log_ratio;
        if accept {
            self.state.toggle(dyad);
            for (s, d) in self.stats.iter_mut().zip(&self.delta) {
                *s += sign * d;
            }
            self.accepted += 1;
        }
        accept
    }

    pub fn advance(&mut self, proposals: u64) {
        for _ in 0..proposals {
            self.step();
        }
    }

    pub fn state(&self) -> &WorkingGraph {
        &self.state
    }

    /// Statistics of the current state, tracked through change statistics.
    pub fn statistics(&self) -> &[f64] {
        &self.stats
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Compares tracked statistics with a full evaluation.
    pub fn verify(&self, retained: usize) -> Result<(), SamplerError> {
        let evaluated = self.model.evaluate_unchecked(&self.state);
        if evaluated.0 != self.stats {
            return Err(SamplerError::Inconsistent {
                retained,
                tracked: StatisticVector(self.stats.clone()),
                evaluated,
            });
        }
        Ok(())
    }
}

fn check_theta(model: &BoundModel, theta: &[f64]) -> Result<(), SamplerError> {
    if theta.len() != model.len() {
        return Err(SamplerError::DimensionMismatch { expected: model.len(), found: theta.len() });
    }
    if let Some(index) = theta.iter().position(|t| !t.is_finite()) {
        return Err(SamplerError::NonFiniteTheta { index });
    }
    Ok(())
}

/// Runs `config.chains` chains (concurrently when more than one) and maps
/// every retained state through `extract`. Results are in chain order.
pub fn run_chains<T, F>(
    model: &BoundModel,
    theta: &[f64],
    start: &BipartiteGraph,
    config: &SamplerConfig,
    extract: F,
) -> Result<Vec<T>, SamplerError>
where
    T: Send,
    F: Fn(&WorkingGraph, &[f64]) -> T + Sync,
{
    config.validate()?;
    check_theta(model, theta)?;
    model.check_shape(start)?;
    let per_chain = |c: usize| config.sample_count / config.chains + usize::from(c < config.sample_count % config.chains);
    let run_one = |c: usize| -> Result<Vec<T>, SamplerError> {
        let mut chain = Chain::new(model, theta, start, config.proposal, config.seed ^ c as u64)?;
        chain.advance(config.burn_in);
        let wanted = per_chain(c);
        let mut out = Vec::with_capacity(wanted);
        for r in 1..=wanted {
            chain.advance(config.interval);
            if r % config.check_every == 0 || r == wanted {
                chain.verify(r)?;
            }
            out.push(extract(&chain.state, &chain.stats));
        }
        Ok(out)
    };
    if config.chains == 1 {
        return run_one(0);
    }
    let results: Vec<Result<Vec<T>, SamplerError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains).map(|c| scope.spawn(move || run_one(c))).collect();
        handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
    });
    let mut merged = Vec::with_capacity(config.sample_count);
    for r in results {
        merged.extend(r?);
    }
    Ok(merged)
}

/// A retained network with its statistics.
#[derive(Debug, Clone)]
pub struct Sample {
    pub graph: BipartiteGraph,
    pub statistics: StatisticVector,
}

/// Draws `config.sample_count` networks at `theta`, starting from `start`.
pub fn sample(
    model: &BoundModel,
    theta: &[f64],
    start: &BipartiteGraph,
    config: &SamplerConfig,
) -> Result<Vec<Sample>, SamplerError> {
    run_chains(model, theta, start, config, |state, stats| Sample {
        graph: state.to_graph(start),
        statistics: StatisticVector(stats.to_vec()),
    })
}

/// Like [`sample`] but keeps only the statistic vectors.
pub fn sample_statistics(
    model: &BoundModel,
    theta: &[f64],
    start: &BipartiteGraph,
    config: &SamplerConfig,
) -> Result<Vec<StatisticVector>, SamplerError> {
    run_chains(model, theta, start, config, |_, stats| StatisticVector(stats.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::AttributeTable;
    use crate::graph::Side;
    use crate::statistics::{ModelSpec, Term};

    fn edges_model(g: &BipartiteGraph) -> BoundModel {
        ModelSpec::from_terms([Term::Edges]).unwrap().bind(g, &AttributeTable::default()).unwrap()
    }

    #[test]
    fn working_graph_toggle_keeps_partition() {
        let g = BipartiteGraph::unlabeled(2, 3, [(0, 1), (1, 2)]).unwrap();
        let mut w = WorkingGraph::new(&g);
        for d in [0, 1, 5, 4, 1, 3, 0] {
            w.toggle(d);
            let present: Vec<usize> = (0..w.edges).map(|p| w.order[p] as usize).collect();
            assert!(present.iter().all(|&d| w.cells[d]));
            assert_eq!(present.len(), w.cells.iter().filter(|&&c| c).count());
            for (p, &d) in w.order.iter().enumerate() {
                assert_eq!(w.position[d as usize] as usize, p);
            }
        }
    }

    #[test]
    fn zero_theta_gives_fair_coins() {
        let g = BipartiteGraph::unlabeled(3, 3, []).unwrap();
        let model = edges_model(&g);
        let config = SamplerConfig {
            proposal: Proposal::UniformDyad,
            sample_count: 20_000,
            ..SamplerConfig::for_shape(3, 3)
        };
        let stats = sample_statistics(&model, &[0.0], &g, &config).unwrap();
        let mean = stats.iter().map(|s| s[0]).sum::<f64>() / stats.len() as f64;
        // sd of one draw is 1.5; allow a generous 5 standard errors
        assert!((mean - 4.5).abs() < 5.0 * 1.5 / (stats.len() as f64).sqrt() * 2.0, "{mean}");
    }

    #[test]
    fn edges_only_model_mean() {
        // dyads are i.i.d. Bernoulli(0.8); enumerating all 16 graphs gives
        // E[edges] = sum_e e * C(4,e) 0.8^e 0.2^(4-e) = 3.2
        let enumerated: f64 = (0u32..16).map(|mask| {
            let e = mask.count_ones() as i32;
            e as f64 * 0.8f64.powi(e) * 0.2f64.powi(4 - e)
        }).sum();
        assert!((enumerated - 3.2).abs() < 1e-12);
        let g = BipartiteGraph::unlabeled(2, 2, []).unwrap();
        let model = edges_model(&g);
        let theta = (0.8f64 / 0.2).ln();
        for proposal in [Proposal::UniformDyad, Proposal::TieNoTie] {
            let config = SamplerConfig { proposal, sample_count: 40_000, seed: 11, ..SamplerConfig::for_shape(2, 2) };
            let stats = sample_statistics(&model, &[theta], &g, &config).unwrap();
            let mean = stats.iter().map(|s| s[0]).sum::<f64>() / stats.len() as f64;
            assert!((mean - enumerated).abs() < 0.03, "{proposal:?}: {mean}");
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let g = BipartiteGraph::unlabeled(3, 4, [(0, 0), (2, 3)]).unwrap();
        let mut attrs = AttributeTable::default();
        attrs.insert_categorical(&g, Side::First, "a", [("r0", "x"), ("r1", "x"), ("r2", "y")]).unwrap();
        let model = ModelSpec::from_terms([Term::Edges, Term::nodematch("a")]).unwrap().bind(&g, &attrs).unwrap();
        let config = SamplerConfig { sample_count: 50, chains: 3, seed: 99, ..SamplerConfig::for_shape(3, 4) };
        let a = sample(&model, &[-0.5, 0.3], &g, &config).unwrap();
        let b = sample(&model, &[-0.5, 0.3], &g, &config).unwrap();
        assert_eq!(a.len(), 50);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.graph, y.graph);
            assert_eq!(x.statistics, y.statistics);
            assert_eq!(model.evaluate(&x.graph).unwrap(), x.statistics);
        }
    }

    #[test]
    fn rejects_bad_theta() {
        let g = BipartiteGraph::unlabeled(2, 2, []).unwrap();
        let model = edges_model(&g);
        let config = SamplerConfig::for_shape(2, 2);
        assert_eq!(
            sample_statistics(&model, &[0.0, 1.0], &g, &config).unwrap_err(),
            SamplerError::DimensionMismatch { expected: 1, found: 2 }
        );
        assert_eq!(
            sample_statistics(&model, &[f64::NAN], &g, &config).unwrap_err(),
            SamplerError::NonFiniteTheta { index: 0 }
        );
        let bad = SamplerConfig { interval: 0, ..config };
        assert!(matches!(sample_statistics(&model, &[0.0], &g, &bad), Err(SamplerError::InvalidConfig(_))));
    }

    #[test]
    fn full_and_empty_states_still_move() {
        // with every dyad present the tie/no-tie proposal must delete
        let full = BipartiteGraph::unlabeled(1, 2, [(0, 0), (0, 1)]).unwrap();
        let model = edges_model(&full);
        let mut chain = Chain::new(&model, &[0.0], &full, Proposal::TieNoTie, 1).unwrap();
        chain.advance(200);
        assert!(chain.acceptance_rate() > 0.0);
        chain.verify(0).unwrap();
    }

    #[test]
    fn pick_probabilities() {
        assert_eq!(tnt_pick_probability(0, 4, false), 0.25);
        assert_eq!(tnt_pick_probability(4, 4, true), 0.25);
        assert_eq!(tnt_pick_probability(1, 4, true), 0.5);
        assert_eq!(tnt_pick_probability(1, 4, false), 0.5 / 3.0);
    }
}
