//! Descriptive tables: degree rankings, sub-graph degree summaries and
//! importance-versus-centrality correlations over the first partition.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::attributes::{AttributeError, AttributeTable, AttributeValues};
use crate::graph::{Adjacency, BipartiteGraph, Side};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DescriptivesError {
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error("attribute {name:?} must be {expected}")]
    AttributeKind { name: String, expected: &'static str },
    #[error("correlations need at least 3 first-partition nodes, found {0}")]
    TooFewNodes(usize),
    #[error("{0} has zero variance; its correlations are undefined")]
    ZeroVariance(String),
    #[error("unknown centrality metric {0:?} (expected degree or eigenvector)")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    /// Ties share a rank and the next rank follows by one (1, 2, 2, 3).
    #[default]
    Dense,
    /// Ties share a rank and the next rank skips (1, 2, 2, 4).
    Competition,
}

/// Ranks of `values` in descending order.
pub fn rank_descending(values: &[f64], method: RankMethod) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0; values.len()];
    let mut dense = 0;
    for (pos, &i) in order.iter().enumerate() {
        let tied = pos > 0 && values[order[pos - 1]] == values[i];
        ranks[i] = if tied {
            ranks[order[pos - 1]]
        } else {
            dense += 1;
            match method {
                RankMethod::Dense => dense,
                RankMethod::Competition => pos + 1,
            }
        };
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub skill: String,
    pub onet_rank: Option<usize>,
    pub centrality_rank: usize,
    pub degree: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    /// Rows by descending degree; ties keep node order.
    pub rows: Vec<RankingRow>,
    pub total_degree: usize,
    pub total_percent: f64,
}

/// Degree ranking of first-partition nodes. `importance` names a total
/// quantitative attribute ranked the same way; without it the O*NET rank
/// column is empty.
pub fn ranking_table(
    graph: &BipartiteGraph,
    attrs: &AttributeTable,
    importance: Option<&str>,
    method: RankMethod,
) -> Result<RankingTable, DescriptivesError> {
    let degrees = graph.degrees(Side::First);
    let as_f64: Vec<f64> = degrees.iter().map(|&d| d as f64).collect();
    let centrality = rank_descending(&as_f64, method);
    let onet = match importance {
        Some(name) => Some(rank_descending(&quantitative(graph, attrs, name)?, method)),
        None => None,
    };
    let edges = graph.edge_count();
    let mut order: Vec<usize> = (0..degrees.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(degrees[i]));
    let rows = order
        .into_iter()
        .map(|i| RankingRow {
            skill: graph.labels(Side::First)[i].clone(),
            onet_rank: onet.as_ref().map(|r| r[i]),
            centrality_rank: centrality[i],
            degree: degrees[i],
            percent: percent(degrees[i], edges),
        })
        .collect();
    Ok(RankingTable { rows, total_degree: edges, total_percent: if edges > 0 { 100.0 } else { 0.0 } })
}

fn percent(degree: usize, edges: usize) -> f64 {
    if edges == 0 {
        0.0
    } else {
        100.0 * degree as f64 / edges as f64
    }
}

fn quantitative(graph: &BipartiteGraph, attrs: &AttributeTable, name: &str) -> Result<Vec<f64>, DescriptivesError> {
    match attrs.require_total(graph, Side::First, name)? {
        AttributeValues::Quantitative(v) => Ok(v.iter().map(|x| x.expect("total attribute")).collect()),
        AttributeValues::Categorical(_) => {
            Err(DescriptivesError::AttributeKind { name: name.to_owned(), expected: "quantitative" })
        }
    }
}

/// Bipartite eigenvector centrality of the first partition: the leading
/// eigenvector of `B Bᵀ` by power iteration, scaled to unit length with
/// non-negative entries.
pub fn eigenvector_centrality(graph: &BipartiteGraph) -> Vec<f64> {
    let (n, m) = (graph.first_size(), graph.second_size());
    let mut x = vec![1.0 / (n.max(1) as f64).sqrt(); n];
    for _ in 0..10_000 {
        let mut y = vec![0.0; m];
        for (i, k) in graph.edges() {
            y[k] += x[i];
        }
        let mut next = vec![0.0; n];
        for (i, k) in graph.edges() {
            next[i] += y[k];
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; n];
        }
        next.iter_mut().for_each(|v| *v /= norm);
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if change <= 1e-10 {
            break;
        }
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Degree,
    Eigenvector,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Degree, Metric::Eigenvector];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Degree => "degree",
            Metric::Eigenvector => "eigenvector",
        }
    }

    pub fn parse(name: &str) -> Result<Self, DescriptivesError> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == name)
            .ok_or_else(|| DescriptivesError::UnknownMetric(name.to_owned()))
    }

    pub fn scores(self, graph: &BipartiteGraph) -> Vec<f64> {
        match self {
            Metric::Degree => graph.degrees(Side::First).iter().map(|&d| d as f64).collect(),
            Metric::Eigenvector => eigenvector_centrality(graph),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub a: String,
    pub b: String,
    pub pearson: f64,
    pub pearson_p: f64,
    pub spearman: f64,
    pub spearman_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub variables: Vec<String>,
    pub n: usize,
    /// Upper triangle including the diagonal, row by row.
    pub pairs: Vec<Correlation>,
}

impl CorrelationReport {
    pub fn get(&self, a: &str, b: &str) -> Option<&Correlation> {
        self.pairs.iter().find(|c| (c.a == a && c.b == b) || (c.a == b && c.b == a))
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Ranks 1..n with ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let average = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = average;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Two-sided p-value of a correlation coefficient from the t distribution
/// with `n - 2` degrees of freedom.
pub fn correlation_p(r: f64, n: usize) -> f64 {
    let df = n as f64 - 2.0;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Pairwise correlations among named variables of equal length.
pub fn correlate(variables: &[(String, Vec<f64>)]) -> Result<CorrelationReport, DescriptivesError> {
    let n = variables.first().map_or(0, |v| v.1.len());
    if n < 3 {
        return Err(DescriptivesError::TooFewNodes(n));
    }
    for (name, values) in variables {
        if values.iter().all(|v| *v == values[0]) {
            return Err(DescriptivesError::ZeroVariance(name.clone()));
        }
    }
    let mut pairs = Vec::new();
    for (i, (a, x)) in variables.iter().enumerate() {
        for (b, y) in &variables[i..] {
            let (r, rho) = (pearson(x, y), spearman(x, y));
            pairs.push(Correlation {
                a: a.clone(),
                b: b.clone(),
                pearson: r,
                pearson_p: correlation_p(r, n),
                spearman: rho,
                spearman_p: correlation_p(rho, n),
            });
        }
    }
    Ok(CorrelationReport { variables: variables.iter().map(|v| v.0.clone()).collect(), n, pairs })
}

/// Correlations among an importance attribute (when given) and centrality
/// metrics over first-partition nodes.
pub fn correlation_report(
    graph: &BipartiteGraph,
    attrs: &AttributeTable,
    importance: Option<&str>,
    metrics: &[Metric],
) -> Result<CorrelationReport, DescriptivesError> {
    let mut variables = Vec::new();
    if let Some(name) = importance {
        variables.push((name.to_owned(), quantitative(graph, attrs, name)?));
    }
    for &m in metrics {
        variables.push((m.as_str().to_owned(), m.scores(graph)));
    }
    correlate(&variables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphRow {
    /// `None` for the entire network.
    pub attribute: Option<String>,
    pub level: Option<String>,
    pub second_count: usize,
    pub edges: usize,
    pub first_mean: Option<f64>,
    pub first_sd: Option<f64>,
    pub second_mean: Option<f64>,
    pub second_sd: Option<f64>,
    /// The level selects no second-partition node.
    pub empty: bool,
}

/// Levels of a categorical second-partition attribute to summarize; all
/// observed levels when `levels` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub attribute: String,
    pub levels: Option<Vec<String>>,
}

fn mean_sd(degrees: &[usize]) -> (Option<f64>, Option<f64>) {
    if degrees.is_empty() {
        return (None, None);
    }
    let n = degrees.len() as f64;
    let mean = degrees.iter().sum::<usize>() as f64 / n;
    let sd = (degrees.len() > 1)
        .then(|| (degrees.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

fn subgraph_row(graph: &BipartiteGraph, attribute: Option<&str>, level: Option<&str>) -> SubgraphRow {
    let (first_mean, first_sd) = mean_sd(graph.degrees(Side::First));
    let (second_mean, second_sd) = mean_sd(graph.degrees(Side::Second));
    let empty = graph.second_size() == 0;
    SubgraphRow {
        attribute: attribute.map(str::to_owned),
        level: level.map(str::to_owned),
        second_count: graph.second_size(),
        edges: graph.edge_count(),
        first_mean: if empty { None } else { first_mean },
        first_sd: if empty { None } else { first_sd },
        second_mean,
        second_sd,
        empty,
    }
}

/// Degree means and sds of both partitions within each sub-graph induced by
/// a level of a second-partition attribute, then for the entire network.
/// First-partition degrees count only edges that survive in the sub-graph.
pub fn subgraph_summary(
    graph: &BipartiteGraph,
    attrs: &AttributeTable,
    groupings: &[Grouping],
) -> Result<Vec<SubgraphRow>, DescriptivesError> {
    let mut rows = Vec::new();
    for g in groupings {
        let values = match attrs.get(Side::Second, &g.attribute) {
            Some(AttributeValues::Categorical(v)) => v,
            Some(AttributeValues::Quantitative(_)) => {
                return Err(DescriptivesError::AttributeKind { name: g.attribute.clone(), expected: "categorical" })
            }
            None => {
                return Err(match attrs.side_of(&g.attribute) {
                    Some(found) => AttributeError::WrongSide { name: g.attribute.clone(), found, expected: Side::Second },
                    None => AttributeError::Unknown { name: g.attribute.clone() },
                }
                .into())
            }
        };
        let levels = g.levels.clone().unwrap_or_else(|| attrs.get(Side::Second, &g.attribute).unwrap().levels());
        for level in &levels {
            let keep: Vec<usize> =
                (0..graph.second_size()).filter(|&k| values[k].as_deref() == Some(level.as_str())).collect();
            rows.push(subgraph_row(&graph.restrict_second(&keep), Some(&g.attribute), Some(level)));
        }
    }
    rows.push(subgraph_row(graph, None, None));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dense_and_competition_ranks() {
        let v = [75.0, 90.0, 75.0, 71.0];
        assert_eq!(rank_descending(&v, RankMethod::Dense), vec![2, 1, 2, 3]);
        assert_eq!(rank_descending(&v, RankMethod::Competition), vec![2, 1, 2, 4]);
    }

    #[test]
    fn single_skill_has_all_connections() {
        let g = BipartiteGraph::unlabeled(1, 10, (0..10).map(|k| (0, k))).unwrap();
        let t = ranking_table(&g, &AttributeTable::default(), None, RankMethod::Dense).unwrap();
        assert_eq!(t.rows[0].percent, 100.0);
        assert_eq!(t.total_degree, 10);
    }

    #[test]
    fn importance_ranks_and_errors() {
        let g = BipartiteGraph::unlabeled(3, 2, [(0, 0), (1, 0), (1, 1)]).unwrap();
        let mut attrs = AttributeTable::default();
        attrs.insert_quantitative(&g, Side::First, "imp", [("r0", 4.0), ("r1", 2.5), ("r2", 4.0)]).unwrap();
        attrs.insert_categorical(&g, Side::First, "cat", [("r0", "a")]).unwrap();
        let t = ranking_table(&g, &attrs, Some("imp"), RankMethod::Dense).unwrap();
        let by_skill = |s: &str| t.rows.iter().find(|r| r.skill == s).unwrap().clone();
        assert_eq!(by_skill("r1").centrality_rank, 1);
        assert_eq!(by_skill("r1").onet_rank, Some(2));
        assert_eq!(by_skill("r2").onet_rank, Some(1));
        assert_eq!(t.rows[0].skill, "r1");
        assert!(matches!(
            ranking_table(&g, &attrs, Some("cat"), RankMethod::Dense),
            Err(DescriptivesError::Attribute(AttributeError::Missing { .. }))
        ));
        assert!(matches!(
            ranking_table(&g, &attrs, Some("nope"), RankMethod::Dense),
            Err(DescriptivesError::Attribute(AttributeError::Unknown { .. }))
        ));
    }

    #[test]
    fn correlation_identities() {
        let x = vec![1.0, 3.0, 2.0, 7.0, 5.0];
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = correlate(&[("x".into(), x.clone()), ("y".into(), doubled)]).unwrap();
        let self_pair = r.get("x", "x").unwrap();
        assert!((self_pair.pearson - 1.0).abs() < 1e-12 && self_pair.pearson_p == 0.0);
        assert!((r.get("x", "y").unwrap().pearson - 1.0).abs() < 1e-12);
        assert_eq!(
            correlate(&[("x".into(), x), ("c".into(), vec![1.0; 5])]).unwrap_err(),
            DescriptivesError::ZeroVariance("c".into())
        );
        assert_eq!(correlate(&[("x".into(), vec![1.0, 2.0])]).unwrap_err(), DescriptivesError::TooFewNodes(2));
    }

    #[test]
    fn correlation_p_matches_reference() {
        // scipy.stats.pearsonr([1,2,3,4,5], [2,1,4,3,5]) -> r 0.8, p 0.104088
        let r = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]);
        assert!((r - 0.8).abs() < 1e-12);
        assert!((correlation_p(r, 5) - 0.104_088_1).abs() < 1e-6);
        // ties use average ranks: spearman([1,2,2,3], [1,3,2,4]) = 0.9486833
        assert!((spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]) - 0.948_683_3).abs() < 1e-6);
    }

    #[test]
    fn eigenvector_of_star_and_blocks() {
        // r0 reaches both columns, r1 and r2 one each
        let g = BipartiteGraph::unlabeled(3, 2, [(0, 0), (0, 1), (1, 0), (2, 1)]).unwrap();
        let e = eigenvector_centrality(&g);
        // B Bᵀ = [[2,1,1],[1,1,0],[1,0,1]]; leading eigenvector ∝ (2, 1, 1)
        let norm = 6f64.sqrt();
        assert!((e[0] - 2.0 / norm).abs() < 1e-9 && (e[1] - 1.0 / norm).abs() < 1e-9);
        assert_eq!(eigenvector_centrality(&BipartiteGraph::unlabeled(2, 2, []).unwrap()), vec![0.0, 0.0]);
    }

    fn regional() -> (BipartiteGraph, AttributeTable) {
        let g = BipartiteGraph::unlabeled(2, 4, [(0, 0), (0, 1), (1, 1), (0, 2), (1, 3)]).unwrap();
        let mut attrs = AttributeTable::default();
        attrs
            .insert_categorical(&g, Side::Second, "region", [("c0", "EU"), ("c1", "EU"), ("c2", "AS"), ("c3", "AS")])
            .unwrap();
        (g, attrs)
    }

    #[test]
    fn subgraph_rows() {
        let (g, attrs) = regional();
        let grouping = Grouping { attribute: "region".into(), levels: Some(vec!["EU".into(), "AS".into(), "XX".into()]) };
        let rows = subgraph_summary(&g, &attrs, &[grouping]).unwrap();
        assert_eq!(rows.len(), 4);
        let eu = &rows[0];
        assert_eq!((eu.second_count, eu.edges), (2, 3));
        assert_eq!(eu.first_mean, Some(1.5));
        assert_eq!(eu.second_mean, Some(1.5));
        assert!(rows[2].empty && rows[2].first_mean.is_none() && rows[2].second_mean.is_none());
        assert_eq!(rows[0].edges + rows[1].edges, g.edge_count());
        let all = rows.last().unwrap();
        assert!(all.attribute.is_none() && all.second_count == 4 && all.edges == 5);
    }

    #[test]
    fn table_one_entire_network_row() {
        // published skill degrees; brochure degrees irrelevant to the skill columns
        let degrees = [
            239, 214, 173, 133, 129, 113, 103, 92, 90, 83, 78, 75, 75, 71, 69, 55, 53, 51, 50, 41, 37, 31, 17, 13, 13, 6,
            4, 2,
        ];
        let (mean, sd) = mean_sd(&degrees);
        assert!((mean.unwrap() - 75.36).abs() < 0.005);
        assert!((sd.unwrap() - 60.18).abs() < 0.005);
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_maps(
            x in prop::collection::vec(-100i32..100, 3..30),
            y in prop::collection::vec(-100i32..100, 3..30),
        ) {
            let n = x.len().min(y.len());
            let x: Vec<f64> = x[..n].iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = y[..n].iter().map(|&v| v as f64).collect();
            prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
            let transformed: Vec<f64> = x.iter().map(|v| (v / 10.0).exp() + v * v * v).collect();
            prop_assert!((spearman(&x, &y) - spearman(&transformed, &y)).abs() < 1e-12);
        }

        #[test]
        fn percents_reconstruct_edge_count(
            edges in prop::collection::btree_set((0usize..6, 0usize..8), 1..40),
        ) {
            let g = BipartiteGraph::unlabeled(6, 8, edges.iter().copied()).unwrap();
            let t = ranking_table(&g, &AttributeTable::default(), None, RankMethod::Dense).unwrap();
            prop_assert_eq!(t.rows.iter().map(|r| r.degree).sum::<usize>(), g.edge_count());
            prop_assert!((t.rows.iter().map(|r| r.percent).sum::<f64>() - 100.0).abs() < 1e-9);
            let ranks: Vec<usize> = t.rows.iter().map(|r| r.centrality_rank).collect();
            prop_assert!(ranks.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        }

        #[test]
        fn region_edge_counts_recombine(
            edges in prop::collection::btree_set((0usize..4, 0usize..7), 0..28),
            regions in prop::collection::vec(0usize..3, 7),
        ) {
            let g = BipartiteGraph::unlabeled(4, 7, edges.iter().copied()).unwrap();
            let mut attrs = AttributeTable::default();
            let names = ["a", "b", "c"];
            attrs.insert_categorical(&g, Side::Second, "region",
                (0..7).map(|k| (format!("c{k}"), names[regions[k]]))).unwrap();
            let rows = subgraph_summary(&g, &attrs, &[Grouping { attribute: "region".into(), levels: None }]).unwrap();
            let (levels, total) = rows.split_at(rows.len() - 1);
            prop_assert_eq!(levels.iter().map(|r| r.edges).sum::<usize>(), total[0].edges);
            prop_assert_eq!(levels.iter().map(|r| r.second_count).sum::<usize>(), 7);
        }
    }
}
