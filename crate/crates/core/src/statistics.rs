//! ERGM term catalog: sufficient statistics `s(y)` and change statistics.
//!
//! Every term in the catalog is a count, so evaluated statistic vectors hold
//! non-negative integers (stored as `f64`, exact below 2^53).

use std::fmt;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeError, AttributeTable, AttributeValues};
use crate::graph::{Adjacency, BipartiteGraph, GraphError, Side};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatisticsError {
    #[error("model has no terms")]
    EmptyModel,
    #[error("term {0} appears more than once")]
    DuplicateTerm(String),
    #[error("term {term}: {source}")]
    Attribute { term: String, source: AttributeError },
    #[error("term {term}: {source}")]
    Graph { term: String, source: GraphError },
    #[error("term {term}: attribute {attribute:?} must be {expected}")]
    AttributeKind { term: String, attribute: String, expected: &'static str },
    #[error("term {term}: level {level:?} is not taken by any node")]
    UnknownLevel { term: String, level: String },
    #[error("term {term}: invalid matching tolerance {tolerance}")]
    Tolerance { term: String, tolerance: f64 },
    #[error("graph is {found_first}x{found_second} but the model was bound to {first}x{second}")]
    ShapeMismatch { first: usize, second: usize, found_first: usize, found_second: usize },
    #[error("dyad ({first}, {second}) is outside a {first_size}x{second_size} graph")]
    InvalidDyad { first: usize, second: usize, first_size: usize, second_size: usize },
}

/// One model term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    /// Total number of edges (reported as "Density" in published tables).
    Edges,
    /// Degree of one named node.
    NodeActivity { partition: Side, node: String },
    /// Pairs of first-partition nodes with matching attribute values that
    /// share a second-partition neighbour. Quantitative attributes match when
    /// `|a - b| <= tolerance`; the default tolerance 0 is exact equality.
    NodeMatch { attribute: String, tolerance: f64 },
    /// Sum of degrees of first-partition nodes at one categorical level.
    Factor1 { attribute: String, level: String },
    /// Sum of degrees of second-partition nodes at one categorical level.
    Factor2 { attribute: String, level: String },
}

impl Term {
    pub fn nodematch(attribute: impl Into<String>) -> Self {
        Term::NodeMatch { attribute: attribute.into(), tolerance: 0.0 }
    }

    pub fn activity(partition: Side, node: impl Into<String>) -> Self {
        Term::NodeActivity { partition, node: node.into() }
    }

    /// Canonical name, used in reports and TSV headers.
    pub fn name(&self) -> String {
        match self {
            Term::Edges => "edges".to_owned(),
            Term::NodeActivity { partition, node } => format!("activity.{partition}({node})"),
            Term::NodeMatch { attribute, .. } => format!("nodematch({attribute})"),
            Term::Factor1 { attribute, level } => format!("factor1({attribute}={level})"),
            Term::Factor2 { attribute, level } => format!("factor2({attribute}={level})"),
        }
    }

    pub fn is_dyad_independent(&self) -> bool {
        !matches!(self, Term::NodeMatch { .. })
    }
}

/// A term with an optional display label.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTerm {
    pub term: Term,
    pub label: Option<String>,
}

impl ModelTerm {
    pub fn display_name(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.term.name())
    }
}

impl From<Term> for ModelTerm {
    fn from(term: Term) -> Self {
        ModelTerm { term, label: None }
    }
}

/// Ordered, duplicate-free list of terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    terms: Vec<ModelTerm>,
}

impl ModelSpec {
    pub fn new(terms: Vec<ModelTerm>) -> Result<Self, StatisticsError> {
        if terms.is_empty() {
            return Err(StatisticsError::EmptyModel);
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].iter().any(|u| u.term == t.term) {
                return Err(StatisticsError::DuplicateTerm(t.term.name()));
            }
        }
        Ok(Self { terms })
    }

    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> Result<Self, StatisticsError> {
        Self::new(terms.into_iter().map(ModelTerm::from).collect())
    }

    pub fn terms(&self) -> &[ModelTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(ModelTerm::display_name).collect()
    }

    pub fn is_dyad_independent(&self) -> bool {
        self.terms.iter().all(|t| t.term.is_dyad_independent())
    }

    /// Resolves labels and attributes against a graph.
    pub fn bind(&self, graph: &BipartiteGraph, attrs: &AttributeTable) -> Result<BoundModel, StatisticsError> {
        let terms = self
            .terms
            .iter()
            .map(|t| bind_term(&t.term, graph, attrs))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundModel {
            spec: self.clone(),
            terms,
            first_size: graph.first_size(),
            second_size: graph.second_size(),
        })
    }
}

fn bind_term(term: &Term, graph: &BipartiteGraph, attrs: &AttributeTable) -> Result<BoundTerm, StatisticsError> {
    let name = || term.name();
    let attr_err = |source| StatisticsError::Attribute { term: name(), source };
    match term {
        Term::Edges => Ok(BoundTerm::Edges),
        Term::NodeActivity { partition, node } => {
            let index = graph
                .index_of(*partition, node)
                .map_err(|source| StatisticsError::Graph { term: name(), source })?;
            Ok(match partition {
                Side::First => BoundTerm::FirstNode(index),
                Side::Second => BoundTerm::SecondNode(index),
            })
        }
        Term::NodeMatch { attribute, tolerance } => {
            if !(tolerance.is_finite() && *tolerance >= 0.0) {
                return Err(StatisticsError::Tolerance { term: name(), tolerance: *tolerance });
            }
            let values = attrs.require_total(graph, Side::First, attribute).map_err(attr_err)?;
            let n = graph.first_size();
            let matches: Box<dyn Fn(usize, usize) -> bool> = match values {
                AttributeValues::Quantitative(v) => {
                    let tol = *tolerance;
                    Box::new(move |i, j| (v[i].unwrap() - v[j].unwrap()).abs() <= tol)
                }
                AttributeValues::Categorical(v) => {
                    if *tolerance != 0.0 {
                        return Err(StatisticsError::Tolerance { term: name(), tolerance: *tolerance });
                    }
                    Box::new(move |i, j| v[i] == v[j])
                }
            };
            let peers = (0..n)
                .map(|i| (0..n).filter(|&j| j != i && matches(i, j)).collect())
                .collect();
            Ok(BoundTerm::NodeMatch { peers })
        }
        Term::Factor1 { attribute, level } | Term::Factor2 { attribute, level } => {
            let side = if matches!(term, Term::Factor1 { .. }) { Side::First } else { Side::Second };
            let values = attrs.require_total(graph, side, attribute).map_err(attr_err)?;
            let AttributeValues::Categorical(v) = values else {
                return Err(StatisticsError::AttributeKind {
                    term: name(),
                    attribute: attribute.clone(),
                    expected: "categorical",
                });
            };
            let mask: Vec<bool> = v.iter().map(|x| x.as_deref() == Some(level.as_str())).collect();
            if !mask.iter().any(|&b| b) {
                return Err(StatisticsError::UnknownLevel { term: name(), level: level.clone() });
            }
            Ok(match side {
                Side::First => BoundTerm::FirstMask(mask),
                Side::Second => BoundTerm::SecondMask(mask),
            })
        }
    }
}

#[derive(Debug, Clone)]
enum BoundTerm {
    Edges,
    FirstNode(usize),
    SecondNode(usize),
    /// `peers[i]` = first-partition nodes `j != i` whose attribute matches `i`.
    NodeMatch { peers: Vec<Vec<usize>> },
    FirstMask(Vec<bool>),
    SecondMask(Vec<bool>),
}

/// A model specification resolved against one node set.
#[derive(Debug, Clone)]
pub struct BoundModel {
    spec: ModelSpec,
    terms: Vec<BoundTerm>,
    first_size: usize,
    second_size: usize,
}

impl BoundModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Number of terms `q`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.first_size, self.second_size)
    }

    pub fn dyad_count(&self) -> usize {
        self.first_size * self.second_size
    }

    pub fn is_dyad_independent(&self) -> bool {
        self.spec.is_dyad_independent()
    }

    pub fn check_shape(&self, graph: &impl Adjacency) -> Result<(), StatisticsError> {
        if graph.first_size() == self.first_size && graph.second_size() == self.second_size {
            Ok(())
        } else {
            Err(StatisticsError::ShapeMismatch {
                first: self.first_size,
                second: self.second_size,
                found_first: graph.first_size(),
                found_second: graph.second_size(),
            })
        }
    }

    /// Full statistic vector `s(y)`.
    pub fn evaluate(&self, graph: &impl Adjacency) -> Result<StatisticVector, StatisticsError> {
        self.check_shape(graph)?;
        Ok(self.evaluate_unchecked(graph))
    }

    pub(crate) fn evaluate_unchecked(&self, graph: &impl Adjacency) -> StatisticVector {
        let (n, m) = (self.first_size, self.second_size);
        let values = self
            .terms
            .iter()
            .map(|term| {
                let count: usize = match term {
                    BoundTerm::Edges => graph.edge_count(),
                    BoundTerm::FirstNode(i) => (0..m).filter(|&k| graph.has_edge(*i, k)).count(),
                    BoundTerm::SecondNode(k) => (0..n).filter(|&i| graph.has_edge(i, *k)).count(),
                    BoundTerm::NodeMatch { peers } => (0..m)
                        .map(|k| {
                            (0..n)
                                .filter(|&i| graph.has_edge(i, k))
                                .map(|i| peers[i].iter().filter(|&&j| j > i && graph.has_edge(j, k)).count())
                                .sum::<usize>()
                        })
                        .sum(),
                    BoundTerm::FirstMask(mask) => (0..n)
                        .filter(|&i| mask[i])
                        .map(|i| (0..m).filter(|&k| graph.has_edge(i, k)).count())
                        .sum(),
                    BoundTerm::SecondMask(mask) => (0..m)
                        .filter(|&k| mask[k])
                        .map(|k| (0..n).filter(|&i| graph.has_edge(i, k)).count())
                        .sum(),
                };
                count as f64
            })
            .collect();
        StatisticVector(values)
    }

    /// `s(y with (i,k) present) - s(y with (i,k) absent)`.
    pub fn change_statistics(
        &self,
        graph: &impl Adjacency,
        first: usize,
        second: usize,
    ) -> Result<StatisticVector, StatisticsError> {
        self.check_shape(graph)?;
        if first >= self.first_size || second >= self.second_size {
            return Err(StatisticsError::InvalidDyad {
                first,
                second,
                first_size: self.first_size,
                second_size: self.second_size,
            });
        }
        let mut out = vec![0.0; self.len()];
        self.change_into(graph, first, second, &mut out);
        Ok(StatisticVector(out))
    }

    /// Writes the change statistic for dyad `(i, k)` into `out`. Indices are
    /// assumed valid.
    #[inline]
    pub(crate) fn change_into(&self, graph: &impl Adjacency, i: usize, k: usize, out: &mut [f64]) {
        for (slot, term) in out.iter_mut().zip(&self.terms) {
            *slot = match term {
                BoundTerm::Edges => 1.0,
                BoundTerm::FirstNode(j) => f64::from(u8::from(*j == i)),
                BoundTerm::SecondNode(c) => f64::from(u8::from(*c == k)),
                BoundTerm::NodeMatch { peers } => {
                    peers[i].iter().filter(|&&j| graph.has_edge(j, k)).count() as f64
                }
                BoundTerm::FirstMask(mask) => f64::from(u8::from(mask[i])),
                BoundTerm::SecondMask(mask) => f64::from(u8::from(mask[k])),
            };
        }
    }
}

/// Statistic values aligned with the model's term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatisticVector(pub Vec<f64>);

impl StatisticVector {
    pub fn zeros(len: usize) -> Self {
        StatisticVector(vec![0.0; len])
    }

    pub fn dot(&self, theta: &[f64]) -> f64 {
        dot(&self.0, theta)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StatisticVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for StatisticVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StatisticVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl fmt::Display for StatisticVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// 3x2 graph with edges {(0,0),(1,0),(2,0),(0,1)} and first-partition
    /// attribute (A, A, B).
    fn fixture() -> (BipartiteGraph, AttributeTable) {
        let g = BipartiteGraph::unlabeled(3, 2, [(0, 0), (1, 0), (2, 0), (0, 1)]).unwrap();
        let mut attrs = AttributeTable::default();
        attrs
            .insert_categorical(&g, Side::First, "kind", [("r0", "A"), ("r1", "A"), ("r2", "B")])
            .unwrap();
        (g, attrs)
    }

    /// Direct triple sum (1/2) sum_i sum_j sum_k y_ik y_jk 1{match, i != j}.
    fn nodematch_brute(g: &BipartiteGraph, labels: &[&str]) -> usize {
        let mut twice = 0;
        for i in 0..g.first_size() {
            for j in 0..g.first_size() {
                for k in 0..g.second_size() {
                    if i != j && labels[i] == labels[j] && g.has_edge(i, k) && g.has_edge(j, k) {
                        twice += 1;
                    }
                }
            }
        }
        twice / 2
    }

    #[test]
    fn nodematch_fixture_matches_brute_force() {
        let (g, attrs) = fixture();
        assert_eq!(nodematch_brute(&g, &["A", "A", "B"]), 1);
        let model = ModelSpec::from_terms([Term::nodematch("kind")]).unwrap().bind(&g, &attrs).unwrap();
        assert_eq!(model.evaluate(&g).unwrap().0, vec![1.0]);
    }

    #[test]
    fn nodematch_change_fixture() {
        let (g, attrs) = fixture();
        let model = ModelSpec::from_terms([Term::Edges, Term::nodematch("kind")])
            .unwrap()
            .bind(&g, &attrs)
            .unwrap();
        assert_eq!(model.change_statistics(&g, 1, 1).unwrap().0, vec![1.0, 1.0]);
        assert_eq!(model.change_statistics(&g, 2, 1).unwrap().0, vec![1.0, 0.0]);
        // change statistic does not depend on the dyad's own state
        assert_eq!(model.change_statistics(&g, 0, 1).unwrap().0, vec![1.0, 0.0]);
    }

    #[test]
    fn empty_graph_is_all_zero() {
        let g = BipartiteGraph::unlabeled(3, 2, []).unwrap();
        let mut attrs = AttributeTable::default();
        attrs.insert_quantitative(&g, Side::First, "imp", [("r0", 1.0), ("r1", 1.0), ("r2", 2.0)]).unwrap();
        attrs.insert_categorical(&g, Side::Second, "t", [("c0", "x"), ("c1", "y")]).unwrap();
        let model = ModelSpec::from_terms([
            Term::Edges,
            Term::activity(Side::First, "r1"),
            Term::activity(Side::Second, "c0"),
            Term::nodematch("imp"),
            Term::Factor2 { attribute: "t".into(), level: "x".into() },
        ])
        .unwrap()
        .bind(&g, &attrs)
        .unwrap();
        assert!(model.evaluate(&g).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quantitative_match_is_exact_by_default() {
        let g = BipartiteGraph::unlabeled(3, 1, [(0, 0), (1, 0), (2, 0)]).unwrap();
        let mut attrs = AttributeTable::default();
        attrs.insert_quantitative(&g, Side::First, "imp", [("r0", 3.5), ("r1", 3.5), ("r2", 3.51)]).unwrap();
        let exact = ModelSpec::from_terms([Term::nodematch("imp")]).unwrap().bind(&g, &attrs).unwrap();
        assert_eq!(exact.evaluate(&g).unwrap().0, vec![1.0]);
        let loose = ModelSpec::from_terms([Term::NodeMatch { attribute: "imp".into(), tolerance: 0.02 }])
            .unwrap()
            .bind(&g, &attrs)
            .unwrap();
        assert_eq!(loose.evaluate(&g).unwrap().0, vec![3.0]);
    }

    #[test]
    fn spec_validation() {
        assert_eq!(ModelSpec::from_terms([]), Err(StatisticsError::EmptyModel));
        assert!(matches!(
            ModelSpec::from_terms([Term::Edges, Term::Edges]),
            Err(StatisticsError::DuplicateTerm(_))
        ));
        let (g, attrs) = fixture();
        let missing = ModelSpec::from_terms([Term::activity(Side::First, "nobody")]).unwrap();
        assert!(matches!(missing.bind(&g, &attrs), Err(StatisticsError::Graph { .. })));
        let wrong_side = ModelSpec::from_terms([Term::Factor2 { attribute: "kind".into(), level: "A".into() }]).unwrap();
        assert!(matches!(wrong_side.bind(&g, &attrs), Err(StatisticsError::Attribute { .. })));
        let no_level = ModelSpec::from_terms([Term::Factor1 { attribute: "kind".into(), level: "Z".into() }]).unwrap();
        assert!(matches!(no_level.bind(&g, &attrs), Err(StatisticsError::UnknownLevel { .. })));
    }

    #[test]
    fn invalid_dyad_rejected() {
        let (g, attrs) = fixture();
        let model = ModelSpec::from_terms([Term::Edges]).unwrap().bind(&g, &attrs).unwrap();
        assert!(matches!(model.change_statistics(&g, 3, 0), Err(StatisticsError::InvalidDyad { .. })));
        let other = BipartiteGraph::unlabeled(2, 2, []).unwrap();
        assert!(matches!(model.evaluate(&other), Err(StatisticsError::ShapeMismatch { .. })));
    }

    fn random_case() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<u8>, Vec<u8>)> {
        (1usize..=8, 1usize..=8).prop_flat_map(|(n, m)| {
            (
                Just(n),
                Just(m),
                proptest::collection::vec(any::<bool>(), n * m),
                proptest::collection::vec(0u8..3, n),
                proptest::collection::vec(0u8..2, m),
            )
        })
    }

    fn build(n: usize, m: usize, cells: &[bool], a: &[u8], b: &[u8]) -> (BipartiteGraph, AttributeTable, BoundModel) {
        let edges: Vec<_> = (0..n * m).filter(|&d| cells[d]).map(|d| (d / m, d % m)).collect();
        let g = BipartiteGraph::unlabeled(n, m, edges).unwrap();
        let mut attrs = AttributeTable::default();
        attrs
            .insert_categorical(&g, Side::First, "a", g.labels(Side::First).iter().zip(a).map(|(l, v)| (l.as_str(), format!("L{v}"))))
            .unwrap();
        attrs
            .insert_categorical(&g, Side::Second, "b", g.labels(Side::Second).iter().zip(b).map(|(l, v)| (l.as_str(), format!("L{v}"))))
            .unwrap();
        let first_level = format!("L{}", a[0]);
        let second_level = format!("L{}", b[0]);
        let model = ModelSpec::from_terms([
            Term::Edges,
            Term::activity(Side::First, "r0"),
            Term::activity(Side::Second, format!("c{}", m - 1)),
            Term::nodematch("a"),
            Term::Factor1 { attribute: "a".into(), level: first_level },
            Term::Factor2 { attribute: "b".into(), level: second_level },
        ])
        .unwrap()
        .bind(&g, &attrs)
        .unwrap();
        (g, attrs, model)
    }

    proptest! {
        #[test]
        fn change_equals_difference_of_evaluations((n, m, cells, a, b) in random_case()) {
            let (g, _, model) = build(n, m, &cells, &a, &b);
            for i in 0..n {
                for k in 0..m {
                    let on = model.evaluate(&g.with_dyad(i, k, true).unwrap()).unwrap();
                    let off = model.evaluate(&g.with_dyad(i, k, false).unwrap()).unwrap();
                    let diff: Vec<f64> = on.iter().zip(off.iter()).map(|(x, y)| x - y).collect();
                    prop_assert_eq!(model.change_statistics(&g, i, k).unwrap().0, diff);
                }
            }
        }

        #[test]
        fn nodematch_agrees_with_triple_sum((n, m, cells, a, b) in random_case()) {
            let (g, _, model) = build(n, m, &cells, &a, &b);
            let labels: Vec<String> = a.iter().map(|v| format!("L{v}")).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            prop_assert_eq!(model.evaluate(&g).unwrap()[3], nodematch_brute(&g, &refs) as f64);
        }

        #[test]
        fn nodematch_invariant_under_level_relabeling((n, m, cells, a, b) in random_case()) {
            let (g, _, model) = build(n, m, &cells, &a, &b);
            let relabeled: Vec<u8> = a.iter().map(|v| (v + 1) % 3).collect();
            let (_, _, other) = build(n, m, &cells, &relabeled, &b);
            prop_assert_eq!(model.evaluate(&g).unwrap()[3], other.evaluate(&g).unwrap()[3]);
        }

        #[test]
        fn activity_terms_sum_to_edges((n, m, cells) in (1usize..=6, 1usize..=6).prop_flat_map(|(n, m)| (Just(n), Just(m), proptest::collection::vec(any::<bool>(), n * m)))) {
            let edges: Vec<_> = (0..n * m).filter(|&d| cells[d]).map(|d| (d / m, d % m)).collect();
            let g = BipartiteGraph::unlabeled(n, m, edges).unwrap();
            let terms = std::iter::once(Term::Edges).chain((0..n).map(|i| Term::activity(Side::First, format!("r{i}"))));
            let model = ModelSpec::from_terms(terms).unwrap().bind(&g, &AttributeTable::default()).unwrap();
            let s = model.evaluate(&g).unwrap();
            prop_assert_eq!(s[1..].iter().sum::<f64>(), s[0]);
        }
    }
}
