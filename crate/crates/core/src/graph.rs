//! Bipartite graph value: two labelled node partitions and a binary edge set
//! between them.
//!
//! The first partition holds skills (`n` nodes), the second holds documents
//! (`m` nodes). Dyad `(i, k)` always means first-partition node `i` and
//! second-partition node `k`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeTable, AttributeValues};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("{side} partition has no node with index {index} (size {size})")]
    IndexOutOfRange { side: Side, index: usize, size: usize },
    #[error("duplicate node label {label:?} in {side} partition")]
    DuplicateLabel { side: Side, label: String },
    #[error("unknown node label {label:?} in {side} partition")]
    UnknownLabel { side: Side, label: String },
    #[error("duplicate edge ({first:?}, {second:?})")]
    DuplicateEdge { first: String, second: String },
    #[error("{side} partition is empty")]
    EmptyPartition { side: Side },
    #[error("attribute {name:?} is not a categorical attribute of the second partition")]
    NotSecondCategorical { name: String },
    #[error("attribute {name:?} has no level {level:?}")]
    UnknownLevel { name: String, level: String },
}

/// Which partition a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    First,
    Second,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::First, Side::Second];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::First => "first",
            Side::Second => "second",
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::First => Side::Second,
            Side::Second => Side::First,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Read access to a bi-adjacency matrix. Implemented by the immutable graph
/// and by the sampler's working copy so statistics can be evaluated on both.
pub trait Adjacency {
    fn first_size(&self) -> usize;
    fn second_size(&self) -> usize;
    fn has_edge(&self, first: usize, second: usize) -> bool;
    fn edge_count(&self) -> usize;

    fn dyad_count(&self) -> usize {
        self.first_size() * self.second_size()
    }
}

/// Label list plus reverse lookup for one partition.
#[derive(Debug, Clone, PartialEq)]
struct Labels {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Labels {
    fn new(side: Side, names: Vec<String>) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(GraphError::DuplicateLabel { side, label: name.clone() });
            }
        }
        Ok(Self { names, index })
    }
}

/// Immutable bipartite graph `Y = (R, C, E)`.
///
/// Edges are stored as a dense row-major bit matrix so membership is O(1);
/// degrees of both partitions are cached at construction.
#[derive(Clone, PartialEq)]
pub struct BipartiteGraph {
    first: Arc<Labels>,
    second: Arc<Labels>,
    cells: Vec<bool>,
    first_degrees: Vec<usize>,
    second_degrees: Vec<usize>,
    edges: usize,
}

impl fmt::Debug for BipartiteGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BipartiteGraph")
            .field("first_size", &self.first_size())
            .field("second_size", &self.second_size())
            .field("edges", &self.edges)
            .finish()
    }
}

impl BipartiteGraph {
    /// Builds a graph from node labels and index pairs. Duplicate pairs are
    /// rejected.
    pub fn new(
        first_labels: Vec<String>,
        second_labels: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let first = Labels::new(Side::First, first_labels)?;
        let second = Labels::new(Side::Second, second_labels)?;
        let (n, m) = (first.names.len(), second.names.len());
        let mut graph = Self {
            first: Arc::new(first),
            second: Arc::new(second),
            cells: vec![false; n * m],
            first_degrees: vec![0; n],
            second_degrees: vec![0; m],
            edges: 0,
        };
        for (i, k) in edges {
            graph.check_index(Side::First, i)?;
            graph.check_index(Side::Second, k)?;
            if graph.cells[i * m + k] {
                return Err(GraphError::DuplicateEdge {
                    first: graph.first.names[i].clone(),
                    second: graph.second.names[k].clone(),
                });
            }
            graph.set(i, k, true);
        }
        Ok(graph)
    }

    /// Builds a graph from `(first-label, second-label)` pairs.
    pub fn from_labeled_edges<S: AsRef<str>>(
        first_labels: Vec<String>,
        second_labels: Vec<String>,
        edges: impl IntoIterator<Item = (S, S)>,
    ) -> Result<Self, GraphError> {
        let empty = Self::new(first_labels, second_labels, std::iter::empty())?;
        let mut pairs = Vec::new();
        for (a, b) in edges {
            pairs.push((empty.index_of(Side::First, a.as_ref())?, empty.index_of(Side::Second, b.as_ref())?));
        }
        Self::new(empty.first.names.clone(), empty.second.names.clone(), pairs)
    }

    /// Graph with generated labels `r0..`, `c0..`; handy for tests and
    /// synthetic networks.
    pub fn unlabeled(
        first_size: usize,
        second_size: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        Self::new(
            (0..first_size).map(|i| format!("r{i}")).collect(),
            (0..second_size).map(|k| format!("c{k}")).collect(),
            edges,
        )
    }

    /// Same node sets with a new edge set given as a row-major dyad mask.
    pub(crate) fn with_cells(&self, cells: &[bool]) -> Self {
        debug_assert_eq!(cells.len(), self.cells.len());
        let mut graph = Self {
            first: Arc::clone(&self.first),
            second: Arc::clone(&self.second),
            cells: vec![false; cells.len()],
            first_degrees: vec![0; self.first_size()],
            second_degrees: vec![0; self.second_size()],
            edges: 0,
        };
        let m = self.second_size();
        for (d, _) in cells.iter().enumerate().filter(|(_, &on)| on) {
            graph.set(d / m, d % m, true);
        }
        graph
    }

    fn set(&mut self, i: usize, k: usize, on: bool) {
        let cell = &mut self.cells[i * self.second.names.len() + k];
        if *cell == on {
            return;
        }
        *cell = on;
        if on {
            self.first_degrees[i] += 1;
            self.second_degrees[k] += 1;
            self.edges += 1;
        } else {
            self.first_degrees[i] -= 1;
            self.second_degrees[k] -= 1;
            self.edges -= 1;
        }
    }

    /// Copy of this graph with dyad `(i, k)` flipped.
    pub fn toggled(&self, i: usize, k: usize) -> Result<Self, GraphError> {
        self.check_index(Side::First, i)?;
        self.check_index(Side::Second, k)?;
        let mut out = self.clone();
        let on = !out.has_edge(i, k);
        out.set(i, k, on);
        Ok(out)
    }

    /// Copy of this graph with dyad `(i, k)` forced to `present`.
    pub fn with_dyad(&self, i: usize, k: usize, present: bool) -> Result<Self, GraphError> {
        self.check_index(Side::First, i)?;
        self.check_index(Side::Second, k)?;
        let mut out = self.clone();
        out.set(i, k, present);
        Ok(out)
    }

    fn check_index(&self, side: Side, index: usize) -> Result<(), GraphError> {
        let size = self.size(side);
        if index < size {
            Ok(())
        } else {
            Err(GraphError::IndexOutOfRange { side, index, size })
        }
    }

    pub fn size(&self, side: Side) -> usize {
        match side {
            Side::First => self.first.names.len(),
            Side::Second => self.second.names.len(),
        }
    }

    pub fn labels(&self, side: Side) -> &[String] {
        match side {
            Side::First => &self.first.names,
            Side::Second => &self.second.names,
        }
    }

    pub fn label(&self, side: Side, index: usize) -> Result<&str, GraphError> {
        self.check_index(side, index)?;
        Ok(&self.labels(side)[index])
    }

    pub fn index_of(&self, side: Side, label: &str) -> Result<usize, GraphError> {
        let labels = match side {
            Side::First => &self.first,
            Side::Second => &self.second,
        };
        labels
            .index
            .get(label)
            .copied()
            .ok_or_else(|| GraphError::UnknownLabel { side, label: label.to_owned() })
    }

    /// Number of edges incident to `node`.
    pub fn degree(&self, side: Side, node: usize) -> Result<usize, GraphError> {
        self.check_index(side, node)?;
        Ok(self.degrees(side)[node])
    }

    pub fn degrees(&self, side: Side) -> &[usize] {
        match side {
            Side::First => &self.first_degrees,
            Side::Second => &self.second_degrees,
        }
    }

    /// Edges as index pairs in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.second_size();
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(move |(d, _)| (d / m, d % m))
    }

    pub(crate) fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Mean, sample standard deviation and histogram of degrees in one
    /// partition. A partition of size one has an undefined (NaN) sd.
    pub fn degree_summary(&self, side: Side) -> Result<DegreeSummary, GraphError> {
        let degrees = self.degrees(side);
        if degrees.is_empty() {
            return Err(GraphError::EmptyPartition { side });
        }
        let count = degrees.len() as f64;
        let mean = self.edges as f64 / count;
        let sd = if degrees.len() > 1 {
            let ss: f64 = degrees.iter().map(|&d| (d as f64 - mean).powi(2)).sum();
            (ss / (count - 1.0)).sqrt()
        } else {
            f64::NAN
        };
        let max = degrees.iter().copied().max().unwrap_or(0);
        let mut histogram = vec![0; max + 1];
        for &d in degrees {
            histogram[d] += 1;
        }
        Ok(DegreeSummary { mean, sd, histogram })
    }

    /// Sub-graph keeping every first-partition node and the second-partition
    /// nodes whose categorical `attribute` equals `level`.
    pub fn induced_subgraph(
        &self,
        attrs: &AttributeTable,
        attribute: &str,
        level: &str,
    ) -> Result<BipartiteGraph, GraphError> {
        let values = match attrs.get(Side::Second, attribute) {
            Some(AttributeValues::Categorical(values)) => values,
            _ => return Err(GraphError::NotSecondCategorical { name: attribute.to_owned() }),
        };
        if !values.iter().flatten().any(|v| v == level) {
            return Err(GraphError::UnknownLevel { name: attribute.to_owned(), level: level.to_owned() });
        }
        let keep: Vec<usize> = (0..self.second_size())
            .filter(|&k| values[k].as_deref() == Some(level))
            .collect();
        Ok(self.restrict_second(&keep))
    }

    /// Sub-graph on all first-partition nodes and the listed second-partition
    /// nodes (in the given order).
    pub fn restrict_second(&self, keep: &[usize]) -> BipartiteGraph {
        let second: Vec<String> = keep.iter().map(|&k| self.second.names[k].clone()).collect();
        let mut edges = Vec::new();
        for (new_k, &k) in keep.iter().enumerate() {
            for i in 0..self.first_size() {
                if self.has_edge(i, k) {
                    edges.push((i, new_k));
                }
            }
        }
        // labels are already unique and indices in range
        Self::new(self.first.names.clone(), second, edges).expect("restriction of a valid graph")
    }

    /// Relabels node indices: node `i` of the result is node `first_order[i]`
    /// of `self`, and likewise for the second partition.
    pub fn permuted(&self, first_order: &[usize], second_order: &[usize]) -> Result<Self, GraphError> {
        let first: Vec<String> = first_order.iter().map(|&i| self.first.names[i].clone()).collect();
        let second: Vec<String> = second_order.iter().map(|&k| self.second.names[k].clone()).collect();
        let mut first_pos = vec![0; first_order.len()];
        for (new, &old) in first_order.iter().enumerate() {
            first_pos[old] = new;
        }
        let mut second_pos = vec![0; second_order.len()];
        for (new, &old) in second_order.iter().enumerate() {
            second_pos[old] = new;
        }
        Self::new(first, second, self.edges().map(|(i, k)| (first_pos[i], second_pos[k])))
    }
}

impl Adjacency for BipartiteGraph {
    fn first_size(&self) -> usize {
        self.first.names.len()
    }

    fn second_size(&self) -> usize {
        self.second.names.len()
    }

    fn has_edge(&self, first: usize, second: usize) -> bool {
        self.cells[first * self.second.names.len() + second]
    }

    fn edge_count(&self) -> usize {
        self.edges
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeSummary {
    pub mean: f64,
    pub sd: f64,
    /// `histogram[d]` = number of nodes with degree `d`.
    pub histogram: Vec<usize>,
}
