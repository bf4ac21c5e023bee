//! Node attributes per partition: quantitative (real-valued) and categorical.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{BipartiteGraph, Side};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AttributeError {
    #[error("attribute {name:?} references unknown {side} node {label:?}")]
    UnknownLabel { name: String, side: Side, label: String },
    #[error("attribute {name:?} is already defined on the {side} partition as {kind}")]
    Redefined { name: String, side: Side, kind: &'static str },
    #[error("attribute {name:?} assigns node {label:?} twice")]
    DuplicateValue { name: String, label: String },
    #[error("attribute {name:?} has no value for {side} node {label:?}")]
    Missing { name: String, side: Side, label: String },
    #[error("attribute {name:?} is not defined")]
    Unknown { name: String },
    #[error("attribute {name:?} is {found}, expected {expected}")]
    KindMismatch { name: String, found: &'static str, expected: &'static str },
    #[error("attribute {name:?} is defined on the {found} partition, expected {expected}")]
    WrongSide { name: String, found: Side, expected: Side },
    #[error("attribute {name:?} has a non-finite value for node {label:?}")]
    NonFinite { name: String, label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Quantitative,
    Categorical,
}

impl AttributeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::Quantitative => "quantitative",
            AttributeKind::Categorical => "categorical",
        }
    }
}

/// Values of one attribute, indexed by node; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValues {
    Quantitative(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl AttributeValues {
    pub fn kind(&self) -> &'static str {
        self.attribute_kind().as_str()
    }

    pub fn attribute_kind(&self) -> AttributeKind {
        match self {
            AttributeValues::Quantitative(_) => AttributeKind::Quantitative,
            AttributeValues::Categorical(_) => AttributeKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AttributeValues::Quantitative(v) => v.len(),
            AttributeValues::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First node index without a value, if any.
    pub fn first_missing(&self) -> Option<usize> {
        match self {
            AttributeValues::Quantitative(v) => v.iter().position(Option::is_none),
            AttributeValues::Categorical(v) => v.iter().position(Option::is_none),
        }
    }

    /// Sorted distinct levels of a categorical attribute; empty otherwise.
    pub fn levels(&self) -> Vec<String> {
        match self {
            AttributeValues::Categorical(v) => {
                v.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect()
            }
            AttributeValues::Quantitative(_) => Vec::new(),
        }
    }
}

/// Attribute table for both partitions. An attribute name lives on exactly
/// one partition with exactly one kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeTable {
    first: BTreeMap<String, AttributeValues>,
    second: BTreeMap<String, AttributeValues>,
}

impl AttributeTable {
    fn map(&self, side: Side) -> &BTreeMap<String, AttributeValues> {
        match side {
            Side::First => &self.first,
            Side::Second => &self.second,
        }
    }

    pub fn get(&self, side: Side, name: &str) -> Option<&AttributeValues> {
        self.map(side).get(name)
    }

    pub fn side_of(&self, name: &str) -> Option<Side> {
        Side::BOTH.into_iter().find(|&s| self.map(s).contains_key(name))
    }

    /// Attribute names with their values on one partition, sorted by name.
    pub fn iter(&self, side: Side) -> impl Iterator<Item = (&str, &AttributeValues)> {
        self.map(side).iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty() && self.second.is_empty()
    }

    /// Stores pre-indexed values. `values.len()` must match the partition
    /// size of the graph the table is used with.
    pub fn insert(&mut self, side: Side, name: &str, values: AttributeValues) -> Result<(), AttributeError> {
        if let Some(existing) = self.side_of(name) {
            let kind = self.map(existing)[name].kind();
            return Err(AttributeError::Redefined { name: name.to_owned(), side: existing, kind });
        }
        if let AttributeValues::Quantitative(v) = &values {
            if let Some(i) = v.iter().position(|x| x.is_some_and(|x| !x.is_finite())) {
                return Err(AttributeError::NonFinite { name: name.to_owned(), label: format!("#{i}") });
            }
        }
        match side {
            Side::First => self.first.insert(name.to_owned(), values),
            Side::Second => self.second.insert(name.to_owned(), values),
        };
        Ok(())
    }

    fn collect<T, L: AsRef<str>>(
        graph: &BipartiteGraph,
        side: Side,
        name: &str,
        pairs: impl IntoIterator<Item = (L, T)>,
    ) -> Result<Vec<Option<T>>, AttributeError> {
        let mut values: Vec<Option<T>> = (0..graph.size(side)).map(|_| None).collect();
        for (label, value) in pairs {
            let label = label.as_ref();
            let i = graph.index_of(side, label).map_err(|_| AttributeError::UnknownLabel {
                name: name.to_owned(),
                side,
                label: label.to_owned(),
            })?;
            if values[i].replace(value).is_some() {
                return Err(AttributeError::DuplicateValue { name: name.to_owned(), label: label.to_owned() });
            }
        }
        Ok(values)
    }

    pub fn insert_quantitative<L: AsRef<str>>(
        &mut self,
        graph: &BipartiteGraph,
        side: Side,
        name: &str,
        pairs: impl IntoIterator<Item = (L, f64)>,
    ) -> Result<(), AttributeError> {
        let values = Self::collect(graph, side, name, pairs)?;
        if let Some(i) = values.iter().position(|x| x.is_some_and(|x| !x.is_finite())) {
            return Err(AttributeError::NonFinite {
                name: name.to_owned(),
                label: graph.labels(side)[i].clone(),
            });
        }
        self.insert(side, name, AttributeValues::Quantitative(values))
    }

    pub fn insert_categorical<L: AsRef<str>, V: Into<String>>(
        &mut self,
        graph: &BipartiteGraph,
        side: Side,
        name: &str,
        pairs: impl IntoIterator<Item = (L, V)>,
    ) -> Result<(), AttributeError> {
        let values = Self::collect(graph, side, name, pairs.into_iter().map(|(l, v)| (l, v.into())))?;
        self.insert(side, name, AttributeValues::Categorical(values))
    }

    /// Looks up an attribute that must exist on `side` and be defined for
    /// every node of `graph`.
    pub fn require_total(
        &self,
        graph: &BipartiteGraph,
        side: Side,
        name: &str,
    ) -> Result<&AttributeValues, AttributeError> {
        let values = match (self.get(side, name), self.side_of(name)) {
            (Some(v), _) => v,
            (None, Some(found)) => {
                return Err(AttributeError::WrongSide { name: name.to_owned(), found, expected: side })
            }
            (None, None) => return Err(AttributeError::Unknown { name: name.to_owned() }),
        };
        debug_assert_eq!(values.len(), graph.size(side));
        if let Some(i) = values.first_missing() {
            return Err(AttributeError::Missing {
                name: name.to_owned(),
                side,
                label: graph.labels(side)[i].clone(),
            });
        }
        Ok(values)
    }

    /// Attribute table aligned with `graph.restrict_second(keep)`.
    pub fn restrict_second(&self, keep: &[usize]) -> AttributeTable {
        let second = self
            .second
            .iter()
            .map(|(name, values)| {
                let v = match values {
                    AttributeValues::Quantitative(v) => {
                        AttributeValues::Quantitative(keep.iter().map(|&k| v[k]).collect())
                    }
                    AttributeValues::Categorical(v) => {
                        AttributeValues::Categorical(keep.iter().map(|&k| v[k].clone()).collect())
                    }
                };
                (name.clone(), v)
            })
            .collect();
        AttributeTable { first: self.first.clone(), second }
    }

    /// Checks that every stored attribute has one slot per node of `graph`.
    pub fn check_shape(&self, graph: &BipartiteGraph) -> bool {
        Side::BOTH
            .into_iter()
            .all(|side| self.map(side).values().all(|v| v.len() == graph.size(side)))
    }
}
