//! File formats: network, model and report documents, TSV statistics and
//! the text renders of fit and goodness-of-fit reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::attributes::{AttributeError, AttributeKind, AttributeTable, AttributeValues};
use crate::estimation::FitResult;
use crate::gof::GofReport;
use crate::graph::{BipartiteGraph, GraphError, Side};
use crate::statistics::{ModelSpec, ModelTerm, StatisticVector, StatisticsError, Term};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
}

/// Deserializes JSON, naming the path of the first offending field.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, FormatError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| FormatError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn from_value<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, FormatError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { prefix.to_owned() } else { format!("{prefix}.{inner}") };
        FormatError::Schema { path, message: e.inner().to_string() }
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partitions {
    pub first: Vec<String>,
    pub second: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeEntry {
    pub kind: AttributeKind,
    /// Node label to value; nodes without a value are omitted.
    pub values: Map<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSections {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub first: BTreeMap<String, AttributeEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub second: BTreeMap<String, AttributeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub partitions: Partitions,
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub attributes: AttributeSections,
}

impl NetworkFile {
    pub fn from_graph(graph: &BipartiteGraph, attrs: &AttributeTable) -> Self {
        let labels = |side| graph.labels(side).to_vec();
        let edges = graph
            .edges()
            .map(|(i, k)| (graph.labels(Side::First)[i].clone(), graph.labels(Side::Second)[k].clone()))
            .collect();
        let section = |side: Side| -> BTreeMap<String, AttributeEntry> {
            attrs
                .iter(side)
                .map(|(name, values)| {
                    let mut map = Map::new();
                    let names = graph.labels(side);
                    match values {
                        AttributeValues::Quantitative(v) => {
                            for (label, x) in names.iter().zip(v) {
                                if let Some(x) = x {
                                    map.insert(label.clone(), Value::from(*x));
                                }
                            }
                        }
                        AttributeValues::Categorical(v) => {
                            for (label, x) in names.iter().zip(v) {
                                if let Some(x) = x {
                                    map.insert(label.clone(), Value::from(x.clone()));
                                }
                            }
                        }
                    }
                    (name.to_owned(), AttributeEntry { kind: values.attribute_kind(), values: map })
                })
                .collect()
        };
        NetworkFile {
            partitions: Partitions { first: labels(Side::First), second: labels(Side::Second) },
            edges,
            attributes: AttributeSections { first: section(Side::First), second: section(Side::Second) },
        }
    }

    pub fn to_graph(&self) -> Result<(BipartiteGraph, AttributeTable), FormatError> {
        let graph = BipartiteGraph::from_labeled_edges(
            self.partitions.first.clone(),
            self.partitions.second.clone(),
            self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())),
        )?;
        let mut attrs = AttributeTable::default();
        for (side, section) in [(Side::First, &self.attributes.first), (Side::Second, &self.attributes.second)] {
            for (name, entry) in section {
                let path = |label: &str| format!("attributes.{side}.{name}.values.{label}");
                match entry.kind {
                    AttributeKind::Quantitative => {
                        let mut pairs = Vec::with_capacity(entry.values.len());
                        for (label, v) in &entry.values {
                            let x = v.as_f64().ok_or_else(|| FormatError::Schema {
                                path: path(label),
                                message: format!("expected a number, found {v}"),
                            })?;
                            pairs.push((label.as_str(), x));
                        }
                        attrs.insert_quantitative(&graph, side, name, pairs)?;
                    }
                    AttributeKind::Categorical => {
                        let mut pairs = Vec::with_capacity(entry.values.len());
                        for (label, v) in &entry.values {
                            let s = v.as_str().ok_or_else(|| FormatError::Schema {
                                path: path(label),
                                message: format!("expected a string, found {v}"),
                            })?;
                            pairs.push((label.as_str(), s.to_owned()));
                        }
                        attrs.insert_categorical(&graph, side, name, pairs)?;
                    }
                }
            }
        }
        Ok((graph, attrs))
    }
}

pub fn read_network(text: &str) -> Result<(BipartiteGraph, AttributeTable), FormatError> {
    parse_json::<NetworkFile>(text)?.to_graph()
}

pub fn write_network(graph: &BipartiteGraph, attrs: &AttributeTable) -> String {
    to_json(&NetworkFile::from_graph(graph, attrs))
}

/// One entry of a model file: `{"kind": ..., "params": {...}, "label": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivityParams {
    partition: Side,
    node: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeMatchParams {
    attribute: String,
    #[serde(default)]
    tolerance: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorParams {
    attribute: String,
    level: String,
}

impl ModelEntry {
    pub fn from_term(term: &ModelTerm) -> Self {
        let mut params = Map::new();
        let kind = match &term.term {
            Term::Edges => "edges",
            Term::NodeActivity { partition, node } => {
                params.insert("partition".into(), partition.as_str().into());
                params.insert("node".into(), node.clone().into());
                "activity"
            }
            Term::NodeMatch { attribute, tolerance } => {
                params.insert("attribute".into(), attribute.clone().into());
                if *tolerance != 0.0 {
                    params.insert("tolerance".into(), (*tolerance).into());
                }
                "nodematch"
            }
            Term::Factor1 { attribute, level } | Term::Factor2 { attribute, level } => {
                params.insert("attribute".into(), attribute.clone().into());
                params.insert("level".into(), level.clone().into());
                if matches!(term.term, Term::Factor1 { .. }) {
                    "factor1"
                } else {
                    "factor2"
                }
            }
        };
        ModelEntry { kind: kind.to_owned(), params, label: term.label.clone() }
    }

    fn to_term(&self, index: usize) -> Result<ModelTerm, FormatError> {
        let prefix = format!("[{index}].params");
        let params = Value::Object(self.params.clone());
        let term = match self.kind.as_str() {
            "edges" => {
                from_value::<NoParams>(params, &prefix)?;
                Term::Edges
            }
            "activity" => {
                let p: ActivityParams = from_value(params, &prefix)?;
                Term::NodeActivity { partition: p.partition, node: p.node }
            }
            "nodematch" => {
                let p: NodeMatchParams = from_value(params, &prefix)?;
                Term::NodeMatch { attribute: p.attribute, tolerance: p.tolerance }
            }
            "factor1" => {
                let p: FactorParams = from_value(params, &prefix)?;
                Term::Factor1 { attribute: p.attribute, level: p.level }
            }
            "factor2" => {
                let p: FactorParams = from_value(params, &prefix)?;
                Term::Factor2 { attribute: p.attribute, level: p.level }
            }
            other => {
                return Err(FormatError::Schema {
                    path: format!("[{index}].kind"),
                    message: format!(
                        "unknown term kind {other:?} (expected edges, activity, nodematch, factor1 or factor2)"
                    ),
                })
            }
        };
        Ok(ModelTerm { term, label: self.label.clone() })
    }
}

pub fn model_from_entries(entries: &[ModelEntry]) -> Result<ModelSpec, FormatError> {
    let terms = entries.iter().enumerate().map(|(i, e)| e.to_term(i)).collect::<Result<Vec<_>, _>>()?;
    Ok(ModelSpec::new(terms)?)
}

pub fn model_entries(spec: &ModelSpec) -> Vec<ModelEntry> {
    spec.terms().iter().map(ModelEntry::from_term).collect()
}

pub fn read_model(text: &str) -> Result<ModelSpec, FormatError> {
    model_from_entries(&parse_json::<Vec<ModelEntry>>(text)?)
}

/// Sampler settings as given on the command line and as recorded in
/// reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub seed: u64,
    pub nsim: usize,
    pub burnin: u64,
    pub interval: u64,
    pub proposal: crate::sampler::Proposal,
    pub chains: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFile {
    pub tool: String,
    pub version: String,
    pub model: Vec<ModelEntry>,
    pub config: FitConfig,
    pub result: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub method: crate::estimation::Method,
    pub network: String,
    /// Sampler settings; recorded for every method, used by MC-MLE.
    pub sampler: RunSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GofFile {
    pub tool: String,
    pub version: String,
    pub model: Vec<ModelEntry>,
    pub theta: Vec<f64>,
    pub config: GofConfig,
    pub report: GofReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GofConfig {
    pub network: String,
    pub fit: String,
    pub sampler: RunSettings,
    pub degree_distribution: bool,
}

/// Simulated statistic vectors as TSV with one header row.
pub fn statistics_tsv(names: &[String], samples: &[StatisticVector]) -> String {
    let mut out = names.join("\t");
    out.push('\n');
    for s in samples {
        let row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// `%g`-style rendering with six significant digits.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exponent) = sci.split_once('e').expect("exponent");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if !(-4..6).contains(&exponent) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exponent < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exponent.abs());
    }
    let decimals = (5 - exponent) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Left-aligned first column, right-aligned others, two-space gaps.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, &w))| {
                let pad = w - c.chars().count();
                if j == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

pub fn render_fit(fit: &FitResult) -> String {
    let stars = fit.stars();
    let rows: Vec<Vec<String>> = (0..fit.q())
        .map(|j| {
            vec![
                fit.terms[j].clone(),
                fmt_g(fit.theta[j]),
                fmt_g(fit.std_errors[j]),
                fmt_g(fit.z_values[j]),
                fmt_g(fit.p_values[j]),
                stars[j].to_owned(),
            ]
        })
        .collect();
    let mut out = format!("method: {}\n\n", fit.method.as_str());
    out.push_str(&aligned_table(&["term", "estimate", "std.error", "z", "p", ""], &rows));
    let likelihood = match fit.likelihood {
        crate::estimation::LikelihoodKind::Exact => "exact",
        crate::estimation::LikelihoodKind::Pseudo => "pseudo",
        crate::estimation::LikelihoodKind::Bridge => "bridge-sampled",
    };
    let _ = writeln!(out, "\nlog-likelihood: {} ({likelihood})", fmt_g(fit.log_likelihood));
    let _ = writeln!(out, "AIC: {}", fmt_g(fit.aic));
    let _ = writeln!(out, "BIC: {}", fmt_g(fit.bic));
    let c = &fit.convergence;
    let _ = writeln!(
        out,
        "convergence: {} after {} iterations, gradient norm {}",
        if c.converged { "yes" } else { "no" },
        c.iterations,
        fmt_g(c.gradient_norm)
    );
    out.push_str("significance: *** 0.001, ** 0.01, * 0.05, • 0.1\n");
    out
}

pub fn render_gof(report: &GofReport) -> String {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![r.name.clone(), fmt_g(r.observed), fmt_g(r.sim_min), fmt_g(r.sim_mean), fmt_g(r.sim_max), fmt_g(r.p)]
        })
        .collect();
    let mut out = aligned_table(&["statistic", "obs", "min", "mean", "max", "p"], &rows);
    let _ = writeln!(out, "\nMahalanobis distance: {}", fmt_g(report.mahalanobis));
    let _ = writeln!(out, "squared: {}", fmt_g(report.mahalanobis_squared));
    let _ = writeln!(out, "simulated networks: {}, seed {}", report.sample_count, report.seed);
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    if let Some(degrees) = &report.degrees {
        for (side, rows) in [(Side::First, &degrees.first), (Side::Second, &degrees.second)] {
            let rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.degree.to_string(),
                        r.observed.to_string(),
                        r.sim_min.to_string(),
                        fmt_g(r.sim_mean),
                        r.sim_max.to_string(),
                    ]
                })
                .collect();
            let _ = writeln!(out, "\n{side} partition degree distribution");
            out.push_str(&aligned_table(&["degree", "obs", "min", "mean", "max"], &rows));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g_format() {
        assert_eq!(fmt_g(-1.2071234), "-1.20712");
        assert_eq!(fmt_g(3.739), "3.739");
        assert_eq!(fmt_g(7664.0), "7664");
        assert_eq!(fmt_g(1234567.0), "1.23457e+06");
        assert_eq!(fmt_g(0.0001234), "0.0001234");
        assert_eq!(fmt_g(0.00001234), "1.234e-05");
        assert_eq!(fmt_g(999999.5), "1e+06");
        assert_eq!(fmt_g(0.1), "0.1");
        assert_eq!(fmt_g(f64::NAN), "NaN");
        assert_eq!(fmt_g(0.0), "0");
    }

    #[test]
    fn model_file_parsing() {
        let text = r#"[{"kind": "edges"},
            {"kind": "activity", "params": {"partition": "first", "node": "Coordination"}, "label": "Coord"},
            {"kind": "nodematch", "params": {"attribute": "importance"}},
            {"kind": "factor2", "params": {"attribute": "region", "level": "EU"}}]"#;
        let spec = read_model(text).unwrap();
        assert_eq!(spec.len(), 4);
        assert_eq!(spec.terms()[1].display_name(), "Coord");
        assert_eq!(model_from_entries(&model_entries(&spec)).unwrap(), spec);
    }

    #[test]
    fn model_file_errors_name_the_path() {
        let err = read_model(r#"[{"kind": "edges"}, {"kind": "nodematch", "params": {"attribute": "a", "tol": 1}}]"#)
            .unwrap_err();
        match err {
            FormatError::Schema { path, message } => {
                assert_eq!(path, "[1].params.tol");
                assert!(message.contains("tol"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let err = read_model(r#"[{"kind": "edges", "weight": 2}]"#).unwrap_err();
        assert!(matches!(err, FormatError::Schema { ref path, .. } if path == "[0].weight"), "{err:?}");
        let err = read_model(r#"[{"kind": "triangle"}]"#).unwrap_err();
        assert!(matches!(err, FormatError::Schema { ref path, .. } if path == "[0].kind"));
        let err = read_model(r#"[{"kind": "activity", "params": {"partition": "third", "node": "x"}}]"#).unwrap_err();
        assert!(matches!(err, FormatError::Schema { ref path, .. } if path == "[0].params.partition"), "{err:?}");
    }

    #[test]
    fn network_file_errors() {
        let err = read_network(r#"{"partitions": {"first": ["a"], "second": ["b"]}, "edges": [], "extra": 1}"#)
            .unwrap_err();
        assert!(matches!(err, FormatError::Schema { ref path, .. } if path == "extra"), "{err:?}");
        let err = read_network(
            r#"{"partitions": {"first": ["a"], "second": ["b"]}, "edges": [],
                "attributes": {"first": {"imp": {"kind": "quantitative", "values": {"a": "high"}}}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, FormatError::Schema { ref path, .. } if path == "attributes.first.imp.values.a"));
        let err = read_network(r#"{"partitions": {"first": ["a"], "second": ["b"]}, "edges": [["a", "z"]]}"#)
            .unwrap_err();
        assert!(matches!(err, FormatError::Graph(_)));
    }

    #[test]
    fn tsv_layout() {
        let tsv = statistics_tsv(&["edges".into(), "nodematch(a)".into()], &[StatisticVector(vec![3.0, 1.0])]);
        assert_eq!(tsv, "edges\tnodematch(a)\n3\t1\n");
    }

    fn arb_network() -> impl Strategy<Value = (BipartiteGraph, AttributeTable)> {
        (1usize..5, 1usize..6)
            .prop_flat_map(|(n, m)| {
                (
                    Just((n, m)),
                    prop::collection::vec(any::<bool>(), n * m),
                    prop::collection::vec(prop::option::of(-1e6f64..1e6), n),
                    prop::collection::vec(prop::option::of("[a-zé]{1,4}"), m),
                )
            })
            .prop_map(|((n, m), cells, quant, cat)| {
                let first: Vec<String> = (0..n).map(|i| format!("skill \"{i}\"")).collect();
                let second: Vec<String> = (0..m).map(|k| format!("doc/{k}")).collect();
                let edges = (0..n * m).filter(|&d| cells[d]).map(|d| (d / m, d % m));
                let g = BipartiteGraph::new(first, second, edges).unwrap();
                let mut attrs = AttributeTable::default();
                attrs.insert(Side::First, "imp", AttributeValues::Quantitative(quant)).unwrap();
                attrs.insert(Side::Second, "region", AttributeValues::Categorical(cat)).unwrap();
                (g, attrs)
            })
    }

    proptest! {
        #[test]
        fn network_round_trip((g, attrs) in arb_network()) {
            let text = write_network(&g, &attrs);
            let (g2, attrs2) = read_network(&text).unwrap();
            prop_assert_eq!(&g, &g2);
            prop_assert_eq!(&attrs, &attrs2);
            prop_assert_eq!(write_network(&g2, &attrs2), text);
        }
    }
}
