//! Network construction from a text corpus and a skills dictionary by
//! keyword-in-context matching, plus attribute loading.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::attributes::{AttributeError, AttributeKind, AttributeTable};
use crate::graph::{BipartiteGraph, GraphError, Side};

#[derive(Debug, thiserror::Error)]
pub enum IngestionError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("dictionary has no skills")]
    EmptyDictionary,
    #[error("skill {0:?} is listed more than once")]
    DuplicateSkill(String),
    #[error("skill {skill:?}: pattern {pattern:?} contains no word tokens")]
    EmptyPattern { skill: String, pattern: String },
    #[error("skill {0:?} has no patterns")]
    NoPatterns(String),
    #[error("document id {0:?} is used more than once")]
    DuplicateDocument(String),
    #[error("invalid dictionary: {0}")]
    Dictionary(String),
    #[error("attribute file line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("label {0:?} names a node in both partitions")]
    AmbiguousLabel(String),
    #[error("label {label:?} (attribute {attribute:?}) is not a node of the network")]
    UnknownLabel { attribute: String, label: String },
    #[error("attribute {name:?} assigns nodes in both partitions")]
    MixedPartitions { name: String },
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Lowercased Unicode words with punctuation and purely numeric tokens
/// dropped. Hyphenated words split into their parts.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words()
        .filter(|w| w.chars().any(char::is_alphabetic))
        .flat_map(|w| w.split('-'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Skill label to match patterns, in file order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillDictionary {
    entries: Vec<SkillEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillEntry {
    pub skill: String,
    /// Tokenized patterns; each is non-empty and lowercase.
    pub patterns: Vec<Vec<String>>,
}

impl SkillDictionary {
    pub fn new<S, P>(entries: impl IntoIterator<Item = (S, Vec<P>)>) -> Result<Self, IngestionError>
    where
        S: Into<String>,
        P: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (skill, patterns) in entries {
            let skill = skill.into();
            if !seen.insert(skill.clone()) {
                return Err(IngestionError::DuplicateSkill(skill));
            }
            if patterns.is_empty() {
                return Err(IngestionError::NoPatterns(skill));
            }
            let mut tokenized = Vec::with_capacity(patterns.len());
            for p in &patterns {
                let tokens = tokenize(p.as_ref());
                if tokens.is_empty() {
                    return Err(IngestionError::EmptyPattern { skill, pattern: p.as_ref().to_owned() });
                }
                tokenized.push(tokens);
            }
            out.push(SkillEntry { skill, patterns: tokenized });
        }
        if out.is_empty() {
            return Err(IngestionError::EmptyDictionary);
        }
        Ok(Self { entries: out })
    }

    /// Parses `{"skill": ["pattern", ...], ...}`, rejecting repeated keys.
    pub fn from_json(text: &str) -> Result<Self, IngestionError> {
        let raw: OrderedEntries =
            serde_json::from_str(text).map_err(|e| IngestionError::Dictionary(e.to_string()))?;
        Self::new(raw.0)
    }

    pub fn entries(&self) -> &[SkillEntry] {
        &self.entries
    }

    pub fn skills(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.skill.clone()).collect()
    }
}

/// JSON object kept as an ordered list so duplicate keys stay visible.
struct OrderedEntries(Vec<(String, Vec<String>)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = OrderedEntries;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping skill labels to lists of patterns")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some(entry) = map.next_entry::<String, Vec<String>>()? {
                    entries.push(entry);
                }
                Ok(OrderedEntries(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Ids of inputs that produced no tokens and were left out.
    pub skipped: Vec<String>,
}

impl Corpus {
    /// Tokenizes `(id, text)` pairs in order.
    pub fn from_texts<I, S, T>(texts: I) -> Result<Self, IngestionError>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut corpus = Corpus::default();
        let mut seen = HashSet::new();
        for (id, text) in texts {
            let id = id.into();
            if !seen.insert(id.clone()) {
                return Err(IngestionError::DuplicateDocument(id));
            }
            let tokens = tokenize(text.as_ref());
            if tokens.is_empty() {
                corpus.skipped.push(id);
            } else {
                corpus.documents.push(Document { id, tokens });
            }
        }
        Ok(corpus)
    }

    /// Reads every `*.txt` file of a directory (not recursive), sorted by
    /// file name. The document id is the file stem.
    pub fn from_dir(dir: &Path) -> Result<Self, IngestionError> {
        let mut paths = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
            let path = entry.map_err(|e| io_error(dir, e))?.path();
            if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
                paths.push(path);
            }
        }
        paths.sort();
        let mut texts = Vec::with_capacity(paths.len());
        for path in &paths {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            texts.push((id, text));
        }
        Self::from_texts(texts)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> IngestionError {
    IngestionError::Io { path: path.to_path_buf(), source }
}

/// Patterns that fired for one (skill, document) edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchRecord {
    pub skill: String,
    pub document: String,
    pub patterns: Vec<String>,
}

fn contains_window(haystack: &[String], needle: &[String]) -> bool {
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Skills form the first partition in dictionary order, documents the
/// second in corpus order. A skill is tied to a document when any of its
/// patterns occurs there as a contiguous token sequence.
pub fn build_network(
    corpus: &Corpus,
    dictionary: &SkillDictionary,
) -> Result<(BipartiteGraph, Vec<MatchRecord>), IngestionError> {
    let mut seen = HashSet::new();
    for d in &corpus.documents {
        if !seen.insert(d.id.as_str()) {
            return Err(IngestionError::DuplicateDocument(d.id.clone()));
        }
    }
    let mut edges = Vec::new();
    let mut report = Vec::new();
    for (i, entry) in dictionary.entries.iter().enumerate() {
        for (k, doc) in corpus.documents.iter().enumerate() {
            let fired: Vec<String> = entry
                .patterns
                .iter()
                .filter(|p| contains_window(&doc.tokens, p))
                .map(|p| p.join(" "))
                .collect();
            if !fired.is_empty() {
                edges.push((i, k));
                report.push(MatchRecord { skill: entry.skill.clone(), document: doc.id.clone(), patterns: fired });
            }
        }
    }
    let graph = BipartiteGraph::new(
        dictionary.skills(),
        corpus.documents.iter().map(|d| d.id.clone()).collect(),
        edges,
    )?;
    Ok((graph, report))
}

/// One `label,attr,value` line of an attribute file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct AttributeRecord {
    pub label: String,
    pub attr: String,
    pub value: String,
}

/// Reads CSV with header `label,attr,value`. Blank values are kept and
/// later treated as missing.
pub fn read_attribute_csv(reader: impl Read) -> Result<Vec<AttributeRecord>, IngestionError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers().map_err(|e| csv_error(&e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["label", "attr", "value"] {
        return Err(IngestionError::Csv { line: 1, message: "header must be label,attr,value".into() });
    }
    csv.deserialize().map(|r| r.map_err(|e| csv_error(&e))).collect()
}

fn csv_error(e: &csv::Error) -> IngestionError {
    IngestionError::Csv { line: e.position().map_or(0, |p| p.line()), message: e.to_string() }
}

/// An attribute that must be defined on every node of one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Requirement {
    pub side: Side,
    pub attribute: String,
    pub kind: Option<AttributeKind>,
}

/// Builds an attribute table from records. The partition of each record is
/// the one containing its label. An attribute is quantitative when every
/// non-blank value parses as a finite number, categorical otherwise.
pub fn attach_attributes(
    graph: &BipartiteGraph,
    records: &[AttributeRecord],
    required: &[Requirement],
) -> Result<AttributeTable, IngestionError> {
    let index: [HashMap<&str, usize>; 2] = Side::BOTH.map(|side| {
        graph.labels(side).iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect()
    });
    type Group<'a> = (Side, Vec<(&'a str, &'a str)>);
    let mut grouped: BTreeMap<&str, Group> = BTreeMap::new();
    let mut order = Vec::new();
    for r in records {
        let side = match (index[0].contains_key(r.label.as_str()), index[1].contains_key(r.label.as_str())) {
            (true, true) => return Err(IngestionError::AmbiguousLabel(r.label.clone())),
            (true, false) => Side::First,
            (false, true) => Side::Second,
            (false, false) => {
                return Err(IngestionError::UnknownLabel { attribute: r.attr.clone(), label: r.label.clone() })
            }
        };
        let entry = grouped.entry(&r.attr).or_insert_with(|| {
            order.push(r.attr.as_str());
            (side, Vec::new())
        });
        if entry.0 != side {
            return Err(IngestionError::MixedPartitions { name: r.attr.clone() });
        }
        if !r.value.is_empty() {
            entry.1.push((&r.label, &r.value));
        }
    }

    let mut table = AttributeTable::default();
    for name in order {
        let (side, pairs) = &grouped[name];
        let numbers: Option<Vec<f64>> =
            pairs.iter().map(|(_, v)| v.parse::<f64>().ok().filter(|x| x.is_finite())).collect();
        match numbers {
            Some(numbers) if !pairs.is_empty() => table.insert_quantitative(
                graph,
                *side,
                name,
                pairs.iter().map(|(l, _)| *l).zip(numbers),
            )?,
            _ => table.insert_categorical(graph, *side, name, pairs.iter().copied())?,
        }
    }
    for req in required {
        let values = table.require_total(graph, req.side, &req.attribute)?;
        if let Some(kind) = req.kind {
            if values.attribute_kind() != kind {
                return Err(AttributeError::KindMismatch {
                    name: req.attribute.clone(),
                    found: values.kind(),
                    expected: kind.as_str(),
                }
                .into());
            }
        }
    }
    Ok(table)
}
