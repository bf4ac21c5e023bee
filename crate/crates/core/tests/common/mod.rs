#![allow(dead_code)]

use std::path::PathBuf;

use skillnet::graph::{BipartiteGraph, Side};
use skillnet::statistics::{ModelSpec, Term};

/// Skills with their published degrees, in published order.
pub const TABLE_ONE: [(&str, usize, f64); 28] = [
    ("Management of personnel resources", 239, 11.33),
    ("Judgment and decision making", 214, 10.14),
    ("Coordination", 173, 8.20),
    ("Active listening", 133, 6.30),
    ("Management of financial resources", 129, 6.11),
    ("Instructing", 113, 5.36),
    ("Time management", 103, 4.88),
    ("Mathematics", 92, 4.36),
    ("Programming", 90, 4.27),
    ("Active learning", 83, 3.93),
    ("Learning strategies", 78, 3.70),
    ("Quality control analysis", 75, 3.55),
    ("Management of material resources", 75, 3.55),
    ("Monitoring", 71, 3.36),
    ("Systems evaluation", 69, 3.27),
    ("Science", 55, 2.61),
    ("Speaking", 53, 2.51),
    ("Reading comprehension", 51, 2.42),
    ("Critical thinking", 50, 2.37),
    ("Complex problem solving", 41, 1.94),
    ("Service orientation", 37, 1.75),
    ("Persuasion", 31, 1.47),
    ("Technology design", 17, 0.81),
    ("Negotiation", 13, 0.62),
    ("Writing", 13, 0.62),
    ("Operations monitoring", 6, 0.28),
    ("Social perceptiveness", 4, 0.19),
    ("Operations analysis", 2, 0.09),
];

pub const BROCHURES: usize = 258;

/// 28 x 258 network with the published skill degrees. Each skill's
/// brochures are a contiguous block continuing where the previous skill's
/// block ended, so brochure degrees stay within one of each other.
pub fn synthetic_network() -> BipartiteGraph {
    let first: Vec<String> = TABLE_ONE.iter().map(|t| t.0.to_owned()).collect();
    let second: Vec<String> = (1..=BROCHURES).map(|k| format!("brochure {k:03}")).collect();
    let mut edges = Vec::new();
    let mut offset = 0;
    for (i, &(_, degree, _)) in TABLE_ONE.iter().enumerate() {
        for t in 0..degree {
            edges.push((i, (offset + t) % BROCHURES));
        }
        offset += degree;
    }
    BipartiteGraph::new(first, second, edges).unwrap()
}

/// Edges plus activity terms for the `top` most popular skills.
pub fn popularity_model(top: usize) -> ModelSpec {
    let mut terms = vec![Term::Edges];
    terms.extend(TABLE_ONE[..top].iter().map(|t| Term::activity(Side::First, t.0)));
    ModelSpec::from_terms(terms).unwrap()
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ingestion")
}

/// Independent matcher: lowercase, every non-letter (apostrophes aside)
/// becomes a space, then look for the space-padded phrase.
pub fn substring_match(text: &str, phrase: &str) -> bool {
    let normalize = |s: &str| {
        let cleaned: String =
            s.to_lowercase().chars().map(|c| if c.is_alphabetic() || c == '\'' { c } else { ' ' }).collect();
        format!(" {} ", cleaned.split_whitespace().collect::<Vec<_>>().join(" "))
    };
    normalize(text).contains(&normalize(phrase))
}

/// Expected incidence of the bundled fixture, read off the documents by eye.
pub const FIXTURE_INCIDENCE: [(&str, &[&str]); 5] = [
    ("Coordination", &["d1", "d4"]),
    ("Time management", &["d1"]),
    ("Active listening", &["d3", "d5"]),
    ("Mathematics", &["d2", "d5"]),
    ("Negotiation", &["d2", "d4"]),
];
