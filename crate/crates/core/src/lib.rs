pub mod attributes;
pub mod descriptives;
pub mod estimation;
pub mod gof;
pub mod graph;
pub mod ingestion;
pub mod io;
pub mod linalg;
pub mod sampler;
pub mod statistics;
