//! Identify vulnerability-fixing commits from the structure of their code
//! changes.
//!
//! The pipeline turns each commit into an annotated change graph
//! ([`alpha::AlphaAst`]) whose nodes and edges are tagged unchanged, added
//! or deleted, embeds node content with skip-gram vectors, runs a graph
//! attention network over the graph and classifies the mean-pooled result.

pub mod alpha;
pub mod ast;
pub mod embedding;
pub mod gat;
pub mod linalg;
pub mod metrics;
pub mod synth;
pub mod train;
