use rayon::prelude::*;

use super::dataset::{CommitSample, Dataset, FileVersion};
use crate::alpha::{build_alpha_ast, match_nodes, merge_commit_graph, AlphaAst, AlphaError};
use crate::ast::{parse_source, Ast, SyntaxError};
use crate::embedding::{feature_matrix, EmbeddingTable};
use crate::gat::GraphInput;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("sample {sample}: {path} ({side} version): {source}")]
    Syntax {
        sample: String,
        path: String,
        side: &'static str,
        source: SyntaxError,
    },
    #[error("sample {sample}: {source}")]
    Alpha { sample: String, source: AlphaError },
}

pub fn file_tree(version: &FileVersion, path: &str) -> Result<Ast, SyntaxError> {
    match version {
        FileVersion::Source(text) => parse_source(text, path),
        FileVersion::Tree(ast) => Ok(ast.clone()),
    }
}

/// Parses, matches and merges every file of a commit into one graph of at
/// most `node_cap` nodes.
pub fn commit_graph(sample: &CommitSample, node_cap: usize) -> Result<AlphaAst, PipelineError> {
    let mut per_file = Vec::with_capacity(sample.files.len());
    for f in &sample.files {
        let syntax = |side, source| PipelineError::Syntax {
            sample: sample.id.clone(),
            path: f.path.clone(),
            side,
            source,
        };
        let old = file_tree(&f.old, &f.path).map_err(|e| syntax("old", e))?;
        let new = file_tree(&f.new, &f.path).map_err(|e| syntax("new", e))?;
        let mapping = match_nodes(&old, &new);
        let mut g =
            build_alpha_ast(&old, &new, &mapping).map_err(|source| PipelineError::Alpha {
                sample: sample.id.clone(),
                source,
            })?;
        g.file_path = f.path.clone();
        per_file.push(g);
    }
    let merged = merge_commit_graph(per_file).map_err(|source| PipelineError::Alpha {
        sample: sample.id.clone(),
        source,
    })?;
    Ok(merged.truncate_to_cap(node_cap))
}

/// [`commit_graph`] for every sample, in dataset order.
pub fn commit_graphs(ds: &Dataset, node_cap: usize) -> Result<Vec<AlphaAst>, PipelineError> {
    ds.samples
        .par_iter()
        .map(|s| commit_graph(s, node_cap))
        .collect()
}

/// A commit ready for the model.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    pub id: String,
    pub project: String,
    pub label: bool,
    pub changed_loc: u64,
    pub input: GraphInput,
}

pub fn labeled_graph(
    sample: &CommitSample,
    graph: &AlphaAst,
    table: &EmbeddingTable,
) -> LabeledGraph {
    let input = GraphInput::from_alpha(graph, feature_matrix(graph, table))
        .expect("one feature row per graph node");
    LabeledGraph {
        id: sample.id.clone(),
        project: sample.project.clone(),
        label: sample.label,
        changed_loc: graph.changed_loc,
        input,
    }
}

pub fn labeled_graphs(
    ds: &Dataset,
    graphs: &[AlphaAst],
    table: &EmbeddingTable,
) -> Vec<LabeledGraph> {
    ds.samples
        .par_iter()
        .zip(graphs.par_iter())
        .map(|(s, g)| labeled_graph(s, g, table))
        .collect()
}
