//! Node-content embeddings and initial node features.
//!
//! Every graph node contributes a short token sequence (its kind plus the
//! sub-words of its label). Skip-gram vectors are trained over the
//! per-graph token sequences; a node's content vector is the mean of its
//! token vectors, and the node feature appends the one-hot change
//! annotation.

mod io;
mod skipgram;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::alpha::{AlphaAst, AlphaNode};
use crate::linalg::Matrix;

pub use io::{read_embeddings, write_embeddings, EMBEDDING_MAGIC};
pub use skipgram::{sgns_gradients, sgns_objective, train_skipgram, SgnsGradients};

pub const UNK: &str = "<UNK>";

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("no token reaches the minimum count; the vocabulary is empty")]
    EmptyCorpus,
    #[error("corpus has no (center, context) pair: {0}")]
    DegenerateCorpus(String),
    #[error("embedding file: {0}")]
    Format(String),
    #[error("unsupported embedding file version {0:?}")]
    Version(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 2,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

/// Splits an identifier-like label into lowercase sub-words at underscores,
/// whitespace and camelCase boundaries (`maxRetryCount`, `HTTPServer`).
pub fn split_label(label: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in label.split(|c: char| c == '_' || c.is_whitespace()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = cur.is_uppercase()
                && ((prev.is_lowercase() || prev.is_ascii_digit())
                    || (prev.is_uppercase() && next_lower));
            if boundary {
                out.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        if start < chars.len() {
            out.push(chars[start..].iter().collect::<String>().to_lowercase());
        }
    }
    if out.is_empty() && !label.is_empty() {
        out.push(label.to_lowercase());
    }
    out
}

/// `[kind]` for unlabeled nodes, `[kind, sub-words...]` otherwise.
pub fn node_tokens(node: &AlphaNode) -> Vec<String> {
    let mut tokens = vec![node.kind.as_str().to_string()];
    if let Some(label) = &node.label {
        tokens.extend(split_label(label));
    }
    tokens
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Keeps tokens with at least `min_count` occurrences, indexed by
    /// descending frequency then lexicographically.
    pub fn from_counts(counts: &HashMap<String, u64>, min_count: u64) -> Vocab {
        let mut kept: Vec<(&String, u64)> = counts
            .iter()
            .filter(|(_, &c)| c >= min_count)
            .map(|(t, &c)| (t, c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Vocab::from_tokens(
            kept.iter().map(|(t, _)| (*t).clone()).collect(),
            kept.iter().map(|(_, c)| *c).collect(),
        )
    }

    pub(crate) fn from_tokens(tokens: Vec<String>, freqs: Vec<u64>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            tokens,
            freqs,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn freq(&self, i: usize) -> u64 {
        self.freqs[i]
    }
}

#[derive(Clone, Debug)]
pub struct TokenCorpus {
    /// One sentence per graph; out-of-vocabulary tokens appear as [`UNK`].
    pub sentences: Vec<Vec<String>>,
    pub vocab: Vocab,
}

impl TokenCorpus {
    /// Sentences as vocabulary indices with unknown tokens removed.
    pub fn indexed_sentences(&self) -> Vec<Vec<usize>> {
        self.sentences
            .iter()
            .map(|s| s.iter().filter_map(|t| self.vocab.index_of(t)).collect())
            .collect()
    }
}

pub fn graph_sentence(graph: &AlphaAst) -> Vec<String> {
    graph.nodes.iter().flat_map(node_tokens).collect()
}

/// One sentence per graph, in node id order.
pub fn build_corpus(graphs: &[AlphaAst], min_count: u64) -> Result<TokenCorpus, EmbeddingError> {
    TokenCorpus::from_sentences(graphs.iter().map(graph_sentence).collect(), min_count)
}

impl TokenCorpus {
    pub fn from_sentences(
        raw: Vec<Vec<String>>,
        min_count: u64,
    ) -> Result<TokenCorpus, EmbeddingError> {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for s in &raw {
            for t in s {
                *counts.entry(t.clone()).or_default() += 1;
            }
        }
        let vocab = Vocab::from_counts(&counts, min_count);
        if vocab.is_empty() {
            return Err(EmbeddingError::EmptyCorpus);
        }
        let sentences = raw
            .into_iter()
            .map(|s| {
                s.into_iter()
                    .map(|t| {
                        if vocab.index_of(&t).is_some() {
                            t
                        } else {
                            UNK.to_string()
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(TokenCorpus { sentences, vocab })
    }
}

/// Trained token vectors with a fallback for unknown tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub vocab: Vocab,
    /// `V × d`, row `i` belongs to `vocab.token(i)`.
    pub vectors: Matrix,
    pub unk_vector: Vec<f64>,
    pub config: SkipGramConfig,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn lookup(&self, token: &str) -> &[f64] {
        match self.vocab.index_of(token) {
            Some(i) => self.vectors.row(i),
            None => &self.unk_vector,
        }
    }

    /// Mean of the token vectors of `tokens`.
    pub fn embed_tokens(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        if tokens.is_empty() {
            out.copy_from_slice(&self.unk_vector);
            return out;
        }
        for t in tokens {
            for (o, v) in out.iter_mut().zip(self.lookup(t)) {
                *o += v;
            }
        }
        let inv = 1.0 / tokens.len() as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        out
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        let (x, y) = (self.lookup(a), self.lookup(b));
        let dot = crate::linalg::dot(x, y);
        let nx = crate::linalg::dot(x, x).sqrt();
        let ny = crate::linalg::dot(y, y).sqrt();
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            dot / (nx * ny)
        }
    }
}

/// Initial feature of one node: content vector followed by the annotation
/// one-hot, `d + 3` entries in total.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeature(pub Vec<f64>);

impl NodeFeature {
    pub fn annotation_block(&self) -> &[f64] {
        &self.0[self.0.len() - 3..]
    }
}

pub fn assemble_features(graph: &AlphaAst, table: &EmbeddingTable) -> Vec<NodeFeature> {
    graph
        .nodes
        .iter()
        .map(|n| {
            let mut h = table.embed_tokens(&node_tokens(n));
            h.extend_from_slice(&n.annotation.one_hot());
            NodeFeature(h)
        })
        .collect()
}

/// Same as [`assemble_features`] but packed as an `n × (d + 3)` matrix.
pub fn feature_matrix(graph: &AlphaAst, table: &EmbeddingTable) -> Matrix {
    let d = table.dim() + 3;
    let mut m = Matrix::zeros(graph.nodes.len(), d);
    for (i, f) in assemble_features(graph, table).into_iter().enumerate() {
        m.row_mut(i).copy_from_slice(&f.0);
    }
    m
}
