//! Datasets, splits, the training loop and the end-to-end fit/score helpers
//! used by the command-line tool.

mod dataset;
mod pipeline;
mod split;
mod trainer;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha::DEFAULT_NODE_CAP;
use crate::embedding::{
    build_corpus, train_skipgram, EmbeddingError, EmbeddingTable, SkipGramConfig,
};
use crate::gat::{predict, GatConfig, GatError, GatModel};
use crate::metrics::{evaluate, MetricsError, MetricsReport, ScoredCommit};

pub use dataset::{
    load_dataset, load_dataset_file, CommitSample, Dataset, DatasetError, FileChange, FileVersion,
    SplitTag,
};
pub use pipeline::{
    commit_graph, commit_graphs, file_tree, labeled_graph, labeled_graphs, LabeledGraph,
    PipelineError,
};
pub use split::{
    bin_indices, change_size_bins, cross_project_split, fold_indices, sample_changed_loc,
    sensitivity_folds, size_bin, train_projects, SplitError,
};
pub use trainer::{
    train_model, write_history_csv, EpochRecord, Optimizer, TrainConfig, TrainError, TrainOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] GatError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Every knob of an end-to-end run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub embedding: SkipGramConfig,
    pub model: GatConfig,
    pub train: TrainConfig,
    pub node_cap: usize,
    pub train_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embedding: SkipGramConfig::default(),
            model: GatConfig::default(),
            train: TrainConfig::default(),
            node_cap: DEFAULT_NODE_CAP,
            train_fraction: 0.8,
        }
    }
}

impl RunConfig {
    /// Points every component seed at `seed`.
    pub fn with_seed(mut self, seed: u64) -> RunConfig {
        self.embedding.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Rejects values no component can run with. `model.d_in` is not
    /// checked: it is taken from the feature width at training time.
    pub fn validate(&self) -> Result<(), String> {
        let e = &self.embedding;
        for (name, v) in [
            ("embedding.dim", e.dim),
            ("embedding.window", e.window),
            ("embedding.epochs", e.epochs),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(e.learning_rate > 0.0 && e.learning_rate.is_finite()) {
            return Err("embedding.learning_rate must be a positive number".into());
        }
        if self.node_cap == 0 {
            return Err("node_cap must be positive".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err("train_fraction must be in (0, 1)".into());
        }
        GatConfig {
            d_in: 1,
            ..self.model.clone()
        }
        .validate()
        .map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())
    }
}

pub struct FittedPipeline {
    pub table: EmbeddingTable,
    pub outcome: TrainOutcome,
}

/// Builds change graphs, trains token embeddings on them and fits the model.
pub fn fit_pipeline(train: &Dataset, cfg: &RunConfig) -> Result<FittedPipeline, RunError> {
    if train.is_empty() {
        return Err(TrainError::EmptyDataset.into());
    }
    match train.class_counts() {
        (0, _) => return Err(TrainError::SingleClassDataset("non-fixing").into()),
        (_, 0) => return Err(TrainError::SingleClassDataset("fixing").into()),
        _ => {}
    }
    let graphs = commit_graphs(train, cfg.node_cap)?;
    let corpus = build_corpus(&graphs, cfg.embedding.min_count)?;
    let table = train_skipgram(&corpus, &cfg.embedding)?;
    let items = labeled_graphs(train, &graphs, &table);
    let outcome = train_model(&items, &cfg.train, &cfg.model)?;
    Ok(FittedPipeline { table, outcome })
}

/// Model probability for every sample, in dataset order.
pub fn score_dataset(
    ds: &Dataset,
    table: &EmbeddingTable,
    model: &GatModel,
    node_cap: usize,
) -> Result<Vec<ScoredCommit>, RunError> {
    ds.samples
        .par_iter()
        .map(|s| {
            let g = commit_graph(s, node_cap)?;
            let item = labeled_graph(s, &g, table);
            Ok(ScoredCommit {
                id: item.id,
                score: predict(model, &item.input)?,
                label: item.label,
                changed_loc: item.changed_loc,
            })
        })
        .collect()
}

/// Scores already-prepared graphs.
pub fn score_graphs(
    items: &[LabeledGraph],
    model: &GatModel,
) -> Result<Vec<ScoredCommit>, GatError> {
    items
        .par_iter()
        .map(|g| {
            Ok(ScoredCommit {
                id: g.id.clone(),
                score: predict(model, &g.input)?,
                label: g.label,
                changed_loc: g.changed_loc,
            })
        })
        .collect()
}

/// Result of training on one cumulative fold.
#[derive(Clone, Debug)]
pub struct FoldResult {
    pub train_size: usize,
    pub report: MetricsReport,
}

/// Trains on `k` nested subsets of `train` and evaluates each model on
/// `test`.
pub fn sensitivity_experiment(
    train: &Dataset,
    test: &Dataset,
    k: usize,
    cfg: &RunConfig,
    levels: &[f64],
) -> Result<Vec<FoldResult>, RunError> {
    let folds = sensitivity_folds(train, k, cfg.train.seed)?;
    folds
        .iter()
        .map(|fold| {
            let fit = fit_pipeline(fold, cfg)?;
            let scored = score_dataset(test, &fit.table, &fit.outcome.best.model, cfg.node_cap)?;
            Ok(FoldResult {
                train_size: fold.len(),
                report: evaluate(&scored, cfg.train.threshold, levels)?,
            })
        })
        .collect()
}
