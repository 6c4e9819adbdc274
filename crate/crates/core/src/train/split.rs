use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{CommitSample, Dataset, FileVersion};
use super::pipeline::{commit_graph, PipelineError};
use crate::alpha::{changed_loc, DEFAULT_NODE_CAP};

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("a cross-project split needs at least 2 projects, found {0}")]
    TooFewProjects(usize),
    #[error("train fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("bin edges must be strictly increasing")]
    BadEdges,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Projects assigned to the training side: the sorted project list is
/// shuffled by `seed` and the first `⌈fraction·P⌉` are kept, leaving at
/// least one project for the other side.
pub fn train_projects(
    projects: &[String],
    fraction: f64,
    seed: u64,
) -> Result<HashSet<String>, SplitError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SplitError::BadFraction(fraction));
    }
    let mut sorted = projects.to_vec();
    sorted.sort();
    sorted.dedup();
    let p = sorted.len();
    if p < 2 {
        return Err(SplitError::TooFewProjects(p));
    }
    sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = ((fraction * p as f64 - 1e-9).ceil() as usize).clamp(1, p - 1);
    Ok(sorted.into_iter().take(take).collect())
}

/// Splits by project so that no project lands on both sides. Sample order
/// is preserved within each side.
pub fn cross_project_split(
    ds: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), SplitError> {
    let keep = train_projects(&ds.projects(), fraction, seed)?;
    let (train, test): (Vec<CommitSample>, Vec<CommitSample>) = ds
        .samples
        .iter()
        .cloned()
        .partition(|s| keep.contains(&s.project));
    Ok((Dataset { samples: train }, Dataset { samples: test }))
}

/// Cumulative index sets `I₁ ⊂ … ⊂ I_k = 0..n`: a seeded shuffle of the
/// indices is cut into `k` near-equal chunks and `I_m` holds the first `m`
/// chunks, sorted ascending.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, SplitError> {
    if k < 2 {
        return Err(SplitError::TooFewFolds(k));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((1..=k)
        .map(|m| {
            let mut idx = order[..m * n / k].to_vec();
            idx.sort_unstable();
            idx
        })
        .collect())
}

pub fn sensitivity_folds(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Dataset>, SplitError> {
    Ok(fold_indices(ds.len(), k, seed)?
        .into_iter()
        .map(|idx| Dataset {
            samples: idx.into_iter().map(|i| ds.samples[i].clone()).collect(),
        })
        .collect())
}

/// Bin of every size for `edges = [e₁, …, e_m]`: bin 0 is `[0, e₁)`, bin
/// `m` is `[e_m, ∞)`.
pub fn size_bin(loc: u64, edges: &[u64]) -> usize {
    edges.partition_point(|&e| e <= loc)
}

fn check_edges(edges: &[u64]) -> Result<(), SplitError> {
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SplitError::BadEdges);
    }
    Ok(())
}

/// Index lists per size bin.
pub fn bin_indices(locs: &[u64], edges: &[u64]) -> Result<Vec<Vec<usize>>, SplitError> {
    check_edges(edges)?;
    let mut bins = vec![Vec::new(); edges.len() + 1];
    for (i, &l) in locs.iter().enumerate() {
        bins[size_bin(l, edges)].push(i);
    }
    Ok(bins)
}

/// Changed lines of a commit. Source pairs use the line diff directly;
/// anything involving a supplied tree goes through the change graph.
pub fn sample_changed_loc(sample: &CommitSample) -> Result<u64, PipelineError> {
    let all_text = sample.files.iter().all(|f| {
        matches!(
            (&f.old, &f.new),
            (FileVersion::Source(_), FileVersion::Source(_))
        )
    });
    if all_text {
        return Ok(sample
            .files
            .iter()
            .map(|f| match (&f.old, &f.new) {
                (FileVersion::Source(a), FileVersion::Source(b)) => changed_loc(a, b),
                _ => unreachable!(),
            })
            .sum());
    }
    commit_graph(sample, DEFAULT_NODE_CAP).map(|g| g.changed_loc)
}

pub fn change_size_bins(ds: &Dataset, edges: &[u64]) -> Result<Vec<Dataset>, SplitError> {
    check_edges(edges)?;
    let locs = ds
        .samples
        .iter()
        .map(sample_changed_loc)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(bin_indices(&locs, edges)?
        .into_iter()
        .map(|idx| Dataset {
            samples: idx.into_iter().map(|i| ds.samples[i].clone()).collect(),
        })
        .collect())
}
