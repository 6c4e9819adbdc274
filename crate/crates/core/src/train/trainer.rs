use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pipeline::LabeledGraph;
use super::split::train_projects;
use crate::gat::{
    init_model, loss_and_gradients, predict_logit, weighted_bce, Checkpoint, GatConfig, GatError,
    GatModel,
};
use crate::linalg::sigmoid;
use crate::metrics::{prf1, Confusion};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training data has no samples")]
    EmptyDataset,
    #[error("training data contains only {0} samples")]
    SingleClassDataset(&'static str),
    #[error("bad training configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] GatError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Adam,
    SgdMomentum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Momentum factor for `sgd-momentum`.
    pub momentum: f64,
    /// Share of training projects held out to pick the best epoch.
    pub validation_fraction: f64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            seed: 0,
            optimizer: Optimizer::Adam,
            momentum: 0.9,
            validation_fraction: 0.1,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean weighted cross-entropy over the epoch's batches, per sample.
    pub loss: f64,
    /// F1 of the predictions made while training through the epoch.
    pub f1: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss (the last
    /// epoch when there is no validation slice).
    pub best: Checkpoint,
    pub last: GatModel,
    pub history: Vec<EpochRecord>,
    pub pos_weight: f64,
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "loss", "f1", "val_loss"])?;
    for r in history {
        out.write_record([
            r.epoch.to_string(),
            r.loss.to_string(),
            r.f1.to_string(),
            r.val_loss.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

enum OptState {
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
    Momentum { vel: Vec<f64> },
}

impl OptState {
    fn new(kind: Optimizer, n: usize) -> OptState {
        match kind {
            Optimizer::Adam => OptState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
            Optimizer::SgdMomentum => OptState::Momentum { vel: vec![0.0; n] },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let lr = cfg.learning_rate;
        match self {
            OptState::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - B1.powi(*t);
                let c2 = 1.0 - B2.powi(*t);
                for i in 0..params.len() {
                    let g = grad[i] + cfg.weight_decay * params[i];
                    m[i] = B1 * m[i] + (1.0 - B1) * g;
                    v[i] = B2 * v[i] + (1.0 - B2) * g * g;
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
            OptState::Momentum { vel } => {
                for i in 0..params.len() {
                    let g = grad[i] + cfg.weight_decay * params[i];
                    vel[i] = cfg.momentum * vel[i] + g;
                    params[i] -= lr * vel[i];
                }
            }
        }
    }
}

fn mean_loss(model: &GatModel, items: &[&LabeledGraph], pos_weight: f64) -> Result<f64, GatError> {
    let mut total = 0.0;
    for g in items {
        total += weighted_bce(predict_logit(model, &g.input)?, g.label, pos_weight);
    }
    Ok(total / items.len() as f64)
}

/// Holds out whole projects for validation when that leaves both classes on
/// both sides; otherwise trains on everything.
fn validation_split<'a>(
    items: &'a [LabeledGraph],
    cfg: &TrainConfig,
) -> (Vec<&'a LabeledGraph>, Vec<&'a LabeledGraph>) {
    let all: Vec<&LabeledGraph> = items.iter().collect();
    if cfg.validation_fraction <= 0.0 {
        return (all, Vec::new());
    }
    let projects: Vec<String> = items.iter().map(|g| g.project.clone()).collect();
    let Ok(keep) = train_projects(&projects, 1.0 - cfg.validation_fraction, cfg.seed) else {
        return (all, Vec::new());
    };
    let (fit, val): (Vec<&LabeledGraph>, Vec<&LabeledGraph>) =
        all.iter().partition(|g| keep.contains(&g.project));
    let both = |s: &[&LabeledGraph]| s.iter().any(|g| g.label) && s.iter().any(|g| !g.label);
    if both(&fit) && both(&val) {
        (fit, val)
    } else {
        (all, Vec::new())
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Mini-batch training with a project-held-out validation slice.
pub fn train_model(
    items: &[LabeledGraph],
    cfg: &TrainConfig,
    model_cfg: &GatConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if items.iter().all(|g| g.label) {
        return Err(TrainError::SingleClassDataset("fixing"));
    }
    if items.iter().all(|g| !g.label) {
        return Err(TrainError::SingleClassDataset("non-fixing"));
    }
    let d_in = items[0].input.features.cols();
    if items.iter().any(|g| g.input.features.cols() != d_in) {
        return Err(GatError::ShapeMismatch("samples have different feature widths".into()).into());
    }
    let model_cfg = GatConfig {
        d_in,
        ..model_cfg.clone()
    };
    let mut model = init_model(&model_cfg)?;

    let (fit, val) = validation_split(items, cfg);
    let pos = fit.iter().filter(|g| g.label).count();
    let pos_weight = (fit.len() - pos) as f64 / pos as f64;

    let mut flat = model.params.to_flat();
    let mut opt = OptState::new(cfg.optimizer, flat.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..fit.len()).collect();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let mut loss_sum = 0.0;
        let mut outcomes = Vec::with_capacity(fit.len());
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk
                .iter()
                .map(|&i| (&fit[i].input, fit[i].label))
                .collect();
            let res = loss_and_gradients(&model, &batch, pos_weight)?;
            loss_sum += res.loss * chunk.len() as f64;
            for (&(_, label), logit) in batch.iter().zip(&res.logits) {
                outcomes.push((sigmoid(*logit) >= cfg.threshold, label));
            }
            opt.step(&mut flat, &res.gradients.to_flat(), cfg);
            model.params.load_flat(&flat)?;
        }
        let (_, _, f1) = prf1(&Confusion::from_pairs(outcomes));
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(&model, &val, pos_weight)?)
        };
        let record = EpochRecord {
            epoch,
            loss: loss_sum / fit.len() as f64,
            f1,
            val_loss,
        };
        let key = val_loss.unwrap_or(f64::NEG_INFINITY);
        if best
            .as_ref()
            .is_none_or(|(b, _)| key < *b || val_loss.is_none())
        {
            let mut metrics = BTreeMap::new();
            metrics.insert("train_loss".to_string(), record.loss);
            metrics.insert("train_f1".to_string(), record.f1);
            if let Some(v) = val_loss {
                metrics.insert("val_loss".to_string(), v);
            }
            best = Some((
                key,
                Checkpoint {
                    model: model.clone(),
                    epoch,
                    metrics,
                },
            ));
        }
        history.push(record);
    }
    Ok(TrainOutcome {
        best: best.expect("at least one epoch").1,
        last: model,
        history,
        pos_weight,
    })
}
