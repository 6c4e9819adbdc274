//! Classification and effort-aware ranking metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no samples to evaluate")]
    EmptySet,
    #[error("AUC needs at least one fixing and one non-fixing commit")]
    SingleClass,
    #[error("no fixing commits in the evaluated set")]
    NoFixingCommits,
    #[error("effort level {0} is outside (0, 100]")]
    InvalidLevel(f64),
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("scores file: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCommit {
    pub id: String,
    pub score: f64,
    /// `true` for a fixing commit.
    #[serde(with = "label_int")]
    pub label: bool,
    pub changed_loc: u64,
}

mod label_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!(
                "label must be 0 or 1, got {other}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Tallies (prediction, truth) pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Confusion {
        let mut c = Confusion::default();
        for (pred, truth) in pairs {
            match (pred, truth) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

/// A commit is predicted fixing when its score is at least `threshold`.
pub fn confusion(scored: &[ScoredCommit], threshold: f64) -> Confusion {
    Confusion::from_pairs(scored.iter().map(|s| (s.score >= threshold, s.label)))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1; every 0/0 is 0.
pub fn prf1(c: &Confusion) -> (f64, f64, f64) {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f1)
}

pub fn accuracy(c: &Confusion) -> Result<f64, MetricsError> {
    if c.total() == 0 {
        return Err(MetricsError::EmptySet);
    }
    Ok(ratio(c.tp + c.tn, c.total()))
}

/// Probability that a random fixing commit scores above a random
/// non-fixing one, ties counting one half.
pub fn auc(scored: &[ScoredCommit]) -> Result<f64, MetricsError> {
    let pos = scored.iter().filter(|s| s.label).count() as u128;
    let neg = scored.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<&ScoredCommit> = scored.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));
    // twice the rank sum of positives, with tied groups at their mean rank
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && order[end].score == order[start].score {
            end += 1;
        }
        let doubled_mean = (start + 1 + end) as u128;
        let group_pos = order[start..end].iter().filter(|s| s.label).count() as u128;
        doubled_rank_sum += group_pos * doubled_mean;
        start = end;
    }
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    Ok(doubled_u as f64 / (2 * pos * neg) as f64)
}

/// Ranking by descending score (ties by ascending id), the share of all
/// fixing commits found before the inspected changed lines exceed `level`
/// percent of the total.
pub fn cost_effort_at(scored: &[ScoredCommit], level: f64) -> Result<f64, MetricsError> {
    if !(level > 0.0 && level <= 100.0) {
        return Err(MetricsError::InvalidLevel(level));
    }
    let fixing = scored.iter().filter(|s| s.label).count();
    if fixing == 0 {
        return Err(MetricsError::NoFixingCommits);
    }
    let total: u64 = scored.iter().map(|s| s.changed_loc).sum();
    let budget = level * total as f64;
    let mut order: Vec<&ScoredCommit> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    let mut spent: u64 = 0;
    let mut found = 0;
    for s in order {
        spent += s.changed_loc;
        if spent as f64 * 100.0 > budget {
            break;
        }
        found += usize::from(s.label);
    }
    Ok(ratio(found, fixing))
}

/// Ranks starting at 1, tied values sharing their mean rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` when either side is constant or the lengths differ.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub threshold: f64,
    #[serde(flatten)]
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Absent when the set has only one class.
    pub auc: Option<f64>,
    /// Keyed by effort level in percent; absent levels had no fixing commit.
    pub ce_at: BTreeMap<String, f64>,
}

fn level_key(level: f64) -> String {
    format!("{level}")
}

/// Every metric over `scored`. AUC and CE@L are left out when the set does
/// not allow them; the caller decides whether that is an error.
pub fn evaluate(
    scored: &[ScoredCommit],
    threshold: f64,
    levels: &[f64],
) -> Result<MetricsReport, MetricsError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    let counts = confusion(scored, threshold);
    let acc = accuracy(&counts)?;
    let (precision, recall, f1) = prf1(&counts);
    let auc = match auc(scored) {
        Ok(v) => Some(v),
        Err(MetricsError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    let mut ce_at = BTreeMap::new();
    for &l in levels {
        match cost_effort_at(scored, l) {
            Ok(v) => {
                ce_at.insert(level_key(l), v);
            }
            Err(MetricsError::NoFixingCommits) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(MetricsReport {
        n: scored.len(),
        threshold,
        counts,
        precision,
        recall,
        f1,
        accuracy: acc,
        auc,
        ce_at,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Two aligned columns, one metric per line.
    pub fn to_table(&self) -> String {
        let fmt = |v: f64| format!("{v:.4}");
        let mut rows: Vec<(String, String)> = vec![
            ("n".into(), self.n.to_string()),
            ("threshold".into(), fmt(self.threshold)),
            ("tp".into(), self.counts.tp.to_string()),
            ("fp".into(), self.counts.fp.to_string()),
            ("tn".into(), self.counts.tn.to_string()),
            ("fn".into(), self.counts.fn_.to_string()),
            ("precision".into(), fmt(self.precision)),
            ("recall".into(), fmt(self.recall)),
            ("f1".into(), fmt(self.f1)),
            ("accuracy".into(), fmt(self.accuracy)),
            ("auc".into(), self.auc.map_or_else(|| "n/a".into(), fmt)),
        ];
        let mut ce: Vec<(&String, &f64)> = self.ce_at.iter().collect();
        ce.sort_by(|a, b| {
            let (x, y) = (
                a.0.parse::<f64>().unwrap_or(0.0),
                b.0.parse::<f64>().unwrap_or(0.0),
            );
            x.total_cmp(&y)
        });
        rows.extend(ce.into_iter().map(|(k, v)| (format!("ce@{k}%"), fmt(*v))));
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>10}");
        }
        out
    }
}

/// Writes `id,score,label,changed_loc` rows with a header.
pub fn write_scores_csv<W: Write>(scored: &[ScoredCommit], w: W) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    for s in scored {
        out.serialize(s)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(r: R) -> Result<Vec<ScoredCommit>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
