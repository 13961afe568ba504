//! Anomaly scoring and group-level evaluation.
//!
//! Embeddings are scored with an empirical-CDF tail detector (ECOD
//! style): per dimension, each value's left and right tail
//! probabilities come from tie-averaged ranks; a sample's score is the
//! largest of the left-tail, right-tail, and skewness-directed aggregates
//! of `-log(tail)`. A quantile threshold turns scores into predictions,
//! and predictions are compared against ground-truth groups through the
//! symmetric-overlap completeness score.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("need at least 2 samples, got {m}")]
    TooFewSamples { m: usize },
    #[error("embeddings have inconsistent widths ({a} vs {b})")]
    RaggedEmbeddings { a: usize, b: usize },
    #[error("non-finite value in sample {index}")]
    NonFinite { index: usize },
    #[error("contamination must be in (0, 1), got {0}")]
    BadContamination(f64),
    #[error("match overlap must be in (0, 1], got {0}")]
    BadOverlap(f64),
    #[error("scores are empty")]
    EmptyScores,
    #[error("ground-truth group is empty")]
    EmptyGt,
    #[error("no ground-truth groups")]
    NoGtGroups,
    #[error("{groups} groups but {embeddings} embeddings")]
    LengthMismatch { groups: usize, embeddings: usize },
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
}

/// Tie-averaged ascending ranks (1-based midranks).
fn midranks(values: &[f64]) -> Vec<f64> {
    let m = values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; m];
    let mut s = 0;
    while s < m {
        let mut e = s + 1;
        while e < m && values[order[e]] == values[order[s]] {
            e += 1;
        }
        // Positions s..e (0-based) share the average of ranks s+1..=e.
        let mid = (s + 1 + e) as f64 / 2.0;
        for &i in &order[s..e] {
            ranks[i] = mid;
        }
        s = e;
    }
    ranks
}

/// Empirical-CDF tail anomaly scores; higher means more anomalous.
///
/// Per dimension: `left = midrank/m`, `right = (m+1-midrank)/m`, both
/// floored at `1/(2m)`. Per sample the three aggregates are
/// `O_left = sum_d -log(left)`, `O_right = sum_d -log(right)`, and
/// `O_auto`, which picks the tail on each dimension's skewed side
/// (left when the third central moment is negative, right otherwise);
/// the score is the maximum of the three.
pub fn ecod_scores(embs: &[Vec<f64>]) -> Result<Vec<f64>, ScoringError> {
    let m = embs.len();
    if m < 2 {
        return Err(ScoringError::TooFewSamples { m });
    }
    let d = embs[0].len();
    for (i, e) in embs.iter().enumerate() {
        if e.len() != d {
            return Err(ScoringError::RaggedEmbeddings { a: d, b: e.len() });
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(ScoringError::NonFinite { index: i });
        }
    }
    let floor = 1.0 / (2.0 * m as f64);
    let mut o_left = vec![0.0; m];
    let mut o_right = vec![0.0; m];
    let mut o_auto = vec![0.0; m];
    let mut col = vec![0.0; m];
    for dim in 0..d {
        for (i, e) in embs.iter().enumerate() {
            col[i] = e[dim];
        }
        let ranks = midranks(&col);
        let mean = col.iter().sum::<f64>() / m as f64;
        let m3: f64 = col.iter().map(|v| (v - mean).powi(3)).sum();
        let left_skewed = m3 < 0.0;
        for i in 0..m {
            let left = (ranks[i] / m as f64).max(floor);
            let right = ((m as f64 + 1.0 - ranks[i]) / m as f64).max(floor);
            o_left[i] -= left.ln();
            o_right[i] -= right.ln();
            o_auto[i] -= if left_skewed { left.ln() } else { right.ln() };
        }
    }
    Ok((0..m).map(|i| o_left[i].max(o_right[i]).max(o_auto[i])).collect())
}

/// Threshold at the `(1 - contamination)` empirical quantile
/// (nearest-rank); predictions use the strict `score > tau` rule, so
/// all-equal scores flag nothing.
pub fn threshold_predict(
    scores: &[f64],
    contamination: f64,
) -> Result<(f64, Vec<bool>), ScoringError> {
    if scores.is_empty() {
        return Err(ScoringError::EmptyScores);
    }
    if !(contamination > 0.0 && contamination < 1.0) {
        return Err(ScoringError::BadContamination(contamination));
    }
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(ScoringError::NonFinite { index: i });
    }
    let m = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((1.0 - contamination) * m as f64).ceil() as usize;
    let tau = sorted[rank.clamp(1, m) - 1];
    Ok((tau, scores.iter().map(|&s| s > tau).collect()))
}

fn overlap_score(gt: &HashSet<usize>, pred: &HashSet<usize>) -> f64 {
    let inter = gt.intersection(pred).count() as f64;
    0.5 * (inter / gt.len() as f64 + inter / pred.len() as f64)
}

/// Completeness of one ground-truth group against the predicted groups:
/// `max_i 0.5 * (|P_i ∩ G|/|G| + |P_i ∩ G|/|P_i|)`. Empty predicted list
/// scores 0; empty predicted groups are skipped with a warning.
pub fn completeness_score(
    gt: &[usize],
    predicted: &[Vec<usize>],
) -> Result<f64, ScoringError> {
    if gt.is_empty() {
        return Err(ScoringError::EmptyGt);
    }
    let gt_set: HashSet<usize> = gt.iter().copied().collect();
    let mut best = 0.0f64;
    for p in predicted {
        if p.is_empty() {
            log::warn!("skipping empty predicted group in completeness score");
            continue;
        }
        let p_set: HashSet<usize> = p.iter().copied().collect();
        best = best.max(overlap_score(&gt_set, &p_set));
    }
    Ok(best)
}

/// Mean completeness score over all ground-truth groups.
pub fn completeness_ratio(
    gt: &[Vec<usize>],
    predicted: &[Vec<usize>],
) -> Result<f64, ScoringError> {
    if gt.is_empty() {
        return Err(ScoringError::NoGtGroups);
    }
    let mut acc = 0.0;
    for g in gt {
        acc += completeness_score(g, predicted)?;
    }
    Ok(acc / gt.len() as f64)
}

/// Rank-based (Mann-Whitney) AUC with tie-averaged ranks; `None` when all
/// labels are identical.
pub fn auc_score(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    Some((rank_sum - pos as f64 * (pos as f64 + 1.0) / 2.0) / (pos as f64 * neg as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Expected anomalous fraction; sets the score threshold.
    pub contamination: f64,
    /// Symmetric-overlap level at which a candidate matches a gt group.
    pub match_overlap: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { contamination: 0.1, match_overlap: 0.5 }
    }
}

/// Per-candidate outcome of scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupVerdict {
    pub group_id: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub embedding: Vec<f64>,
    pub score: f64,
    pub predicted: bool,
    pub gt_label: Option<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cr: f64,
    pub f1: f64,
    /// Absent when every candidate carries the same label.
    pub auc: Option<f64>,
    pub tau: f64,
    pub per_group_completeness: Vec<f64>,
    pub confusion: ConfusionCounts,
}

pub struct Evaluation {
    pub verdicts: Vec<GroupVerdict>,
    pub report: EvalReport,
}

/// Full evaluation: ECOD scores, quantile threshold, gt labeling by
/// symmetric overlap >= `match_overlap`, CR over gt groups, F1 and AUC over
/// candidate groups.
pub fn evaluate_groups(
    groups: &[Vec<usize>],
    embeddings: &[Vec<f64>],
    gt: &[Vec<usize>],
    cfg: &EvalConfig,
) -> Result<Evaluation, ScoringError> {
    if groups.len() != embeddings.len() {
        return Err(ScoringError::LengthMismatch {
            groups: groups.len(),
            embeddings: embeddings.len(),
        });
    }
    if gt.is_empty() {
        return Err(ScoringError::NoGtGroups);
    }
    if !(cfg.match_overlap > 0.0 && cfg.match_overlap <= 1.0) {
        return Err(ScoringError::BadOverlap(cfg.match_overlap));
    }
    let scores = ecod_scores(embeddings)?;
    let (tau, predicted) = threshold_predict(&scores, cfg.contamination)?;

    let gt_sets: Vec<HashSet<usize>> = gt
        .iter()
        .map(|g| {
            if g.is_empty() {
                Err(ScoringError::EmptyGt)
            } else {
                Ok(g.iter().copied().collect())
            }
        })
        .collect::<Result<_, _>>()?;
    let labels: Vec<bool> = groups
        .iter()
        .map(|nodes| {
            let set: HashSet<usize> = nodes.iter().copied().collect();
            !set.is_empty()
                && gt_sets.iter().any(|g| overlap_score(g, &set) >= cfg.match_overlap)
        })
        .collect();

    let predicted_sets: Vec<Vec<usize>> = groups
        .iter()
        .zip(&predicted)
        .filter(|(_, &p)| p)
        .map(|(g, _)| g.clone())
        .collect();
    let per_group_completeness: Vec<f64> = gt
        .iter()
        .map(|g| completeness_score(g, &predicted_sets))
        .collect::<Result<_, _>>()?;
    let cr = per_group_completeness.iter().sum::<f64>() / gt.len() as f64;

    let mut confusion = ConfusionCounts::default();
    for (&p, &l) in predicted.iter().zip(&labels) {
        match (p, l) {
            (true, true) => confusion.true_pos += 1,
            (true, false) => confusion.false_pos += 1,
            (false, true) => confusion.false_neg += 1,
            (false, false) => confusion.true_neg += 1,
        }
    }
    let denom = 2 * confusion.true_pos + confusion.false_pos + confusion.false_neg;
    let f1 = if denom == 0 { 0.0 } else { 2.0 * confusion.true_pos as f64 / denom as f64 };
    let auc = auc_score(&scores, &labels);

    let verdicts = (0..groups.len())
        .map(|i| GroupVerdict {
            group_id: i,
            embedding: embeddings[i].clone(),
            score: scores[i],
            predicted: predicted[i],
            gt_label: Some(labels[i]),
        })
        .collect();
    Ok(Evaluation {
        verdicts,
        report: EvalReport { cr, f1, auc, tau, per_group_completeness, confusion },
    })
}

/// CSV export: `group_id,score,predicted,gt_label` (label blank when
/// unknown). Embeddings are exported separately.
pub fn save_verdicts_csv(
    verdicts: &[GroupVerdict],
    path: impl AsRef<Path>,
) -> Result<(), ScoringError> {
    let path = path.as_ref();
    let err = |msg: String| ScoringError::File { path: path.display().to_string(), msg };
    let file = File::create(path).map_err(|e| err(e.to_string()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "group_id,score,predicted,gt_label").map_err(|e| err(e.to_string()))?;
    for v in verdicts {
        let label = v.gt_label.map(|l| l.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{label}", v.group_id, v.score, v.predicted)
            .map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

pub fn save_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<(), ScoringError> {
    let path = path.as_ref();
    let err = |msg: String| ScoringError::File { path: path.display().to_string(), msg };
    let file = File::create(path).map_err(|e| err(e.to_string()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report).map_err(|e| err(e.to_string()))?;
    writeln!(w).map_err(|e| err(e.to_string()))?;
    w.flush().map_err(|e| err(e.to_string()))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport, ScoringError> {
    let path = path.as_ref();
    let err = |msg: String| ScoringError::File { path: path.display().to_string(), msg };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| err(e.to_string()))
}
