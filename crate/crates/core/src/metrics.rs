//! Anomaly scoring and binary detection metrics.
//!
//! `fe` is `FP / (TP + FP)` (the false-discovery rate, reported here as the
//! false error) and `me` is `FN / (TP + FN)`, both in percent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a class-probability vector becomes an anomaly score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreRule {
    /// `1 − max_c q_c`.
    #[default]
    MaxSoftmax,
    /// Euclidean distance from the mean probability vector of the predicted
    /// class, estimated on reference normal samples.
    CentroidDistance,
}

/// How the FE/ME operating point is picked.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum ThresholdRule {
    /// Threshold maximising `TP − FP` on the scored set.
    #[default]
    MaxTpMinusFp,
    Fixed(f64),
}

/// Scores (higher = more anomalous) with binary labels (`true` = anomaly).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Numeric("NaN anomaly score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l).count();
        (pos, self.labels.len() - pos)
    }

    fn require_both_classes(&self, metric: &str) -> Result<(usize, usize)> {
        let (pos, neg) = self.class_counts();
        if pos == 0 || neg == 0 {
            return Err(Error::UndefinedMetric(format!(
                "{metric} needs both normal and anomaly samples ({pos} anomalies, {neg} normals)"
            )));
        }
        Ok((pos, neg))
    }

    /// Indices sorted by descending score.
    fn descending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn anomaly_score(class_probs: &[f64]) -> f64 {
    1.0 - class_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Per-class mean probability vectors, grouped by predicted class. Classes
/// never predicted fall back to the one-hot vector.
pub fn class_centroids(reference: &[Vec<f64>], n_classes: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; n_classes]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for q in reference {
        let c = argmax(q);
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(q) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (s, n))| {
            if n == 0 {
                let mut e = vec![0.0; n_classes];
                e[c] = 1.0;
                e
            } else {
                s.into_iter().map(|v| v / n as f64).collect()
            }
        })
        .collect()
}

pub fn centroid_score(class_probs: &[f64], centroids: &[Vec<f64>]) -> f64 {
    let c = argmax(class_probs);
    class_probs
        .iter()
        .zip(&centroids[c])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Tally with `score >= threshold` predicting an anomaly.
pub fn confusion(set: &ScoredSet, threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&s, &anomaly) in set.scores.iter().zip(&set.labels) {
        match (s >= threshold, anomaly) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// False error, `FP / (TP + FP) · 100`.
pub fn fe(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fp == 0 {
        return Err(Error::UndefinedMetric("FE with no predicted anomalies".into()));
    }
    Ok(c.fp as f64 / (c.tp + c.fp) as f64 * 100.0)
}

/// Missing error, `FN / (TP + FN) · 100`.
pub fn me(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedMetric("ME with no actual anomalies".into()));
    }
    Ok(c.fn_ as f64 / (c.tp + c.fn_) as f64 * 100.0)
}

/// Rank (Mann–Whitney) AUROC with half credit for ties.
pub fn auroc(set: &ScoredSet) -> Result<f64> {
    let (pos, neg) = set.require_both_classes("AUROC")?;
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    // average 1-based rank within tie groups, accumulated for anomalies
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && set.scores[idx[j + 1]] == set.scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        let anomalies = idx[i..=j].iter().filter(|&&k| set.labels[k]).count();
        rank_sum += avg_rank * anomalies as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Average precision: sweep thresholds over the distinct scores from high to
/// low and sum `precision · Δrecall`.
pub fn aupr(set: &ScoredSet) -> Result<f64> {
    let (pos, _) = set.require_both_classes("AUPR")?;
    let idx = set.descending();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let t = set.scores[idx[i]];
        while i < idx.len() && set.scores[idx[i]] == t {
            if set.labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Threshold maximising `TP − FP`; ties go to the higher threshold. A
/// threshold above every score (nothing flagged) is also a candidate.
pub fn best_threshold(set: &ScoredSet) -> f64 {
    let idx = set.descending();
    let mut best = (0i64, f64::INFINITY);
    let (mut tp, mut fp) = (0i64, 0i64);
    let mut i = 0;
    while i < idx.len() {
        let t = set.scores[idx[i]];
        while i < idx.len() && set.scores[idx[i]] == t {
            if set.labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if tp - fp > best.0 {
            best = (tp - fp, t);
        }
    }
    best.1
}

/// FE/ME/AUROC/AUPR for one scored set; undefined metrics are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub fe_pct: Option<f64>,
    pub me_pct: Option<f64>,
    pub auroc: Option<f64>,
    pub aupr: Option<f64>,
}

pub fn evaluate(set: &ScoredSet, rule: ThresholdRule) -> MetricReport {
    let threshold = match rule {
        ThresholdRule::MaxTpMinusFp => best_threshold(set),
        ThresholdRule::Fixed(t) => t,
    };
    let counts = confusion(set, threshold);
    MetricReport {
        threshold,
        counts,
        fe_pct: fe(&counts).ok(),
        me_pct: me(&counts).ok(),
        auroc: auroc(set).ok(),
        aupr: aupr(set).ok(),
    }
}
