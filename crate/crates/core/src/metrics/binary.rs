//! Binary detection metrics with OOD as the positive class and "higher
//! score = more likely OOD".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("score {bad} is not a number")));
    }
    Ok(())
}

/// Area under the ROC curve via the Mann-Whitney rank sum; tied pairs count
/// one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum keeps average ranks of tie groups integral.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, averaged
        let twice_avg = (start + 1 + end) as u128;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        start = end;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    // 2U = 2R - n_pos (n_pos + 1)
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2 * np * nn) as f64)
}

/// Maximum F1 over thresholds for the rule `score > threshold`.
///
/// Candidate thresholds are `-inf`, the midpoints between consecutive
/// distinct scores, and `+inf`. Equal F1 values resolve to the higher
/// threshold. Returns `(f1, threshold)`.
pub fn max_f1(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("max F1 needs at least one positive label".to_owned()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let f1 = |tp: usize, fp: usize| {
        if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + (n_pos - tp)) as f64
        }
    };

    // Walk thresholds from high to low; predicted positives grow one tie
    // group at a time.
    let mut best = (f1(0, 0), f64::INFINITY);
    let (mut tp, mut fp) = (0, 0);
    let mut start = 0;
    while start < order.len() {
        let value = scores[order[start]];
        let mut end = start;
        while end < order.len() && scores[order[end]] == value {
            if labels[order[end]] {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        let threshold = match order.get(end) {
            Some(&next) => midpoint(scores[next], value),
            None => f64::NEG_INFINITY,
        };
        let score = f1(tp, fp);
        if score > best.0 {
            best = (score, threshold);
        }
        start = end;
    }
    Ok(best)
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub auroc: f64,
    pub max_f1: f64,
    #[serde(with = "crate::metrics::extended_float")]
    pub best_threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl MetricBundle {
    pub fn compute(scores: &[f64], labels: &[bool]) -> Result<Self> {
        let auroc = auroc(scores, labels)?;
        let (max_f1, best_threshold) = max_f1(scores, labels)?;
        let n_pos = labels.iter().filter(|&&l| l).count();
        Ok(Self {
            auroc,
            max_f1,
            best_threshold,
            n_pos,
            n_neg: labels.len() - n_pos,
        })
    }
}
