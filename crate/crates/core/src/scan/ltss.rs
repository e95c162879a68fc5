//! Per-sample subset scan over the nodes of one layer.
//!
//! With `n_alpha = n = k` the scan statistics are decreasing in `alpha`, so
//! among all node subsets of size `k` the best one is the `k` smallest
//! p-values. Sorting once and scoring every prefix therefore finds the
//! optimum over all `2^J - 1` subsets in `O(J log J)`.

use serde::{Deserialize, Serialize};

use super::npss::Statistic;
use super::pvalues::PValueMatrix;
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_ALPHA_MAX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub alpha_max: f64,
    pub statistic: Statistic,
    /// Layers to scan; empty means every layer in the store.
    pub layers: Vec<String>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            alpha_max: DEFAULT_ALPHA_MAX,
            statistic: Statistic::BerkJones,
            layers: Vec::new(),
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_max > 0.0 && self.alpha_max <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha_max must lie in (0, 1], got {}",
                self.alpha_max
            )));
        }
        Ok(())
    }
}

/// Best-scoring node subset of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub score: f64,
    pub k_star: usize,
    /// Largest p-value in the chosen subset; `alpha_max` when the subset is
    /// empty.
    pub alpha_star: f64,
    pub node_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScan {
    pub sample_id: String,
    #[serde(flatten)]
    pub subset: SubsetScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub layer_name: String,
    pub records: Vec<SampleScan>,
}

impl ScanResult {
    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.subset.score).collect()
    }
}

/// One point of the prefix curve: the `k` smallest retained p-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefixPoint {
    pub k: usize,
    pub alpha: f64,
    pub score: f64,
}

/// Node indices with p-value `< alpha_max`, ordered by (p-value, index).
fn retained_order(pvalues: &[f64], alpha_max: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pvalues.len()).filter(|&j| pvalues[j] < alpha_max).collect();
    // stable sort keeps ascending node index within equal p-values
    idx.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    idx
}

/// Scores of every prefix of the sorted retained p-values.
pub fn prefix_curve(pvalues: &[f64], alpha_max: f64, statistic: Statistic) -> Vec<PrefixPoint> {
    retained_order(pvalues, alpha_max)
        .iter()
        .enumerate()
        .map(|(pos, &j)| {
            let k = pos + 1;
            let alpha = pvalues[j];
            PrefixPoint {
                k,
                alpha,
                score: statistic.score_unchecked(alpha, k, k),
            }
        })
        .collect()
}

/// Scans one sample's p-values. Ties between prefix scores resolve to the
/// smallest `k`.
pub fn scan_pvalues(pvalues: &[f64], alpha_max: f64, statistic: Statistic) -> SubsetScore {
    let order = retained_order(pvalues, alpha_max);
    let mut best = SubsetScore {
        score: 0.0,
        k_star: 0,
        alpha_star: alpha_max,
        node_indices: Vec::new(),
    };
    let mut best_k = 0;
    for (pos, &j) in order.iter().enumerate() {
        let k = pos + 1;
        let alpha = pvalues[j];
        let score = statistic.score_unchecked(alpha, k, k);
        if best_k == 0 || score > best.score {
            best.score = score;
            best.alpha_star = alpha;
            best_k = k;
        }
    }
    best.k_star = best_k;
    best.node_indices = order[..best_k].to_vec();
    best
}

/// Scans every row of `pvals`.
pub fn scan_layer(
    pvals: &PValueMatrix,
    sample_ids: &[String],
    config: &ScanConfig,
) -> Result<ScanResult> {
    config.validate()?;
    if sample_ids.len() != pvals.rows() {
        return Err(Error::Shape(format!(
            "{} sample ids for {} p-value rows",
            sample_ids.len(),
            pvals.rows()
        )));
    }
    let records = par::map_range(pvals.rows(), |i| SampleScan {
        sample_id: sample_ids[i].clone(),
        subset: scan_pvalues(&pvals.row(i), config.alpha_max, config.statistic),
    });
    Ok(ScanResult {
        layer_name: pvals.layer_name().to_owned(),
        records,
    })
}
