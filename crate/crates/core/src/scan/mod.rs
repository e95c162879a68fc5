//! Subset scanning of layer activations: empirical p-values, scan
//! statistics, the per-sample prefix scan, and cross-layer aggregation.

mod aggregate;
mod ltss;
mod npss;
mod pvalues;

pub use aggregate::{aggregate_scores, threshold_detect, Aggregation, DetectionRecord, DetectionTable};
pub use ltss::{
    prefix_curve, scan_layer, scan_pvalues, PrefixPoint, SampleScan, ScanConfig, ScanResult,
    SubsetScore, DEFAULT_ALPHA_MAX,
};
pub use npss::{npss_score, Statistic};
pub use pvalues::{compute_pvalues, BackgroundModel, PValueMatrix};
