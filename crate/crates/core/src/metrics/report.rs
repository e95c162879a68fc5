//! Overall, per-group and per-layer evaluation reports.
//!
//! Groups stratify OOD samples only: each group's metrics pool every ID
//! sample with the OOD samples of that group.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::binary::MetricBundle;
use crate::error::{Error, Result};
use crate::scan::{aggregate_scores, Aggregation, DetectionTable, ScanResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub layer: String,
    #[serde(flatten)]
    pub metrics: MetricBundle,
}

/// A group's AUROC on one layer next to that layer's overall AUROC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGroupDelta {
    pub layer: String,
    pub group: String,
    #[serde(flatten)]
    pub metrics: MetricBundle,
    pub delta_auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub overall: MetricBundle,
    /// Keyed by group; `n_pos` is the group's OOD count.
    pub per_group: BTreeMap<String, MetricBundle>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_layer: Vec<LayerMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layer_group: Vec<LayerGroupDelta>,
}

struct Labelled<'a> {
    score: f64,
    is_ood: bool,
    group: Option<&'a str>,
}

fn group_metrics(rows: &[Labelled<'_>], groups: &BTreeSet<String>) -> Result<BTreeMap<String, MetricBundle>> {
    let mut out = BTreeMap::new();
    for g in groups {
        let (scores, labels): (Vec<f64>, Vec<bool>) = rows
            .iter()
            .filter(|r| !r.is_ood || r.group == Some(g.as_str()))
            .map(|r| (r.score, r.is_ood))
            .unzip();
        if !labels.iter().any(|&l| l) {
            log::warn!("group `{g}` has no OOD samples; omitted from the report");
            continue;
        }
        out.insert(g.clone(), MetricBundle::compute(&scores, &labels)?);
    }
    Ok(out)
}

fn overall(rows: &[Labelled<'_>]) -> Result<MetricBundle> {
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.is_ood).collect();
    MetricBundle::compute(&scores, &labels)
}

fn known_groups(table: &DetectionTable, ood_groups: &HashMap<String, String>) -> BTreeSet<String> {
    ood_groups
        .values()
        .cloned()
        .chain(table.records().iter().filter_map(|r| r.group.clone()))
        .collect()
}

fn labelled_rows<'a>(
    table: &'a DetectionTable,
    ood_groups: &'a HashMap<String, String>,
) -> Result<Vec<Labelled<'a>>> {
    let mut ungrouped = 0usize;
    let rows = table
        .records()
        .iter()
        .map(|r| {
            let is_ood = r.is_ood.ok_or_else(|| {
                Error::SampleMismatch(format!("sample `{}` has no ground-truth label", r.sample_id))
            })?;
            let group = ood_groups
                .get(&r.sample_id)
                .or(r.group.as_ref())
                .map(String::as_str);
            if is_ood && group.is_none() {
                ungrouped += 1;
            }
            Ok(Labelled {
                score: r.aggregate_score,
                is_ood,
                group,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if ungrouped > 0 && !ood_groups.is_empty() {
        log::warn!("{ungrouped} OOD samples have no group; counted in overall metrics only");
    }
    Ok(rows)
}

/// Overall and per-group metrics of a labelled detection table. Groups come
/// from `ood_groups` first, then from the records themselves.
pub fn stratified_report(
    table: &DetectionTable,
    ood_groups: &HashMap<String, String>,
) -> Result<EvaluationReport> {
    let rows = labelled_rows(table, ood_groups)?;
    Ok(EvaluationReport {
        overall: overall(&rows)?,
        per_group: group_metrics(&rows, &known_groups(table, ood_groups))?,
        per_layer: Vec::new(),
        layer_group: Vec::new(),
    })
}

/// Per-layer metrics plus the summed-score overall and per-group metrics,
/// and for each (layer, group) the group AUROC minus the layer AUROC.
pub fn per_layer_report(
    results: &[ScanResult],
    labels: &HashMap<String, bool>,
    groups: &HashMap<String, String>,
) -> Result<EvaluationReport> {
    let summed = aggregate_scores(results, &Aggregation::Sum)?.with_labels(labels)?;
    let mut report = stratified_report(&summed, groups)?;
    let group_names = known_groups(&summed, groups);

    for res in results {
        let table = aggregate_scores(std::slice::from_ref(res), &Aggregation::Sum)?.with_labels(labels)?;
        let rows = labelled_rows(&table, groups)?;
        let layer_metrics = overall(&rows)?;
        for (group, m) in group_metrics(&rows, &group_names)? {
            report.layer_group.push(LayerGroupDelta {
                layer: res.layer_name.clone(),
                group,
                delta_auroc: m.auroc - layer_metrics.auroc,
                metrics: m,
            });
        }
        report.per_layer.push(LayerMetrics {
            layer: res.layer_name.clone(),
            metrics: layer_metrics,
        });
    }
    Ok(report)
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

pub const REPORT_CSV_HEADER: [&str; 8] = [
    "scope",
    "group",
    "layer",
    "auroc",
    "max_f1",
    "best_threshold",
    "n_pos",
    "n_neg",
];

impl EvaluationReport {
    /// Rows of the report CSV in a fixed order: overall, groups, layers,
    /// then (layer, group) pairs.
    fn csv_rows(&self) -> Vec<(&'static str, &str, &str, &MetricBundle)> {
        let mut rows = vec![("overall", "", "", &self.overall)];
        rows.extend(self.per_group.iter().map(|(g, m)| ("group", g.as_str(), "", m)));
        rows.extend(self.per_layer.iter().map(|l| ("layer", "", l.layer.as_str(), &l.metrics)));
        rows.extend(
            self.layer_group
                .iter()
                .map(|d| ("layer_group", d.group.as_str(), d.layer.as_str(), &d.metrics)),
        );
        rows
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::Invariant(format!("CSV serialisation failed: {e}"));
        w.write_record(REPORT_CSV_HEADER).map_err(to_err)?;
        for (scope, group, layer, m) in self.csv_rows() {
            w.write_record([
                scope.to_owned(),
                group.to_owned(),
                layer.to_owned(),
                fmt_float(m.auroc),
                fmt_float(m.max_f1),
                fmt_float(m.best_threshold),
                m.n_pos.to_string(),
                m.n_neg.to_string(),
            ])
            .map_err(to_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Invariant(format!("CSV serialisation failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Invariant(format!("JSON serialisation failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad report JSON: {e}")))
    }

    /// Fixed-width text table for terminals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:<14} {:<16} {:>7} {:>7} {:>6} {:>6}",
            "scope", "group", "layer", "AUROC", "maxF1", "n_pos", "n_neg"
        );
        for (scope, group, layer, m) in self.csv_rows() {
            let _ = writeln!(
                out,
                "{:<12} {:<14} {:<16} {:>7.3} {:>7.3} {:>6} {:>6}",
                scope, group, layer, m.auroc, m.max_f1, m.n_pos, m.n_neg
            );
        }
        out
    }
}

/// Mean and sample standard deviation of one report row across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scope: String,
    pub group: String,
    pub layer: String,
    pub runs: usize,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub max_f1_mean: f64,
    pub max_f1_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Combines reports from repeated runs row by row. Rows missing from some
/// runs are summarised over the runs that have them.
pub fn summarize_runs(reports: &[EvaluationReport]) -> Result<Vec<SummaryRow>> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no run reports to aggregate".to_owned()));
    }
    let mut keyed: Vec<((String, String, String), Vec<(f64, f64)>)> = Vec::new();
    for report in reports {
        for (scope, group, layer, m) in report.csv_rows() {
            let key = (scope.to_owned(), group.to_owned(), layer.to_owned());
            match keyed.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push((m.auroc, m.max_f1)),
                None => keyed.push((key, vec![(m.auroc, m.max_f1)])),
            }
        }
    }
    Ok(keyed
        .into_iter()
        .map(|((scope, group, layer), vals)| {
            let aurocs: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let f1s: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let (auroc_mean, auroc_std) = mean_std(&aurocs);
            let (max_f1_mean, max_f1_std) = mean_std(&f1s);
            SummaryRow {
                scope,
                group,
                layer,
                runs: vals.len(),
                auroc_mean,
                auroc_std,
                max_f1_mean,
                max_f1_std,
            }
        })
        .collect())
}
