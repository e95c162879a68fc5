//! End-to-end commands over files: scanning activation stores, evaluating
//! detection tables, ITA annotation, CSV import and ODIN tuning. Every
//! command writes its outputs in a fixed order with deterministic
//! formatting, so identical inputs give byte-identical files.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::parse_list;
use crate::error::{Error, Result};
use crate::ita::{self, ItaRecord, PixelMask, RgbImage};
use crate::metrics::{per_layer_report, stratified_report, summarize_runs, EvaluationReport, SummaryRow};
use crate::odin::{
    odin_perturb, temperature_softmax, tune_odin, DifferentiableClassifier, OdinConfig,
    OdinTuning, ReferenceNet, TuneObjective, SOFTMAX_LAYER,
};
use crate::par;
use crate::scan::{
    aggregate_scores, scan_layer, Aggregation, BackgroundModel, DetectionRecord, DetectionTable,
    SampleScan, ScanConfig, ScanResult, SubsetScore,
};
use crate::tensor_io::{self, ActivationSet, LayerActivations, Manifest};

pub const RUN_FILE: &str = "run.json";
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const INPUT_LAYER: &str = "input";

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Invariant(format!("JSON serialisation failed: {e}")))
}

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)
            .map_err(|e| Error::Invariant(format!("CSV serialisation failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Invariant(format!("CSV serialisation failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Invariant(e.to_string()))
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_owned(),
            message: e.to_string(),
        })
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Csv {
        path: path.to_owned(),
        message: format!("missing column `{name}`"),
    })
}

fn parse_bool(value: &str) -> Option<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "ood" | "yes" => Some(true),
        "0" | "false" | "id" | "no" => Some(false),
        _ => None,
    }
}

/// Layers of `set` named in `requested`, or all of them when it is empty.
pub fn select_layers<'a>(set: &'a ActivationSet, requested: &[String]) -> Result<Vec<&'a LayerActivations>> {
    if requested.is_empty() {
        return Ok(set.layers().iter().collect());
    }
    requested.iter().map(|name| set.layer(name)).collect()
}

/// p-values and subset scans of every selected layer of `evaluation`
/// against `background`.
pub fn scan_activation_sets(
    background: &ActivationSet,
    evaluation: &ActivationSet,
    config: &ScanConfig,
) -> Result<Vec<ScanResult>> {
    config.validate()?;
    let eval_layers = select_layers(evaluation, &config.layers)?;
    eval_layers
        .into_iter()
        .map(|eval_layer| {
            let bg_layer = background.layer(eval_layer.name())?;
            let pvals = BackgroundModel::new(bg_layer).pvalues(eval_layer)?;
            scan_layer(&pvals, evaluation.sample_ids(), config)
        })
        .collect()
}

pub const SCAN_CSV_HEADER: [&str; 5] = ["sample_id", "score", "k_star", "alpha_star", "node_indices"];

/// Per-sample scan results; node indices are `;`-separated.
pub fn scan_result_to_csv(result: &ScanResult) -> Result<String> {
    let header = SCAN_CSV_HEADER.iter().map(|s| s.to_string()).collect();
    csv_string(std::iter::once(header).chain(result.records.iter().map(|r| {
        vec![
            r.sample_id.clone(),
            r.subset.score.to_string(),
            r.subset.k_star.to_string(),
            r.subset.alpha_star.to_string(),
            r.subset
                .node_indices
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        ]
    })))
}

pub fn read_scan_result_csv(path: &Path, layer_name: &str) -> Result<ScanResult> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_owned(),
        message,
    };
    let mut reader = open_csv(path)?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        if row.len() != SCAN_CSV_HEADER.len() {
            return Err(csv_err(format!("expected {} columns, found {}", SCAN_CSV_HEADER.len(), row.len())));
        }
        let bad = |what: &str| csv_err(format!("bad {what} for sample `{}`", &row[0]));
        let node_indices = if row[4].is_empty() {
            Vec::new()
        } else {
            row[4]
                .split(';')
                .map(|s| s.parse().map_err(|_| bad("node index")))
                .collect::<Result<Vec<usize>>>()?
        };
        records.push(SampleScan {
            sample_id: row[0].to_owned(),
            subset: SubsetScore {
                score: row[1].parse().map_err(|_| bad("score"))?,
                k_star: row[2].parse().map_err(|_| bad("k_star"))?,
                alpha_star: row[3].parse().map_err(|_| bad("alpha_star"))?,
                node_indices,
            },
        });
    }
    Ok(ScanResult {
        layer_name: layer_name.to_owned(),
        records,
    })
}

pub const DETECTION_CSV_HEADER: [&str; 4] = ["sample_id", "aggregate_score", "is_ood", "group"];

pub fn detection_table_to_csv(table: &DetectionTable) -> Result<String> {
    let header = DETECTION_CSV_HEADER.iter().map(|s| s.to_string()).collect();
    csv_string(std::iter::once(header).chain(table.records().iter().map(|r| {
        vec![
            r.sample_id.clone(),
            r.aggregate_score.to_string(),
            match r.is_ood {
                Some(true) => "1".to_owned(),
                Some(false) => "0".to_owned(),
                None => String::new(),
            },
            r.group.clone().unwrap_or_default(),
        ]
    })))
}

pub fn read_detection_table(path: &Path) -> Result<DetectionTable> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_owned(),
        message,
    };
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    let id_col = column_index(&headers, "sample_id", path)?;
    let score_col = column_index(&headers, "aggregate_score", path)?;
    let ood_col = headers.iter().position(|h| h == "is_ood");
    let group_col = headers.iter().position(|h| h == "group");
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        let id = row.get(id_col).unwrap_or_default().to_owned();
        let score_text = row.get(score_col).unwrap_or_default();
        let aggregate_score = score_text
            .parse()
            .map_err(|_| csv_err(format!("bad score {score_text:?} for `{id}`")))?;
        let is_ood = match ood_col.and_then(|c| row.get(c)).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => Some(parse_bool(s).ok_or_else(|| csv_err(format!("bad label {s:?} for `{id}`")))?),
        };
        let group = group_col
            .and_then(|c| row.get(c))
            .filter(|s| !s.is_empty())
            .map(str::to_owned);
        records.push(DetectionRecord {
            sample_id: id,
            aggregate_score,
            is_ood,
            group,
        });
    }
    DetectionTable::new(records)
}

/// Ground-truth labels from a CSV with columns `sample_id,is_ood` and an
/// optional `group`. Returns labels and the groups that were present.
pub fn read_labels(path: &Path) -> Result<(HashMap<String, bool>, HashMap<String, String>)> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_owned(),
        message,
    };
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    let id_col = column_index(&headers, "sample_id", path)?;
    let ood_col = column_index(&headers, "is_ood", path)?;
    let group_col = headers.iter().position(|h| h == "group");
    let mut labels = HashMap::new();
    let mut groups = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        let id = row.get(id_col).unwrap_or_default().to_owned();
        let raw = row.get(ood_col).unwrap_or_default();
        let label = parse_bool(raw).ok_or_else(|| csv_err(format!("bad label {raw:?} for `{id}`")))?;
        if let Some(g) = group_col.and_then(|c| row.get(c)).filter(|s| !s.is_empty()) {
            groups.insert(id.clone(), g.to_owned());
        }
        if labels.insert(id.clone(), label).is_some() {
            return Err(csv_err(format!("duplicate sample id `{id}`")));
        }
    }
    Ok((labels, groups))
}

pub fn labels_to_csv(ids: &[String], labels: &[bool]) -> Result<String> {
    let header = vec!["sample_id".to_owned(), "is_ood".to_owned()];
    csv_string(
        std::iter::once(header).chain(
            ids.iter()
                .zip(labels)
                .map(|(id, &l)| vec![id.clone(), if l { "1" } else { "0" }.to_owned()]),
        ),
    )
}

pub fn groups_from_ita(records: &[ItaRecord]) -> HashMap<String, String> {
    records
        .iter()
        .map(|r| (r.sample_id.clone(), r.category.to_string()))
        .collect()
}

/// Activations of `inputs` through `model`, optionally after ODIN
/// preprocessing. With ODIN on, the softmax layer is temperature scaled.
pub fn extract_activations<M: DifferentiableClassifier + ?Sized>(
    model: &M,
    set_name: &str,
    sample_ids: Vec<String>,
    inputs: &[Vec<f64>],
    odin: Option<&OdinConfig>,
) -> Result<ActivationSet> {
    if sample_ids.len() != inputs.len() {
        return Err(Error::Shape(format!(
            "{} sample ids for {} inputs",
            sample_ids.len(),
            inputs.len()
        )));
    }
    let per_sample = par::map_range(inputs.len(), |i| -> Result<Vec<(String, Vec<f64>)>> {
        let x = match odin {
            Some(cfg) => odin_perturb(model, &inputs[i], cfg)?,
            None => inputs[i].clone(),
        };
        let mut named = model.named_activations(&x)?;
        if let Some(cfg) = odin {
            let logits = model.forward(&x)?;
            if let Some((_, probs)) = named.iter_mut().find(|(n, _)| n == SOFTMAX_LAYER) {
                *probs = temperature_softmax(&logits, cfg.tau);
            }
        }
        Ok(named)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let first = per_sample
        .first()
        .ok_or_else(|| Error::InvalidArgument("no inputs".to_owned()))?;
    let layers = (0..first.len())
        .map(|li| {
            let rows: Vec<Vec<f64>> = per_sample.iter().map(|s| s[li].1.clone()).collect();
            LayerActivations::from_rows_f64(first[li].0.clone(), &rows)
        })
        .collect::<Result<Vec<_>>>()?;
    ActivationSet::new(set_name, sample_ids, layers)
}

/// Inputs stored as the single `input` layer of an activation set.
pub fn inputs_to_set(set_name: &str, sample_ids: Vec<String>, inputs: &[Vec<f64>]) -> Result<ActivationSet> {
    let layer = LayerActivations::from_rows_f64(INPUT_LAYER, inputs)?;
    ActivationSet::new(set_name, sample_ids, vec![layer])
}

pub fn inputs_from_set(set: &ActivationSet) -> Result<Vec<Vec<f64>>> {
    let layer = set.layer(INPUT_LAYER)?;
    Ok((0..layer.rows())
        .map(|i| layer.row(i).iter().map(|&v| f64::from(v)).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRequest {
    pub background: PathBuf,
    pub evaluation: PathBuf,
    pub labels: Option<PathBuf>,
    pub ita_csv: Option<PathBuf>,
    pub scan: ScanConfig,
    pub aggregation: Aggregation,
    /// ODIN settings the stores were extracted under, recorded in `run.json`.
    pub odin: Option<OdinConfig>,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Serialize)]
struct ScanRun<'a> {
    command: &'static str,
    seed: u64,
    background: String,
    evaluation: String,
    alpha_max: f64,
    statistic: String,
    layers: Vec<String>,
    aggregation: String,
    odin: Option<OdinConfig>,
    outputs: &'a [String],
}

pub fn scan_file_name(layer: &str) -> String {
    format!("scan_{layer}.csv")
}

/// Scans an evaluation store against a background store and writes one
/// `scan_<layer>.csv` per layer, `detections.csv` and `run.json`. Returns
/// the written file names.
pub fn run_scan(req: &ScanRequest) -> Result<Vec<String>> {
    let background = tensor_io::read_activation_set(&req.background)?;
    let evaluation = tensor_io::read_activation_set(&req.evaluation)?;
    let results = scan_activation_sets(&background, &evaluation, &req.scan)?;

    let mut table = aggregate_scores(&results, &req.aggregation)?;
    if let Some(path) = &req.labels {
        let (labels, groups) = read_labels(path)?;
        table = table.with_labels(&labels)?.with_groups(&groups);
    }
    if let Some(path) = &req.ita_csv {
        table = table.with_groups(&groups_from_ita(&ita::ita_records_from_csv(path)?));
    }

    let mut written = Vec::new();
    for res in &results {
        let name = scan_file_name(&res.layer_name);
        write_file(&req.out.join(&name), scan_result_to_csv(res)?)?;
        written.push(name);
    }
    write_file(&req.out.join(DETECTIONS_FILE), detection_table_to_csv(&table)?)?;
    written.push(DETECTIONS_FILE.to_owned());

    let run = ScanRun {
        command: "scan",
        seed: req.seed,
        background: req.background.display().to_string(),
        evaluation: req.evaluation.display().to_string(),
        alpha_max: req.scan.alpha_max,
        statistic: req.scan.statistic.to_string(),
        layers: results.iter().map(|r| r.layer_name.clone()).collect(),
        aggregation: req.aggregation.to_string(),
        odin: req.odin,
        outputs: &written,
    };
    write_file(&req.out.join(RUN_FILE), to_json(&run)?)?;
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluateRequest {
    pub detections: PathBuf,
    /// Labels file; optional when the detection table already carries labels.
    pub labels: Option<PathBuf>,
    pub ita_csv: Option<PathBuf>,
    /// Per-layer scan CSVs for the per-layer breakdown.
    pub scan_results: Vec<PathBuf>,
    pub out: PathBuf,
}

fn layer_from_scan_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("layer");
    stem.strip_prefix("scan_").unwrap_or(stem).to_owned()
}

/// Evaluates a detection table; writes `report.csv` and `report.json`.
pub fn run_evaluate(req: &EvaluateRequest) -> Result<EvaluationReport> {
    let mut table = read_detection_table(&req.detections)?;
    let mut labels: HashMap<String, bool> = table
        .records()
        .iter()
        .filter_map(|r| r.is_ood.map(|l| (r.sample_id.clone(), l)))
        .collect();
    let mut groups: HashMap<String, String> = HashMap::new();
    if let Some(path) = &req.labels {
        let (l, g) = read_labels(path)?;
        labels = l;
        groups.extend(g);
        table = table.with_labels(&labels)?;
    }
    if let Some(path) = &req.ita_csv {
        groups.extend(groups_from_ita(&ita::ita_records_from_csv(path)?));
    }

    let mut report = stratified_report(&table, &groups)?;
    if !req.scan_results.is_empty() {
        let results = req
            .scan_results
            .iter()
            .map(|p| read_scan_result_csv(p, &layer_from_scan_path(p)))
            .collect::<Result<Vec<_>>>()?;
        let layered = per_layer_report(&results, &labels, &groups)?;
        report.per_layer = layered.per_layer;
        report.layer_group = layered.layer_group;
    }
    write_file(&req.out.join(REPORT_CSV), report.to_csv()?)?;
    write_file(&req.out.join(REPORT_JSON), report.to_json()?)?;
    Ok(report)
}

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Mean and standard deviation across run reports; writes `summary.csv`
/// and `summary.json`.
pub fn run_aggregate_reports(reports: &[PathBuf], out: &Path) -> Result<Vec<SummaryRow>> {
    let loaded = reports
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            EvaluationReport::from_json(&text)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = summarize_runs(&loaded)?;
    let header = [
        "scope", "group", "layer", "runs", "auroc_mean", "auroc_std", "max_f1_mean", "max_f1_std",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let csv = csv_string(std::iter::once(header).chain(rows.iter().map(|r| {
        vec![
            r.scope.clone(),
            r.group.clone(),
            r.layer.clone(),
            r.runs.to_string(),
            r.auroc_mean.to_string(),
            r.auroc_std.to_string(),
            r.max_f1_mean.to_string(),
            r.max_f1_std.to_string(),
        ]
    })))?;
    write_file(&out.join(SUMMARY_CSV), csv)?;
    write_file(&out.join(SUMMARY_JSON), to_json(&rows)?)?;
    Ok(rows)
}

/// ITA of every PNG in `image_dir` (sorted by name, sample id = file stem).
/// A mask with the same file name in `mask_dir` restricts the pixels.
pub fn compute_ita_dir(image_dir: &Path, mask_dir: Option<&Path>) -> Result<Vec<ItaRecord>> {
    let mut files: Vec<PathBuf> = fs::read_dir(image_dir)
        .map_err(|e| Error::io(image_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    files
        .iter()
        .map(|path| {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_owned();
            let image = load_image(path)?;
            let mask = match mask_dir.map(|d| d.join(path.file_name().unwrap_or_default())) {
                Some(mp) if mp.exists() => Some(load_mask(&mp)?),
                _ => None,
            };
            ita::compute_ita(&id, &image, mask.as_ref())
        })
        .collect()
}

#[cfg(feature = "png")]
fn load_image(path: &Path) -> Result<RgbImage> {
    RgbImage::open(path)
}

#[cfg(feature = "png")]
fn load_mask(path: &Path) -> Result<PixelMask> {
    PixelMask::open(path)
}

#[cfg(not(feature = "png"))]
fn load_image(path: &Path) -> Result<RgbImage> {
    Err(Error::Image(format!("{}: built without PNG support", path.display())))
}

#[cfg(not(feature = "png"))]
fn load_mask(path: &Path) -> Result<PixelMask> {
    Err(Error::Image(format!("{}: built without PNG support", path.display())))
}

/// Writes the ITA CSV for a directory of images and returns the records.
pub fn run_ita(image_dir: &Path, mask_dir: Option<&Path>, out_csv: &Path) -> Result<Vec<ItaRecord>> {
    let records = compute_ita_dir(image_dir, mask_dir)?;
    write_file(out_csv, ita::ita_records_to_csv(&records)?)?;
    Ok(records)
}

/// Builds an activation store from per-layer CSV files that share sample ids.
pub fn run_import_csv(inputs: &[(String, PathBuf)], set_name: &str, out: &Path) -> Result<Manifest> {
    let mut ids: Option<Vec<String>> = None;
    let mut layers = Vec::with_capacity(inputs.len());
    for (layer_name, path) in inputs {
        let (layer, layer_ids) = tensor_io::import_csv_layer(path, layer_name)?;
        match &ids {
            Some(existing) if *existing != layer_ids => {
                return Err(Error::SampleMismatch(format!(
                    "{} lists different sample ids than the first CSV",
                    path.display()
                )))
            }
            Some(_) => {}
            None => ids = Some(layer_ids),
        }
        layers.push(layer);
    }
    let ids = ids.ok_or_else(|| Error::InvalidArgument("no CSV inputs given".to_owned()))?;
    let set = ActivationSet::new(set_name, ids, layers)?;
    tensor_io::write_activation_set(&set, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneRequest {
    pub net: PathBuf,
    pub id_inputs: PathBuf,
    pub ood_inputs: PathBuf,
    pub tau_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub objective: TuneObjective,
    pub out: PathBuf,
}

pub const TUNING_JSON: &str = "odin_tuning.json";
pub const ODIN_CONFIG_FILE: &str = "odin.cfg";

pub fn parse_grid(value: &str) -> Result<Vec<f64>> {
    parse_list(value)
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::InvalidArgument(format!("grid value `{s}` is not a number")))
        })
        .collect()
}

/// Grid search on a stored reference net; writes the full grid as JSON and
/// the chosen settings as a key-value config fragment.
pub fn run_tune_odin(req: &TuneRequest) -> Result<OdinTuning> {
    let net = ReferenceNet::load(&req.net)?;
    let id = inputs_from_set(&tensor_io::read_activation_set(&req.id_inputs)?)?;
    let ood = inputs_from_set(&tensor_io::read_activation_set(&req.ood_inputs)?)?;
    let tuning = tune_odin(&net, &id, &ood, &req.tau_grid, &req.eps_grid, req.objective)?;
    write_file(&req.out.join(TUNING_JSON), to_json(&tuning)?)?;
    write_file(
        &req.out.join(ODIN_CONFIG_FILE),
        format!(
            "tau = {}\nepsilon = {}\nodin_mode = {}\n",
            tuning.best.tau, tuning.best.epsilon, tuning.best.mode
        ),
    )?;
    Ok(tuning)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_csv_round_trip() {
        let res = ScanResult {
            layer_name: "conv_1".into(),
            records: vec![
                SampleScan {
                    sample_id: "a".into(),
                    subset: SubsetScore {
                        score: 4.605170185988092,
                        k_star: 2,
                        alpha_star: 0.01,
                        node_indices: vec![3, 0],
                    },
                },
                SampleScan {
                    sample_id: "b".into(),
                    subset: SubsetScore {
                        score: 0.0,
                        k_star: 0,
                        alpha_star: 0.5,
                        node_indices: vec![],
                    },
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(scan_file_name("conv_1"));
        write_file(&path, scan_result_to_csv(&res).unwrap()).unwrap();
        assert_eq!(read_scan_result_csv(&path, &layer_from_scan_path(&path)).unwrap(), res);
    }

    #[test]
    fn detection_csv_round_trip() {
        let table = DetectionTable::new(vec![
            DetectionRecord {
                sample_id: "x".into(),
                aggregate_score: 1.25,
                is_ood: Some(true),
                group: Some("Dark".into()),
            },
            DetectionRecord {
                sample_id: "y".into(),
                aggregate_score: 0.0,
                is_ood: None,
                group: None,
            },
        ])
        .unwrap();
        let csv = detection_table_to_csv(&table).unwrap();
        assert!(csv.starts_with("sample_id,aggregate_score,is_ood,group\n"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_file(&path, csv).unwrap();
        assert_eq!(read_detection_table(&path).unwrap(), table);
    }

    #[test]
    fn labels_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        write_file(&path, "sample_id,is_ood,group\na,1,Light\nb,false,\n").unwrap();
        let (labels, groups) = read_labels(&path).unwrap();
        assert_eq!(labels["a"], true);
        assert_eq!(labels["b"], false);
        assert_eq!(groups.len(), 1);
        write_file(&path, "sample_id,is_ood\na,maybe\n").unwrap();
        assert!(read_labels(&path).is_err());
    }

    #[test]
    fn unknown_layer_lists_available() {
        let layer = LayerActivations::new("conv_1", 1, 1, vec![0.0]).unwrap();
        let set = ActivationSet::new("s", vec!["a".into()], vec![layer]).unwrap();
        let err = select_layers(&set, &["gp".into()]).unwrap_err();
        assert!(err.to_string().contains("conv_1"), "{err}");
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("1, 2,1000").unwrap(), [1.0, 2.0, 1000.0]);
        assert!(parse_grid("1,x").is_err());
    }
}
