//! Synthetic end-to-end run on the reference network.
//!
//! Inputs live in `[0, 1]^d`. In-distribution samples are
//! `clip(mu + sigma * z)` with a per-component mean `mu_i ~ U[0.3, 0.5]`;
//! shifted OOD samples add `shift * sigma` to every component before
//! clipping. The null scenario draws its "OOD" samples from the ID
//! distribution. Every method is scored on the same evaluation split.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricBundle;
use crate::odin::{
    odin_softmax_score, softmax_score, temperature_softmax, tune_odin, DifferentiableClassifier,
    OdinConfig, ReferenceNet, TuneObjective,
};
use crate::par;
use crate::pipeline::{self, extract_activations, labels_to_csv, scan_activation_sets, to_json, write_file};
use crate::scan::{aggregate_scores, Aggregation, ScanConfig, ScanResult, Statistic};
use crate::tensor_io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub seed: u64,
    /// Input width followed by every dense layer width; the last entry is
    /// the class count.
    pub layer_sizes: Vec<usize>,
    pub background: usize,
    pub eval_id: usize,
    pub eval_ood: usize,
    pub val_id: usize,
    pub val_ood: usize,
    pub noise_sigma: f64,
    /// OOD mean shift in units of `noise_sigma`.
    pub shift_sigmas: f64,
    pub alpha_max: f64,
    pub statistic: Statistic,
    pub tau_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            layer_sizes: vec![16, 32, 24, 4],
            background: 500,
            eval_id: 250,
            eval_ood: 250,
            val_id: 100,
            val_ood: 100,
            noise_sigma: 0.1,
            shift_sigmas: 2.0,
            alpha_max: crate::scan::DEFAULT_ALPHA_MAX,
            statistic: Statistic::BerkJones,
            tau_grid: vec![1.0, 2.0, 5.0, 10.0, 100.0, 1000.0],
            eps_grid: vec![0.0, 0.0002, 0.001, 0.005, 0.01, 0.05, 0.1, 0.2],
        }
    }
}

impl DemoConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Shifted,
    Null,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Shifted => "shifted",
            Scenario::Null => "null",
        }
    }
}

pub const METHOD_SOFTMAX: &str = "softmax_score";
pub const METHOD_ODIN: &str = "odin";
pub const METHOD_SS_SUM: &str = "ss_sum";
pub const METHOD_SS_SUM_ODIN: &str = "ss_sum+odin";
pub const METHOD_SS_SUM_ODIN_LOW: &str = "ss_sum+odin_low";

/// `ss:<layer>` for a single scanned layer.
pub fn layer_method(layer: &str) -> String {
    format!("ss:{layer}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub scenario: Scenario,
    pub method: String,
    pub auroc: f64,
    pub max_f1: f64,
    pub tau: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub seed: u64,
    pub rows: Vec<MethodResult>,
}

impl DemoSummary {
    pub fn get(&self, scenario: Scenario, method: &str) -> Option<&MethodResult> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.method == method)
    }

    pub fn scenario_rows(&self, scenario: Scenario) -> impl Iterator<Item = &MethodResult> {
        self.rows.iter().filter(move |r| r.scenario == scenario)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("scenario,method,auroc,max_f1,tau,epsilon\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.scenario.as_str(),
                r.method,
                r.auroc,
                r.max_f1,
                opt(r.tau),
                opt(r.epsilon)
            ));
        }
        out
    }
}

struct Split {
    ids: Vec<String>,
    inputs: Vec<Vec<f64>>,
}

impl Split {
    fn draw<R: Rng>(prefix: &str, n: usize, mean: &[f64], shift: f64, sigma: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let inputs = (0..n)
            .map(|_| {
                mean.iter()
                    .map(|&m| (m + shift + normal.sample(rng)).clamp(0.0, 1.0))
                    .collect()
            })
            .collect();
        Ok(Self {
            ids: (0..n).map(|i| format!("{prefix}_{i:04}")).collect(),
            inputs,
        })
    }
}

struct ScenarioData {
    background: Split,
    eval_id: Split,
    eval_ood: Split,
    val_id: Split,
    val_ood: Split,
}

fn draw_scenario<R: Rng>(cfg: &DemoConfig, mean: &[f64], ood_shift: f64, rng: &mut R) -> Result<ScenarioData> {
    let s = cfg.noise_sigma;
    Ok(ScenarioData {
        background: Split::draw("bg", cfg.background, mean, 0.0, s, rng)?,
        eval_id: Split::draw("id", cfg.eval_id, mean, 0.0, s, rng)?,
        eval_ood: Split::draw("ood", cfg.eval_ood, mean, ood_shift, s, rng)?,
        val_id: Split::draw("val_id", cfg.val_id, mean, 0.0, s, rng)?,
        val_ood: Split::draw("val_ood", cfg.val_ood, mean, ood_shift, s, rng)?,
    })
}

fn eval_labels(data: &ScenarioData) -> (Vec<String>, Vec<bool>) {
    let ids = data.eval_id.ids.iter().chain(&data.eval_ood.ids).cloned().collect();
    let labels = data
        .eval_id
        .ids
        .iter()
        .map(|_| false)
        .chain(data.eval_ood.ids.iter().map(|_| true))
        .collect();
    (ids, labels)
}

fn eval_inputs(data: &ScenarioData) -> Vec<Vec<f64>> {
    data.eval_id.inputs.iter().chain(&data.eval_ood.inputs).cloned().collect()
}

fn bundle(scores: &[f64], labels: &[bool]) -> Result<MetricBundle> {
    MetricBundle::compute(scores, labels)
}

fn row(scenario: Scenario, method: impl Into<String>, m: MetricBundle, odin: Option<&OdinConfig>) -> MethodResult {
    MethodResult {
        scenario,
        method: method.into(),
        auroc: m.auroc,
        max_f1: m.max_f1,
        tau: odin.map(|c| c.tau),
        epsilon: odin.map(|c| c.epsilon),
    }
}

struct ScanOutcome {
    results: Vec<ScanResult>,
    summed: Vec<f64>,
}

fn scan_with(
    net: &ReferenceNet,
    data: &ScenarioData,
    scan: &ScanConfig,
    odin: Option<&OdinConfig>,
) -> Result<ScanOutcome> {
    let bg = extract_activations(net, "background", data.background.ids.clone(), &data.background.inputs, odin)?;
    let (ids, _) = eval_labels(data);
    let ev = extract_activations(net, "eval", ids, &eval_inputs(data), odin)?;
    let results = scan_activation_sets(&bg, &ev, scan)?;
    let summed = aggregate_scores(&results, &Aggregation::Sum)?.scores();
    Ok(ScanOutcome { results, summed })
}

fn run_scenario(
    cfg: &DemoConfig,
    net: &ReferenceNet,
    scenario: Scenario,
    data: &ScenarioData,
) -> Result<Vec<MethodResult>> {
    let (_, labels) = eval_labels(data);
    let inputs = eval_inputs(data);
    let scan = ScanConfig {
        alpha_max: cfg.alpha_max,
        statistic: cfg.statistic,
        layers: Vec::new(),
    };
    let mut rows = Vec::new();

    let softmax: Vec<f64> = par::map_range(inputs.len(), |i| {
        net.forward(&inputs[i])
            .map(|logits| -softmax_score(&temperature_softmax(&logits, 1.0)))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    rows.push(row(scenario, METHOD_SOFTMAX, bundle(&softmax, &labels)?, None));

    let tuned = tune_odin(
        net,
        &data.val_id.inputs,
        &data.val_ood.inputs,
        &cfg.tau_grid,
        &cfg.eps_grid,
        TuneObjective::Maximize,
    )?;
    log::info!(
        "{}: odin tau {} epsilon {} (validation AUROC {:.4})",
        scenario.as_str(),
        tuned.best.tau,
        tuned.best.epsilon,
        tuned.best_auroc
    );
    let odin_scores: Vec<f64> = par::map_range(inputs.len(), |i| {
        odin_softmax_score(net, &inputs[i], &tuned.best).map(|s| -s)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    rows.push(row(scenario, METHOD_ODIN, bundle(&odin_scores, &labels)?, Some(&tuned.best)));

    let plain = scan_with(net, data, &scan, None)?;
    for res in &plain.results {
        rows.push(row(
            scenario,
            layer_method(&res.layer_name),
            bundle(&res.scores(), &labels)?,
            None,
        ));
    }
    rows.push(row(scenario, METHOD_SS_SUM, bundle(&plain.summed, &labels)?, None));

    let with_odin = scan_with(net, data, &scan, Some(&tuned.best))?;
    rows.push(row(
        scenario,
        METHOD_SS_SUM_ODIN,
        bundle(&with_odin.summed, &labels)?,
        Some(&tuned.best),
    ));

    let low = tune_odin(
        net,
        &data.val_id.inputs,
        &data.val_ood.inputs,
        &cfg.tau_grid,
        &cfg.eps_grid,
        TuneObjective::Minimize,
    )?;
    let with_low = scan_with(net, data, &scan, Some(&low.best))?;
    rows.push(row(
        scenario,
        METHOD_SS_SUM_ODIN_LOW,
        bundle(&with_low.summed, &labels)?,
        Some(&low.best),
    ));
    Ok(rows)
}

struct DemoState {
    net: ReferenceNet,
    scenarios: Vec<(Scenario, ScenarioData)>,
}

fn build(cfg: &DemoConfig) -> Result<DemoState> {
    let input_dim = *cfg
        .layer_sizes
        .first()
        .ok_or_else(|| Error::InvalidArgument("layer sizes must be nonempty".to_owned()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = ReferenceNet::random(&cfg.layer_sizes, &mut rng)?;
    let mean_dist = Uniform::new(0.3, 0.5).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mean: Vec<f64> = (0..input_dim).map(|_| mean_dist.sample(&mut rng)).collect();
    let shift = cfg.shift_sigmas * cfg.noise_sigma;
    let shifted = draw_scenario(cfg, &mean, shift, &mut rng)?;
    let null = draw_scenario(cfg, &mean, 0.0, &mut rng)?;
    Ok(DemoState {
        net,
        scenarios: vec![(Scenario::Shifted, shifted), (Scenario::Null, null)],
    })
}

/// Runs both scenarios and returns the summary without touching the disk.
pub fn run_demo_in_memory(cfg: &DemoConfig) -> Result<DemoSummary> {
    let state = build(cfg)?;
    let mut rows = Vec::new();
    for (scenario, data) in &state.scenarios {
        rows.extend(run_scenario(cfg, &state.net, *scenario, data)?);
    }
    Ok(DemoSummary { seed: cfg.seed, rows })
}

pub const DEMO_SUMMARY_CSV: &str = "summary.csv";
pub const DEMO_SUMMARY_JSON: &str = "summary.json";

#[derive(Serialize)]
struct DemoRun<'a> {
    command: &'static str,
    config: &'a DemoConfig,
}

/// Runs the demo and writes `summary.csv`, `summary.json`, `run.json`, the
/// network under `net/`, and for each scenario the un-perturbed background
/// and evaluation stores with a labels file, ready for `scan`/`evaluate`.
pub fn run_demo(cfg: &DemoConfig, out: &Path) -> Result<DemoSummary> {
    let state = build(cfg)?;
    let mut rows = Vec::new();
    for (scenario, data) in &state.scenarios {
        rows.extend(run_scenario(cfg, &state.net, *scenario, data)?);

        let dir = out.join(scenario.as_str());
        let bg = extract_activations(&state.net, "background", data.background.ids.clone(), &data.background.inputs, None)?;
        tensor_io::write_activation_set(&bg, &dir.join("background"))?;
        let (ids, labels) = eval_labels(data);
        let ev = extract_activations(&state.net, "eval", ids.clone(), &eval_inputs(data), None)?;
        tensor_io::write_activation_set(&ev, &dir.join("eval"))?;
        write_file(&dir.join("labels.csv"), labels_to_csv(&ids, &labels)?)?;

        let val_id = pipeline::inputs_to_set("val_id", data.val_id.ids.clone(), &data.val_id.inputs)?;
        tensor_io::write_activation_set(&val_id, &dir.join("val_id_inputs"))?;
        let val_ood = pipeline::inputs_to_set("val_ood", data.val_ood.ids.clone(), &data.val_ood.inputs)?;
        tensor_io::write_activation_set(&val_ood, &dir.join("val_ood_inputs"))?;
    }
    state.net.save(&out.join("net"))?;

    let summary = DemoSummary { seed: cfg.seed, rows };
    write_file(&out.join(DEMO_SUMMARY_CSV), summary.to_csv())?;
    write_file(&out.join(DEMO_SUMMARY_JSON), to_json(&summary)?)?;
    write_file(
        &out.join(pipeline::RUN_FILE),
        to_json(&DemoRun {
            command: "demo",
            config: cfg,
        })?,
    )?;
    Ok(summary)
}

/// Shifted-scenario AUROC of the summed scan for each mean shift (in units
/// of the noise sigma), on a smaller configuration suited to interactive use.
pub fn shift_sweep(seed: u64, shifts: &[f64], samples: usize) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::with_capacity(shifts.len());
    for &shift in shifts {
        let cfg = DemoConfig {
            seed,
            background: samples * 2,
            eval_id: samples,
            eval_ood: samples,
            shift_sigmas: shift,
            ..DemoConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let net = ReferenceNet::random(&cfg.layer_sizes, &mut rng)?;
        let mean_dist = Uniform::new(0.3, 0.5).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mean: Vec<f64> = (0..cfg.layer_sizes[0]).map(|_| mean_dist.sample(&mut rng)).collect();
        let data = draw_scenario(&cfg, &mean, shift * cfg.noise_sigma, &mut rng)?;
        let (_, labels) = eval_labels(&data);
        let scan = ScanConfig {
            alpha_max: cfg.alpha_max,
            statistic: cfg.statistic,
            layers: Vec::new(),
        };
        let ss = scan_with(&net, &data, &scan, None)?;
        let inputs = eval_inputs(&data);
        let softmax = inputs
            .iter()
            .map(|x| net.forward(x).map(|l| -softmax_score(&temperature_softmax(&l, 1.0))))
            .collect::<Result<Vec<_>>>()?;
        out.push((
            shift,
            crate::metrics::auroc(&ss.summed, &labels)?,
            crate::metrics::auroc(&softmax, &labels)?,
        ));
    }
    Ok(out)
}

/// Per-method AUROC lookup for one scenario.
pub fn auroc_by_method(summary: &DemoSummary, scenario: Scenario) -> HashMap<String, f64> {
    summary
        .scenario_rows(scenario)
        .map(|r| (r.method.clone(), r.auroc))
        .collect()
}
