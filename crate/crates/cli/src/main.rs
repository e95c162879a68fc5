use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_scan::config::{parse_list, ConfigFile, OdinSetting};
use latent_scan::demo::{self, DemoConfig};
use latent_scan::odin::TuneObjective;
use latent_scan::pipeline::{self, EvaluateRequest, ScanRequest, TuneRequest};
use latent_scan::{Aggregation, Error, Result, Statistic};

const THREADS_VAR: &str = "LATENT_SCAN_THREADS";

/// Out-of-distribution detection by subset scanning of classifier
/// activations.
#[derive(Parser, Debug)]
#[command(name = "latent-scan", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan evaluation activations against a background store.
    Scan(ScanArgs),
    /// Compute AUROC and max F1, overall and per group.
    Evaluate(EvaluateArgs),
    /// Individual typology angle of every PNG in a directory.
    Ita(ItaArgs),
    /// Synthetic end-to-end run on a random reference network.
    Demo(DemoArgs),
    /// Grid-search ODIN temperature and epsilon on a stored reference net.
    TuneOdin(TuneArgs),
    /// Build an activation store from per-layer CSV files.
    ImportCsv(ImportArgs),
}

#[derive(Args, Debug, Default)]
struct ScanSettings {
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated layer names (default: every layer).
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    alpha_max: Option<f64>,
    /// berk_jones or higher_criticism.
    #[arg(long)]
    statistic: Option<Statistic>,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long)]
    background: PathBuf,
    #[arg(long = "eval")]
    evaluation: PathBuf,
    /// CSV with sample_id,is_ood[,group].
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    ita_csv: Option<PathBuf>,
    #[command(flatten)]
    settings: ScanSettings,
    /// sum or layer:<name>.
    #[arg(long)]
    aggregation: Option<Aggregation>,
    /// ODIN temperature the stores were extracted with.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// off, standard or low.
    #[arg(long)]
    odin_mode: Option<OdinSetting>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Detection table written by `scan`.
    #[arg(long, required_unless_present = "aggregate")]
    detections: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    ita_csv: Option<PathBuf>,
    /// Per-layer scan CSVs for the per-layer breakdown.
    #[arg(long, num_args = 1..)]
    scan_results: Vec<PathBuf>,
    /// Summarise report.json files from repeated runs instead.
    #[arg(long, num_args = 1.., conflicts_with = "detections")]
    aggregate: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ItaArgs {
    #[arg(long)]
    images: PathBuf,
    /// Directory of masks named like the images; nonzero pixels are skin.
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    settings: ScanSettings,
}

#[derive(Args, Debug)]
struct TuneArgs {
    /// Reference net directory (as written by `demo` under net/).
    #[arg(long)]
    net: PathBuf,
    /// Store with an `input` layer of in-distribution validation inputs.
    #[arg(long)]
    id_inputs: PathBuf,
    #[arg(long)]
    ood_inputs: PathBuf,
    #[arg(long, default_value = "1,2,5,10,100,1000")]
    tau_grid: String,
    #[arg(long, default_value = "0,0.0002,0.001,0.005,0.01,0.05,0.1,0.2")]
    eps_grid: String,
    /// maximize (ODIN) or minimize (ODIN_low).
    #[arg(long, default_value = "maximize")]
    objective: TuneObjective,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ImportArgs {
    /// NAME=PATH, once per layer.
    #[arg(long = "layer", required = true)]
    layers: Vec<String>,
    #[arg(long, default_value = "activations")]
    set_name: String,
    #[arg(long)]
    out: PathBuf,
}

impl ScanSettings {
    fn merged(&self) -> Result<ConfigFile> {
        let mut cfg = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        if let Some(layers) = &self.layers {
            cfg.layers = Some(parse_list(layers));
        }
        cfg.alpha_max = self.alpha_max.or(cfg.alpha_max);
        cfg.statistic = self.statistic.or(cfg.statistic);
        Ok(cfg)
    }
}

fn scan(args: ScanArgs) -> Result<()> {
    let mut cfg = args.settings.merged()?;
    cfg.aggregation = args.aggregation.or(cfg.aggregation);
    cfg.tau = args.tau.or(cfg.tau);
    cfg.epsilon = args.epsilon.or(cfg.epsilon);
    cfg.odin_mode = args.odin_mode.or(cfg.odin_mode);
    let written = pipeline::run_scan(&ScanRequest {
        background: args.background,
        evaluation: args.evaluation,
        labels: args.labels,
        ita_csv: args.ita_csv,
        scan: cfg.scan_config()?,
        aggregation: cfg.aggregation.clone().unwrap_or(Aggregation::Sum),
        odin: cfg.odin_config()?,
        out: args.out.clone(),
        seed: args.seed,
    })?;
    for name in written {
        println!("{}", args.out.join(name).display());
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    if !args.aggregate.is_empty() {
        let rows = pipeline::run_aggregate_reports(&args.aggregate, &args.out)?;
        for r in rows {
            println!(
                "{:<12} {:<14} {:<16} AUROC {:.3} +/- {:.3}  maxF1 {:.3} +/- {:.3}  ({} runs)",
                r.scope, r.group, r.layer, r.auroc_mean, r.auroc_std, r.max_f1_mean, r.max_f1_std, r.runs
            );
        }
        return Ok(());
    }
    let detections = args
        .detections
        .ok_or_else(|| Error::InvalidArgument("--detections is required".to_owned()))?;
    let report = pipeline::run_evaluate(&EvaluateRequest {
        detections,
        labels: args.labels,
        ita_csv: args.ita_csv,
        scan_results: args.scan_results,
        out: args.out,
    })?;
    print!("{}", report.render_table());
    Ok(())
}

fn ita(args: ItaArgs) -> Result<()> {
    let records = pipeline::run_ita(&args.images, args.masks.as_deref(), &args.out)?;
    println!("{} images -> {}", records.len(), args.out.display());
    Ok(())
}

fn demo(args: DemoArgs) -> Result<()> {
    let cfg = args.settings.merged()?;
    if cfg.layers.is_some() {
        log::warn!("demo scans every layer; ignoring the layer list");
    }
    let scan = cfg.scan_config()?;
    let demo_cfg = DemoConfig {
        alpha_max: scan.alpha_max,
        statistic: scan.statistic,
        ..DemoConfig::with_seed(args.seed)
    };
    let summary = demo::run_demo(&demo_cfg, &args.out)?;
    println!("{:<8} {:<18} {:>7} {:>7}", "scenario", "method", "AUROC", "maxF1");
    for r in &summary.rows {
        println!("{:<8} {:<18} {:>7.4} {:>7.4}", r.scenario.as_str(), r.method, r.auroc, r.max_f1);
    }
    Ok(())
}

fn tune_odin(args: TuneArgs) -> Result<()> {
    let tuning = pipeline::run_tune_odin(&TuneRequest {
        net: args.net,
        id_inputs: args.id_inputs,
        ood_inputs: args.ood_inputs,
        tau_grid: pipeline::parse_grid(&args.tau_grid)?,
        eps_grid: pipeline::parse_grid(&args.eps_grid)?,
        objective: args.objective,
        out: args.out,
    })?;
    println!(
        "tau {} epsilon {} ({}) validation AUROC {:.4}",
        tuning.best.tau, tuning.best.epsilon, tuning.best.mode, tuning.best_auroc
    );
    Ok(())
}

fn import_csv(args: ImportArgs) -> Result<()> {
    let inputs = args
        .layers
        .iter()
        .map(|entry| {
            entry.split_once('=')
                .map(|(name, path)| (name.to_owned(), PathBuf::from(path)))
                .ok_or_else(|| Error::InvalidArgument(format!("--layer expects NAME=PATH, got `{entry}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = pipeline::run_import_csv(&inputs, &args.set_name, &args.out)?;
    println!("{} layers -> {}", manifest.sets[0].layers.len(), args.out.display());
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => latent_scan::set_thread_count(n),
        _ => Err(Error::InvalidArgument(format!(
            "{THREADS_VAR} must be a positive integer, got `{value}`"
        ))),
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Scan(a) => scan(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ita(a) => ita(a),
        Command::Demo(a) => demo(a),
        Command::TuneOdin(a) => tune_odin(a),
        Command::ImportCsv(a) => import_csv(a),
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.render().to_string();
            eprintln!("latent-scan: {}", one_line(first.lines().next().unwrap_or("invalid arguments")));
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("latent-scan: {}", one_line(&e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
