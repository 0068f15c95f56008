//! `urbanpulse`: mobile-network anomaly-detection pipeline.
//!
//! Stages communicate only through files in `--out-dir`, stamped with the
//! run-config fingerprint. A typical run:
//!
//! ```text
//! urbanpulse synth      --config run.json --out-dir out
//! urbanpulse train      --config run.json --out-dir out
//! urbanpulse calibrate  --config run.json --out-dir out
//! urbanpulse detect     --config run.json --out-dir out
//! urbanpulse evaluate   --config run.json --out-dir out
//! urbanpulse pr-curve   --config run.json --out-dir out
//! urbanpulse export-map --config run.json --out-dir out
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use urbanpulse_core::levels::Sensitivity;
use urbanpulse_core::pipeline::{self, Method, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "urbanpulse", version, about = "Per-antenna mobile-network anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for this run's artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the configured method (signature|adaptive).
    #[arg(long)]
    method: Option<String>,
    /// Override the configured service subset, e.g. `call4g,sms4g`.
    #[arg(long)]
    services: Option<String>,
    /// Override the evaluation sensitivity (4h|8h|12h|1d|2d|1w).
    #[arg(long)]
    sensitivity: Option<String>,
    /// Override the configured seed (non-zero also overrides scenario seeds).
    #[arg(long)]
    seed: Option<u64>,
    /// Activity CSV (sets inputs.data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Training activity CSV (sets inputs.train_data).
    #[arg(long)]
    train_data: Option<PathBuf>,
    /// Test activity CSV (sets inputs.test_data).
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Cell registry CSV (sets inputs.cells).
    #[arg(long)]
    cells: Option<PathBuf>,
    /// Ground-truth event database JSON (sets inputs.dbue).
    #[arg(long)]
    dbue: Option<PathBuf>,
    /// Scenario JSON for synth (sets inputs.scenario).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Accept artifacts whose fingerprint does not match this config.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic activity, cells and ground truth from a scenario.
    Synth(CommonArgs),
    /// Fit per-(cell,service) models and emit training scores.
    Train(CommonArgs),
    /// Calibrate per-antenna level thresholds from training scores.
    Calibrate(CommonArgs),
    /// Score test data against trained models and emit the alarm stream.
    Detect(CommonArgs),
    /// Match alarms to ground-truth events and emit the report.
    Evaluate(CommonArgs),
    /// Evaluate all six sensitivities and emit the PR curve.
    PrCurve {
        #[command(flatten)]
        common: CommonArgs,
        /// Emit the curve even when some sensitivities are uncalibrated.
        #[arg(long)]
        allow_partial: bool,
    },
    /// Export the alarm stream as a GeoJSON map overlay.
    ExportMap(CommonArgs),
}

fn build_config(args: &CommonArgs) -> Result<RunConfig, PipelineError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
                path: path.display().to_string(),
                source,
            })?;
            RunConfig::from_json(&text).map_err(PipelineError::Config)?
        }
        None => RunConfig::default(),
    };
    if let Some(method) = &args.method {
        config.method = Method::parse(method).map_err(PipelineError::Config)?;
    }
    if let Some(services) = &args.services {
        config.services = Some(services.split(',').map(|s| s.trim().to_string()).collect());
    }
    if let Some(sensitivity) = &args.sensitivity {
        config.sensitivity = Sensitivity::parse(sensitivity).map_err(PipelineError::Config)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.data.is_some() {
        config.inputs.data = args.data.clone();
    }
    if args.train_data.is_some() {
        config.inputs.train_data = args.train_data.clone();
    }
    if args.test_data.is_some() {
        config.inputs.test_data = args.test_data.clone();
    }
    if args.cells.is_some() {
        config.inputs.cells = args.cells.clone();
    }
    if args.dbue.is_some() {
        config.inputs.dbue = args.dbue.clone();
    }
    if args.scenario.is_some() {
        config.inputs.scenario = args.scenario.clone();
    }
    Ok(config)
}

fn run(command: &Command) -> Result<serde_json::Value, PipelineError> {
    pipeline::init_thread_pool_from_env();
    match command {
        Command::Synth(args) => {
            let config = build_config(args)?;
            pipeline::stage_synth(&config, &args.out_dir)
        }
        Command::Train(args) => {
            let config = build_config(args)?;
            pipeline::stage_train(&config, &args.out_dir)
        }
        Command::Calibrate(args) => {
            let config = build_config(args)?;
            pipeline::stage_calibrate(&config, &args.out_dir, args.force)
        }
        Command::Detect(args) => {
            let config = build_config(args)?;
            pipeline::stage_detect(&config, &args.out_dir, args.force)
        }
        Command::Evaluate(args) => {
            let config = build_config(args)?;
            pipeline::stage_evaluate(&config, &args.out_dir, args.force)
        }
        Command::PrCurve { common, allow_partial } => {
            let config = build_config(common)?;
            pipeline::stage_pr_curve(&config, &common.out_dir, common.force, *allow_partial)
        }
        Command::ExportMap(args) => {
            let config = build_config(args)?;
            pipeline::stage_export_map(&config, &args.out_dir, args.force)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("{}", serde_json::to_string(&error.to_json()).expect("error serializes"));
            ExitCode::FAILURE
        }
    }
}
