//! `solarcap` command-line pipeline: synthetic data, feature ranking and
//! selection, training, prediction, disaggregation, benchmarking and
//! explanations. Each command writes its outputs to the output directory
//! and prints one summary line.
//!
//! Exit codes: 0 success, 2 model/data schema mismatch, 3 missing input,
//! 1 anything else. Failures print a JSON object to stderr.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use solarcap_core::apps::AllocationPolicy;

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

pub use config::{GridPreset, RunConfig};
pub use error::{CliError, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "solarcap", version, about = "Regional solar PV capacity pipeline")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub options: Options,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic panel, national totals, schema and ground truth.
    Synth,
    /// Rank features by correlation with capacity share.
    Rank,
    /// Choose a correlation threshold by cross-validated RMSE.
    Sweep,
    /// Grid-search hyperparameters and train the model.
    Train,
    /// Regional estimates (unscaled and scaled) and national metrics.
    Predict,
    /// Distribute unallocated national capacity across regions.
    Disaggregate,
    /// Solar PV deployment index per region.
    Benchmark,
    /// SHAP importance, waterfalls and PCA feature clusters.
    Explain,
}

fn parse_policy(s: &str) -> Result<AllocationPolicy, String> {
    match s {
        "additive" => Ok(AllocationPolicy::Additive),
        "full_rescale" | "full-rescale" => Ok(AllocationPolicy::FullRescale),
        _ => Err(format!("unknown policy {s:?} (additive, full_rescale)")),
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Output directory [default: $SOLARCAP_OUT_DIR, else solarcap-out]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Panel CSV [default: <out-dir>/panel.csv]
    #[arg(long, global = true)]
    pub panel: Option<PathBuf>,
    /// National totals CSV [default: <out-dir>/national.csv]
    #[arg(long, global = true)]
    pub national: Option<PathBuf>,
    /// Feature schema JSON [default: <out-dir>/schema.json]
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Model JSON [default: <out-dir>/model.json]
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Random seed; required by synth, sweep and train
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    // `std::vec::Vec` keeps clap from treating these as repeated values.
    /// Training years, e.g. 2010-2020 [default: all but the last three]
    #[arg(long, global = true, value_parser = config::parse_year_range)]
    pub train_years: Option<std::vec::Vec<i32>>,
    /// Test years, e.g. 2021-2023
    #[arg(long, global = true, value_parser = config::parse_year_range)]
    pub test_years: Option<std::vec::Vec<i32>>,
    /// Years to predict, disaggregate, benchmark or explain [default: all]
    #[arg(long, global = true, value_parser = config::parse_year_range)]
    pub years: Option<std::vec::Vec<i32>>,
    /// Comma-separated model features [default: all schema features]
    #[arg(long, global = true, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Comma-separated correlation thresholds for `sweep`
    #[arg(long, global = true, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Minimum feature availability (fraction) for selection
    #[arg(long, global = true)]
    pub availability: Option<f64>,
    /// Hyperparameter grid preset
    #[arg(long, global = true, value_enum)]
    pub grid: Option<GridPreset>,
    /// Cross-validation folds [default: 10]
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Assign whole years to folds
    #[arg(long, global = true)]
    pub grouped_folds: bool,
    /// Rank by absolute average correlation
    #[arg(long, global = true)]
    pub absolute_corr: bool,
    /// Allocation policy: additive or full_rescale [default: additive]
    #[arg(long, global = true, value_parser = parse_policy)]
    pub policy: Option<AllocationPolicy>,
    /// Comma-separated regions for SHAP waterfalls
    #[arg(long, global = true, value_delimiter = ',')]
    pub regions: Option<Vec<String>>,
    /// Feature clusters for `explain` [default: 2]
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
}

impl Options {
    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            panel: self.panel.clone(),
            national: self.national.clone(),
            schema: self.schema.clone(),
            model: self.model.clone(),
            out_dir: self.out_dir.clone(),
            seed: self.seed,
            workers: self.workers,
            train_years: self.train_years.clone(),
            test_years: self.test_years.clone(),
            features: self.features.clone(),
            threshold_grid: self.thresholds.clone(),
            availability_threshold: self.availability,
            hyperparameter_grid: None,
            grid_preset: self.grid,
            folds: self.folds,
            grouped_folds: self.grouped_folds.then_some(true),
            absolute_corr: self.absolute_corr.then_some(true),
            allocation_policy: self.policy,
            years: self.years.clone(),
            regions: self.regions.clone(),
            clusters: self.clusters,
            synth: None,
        }
    }
}

/// Runs one command with an already merged configuration.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<String, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::failed(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Synth => commands::synth(cfg),
        Command::Rank => commands::rank(cfg),
        Command::Sweep => commands::sweep(cfg),
        Command::Train => commands::train_cmd(cfg),
        Command::Predict => commands::predict(cfg),
        Command::Disaggregate => commands::disaggregate(cfg),
        Command::Benchmark => commands::benchmark(cfg),
        Command::Explain => commands::explain(cfg),
    })
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    execute(cli.command, &cli.options.to_config().or(file))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            eprintln!("{}", CliError::failed(e.kind().to_string()).to_json());
            return 1;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
