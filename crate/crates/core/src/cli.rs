//! Command-line front end: `gen`, `pose`, `exp` and `report`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::experiments::{
    self, build_split, emit_table, lookup, read_results, run_experiment, ExperimentError,
    RunSettings, RESULTS_NAME,
};
use crate::network::{Head, ModelConfig};
use crate::posemeasure::{
    aggregate, measure_manifest, write_aggregate, write_pose_report, MeasureConfig,
    AGGREGATE_NAME, REPORT_NAME,
};
use crate::synthgen::{
    generate_dataset, load_dataset, make_board_library, write_dataset, GenerationConfig, Split,
    SynthError,
};

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Data = 2,
    Trial = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Trial(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) | CliError::Experiment(ExperimentError::UnknownSpec(_)) => {
                ExitCode::Usage
            }
            CliError::Trial(_) | CliError::Experiment(ExperimentError::Network(_)) => {
                ExitCode::Trial
            }
            _ => ExitCode::Data,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "hvcpcb", version, about = "Synthetic micro-PCB generation, pose measurement and M1/M2 experiments")]
pub struct Cli {
    /// TOML file with defaults for any flag; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset.
    Gen(GenArgs),
    /// Measure rotation and perspective of every image in a dataset.
    Pose(PoseArgs),
    /// Run catalog experiments for both models.
    Exp(ExpArgs),
    /// Rebuild summary.csv and tables.md from results.csv.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Render every component flush with the board.
    #[arg(long)]
    pub flat: bool,
}

#[derive(Debug, Args)]
pub struct PoseArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExpArgs {
    /// Experiment ids (E1-E9, A1-A16, ALL).
    pub ids: Vec<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Network input size; images are resampled when they differ.
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding results.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Optional structured config; every key mirrors a flag.
#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub classes: Option<usize>,
    pub size: Option<usize>,
    pub epochs: Option<usize>,
    pub trials: Option<usize>,
    pub jobs: Option<usize>,
    pub flat: Option<bool>,
    pub ids: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Resolved parameters of one command after merging flags over the file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub classes: usize,
    pub size: usize,
    pub epochs: usize,
    pub trials: usize,
    pub flat: bool,
    pub ids: Vec<String>,
}

impl RunConfig {
    fn base(file: &FileConfig) -> Self {
        Self {
            data: file.data.clone(),
            out: file.out.clone(),
            seed: file.seed,
            classes: file.classes.unwrap_or(13),
            size: file.size.unwrap_or(64),
            epochs: file.epochs.unwrap_or(30),
            trials: file.trials.unwrap_or(experiments::DEFAULT_TRIALS),
            flat: file.flat.unwrap_or(false),
            ids: file.ids.clone().unwrap_or_default(),
        }
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    fn data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Usage("--data is required".into()))
    }
}

fn merge<T: Clone>(flag: &Option<T>, current: &mut T) {
    if let Some(v) = flag {
        *current = v.clone();
    }
}

fn merge_opt<T: Clone>(flag: &Option<T>, current: &mut Option<T>) {
    if flag.is_some() {
        *current = flag.clone();
    }
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<BTreeMap<usize, [usize; 2]>> {
    let out = cfg.out()?;
    if cfg.classes < 2 {
        return Err(CliError::Usage(format!("--classes {} (need >= 2)", cfg.classes)));
    }
    if cfg.size < 16 {
        return Err(CliError::Usage(format!("--size {} (need >= 16)", cfg.size)));
    }
    let seed = cfg.seed.unwrap_or(0);
    let library = make_board_library(cfg.classes, seed)?;
    let samples = generate_dataset(
        &library,
        &GenerationConfig {
            out_size: cfg.size,
            seed,
            flat: cfg.flat,
            ..GenerationConfig::default()
        },
    )?;
    fs::create_dir_all(out)?;
    write_dataset(&samples, out)?;
    let mut counts: BTreeMap<usize, [usize; 2]> = BTreeMap::new();
    for s in &samples {
        counts.entry(s.class_id).or_default()[s.split as usize] += 1;
    }
    for (class, [train, test]) in &counts {
        println!("class {class}: {train} train / {test} test");
    }
    let train: usize = counts.values().map(|c| c[0]).sum();
    let test: usize = counts.values().map(|c| c[1]).sum();
    println!("total: {train}/{test} ({} classes) -> {}", counts.len(), out.display());
    Ok(counts)
}

pub fn cmd_pose(cfg: &RunConfig) -> Result<()> {
    let (data, out) = (cfg.data()?, cfg.out()?);
    let records = measure_manifest(data, &MeasureConfig::default())?;
    fs::create_dir_all(out)?;
    write_pose_report(&records, &out.join(REPORT_NAME))?;
    let rows = aggregate(&records);
    write_aggregate(&rows, &out.join(AGGREGATE_NAME))?;
    let failed = records.iter().filter(|r| r.theta_measured.is_none()).count();
    println!("{:<14} {:>6} {:>9} {:>9} {:>9} {:>9}", "label", "n", "min", "mean", "sd", "max");
    for r in &rows {
        match r.stats {
            Some(s) => println!(
                "{:<14} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                r.label, r.n, s.min, s.mean, s.sd, s.max
            ),
            None => println!("{:<14} {:>6}", r.label, r.n),
        }
    }
    println!("{} images, {failed} not measured", records.len());
    Ok(())
}

pub fn cmd_exp(cfg: &RunConfig) -> Result<Vec<experiments::TrialResult>> {
    let seed = cfg
        .seed
        .ok_or_else(|| CliError::Usage("exp requires --seed".into()))?;
    if cfg.ids.is_empty() {
        return Err(CliError::Usage(
            "no experiment ids given; valid ids: E1-E9, A1-A16, ALL".into(),
        ));
    }
    let specs = cfg
        .ids
        .iter()
        .map(|id| lookup(id))
        .collect::<Result<Vec<_>, _>>()?;
    let (data, out) = (cfg.data()?, cfg.out()?);
    let dataset = load_dataset(data, Some(cfg.size))?;
    let classes = dataset.iter().map(|s| s.class_id).max().map_or(0, |m| m + 1);
    if !dataset.iter().any(|s| s.split == Split::Test) {
        return Err(ExperimentError::EmptyTestSet.into());
    }
    let settings = RunSettings {
        model: ModelConfig {
            input_size: cfg.size,
            ..ModelConfig::desk(Head::Hvc, classes)
        },
        epochs: cfg.epochs,
        ..RunSettings::desk(classes)
    };
    let mut results = Vec::new();
    for spec in &specs {
        let split = build_split(&dataset, spec)?;
        println!(
            "{}: {} train / {} test, test hash {}",
            spec.id,
            split.train.len(),
            split.test.len(),
            &split.test_hash()[..16]
        );
        for head in Head::BOTH {
            let spec = spec.with_model(head).with_trials(cfg.trials);
            let trials = run_experiment(&spec, &dataset, seed, &settings)
                .map_err(|e| CliError::Trial(format!("{spec}: {e}")))?;
            for t in &trials {
                println!(
                    "  {} trial {} seed {} accuracy {:.4} ({:.1}s)",
                    head.model_name(),
                    t.trial,
                    t.seed,
                    t.accuracy,
                    t.wall_time_s
                );
            }
            results.extend(trials);
        }
    }
    emit_table(&results, out)?;
    println!("results written to {}", out.display());
    Ok(results)
}

pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out()?;
    let results = read_results(&out.join(RESULTS_NAME))?;
    emit_table(&results, out)?;
    print!("{}", experiments::render_tables(&results)?);
    Ok(())
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut cfg = RunConfig::base(&file);
    match &cli.command {
        Command::Gen(a) => {
            merge_opt(&a.out, &mut cfg.out);
            merge(&a.classes, &mut cfg.classes);
            merge(&a.size, &mut cfg.size);
            merge_opt(&a.seed, &mut cfg.seed);
            cfg.flat |= a.flat;
        }
        Command::Pose(a) => {
            merge_opt(&a.data, &mut cfg.data);
            merge_opt(&a.out, &mut cfg.out);
        }
        Command::Exp(a) => {
            merge_opt(&a.data, &mut cfg.data);
            merge_opt(&a.out, &mut cfg.out);
            merge_opt(&a.seed, &mut cfg.seed);
            merge(&a.epochs, &mut cfg.epochs);
            merge(&a.trials, &mut cfg.trials);
            merge(&a.size, &mut cfg.size);
            if !a.ids.is_empty() {
                cfg.ids = a.ids.clone();
            }
        }
        Command::Report(a) => merge_opt(&a.out, &mut cfg.out),
    }
    let jobs = cli.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be positive".into()));
    }
    if let Some(n) = jobs {
        // Fails only when a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Gen(_) => cmd_gen(&cfg).map(drop),
        Command::Pose(_) => cmd_pose(&cfg),
        Command::Exp(_) => cmd_exp(&cfg).map(drop),
        Command::Report(_) => cmd_report(&cfg),
    }
}

/// Parses `args`, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Usage } else { ExitCode::Success };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::Success,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
