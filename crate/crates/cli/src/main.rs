use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use btal::bounds::{
    check_concentration, check_hull_equality, check_retention, check_unbiasedness, dataset_diagnostics, synthetic_class,
    BoundsReport, ConcentrationSetup, SyntheticDistribution, UnbiasednessSetup,
};
use btal::data::Manifest;
use btal::harness::{
    aggregate_figures, emit_tables, run_experiment, run_seed, write_atomic, AggregateResult, Algorithm, ExperimentConfig,
    RunResult,
};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

const RUNS_FILE: &str = "runs.json";
const MANIFEST_FILE: &str = "manifest.json";
const AGGREGATE_FILE: &str = "aggregate.json";

#[derive(Parser)]
#[command(name = "btal", version, about = "Teaching-guided active learning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded repeats of one algorithm on one dataset.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for runs.json and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Average runs into per-figure curves.
    Aggregate {
        /// Run directories or runs.json files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one plot-ready table per figure.
    Report {
        /// An aggregate.json file or the directory holding it.
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo checks of the guarantees, written as one CSV report.
    Bounds {
        #[command(flatten)]
        config: ConfigArgs,
        /// Runs of the concentration check.
        #[arg(long, default_value_t = 200)]
        concentration_runs: usize,
        /// Trials of the hull check.
        #[arg(long, default_value_t = 1000)]
        hull_trials: usize,
        /// Runs of the unbiasedness check.
        #[arg(long, default_value_t = 500)]
        unbiased_runs: usize,
        /// Report file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Debug)]
struct ConfigArgs {
    /// TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    class_size: Option<usize>,
    #[arg(long)]
    n_new: Option<usize>,
    #[arg(long)]
    norm_bound: Option<f64>,
    #[arg(long)]
    stream_length: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    query_rate: Option<f64>,
    /// Record the slack-domination audit for teaching-based pruning.
    #[arg(long)]
    audit: bool,
    /// Directory holding manifest.toml and the dataset files.
    #[arg(long, env = "BTAL_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = v.clone();
        }
        if let Some(v) = self.algo {
            cfg.algorithm = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.class_size {
            cfg.class_size = v;
        }
        if let Some(v) = self.n_new {
            cfg.n_new = v;
        }
        if let Some(v) = self.norm_bound {
            cfg.norm_bound = v;
        }
        if self.stream_length.is_some() {
            cfg.stream_length = self.stream_length;
        }
        if let Some(v) = self.train_fraction {
            cfg.train_fraction = v;
        }
        if self.query_rate.is_some() {
            cfg.query_rate = self.query_rate;
        }
        cfg.audit |= self.audit;
        Ok(cfg)
    }
}

/// Everything needed to reproduce a `run` output.
#[derive(Serialize, Deserialize)]
struct RunManifest {
    tool_version: String,
    commit: String,
    config: ExperimentConfig,
    run_seeds: Vec<u64>,
    files: Vec<String>,
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn cmd_run(args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = args.resolve()?;
    cfg.validate()?;
    let manifest = Manifest::load(&args.data_dir)?;
    let data = manifest.load_binary(&cfg.dataset)?;
    eprintln!(
        "running {} on {} ({} rows, {} repeats)",
        cfg.algorithm,
        cfg.dataset,
        data.rows.len(),
        cfg.repeats
    );
    let results = run_experiment(&cfg, &data)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join(RUNS_FILE), &to_json(&results)?)?;
    let run_manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        commit: env!("BTAL_COMMIT").to_string(),
        run_seeds: (0..cfg.repeats as u64).map(|i| run_seed(cfg.seed, i)).collect(),
        config: cfg,
        files: vec![RUNS_FILE.to_string()],
    };
    write_atomic(&out.join(MANIFEST_FILE), &to_json(&run_manifest)?)?;
    println!("{}", out.join(RUNS_FILE).display());
    Ok(())
}

fn read_runs(input: &Path) -> Result<Vec<RunResult>> {
    let path = if input.is_dir() { input.join(RUNS_FILE) } else { input.to_path_buf() };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_aggregate(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut results = Vec::new();
    for input in inputs {
        results.extend(read_runs(input)?);
    }
    let agg = aggregate_figures(&results)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(AGGREGATE_FILE);
    write_atomic(&path, &to_json(&agg)?)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_report(input: &Path, out: &Path) -> Result<()> {
    let path = if input.is_dir() { input.join(AGGREGATE_FILE) } else { input.to_path_buf() };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let agg: AggregateResult = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    for written in emit_tables(&agg, out)? {
        println!("{}", written.display());
    }
    Ok(())
}

fn cmd_bounds(args: &ConfigArgs, concentration_runs: usize, hull_trials: usize, unbiased_runs: usize, out: &Path) -> Result<()> {
    let cfg = args.resolve()?;
    let seed = cfg.seed;
    let dist = SyntheticDistribution::default();
    let mut report = BoundsReport::default();

    let setup = ConcentrationSetup {
        runs: concentration_runs,
        delta: cfg.delta,
        seed,
        ..Default::default()
    };
    eprintln!("concentration: {} runs", setup.runs);
    let class = synthetic_class(setup.class_size, setup.norm_bound, seed)?;
    report.rows.push(check_concentration(&class, &dist, &setup)?);

    eprintln!("hull equality: {hull_trials} trials");
    report.rows.push(check_hull_equality(hull_trials, 200, seed)?);

    let setup = UnbiasednessSetup {
        runs: unbiased_runs,
        seed,
        ..Default::default()
    };
    eprintln!("unbiasedness: {} runs", setup.runs);
    let class = synthetic_class(setup.hypotheses, setup.norm_bound, seed.wrapping_add(1))?;
    report.rows.push(check_unbiasedness(&class, &dist, &setup)?);

    if !cfg.dataset.is_empty() {
        let data = Manifest::load(&args.data_dir)?.load_binary(&cfg.dataset)?;
        eprintln!("retention: {} runs on {}", cfg.repeats, cfg.dataset);
        report.rows.push(check_retention(&cfg, &data)?);
        let (_, rows) = dataset_diagnostics(&cfg, &data)?;
        report.rows.extend(rows);
    }

    report.write(out)?;
    for row in &report.rows {
        eprintln!("{:<16} {} measured={:.4} {}", row.name, if row.pass { "pass" } else { "FAIL" }, row.measured, row.detail);
    }
    println!("{}", out.display());
    if !report.all_pass() {
        bail!("some checks failed, see {}", out.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::Aggregate { inputs, out } => cmd_aggregate(inputs, out),
        Command::Report { input, out } => cmd_report(input, out),
        Command::Bounds {
            config,
            concentration_runs,
            hull_trials,
            unbiased_runs,
            out,
        } => cmd_bounds(config, *concentration_runs, *hull_trials, *unbiased_runs, out),
    }
}
