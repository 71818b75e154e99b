//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::access::Seed;
use crate::analysis::{self, AccessDistributionParams};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::policies::PolicySpec;
use crate::simulator::{scenario_library, sweep, SimOptions, SimResult, SweepGrid, SweepRow};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CLAIRSIM_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "clairsim-out";

#[derive(Debug, Parser)]
#[command(name = "clairsim", version, about = "Simulate prefetching and caching policies for distributed training I/O")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one policy and write summary.json and batches.csv.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate several policies on the same streams; writes compare.csv and compare.json.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated policy names (default: all).
        #[arg(long, value_delimiter = ',')]
        policies: Vec<PolicySpec>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Access-frequency analysis; writes analysis.json and histogram.csv.
    Analyze {
        #[command(flatten)]
        params: AnalyzeArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate every point of a grid; writes sweep.csv and sweep.json.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// JSON document `{"axes": {"ram_mb": [...], ...}}`.
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Print the built-in presets as JSON.
    Presets,
    /// Print the normalized run configuration.
    DumpConfig {
        #[command(flatten)]
        run: RunArgs,
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Run configuration document (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Policy name, e.g. nopfs, naive, staging-buffer, staging-buffer:ram.
    #[arg(long)]
    pub policy: Option<PolicySpec>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Global mini-batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Keep the final partial batch of every epoch.
    #[arg(long)]
    pub keep_last: bool,
    /// Shrink dataset and capacities by this factor.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Multiply compute and preprocessing throughput.
    #[arg(long)]
    pub compute_multiplier: Option<f64>,
}

impl RunArgs {
    pub fn to_run_config(&self) -> Result<RunConfig> {
        let mut run = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None if self.preset.is_some() => RunConfig::default(),
            None => return Err(Error::config("give --config or --preset")),
        };
        if let Some(p) = &self.preset {
            run.preset = Some(p.clone());
        }
        if let Some(p) = &self.policy {
            run.policy = p.clone();
        }
        if let Some(s) = self.seed {
            run.seed = s;
        }
        if let Some(e) = self.epochs {
            run.epochs = Some(e);
        }
        if let Some(b) = self.batch_size {
            run.batch_size = Some(b);
        }
        if self.keep_last {
            run.drop_last = false;
        }
        if let Some(s) = self.scale {
            run.scale *= s;
        }
        if let Some(m) = self.compute_multiplier {
            run.compute_multiplier *= m;
        }
        Ok(run)
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory (default: $CLAIRSIM_OUT_DIR or ./clairsim-out).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl OutArgs {
    pub fn dir(&self) -> Result<PathBuf> {
        let dir = self
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub workers: usize,
    #[arg(long)]
    pub epochs: usize,
    #[arg(long)]
    pub samples: usize,
    /// Relative excess over the mean access count.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also count hot samples on a generated stream.
    #[arg(long)]
    pub monte_carlo: bool,
}

/// Parse arguments, run, and return the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Simulate { run, out } => cmd_simulate(&run.to_run_config()?, &out.dir()?),
        Command::Compare { run, policies, out } => cmd_compare(&run.to_run_config()?, policies, &out.dir()?),
        Command::Analyze { params, out } => cmd_analyze(params, &out.dir()?),
        Command::Sweep { run, grid, out } => {
            let text = fs::read_to_string(grid)
                .map_err(|e| Error::config(format!("cannot read grid {}: {e}", grid.display())))?;
            let grid: SweepGrid =
                serde_json::from_str(&text).map_err(|e| Error::config(format!("invalid grid: {e}")))?;
            cmd_sweep(&run.to_run_config()?, &grid, &out.dir()?)
        }
        Command::Presets => {
            println!("{}", serde_json::to_string_pretty(&scenario_library())?);
            Ok(())
        }
        Command::DumpConfig { run, output } => {
            let text = run.to_run_config()?.normalize()?.to_json() + "\n";
            match output {
                Some(path) => fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn batches_csv(path: &Path, result: &SimResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["batch_index".to_string(), "worker".to_string(), "seconds".to_string()];
    header.extend(result.locations.iter().map(|l| format!("{}_mb", l.location)));
    w.write_record(&header)?;
    for b in &result.batches {
        let mut row = vec![b.batch_index.to_string(), b.worker.to_string(), b.seconds.to_string()];
        row.extend(b.bytes_mb.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Simulate one run and write `summary.json` and `batches.csv` into `out`.
pub fn cmd_simulate(run: &RunConfig, out: &Path) -> Result<()> {
    let prepared = run.prepare()?;
    let result = prepared.simulate(SimOptions { record_batches: true, record_timeline: false })?;
    write_json(&out.join("summary.json"), &result)?;
    batches_csv(&out.join("batches.csv"), &result)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

#[derive(Serialize)]
struct CompareEntry {
    policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<SimResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Run several policies on the same streams.
pub fn cmd_compare(run: &RunConfig, policies: &[PolicySpec], out: &Path) -> Result<()> {
    let policies = if policies.is_empty() { PolicySpec::all() } else { policies.to_vec() };
    let mut base = run.clone();
    // Feasibility is judged per policy below.
    base.policy = PolicySpec::Perfect;
    let prepared = base.prepare()?;
    let streams = prepared.streams()?;
    let outcomes: Vec<(PolicySpec, Result<SimResult>)> = policies
        .par_iter()
        .map(|spec| {
            let outcome = prepared
                .build_policy(spec, &streams)
                .and_then(|p| crate::simulator::simulate(&prepared.system, &prepared.data, &p, SimOptions::default()));
            (spec.clone(), outcome)
        })
        .collect();
    let mut invariant = None;
    let mut entries = Vec::with_capacity(outcomes.len());
    for (spec, outcome) in outcomes {
        let policy = spec.name().to_string();
        match outcome {
            Ok(r) => entries.push(CompareEntry { policy, result: Some(r), error: None }),
            Err(e) => {
                if let Error::Invariant(msg) = &e {
                    invariant.get_or_insert_with(|| msg.clone());
                }
                entries.push(CompareEntry { policy, result: None, error: Some(e.to_string()) });
            }
        }
    }

    let mut w = csv::Writer::from_path(out.join("compare.csv"))?;
    w.write_record(["policy", "total_time_s", "location", "fetch_time_s", "fraction", "bytes_mb"])?;
    for e in &entries {
        match &e.result {
            Some(r) => {
                for l in &r.locations {
                    w.write_record([
                        e.policy.clone(),
                        r.total_time_s.to_string(),
                        l.location.clone(),
                        l.fetch_time_s.to_string(),
                        r.fraction(&l.location).to_string(),
                        l.bytes_mb.to_string(),
                    ])?;
                }
            }
            None => eprintln!("{}: {}", e.policy, e.error.as_deref().unwrap_or("failed")),
        }
    }
    w.flush()?;
    write_json(&out.join("compare.json"), &entries)?;
    for e in &entries {
        match &e.result {
            Some(r) => println!(
                "{:<18} total {:>12.3} s  stall {:>10.3} s  pfs {:>12.1} MB",
                e.policy,
                r.total_time_s,
                r.total_stall_s(),
                r.pfs_total_mb
            ),
            None => println!("{:<18} {}", e.policy, e.error.as_deref().unwrap_or("failed")),
        }
    }
    match invariant {
        Some(msg) => Err(Error::invariant(msg)),
        None => Ok(()),
    }
}

/// Summary of [`cmd_analyze`].
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub workers: usize,
    pub epochs: usize,
    pub samples: usize,
    pub delta: f64,
    pub hot_threshold_accesses: i64,
    pub prob_exceeds: f64,
    pub expected_hot_samples: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterpart_bounds: Option<analysis::CounterpartBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo_hot_samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo_relative_error: Option<f64>,
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(AnalysisSummary, Vec<f64>, Option<analysis::FrequencyHistogram>)> {
    let params = AccessDistributionParams {
        workers: args.workers,
        epochs: args.epochs,
        samples: args.samples,
        delta: args.delta,
    };
    params.validate()?;
    if args.samples == 0 {
        return Err(Error::config("samples must be at least 1"));
    }
    let expected = analysis::expected_hot_samples(&params);
    let threshold = analysis::hot_threshold(&params);
    let histogram = if args.monte_carlo {
        Some(analysis::monte_carlo_histogram(Seed(args.seed), &params)?)
    } else {
        None
    };
    let mc = histogram.as_ref().map(|h| h.at_least(threshold.max(0) as usize));
    let summary = AnalysisSummary {
        workers: args.workers,
        epochs: args.epochs,
        samples: args.samples,
        delta: args.delta,
        hot_threshold_accesses: threshold,
        prob_exceeds: analysis::prob_exceeds(&params),
        expected_hot_samples: expected,
        counterpart_bounds: analysis::counterpart_bounds(args.workers, args.epochs, args.delta).ok(),
        monte_carlo_hot_samples: mc,
        monte_carlo_relative_error: mc.filter(|_| expected > 0.0).map(|m| (m as f64 - expected).abs() / expected),
    };
    Ok((summary, analysis::expected_histogram(&params), histogram))
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &Path) -> Result<()> {
    let (summary, expected, histogram) = analyze(args)?;
    write_json(&out.join("analysis.json"), &summary)?;
    let mut w = csv::Writer::from_path(out.join("histogram.csv"))?;
    w.write_record(["accesses", "expected_samples", "observed_samples"])?;
    for (k, e) in expected.iter().enumerate() {
        let observed = histogram.as_ref().map_or(String::new(), |h| h.buckets[k].to_string());
        w.write_record([k.to_string(), e.to_string(), observed])?;
    }
    w.flush()?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

/// Run a sweep and write `sweep.csv` and `sweep.json`.
pub fn cmd_sweep(run: &RunConfig, grid: &SweepGrid, out: &Path) -> Result<()> {
    grid.validate()?;
    let mut base = run.clone();
    let spec = base.policy.clone();
    base.policy = PolicySpec::Perfect;
    let prepared = base.prepare()?;
    let streams = prepared.streams()?;
    let rows = sweep(&prepared.system, &prepared.data, &streams, &spec, prepared.seed, grid)?;
    write_sweep_csv(&out.join("sweep.csv"), grid, &rows)?;
    let json_rows: Vec<_> = rows
        .iter()
        .map(|r| {
            let point: serde_json::Map<String, serde_json::Value> =
                r.point.iter().map(|(a, v)| (a.name().to_string(), json!(v))).collect();
            json!({ "point": point, "result": r.result, "error": r.error })
        })
        .collect();
    write_json(&out.join("sweep.json"), &json_rows)?;
    for r in &rows {
        let coords: Vec<String> = r.point.iter().map(|(a, v)| format!("{}={v}", a.name())).collect();
        match &r.result {
            Some(res) => println!("{}  total {:.3} s", coords.join(" "), res.total_time_s),
            None => println!("{}  failed: {}", coords.join(" "), r.error.as_deref().unwrap_or("")),
        }
    }
    Ok(())
}

fn write_sweep_csv(path: &Path, grid: &SweepGrid, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = grid.axes.keys().map(|a| a.name().to_string()).collect();
    header.extend(
        ["status", "total_time_s", "stall_time_s", "pfs_total_mb", "coverage", "error"].map(String::from),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut row: Vec<String> = r.point.iter().map(|(_, v)| v.to_string()).collect();
        match &r.result {
            Some(res) => row.extend([
                "ok".to_string(),
                res.total_time_s.to_string(),
                res.total_stall_s().to_string(),
                res.pfs_total_mb.to_string(),
                res.coverage.to_string(),
                String::new(),
            ]),
            None => row.extend([
                "failed".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                r.error.clone().unwrap_or_default(),
            ]),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
