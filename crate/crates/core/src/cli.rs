//! Command-line front end: `run`, `sweep`, `stats` and `emit`.
//!
//! Exit codes are 0 on success, 1 when a run or an input file fails, and 2 when the
//! configuration or the command line is invalid.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use walkdir::WalkDir;

use crate::config::{parse_tau_list, ConfigError, StudyConfig};
use crate::exper::{
    condition_dir, for_each_run, make_seed_plan, read_run_csv, tau_conditions, Condition,
    ExperError, ExperimentConfig, SweepAxis, FINGERPRINT_PREFIX, SWEEP_TAUS,
};
use crate::stats::{
    aggregate_at, mean_ci_band, mean_curve, performance_curve, performance_curve_from_steps,
    performance_histogram, replay_frequency_curve, sensitivity_table, summarize_runs,
    tolerance_band, AggregateResult, CenterKind, IntervalBand, PerformanceCurve, TableRow,
    ToleranceMethod, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_HISTOGRAM_BINS,
};

pub const RESULTS_ENV: &str = "REPLAY_SCOPE_RESULTS";
pub const DEFAULT_RESULTS_DIR: &str = "results";
/// Directories starting with this are skipped when `stats` looks for run logs.
pub const STATS_DIR: &str = "_stats";

#[derive(Debug, Parser)]
#[command(name = "replay-scope", version, about = "Replay-frequency experiments for DQN on Mountain Car")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides shared by `run` and `sweep`.
#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output root. Falls back to $REPLAY_SCOPE_RESULTS, then `results`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated replay frequencies.
    #[arg(long)]
    pub taus: Option<String>,
    /// Runs executed in parallel. Defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every tau of a config and write one CSV and JSON sidecar per run.
    Run(RunArgs),
    /// Sweep one hyperparameter over a grid, for tau 1 and 4 unless overridden.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated grid replacing the default one for the axis.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Summarise run logs under a results directory into CSV tables.
    Stats(StatsArgs),
    /// Print the default config file.
    Emit {
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum What {
    Curves,
    Bands,
    Freqcurve,
    Sensitivity,
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Confidence,
    Tolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Center {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Parametric,
    Order,
}

#[derive(Debug, Clone, clap::Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, value_enum)]
    pub what: What,
    #[arg(long, value_enum, default_value = "confidence")]
    pub kind: Kind,
    #[arg(long, value_enum, default_value = "mean")]
    pub center: Center,
    #[arg(long, value_enum, default_value = "parametric")]
    pub method: Method,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
    pub bins: usize,
    /// Output directory; defaults to `<dir>/_stats`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ExperError> for CliError {
    fn from(e: ExperError) -> Self {
        match e {
            ExperError::Config(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (program name first), executes the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    let stdout = io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Sweep { args, axis, grid } => cmd_sweep(&args, axis, grid.as_deref(), out),
        Command::Stats(args) => cmd_stats(&args, out),
        Command::Emit { out: path } => cmd_emit(path.as_deref(), out),
    }
}

fn results_root(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(RESULTS_ENV)
            .filter(|v| !v.is_empty())
            .map_or_else(|| PathBuf::from(DEFAULT_RESULTS_DIR), PathBuf::from),
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Config file plus command-line overrides, validated as a whole.
fn load_study(args: &RunArgs) -> Result<StudyConfig, CliError> {
    let mut study = match &args.config {
        Some(path) => StudyConfig::load(path)?,
        None => StudyConfig::default(),
    };
    if let Some(runs) = args.runs {
        study.base.runs = runs;
    }
    if let Some(steps) = args.steps {
        study.base.steps = steps;
    }
    if let Some(seed) = args.seed {
        study.base.master_seed = seed;
    }
    if let Some(raw) = &args.taus {
        study.taus = parse_tau_list(raw).map_err(|m| CliError::Validation(format!("taus: {m}")))?;
    }
    if args.jobs == Some(0) {
        return Err(CliError::Validation("jobs: must be at least 1".into()));
    }
    study.validate()?;
    Ok(study)
}

/// Runs the conditions, writing each run as it finishes, and prints one summary
/// line per condition.
fn execute_conditions(
    conditions: &[Condition],
    base: &ExperimentConfig,
    root: &Path,
    experiment: &str,
    jobs: usize,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let plan = make_seed_plan(base.master_seed, base.runs)?;
    let mut per_run: Vec<Vec<Option<f64>>> = conditions
        .iter()
        .map(|c| vec![None; c.config.runs])
        .collect();
    for_each_run(conditions, &plan, jobs, |ci, log| {
        let cond = &conditions[ci];
        log.write_files(&condition_dir(root, experiment, cond), &cond.config)?;
        per_run[ci][log.run_index] = Some(performance_curve(&log).aggregate());
        Ok(())
    })?;
    for (cond, values) in conditions.iter().zip(per_run) {
        let values: Vec<f64> = values.into_iter().flatten().collect();
        let summary = summarize_runs(&values, DEFAULT_ALPHA).map_err(runtime)?;
        let label = match cond.axis_value {
            Some(_) => format!("{experiment}={} ", cond.value_label()),
            None => String::new(),
        };
        writeln!(
            out,
            "{label}tau={} runs={} mean={:.2} ci95={}",
            cond.tau(),
            values.len(),
            summary.grand_mean,
            format_ci(summary.ci_half_width)
        )
        .map_err(runtime)?;
    }
    Ok(())
}

fn format_ci(ci: Option<f64>) -> String {
    ci.map_or_else(|| "NA".to_string(), |h| format!("±{h:.2}"))
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let study = load_study(args)?;
    let conditions = tau_conditions(&study.base, &study.taus)?;
    let root = results_root(args.out.as_deref());
    let jobs = args.jobs.unwrap_or_else(default_jobs);
    execute_conditions(&conditions, &study.base, &root, &study.name, jobs, out)?;
    writeln!(out, "wrote {}", root.join(&study.name).display()).map_err(runtime)
}

fn parse_grid(raw: &str) -> Result<Vec<f64>, CliError> {
    let grid: Vec<f64> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CliError::Validation(format!("grid: {s:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if grid.is_empty() {
        return Err(CliError::Validation("grid: empty grid".into()));
    }
    Ok(grid)
}

fn cmd_sweep(
    args: &RunArgs,
    axis: SweepAxis,
    grid: Option<&str>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut args = args.clone();
    if args.taus.is_none() {
        let taus: Vec<String> = SWEEP_TAUS.iter().map(u32::to_string).collect();
        args.taus = Some(taus.join(","));
    }
    let study = load_study(&args)?;
    let grid = match grid {
        Some(raw) => parse_grid(raw)?,
        None => axis.default_grid(),
    };
    let conditions =
        crate::exper::sweep_conditions(&study.base, axis, &grid, &study.taus)?;
    let root = results_root(args.out.as_deref());
    let jobs = args.jobs.unwrap_or_else(default_jobs);
    execute_conditions(&conditions, &study.base, &root, axis.name(), jobs, out)?;
    writeln!(out, "wrote {}", root.join(axis.name()).display()).map_err(runtime)
}

fn cmd_emit(path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let text = StudyConfig::default().to_text();
    match path {
        Some(p) => fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(runtime),
    }
}

// ---------------------------------------------------------------------------
// stats

/// All runs found in one condition directory.
#[derive(Debug, Clone)]
pub struct ConditionData {
    /// Path relative to the stats root, `<...>/<value>/<tau>`.
    pub rel: PathBuf,
    pub tau: u32,
    /// Swept value, when the parent directory name is numeric.
    pub value: Option<f64>,
    pub fingerprint: String,
    pub curves: Vec<PerformanceCurve>,
}

fn is_run_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "csv")
        && path
            .file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
}

/// Directories under `root` holding `<run>.csv` files, skipping names starting with `_`.
fn find_condition_dirs(root: &Path) -> Result<Vec<PathBuf>, walkdir::Error> {
    let mut found = BTreeSet::new();
    let walker = WalkDir::new(root).into_iter().filter_entry(|e| {
        e.depth() == 0 || !e.file_type().is_dir() || !e.file_name().to_string_lossy().starts_with('_')
    });
    for entry in walker {
        let entry = entry?;
        if entry.file_type().is_file() && is_run_csv(entry.path()) {
            if let Some(parent) = entry.path().parent() {
                found.insert(parent.to_path_buf());
            }
        }
    }
    Ok(found.into_iter().collect())
}

/// Loads every condition under `root`. Any unreadable or inconsistent file makes
/// the whole load fail, naming each offending file.
pub fn load_conditions(root: &Path) -> Result<Vec<ConditionData>, CliError> {
    if !root.is_dir() {
        return Err(runtime(format!("{}: not a directory", root.display())));
    }
    let dirs = find_condition_dirs(root).map_err(|e| runtime(format!("{}: {e}", root.display())))?;
    if dirs.is_empty() {
        return Err(runtime(format!("{}: no run logs found", root.display())));
    }
    let mut problems = Vec::new();
    let mut out = Vec::new();
    for dir in dirs {
        let rel = dir.strip_prefix(root).unwrap_or(&dir).to_path_buf();
        let tau = dir
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse::<u32>().ok())
            .filter(|&t| t > 0);
        let Some(tau) = tau else {
            problems.push(format!("{}: directory name is not a replay frequency", dir.display()));
            continue;
        };
        let value = dir
            .parent()
            .and_then(Path::file_name)
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse::<f64>().ok());
        let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| is_run_csv(p))
                .collect(),
            Err(e) => {
                problems.push(format!("{}: {e}", dir.display()));
                continue;
            }
        };
        files.sort_by_key(|p| {
            p.file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<usize>().ok())
        });
        let mut fingerprints = BTreeSet::new();
        let mut curves = Vec::with_capacity(files.len());
        let mut length = None;
        for file in &files {
            match read_run_csv(file) {
                Err(e) => problems.push(e.to_string()),
                Ok(run) => {
                    let Some(fp) = run.fingerprint else {
                        problems.push(format!("{}: missing config fingerprint", file.display()));
                        continue;
                    };
                    if run.steps.is_empty() {
                        problems.push(format!("{}: no steps", file.display()));
                        continue;
                    }
                    if *length.get_or_insert(run.steps.len()) != run.steps.len() {
                        problems.push(format!(
                            "{}: {} steps, other runs in this condition have {}",
                            file.display(),
                            run.steps.len(),
                            length.unwrap_or(0)
                        ));
                        continue;
                    }
                    fingerprints.insert(fp);
                    curves.push(performance_curve_from_steps(&run.steps));
                }
            }
        }
        if fingerprints.len() > 1 {
            problems.push(format!("{}: runs carry different config fingerprints", dir.display()));
            continue;
        }
        if let Some(fingerprint) = fingerprints.into_iter().next() {
            out.push(ConditionData {
                rel,
                tau,
                value,
                fingerprint,
                curves,
            });
        }
    }
    if !problems.is_empty() {
        let mut msg = String::from("missing or corrupt run logs:");
        for p in &problems {
            let _ = write!(msg, "\n  {p}");
        }
        return Err(CliError::Runtime(msg));
    }
    Ok(out)
}

fn fingerprint_header(fingerprints: &BTreeSet<&str>) -> String {
    fingerprints
        .iter()
        .map(|fp| format!("{FINGERPRINT_PREFIX}{fp}\n"))
        .collect()
}

fn write_output(path: &Path, fingerprints: &BTreeSet<&str>, body: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    let text = fingerprint_header(fingerprints) + body;
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn band_csv(center: &[f64], lower: Option<&[f64]>, upper: Option<&[f64]>) -> String {
    let mut s = String::from("step,center,lower,upper\n");
    for (k, c) in center.iter().enumerate() {
        let _ = writeln!(
            s,
            "{k},{c},{},{}",
            fmt_opt(lower.map(|l| l[k])),
            fmt_opt(upper.map(|u| u[k]))
        );
    }
    s
}

fn table_csv(rows: &[TableRow], x_of: impl Fn(&TableRow) -> f64) -> String {
    let mut s = String::from("x,tau,mean,ci_halfwidth\n");
    for row in rows {
        let _ = writeln!(s, "{},{},{},{}", x_of(row), row.tau, row.mean, fmt_opt(row.ci_half_width));
    }
    s
}

fn band_for(data: &ConditionData, args: &StatsArgs) -> Result<Option<IntervalBand>, CliError> {
    if data.curves.len() < 2 {
        return Ok(None);
    }
    let band = match args.kind {
        Kind::Confidence => mean_ci_band(&data.curves, args.alpha),
        Kind::Tolerance => {
            let center = match args.center {
                Center::Mean => CenterKind::Mean,
                Center::Median => CenterKind::MedianAgent,
            };
            let method = match args.method {
                Method::Parametric => ToleranceMethod::Parametric,
                Method::Order => ToleranceMethod::OrderStatistic,
            };
            tolerance_band(&data.curves, args.alpha, args.beta, center, method)
        }
    };
    band.map(Some)
        .map_err(|e| CliError::Validation(e.to_string()))
}

fn check_stats_args(args: &StatsArgs) -> Result<(), CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Validation(format!("alpha: must lie in (0, 1), got {}", args.alpha)));
    }
    if !(args.beta > 0.0 && args.beta < 1.0) {
        return Err(CliError::Validation(format!("beta: must lie in (0, 1), got {}", args.beta)));
    }
    if args.bins == 0 {
        return Err(CliError::Validation("bins: must be at least 1".into()));
    }
    Ok(())
}

/// Parent of a condition directory: the `<experiment>/<value>` level.
fn group_of(data: &ConditionData) -> PathBuf {
    data.rel.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn cmd_stats(args: &StatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    check_stats_args(args)?;
    let conditions = load_conditions(&args.dir)?;
    let out_dir = args.out.clone().unwrap_or_else(|| args.dir.join(STATS_DIR));
    let mut written = Vec::new();
    match args.what {
        What::Curves | What::Bands => {
            for data in &conditions {
                let fps = BTreeSet::from([data.fingerprint.as_str()]);
                let (name, body) = if args.what == What::Curves {
                    let mean = mean_curve(&data.curves).map_err(runtime)?;
                    let band = if data.curves.len() >= 2 {
                        Some(mean_ci_band(&data.curves, args.alpha).map_err(runtime)?)
                    } else {
                        None
                    };
                    let body = band_csv(
                        &mean.0,
                        band.as_ref().map(|b| b.lower.as_slice()),
                        band.as_ref().map(|b| b.upper.as_slice()),
                    );
                    ("curve.csv".to_string(), body)
                } else {
                    let band = band_for(data, args)?;
                    let name = match args.kind {
                        Kind::Confidence => "band_confidence_mean.csv".to_string(),
                        Kind::Tolerance => format!(
                            "band_tolerance_{}_{}.csv",
                            match args.center {
                                Center::Mean => "mean",
                                Center::Median => "median",
                            },
                            match args.method {
                                Method::Parametric => "parametric",
                                Method::Order => "order",
                            }
                        ),
                    };
                    let body = match &band {
                        Some(b) => band_csv(&b.center, Some(&b.lower), Some(&b.upper)),
                        None => band_csv(&data.curves[0].0, None, None),
                    };
                    (name, body)
                };
                let path = out_dir.join(&data.rel).join(name);
                write_output(&path, &fps, &body)?;
                written.push(path);
            }
        }
        What::Freqcurve => {
            let mut groups: BTreeMap<PathBuf, Vec<&ConditionData>> = BTreeMap::new();
            for data in &conditions {
                groups.entry(group_of(data)).or_default().push(data);
            }
            for (group, members) in groups {
                let mut results: BTreeMap<u32, AggregateResult> = BTreeMap::new();
                for data in &members {
                    results.insert(data.tau, aggregate_at(&data.curves, args.alpha).map_err(runtime)?);
                }
                let fps: BTreeSet<&str> = members.iter().map(|d| d.fingerprint.as_str()).collect();
                let rows = replay_frequency_curve(&results);
                let path = out_dir.join(&group).join("freqcurve.csv");
                write_output(&path, &fps, &table_csv(&rows, |r| r.log2_x))?;
                written.push(path);
            }
        }
        What::Sensitivity => {
            let mut groups: BTreeMap<PathBuf, Vec<&ConditionData>> = BTreeMap::new();
            for data in conditions.iter().filter(|d| d.value.is_some()) {
                let axis_dir = group_of(data).parent().map(Path::to_path_buf).unwrap_or_default();
                groups.entry(axis_dir).or_default().push(data);
            }
            if groups.is_empty() {
                return Err(runtime(format!(
                    "{}: no swept conditions (expected <axis>/<value>/<tau> directories)",
                    args.dir.display()
                )));
            }
            for (axis_dir, members) in groups {
                let mut results = Vec::with_capacity(members.len());
                for data in &members {
                    let agg = aggregate_at(&data.curves, args.alpha).map_err(runtime)?;
                    results.push((data.value.unwrap_or(f64::NAN), data.tau, agg));
                }
                let fps: BTreeSet<&str> = members.iter().map(|d| d.fingerprint.as_str()).collect();
                let rows = sensitivity_table(&results);
                let path = out_dir.join(&axis_dir).join("sensitivity.csv");
                write_output(&path, &fps, &table_csv(&rows, |r| r.x))?;
                written.push(path);
            }
        }
        What::Histogram => {
            for data in &conditions {
                let per_run: Vec<f64> = data.curves.iter().map(PerformanceCurve::aggregate).collect();
                let bins = performance_histogram(&per_run, args.bins).map_err(runtime)?;
                let mut body = String::from("bin_left,bin_right,count\n");
                for b in bins {
                    let _ = writeln!(body, "{},{},{}", b.left, b.right, b.count);
                }
                let path = out_dir.join(&data.rel).join("histogram.csv");
                write_output(&path, &BTreeSet::from([data.fingerprint.as_str()]), &body)?;
                written.push(path);
            }
        }
    }
    for data in &conditions {
        if data.curves.len() < 2 && matches!(args.what, What::Curves | What::Bands) {
            writeln!(
                out,
                "{}: single run, interval reported as NA",
                data.rel.display()
            )
            .map_err(runtime)?;
        }
    }
    for path in written {
        writeln!(out, "wrote {}", path.display()).map_err(runtime)?;
    }
    Ok(())
}
