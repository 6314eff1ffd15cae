//! Seed planning, single-run execution, and sweep orchestration.
//!
//! Every random stream is ChaCha8 (`rand_chacha`). A [`SeedPlan`] expands one
//! master seed into per-run seeds for network initialisation, exploration and
//! mini-batch sampling, plus a virtual `(run, episode)` matrix of reset seeds.
//! None of these depend on the agent configuration, so run `i` of two different
//! conditions starts from the same network and sees the same initial state in
//! episode `j`.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{Agent, AgentConfig, AgentError, AgentRngs};
use crate::env::{CarState, MountainCar};
use crate::nn::xavier_init;
use crate::replay::ReplayBuffer;

pub const PRNG_NAME: &str = "chacha8";
pub const DEFAULT_STEPS: u64 = 250_000;
pub const DEFAULT_RUNS: usize = 30;
pub const DEFAULT_TAUS: [u32; 6] = [1, 2, 4, 8, 16, 32];
pub const SWEEP_TAUS: [u32; 2] = [1, 4];
pub const DEFAULT_MASTER_SEED: u64 = 20_221_030;

const STREAM_NET_INIT: u64 = 0;
const STREAM_EXPLORATION: u64 = 1;
const STREAM_SAMPLING: u64 = 2;
const STREAM_EPISODES: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum ExperError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("run {run} failed at step {step}: {source}")]
    Run {
        run: usize,
        step: u64,
        #[source]
        source: AgentError,
    },
    #[error("run index {0} out of range for {1} runs")]
    RunIndex(usize, usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperError + '_ {
    move |source| ExperError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub agent: AgentConfig,
    /// Environment steps per run.
    pub steps: u64,
    pub runs: usize,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            agent: AgentConfig::default(),
            steps: DEFAULT_STEPS,
            runs: DEFAULT_RUNS,
            master_seed: DEFAULT_MASTER_SEED,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperError> {
        self.agent
            .validate()
            .map_err(|e| ExperError::Config(e.to_string()))?;
        if self.runs == 0 {
            return Err(ExperError::Config("runs must be at least 1".into()));
        }
        if self.steps < self.agent.replay_start {
            return Err(ExperError::Config("steps must be at least replay_start".into()));
        }
        Ok(())
    }

    /// Sorted `key=value` lines describing everything that influences a run.
    pub fn canonical_text(&self) -> String {
        let a = &self.agent;
        let mut pairs = vec![
            ("adam_eps", format!("{:?}", a.adam.eps)),
            ("batch_size", a.batch_size.to_string()),
            ("beta1", format!("{:?}", a.adam.beta1)),
            ("beta2", format!("{:?}", a.adam.beta2)),
            ("bootstrap_on_truncation", a.bootstrap_on_truncation.to_string()),
            ("capacity", a.capacity.to_string()),
            ("decay_during_prefill", a.decay_during_prefill.to_string()),
            ("epsilon_decay", format!("{:?}", a.epsilon_decay)),
            ("epsilon_final", format!("{:?}", a.epsilon_final)),
            ("epsilon_initial", format!("{:?}", a.epsilon_initial)),
            ("gamma", format!("{:?}", a.gamma)),
            ("lr", format!("{:?}", a.adam.lr)),
            ("master_seed", self.master_seed.to_string()),
            ("prng", PRNG_NAME.to_string()),
            ("replay_start", a.replay_start.to_string()),
            ("runs", self.runs.to_string()),
            ("steps", self.steps.to_string()),
            ("target_refresh", a.target_refresh.to_string()),
            ("tau", a.tau.to_string()),
        ];
        pairs.sort();
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// SHA-256 of [`canonical_text`](Self::canonical_text), hex encoded.
    pub fn fingerprint(&self) -> String {
        hex_digest(self.canonical_text().as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub net_init: u64,
    pub exploration: u64,
    pub sampling: u64,
}

/// All seeds for `runs` runs under one master seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPlan {
    master_seed: u64,
    net_init: Vec<u64>,
    exploration: Vec<u64>,
    sampling: Vec<u64>,
}

fn stream(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

pub fn make_seed_plan(master_seed: u64, runs: usize) -> Result<SeedPlan, ExperError> {
    if runs == 0 {
        return Err(ExperError::Config("runs must be at least 1".into()));
    }
    let draw = |s| {
        let mut rng = stream(master_seed, s);
        (0..runs).map(|_| rng.next_u64()).collect::<Vec<_>>()
    };
    Ok(SeedPlan {
        master_seed,
        net_init: draw(STREAM_NET_INIT),
        exploration: draw(STREAM_EXPLORATION),
        sampling: draw(STREAM_SAMPLING),
    })
}

impl SeedPlan {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn runs(&self) -> usize {
        self.net_init.len()
    }

    pub fn net_init_seeds(&self) -> &[u64] {
        &self.net_init
    }

    pub fn run_seeds(&self, run: usize) -> Result<RunSeeds, ExperError> {
        if run >= self.runs() {
            return Err(ExperError::RunIndex(run, self.runs()));
        }
        Ok(RunSeeds {
            net_init: self.net_init[run],
            exploration: self.exploration[run],
            sampling: self.sampling[run],
        })
    }

    /// Reset seed for episode `episode` of run `run`: word `2 * episode` of the
    /// run's dedicated ChaCha8 stream, so any entry is computed in O(1).
    pub fn episode_seed(&self, run: usize, episode: u64) -> u64 {
        let mut rng = stream(self.master_seed, STREAM_EPISODES + run as u64);
        rng.set_word_pos(2 * episode as u128);
        rng.next_u64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: u64,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// State the episode was reset to.
    pub start: CarState,
    pub length: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub truncated: bool,
    /// False only for a trailing episode cut short by the end of the run.
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub run_index: usize,
    pub fingerprint: String,
    pub seeds: RunSeeds,
    pub steps: Vec<StepRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub duration_secs: f64,
}

/// Executes one run of exactly `config.steps` environment steps.
pub fn run(config: &ExperimentConfig, run_index: usize, plan: &SeedPlan) -> Result<RunLog, ExperError> {
    config.validate()?;
    let seeds = plan.run_seeds(run_index)?;
    let started = Instant::now();
    let fail = |step: u64| move |source: AgentError| ExperError::Run {
        run: run_index,
        step,
        source,
    };

    let mut agent = Agent::new(config.agent, xavier_init(seeds.net_init)).map_err(fail(0))?;
    let mut rngs = AgentRngs {
        exploration: ChaCha8Rng::seed_from_u64(seeds.exploration),
        sampling: ChaCha8Rng::seed_from_u64(seeds.sampling),
    };
    let mut buffer = ReplayBuffer::new(config.agent.capacity).map_err(|e| fail(0)(e.into()))?;
    let mut env = MountainCar::new();

    let mut steps = Vec::with_capacity(config.steps as usize);
    let mut episodes = Vec::new();
    let mut episode = 0u64;
    let (mut length, mut ret) = (0u64, 0.0);
    let mut start = env.reset(plan.episode_seed(run_index, episode));

    for step in 0..config.steps {
        let result = agent
            .env_step(&mut env, &mut buffer, &mut rngs)
            .map_err(fail(step))?;
        steps.push(StepRecord {
            episode,
            reward: result.reward,
        });
        length += 1;
        ret += result.reward;
        if result.done() {
            episodes.push(EpisodeRecord {
                start,
                length,
                ret,
                truncated: result.truncated,
                finished: true,
            });
            episode += 1;
            (length, ret) = (0, 0.0);
            start = env.reset(plan.episode_seed(run_index, episode));
        }
    }
    if length > 0 {
        episodes.push(EpisodeRecord {
            start,
            length,
            ret,
            truncated: false,
            finished: false,
        });
    }
    Ok(RunLog {
        run_index,
        fingerprint: config.fingerprint(),
        seeds,
        steps,
        episodes,
        duration_secs: started.elapsed().as_secs_f64(),
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, ExperError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperError::Pool(e.to_string()))
}

/// All runs of one configuration, `jobs` at a time. Output order is by run index.
pub fn run_all(config: &ExperimentConfig, plan: &SeedPlan, jobs: usize) -> Result<Vec<RunLog>, ExperError> {
    let conditions = [Condition {
        axis_value: None,
        config: *config,
    }];
    Ok(run_conditions(&conditions, plan, jobs)?
        .pop()
        .expect("one condition")
        .logs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    LearningRate,
    BatchSize,
    Capacity,
    TargetRefresh,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [
        SweepAxis::LearningRate,
        SweepAxis::BatchSize,
        SweepAxis::Capacity,
        SweepAxis::TargetRefresh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::LearningRate => "lr",
            SweepAxis::BatchSize => "batch",
            SweepAxis::Capacity => "capacity",
            SweepAxis::TargetRefresh => "refresh",
        }
    }

    /// Grid studied for this hyperparameter.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepAxis::LearningRate => vec![0.0001, 0.001, 0.01, 0.1],
            SweepAxis::BatchSize => vec![8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0],
            SweepAxis::Capacity => vec![
                500.0, 1000.0, 4000.0, 10_000.0, 20_000.0, 100_000.0, 200_000.0, 250_000.0,
            ],
            SweepAxis::TargetRefresh => vec![8.0, 32.0, 128.0, 256.0, 512.0, 1024.0],
        }
    }

    pub fn apply(self, cfg: &mut AgentConfig, value: f64) -> Result<(), ExperError> {
        let bad = || ExperError::Config(format!("invalid {} value {value}", self.name()));
        let positive_int = || {
            if value.is_finite() && value >= 1.0 && value.fract() == 0.0 {
                Ok(value as u64)
            } else {
                Err(bad())
            }
        };
        match self {
            SweepAxis::LearningRate => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(bad());
                }
                cfg.adam.lr = value;
            }
            SweepAxis::BatchSize => cfg.batch_size = positive_int()? as usize,
            SweepAxis::Capacity => cfg.capacity = positive_int()? as usize,
            SweepAxis::TargetRefresh => cfg.target_refresh = positive_int()?,
        }
        Ok(())
    }

    pub fn value_of(self, cfg: &AgentConfig) -> f64 {
        match self {
            SweepAxis::LearningRate => cfg.adam.lr,
            SweepAxis::BatchSize => cfg.batch_size as f64,
            SweepAxis::Capacity => cfg.capacity as f64,
            SweepAxis::TargetRefresh => cfg.target_refresh as f64,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = ExperError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                ExperError::Config(format!(
                    "unknown sweep axis {s:?}, expected one of lr, batch, capacity, refresh"
                ))
            })
    }
}

/// One experimental condition: a full config plus the swept value, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub axis_value: Option<f64>,
    pub config: ExperimentConfig,
}

impl Condition {
    pub fn tau(&self) -> u32 {
        self.config.agent.tau
    }

    /// Directory name for the swept value; `default` when nothing is swept.
    pub fn value_label(&self) -> String {
        match self.axis_value {
            Some(v) => format!("{v}"),
            None => "default".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConditionLogs {
    pub condition: Condition,
    pub logs: Vec<RunLog>,
}

/// One condition per tau for a plain replay-frequency study.
pub fn tau_conditions(base: &ExperimentConfig, taus: &[u32]) -> Result<Vec<Condition>, ExperError> {
    if taus.is_empty() {
        return Err(ExperError::Config("tau list is empty".into()));
    }
    taus.iter()
        .map(|&tau| {
            let mut config = *base;
            config.agent.tau = tau;
            config.validate()?;
            Ok(Condition {
                axis_value: None,
                config,
            })
        })
        .collect()
}

/// Expands a one-axis sweep into conditions, validating every one before anything runs.
pub fn sweep_conditions(
    base: &ExperimentConfig,
    axis: SweepAxis,
    grid: &[f64],
    taus: &[u32],
) -> Result<Vec<Condition>, ExperError> {
    if grid.is_empty() {
        return Err(ExperError::Config(format!("empty grid for {axis}")));
    }
    if taus.is_empty() {
        return Err(ExperError::Config("tau list is empty".into()));
    }
    let mut out = Vec::with_capacity(grid.len() * taus.len());
    for &value in grid {
        for &tau in taus {
            let mut config = *base;
            axis.apply(&mut config.agent, value)?;
            config.agent.tau = tau;
            config.validate()?;
            out.push(Condition {
                axis_value: Some(value),
                config,
            });
        }
    }
    Ok(out)
}

fn check_conditions(conditions: &[Condition], plan: &SeedPlan) -> Result<(), ExperError> {
    for c in conditions {
        c.config.validate()?;
        if c.config.runs > plan.runs() {
            return Err(ExperError::RunIndex(c.config.runs - 1, plan.runs()));
        }
    }
    Ok(())
}

/// Runs every condition `runs` times, handing each finished run to `sink` on the
/// calling thread as soon as it completes. Completion order varies with `jobs`;
/// run contents do not, since seeds come from `plan` only.
///
/// The first error from a run or from `sink` stops the remaining work.
pub fn for_each_run<F>(
    conditions: &[Condition],
    plan: &SeedPlan,
    jobs: usize,
    mut sink: F,
) -> Result<(), ExperError>
where
    F: FnMut(usize, RunLog) -> Result<(), ExperError>,
{
    check_conditions(conditions, plan)?;
    let tasks: Vec<(usize, usize)> = conditions
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..c.config.runs).map(move |r| (ci, r)))
        .collect();
    let workers = pool(jobs)?;
    let (tx, rx) = mpsc::channel::<(usize, RunLog)>();
    std::thread::scope(|scope| {
        let producer = scope.spawn(move || {
            workers.install(|| {
                tasks.par_iter().try_for_each_with(tx, |tx, &(ci, r)| {
                    let log = run(&conditions[ci].config, r, plan)?;
                    // a closed channel means the collector already failed
                    tx.send((ci, log)).map_err(|_| ExperError::Pool("collector stopped".into()))
                })
            })
        });
        let mut collected = Ok(());
        for (ci, log) in rx.iter() {
            if let Err(e) = sink(ci, log) {
                collected = Err(e);
                break;
            }
        }
        drop(rx);
        let produced = producer.join().expect("worker pool panicked");
        collected.and(produced)
    })
}

/// Runs every condition `runs` times and returns the logs grouped by condition,
/// ordered by run index.
pub fn run_conditions(
    conditions: &[Condition],
    plan: &SeedPlan,
    jobs: usize,
) -> Result<Vec<ConditionLogs>, ExperError> {
    let mut slots: Vec<Vec<Option<RunLog>>> = conditions
        .iter()
        .map(|c| vec![None; c.config.runs])
        .collect();
    for_each_run(conditions, plan, jobs, |ci, log| {
        let r = log.run_index;
        slots[ci][r] = Some(log);
        Ok(())
    })?;
    Ok(conditions
        .iter()
        .zip(slots)
        .map(|(c, logs)| ConditionLogs {
            condition: *c,
            logs: logs.into_iter().map(|l| l.expect("every run reported")).collect(),
        })
        .collect())
}

pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    grid: &[f64],
    taus: &[u32],
    jobs: usize,
) -> Result<Vec<ConditionLogs>, ExperError> {
    let conditions = sweep_conditions(base, axis, grid, taus)?;
    let plan = make_seed_plan(base.master_seed, base.runs)?;
    run_conditions(&conditions, &plan, jobs)
}

// ---------------------------------------------------------------------------
// Files

pub const CSV_HEADER: &str = "step,episode,reward";
pub const FINGERPRINT_PREFIX: &str = "# config_fingerprint=";

/// `<root>/<experiment>/<value>/<tau>`
pub fn condition_dir(root: &Path, experiment: &str, condition: &Condition) -> PathBuf {
    root.join(experiment)
        .join(condition.value_label())
        .join(condition.tau().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSidecar {
    pub config_fingerprint: String,
    pub config: ExperimentConfig,
    pub prng: String,
    pub master_seed: u64,
    pub run_index: usize,
    pub seeds: RunSeeds,
    pub episodes: Vec<EpisodeRecord>,
    pub duration_secs: f64,
}

impl RunLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{FINGERPRINT_PREFIX}{}", self.fingerprint)?;
        writeln!(out, "{CSV_HEADER}")?;
        for (k, s) in self.steps.iter().enumerate() {
            writeln!(out, "{k},{},{}", s.episode, s.reward)?;
        }
        out.flush()
    }

    pub fn sidecar(&self, config: &ExperimentConfig) -> RunSidecar {
        RunSidecar {
            config_fingerprint: self.fingerprint.clone(),
            config: *config,
            prng: PRNG_NAME.to_string(),
            master_seed: config.master_seed,
            run_index: self.run_index,
            seeds: self.seeds,
            episodes: self.episodes.clone(),
            duration_secs: self.duration_secs,
        }
    }

    /// Writes `<dir>/<run>.csv` and its `<dir>/<run>.json` sidecar.
    pub fn write_files(&self, dir: &Path, config: &ExperimentConfig) -> Result<PathBuf, ExperError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let csv = dir.join(format!("{}.csv", self.run_index));
        let file = fs::File::create(&csv).map_err(io_err(&csv))?;
        self.write_csv(BufWriter::new(file)).map_err(io_err(&csv))?;
        let json = dir.join(format!("{}.json", self.run_index));
        let text = serde_json::to_string_pretty(&self.sidecar(config))
            .expect("sidecar serialises");
        fs::write(&json, text + "\n").map_err(io_err(&json))?;
        Ok(csv)
    }
}

/// Per-step records and the fingerprint from a run CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub path: PathBuf,
    pub run_index: usize,
    pub fingerprint: Option<String>,
    pub steps: Vec<StepRecord>,
}

pub fn read_run_csv(path: &Path) -> Result<LoadedRun, ExperError> {
    let parse_err = |line: usize, message: String| ExperError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let run_index = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| parse_err(0, "file name is not <run-index>.csv".into()))?;
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut fingerprint = None;
    let mut header_seen = false;
    let mut steps = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let lineno = i + 1;
        if let Some(fp) = line.strip_prefix(FINGERPRINT_PREFIX) {
            fingerprint = Some(fp.trim().to_string());
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line.trim() != CSV_HEADER {
                return Err(parse_err(lineno, format!("expected header {CSV_HEADER:?}")));
            }
            header_seen = true;
            continue;
        }
        let mut fields = line.split(',');
        let (Some(step), Some(episode), Some(reward), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(parse_err(lineno, "expected three fields".into()));
        };
        let step: usize = step
            .parse()
            .map_err(|e| parse_err(lineno, format!("step: {e}")))?;
        if step != steps.len() {
            return Err(parse_err(lineno, format!("expected step {}, found {step}", steps.len())));
        }
        let episode: u64 = episode
            .parse()
            .map_err(|e| parse_err(lineno, format!("episode: {e}")))?;
        let reward: f64 = reward
            .parse()
            .map_err(|e| parse_err(lineno, format!("reward: {e}")))?;
        if let Some(prev) = steps.last().map(|s: &StepRecord| s.episode) {
            if episode != prev && episode != prev + 1 {
                return Err(parse_err(lineno, "episode indices must be consecutive".into()));
            }
        }
        steps.push(StepRecord { episode, reward });
    }
    if !header_seen {
        return Err(parse_err(0, "missing header".into()));
    }
    Ok(LoadedRun {
        path: path.to_path_buf(),
        run_index,
        fingerprint,
        steps,
    })
}
