//! Flat `key = value` experiment configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional and
//! falls back to its default; unknown or repeated keys are errors.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `name` | experiment directory name | `replay-frequency` |
//! | `taus` | comma-separated replay frequencies | `1,2,4,8,16,32` |
//! | `steps` | environment steps per run | `250000` |
//! | `runs` | runs per condition | `30` |
//! | `master_seed` | seed expanded into every per-run stream | `20221030` |
//! | `lr`, `beta1`, `beta2`, `adam_eps` | Adam | `0.001`, `0.9`, `0.999`, `1e-8` |
//! | `batch_size` | mini-batch size | `32` |
//! | `capacity` | replay capacity | `4000` |
//! | `target_refresh` | target refresh period in env steps | `128` |
//! | `gamma` | discount | `0.99` |
//! | `epsilon_initial`, `epsilon_final`, `epsilon_decay` | exploration schedule | `1.0`, `0.1`, `0.999` |
//! | `replay_start` | steps before the first update | `1024` |
//! | `bootstrap_on_truncation` | cutoff transitions stored as non-terminal | `true` |
//! | `decay_during_prefill` | decay epsilon before learning starts | `true` |

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::exper::{ExperimentConfig, DEFAULT_TAUS};

pub const DEFAULT_NAME: &str = "replay-frequency";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: {key}: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// A config file: the base experiment plus the replay frequencies to run.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub name: String,
    pub taus: Vec<u32>,
    pub base: ExperimentConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            name: DEFAULT_NAME.to_string(),
            taus: DEFAULT_TAUS.to_vec(),
            base: ExperimentConfig::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| ConfigError::Value {
        line,
        key: key.to_string(),
        message: format!("{raw:?}: {e}"),
    })
}

pub fn parse_tau_list(raw: &str) -> Result<Vec<u32>, String> {
    let taus: Vec<u32> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u32>().map_err(|e| format!("{s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if taus.is_empty() {
        return Err("tau list is empty".into());
    }
    if taus.contains(&0) {
        return Err("tau must be at least 1".into());
    }
    Ok(taus)
}

impl StudyConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = StudyConfig::default();
        let mut seen = HashSet::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected key = value, found {trimmed:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            let a = &mut cfg.base.agent;
            match key {
                "name" => {
                    if value.is_empty() || value.contains(['/', '\\']) {
                        return Err(ConfigError::Value {
                            line,
                            key: key.into(),
                            message: "must be a non-empty directory name".into(),
                        });
                    }
                    cfg.name = value.to_string();
                }
                "taus" => {
                    cfg.taus = parse_tau_list(value).map_err(|message| ConfigError::Value {
                        line,
                        key: key.into(),
                        message,
                    })?
                }
                "steps" => cfg.base.steps = parse_value(line, key, value)?,
                "runs" => cfg.base.runs = parse_value(line, key, value)?,
                "master_seed" => cfg.base.master_seed = parse_value(line, key, value)?,
                "lr" => a.adam.lr = parse_value(line, key, value)?,
                "beta1" => a.adam.beta1 = parse_value(line, key, value)?,
                "beta2" => a.adam.beta2 = parse_value(line, key, value)?,
                "adam_eps" => a.adam.eps = parse_value(line, key, value)?,
                "batch_size" => a.batch_size = parse_value(line, key, value)?,
                "capacity" => a.capacity = parse_value(line, key, value)?,
                "target_refresh" => a.target_refresh = parse_value(line, key, value)?,
                "gamma" => a.gamma = parse_value(line, key, value)?,
                "epsilon_initial" => a.epsilon_initial = parse_value(line, key, value)?,
                "epsilon_final" => a.epsilon_final = parse_value(line, key, value)?,
                "epsilon_decay" => a.epsilon_decay = parse_value(line, key, value)?,
                "replay_start" => a.replay_start = parse_value(line, key, value)?,
                "bootstrap_on_truncation" => a.bootstrap_on_truncation = parse_value(line, key, value)?,
                "decay_during_prefill" => a.decay_during_prefill = parse_value(line, key, value)?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Checks the base config as it will run under every listed tau.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.taus.is_empty() {
            return Err(ConfigError::Invalid {
                field: "taus".into(),
                message: "tau list is empty".into(),
            });
        }
        for &tau in &self.taus {
            let mut c = self.base;
            c.agent.tau = tau;
            c.validate().map_err(|e| ConfigError::Invalid {
                field: invalid_field(&e.to_string()),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// The config in file form; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let a = &self.base.agent;
        let taus: Vec<String> = self.taus.iter().map(u32::to_string).collect();
        let mut s = String::new();
        let _ = writeln!(s, "# replay-scope experiment configuration");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "taus = {}", taus.join(","));
        let _ = writeln!(s, "steps = {}", self.base.steps);
        let _ = writeln!(s, "runs = {}", self.base.runs);
        let _ = writeln!(s, "master_seed = {}", self.base.master_seed);
        let _ = writeln!(s, "lr = {:?}", a.adam.lr);
        let _ = writeln!(s, "beta1 = {:?}", a.adam.beta1);
        let _ = writeln!(s, "beta2 = {:?}", a.adam.beta2);
        let _ = writeln!(s, "adam_eps = {:?}", a.adam.eps);
        let _ = writeln!(s, "batch_size = {}", a.batch_size);
        let _ = writeln!(s, "capacity = {}", a.capacity);
        let _ = writeln!(s, "target_refresh = {}", a.target_refresh);
        let _ = writeln!(s, "gamma = {:?}", a.gamma);
        let _ = writeln!(s, "epsilon_initial = {:?}", a.epsilon_initial);
        let _ = writeln!(s, "epsilon_final = {:?}", a.epsilon_final);
        let _ = writeln!(s, "epsilon_decay = {:?}", a.epsilon_decay);
        let _ = writeln!(s, "replay_start = {}", a.replay_start);
        let _ = writeln!(s, "bootstrap_on_truncation = {}", a.bootstrap_on_truncation);
        let _ = writeln!(s, "decay_during_prefill = {}", a.decay_during_prefill);
        s
    }
}

/// Best-effort mapping from a validation message to the offending key.
fn invalid_field(message: &str) -> String {
    const KEYS: [&str; 14] = [
        "batch_size",
        "replay_start",
        "capacity",
        "target_refresh",
        "gamma",
        "epsilon_initial",
        "epsilon_final",
        "epsilon_decay",
        "tau",
        "runs",
        "steps",
        "lr",
        "beta1",
        "beta2",
    ];
    KEYS.iter()
        .find(|k| message.contains(*k))
        .map_or_else(|| "config".to_string(), |k| k.to_string())
}
