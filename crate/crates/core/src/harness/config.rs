//! Experiment configuration: a sectioned `key = value` file (TOML syntax).
//!
//! ```toml
//! [env]
//! kind = "pendulum"
//!
//! [strategy]
//! kind = "crsail"
//! alpha = 0.93
//! k = 5
//!
//! [experiment]
//! m = [500]
//! seeds = [1, 2, 3]
//! t_train = 10000
//! ```
//!
//! Only `env.kind` and `strategy.kind` are required. Command-line overrides
//! use dotted paths, e.g. `experiment.m=[250,500]` or `strategy.alpha=0.9`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::novelty::{Backend, NoveltyConfig};
use crate::policy::TrainConfig;
use crate::strategy::StrategyConfig;
use crate::trainer::Budget;

/// Environment variable giving the root directory for relative output paths.
pub const OUTPUT_ROOT_VAR: &str = "AILAB_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Initial dataset sizes.
    pub m: Vec<usize>,
    pub seeds: Vec<u64>,
    pub m_cal: usize,
    pub eval_episodes: usize,
    /// Step budget; absent means unbounded.
    pub t_train: Option<u64>,
    /// Query budget; absent means unbounded.
    pub query_budget: Option<u64>,
    /// Recalibrate the radius every this many episodes (absent: never).
    pub recalibrate_every: Option<usize>,
    pub max_episodes: usize,
    pub workers: usize,
    pub output_dir: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            m: vec![250, 500, 1000, 2000],
            seeds: vec![1, 2, 3, 4, 5],
            m_cal: 30,
            eval_episodes: 20,
            t_train: Some(10_000),
            query_budget: None,
            recalibrate_every: None,
            max_episodes: 100_000,
            workers: 4,
            output_dir: "runs".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoveltySection {
    pub standardize: bool,
    pub backend: Backend,
}

impl Default for NoveltySection {
    fn default() -> Self {
        Self {
            standardize: true,
            backend: Backend::BruteForce,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub novelty: NoveltySection,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn new(env: EnvConfig, strategy: StrategyConfig) -> Self {
        Self {
            env,
            strategy,
            experiment: ExperimentSection::default(),
            novelty: NoveltySection::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parse `text`, apply `section.key=value` overrides, then validate.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Parse(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Parse(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.strategy.validate()?;
        self.train.validate()?;
        let e = &self.experiment;
        if e.m.is_empty() || e.m.contains(&0) {
            return Err(Error::Config("experiment.m must list positive dataset sizes".into()));
        }
        if e.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds must not be empty".into()));
        }
        if e.m_cal == 0 {
            return Err(Error::Config("experiment.m_cal must be at least 1".into()));
        }
        if e.eval_episodes == 0 {
            return Err(Error::Config("experiment.eval_episodes must be at least 1".into()));
        }
        if e.workers == 0 {
            return Err(Error::Config("experiment.workers must be at least 1".into()));
        }
        if e.recalibrate_every == Some(0) {
            return Err(Error::Config("experiment.recalibrate_every must be positive when set".into()));
        }
        self.budget().validate()
    }

    pub fn budget(&self) -> Budget {
        Budget {
            queries: self.experiment.query_budget,
            steps: self.experiment.t_train,
        }
    }

    pub fn novelty_config(&self) -> NoveltyConfig {
        NoveltyConfig {
            k: self.strategy.neighbour_order().unwrap_or(5),
            standardize: self.novelty.standardize,
            backend: self.novelty.backend,
        }
    }

    pub fn label(&self) -> String {
        self.strategy.label()
    }

    /// Output directory, resolved against `$AILAB_OUTPUT_ROOT` when relative.
    pub fn output_dir(&self) -> PathBuf {
        let dir = PathBuf::from(&self.experiment.output_dir);
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Apply one `a.b.c=value` override to a raw config table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{assignment}` is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one element");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Parse(format!("override `{assignment}`: `{k}` is not a section")))?;
    }
    cur.insert(last.to_string(), parse_override_value(raw.trim()));
    Ok(())
}
