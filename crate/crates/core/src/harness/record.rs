//! Per-run records: a JSON document plus a flat CSV of episode rows.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::conformal::CalibratedThreshold;
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::mdp::EvalStats;
use crate::trainer::{queries_to_expert, EpisodeMetrics, StopReason};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub converged: bool,
    pub queries_to_expert: Option<u64>,
    pub total_queries: u64,
    pub total_steps: u64,
    pub episodes: usize,
    pub best_eval: f64,
    pub expert_mean: f64,
}

impl RunSummary {
    pub fn compute(series: &[EpisodeMetrics], expert_mean: f64, initial_eval: f64) -> Self {
        let q2e = queries_to_expert(series, expert_mean);
        let last = series.last();
        Self {
            converged: q2e.is_some(),
            queries_to_expert: q2e,
            total_queries: last.map_or(0, |m| m.queries_cum),
            total_steps: last.map_or(0, |m| m.steps_cum),
            episodes: series.len(),
            best_eval: series.iter().map(|m| m.eval_mean).fold(initial_eval, f64::max),
            expert_mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub env: EnvKind,
    pub m: usize,
    pub seed: u64,
    /// The configuration this run came from; `(m, seed)` pick the cell.
    pub config: ExperimentConfig,
    pub threshold: Option<CalibratedThreshold>,
    pub calibration_episode_lengths: Option<Vec<usize>>,
    pub initial_dataset_size: usize,
    pub final_dataset_size: usize,
    pub standardized: bool,
    pub expert_eval: EvalStats,
    /// Evaluation of the behavioural-cloning policy before any queries.
    pub initial_eval: EvalStats,
    pub stop: StopReason,
    pub notes: Vec<String>,
    pub episodes: Vec<EpisodeMetrics>,
    pub summary: RunSummary,
}

pub const CSV_COLUMNS: &str = "episode,steps_cum,queries_episode,queries_cum,eval_mean,eval_std,converged_flag";

impl RunRecord {
    pub fn recompute_summary(&self) -> RunSummary {
        RunSummary::compute(&self.episodes, self.expert_eval.mean, self.initial_eval.mean)
    }

    pub fn queries_to_expert(&self) -> Option<u64> {
        queries_to_expert(&self.episodes, self.expert_eval.mean)
    }

    /// File stem shared by the JSON and CSV outputs.
    pub fn stem(&self) -> String {
        format!("M{}_seed{}", self.m, self.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse and check that the stored summary matches the series.
    pub fn from_json(text: &str) -> Result<Self> {
        let rec: Self = serde_json::from_str(text)?;
        let again = rec.recompute_summary();
        if again != rec.summary {
            return Err(Error::Parse(format!(
                "run record {} ({}): stored summary does not match episode series",
                rec.stem(),
                rec.label
            )));
        }
        Ok(rec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Episode rows, preceded by `#` comment lines carrying the config.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# label: {}\n# m: {}\n# seed: {}\n", self.label, self.m, self.seed));
        for line in self.config.to_toml().lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(CSV_COLUMNS);
        out.push('\n');
        for e in &self.episodes {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.episode,
                e.steps_cum,
                e.queries,
                e.queries_cum,
                e.eval_mean,
                e.eval_std,
                u8::from(e.converged)
            ));
        }
        out
    }

    /// Write `<stem>.json` and `<stem>.csv` into `dir`, each atomically.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join(format!("{}.json", self.stem())), self.to_json()?.as_bytes())?;
        write_atomic(&dir.join(format!("{}.csv", self.stem())), self.to_csv().as_bytes())?;
        Ok(())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Every `*.json` run record under `dir`, recursively, in path order.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths = Vec::new();
    collect_json(dir, &mut paths)?;
    paths.sort();
    paths.iter().map(|p| RunRecord::load(p)).collect()
}

fn collect_json(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_json(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    Ok(())
}
