//! Plot-ready CSV series derived from run records.

use std::collections::BTreeMap;
use std::path::Path;

use super::record::{write_atomic, RunRecord};
use super::summary::mean_std;
use crate::error::{Error, Result};

const GRID_POINTS: usize = 50;

fn grid(max: f64) -> Vec<f64> {
    if max <= 0.0 {
        return vec![0.0];
    }
    (0..=GRID_POINTS).map(|i| max * i as f64 / GRID_POINTS as f64).collect()
}

/// Evaluation return as a step function of cumulative queries: the value
/// after the last episode whose query count does not exceed `q`, and the
/// behavioural-cloning evaluation before the first episode.
pub fn reward_at_queries(rec: &RunRecord, q: f64) -> f64 {
    rec.episodes
        .iter()
        .take_while(|e| e.queries_cum as f64 <= q)
        .last()
        .map_or(rec.initial_eval.mean, |e| e.eval_mean)
}

/// Cumulative queries linearly interpolated at step count `t`, from the
/// origin through each `(steps_cum, queries_cum)` point.
pub fn queries_at_steps(rec: &RunRecord, t: f64) -> f64 {
    let mut prev = (0.0, 0.0);
    for e in &rec.episodes {
        let cur = (e.steps_cum as f64, e.queries_cum as f64);
        if t <= cur.0 {
            if cur.0 == prev.0 {
                return cur.1;
            }
            return prev.1 + (cur.1 - prev.1) * (t - prev.0) / (cur.0 - prev.0);
        }
        prev = cur;
    }
    prev.1
}

fn by_label(records: &[RunRecord]) -> BTreeMap<(String, usize), Vec<&RunRecord>> {
    let mut groups: BTreeMap<(String, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.label.clone(), r.m)).or_default().push(r);
    }
    groups
}

fn gridded_csv(
    records: &[RunRecord],
    x_name: &str,
    y_name: &str,
    x_max: impl Fn(&RunRecord) -> f64,
    y_at: impl Fn(&RunRecord, f64) -> f64,
) -> String {
    let mut out = format!("strategy,M,{x_name},{y_name}_mean,{y_name}_std,runs\n");
    for ((label, m), runs) in by_label(records) {
        let max = runs.iter().map(|r| x_max(r)).fold(0.0, f64::max);
        for x in grid(max) {
            let ys: Vec<f64> = runs.iter().map(|r| y_at(r, x)).collect();
            let (mean, std) = mean_std(&ys).unwrap_or((0.0, 0.0));
            out.push_str(&format!("\"{label}\",{m},{x},{mean},{std},{}\n", ys.len()));
        }
    }
    out
}

pub fn reward_vs_queries_csv(records: &[RunRecord]) -> String {
    gridded_csv(records, "queries", "eval", |r| r.summary.total_queries as f64, reward_at_queries)
}

pub fn queries_vs_steps_csv(records: &[RunRecord]) -> String {
    gridded_csv(records, "steps", "queries", |r| r.summary.total_steps as f64, queries_at_steps)
}

/// Queries per episode against episode length, one row per distinct length.
pub fn queries_vs_length_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("strategy,M,episode_length,queries_mean,queries_std,episodes\n");
    for ((label, m), runs) in by_label(records) {
        let mut by_len: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for e in runs.iter().flat_map(|r| &r.episodes) {
            by_len.entry(e.length).or_default().push(e.queries as f64);
        }
        for (len, qs) in by_len {
            let (mean, std) = mean_std(&qs).unwrap_or((0.0, 0.0));
            out.push_str(&format!("\"{label}\",{m},{len},{mean},{std},{}\n", qs.len()));
        }
    }
    out
}

/// Write the three plot CSVs into `dir`; returns their paths.
pub fn emit_plot_data(records: &[RunRecord], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    if records.is_empty() {
        return Err(Error::InsufficientData { have: 0, need: 1 });
    }
    std::fs::create_dir_all(dir)?;
    let files = [
        ("reward_vs_queries.csv", reward_vs_queries_csv(records)),
        ("queries_vs_steps.csv", queries_vs_steps_csv(records)),
        ("queries_vs_length.csv", queries_vs_length_csv(records)),
    ];
    files
        .into_iter()
        .map(|(name, body)| {
            let p = dir.join(name);
            write_atomic(&p, body.as_bytes()).map(|_| p)
        })
        .collect()
}
