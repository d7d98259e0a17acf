//! Aggregation of run records into per-(strategy, M) rows.

use std::collections::BTreeMap;

use serde::Serialize;

use super::record::RunRecord;
use crate::error::{Error, Result};

/// Mean and sample standard deviation (`n - 1` denominator, 0 for `n = 1`).
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub m: usize,
    pub runs: usize,
    pub converged: usize,
    pub convergence_pct: f64,
    /// Over converged runs only; `None` when no run converged.
    pub queries_to_expert: Option<(f64, f64)>,
    pub total_queries: (f64, f64),
}

pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::InsufficientData { have: 0, need: 1 });
    }
    let mut groups: BTreeMap<(String, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.label.clone(), r.m)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((label, m), runs)| {
            let q2e: Vec<f64> = runs.iter().filter_map(|r| r.queries_to_expert()).map(|q| q as f64).collect();
            let totals: Vec<f64> = runs.iter().map(|r| r.summary.total_queries as f64).collect();
            SummaryRow {
                label,
                m,
                runs: runs.len(),
                converged: q2e.len(),
                convergence_pct: 100.0 * q2e.len() as f64 / runs.len() as f64,
                queries_to_expert: mean_std(&q2e),
                total_queries: mean_std(&totals).unwrap_or((0.0, 0.0)),
            }
        })
        .collect())
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("strategy,M,runs,converged,convergence_pct,q2e_mean,q2e_std,total_queries_mean,total_queries_std\n");
    for r in rows {
        let (qm, qs) = r
            .queries_to_expert
            .map_or((String::new(), String::new()), |(m, s)| (m.to_string(), s.to_string()));
        out.push_str(&format!(
            "\"{}\",{},{},{},{},{},{},{},{}\n",
            r.label, r.m, r.runs, r.converged, r.convergence_pct, qm, qs, r.total_queries.0, r.total_queries.1
        ));
    }
    out
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let header = ["strategy", "M", "conv", "queries-to-expert", "total queries"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                r.m.to_string(),
                format!("{}/{} ({:.0}%)", r.converged, r.runs, r.convergence_pct),
                r.queries_to_expert.map_or("-".into(), |(m, s)| format!("{m:.1} ± {s:.1}")),
                format!("{:.1} ± {:.1}", r.total_queries.0, r.total_queries.1),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header.map(String::from));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}
