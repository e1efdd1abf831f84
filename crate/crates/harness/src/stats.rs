//! Per-cell summary statistics across seeds.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::run::RunSummary;

/// Mean and sample standard deviation; `std` is `None` for a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: f64::NAN, std: None, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    MeanStd { mean, std, n }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.std {
            Some(s) => write!(f, "{:.2} ± {:.2}", self.mean, s),
            None => write!(f, "{:.2} (n=1, no deviation)", self.mean),
        }
    }
}

/// Metric names in report order with their accessor on a run summary.
pub const METRICS: [(&str, fn(&RunSummary) -> f64); 5] = [
    ("cumulative_reward", |r| r.tail_mean_reward),
    ("tasks_completed", |r| r.tail_mean_tasks_completed),
    ("total_distance", |r| r.tail_mean_distance),
    ("total_waiting", |r| r.tail_mean_waiting),
    ("timesteps", |r| r.tail_mean_timesteps),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n_agents: usize,
    pub n_tasks: usize,
    pub variant: String,
    pub runs: usize,
    pub metrics: Vec<(String, MeanStd)>,
}

impl SummaryStats {
    pub fn metric(&self, name: &str) -> Option<MeanStd> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    pub fn is_singleton(&self) -> bool {
        self.runs < 2
    }
}

/// Groups runs by (agents, tasks, variant) in first-seen order.
pub fn summarize(records: &[RunSummary]) -> Vec<SummaryStats> {
    let mut keys: Vec<(usize, usize, String)> = Vec::new();
    for r in records {
        let key = (r.n_agents, r.n_tasks, r.variant.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(n, m, variant)| {
            let group: Vec<&RunSummary> = records
                .iter()
                .filter(|r| r.n_agents == n && r.n_tasks == m && r.variant == variant)
                .collect();
            let metrics = METRICS
                .iter()
                .map(|(name, get)| {
                    let values: Vec<f64> = group.iter().map(|r| get(r)).collect();
                    (name.to_string(), mean_std(&values))
                })
                .collect();
            SummaryStats {
                n_agents: n,
                n_tasks: m,
                variant,
                runs: group.len(),
                metrics,
            }
        })
        .collect()
}

/// Long-format CSV: one row per cell and metric. `std` is empty when absent.
pub fn write_summary_csv<W: Write>(stats: &[SummaryStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_agents", "n_tasks", "variant", "runs", "metric", "mean", "std"])?;
    for s in stats {
        for (name, v) in &s.metrics {
            w.write_record([
                s.n_agents.to_string(),
                s.n_tasks.to_string(),
                s.variant.clone(),
                s.runs.to_string(),
                name.clone(),
                crate::format::sig9(v.mean),
                v.std.map(crate::format::sig9).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width table of mean ± sample std per cell.
pub fn render_table(stats: &[SummaryStats]) -> String {
    let mut header = vec!["agents".to_string(), "tasks".into(), "variant".into(), "runs".into()];
    header.extend(METRICS.iter().map(|(n, _)| n.to_string()));
    let mut rows = vec![header];
    for s in stats {
        let mut row = vec![s.n_agents.to_string(), s.n_tasks.to_string(), s.variant.clone(), s.runs.to_string()];
        row.extend(s.metrics.iter().map(|(_, v)| v.to_string()));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}", w = *w))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out.push_str("values are mean ± sample standard deviation across seeds\n");
    out
}
