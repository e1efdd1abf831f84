//! Agent-count by task-count experiment grids.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mata_core::expert::{generate_demos, DemoDataset};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::run::{execute_run, save_demos, RunSummary};
use crate::stats::{render_table, summarize, write_summary_csv, SummaryStats};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TABLE: &str = "summary.txt";
pub const DEMOS_FILE: &str = "demos.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub agents: Vec<usize>,
    pub tasks: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl GridSpec {
    /// Cells with `n <= m`, agents outer, tasks inner.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.agents
            .iter()
            .flat_map(|&n| self.tasks.iter().filter(move |&&m| n <= m).map(move |&m| (n, m)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("grid needs at least one seed".into()));
        }
        if self.agents.iter().chain(&self.tasks).any(|&k| k == 0) {
            return Err(HarnessError::Config("agent and task counts must be positive".into()));
        }
        if self.cells().is_empty() {
            return Err(HarnessError::Config("grid has no cell with agents <= tasks".into()));
        }
        Ok(())
    }
}

pub struct GridOutput {
    pub runs: Vec<RunSummary>,
    pub summary: Vec<SummaryStats>,
    pub table: String,
}

pub fn cell_dir(out: &Path, n: usize, m: usize) -> PathBuf {
    out.join(format!("a{n}_t{m}"))
}

pub fn run_dir(out: &Path, n: usize, m: usize, seed: u64) -> PathBuf {
    cell_dir(out, n, m).join(format!("seed{seed}"))
}

/// Runs every (cell, seed) pair in parallel, then writes the summary CSV
/// and table. Each cell gets demonstrations generated for its own sizes.
pub fn run_grid(base: &RunConfig, spec: &GridSpec, out: &Path) -> Result<GridOutput> {
    spec.validate()?;
    base.validate()?;
    let cells = spec.cells();
    let mut configs = Vec::with_capacity(cells.len());
    for &(n, m) in &cells {
        let mut cfg = base.clone();
        cfg.env.n_agents = n;
        cfg.env.n_tasks = m;
        cfg.seeds = spec.seeds.clone();
        cfg.demos.path = None;
        cfg.out_dir = cell_dir(out, n, m);
        cfg.validate()?;
        configs.push(cfg);
    }

    let demos: Vec<Option<DemoDataset>> = configs
        .par_iter()
        .map(|cfg| -> Result<Option<DemoDataset>> {
            if cfg.ablation.no_irl {
                return Ok(None);
            }
            let d = generate_demos(&cfg.env, cfg.demos.episodes, cfg.demos.seed)?;
            save_demos(&d, &cfg.out_dir.join(DEMOS_FILE))?;
            Ok(Some(d))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| spec.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let runs: Vec<RunSummary> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cfg = &configs[c];
            let (n, m) = cells[c];
            execute_run(cfg, seed, demos[c].as_ref(), &run_dir(out, n, m, seed))
        })
        .collect::<Result<_>>()?;

    let summary = summarize(&runs);
    std::fs::create_dir_all(out)?;
    write_summary_csv(&summary, BufWriter::new(File::create(out.join(SUMMARY_CSV))?))?;
    let table = render_table(&summary);
    std::fs::write(out.join(SUMMARY_TABLE), &table)?;
    Ok(GridOutput { runs, summary, table })
}
