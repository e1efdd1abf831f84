use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EnvConfig, JointAction, Point, StepOutcome, WorldState};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub task: usize,
    pub agent: usize,
}

/// One line of the episode log: everything observable about step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    /// Agent positions after the step.
    pub positions: Vec<Point>,
    pub actions: Vec<usize>,
    /// Environmental (unadapted) rewards.
    pub rewards: Vec<f64>,
    pub displacements: Vec<f64>,
    pub completions: Vec<Completion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogHeader {
    config: EnvConfig,
    seed: u64,
    agents: Vec<Point>,
    tasks: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub config: EnvConfig,
    pub seed: u64,
    pub initial_agents: Vec<Point>,
    pub tasks: Vec<Point>,
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    /// Positions of every agent at time `t` (0 = reset).
    pub fn positions_at(&self, t: usize) -> &[Point] {
        if t == 0 {
            &self.initial_agents
        } else {
            &self.steps[t - 1].positions
        }
    }

    /// Structural checks shared by every consumer of a log.
    pub fn check(&self) -> Result<()> {
        let (n, m) = (self.config.n_agents, self.config.n_tasks);
        let bad = |msg: String| Err(CoreError::MalformedLog(msg));
        if self.initial_agents.len() != n || self.tasks.len() != m {
            return bad(format!(
                "header has {} agents / {} tasks, config says {n} / {m}",
                self.initial_agents.len(),
                self.tasks.len()
            ));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.t as usize != i + 1 {
                return bad(format!("record {i} has t = {}, expected {}", s.t, i + 1));
            }
            if s.positions.len() != n
                || s.actions.len() != n
                || s.rewards.len() != n
                || s.displacements.len() != n
            {
                return bad(format!("step {} has per-agent arrays of the wrong length", s.t));
            }
            if let Some(c) = s.completions.iter().find(|c| c.agent >= n || c.task >= m) {
                return bad(format!("step {} references {c:?} out of range", s.t));
            }
        }
        Ok(())
    }
}

/// Builds an [`EpisodeLog`] while an episode runs.
#[derive(Debug, Clone)]
pub struct EpisodeRecorder {
    log: EpisodeLog,
}

impl EpisodeRecorder {
    pub fn new(config: &EnvConfig, seed: u64, initial: &WorldState) -> Self {
        Self {
            log: EpisodeLog {
                config: config.clone(),
                seed,
                initial_agents: initial.agents.iter().map(|a| a.pos).collect(),
                tasks: initial.tasks.iter().map(|k| k.pos).collect(),
                steps: Vec::new(),
            },
        }
    }

    pub fn record(&mut self, action: &JointAction, outcome: &StepOutcome) {
        self.log.steps.push(StepRecord {
            t: outcome.state.t,
            positions: outcome.state.agents.iter().map(|a| a.pos).collect(),
            actions: action.0.clone(),
            rewards: outcome.rewards.clone(),
            displacements: outcome.events.displacements.clone(),
            completions: outcome.events.completions.clone(),
        });
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn finish(self) -> EpisodeLog {
        self.log
    }
}

/// JSON-lines: a header with config, seed and initial positions, then one
/// [`StepRecord`] per line.
pub fn write_episode_log<W: Write>(log: &EpisodeLog, mut out: W) -> Result<()> {
    let header = LogHeader {
        config: log.config.clone(),
        seed: log.seed,
        agents: log.initial_agents.clone(),
        tasks: log.tasks.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for s in &log.steps {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_episode_log<R: BufRead>(input: R) -> Result<EpisodeLog> {
    let mut lines = input.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| CoreError::MalformedLog("empty file".into()))??;
    let header: LogHeader = serde_json::from_str(&header_line)
        .map_err(|e| CoreError::MalformedLog(format!("header: {e}")))?;
    let mut steps = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        steps.push(
            serde_json::from_str(&line)
                .map_err(|e| CoreError::MalformedLog(format!("line {}: {e}", i + 2)))?,
        );
    }
    let log = EpisodeLog {
        config: header.config,
        seed: header.seed,
        initial_agents: header.agents,
        tasks: header.tasks,
        steps,
    };
    log.check()?;
    Ok(log)
}
