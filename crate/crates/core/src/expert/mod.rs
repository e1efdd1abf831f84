//! Expert demonstrations from an optimal-assignment planner.
//!
//! Each round the planner solves a minimum-distance assignment of idle
//! agents to open tasks and every agent walks toward its target using the
//! same discrete actions as the learners. A round is re-planned whenever the
//! set of idle agents or open tasks changes.

pub mod hungarian;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::env::{
    self, distance, extract_segments, move_point, AgentStatus, EnvConfig, EpisodeLog,
    EpisodeRecorder, JointAction, Point, TrajectorySegment, WorldState,
};
use crate::error::{CoreError, Result};
use crate::seeds::derive_seed;

pub const DEMO_FORMAT_VERSION: u32 = 1;
pub const EXPERT_PROVENANCE: &str = "expert";

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Task index for every agent.
    pub tasks: Vec<usize>,
    pub cost: f64,
}

/// Minimum total Euclidean distance one-to-one assignment of agents to
/// distinct tasks, ties broken toward the lexicographically smallest task
/// vector.
pub fn assign(agents: &[Point], tasks: &[Point]) -> Result<Assignment> {
    if agents.is_empty() {
        return Err(CoreError::Contract("assign needs at least one agent".into()));
    }
    if agents.len() > tasks.len() {
        return Err(CoreError::Contract(format!(
            "assign needs #agents <= #tasks, got {} > {}",
            agents.len(),
            tasks.len()
        )));
    }
    let cost: Vec<Vec<f64>> = agents
        .iter()
        .map(|&a| tasks.iter().map(|&t| distance(a, t)).collect())
        .collect();
    let tasks = hungarian::solve_lexicographic(&cost);
    let cost = hungarian::total_cost(&cost, &tasks);
    Ok(Assignment { tasks, cost })
}

/// Greedy-replanning expert policy.
#[derive(Debug, Clone, Default)]
pub struct ExpertPlanner {
    targets: Vec<Option<usize>>,
    plan_key: Option<(Vec<usize>, Vec<usize>)>,
}

impl ExpertPlanner {
    pub fn new() -> Self {
        Self::default()
    }

    fn replan(&mut self, state: &WorldState, idle: &[usize], open: &[usize]) -> Result<()> {
        self.targets = vec![None; state.agents.len()];
        if idle.is_empty() || open.is_empty() {
            return Ok(());
        }
        let agent_pts: Vec<Point> = idle.iter().map(|&i| state.agents[i].pos).collect();
        let task_pts: Vec<Point> = open.iter().map(|&k| state.tasks[k].pos).collect();
        if idle.len() <= open.len() {
            let a = assign(&agent_pts, &task_pts)?;
            for (slot, &k) in idle.iter().zip(&a.tasks) {
                self.targets[*slot] = Some(open[k]);
            }
        } else {
            // more idle agents than tasks: each task picks an agent
            let a = assign(&task_pts, &agent_pts)?;
            for (task_slot, &agent_slot) in a.tasks.iter().enumerate() {
                self.targets[idle[agent_slot]] = Some(open[task_slot]);
            }
        }
        Ok(())
    }

    pub fn act(&mut self, state: &WorldState, config: &EnvConfig) -> Result<JointAction> {
        let idle: Vec<usize> = (0..state.agents.len())
            .filter(|&i| state.agents[i].status == AgentStatus::Idle)
            .collect();
        let open: Vec<usize> = (0..state.tasks.len())
            .filter(|&k| state.tasks[k].is_open())
            .collect();
        let key = (idle.clone(), open.clone());
        if self.plan_key.as_ref() != Some(&key) {
            self.replan(state, &idle, &open)?;
            self.plan_key = Some(key);
        }

        let stay = config.stay_action();
        let actions = (0..state.agents.len())
            .map(|i| match self.targets[i] {
                Some(k) if state.agents[i].status == AgentStatus::Idle => {
                    greedy_direction(state.agents[i].pos, state.tasks[k].pos, config)
                }
                _ => stay,
            })
            .collect();
        Ok(JointAction(actions))
    }
}

/// Action whose move lands closest to `target`; stay once within the
/// completion radius.
pub fn greedy_direction(pos: Point, target: Point, config: &EnvConfig) -> usize {
    if distance(pos, target) <= config.completion_radius {
        return config.stay_action();
    }
    let mut best = (config.stay_action(), distance(pos, target));
    for a in 0..config.n_directions {
        let d = distance(move_point(pos, a, config), target);
        if d < best.1 {
            best = (a, d);
        }
    }
    best.0
}

/// Runs one expert episode in the real environment.
pub fn run_expert_episode(config: &EnvConfig, seed: u64) -> Result<EpisodeLog> {
    config.validate()?;
    let mut state = env::reset(config, seed);
    let mut recorder = EpisodeRecorder::new(config, seed, &state);
    let mut planner = ExpertPlanner::new();
    while !state.is_terminal(config) {
        let action = planner.act(&state, config)?;
        let outcome = env::step(&state, &action, config)?;
        recorder.record(&action, &outcome);
        state = outcome.state;
    }
    Ok(recorder.finish())
}

/// Expert trajectory segments with their generating settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    provenance: String,
    pub config: EnvConfig,
    pub seed: u64,
    pub n_episodes: usize,
    pub segments: Vec<TrajectorySegment>,
}

impl DemoDataset {
    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed, "demo_episode", episode as u64)
}

pub fn generate_demos(config: &EnvConfig, n_episodes: usize, seed: u64) -> Result<DemoDataset> {
    config.validate()?;
    let mut segments = Vec::new();
    for e in 0..n_episodes {
        let log = run_expert_episode(config, episode_seed(seed, e))?;
        segments.extend(extract_segments(&log)?);
    }
    Ok(DemoDataset {
        provenance: EXPERT_PROVENANCE.to_string(),
        config: config.clone(),
        seed,
        n_episodes,
        segments,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DemoHeader {
    version: u32,
    provenance: String,
    config: EnvConfig,
    seed: u64,
    n_episodes: usize,
}

/// JSON-lines: a header, then one segment per line.
pub fn write_demos<W: Write>(demos: &DemoDataset, mut out: W) -> Result<()> {
    let header = DemoHeader {
        version: DEMO_FORMAT_VERSION,
        provenance: demos.provenance.clone(),
        config: demos.config.clone(),
        seed: demos.seed,
        n_episodes: demos.n_episodes,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for s in &demos.segments {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_demos<R: BufRead>(input: R) -> Result<DemoDataset> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| CoreError::Config("empty demo file".into()))??;
    let header: DemoHeader = serde_json::from_str(&first)
        .map_err(|e| CoreError::Config(format!("demo header: {e}")))?;
    if header.version != DEMO_FORMAT_VERSION {
        return Err(CoreError::Config(format!(
            "unsupported demo format version {}",
            header.version
        )));
    }
    let mut segments = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            segments.push(serde_json::from_str(&line)?);
        }
    }
    Ok(DemoDataset {
        provenance: header.provenance,
        config: header.config,
        seed: header.seed,
        n_episodes: header.n_episodes,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_assignments() {
        let a = assign(&[[0.0, 0.0]], &[[3.0, 4.0]]).unwrap();
        assert_eq!(a.tasks, vec![0]);
        assert_eq!(a.cost, 5.0);

        let a = assign(&[[0.0, 0.0], [10.0, 0.0]], &[[1.0, 0.0], [9.0, 0.0]]).unwrap();
        assert_eq!(a.tasks, vec![0, 1]);
        assert_eq!(a.cost, 2.0);
    }

    #[test]
    fn assign_contract_errors() {
        assert!(assign(&[], &[[0.0, 0.0]]).is_err());
        assert!(assign(&[[0.0, 0.0], [1.0, 1.0]], &[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn zero_episodes_gives_empty_dataset() {
        let d = generate_demos(&EnvConfig::desk(), 0, 1).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.provenance(), "expert");
    }

    #[test]
    fn greedy_direction_heads_to_target() {
        let cfg = EnvConfig::desk();
        assert_eq!(greedy_direction([0.0, 0.0], [5.0, 0.0], &cfg), 0);
        assert_eq!(greedy_direction([0.0, 0.0], [0.0, 5.0], &cfg), 2);
        assert_eq!(greedy_direction([0.0, 0.0], [0.5, 0.0], &cfg), cfg.stay_action());
    }
}
