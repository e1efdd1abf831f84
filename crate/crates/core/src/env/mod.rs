//! Deterministic 2-D task-allocation world.
//!
//! Agents move at a fixed speed along one of `K` compass directions (or
//! stay). An idle agent that ends a step within `completion_radius` of the
//! nearest open task claims it and executes it for `task_duration` steps,
//! after which the task is done. The episode ends when every task is done
//! or `max_steps` is reached.

mod log;
mod metrics;
mod segments;

pub use log::{read_episode_log, write_episode_log, Completion, EpisodeLog, EpisodeRecorder, StepRecord};
pub use metrics::{
    compute_metrics, energy_ledger, score_objective, task_timings, validate_constraints,
    ConstraintReport, EnergyLedger, EpisodeMetrics, ObjectiveWeights, TaskTiming, Violation,
};
pub use segments::{extract_segments, SegmentTracker, TrajectorySegment};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::seeds::stream_rng;

pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub n_agents: usize,
    pub n_tasks: usize,
    pub world_size: f64,
    pub speed: f64,
    pub task_reward: f64,
    pub time_penalty: f64,
    pub energy_penalty: f64,
    pub completion_radius: f64,
    pub task_duration: u32,
    pub max_steps: u32,
    pub n_directions: usize,
    /// Per-task execution energy `e_k`.
    #[serde(default)]
    pub task_energy: f64,
    /// Initial per-agent energy budget `E`.
    #[serde(default = "default_initial_energy")]
    pub initial_energy: f64,
}

fn default_initial_energy() -> f64 {
    1e12
}

impl EnvConfig {
    /// Five agents, twenty tasks in a 20 x 20 world with the reward constants
    /// used in the reference experiments.
    pub fn benchmark() -> Self {
        Self {
            n_agents: 5,
            n_tasks: 20,
            world_size: 20.0,
            speed: 5.0,
            task_reward: 7.5,
            time_penalty: 0.5,
            energy_penalty: 1.5,
            completion_radius: 2.5,
            task_duration: 1,
            max_steps: 300,
            n_directions: 8,
            task_energy: 0.0,
            initial_energy: default_initial_energy(),
        }
    }

    /// Small world used for the default profile and the test suite.
    pub fn desk() -> Self {
        Self {
            n_agents: 3,
            n_tasks: 8,
            world_size: 10.0,
            speed: 1.0,
            completion_radius: 1.0,
            max_steps: 40,
            ..Self::benchmark()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CoreError::Config(msg));
        if self.n_agents == 0 || self.n_tasks == 0 {
            return fail("n_agents and n_tasks must be positive".into());
        }
        if self.n_agents > self.n_tasks {
            return fail(format!(
                "n_agents ({}) must not exceed n_tasks ({})",
                self.n_agents, self.n_tasks
            ));
        }
        if !(self.world_size > 0.0) || !(self.speed > 0.0) || self.speed > self.world_size {
            return fail("need 0 < speed <= world_size".into());
        }
        if !(self.completion_radius > 0.0) || self.completion_radius >= self.world_size / 4.0 {
            return fail("need 0 < completion_radius < world_size / 4".into());
        }
        if self.time_penalty < 0.0 || self.energy_penalty < 0.0 || self.task_energy < 0.0 {
            return fail("penalties and task energy must be non-negative".into());
        }
        if self.task_duration == 0 || self.max_steps == 0 || self.n_directions == 0 {
            return fail("task_duration, max_steps and n_directions must be positive".into());
        }
        Ok(())
    }

    /// Number of discrete actions: `K` directions plus "stay".
    pub fn n_actions(&self) -> usize {
        self.n_directions + 1
    }

    pub fn stay_action(&self) -> usize {
        self.n_directions
    }

    /// Length of [`WorldState::features`].
    pub fn state_dim(&self) -> usize {
        3 * (self.n_agents + self.n_tasks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentStatus {
    Idle,
    Executing { task: usize, remaining: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub pos: Point,
    pub status: AgentStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub pos: Point,
    pub done: bool,
    pub claimed_by: Option<usize>,
}

impl TaskState {
    pub fn is_open(&self) -> bool {
        !self.done && self.claimed_by.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub tasks: Vec<TaskState>,
    pub t: u32,
}

impl WorldState {
    pub fn all_done(&self) -> bool {
        self.tasks.iter().all(|k| k.done)
    }

    pub fn is_terminal(&self, config: &EnvConfig) -> bool {
        self.all_done() || self.t >= config.max_steps
    }

    pub fn done_count(&self) -> usize {
        self.tasks.iter().filter(|k| k.done).count()
    }

    /// Flattened, world-normalized state: `[x, y, executing]` per agent then
    /// `[x, y, done]` per task.
    pub fn features(&self, config: &EnvConfig) -> Vec<f64> {
        let w = config.world_size;
        let mut out = Vec::with_capacity(config.state_dim());
        for a in &self.agents {
            let busy = matches!(a.status, AgentStatus::Executing { .. });
            out.extend([a.pos[0] / w, a.pos[1] / w, busy as u8 as f64]);
        }
        for k in &self.tasks {
            out.extend([k.pos[0] / w, k.pos[1] / w, k.done as u8 as f64]);
        }
        out
    }
}

/// Per-agent action indices: `0..K` are directions at angle `2*pi*a/K`, `K` is stay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointAction(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub displacements: Vec<f64>,
    pub completions: Vec<Completion>,
    pub completed: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: WorldState,
    pub rewards: Vec<f64>,
    pub events: StepEvents,
}

/// Fresh episode with agents and tasks uniform over the world.
pub fn reset(config: &EnvConfig, seed: u64) -> WorldState {
    let mut rng = stream_rng(seed, "env_reset", 0);
    let w = config.world_size;
    let mut point = || [rng.gen_range(0.0..=w), rng.gen_range(0.0..=w)];
    let agents = (0..config.n_agents)
        .map(|_| AgentState {
            pos: point(),
            status: AgentStatus::Idle,
        })
        .collect();
    let tasks = (0..config.n_tasks)
        .map(|_| TaskState {
            pos: point(),
            done: false,
            claimed_by: None,
        })
        .collect();
    WorldState { agents, tasks, t: 0 }
}

/// Environmental reward of one agent for one step.
pub fn base_reward(completed: bool, d: f64, config: &EnvConfig) -> f64 {
    let bonus = if completed { config.task_reward } else { 0.0 };
    bonus - config.time_penalty - config.energy_penalty * (d / config.world_size)
}

/// Position after moving `speed` along `action`, clipped to the world.
pub fn move_point(pos: Point, action: usize, config: &EnvConfig) -> Point {
    if action >= config.n_directions {
        return pos;
    }
    let angle = std::f64::consts::TAU * action as f64 / config.n_directions as f64;
    let w = config.world_size;
    [
        (pos[0] + config.speed * angle.cos()).clamp(0.0, w),
        (pos[1] + config.speed * angle.sin()).clamp(0.0, w),
    ]
}

/// Nearest open task within the completion radius (ties to lowest index).
fn claimable_task(pos: Point, tasks: &[TaskState], radius: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, task) in tasks.iter().enumerate() {
        if !task.is_open() {
            continue;
        }
        let d = distance(pos, task.pos);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best.filter(|&(_, d)| d <= radius).map(|(k, _)| k)
}

/// Advances the world by one timestep.
///
/// Order within a step: idle agents move; executing agents count down and
/// finish their task when the count hits zero; every idle agent (in index
/// order) then claims the nearest open task if it lies within the radius.
pub fn step(state: &WorldState, action: &JointAction, config: &EnvConfig) -> Result<StepOutcome> {
    if state.is_terminal(config) {
        return Err(CoreError::Contract(format!(
            "step called on a finished episode (t = {}, done = {}/{})",
            state.t,
            state.done_count(),
            config.n_tasks
        )));
    }
    if action.0.len() != config.n_agents {
        return Err(CoreError::Contract(format!(
            "joint action has {} entries for {} agents",
            action.0.len(),
            config.n_agents
        )));
    }
    if let Some(&bad) = action.0.iter().find(|&&a| a > config.n_directions) {
        return Err(CoreError::Contract(format!(
            "action index {bad} outside 0..={}",
            config.n_directions
        )));
    }

    let mut next = state.clone();
    next.t += 1;
    let n = config.n_agents;
    let mut displacements = vec![0.0; n];
    let mut completed = vec![false; n];
    let mut completions = Vec::new();

    for (i, agent) in next.agents.iter_mut().enumerate() {
        if agent.status == AgentStatus::Idle {
            let new_pos = move_point(agent.pos, action.0[i], config);
            displacements[i] = distance(agent.pos, new_pos);
            agent.pos = new_pos;
        }
    }

    for (i, agent) in next.agents.iter_mut().enumerate() {
        if let AgentStatus::Executing { task, remaining } = agent.status {
            if remaining <= 1 {
                next.tasks[task].done = true;
                agent.status = AgentStatus::Idle;
                completed[i] = true;
                completions.push(Completion { task, agent: i });
            } else {
                agent.status = AgentStatus::Executing {
                    task,
                    remaining: remaining - 1,
                };
            }
        }
    }

    for i in 0..n {
        if next.agents[i].status != AgentStatus::Idle {
            continue;
        }
        if let Some(k) = claimable_task(next.agents[i].pos, &next.tasks, config.completion_radius) {
            next.tasks[k].claimed_by = Some(i);
            next.agents[i].status = AgentStatus::Executing {
                task: k,
                remaining: config.task_duration,
            };
        }
    }

    let rewards = (0..n)
        .map(|i| base_reward(completed[i], displacements[i], config))
        .collect();
    Ok(StepOutcome {
        state: next,
        rewards,
        events: StepEvents {
            displacements,
            completions,
            completed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lone_agent(pos: Point, config: &EnvConfig) -> WorldState {
        WorldState {
            agents: vec![AgentState {
                pos,
                status: AgentStatus::Idle,
            }],
            tasks: vec![TaskState {
                pos: [config.world_size, config.world_size],
                done: false,
                claimed_by: None,
            }],
            t: 0,
        }
    }

    fn single() -> EnvConfig {
        EnvConfig {
            n_agents: 1,
            n_tasks: 1,
            ..EnvConfig::benchmark()
        }
    }

    #[test]
    fn reset_shapes_and_determinism() {
        let cfg = EnvConfig::benchmark();
        let s = reset(&cfg, 42);
        assert_eq!(s.agents.len(), 5);
        assert_eq!(s.tasks.len(), 20);
        assert_eq!(s.done_count(), 0);
        assert_eq!(s.t, 0);
        assert_eq!(s, reset(&cfg, 42));
        let other = reset(&cfg, 43);
        assert_ne!(s.agents[0].pos, other.agents[0].pos);
    }

    #[test]
    fn all_stay_costs_time_penalty() {
        let cfg = EnvConfig::benchmark();
        let s = reset(&cfg, 3);
        // with task_duration 1 nothing can complete on the first step
        let out = step(&s, &JointAction(vec![cfg.stay_action(); 5]), &cfg).unwrap();
        for (i, r) in out.rewards.iter().enumerate() {
            assert!(!out.events.completed[i]);
            assert_eq!(*r, -0.5);
        }
    }

    #[test]
    fn kinematics_and_boundary_clip() {
        let cfg = single();
        let out = step(&lone_agent([0.0, 0.0], &cfg), &JointAction(vec![0]), &cfg).unwrap();
        assert_eq!(out.state.agents[0].pos, [5.0, 0.0]);
        assert_eq!(out.events.displacements[0], 5.0);

        let out = step(&lone_agent([19.0, 0.0], &cfg), &JointAction(vec![0]), &cfg).unwrap();
        assert_eq!(out.state.agents[0].pos, [20.0, 0.0]);
        assert_eq!(out.events.displacements[0], 1.0);
    }

    #[test]
    fn base_reward_values() {
        let cfg = EnvConfig::benchmark();
        assert_eq!(base_reward(false, 0.0, &cfg), -0.5);
        assert_eq!(base_reward(false, 5.0, &cfg), -0.875);
        assert_eq!(base_reward(true, 5.0, &cfg), 6.625);
    }

    #[test]
    fn claim_then_complete_after_duration() {
        let cfg = single();
        let mut s = lone_agent([10.0, 10.0], &cfg);
        s.tasks[0].pos = [16.0, 10.0];
        let out = step(&s, &JointAction(vec![0]), &cfg).unwrap();
        assert!(matches!(
            out.state.agents[0].status,
            AgentStatus::Executing { task: 0, remaining: 1 }
        ));
        assert!(out.events.completions.is_empty());
        let out2 = step(&out.state, &JointAction(vec![0]), &cfg).unwrap();
        assert_eq!(out2.events.completions, vec![Completion { task: 0, agent: 0 }]);
        assert_eq!(out2.events.displacements[0], 0.0);
        assert_eq!(out2.rewards[0], 7.0);
        assert!(out2.state.is_terminal(&cfg));
        assert!(step(&out2.state, &JointAction(vec![0]), &cfg).is_err());
    }

    #[test]
    fn claim_ties_go_to_lowest_agent() {
        let cfg = EnvConfig {
            n_agents: 2,
            n_tasks: 2,
            ..EnvConfig::benchmark()
        };
        let s = WorldState {
            agents: vec![
                AgentState { pos: [5.0, 5.0], status: AgentStatus::Idle },
                AgentState { pos: [5.0, 5.0], status: AgentStatus::Idle },
            ],
            tasks: vec![
                TaskState { pos: [6.0, 5.0], done: false, claimed_by: None },
                TaskState { pos: [19.0, 19.0], done: false, claimed_by: None },
            ],
            t: 0,
        };
        let out = step(&s, &JointAction(vec![8, 8]), &cfg).unwrap();
        assert_eq!(out.state.tasks[0].claimed_by, Some(0));
        assert_eq!(out.state.agents[1].status, AgentStatus::Idle);
    }

    #[test]
    fn rejects_bad_actions() {
        let cfg = single();
        let s = lone_agent([0.0, 0.0], &cfg);
        assert!(step(&s, &JointAction(vec![9]), &cfg).is_err());
        assert!(step(&s, &JointAction(vec![0, 0]), &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EnvConfig::benchmark().validate().is_ok());
        assert!(EnvConfig::desk().validate().is_ok());
        let square = EnvConfig { n_agents: 20, n_tasks: 20, ..EnvConfig::benchmark() };
        assert!(square.validate().is_ok());
        let bad = EnvConfig { n_agents: 21, n_tasks: 20, ..EnvConfig::benchmark() };
        assert!(bad.validate().is_err());
        let bad = EnvConfig { completion_radius: 5.0, ..EnvConfig::benchmark() };
        assert!(bad.validate().is_err());
    }
}
