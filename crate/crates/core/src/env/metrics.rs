//! Post-hoc checks and scores over an [`EpisodeLog`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EpisodeLog;

/// Arrival, wait, duration and completion time of a finished task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub arrival: f64,
    pub waiting: f64,
    pub duration: f64,
    pub completion: f64,
}

/// Per-agent energy accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial: f64,
    /// Movement energy `E_c` (energy penalty times normalized distance).
    pub movement: Vec<f64>,
    /// Accumulated per-task execution energy.
    pub execution: Vec<f64>,
}

impl EnergyLedger {
    pub fn remaining(&self, agent: usize) -> f64 {
        self.initial - self.movement[agent] - self.execution[agent]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// A task completed more than once.
    MultipleCompletions { task: usize, agents: Vec<usize> },
    /// Two tasks of one agent with overlapping execution intervals.
    Overlap { agent: usize, first: usize, second: usize },
    /// An agent ended with negative remaining energy.
    Energy { agent: usize, remaining: f64 },
    /// The log itself could not be interpreted.
    Malformed(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
    /// Tasks never completed. Reported, not counted as violations.
    pub unfinished_tasks: usize,
}

impl ConstraintReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count_assignment(&self) -> usize {
        self.count(|v| matches!(v, Violation::MultipleCompletions { .. }))
    }

    pub fn count_overlap(&self) -> usize {
        self.count(|v| matches!(v, Violation::Overlap { .. }))
    }

    pub fn count_energy(&self) -> usize {
        self.count(|v| matches!(v, Violation::Energy { .. }))
    }

    fn count(&self, f: impl Fn(&Violation) -> bool) -> usize {
        self.violations.iter().filter(|v| f(v)).count()
    }
}

/// Completion times keyed by task: `(agent, rho)` per completion event.
fn completion_events(log: &EpisodeLog) -> BTreeMap<usize, Vec<(usize, u32)>> {
    let mut events: BTreeMap<usize, Vec<(usize, u32)>> = BTreeMap::new();
    for s in &log.steps {
        for c in &s.completions {
            events.entry(c.task).or_default().push((c.agent, s.t));
        }
    }
    events
}

/// Timing of every task; `None` for tasks not completed. All arrivals are 0.
pub fn task_timings(log: &EpisodeLog) -> Vec<Option<TaskTiming>> {
    let g = log.config.task_duration as f64;
    let events = completion_events(log);
    (0..log.config.n_tasks)
        .map(|k| {
            events.get(&k).and_then(|ev| ev.first()).map(|&(_, rho)| {
                let completion = rho as f64;
                TaskTiming {
                    arrival: 0.0,
                    waiting: completion - g,
                    duration: g,
                    completion,
                }
            })
        })
        .collect()
}

pub fn energy_ledger(log: &EpisodeLog) -> EnergyLedger {
    let cfg = &log.config;
    let n = cfg.n_agents;
    let mut movement = vec![0.0; n];
    let mut execution = vec![0.0; n];
    for s in &log.steps {
        for (i, d) in s.displacements.iter().enumerate().take(n) {
            movement[i] += cfg.energy_penalty * d / cfg.world_size;
        }
        for c in &s.completions {
            if c.agent < n {
                execution[c.agent] += cfg.task_energy;
            }
        }
    }
    EnergyLedger {
        initial: cfg.initial_energy,
        movement,
        execution,
    }
}

/// Checks single assignment, non-overlapping execution per agent, and the
/// energy budget. Never fails; problems are reported as violations.
pub fn validate_constraints(log: &EpisodeLog) -> ConstraintReport {
    let mut report = ConstraintReport::default();
    if let Err(e) = log.check() {
        report.violations.push(Violation::Malformed(e.to_string()));
        return report;
    }
    let g = log.config.task_duration;
    let events = completion_events(log);

    for (&task, ev) in &events {
        if ev.len() > 1 {
            report.violations.push(Violation::MultipleCompletions {
                task,
                agents: ev.iter().map(|&(a, _)| a).collect(),
            });
        }
    }
    report.unfinished_tasks = log.config.n_tasks - events.len();

    // execution interval of a completion at rho is [rho - g, rho]
    let mut per_agent: BTreeMap<usize, Vec<(usize, u32)>> = BTreeMap::new();
    for (&task, ev) in &events {
        for &(agent, rho) in ev {
            per_agent.entry(agent).or_default().push((task, rho));
        }
    }
    for (&agent, jobs) in &per_agent {
        for (i, &(u, rho_u)) in jobs.iter().enumerate() {
            for &(v, rho_v) in &jobs[i + 1..] {
                let u_before_v = rho_u + g <= rho_v;
                let v_before_u = rho_v + g <= rho_u;
                if !(u_before_v || v_before_u) {
                    report.violations.push(Violation::Overlap {
                        agent,
                        first: u.min(v),
                        second: u.max(v),
                    });
                }
            }
        }
    }

    let ledger = energy_ledger(log);
    for agent in 0..log.config.n_agents {
        let remaining = ledger.remaining(agent);
        if remaining < 0.0 {
            report.violations.push(Violation::Energy { agent, remaining });
        }
    }
    report
}

/// Weights of the energy and makespan terms of the allocation objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub energy: f64,
    pub time: f64,
}

/// `energy * sum_i (E_c,i + sum_k e_k C_ki) + time * t_total`, where
/// `t_total` is the latest completion minus the earliest arrival over
/// completed tasks (0 when nothing was completed).
pub fn score_objective(log: &EpisodeLog, weights: ObjectiveWeights) -> f64 {
    let ledger = energy_ledger(log);
    let energy: f64 = ledger.movement.iter().sum::<f64>() + ledger.execution.iter().sum::<f64>();
    let timings: Vec<TaskTiming> = task_timings(log).into_iter().flatten().collect();
    let t_total = if timings.is_empty() {
        0.0
    } else {
        let last = timings.iter().map(|t| t.completion).fold(f64::MIN, f64::max);
        let first = timings.iter().map(|t| t.arrival).fold(f64::MAX, f64::min);
        last - first
    };
    weights.energy * energy + weights.time * t_total
}

/// Evaluation metrics, always on the environmental reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Team sum of rewards over the episode.
    pub cumulative_reward: f64,
    /// Steps until every task was done, or the step cap.
    pub timesteps: u32,
    pub total_distance: f64,
    pub tasks_completed: usize,
    /// Waiting time `o_k` per task, `None` if not completed.
    pub waiting_times: Vec<Option<f64>>,
}

impl EpisodeMetrics {
    pub fn total_waiting(&self) -> f64 {
        self.waiting_times.iter().flatten().sum()
    }
}

pub fn compute_metrics(log: &EpisodeLog) -> EpisodeMetrics {
    let cumulative_reward = log.steps.iter().flat_map(|s| s.rewards.iter()).sum();
    let total_distance = log.steps.iter().flat_map(|s| s.displacements.iter()).sum();
    let timings = task_timings(log);
    EpisodeMetrics {
        cumulative_reward,
        timesteps: log.steps.last().map_or(0, |s| s.t),
        total_distance,
        tasks_completed: timings.iter().flatten().count(),
        waiting_times: timings.iter().map(|t| t.map(|t| t.waiting)).collect(),
    }
}
