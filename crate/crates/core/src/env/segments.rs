use serde::{Deserialize, Serialize};

use super::{distance, EpisodeLog, Point, StepOutcome, WorldState};
use crate::error::Result;

/// Path an agent walked between two consecutive completions.
///
/// `points[0]` is the agent's position at `start_t - 1` (its previous
/// completion, or the reset position), followed by one point per step
/// `start_t..=end_t`. The last point is where task `task` was executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub agent: usize,
    pub task: usize,
    pub points: Vec<Point>,
    pub start_t: u32,
    pub end_t: u32,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Euclidean length of the polyline.
    pub fn path_length(&self) -> f64 {
        self.points.windows(2).map(|w| distance(w[0], w[1])).sum()
    }

    /// Number of environment steps covered.
    pub fn duration(&self) -> u32 {
        self.end_t + 1 - self.start_t
    }
}

/// Incrementally cuts per-agent paths into [`TrajectorySegment`]s.
#[derive(Debug, Clone)]
pub struct SegmentTracker {
    paths: Vec<Vec<Point>>,
    starts: Vec<u32>,
}

impl SegmentTracker {
    pub fn new(initial: &[Point]) -> Self {
        Self {
            paths: initial.iter().map(|&p| vec![p]).collect(),
            starts: vec![1; initial.len()],
        }
    }

    pub fn from_state(state: &WorldState) -> Self {
        let pts: Vec<Point> = state.agents.iter().map(|a| a.pos).collect();
        Self::new(&pts)
    }

    /// Appends step `t` and returns the segments closed by its completions.
    pub fn push(
        &mut self,
        t: u32,
        positions: &[Point],
        completions: &[super::Completion],
    ) -> Vec<TrajectorySegment> {
        for (path, &p) in self.paths.iter_mut().zip(positions) {
            path.push(p);
        }
        let mut out = Vec::new();
        for c in completions {
            let i = c.agent;
            let points = std::mem::replace(&mut self.paths[i], vec![positions[i]]);
            out.push(TrajectorySegment {
                agent: i,
                task: c.task,
                points,
                start_t: self.starts[i],
                end_t: t,
            });
            self.starts[i] = t + 1;
        }
        out
    }

    pub fn push_outcome(&mut self, outcome: &StepOutcome) -> Vec<TrajectorySegment> {
        let pts: Vec<Point> = outcome.state.agents.iter().map(|a| a.pos).collect();
        self.push(outcome.state.t, &pts, &outcome.events.completions)
    }

    /// Path walked by `agent` since its last completion.
    pub fn open_path(&self, agent: usize) -> &[Point] {
        &self.paths[agent]
    }
}

/// One segment per completion event, in log order.
pub fn extract_segments(log: &EpisodeLog) -> Result<Vec<TrajectorySegment>> {
    log.check()?;
    let mut tracker = SegmentTracker::new(&log.initial_agents);
    let mut out = Vec::new();
    for s in &log.steps {
        out.extend(tracker.push(s.t, &s.positions, &s.completions));
    }
    Ok(out)
}
