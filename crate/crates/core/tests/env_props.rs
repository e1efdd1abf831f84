use mata_core::env::{
    self, compute_metrics, distance, extract_segments, read_episode_log, score_objective,
    validate_constraints, write_episode_log, Completion, EnvConfig, EpisodeLog, EpisodeRecorder,
    JointAction, ObjectiveWeights, StepRecord, Violation,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_episode(cfg: &EnvConfig, seed: u64) -> EpisodeLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let mut state = env::reset(cfg, seed);
    let mut rec = EpisodeRecorder::new(cfg, seed, &state);
    while !state.is_terminal(cfg) {
        let a = JointAction((0..cfg.n_agents).map(|_| rng.gen_range(0..cfg.n_actions())).collect());
        let out = env::step(&state, &a, cfg).unwrap();
        rec.record(&a, &out);
        state = out.state;
    }
    rec.finish()
}

/// Small world where random walks finish a fair share of tasks.
fn busy_config() -> EnvConfig {
    EnvConfig {
        n_agents: 3,
        n_tasks: 8,
        world_size: 6.0,
        completion_radius: 1.2,
        max_steps: 80,
        ..EnvConfig::desk()
    }
}

#[test]
fn random_episodes_satisfy_constraints() {
    let cfg = busy_config();
    let mut completions = 0;
    for seed in 0..100 {
        let log = random_episode(&cfg, seed);
        let report = validate_constraints(&log);
        assert_eq!(report.count_assignment(), 0, "seed {seed}");
        assert_eq!(report.count_overlap(), 0, "seed {seed}");
        assert!(report.is_clean(), "seed {seed}: {:?}", report.violations);
        completions += log.steps.iter().map(|s| s.completions.len()).sum::<usize>();
    }
    assert!(completions > 100, "too few completions ({completions}) to exercise the validator");
}

fn hand_log(steps: Vec<(u32, Vec<Completion>)>) -> EpisodeLog {
    let cfg = EnvConfig {
        n_agents: 1,
        n_tasks: 2,
        ..EnvConfig::desk()
    };
    EpisodeLog {
        config: cfg,
        seed: 0,
        initial_agents: vec![[0.0, 0.0]],
        tasks: vec![[1.0, 1.0], [2.0, 2.0]],
        steps: steps
            .into_iter()
            .map(|(t, completions)| StepRecord {
                t,
                positions: vec![[0.0, 0.0]],
                actions: vec![8],
                rewards: vec![-0.5],
                displacements: vec![0.0],
                completions,
            })
            .collect(),
    }
}

#[test]
fn injected_overlap_is_reported_once() {
    // both tasks executed by agent 0 over [3, 4]
    let steps = (1..=5)
        .map(|t| {
            let c = if t == 4 {
                vec![Completion { task: 0, agent: 0 }, Completion { task: 1, agent: 0 }]
            } else {
                vec![]
            };
            (t, c)
        })
        .collect();
    let report = validate_constraints(&hand_log(steps));
    assert_eq!(report.count_overlap(), 1);
    assert_eq!(report.violations.len(), 1);
    assert!(matches!(report.violations[0], Violation::Overlap { agent: 0, first: 0, second: 1 }));
}

#[test]
fn empty_episode_is_clean() {
    let report = validate_constraints(&hand_log(vec![(1, vec![]), (2, vec![])]));
    assert!(report.is_clean());
    assert_eq!(report.unfinished_tasks, 2);
}

#[test]
fn duplicate_completion_is_reported() {
    let steps = vec![
        (1, vec![]),
        (2, vec![Completion { task: 0, agent: 0 }]),
        (3, vec![]),
        (4, vec![Completion { task: 0, agent: 0 }]),
    ];
    let report = validate_constraints(&hand_log(steps));
    assert_eq!(report.count_assignment(), 1);
}

#[test]
fn malformed_log_is_reported_not_thrown() {
    let mut log = hand_log(vec![(1, vec![])]);
    log.steps[0].t = 5;
    let report = validate_constraints(&log);
    assert!(matches!(report.violations[0], Violation::Malformed(_)));
}

#[test]
fn objective_hand_built() {
    let steps = (1..=7)
        .map(|t| match t {
            3 => (t, vec![Completion { task: 0, agent: 0 }]),
            7 => (t, vec![Completion { task: 1, agent: 0 }]),
            _ => (t, vec![]),
        })
        .collect();
    let mut log = hand_log(steps);
    log.config.task_energy = 1.0;
    log.steps[0].displacements = vec![1.0];
    let e_c = log.config.energy_penalty * 1.0 / log.config.world_size;
    let (a, b) = (0.7, 1.3);
    let got = score_objective(&log, ObjectiveWeights { energy: a, time: b });
    assert!((got - (a * (e_c + 2.0) + b * 7.0)).abs() < 1e-12);
    let got = score_objective(&log, ObjectiveWeights { energy: 0.0, time: b });
    assert_eq!(got, b * 7.0);

    let none = hand_log(vec![(1, vec![])]);
    assert_eq!(score_objective(&none, ObjectiveWeights { energy: 2.0, time: 3.0 }), 0.0);
}

#[test]
fn waiting_time_identity() {
    let steps = (1..=10)
        .map(|t| if t == 10 { (t, vec![Completion { task: 1, agent: 0 }]) } else { (t, vec![]) })
        .collect();
    let m = compute_metrics(&hand_log(steps));
    assert_eq!(m.waiting_times, vec![None, Some(9.0)]);
}

#[test]
fn metrics_match_independent_recomputation() {
    let cfg = busy_config();
    for seed in 0..20 {
        let log = random_episode(&cfg, seed);
        let m = compute_metrics(&log);

        // rebuild rewards and distances from positions alone
        let mut reward = 0.0;
        let mut dist = 0.0;
        for (t, s) in log.steps.iter().enumerate() {
            let before = log.positions_at(t);
            for i in 0..cfg.n_agents {
                let d = distance(before[i], s.positions[i]);
                let done = s.completions.iter().any(|c| c.agent == i);
                reward += env::base_reward(done, d, &cfg);
                dist += d;
            }
        }
        assert!((m.cumulative_reward - reward).abs() < 1e-9, "seed {seed}");
        assert!((m.total_distance - dist).abs() < 1e-9, "seed {seed}");
        assert_eq!(m.timesteps as usize, log.steps.len());
        assert_eq!(m.tasks_completed, log.steps.iter().map(|s| s.completions.len()).sum::<usize>());
    }
}

#[test]
fn segments_replay_against_the_log() {
    let cfg = busy_config();
    for seed in 0..30 {
        let log = random_episode(&cfg, seed);
        let segments = extract_segments(&log).unwrap();
        let completions: usize = log.steps.iter().map(|s| s.completions.len()).sum();
        assert_eq!(segments.len(), completions);

        let mut seg_dist = vec![0.0; cfg.n_agents];
        let mut last_end = vec![0u32; cfg.n_agents];
        for s in &segments {
            assert!(!s.is_empty());
            assert_eq!(s.len() as u32, s.end_t - s.start_t + 2);
            assert_eq!(s.start_t, last_end[s.agent] + 1, "segments partition the path");
            last_end[s.agent] = s.end_t;
            for w in s.points.windows(2) {
                assert!(distance(w[0], w[1]) <= cfg.speed + 1e-9);
            }
            let end = *s.points.last().unwrap();
            assert!(distance(end, log.tasks[s.task]) <= cfg.completion_radius + 1e-9);
            assert_eq!(end, log.positions_at(s.end_t as usize)[s.agent]);
            seg_dist[s.agent] += s.path_length();
        }

        // total distance = segment lengths + wandering after the last completion
        let total = compute_metrics(&log).total_distance;
        let mut tail = 0.0;
        for i in 0..cfg.n_agents {
            for t in last_end[i] as usize..log.steps.len() {
                tail += distance(log.positions_at(t)[i], log.positions_at(t + 1)[i]);
            }
        }
        let sum: f64 = seg_dist.iter().sum::<f64>() + tail;
        assert!((total - sum).abs() < 1e-9, "seed {seed}: {total} vs {sum}");
    }
}

#[test]
fn two_completions_give_two_covering_segments() {
    let cfg = EnvConfig {
        n_agents: 1,
        n_tasks: 2,
        ..EnvConfig::desk()
    };
    let mut log = hand_log(vec![]);
    log.config = cfg;
    log.steps = (1..=9)
        .map(|t| StepRecord {
            t,
            positions: vec![[0.0, 0.0]],
            actions: vec![8],
            rewards: vec![-0.5],
            displacements: vec![0.0],
            completions: match t {
                4 => vec![Completion { task: 0, agent: 0 }],
                9 => vec![Completion { task: 1, agent: 0 }],
                _ => vec![],
            },
        })
        .collect();
    let segs = extract_segments(&log).unwrap();
    assert_eq!((segs[0].start_t, segs[0].end_t), (1, 4));
    assert_eq!((segs[1].start_t, segs[1].end_t), (5, 9));
}

#[test]
fn log_round_trip() {
    let log = random_episode(&busy_config(), 3);
    let mut buf = Vec::new();
    write_episode_log(&log, &mut buf).unwrap();
    let back = read_episode_log(&buf[..]).unwrap();
    assert_eq!(back, log);
    assert!(read_episode_log(&b""[..]).is_err());
    assert!(read_episode_log(&b"{\"nope\": 1}\n"[..]).is_err());
}

#[test]
fn determinism_and_seed_sensitivity() {
    let cfg = EnvConfig::benchmark();
    assert_eq!(env::reset(&cfg, 11), env::reset(&cfg, 11));
    assert_ne!(env::reset(&cfg, 11), env::reset(&cfg, 12));
    assert_eq!(random_episode(&cfg, 5), random_episode(&cfg, 5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_invariants(seed in any::<u64>(), actions in prop::collection::vec(0usize..9, 3 * 40)) {
        let cfg = busy_config();
        let mut state = env::reset(&cfg, seed);
        let mut done_before = 0;
        for chunk in actions.chunks(3) {
            if state.is_terminal(&cfg) {
                break;
            }
            let out = env::step(&state, &JointAction(chunk.to_vec()), &cfg).unwrap();
            for (a, d) in out.state.agents.iter().zip(&out.events.displacements) {
                prop_assert!(a.pos.iter().all(|&c| (0.0..=cfg.world_size).contains(&c)));
                prop_assert!(*d >= 0.0 && *d <= cfg.speed + 1e-12);
            }
            for (k, task) in state.tasks.iter().enumerate() {
                prop_assert!(!task.done || out.state.tasks[k].done);
            }
            let done_now = out.state.done_count();
            prop_assert!(done_now >= done_before);
            prop_assert_eq!(done_now - done_before, out.events.completions.len());
            done_before = done_now;
            prop_assert_eq!(out.state.t, state.t + 1);
            state = out.state;
        }
    }
}
