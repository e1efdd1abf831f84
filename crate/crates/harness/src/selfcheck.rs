//! Built-in verification suite: gradients, normalization, closed forms,
//! assignment optimality, constraint soundness and discriminator learning.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use mata_core::env::{
    self, distance, validate_constraints, Completion, EnvConfig, EpisodeLog, EpisodeRecorder, JointAction, Point,
    StepRecord, TrajectorySegment,
};
use mata_core::expert::assign;
use mata_core::irl::{discriminator_loss_graph, input_dim, resample_segment, FeatureAblation, IrlConfig, IrlModule};
use mata_core::marl::{actor_objective, alternative_q, critic_loss, AgentNets, Experience, MarlConfig};
use mata_core::nets::{
    self, discriminator, encoder, fuse_and_head, gat_forward, init_gat, init_head, init_mhsa, pool, GatConfig,
    HeadConfig, MhsaConfig,
};
use mata_tensor::gradcheck::{check_params, GradCheckReport, DEFAULT_STEP, DEFAULT_TOLERANCE};
use mata_tensor::{softmax, ParamStore, Tape, Tensor, TensorError, Var};

pub const GRADIENT_INSTANCES: u64 = 10;
pub const NORMALIZATION_INSTANCES: u64 = 100;
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;
pub const ASSIGN_INSTANCES: u64 = 50;
pub const CONSTRAINT_EPISODES: u64 = 100;
pub const DISC_UPDATES: usize = 200;
pub const DISC_ACCURACY: f64 = 0.95;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let start = Instant::now();
    let outcome = f();
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds,
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lift<T>(r: mata_core::Result<T>) -> mata_tensor::Result<T> {
    r.map_err(|e| TensorError::Contract(e.to_string()))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64) {
    for (_, t) in store.iter_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, world: f64) -> Vec<Point> {
    (0..n).map(|_| [rng.gen_range(0.0..world), rng.gen_range(0.0..world)]).collect()
}

/// Fixed random readout so the objective depends on every output entry.
fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> mata_tensor::Result<Var> {
    let (r, c) = tape.value(x).dims2();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = tape.constant(random_matrix(&mut rng, r, c, -1.0, 1.0));
    let p = tape.mul(x, w)?;
    Ok(tape.sum(p))
}

/// Worst relative error over all instances; `Err` on any failure.
fn gradient_family(
    mut run: impl FnMut(u64) -> mata_tensor::Result<GradCheckReport>,
) -> Result<String, String> {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for trial in 0..GRADIENT_INSTANCES {
        let report = run(trial).map_err(|e| format!("instance {trial}: {e}"))?;
        ensure(report.checked > 0, || format!("instance {trial}: nothing checked"))?;
        ensure(report.passed(DEFAULT_TOLERANCE), || {
            format!("instance {trial}: relative error {:.3e} at {:?}", report.max_rel_err, report.worst)
        })?;
        worst = worst.max(report.max_rel_err);
        checked += report.checked;
    }
    Ok(format!(
        "{GRADIENT_INSTANCES} instances, {checked} entries, max relative error {worst:.2e}"
    ))
}

fn small_marl_setup(seed: u64) -> (AgentNets, Vec<Experience>) {
    let env = EnvConfig {
        n_agents: 2,
        n_tasks: 3,
        n_directions: 4,
        ..EnvConfig::desk()
    };
    let cfg = MarlConfig {
        actor_hidden: vec![6],
        critic_hidden: vec![5],
        ..MarlConfig::desk()
    };
    let nets = AgentNets::new(&env, &cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let batch = (0..4)
        .map(|_| Experience {
            state: (0..env.state_dim()).map(|_| rng.gen_range(0.0..1.0)).collect(),
            actions: (0..2).map(|_| rng.gen_range(0..env.n_actions())).collect(),
            rewards: (0..2).map(|_| rng.gen_range(-1.0..7.5)).collect(),
            next_state: (0..env.state_dim()).map(|_| rng.gen_range(0.0..1.0)).collect(),
            done: rng.gen_bool(0.3),
        })
        .collect();
    (nets, batch)
}

/// Central finite differences against the tape for every network.
pub fn gradient_checks() -> Vec<CheckResult> {
    let mhsa = MhsaConfig { d_model: 8, heads: 2, max_len: 16 };
    let gat = GatConfig { d_in: 3, d_out: 6 };
    let mut out = Vec::new();

    out.push(timed("gradient: embedding", || {
        gradient_family(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let mut store = ParamStore::new();
            init_mhsa(&mut store, &mhsa, &mut rng);
            let pts = random_points(&mut rng, 5, 10.0);
            let (c, t) = lift(encoder::segment_inputs(&pts, 10.0, mhsa.max_len))?;
            let only = ["mhsa/W_p", "mhsa/b_p", "mhsa/W_t", "mhsa/b_t"];
            check_params(&store, Some(&only), DEFAULT_STEP, |tape, s| {
                let eb = lift(encoder::embed(tape, s, &c, &t))?;
                weighted_sum(tape, eb, trial)
            })
        })
    }));

    out.push(timed("gradient: mhsa", || {
        gradient_family(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let mut store = ParamStore::new();
            init_mhsa(&mut store, &mhsa, &mut rng);
            let eb = random_matrix(&mut rng, 5, 8, -1.0, 1.0);
            check_params(&store, None, DEFAULT_STEP, |tape, s| {
                let x = tape.leaf(eb.clone());
                let o = lift(nets::mhsa_forward(tape, s, &mhsa, x))?;
                weighted_sum(tape, o.h, trial)
            })
        })
    }));

    out.push(timed("gradient: gat", || {
        gradient_family(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + trial);
            let mut store = ParamStore::new();
            init_gat(&mut store, &gat, &mut rng);
            randomize(&mut store, &mut rng, 1.0);
            let agents = random_matrix(&mut rng, 2, 3, -1.0, 1.0);
            let tasks = random_matrix(&mut rng, 3, 3, -1.0, 1.0);
            check_params(&store, None, DEFAULT_STEP, |tape, s| {
                let o = lift(gat_forward(tape, s, &agents, &tasks))?;
                weighted_sum(tape, o.q, trial)
            })
        })
    }));

    out.push(timed("gradient: reward head", || {
        let gat = GatConfig { d_in: 3, d_out: 4 };
        gradient_family(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
            let mut store = ParamStore::new();
            init_mhsa(&mut store, &mhsa, &mut rng);
            init_gat(&mut store, &gat, &mut rng);
            init_head(&mut store, 8, 4);
            randomize(&mut store, &mut rng, 0.5);
            let pts = random_points(&mut rng, 4, 10.0);
            let agents = random_matrix(&mut rng, 2, 3, -1.0, 1.0);
            let tasks = random_matrix(&mut rng, 3, 3, -1.0, 1.0);
            check_params(&store, None, DEFAULT_STEP, |tape, s| {
                let enc = lift(nets::encode_points(tape, s, &mhsa, &pts, 10.0))?;
                let h_bar = lift(pool(tape, enc.h))?;
                let q = lift(gat_forward(tape, s, &agents, &tasks))?.q;
                let q = tape.gather_rows(q, &[1])?;
                let o = lift(fuse_and_head(tape, s, &HeadConfig::default(), h_bar, q))?;
                weighted_sum(tape, o, trial)
            })
        })
    }));

    out.push(timed("gradient: discriminator", || {
        let dim = input_dim(4);
        let disc = discriminator(dim, 16, 3);
        gradient_family(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + trial);
            let mut store = ParamStore::new();
            disc.init(&mut store, &mut rng);
            let rows = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
                (0..3).map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect()).collect()
            };
            let (expert, policy) = (rows(&mut rng), rows(&mut rng));
            check_params(&store, None, DEFAULT_STEP, |tape, s| {
                lift(discriminator_loss_graph(tape, &disc, s, &expert, &policy))
            })
        })
    }));

    out.push(timed("gradient: actor", || {
        gradient_family(|trial| {
            let (nets, batch) = small_marl_setup(500 + trial);
            let refs: Vec<&Experience> = batch.iter().collect();
            let q_alt = lift(alternative_q(&nets, &nets.critic_params, &refs))?;
            let lp = check_params(&nets.actor_params, None, DEFAULT_STEP, |tape, s| {
                let x = Tensor::new(vec![2, nets.actor.input_dim()], nets.actor_inputs(&batch[0].state))?;
                let x = tape.constant(x);
                let lp = lift(nets::actor_log_probs(&nets.actor, tape, s, x))?;
                weighted_sum(tape, lp, trial)
            })?;
            if !lp.passed(DEFAULT_TOLERANCE) {
                return Ok(lp);
            }
            check_params(&nets.actor_params, None, DEFAULT_STEP, |tape, s| {
                lift(actor_objective(tape, &nets, s, &refs, &q_alt, 0.05))
            })
        })
    }));

    out.push(timed("gradient: critic", || {
        gradient_family(|trial| {
            let (nets, batch) = small_marl_setup(600 + trial);
            let refs: Vec<&Experience> = batch.iter().collect();
            let targets: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
            check_params(&nets.critic_params, None, DEFAULT_STEP, |tape, s| {
                lift(critic_loss(tape, &nets, s, &refs, &targets))
            })
        })
    }));
    out
}

fn max_row_sum_error(t: &Tensor) -> f64 {
    let (_, c) = t.dims2();
    t.data()
        .chunks(c)
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Softmax rows, encoder attention rows and graph attention weights sum to 1.
pub fn normalization_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(timed("normalization: softmax", || {
        let mut worst = 0.0f64;
        for i in 0..NORMALIZATION_INSTANCES {
            let mut rng = ChaCha8Rng::seed_from_u64(700 + i);
            let n = rng.gen_range(1..20);
            let scale = rng.gen_range(0.1..50.0);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
            worst = worst.max((softmax(&x).iter().sum::<f64>() - 1.0).abs());
        }
        ensure(worst <= NORMALIZATION_TOLERANCE, || format!("max deviation {worst:.2e}"))?;
        Ok(format!("{NORMALIZATION_INSTANCES} instances, max deviation {worst:.2e}"))
    }));
    out.push(timed("normalization: mhsa attention", || {
        let cfg = MhsaConfig::desk();
        let mut worst = 0.0f64;
        for i in 0..NORMALIZATION_INSTANCES {
            let mut rng = ChaCha8Rng::seed_from_u64(800 + i);
            let mut store = ParamStore::new();
            init_mhsa(&mut store, &cfg, &mut rng);
            randomize(&mut store, &mut rng, 1.0);
            let len = rng.gen_range(1..=cfg.max_len);
            let pts = random_points(&mut rng, len, 10.0);
            let mut tape = Tape::new();
            let enc = nets::encode_points(&mut tape, &store, &cfg, &pts, 10.0).map_err(|e| e.to_string())?;
            for a in &enc.attention {
                worst = worst.max(max_row_sum_error(tape.value(*a)));
            }
        }
        ensure(worst <= NORMALIZATION_TOLERANCE, || format!("max deviation {worst:.2e}"))?;
        Ok(format!("{NORMALIZATION_INSTANCES} instances, max deviation {worst:.2e}"))
    }));
    out.push(timed("normalization: gat weights", || {
        let cfg = GatConfig::default();
        let mut worst = 0.0f64;
        for i in 0..NORMALIZATION_INSTANCES {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + i);
            let mut store = ParamStore::new();
            init_gat(&mut store, &cfg, &mut rng);
            randomize(&mut store, &mut rng, 2.0);
            let n = rng.gen_range(1..8);
            let m = rng.gen_range(1..12);
            let agents = random_matrix(&mut rng, n, cfg.d_in, -2.0, 2.0);
            let tasks = random_matrix(&mut rng, m, cfg.d_in, -2.0, 2.0);
            let mut tape = Tape::new();
            let g = gat_forward(&mut tape, &store, &agents, &tasks).map_err(|e| e.to_string())?;
            worst = worst.max(max_row_sum_error(tape.value(g.attention)));
        }
        ensure(worst <= NORMALIZATION_TOLERANCE, || format!("max deviation {worst:.2e}"))?;
        Ok(format!("{NORMALIZATION_INSTANCES} instances, max deviation {worst:.2e}"))
    }));
    out
}

/// Zero discriminator gives `2 ln 2` and `P = 0.5`; zero head gives `(1, 0)`.
pub fn closed_form_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(timed("closed form: zero discriminator", || {
        let env = EnvConfig::desk();
        let cfg = IrlConfig::desk();
        let dim = input_dim(cfg.l_fix);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..6).map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.5)).collect()).collect()
        };
        let expert = rows(&mut rng);
        let mut irl = IrlModule::with_expert_features(&cfg, &env, FeatureAblation::default(), expert, 1);
        let net = irl.discriminator_net().clone();
        net.init_zeros(irl.discriminator_params_mut());
        let policy = rows(&mut rng);
        let report = irl.discriminator_update(&policy, false).map_err(|e| e.to_string())?;
        let target = 2.0 * std::f64::consts::LN_2;
        ensure((report.loss - target).abs() <= 1e-9, || format!("loss {} vs {target}", report.loss))?;
        let p = irl.scores(&policy).map_err(|e| e.to_string())?;
        ensure(p.iter().all(|&v| v == 0.5), || format!("scores {p:?}"))?;
        Ok(format!("loss {:.12}, P = 0.5 on {} inputs", report.loss, p.len()))
    }));
    out.push(timed("closed form: zero reward head", || {
        let env = EnvConfig::desk();
        let cfg = IrlConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let expert = vec![vec![0.5; input_dim(cfg.l_fix)]; 2];
        let mut irl = IrlModule::with_expert_features(&cfg, &env, FeatureAblation::default(), expert, 2);
        let mut count = 0;
        for seed in 0..20 {
            let state = env::reset(&env, seed);
            let segs: Vec<TrajectorySegment> = (0..env.n_agents)
                .map(|agent| {
                    let len = rng.gen_range(2..10);
                    TrajectorySegment {
                        agent,
                        task: agent,
                        points: random_points(&mut rng, len, env.world_size),
                        start_t: 0,
                        end_t: len as u32 - 1,
                    }
                })
                .collect();
            let coeffs = irl.coefficients(&segs, &state).map_err(|e| e.to_string())?;
            for c in coeffs {
                ensure(c.alpha == 1.0 && c.beta == 0.0, || format!("got ({}, {})", c.alpha, c.beta))?;
                count += 1;
            }
        }
        Ok(format!("(alpha, beta) = (1, 0) exactly on {count} segments"))
    }));
    out
}

fn brute_force(agents: &[Point], tasks: &[Point]) -> f64 {
    fn go(i: usize, agents: &[Point], tasks: &[Point], used: &mut [bool]) -> f64 {
        if i == agents.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for k in 0..tasks.len() {
            if !used[k] {
                used[k] = true;
                best = best.min(distance(agents[i], tasks[k]) + go(i + 1, agents, tasks, used));
                used[k] = false;
            }
        }
        best
    }
    go(0, agents, tasks, &mut vec![false; tasks.len()])
}

/// Optimal assignment matches exhaustive search for sizes 2 to 6.
pub fn assignment_check() -> CheckResult {
    timed("oracle: assignment vs brute force", || {
        let mut worst = 0.0f64;
        for size in 2..=6 {
            for i in 0..ASSIGN_INSTANCES {
                let mut rng = ChaCha8Rng::seed_from_u64(size as u64 * 1000 + i);
                let agents = random_points(&mut rng, size, 20.0);
                let tasks = random_points(&mut rng, size, 20.0);
                let a = assign(&agents, &tasks).map_err(|e| e.to_string())?;
                let oracle = brute_force(&agents, &tasks);
                let err = (a.cost - oracle).abs();
                ensure(err <= 1e-9, || format!("size {size} instance {i}: {} vs {oracle}", a.cost))?;
                worst = worst.max(err);
            }
        }
        Ok(format!("{} instances, max cost gap {worst:.1e}", 5 * ASSIGN_INSTANCES))
    })
}

fn random_episode(cfg: &EnvConfig, seed: u64) -> mata_core::Result<EpisodeLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let mut state = env::reset(cfg, seed);
    let mut rec = EpisodeRecorder::new(cfg, seed, &state);
    while !state.is_terminal(cfg) {
        let a = JointAction((0..cfg.n_agents).map(|_| rng.gen_range(0..cfg.n_actions())).collect());
        let o = env::step(&state, &a, cfg)?;
        rec.record(&a, &o);
        state = o.state;
    }
    Ok(rec.finish())
}

/// Hand-built log where one agent executes two tasks over the same interval.
pub fn overlapping_log() -> EpisodeLog {
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
        steps: (1..=5)
            .map(|t| StepRecord {
                t,
                positions: vec![[0.0, 0.0]],
                actions: vec![8],
                rewards: vec![-0.5],
                displacements: vec![0.0],
                completions: if t == 4 {
                    vec![Completion { task: 0, agent: 0 }, Completion { task: 1, agent: 0 }]
                } else {
                    vec![]
                },
            })
            .collect(),
    }
}

/// Random episodes satisfy the allocation constraints; an injected
/// overlap is reported exactly once.
pub fn constraint_check() -> CheckResult {
    timed("constraints: random episodes and injected overlap", || {
        let cfg = EnvConfig {
            world_size: 6.0,
            completion_radius: 1.2,
            max_steps: 80,
            ..EnvConfig::desk()
        };
        let mut completions = 0;
        for seed in 0..CONSTRAINT_EPISODES {
            let log = random_episode(&cfg, seed).map_err(|e| e.to_string())?;
            let r = validate_constraints(&log);
            ensure(r.count_assignment() == 0 && r.count_overlap() == 0, || {
                format!("episode {seed}: {:?}", r.violations)
            })?;
            completions += log.steps.iter().map(|s| s.completions.len()).sum::<usize>();
        }
        let injected = validate_constraints(&overlapping_log());
        ensure(injected.count_overlap() == 1 && injected.violations.len() == 1, || {
            format!("injected log gave {:?}", injected.violations)
        })?;
        Ok(format!(
            "{CONSTRAINT_EPISODES} episodes ({completions} completions) clean, injected overlap reported once"
        ))
    })
}

fn straight_line(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let a = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
    let b = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
    let steps = (distance(a, b).ceil() as usize).max(1);
    (0..=steps)
        .map(|i| {
            let u = i as f64 / steps as f64;
            [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
        })
        .collect()
}

fn random_walk(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut p = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
    let n = rng.gen_range(4..14);
    let mut out = vec![p];
    for _ in 0..n {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        p = [(p[0] + angle.cos()).clamp(0.0, 10.0), (p[1] + angle.sin()).clamp(0.0, 10.0)];
        out.push(p);
    }
    out
}

/// The discriminator learns to separate straight lines from random walks.
pub fn discriminator_check() -> CheckResult {
    timed("learnability: discriminator on lines vs random walks", || {
        let env = EnvConfig::desk();
        let cfg = IrlConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats = |paths: Vec<Vec<Point>>| -> Vec<Vec<f64>> {
            paths
                .into_iter()
                .map(|points| {
                    let end_t = points.len() as u32 - 1;
                    let seg = TrajectorySegment { agent: 0, task: 0, points, start_t: 1, end_t };
                    resample_segment(&seg, cfg.l_fix, env.world_size, env.max_steps)
                })
                .collect()
        };
        let expert = feats((0..200).map(|_| straight_line(&mut rng)).collect());
        let mut irl = IrlModule::with_expert_features(&cfg, &env, FeatureAblation::default(), expert, 3);
        for _ in 0..DISC_UPDATES {
            let batch = feats((0..8).map(|_| random_walk(&mut rng)).collect());
            irl.discriminator_update(&batch, true).map_err(|e| e.to_string())?;
        }
        let held_e = irl.scores(&feats((0..200).map(|_| straight_line(&mut rng)).collect()));
        let held_p = irl.scores(&feats((0..200).map(|_| random_walk(&mut rng)).collect()));
        let (held_e, held_p) = (held_e.map_err(|e| e.to_string())?, held_p.map_err(|e| e.to_string())?);
        let correct = held_e.iter().filter(|&&p| p > 0.5).count() + held_p.iter().filter(|&&p| p < 0.5).count();
        let acc = correct as f64 / 400.0;
        ensure(acc >= DISC_ACCURACY, || format!("held-out accuracy {acc:.3}"))?;
        Ok(format!("held-out accuracy {acc:.3} after {DISC_UPDATES} updates"))
    })
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = gradient_checks();
    out.extend(normalization_checks());
    out.extend(closed_form_checks());
    out.push(assignment_check());
    out.push(constraint_check());
    out.push(discriminator_check());
    out
}
