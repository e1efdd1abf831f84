//! Actor-critic backend: sampling, losses, symmetry, determinism and purity.

use mata_core::env::EnvConfig;
use mata_core::expert::generate_demos;
use mata_core::irl::{FeatureAblation, IrlConfig};
use mata_core::marl::{
    actor_objective, critic_loss, evaluate, select_action, td_targets, train, ActionMode, AgentNets, Experience,
    IrlSetup, MarlConfig, ReplayBuffer,
};
use mata_tensor::{ParamStore, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_env() -> EnvConfig {
    EnvConfig {
        n_agents: 2,
        n_tasks: 3,
        max_steps: 12,
        ..EnvConfig::desk()
    }
}

fn small_marl(episodes: usize) -> MarlConfig {
    MarlConfig {
        batch_size: 8,
        buffer_capacity: 64,
        episodes,
        actor_hidden: vec![8],
        critic_hidden: vec![8],
        ..MarlConfig::desk()
    }
}

fn random_batch(env: &EnvConfig, rng: &mut ChaCha8Rng, n: usize) -> Vec<Experience> {
    (0..n)
        .map(|_| Experience {
            state: (0..env.state_dim()).map(|_| rng.gen_range(0.0..1.0)).collect(),
            actions: (0..env.n_agents).map(|_| rng.gen_range(0..env.n_actions())).collect(),
            rewards: (0..env.n_agents).map(|_| rng.gen_range(-1.0..7.0)).collect(),
            next_state: (0..env.state_dim()).map(|_| rng.gen_range(0.0..1.0)).collect(),
            done: rng.gen_bool(0.5),
        })
        .collect()
}

fn zero_store(store: &mut ParamStore) {
    for (_, t) in store.iter_mut() {
        t.data_mut().fill(0.0);
    }
}

#[test]
fn explore_sampling_matches_probabilities() {
    let probs = [0.05, 0.3, 0.0, 0.15, 0.1, 0.2, 0.05, 0.1, 0.05];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let mut counts = [0usize; 9];
    for _ in 0..n {
        counts[select_action(&probs, ActionMode::Explore, &mut rng)] += 1;
    }
    for (c, p) in counts.iter().zip(probs) {
        assert!((*c as f64 / n as f64 - p).abs() < 0.01);
    }
    assert_eq!(counts[2], 0);
    assert_eq!(select_action(&probs, ActionMode::Greedy, &mut rng), 1);
}

proptest! {
    #[test]
    fn replay_buffer_is_bounded_fifo(capacity in 1usize..20, pushes in 0usize..60, take in 0usize..25, seed in any::<u64>()) {
        let mut buf = ReplayBuffer::new(capacity);
        for k in 0..pushes {
            buf.push(Experience { state: vec![k as f64], actions: vec![], rewards: vec![], next_state: vec![], done: false });
            prop_assert!(buf.len() <= capacity);
        }
        let kept: Vec<f64> = buf.iter().map(|e| e.state[0]).collect();
        let expect: Vec<f64> = (pushes.saturating_sub(capacity)..pushes).map(|k| k as f64).collect();
        prop_assert_eq!(kept, expect);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = buf.sample(take, &mut rng);
        prop_assert_eq!(sample.len(), take.min(buf.len()));
        let mut ids: Vec<u64> = sample.iter().map(|e| e.state[0] as u64).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), sample.len());
    }
}

#[test]
fn critic_loss_cases() {
    let env = small_env();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut nets = AgentNets::new(&env, &small_marl(1), 2);
    let batch = random_batch(&env, &mut rng, 6);
    let refs: Vec<&Experience> = batch.iter().collect();
    let next: Vec<Vec<usize>> = batch.iter().map(|e| e.actions.clone()).collect();

    // gamma = 0 reduces to regression on the immediate rewards
    let y = td_targets(&nets, &refs, &next, 0.0).unwrap();
    let flat: Vec<f64> = batch.iter().flat_map(|e| e.rewards.clone()).collect();
    assert_eq!(y, flat);
    let mut tape = Tape::new();
    let loss = critic_loss(&mut tape, &nets, &nets.critic_params, &refs, &y).unwrap();
    let mut mse = 0.0;
    for (e, r) in batch.iter().zip(flat.chunks(2)) {
        let q = nets.q_values(&nets.critic_params, &e.state, &e.actions).unwrap();
        mse += (q[0] - r[0]).powi(2) + (q[1] - r[1]).powi(2);
    }
    assert!((tape.value(loss).item() - mse / 12.0).abs() < 1e-12);

    // Q matching its targets gives zero loss
    let q: Vec<f64> = batch
        .iter()
        .flat_map(|e| nets.q_values(&nets.critic_params, &e.state, &e.actions).unwrap())
        .collect();
    let loss = critic_loss(&mut tape, &nets, &nets.critic_params, &refs, &q).unwrap();
    assert_eq!(tape.value(loss).item(), 0.0);

    // a terminal transition with r = 1 and Q = 0 contributes exactly 1
    zero_store(&mut nets.critic_params);
    nets.target_params = nets.critic_params.clone();
    let mut terminal = batch[0].clone();
    terminal.done = true;
    terminal.rewards = vec![1.0, 1.0];
    let y = td_targets(&nets, &[&terminal], &next[..1], 0.95).unwrap();
    assert_eq!(y, vec![1.0, 1.0]);
    tape.clear();
    let loss = critic_loss(&mut tape, &nets, &nets.critic_params, &[&terminal], &y).unwrap();
    assert_eq!(tape.value(loss).item(), 1.0);
}

#[test]
fn actor_objective_closed_forms() {
    let env = small_env();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nets = AgentNets::new(&env, &small_marl(1), 3);
    let batch = random_batch(&env, &mut rng, 5);
    let refs: Vec<&Experience> = batch.iter().collect();
    let rows = refs.len() * env.n_agents * env.n_actions();

    // uniform policy: objective is c + w ln 9
    zero_store(&mut nets.actor_params);
    let mut tape = Tape::new();
    let c = 2.5;
    let obj = actor_objective(&mut tape, &nets, &nets.actor_params, &refs, &vec![c; rows], 0.3).unwrap();
    let ln9 = (env.n_actions() as f64).ln();
    assert!((tape.value(obj).item() - (c + 0.3 * ln9)).abs() < 1e-12);
    let obj = actor_objective(&mut tape, &nets, &nets.actor_params, &refs, &vec![0.0; rows], 1.0).unwrap();
    assert!((tape.value(obj).item() - ln9).abs() < 1e-12);

    // a constant critic carries no policy gradient
    let nets = AgentNets::new(&env, &small_marl(1), 4);
    let mut tape = Tape::new();
    let obj = actor_objective(&mut tape, &nets, &nets.actor_params, &refs, &vec![-3.0; rows], 0.0).unwrap();
    let grads = tape.backward(obj).unwrap().for_store(&nets.actor_params);
    assert!((tape.value(obj).item() + 3.0).abs() < 1e-12);
    for (name, g) in grads.iter() {
        assert!(g.data().iter().all(|v| v.abs() < 1e-12), "{name}");
    }
}

#[test]
fn shared_actor_is_equivariant_in_agent_ids() {
    let env = EnvConfig::desk();
    let nets = AgentNets::new(&env, &MarlConfig::desk(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let state: Vec<f64> = (0..env.state_dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let base = nets.policy(&state).unwrap();
    let x = nets.actor_inputs(&state);
    let width = nets.actor.input_dim();
    for perm in [[1, 2, 0], [2, 1, 0], [0, 2, 1]] {
        let rows: Vec<f64> = perm.iter().flat_map(|&i| x[i * width..(i + 1) * width].to_vec()).collect();
        let logits = nets.actor.forward_plain(&nets.actor_params, &rows, 3).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            let p = mata_tensor::softmax(&logits[k * 9..(k + 1) * 9]);
            assert!(p.iter().zip(&base[i]).all(|(a, b)| (a - b).abs() <= 1e-12));
        }
    }
}

#[test]
fn training_is_deterministic() {
    let env = small_env();
    let cfg = small_marl(6);
    let a = train(&env, &cfg, None, 9).unwrap();
    let b = train(&env, &cfg, None, 9).unwrap();
    assert_eq!(a.record, b.record);
    assert_eq!(a.nets.to_store(), b.nets.to_store());
    assert_eq!(a.nets.target_params, b.nets.target_params);
    let c = train(&env, &cfg, None, 10).unwrap();
    assert_ne!(a.nets.to_store(), c.nets.to_store());
}

#[test]
fn training_with_irl_is_deterministic_and_logs_bounded_coefficients() {
    let env = small_env();
    let demos = generate_demos(&env, 4, 1).unwrap();
    let irl = IrlConfig::desk();
    let setup = IrlSetup { config: &irl, ablation: FeatureAblation::default(), demos: &demos, frozen: false };
    let a = train(&env, &small_marl(6), Some(setup), 4).unwrap();
    let b = train(&env, &small_marl(6), Some(setup), 4).unwrap();
    assert_eq!(a.record, b.record);
    assert!(!a.record.coefficients.is_empty());
    for row in &a.record.coefficients {
        assert!((0.5..=1.5).contains(&row.alpha) && (-1.0..=1.0).contains(&row.beta));
    }
}

#[test]
fn evaluation_ignores_reward_inference() {
    let env = small_env();
    let demos = generate_demos(&env, 4, 2).unwrap();
    let irl = IrlConfig::desk();
    let setup = IrlSetup { config: &irl, ablation: FeatureAblation::default(), demos: &demos, frozen: false };
    let mut out = train(&env, &small_marl(5), Some(setup), 6).unwrap();
    let plain = evaluate(&env, &out.nets, 8, 77, None).unwrap();
    let module = out.irl.as_mut().unwrap();
    let before = (module.generator_params().clone(), *module.shared());
    let with = evaluate(&env, &out.nets, 8, 77, Some(module)).unwrap();
    assert_eq!(plain, with);
    assert_eq!(before.0, *module.generator_params());
    assert_eq!(before.1, *module.shared());
}

#[test]
fn checkpoint_round_trip_rebuilds_the_policy() {
    let env = small_env();
    let cfg = small_marl(2);
    let out = train(&env, &cfg, None, 3).unwrap();
    let store = out.nets.to_store();
    let mut buf = Vec::new();
    mata_tensor::checkpoint::write_checkpoint(&store, &mut buf).unwrap();
    let back = mata_tensor::checkpoint::read_checkpoint(&buf[..]).unwrap();
    let nets = AgentNets::from_store(&env, &cfg, &back).unwrap();
    let state = vec![0.4; env.state_dim()];
    let (p, q) = (out.nets.policy(&state).unwrap(), nets.policy(&state).unwrap());
    for (a, b) in p.iter().flatten().zip(q.iter().flatten()) {
        assert!((a - b).abs() < 1e-5);
    }
    let mut wrong = back.clone();
    wrong.insert("actor/W0", Tensor::zeros(&[1, 1]));
    assert!(AgentNets::from_store(&env, &cfg, &wrong).is_err());
}
