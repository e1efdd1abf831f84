//! Centralized-critic actor-critic with shared decentralized actors.
//!
//! Actors see the global state plus a one-hot agent id; the critic sees the
//! state and the joint action and predicts one value per agent. Updates are
//! off-policy from a replay buffer: one critic step, one actor step and one
//! soft target update per environment step once the buffer holds a batch.

mod replay;

pub use replay::{Experience, ReplayBuffer};

use mata_tensor::{adam_step, AdamState, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    self, compute_metrics, EnvConfig, EpisodeMetrics, EpisodeRecorder, JointAction, SegmentTracker,
};
use crate::error::{CoreError, Result};
use crate::expert::DemoDataset;
use crate::irl::{FeatureAblation, IrlConfig, IrlModule};
use crate::nets::{self, mlp::dense, Mlp};
use crate::seeds::{derive_seed, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarlConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub tau: f64,
    pub entropy_weight: f64,
    pub episodes: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl MarlConfig {
    pub fn benchmark() -> Self {
        Self {
            actor_lr: 5e-5,
            critic_lr: 1e-5,
            batch_size: 2048,
            buffer_capacity: 1_000_000,
            episodes: 2000,
            tau: 0.01,
            entropy_weight: 0.01,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            ..Self::desk()
        }
    }

    pub fn desk() -> Self {
        Self {
            gamma: 0.95,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            batch_size: 256,
            buffer_capacity: 100_000,
            tau: 0.05,
            entropy_weight: 0.1,
            episodes: 300,
            actor_hidden: vec![32],
            critic_hidden: vec![64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(CoreError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1)");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return fail("learning rates must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return fail("need 0 < batch_size <= buffer_capacity");
        }
        if !(0.0..=1.0).contains(&self.tau) || self.entropy_weight < 0.0 {
            return fail("need tau in [0, 1] and entropy_weight >= 0");
        }
        if self.actor_hidden.iter().chain(&self.critic_hidden).any(|&h| h == 0) {
            return fail("hidden widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Explore,
    Greedy,
}

/// Samples from `probs` (explore) or takes the first maximum (greedy).
pub fn select_action<R: Rng + ?Sized>(probs: &[f64], mode: ActionMode, rng: &mut R) -> usize {
    match mode {
        ActionMode::Greedy => {
            let mut best = 0;
            for (a, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = a;
                }
            }
            best
        }
        ActionMode::Explore => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (a, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return a;
                }
            }
            // rounding left u above the total; take the last non-zero entry
            probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
        }
    }
}

/// Actor, critic and target critic for one team.
#[derive(Debug, Clone)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_params: ParamStore,
    pub critic_params: ParamStore,
    pub target_params: ParamStore,
    n_agents: usize,
    n_actions: usize,
    state_dim: usize,
}

impl AgentNets {
    pub fn new(env: &EnvConfig, cfg: &MarlConfig, seed: u64) -> Self {
        let (n, a, s) = (env.n_agents, env.n_actions(), env.state_dim());
        let actor = nets::actor(s, n, &cfg.actor_hidden, a);
        let critic = nets::critic(s, n, &cfg.critic_hidden, a);
        let mut actor_params = ParamStore::new();
        actor.init(&mut actor_params, &mut stream_rng(seed, "init_actor", 0));
        let mut critic_params = ParamStore::new();
        critic.init(&mut critic_params, &mut stream_rng(seed, "init_critic", 0));
        Self {
            actor,
            critic,
            target_params: critic_params.clone(),
            actor_params,
            critic_params,
            n_agents: n,
            n_actions: a,
            state_dim: s,
        }
    }

    /// Rebuilds nets from a checkpoint holding `actor/*` and `critic/*`.
    pub fn from_store(env: &EnvConfig, cfg: &MarlConfig, store: &ParamStore) -> Result<Self> {
        let mut nets = Self::new(env, cfg, 0);
        for (name, value) in nets.actor_params.iter_mut().chain(nets.critic_params.iter_mut()) {
            let loaded = store.require(name)?;
            if loaded.shape() != value.shape() {
                return Err(CoreError::Config(format!(
                    "checkpoint tensor {name} has shape {:?}, expected {:?}",
                    loaded.shape(),
                    value.shape()
                )));
            }
            *value = loaded.clone();
        }
        nets.target_params = nets.critic_params.clone();
        Ok(nets)
    }

    /// Actor and critic parameters in one store.
    pub fn to_store(&self) -> ParamStore {
        let mut out = self.actor_params.clone();
        out.extend(&self.critic_params);
        out
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `state || onehot(agent)` for every agent, row-major.
    pub fn actor_inputs(&self, state: &[f64]) -> Vec<f64> {
        let n = self.n_agents;
        let mut x = Vec::with_capacity(n * (self.state_dim + n));
        for i in 0..n {
            x.extend_from_slice(state);
            x.extend((0..n).map(|j| (i == j) as u8 as f64));
        }
        x
    }

    /// Action distribution of every agent.
    pub fn policy(&self, state: &[f64]) -> Result<Vec<Vec<f64>>> {
        let logits = self
            .actor
            .forward_plain(&self.actor_params, &self.actor_inputs(state), self.n_agents)?;
        Ok(logits.chunks(self.n_actions).map(mata_tensor::softmax).collect())
    }

    /// Sampled joint actions for many states with one batched forward pass.
    pub fn sample_batch<'s, R: Rng + ?Sized>(
        &self,
        states: impl Iterator<Item = &'s [f64]>,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<usize>>> {
        let mut x = Vec::with_capacity(count * self.n_agents * self.actor.input_dim());
        for s in states {
            x.extend(self.actor_inputs(s));
        }
        let logits = self.actor.forward_plain(&self.actor_params, &x, count * self.n_agents)?;
        Ok(logits
            .chunks(self.n_actions * self.n_agents)
            .map(|joint| {
                joint
                    .chunks(self.n_actions)
                    .map(|l| select_action(&mata_tensor::softmax(l), ActionMode::Explore, rng))
                    .collect()
            })
            .collect())
    }

    /// `state || onehot(a_1) || ... || onehot(a_N)`.
    pub fn critic_input(&self, state: &[f64], actions: &[usize]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.critic.input_dim());
        x.extend_from_slice(state);
        for &a in actions {
            x.extend((0..self.n_actions).map(|b| (a == b) as u8 as f64));
        }
        x
    }

    pub fn q_values(&self, params: &ParamStore, state: &[f64], actions: &[usize]) -> Result<Vec<f64>> {
        self.critic.forward_plain(params, &self.critic_input(state, actions), 1)
    }
}

/// `y_i = r_i + gamma (1 - done) Qbar_i(s', a')`, flattened `B x N`.
pub fn td_targets(nets: &AgentNets, batch: &[&Experience], next_actions: &[Vec<usize>], gamma: f64) -> Result<Vec<f64>> {
    let n = nets.n_agents;
    let mut x = Vec::with_capacity(batch.len() * nets.critic.input_dim());
    for (e, a) in batch.iter().zip(next_actions) {
        x.extend(nets.critic_input(&e.next_state, a));
    }
    let q_next = nets.critic.forward_plain(&nets.target_params, &x, batch.len())?;
    let mut y = Vec::with_capacity(batch.len() * n);
    for (b, e) in batch.iter().enumerate() {
        let mask = if e.done { 0.0 } else { 1.0 };
        for i in 0..n {
            y.push(e.rewards[i] + gamma * mask * q_next[b * n + i]);
        }
    }
    Ok(y)
}

/// Mean over batch and agents of `(Q_i(s, a) - y_i)^2`.
pub fn critic_loss(tape: &mut Tape, nets: &AgentNets, params: &ParamStore, batch: &[&Experience], targets: &[f64]) -> Result<Var> {
    let rows: Vec<Vec<f64>> = batch.iter().map(|e| nets.critic_input(&e.state, &e.actions)).collect();
    let x = tape.constant(Tensor::from_rows(&rows));
    let q = nets.critic.forward(tape, params, x)?;
    let y = tape.constant(Tensor::new(vec![batch.len(), nets.n_agents], targets.to_vec())?);
    let diff = tape.sub(q, y)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

/// `Q_i(s, (a, a_-i))` for every sample, agent and alternative action `a`,
/// flattened `(B * N) x A`. The first critic layer is evaluated once per
/// sample and patched per alternative.
pub fn alternative_q(nets: &AgentNets, params: &ParamStore, batch: &[&Experience]) -> Result<Vec<f64>> {
    let (n, na, s) = (nets.n_agents, nets.n_actions, nets.state_dim);
    let w0 = params.require(&nets.critic.weight_name(0))?;
    let b0 = params.require(&nets.critic.bias_name(0))?;
    let (h, inp) = (w0.rows(), w0.cols());
    let wd = w0.data();
    // action columns of the first layer, transposed for contiguous access
    let cols: Vec<Vec<f64>> = (s..inp).map(|c| (0..h).map(|o| wd[o * inp + c]).collect()).collect();

    let rows = batch.len() * n * na;
    let states: Vec<f64> = batch.iter().flat_map(|e| e.state.iter().copied()).collect();
    let bases = dense(&states, batch.len(), &state_block(w0, s), b0, false);
    let mut pre = Vec::with_capacity(rows * h);
    for (e, base) in batch.iter().zip(bases.chunks(h)) {
        let mut base = base.to_vec();
        for (j, &a) in e.actions.iter().enumerate() {
            for (v, c) in base.iter_mut().zip(&cols[j * na + a]) {
                *v += c;
            }
        }
        for i in 0..n {
            let own = &cols[i * na + e.actions[i]];
            for a in 0..na {
                let alt = &cols[i * na + a];
                pre.extend(base.iter().zip(own).zip(alt).map(|((b, o), x)| (b - o + x).max(0.0)));
            }
        }
    }
    let mut act = pre;
    for l in 1..nets.critic.layers() {
        let w = params.require(&nets.critic.weight_name(l))?;
        let b = params.require(&nets.critic.bias_name(l))?;
        act = dense(&act, rows, w, b, l + 1 < nets.critic.layers());
    }
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let agent = (r / na) % n;
        out.push(act[r * n + agent]);
    }
    Ok(out)
}

fn state_block(w0: &Tensor, s: usize) -> Tensor {
    let (h, inp) = (w0.rows(), w0.cols());
    let data: Vec<f64> = (0..h).flat_map(|o| w0.data()[o * inp..o * inp + s].to_vec()).collect();
    Tensor::new(vec![h, s], data).expect("block shape")
}

/// Mean over batch and agents of `sum_a pi_i(a|s) Q_i(s, (a, a_-i)) +
/// w_ent H(pi_i(.|s))`, with `q_alt` from [`alternative_q`] held fixed.
pub fn actor_objective(
    tape: &mut Tape,
    nets: &AgentNets,
    params: &ParamStore,
    batch: &[&Experience],
    q_alt: &[f64],
    entropy_weight: f64,
) -> Result<Var> {
    let n = nets.n_agents;
    let mut x = Vec::with_capacity(batch.len() * n * nets.actor.input_dim());
    for e in batch {
        x.extend(nets.actor_inputs(&e.state));
    }
    let rows = batch.len() * n;
    let xv = tape.constant(Tensor::new(vec![rows, nets.actor.input_dim()], x)?);
    let logp = nets::actor_log_probs(&nets.actor, tape, params, xv)?;
    let p = tape.exp(logp);
    let q = tape.constant(Tensor::new(vec![rows, nets.n_actions], q_alt.to_vec())?);
    let pq = tape.mul(p, q)?;
    let value = tape.sum(pq);
    let plogp = tape.mul(p, logp)?;
    let neg_entropy = tape.sum(plogp);
    let ent = tape.scale(neg_entropy, -entropy_weight);
    let total = tape.add(value, ent)?;
    Ok(tape.scale(total, 1.0 / rows as f64))
}

/// `target <- (1 - tau) target + tau live`.
pub fn soft_update(target: &mut ParamStore, live: &ParamStore, tau: f64) -> Result<()> {
    Ok(target.blend_toward(live, tau)?)
}

/// One row of the coefficient log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub episode: usize,
    pub step: u32,
    pub alpha: f64,
    pub beta: f64,
    pub gen_loss: f64,
    pub disc_loss: f64,
    pub disc_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    /// Per-episode metrics on the environmental reward.
    pub episodes: Vec<EpisodeMetrics>,
    pub coefficients: Vec<CoefficientRow>,
}

/// Reward-inference settings for a training run.
#[derive(Debug, Clone, Copy)]
pub struct IrlSetup<'a> {
    pub config: &'a IrlConfig,
    pub ablation: FeatureAblation,
    pub demos: &'a DemoDataset,
    /// Keeps the generator and discriminator at their initial weights.
    pub frozen: bool,
}

pub struct TrainOutput {
    pub record: RunRecord,
    pub nets: AgentNets,
    pub irl: Option<IrlModule>,
}

struct Learner<'a> {
    cfg: &'a MarlConfig,
    nets: AgentNets,
    actor_adam: AdamState,
    critic_adam: AdamState,
    tape: Tape,
    replay_rng: ChaCha8Rng,
    target_rng: ChaCha8Rng,
}

impl Learner<'_> {
    fn update(&mut self, buffer: &ReplayBuffer) -> Result<()> {
        let batch = buffer.sample(self.cfg.batch_size, &mut self.replay_rng);
        let next_actions = self.nets.sample_batch(
            batch.iter().map(|e| e.next_state.as_slice()),
            batch.len(),
            &mut self.target_rng,
        )?;
        let y = td_targets(&self.nets, &batch, &next_actions, self.cfg.gamma)?;

        self.tape.clear();
        let loss = critic_loss(&mut self.tape, &self.nets, &self.nets.critic_params, &batch, &y)?;
        let grads = self.tape.backward(loss)?.for_store(&self.nets.critic_params);
        adam_step(&mut self.nets.critic_params, &grads, &mut self.critic_adam, self.cfg.critic_lr)?;

        let q_alt = alternative_q(&self.nets, &self.nets.critic_params, &batch)?;
        self.tape.clear();
        let obj = actor_objective(
            &mut self.tape,
            &self.nets,
            &self.nets.actor_params,
            &batch,
            &q_alt,
            self.cfg.entropy_weight,
        )?;
        let loss = self.tape.scale(obj, -1.0);
        let grads = self.tape.backward(loss)?.for_store(&self.nets.actor_params);
        adam_step(&mut self.nets.actor_params, &grads, &mut self.actor_adam, self.cfg.actor_lr)?;

        soft_update(&mut self.nets.target_params, &self.nets.critic_params, self.cfg.tau)
    }
}

pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    derive_seed(seed, "train_episode", episode as u64)
}

/// Trains a team from scratch. Everything random is drawn from streams
/// derived from `seed`, so equal inputs give bitwise-equal outputs.
pub fn train(env_cfg: &EnvConfig, cfg: &MarlConfig, irl: Option<IrlSetup<'_>>, seed: u64) -> Result<TrainOutput> {
    env_cfg.validate()?;
    cfg.validate()?;
    let mut irl_module = match irl {
        Some(setup) => {
            let mut m = IrlModule::new(setup.config, env_cfg, setup.ablation, setup.demos, seed)?;
            m.train_generator = !setup.frozen;
            m.train_discriminator = !setup.frozen;
            Some(m)
        }
        None => None,
    };

    let mut learner = Learner {
        cfg,
        nets: AgentNets::new(env_cfg, cfg, seed),
        actor_adam: AdamState::new(),
        critic_adam: AdamState::new(),
        tape: Tape::new(),
        replay_rng: stream_rng(seed, "replay", 0),
        target_rng: stream_rng(seed, "target_actions", 0),
    };
    let mut action_rng = stream_rng(seed, "actions", 0);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut record = RunRecord::default();

    for episode in 0..cfg.episodes {
        let mut state = env::reset(env_cfg, episode_seed(seed, episode));
        let mut recorder = EpisodeRecorder::new(env_cfg, episode_seed(seed, episode), &state);
        let mut tracker = SegmentTracker::from_state(&state);
        while !state.is_terminal(env_cfg) {
            let features = state.features(env_cfg);
            let probs = learner.nets.policy(&features)?;
            let action = JointAction(
                probs
                    .iter()
                    .map(|p| select_action(p, ActionMode::Explore, &mut action_rng))
                    .collect(),
            );
            let outcome = env::step(&state, &action, env_cfg)?;
            let segments = tracker.push_outcome(&outcome);
            let mut rewards = outcome.rewards.clone();
            if let Some(m) = irl_module.as_mut() {
                if let Some(r) = m.irl_step(&segments, &outcome.state, &mut rewards, true)? {
                    record.coefficients.push(CoefficientRow {
                        episode,
                        step: outcome.state.t,
                        alpha: r.alpha,
                        beta: r.beta,
                        gen_loss: r.gen_loss,
                        disc_loss: r.disc_loss,
                        disc_accuracy: r.disc_accuracy,
                    });
                }
            }
            buffer.push(Experience {
                state: features,
                actions: action.0.clone(),
                rewards,
                next_state: outcome.state.features(env_cfg),
                done: outcome.state.all_done(),
            });
            if buffer.len() >= cfg.batch_size {
                learner.update(&buffer)?;
            }
            recorder.record(&action, &outcome);
            state = outcome.state;
        }
        record.episodes.push(compute_metrics(&recorder.finish()));
    }

    Ok(TrainOutput {
        record,
        nets: learner.nets,
        irl: irl_module,
    })
}

/// Runs a frozen policy with sampled actions. Metrics always use the
/// environmental reward; an attached reward-inference module only sees the
/// episodes (without updating anything).
pub fn evaluate(
    env_cfg: &EnvConfig,
    nets: &AgentNets,
    episodes: usize,
    seed: u64,
    mut irl: Option<&mut IrlModule>,
) -> Result<Vec<EpisodeMetrics>> {
    env_cfg.validate()?;
    let mut rng = stream_rng(seed, "eval_actions", 0);
    rollouts(env_cfg, episodes, seed, |features, state, segments, outcome_rewards| {
        if let Some(m) = irl.as_deref_mut() {
            let mut adapted = outcome_rewards.to_vec();
            m.irl_step(segments, state, &mut adapted, false)?;
        }
        let probs = nets.policy(features)?;
        Ok(probs.iter().map(|p| select_action(p, ActionMode::Explore, &mut rng)).collect())
    })
}

/// Uniformly random actions, the reference point for learning progress.
pub fn evaluate_random(env_cfg: &EnvConfig, episodes: usize, seed: u64) -> Result<Vec<EpisodeMetrics>> {
    env_cfg.validate()?;
    let mut rng = stream_rng(seed, "random_actions", 0);
    let na = env_cfg.n_actions();
    let n = env_cfg.n_agents;
    rollouts(env_cfg, episodes, seed, |_, _, _, _| Ok((0..n).map(|_| rng.gen_range(0..na)).collect()))
}

/// Shared episode loop for evaluation. `policy` receives the current
/// features and state, plus the segments and environmental rewards of the
/// previous step (empty on the first step), and returns a joint action.
fn rollouts<F>(env_cfg: &EnvConfig, episodes: usize, seed: u64, mut policy: F) -> Result<Vec<EpisodeMetrics>>
where
    F: FnMut(&[f64], &env::WorldState, &[env::TrajectorySegment], &[f64]) -> Result<Vec<usize>>,
{
    let mut out = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let ep_seed = derive_seed(seed, "eval_episode", e as u64);
        let mut state = env::reset(env_cfg, ep_seed);
        let mut recorder = EpisodeRecorder::new(env_cfg, ep_seed, &state);
        let mut tracker = SegmentTracker::from_state(&state);
        let mut last_segments = Vec::new();
        let mut last_rewards = vec![0.0; env_cfg.n_agents];
        while !state.is_terminal(env_cfg) {
            let features = state.features(env_cfg);
            let action = JointAction(policy(&features, &state, &last_segments, &last_rewards)?);
            let outcome = env::step(&state, &action, env_cfg)?;
            last_segments = tracker.push_outcome(&outcome);
            last_rewards = outcome.rewards.clone();
            recorder.record(&action, &outcome);
            state = outcome.state;
        }
        out.push(compute_metrics(&recorder.finish()));
    }
    Ok(out)
}

/// Mean cumulative environmental reward over the last `k` episodes.
pub fn tail_mean_reward(episodes: &[EpisodeMetrics], k: usize) -> f64 {
    let tail = &episodes[episodes.len().saturating_sub(k)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(|m| m.cumulative_reward).sum::<f64>() / tail.len() as f64
}
