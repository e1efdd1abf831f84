//! Adversarial reward adaptation.
//!
//! A generator (trajectory encoder, graph attention and a bounded linear
//! head) maps every completed segment to affine coefficients `(alpha, beta)`.
//! The batch mean, smoothed by an EMA, becomes the shared pair applied to
//! the rewards of completing agents. A discriminator learns to tell expert
//! segments from policy segments.

pub mod resample;

use mata_tensor::{adam_step, AdamState, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, TrajectorySegment, WorldState};
use crate::error::{CoreError, Result};
use crate::expert::DemoDataset;
use crate::nets::{
    self, discriminator, encode_points, fuse_and_head, gat_forward, graph_features, init_gat, init_head,
    init_mhsa, log_sigmoid, pool, GatConfig, HeadConfig, MhsaConfig, Mlp,
};
use crate::seeds::stream_rng;

pub use resample::{input_dim, resample_points, resample_segment, segment_features};

/// Probabilities are clamped here before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrlConfig {
    pub l_fix: usize,
    pub ema_decay: f64,
    pub head: HeadConfig,
    pub mhsa: MhsaConfig,
    pub gat: GatConfig,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub disc_hidden: usize,
    pub disc_layers: usize,
    /// Decay of the running mean of `log P` used as the generator baseline.
    pub baseline_decay: f64,
}

impl IrlConfig {
    pub fn benchmark() -> Self {
        Self {
            mhsa: MhsaConfig::benchmark(),
            gen_lr: 1e-5,
            disc_lr: 2e-5,
            ..Self::desk()
        }
    }

    pub fn desk() -> Self {
        Self {
            l_fix: 16,
            ema_decay: 0.9,
            head: HeadConfig::default(),
            mhsa: MhsaConfig::desk(),
            gat: GatConfig::default(),
            gen_lr: 1e-3,
            disc_lr: 1e-3,
            disc_hidden: 64,
            disc_layers: 3,
            baseline_decay: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mhsa.validate()?;
        let fail = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.l_fix < 2 {
            return fail("l_fix must be at least 2");
        }
        if !(0.0..1.0).contains(&self.ema_decay) || !(0.0..1.0).contains(&self.baseline_decay) {
            return fail("ema_decay and baseline_decay must lie in [0, 1)");
        }
        if !(self.head.c_alpha > 0.0 && self.head.c_beta > 0.0) {
            return fail("c_alpha and c_beta must be positive");
        }
        if !(self.gen_lr > 0.0 && self.disc_lr > 0.0) {
            return fail("learning rates must be positive");
        }
        if self.disc_layers == 0 || self.disc_hidden == 0 || self.gat.d_out == 0 {
            return fail("network sizes must be positive");
        }
        Ok(())
    }
}

/// Which generator features are replaced by zeros.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureAblation {
    pub no_mhsa: bool,
    pub no_gat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardCoefficients {
    pub alpha: f64,
    pub beta: f64,
}

impl RewardCoefficients {
    pub const IDENTITY: Self = Self { alpha: 1.0, beta: 0.0 };
}

/// EMA-smoothed coefficient pair shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedCoefficients {
    pub current: RewardCoefficients,
    pub decay: f64,
    pub bounds: HeadConfig,
}

impl SharedCoefficients {
    pub fn new(decay: f64, bounds: HeadConfig) -> Self {
        Self {
            current: RewardCoefficients::IDENTITY,
            decay,
            bounds,
        }
    }

    /// `c <- rho c + (1 - rho) mean(batch)`, written as `c + (1 - rho)(mean - c)`
    /// so an all-identity batch leaves `(1, 0)` exact. No-op on an empty batch.
    pub fn update(&mut self, batch: &[RewardCoefficients]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let ma = batch.iter().map(|c| c.alpha).sum::<f64>() / n;
        let mb = batch.iter().map(|c| c.beta).sum::<f64>() / n;
        let w = 1.0 - self.decay;
        let (ca, cb) = (self.bounds.c_alpha, self.bounds.c_beta);
        let c = &mut self.current;
        c.alpha = (c.alpha + w * (ma - c.alpha)).clamp(1.0 - ca, 1.0 + ca);
        c.beta = (c.beta + w * (mb - c.beta)).clamp(-cb, cb);
    }
}

/// `alpha r + beta` on completion steps, `r` otherwise.
pub fn adapt_reward(r: f64, coeffs: &SharedCoefficients, completed: bool) -> f64 {
    if completed {
        coeffs.current.alpha * r + coeffs.current.beta
    } else {
        r
    }
}

fn clamped_log(p: f64) -> f64 {
    p.max(PROB_CLAMP).ln()
}

/// `-mean(log P)` over policy-segment scores.
pub fn generator_loss(scores: &[f64]) -> f64 {
    -scores.iter().map(|&p| clamped_log(p)).sum::<f64>() / scores.len() as f64
}

/// `-mean(log P_exp) - mean(log(1 - P_pol))`.
pub fn discriminator_loss(expert: &[f64], policy: &[f64]) -> f64 {
    let e = expert.iter().map(|&p| clamped_log(p)).sum::<f64>() / expert.len() as f64;
    let p = policy.iter().map(|&p| clamped_log(1.0 - p)).sum::<f64>() / policy.len() as f64;
    -e - p
}

/// Discriminator loss as a graph over `2n` rows, expert rows first.
pub fn discriminator_loss_graph(
    tape: &mut Tape,
    disc: &Mlp,
    store: &ParamStore,
    expert: &[Vec<f64>],
    policy: &[Vec<f64>],
) -> Result<Var> {
    let xe = tape.constant(Tensor::from_rows(expert));
    let xp = tape.constant(Tensor::from_rows(policy));
    let ze = disc.forward(tape, store, xe)?;
    let zp = disc.forward(tape, store, xp)?;
    let le = log_sigmoid(tape, ze)?;
    let neg = tape.scale(zp, -1.0);
    let lp = log_sigmoid(tape, neg)?;
    let me = tape.mean(le);
    let mp = tape.mean(lp);
    let total = tape.add(me, mp)?;
    Ok(tape.scale(total, -1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscReport {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlStepReport {
    /// Shared coefficients after this step's update.
    pub alpha: f64,
    pub beta: f64,
    pub gen_loss: f64,
    pub disc_loss: f64,
    pub disc_accuracy: f64,
    pub segments: usize,
}

/// Generator, discriminator, optimizers and shared coefficients.
pub struct IrlModule {
    cfg: IrlConfig,
    env: EnvConfig,
    ablation: FeatureAblation,
    generator: ParamStore,
    disc_net: Mlp,
    disc: ParamStore,
    gen_adam: AdamState,
    disc_adam: AdamState,
    shared: SharedCoefficients,
    baseline: f64,
    expert: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    tape: Tape,
    pub train_generator: bool,
    pub train_discriminator: bool,
}

impl IrlModule {
    pub fn new(
        cfg: &IrlConfig,
        env: &EnvConfig,
        ablation: FeatureAblation,
        demos: &DemoDataset,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if demos.is_empty() {
            return Err(CoreError::Config("demonstration dataset is empty".into()));
        }
        let expert = demos
            .segments
            .iter()
            .map(|s| resample_segment(s, cfg.l_fix, env.world_size, env.max_steps))
            .collect();
        Ok(Self::with_expert_features(cfg, env, ablation, expert, seed))
    }

    /// Builds the module from pre-computed expert feature vectors.
    pub fn with_expert_features(
        cfg: &IrlConfig,
        env: &EnvConfig,
        ablation: FeatureAblation,
        expert: Vec<Vec<f64>>,
        seed: u64,
    ) -> Self {
        let mut generator = ParamStore::new();
        init_mhsa(&mut generator, &cfg.mhsa, &mut stream_rng(seed, "init_mhsa", 0));
        init_gat(&mut generator, &cfg.gat, &mut stream_rng(seed, "init_gat", 0));
        init_head(&mut generator, cfg.mhsa.d_model, cfg.gat.d_out);
        let disc_net = discriminator(input_dim(cfg.l_fix), cfg.disc_hidden, cfg.disc_layers);
        let mut disc = ParamStore::new();
        disc_net.init(&mut disc, &mut stream_rng(seed, "init_disc", 0));
        Self {
            cfg: cfg.clone(),
            env: env.clone(),
            ablation,
            generator,
            disc_net,
            disc,
            gen_adam: AdamState::new(),
            disc_adam: AdamState::new(),
            shared: SharedCoefficients::new(cfg.ema_decay, cfg.head),
            baseline: -std::f64::consts::LN_2,
            expert,
            rng: stream_rng(seed, "irl", 0),
            tape: Tape::new(),
            train_generator: true,
            train_discriminator: true,
        }
    }

    pub fn config(&self) -> &IrlConfig {
        &self.cfg
    }

    pub fn shared(&self) -> &SharedCoefficients {
        &self.shared
    }

    pub fn generator_params(&self) -> &ParamStore {
        &self.generator
    }

    pub fn generator_params_mut(&mut self) -> &mut ParamStore {
        &mut self.generator
    }

    pub fn discriminator_params(&self) -> &ParamStore {
        &self.disc
    }

    pub fn discriminator_params_mut(&mut self) -> &mut ParamStore {
        &mut self.disc
    }

    pub fn discriminator_net(&self) -> &Mlp {
        &self.disc_net
    }

    pub fn features(&self, seg: &TrajectorySegment) -> Vec<f64> {
        resample_segment(seg, self.cfg.l_fix, self.env.world_size, self.env.max_steps)
    }

    /// `P(expert)` for each feature vector.
    pub fn scores(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        let flat: Vec<f64> = features.iter().flatten().copied().collect();
        nets::discriminator_scores(&self.disc_net, &self.disc, &flat, features.len())
    }

    /// Records the generator for `segments` on the internal tape and returns
    /// one `1 x 2` coefficient node per segment.
    fn generator_graph(&mut self, segments: &[TrajectorySegment], state: &WorldState) -> Result<Vec<Var>> {
        let tape = &mut self.tape;
        tape.clear();
        let (d, dg) = (self.cfg.mhsa.d_model, self.cfg.gat.d_out);
        let graph = if self.ablation.no_gat {
            None
        } else {
            match graph_features(state, &self.env) {
                Some((agents, tasks)) => Some(gat_forward(tape, &self.generator, &agents, &tasks)?.q),
                None => None,
            }
        };
        let mut out = Vec::with_capacity(segments.len());
        for seg in segments {
            let h_bar = if self.ablation.no_mhsa {
                tape.constant(Tensor::zeros(&[1, d]))
            } else {
                let enc = encode_points(tape, &self.generator, &self.cfg.mhsa, &seg.points, self.env.world_size)?;
                pool(tape, enc.h)?
            };
            let q = match graph {
                Some(q) => tape.gather_rows(q, &[seg.agent])?,
                None => tape.constant(Tensor::zeros(&[1, dg])),
            };
            out.push(fuse_and_head(tape, &self.generator, &self.cfg.head, h_bar, q)?);
        }
        Ok(out)
    }

    /// Coefficients the generator assigns to `segments` under `state`.
    pub fn coefficients(&mut self, segments: &[TrajectorySegment], state: &WorldState) -> Result<Vec<RewardCoefficients>> {
        let nodes = self.generator_graph(segments, state)?;
        Ok(nodes
            .iter()
            .map(|&v| {
                let c = self.tape.value(v).data();
                RewardCoefficients { alpha: c[0], beta: c[1] }
            })
            .collect())
    }

    /// One reward-adaptation step for the segments completed in this
    /// environment step. `rewards` holds the environmental rewards and is
    /// overwritten in place for completing agents. With `train == false`
    /// no parameters, coefficients or baselines change.
    pub fn irl_step(
        &mut self,
        segments: &[TrajectorySegment],
        state: &WorldState,
        rewards: &mut [f64],
        train: bool,
    ) -> Result<Option<IrlStepReport>> {
        if segments.is_empty() {
            return Ok(None);
        }
        let env_rewards: Vec<f64> = segments.iter().map(|s| rewards[s.agent]).collect();
        let nodes = self.generator_graph(segments, state)?;
        let batch: Vec<RewardCoefficients> = nodes
            .iter()
            .map(|&v| {
                let c = self.tape.value(v).data();
                RewardCoefficients { alpha: c[0], beta: c[1] }
            })
            .collect();

        let mut shared = self.shared;
        shared.update(&batch);
        for s in segments {
            rewards[s.agent] = adapt_reward(rewards[s.agent], &shared, true);
        }

        let policy: Vec<Vec<f64>> = segments.iter().map(|s| self.features(s)).collect();
        let scores = self.scores(&policy)?;
        let gen_loss = generator_loss(&scores);
        let log_p: Vec<f64> = scores.iter().map(|&p| clamped_log(p)).collect();
        let mean_log_p = log_p.iter().sum::<f64>() / log_p.len() as f64;

        if train {
            self.shared = shared;
            if self.train_generator {
                // raise the adapted reward of segments the discriminator
                // finds more expert-like than usual, lower it otherwise
                let tape = &mut self.tape;
                let mut terms = Vec::with_capacity(nodes.len());
                for ((&node, &lp), &r) in nodes.iter().zip(&log_p).zip(&env_rewards) {
                    let weight = tape.constant(Tensor::from_rows(&[vec![r, 1.0]]));
                    let adapted = tape.mul(node, weight)?;
                    let adapted = tape.sum(adapted);
                    terms.push(tape.scale(adapted, lp - self.baseline));
                }
                let stacked = tape.concat(&terms, 1)?;
                let surrogate = tape.mean(stacked);
                let loss = tape.scale(surrogate, -1.0);
                let grads = tape.backward(loss)?.for_store(&self.generator);
                adam_step(&mut self.generator, &grads, &mut self.gen_adam, self.cfg.gen_lr)?;
            }
            self.baseline += (1.0 - self.cfg.baseline_decay) * (mean_log_p - self.baseline);
        }

        let disc = self.discriminator_update(&policy, train && self.train_discriminator)?;
        Ok(Some(IrlStepReport {
            alpha: shared.current.alpha,
            beta: shared.current.beta,
            gen_loss,
            disc_loss: disc.loss,
            disc_accuracy: disc.accuracy,
            segments: segments.len(),
        }))
    }

    /// Scores a balanced batch (the given policy features plus as many
    /// uniformly drawn expert ones) and optionally takes one optimizer step.
    /// Loss and accuracy are measured before the update.
    pub fn discriminator_update(&mut self, policy: &[Vec<f64>], update: bool) -> Result<DiscReport> {
        let n = policy.len();
        let expert: Vec<Vec<f64>> = (0..n)
            .map(|_| self.expert[self.rng.gen_range(0..self.expert.len())].clone())
            .collect();
        let pe = self.scores(&expert)?;
        let pp = self.scores(policy)?;
        let correct = pe.iter().filter(|&&p| p > 0.5).count() + pp.iter().filter(|&&p| p < 0.5).count();
        let report = DiscReport {
            loss: discriminator_loss(&pe, &pp),
            accuracy: correct as f64 / (2 * n) as f64,
        };
        if update {
            let tape = &mut self.tape;
            tape.clear();
            let loss = discriminator_loss_graph(tape, &self.disc_net, &self.disc, &expert, policy)?;
            let grads = tape.backward(loss)?.for_store(&self.disc);
            adam_step(&mut self.disc, &grads, &mut self.disc_adam, self.cfg.disc_lr)?;
        }
        Ok(report)
    }
}
