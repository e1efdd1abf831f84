//! Network architectures: trajectory encoder, graph attention, reward head,
//! discriminator and the actor/critic bodies.

pub mod encoder;
pub mod gat;
pub mod mlp;

pub use encoder::{encode_points, init_mhsa, mhsa_forward, MhsaConfig, MhsaOutput};
pub use gat::{gat_forward, graph_features, init_gat, GatConfig, GatOutput, LEAKY_SLOPE};
pub use mlp::Mlp;

use mata_tensor::{ParamStore, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Bounds of the reward head: `alpha in [1 - c_alpha, 1 + c_alpha]`,
/// `beta in [-c_beta, c_beta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub c_alpha: f64,
    pub c_beta: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            c_alpha: 0.5,
            c_beta: 1.0,
        }
    }
}

/// Zero-initialized so the adapted reward starts as the identity.
pub fn init_head(store: &mut ParamStore, d_model: usize, d_gat: usize) {
    store.init_zeros("head/W_r", &[2, d_model + d_gat]);
    store.init_zeros("head/b_r", &[2]);
}

/// Column mean of the encoded sequence, `1 x d`.
pub fn pool(tape: &mut Tape, h: Var) -> Result<Var> {
    Ok(tape.mean_axis(h, 0)?)
}

/// `raw = W_r [h_bar || q'] + b_r`, returns `1 x 2` holding
/// `(1 + c_alpha tanh raw_1, c_beta tanh raw_2)`.
pub fn fuse_and_head(tape: &mut Tape, store: &ParamStore, cfg: &HeadConfig, h_bar: Var, q: Var) -> Result<Var> {
    let f = tape.concat(&[h_bar, q], 1)?;
    let w = tape.param(store, "head/W_r")?;
    let b = tape.param(store, "head/b_r")?;
    let raw = tape.matmul_nt(f, w)?;
    let raw = tape.add_row(raw, b)?;
    let squashed = tape.tanh(raw);
    let a = tape.slice_cols(squashed, 0, 1)?;
    let a = tape.scale(a, cfg.c_alpha);
    let a = tape.add_scalar(a, 1.0);
    let b = tape.slice_cols(squashed, 1, 1)?;
    let b = tape.scale(b, cfg.c_beta);
    Ok(tape.concat(&[a, b], 1)?)
}

/// Discriminator MLP: relu hidden layers, one logit out.
pub fn discriminator(input_dim: usize, hidden: usize, layers: usize) -> Mlp {
    let mut sizes = vec![input_dim];
    sizes.extend(std::iter::repeat(hidden).take(layers.saturating_sub(1)));
    sizes.push(1);
    Mlp::new("disc", &sizes)
}

/// `log sigmoid(z)` for a column of logits, computed as a two-way
/// log-softmax of `[0, z]` for stability.
pub fn log_sigmoid(tape: &mut Tape, z: Var) -> Result<Var> {
    let rows = tape.value(z).rows();
    let zero = tape.constant(Tensor::zeros(&[rows, 1]));
    let pair = tape.concat(&[zero, z], 1)?;
    let ls = tape.log_softmax_rows(pair);
    Ok(tape.slice_cols(ls, 1, 1)?)
}

/// Probabilities `P(expert)` for each row of `x`.
pub fn discriminator_scores(disc: &Mlp, store: &ParamStore, x: &[f64], rows: usize) -> Result<Vec<f64>> {
    Ok(disc
        .forward_plain(store, x, rows)?
        .into_iter()
        .map(mata_tensor::sigmoid)
        .collect())
}

/// Actor network: shared across agents, input `state || onehot(agent)`,
/// output `K + 1` logits.
pub fn actor(state_dim: usize, n_agents: usize, hidden: &[usize], n_actions: usize) -> Mlp {
    let mut sizes = vec![state_dim + n_agents];
    sizes.extend_from_slice(hidden);
    sizes.push(n_actions);
    Mlp::new("actor", &sizes)
}

/// Critic network: input `state || onehot(a_1) || ... || onehot(a_N)`,
/// one value per agent.
pub fn critic(state_dim: usize, n_agents: usize, hidden: &[usize], n_actions: usize) -> Mlp {
    let mut sizes = vec![state_dim + n_agents * n_actions];
    sizes.extend_from_slice(hidden);
    sizes.push(n_agents);
    Mlp::new("critic", &sizes)
}

/// Row-wise log-probabilities of the actor.
pub fn actor_log_probs(actor: &Mlp, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
    let logits = actor.forward(tape, store, x)?;
    Ok(tape.log_softmax_rows(logits))
}
