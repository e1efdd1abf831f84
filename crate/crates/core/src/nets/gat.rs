//! Single-layer graph attention over the agent-task bipartite graph.

use mata_tensor::{ParamStore, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{AgentStatus, EnvConfig, WorldState};
use crate::error::{CoreError, Result};

pub const LEAKY_SLOPE: f64 = 0.2;
/// Node features: `[x / world, y / world, flag]`.
pub const NODE_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatConfig {
    pub d_in: usize,
    pub d_out: usize,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            d_in: NODE_DIM,
            d_out: 32,
        }
    }
}

pub fn init_gat<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &GatConfig, rng: &mut R) {
    let (di, dg) = (cfg.d_in, cfg.d_out);
    store.init_uniform("gat/W", &[dg, di], di, rng);
    store.init_uniform("gat/a", &[2 * dg], 2 * dg, rng);
    store.init_uniform("gat/M_W", &[dg, 2 * di], 2 * di, rng);
    store.init_uniform("gat/M_b", &[dg], 2 * di, rng);
    store.init_uniform("gat/W_q", &[dg, di], di, rng);
}

/// Agent features (`N x 3`, flag = executing) and not-done task features
/// (`M' x 3`, flag = done, so always 0). `None` once every task is done.
pub fn graph_features(state: &WorldState, config: &EnvConfig) -> Option<(Tensor, Tensor)> {
    let w = config.world_size;
    let agents: Vec<Vec<f64>> = state
        .agents
        .iter()
        .map(|a| {
            let busy = matches!(a.status, AgentStatus::Executing { .. });
            vec![a.pos[0] / w, a.pos[1] / w, busy as u8 as f64]
        })
        .collect();
    let tasks: Vec<Vec<f64>> = state
        .tasks
        .iter()
        .filter(|k| !k.done)
        .map(|k| vec![k.pos[0] / w, k.pos[1] / w, 0.0])
        .collect();
    if tasks.is_empty() {
        return None;
    }
    Some((Tensor::from_rows(&agents), Tensor::from_rows(&tasks)))
}

pub struct GatOutput {
    /// Updated agent features `q'`, `N x d_out`.
    pub q: Var,
    /// Attention of every agent over the tasks, `N x M'`, rows sum to 1.
    pub attention: Var,
}

/// `alpha_ik = softmax_k leaky_relu(a^T [W q_i || W q_k])`,
/// `me*_i = sum_k alpha_ik (M_W [q_i || q_k] + M_b)`,
/// `q'_i = relu(W_q q_i + me*_i)`.
pub fn gat_forward(tape: &mut Tape, store: &ParamStore, agents: &Tensor, tasks: &Tensor) -> Result<GatOutput> {
    let (n, m) = (agents.rows(), tasks.rows());
    if m == 0 {
        return Err(CoreError::Contract("graph attention needs at least one task".into()));
    }
    let xa = tape.constant(agents.clone());
    let xt = tape.constant(tasks.clone());
    let w = tape.param(store, "gat/W")?;
    let a = tape.param(store, "gat/a")?;
    let d_in = agents.cols();
    let dg = tape.value(w).rows();

    let za = tape.matmul_nt(xa, w)?;
    let zt = tape.matmul_nt(xt, w)?;
    let a_src = tape.slice_cols(a, 0, dg)?;
    let a_dst = tape.slice_cols(a, dg, dg)?;
    let sa = tape.matmul_nt(za, a_src)?; // n x 1
    let st = tape.matmul_nt(a_dst, zt)?; // 1 x m
    let ones_m = tape.constant(Tensor::full(&[1, m], 1.0));
    let ones_n = tape.constant(Tensor::full(&[n, 1], 1.0));
    let left = tape.matmul(sa, ones_m)?;
    let right = tape.matmul(ones_n, st)?;
    let e = tape.add(left, right)?;
    let e = tape.leaky_relu(e, LEAKY_SLOPE);
    let alpha = tape.softmax_rows(e);

    let mw = tape.param(store, "gat/M_W")?;
    let mb = tape.param(store, "gat/M_b")?;
    let mw_self = tape.slice_cols(mw, 0, d_in)?;
    let mw_task = tape.slice_cols(mw, d_in, d_in)?;
    let own = tape.matmul_nt(xa, mw_self)?;
    let task_msg = tape.matmul_nt(xt, mw_task)?;
    let mixed = tape.matmul(alpha, task_msg)?;
    let me = tape.add(own, mixed)?;
    let me = tape.add_row(me, mb)?;

    let wq = tape.param(store, "gat/W_q")?;
    let selfq = tape.matmul_nt(xa, wq)?;
    let q = tape.add(selfq, me)?;
    let q = tape.relu(q);
    Ok(GatOutput { q, attention: alpha })
}
