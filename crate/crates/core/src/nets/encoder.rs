//! Trajectory embedding and multi-head self-attention.

use mata_tensor::{ParamStore, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Point;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MhsaConfig {
    pub d_model: usize,
    pub heads: usize,
    /// Longest segment fed to the encoder; longer ones are subsampled.
    pub max_len: usize,
}

impl MhsaConfig {
    pub fn benchmark() -> Self {
        Self {
            d_model: 256,
            heads: 16,
            max_len: 64,
        }
    }

    pub fn desk() -> Self {
        Self {
            d_model: 32,
            heads: 4,
            max_len: 32,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(CoreError::Config(format!(
                "heads ({}) must divide d_model ({})",
                self.heads, self.d_model
            )));
        }
        if self.max_len == 0 {
            return Err(CoreError::Config("max_len must be positive".into()));
        }
        Ok(())
    }
}

pub fn head_param(n: usize, which: &str) -> String {
    format!("mhsa/head{n}/{which}")
}

pub fn init_mhsa<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &MhsaConfig, rng: &mut R) {
    let (d, dh) = (cfg.d_model, cfg.d_head());
    store.init_uniform("mhsa/W_p", &[d, 2], 2, rng);
    store.init_uniform("mhsa/b_p", &[d], 2, rng);
    store.init_uniform("mhsa/W_t", &[d, 2], 2, rng);
    store.init_uniform("mhsa/b_t", &[d], 2, rng);
    for n in 0..cfg.heads {
        for which in ["W_Q", "W_K", "W_V"] {
            store.init_uniform(head_param(n, which), &[d, dh], d, rng);
        }
    }
    store.init_uniform("mhsa/W_O", &[cfg.heads * dh, d], cfg.heads * dh, rng);
}

/// Indices of at most `cap` points spread evenly over `len`, endpoints kept.
pub fn subsample_indices(len: usize, cap: usize) -> Vec<usize> {
    if len <= cap {
        return (0..len).collect();
    }
    if cap == 1 {
        return vec![len - 1];
    }
    (0..cap)
        .map(|i| ((i * (len - 1)) as f64 / (cap - 1) as f64).round() as usize)
        .collect()
}

/// World-normalized coordinates (`L x 2`) and time features `[1, i/L]`
/// (`L x 2`, `i = 1..=L`) of a polyline.
pub fn segment_inputs(points: &[Point], world_size: f64, max_len: usize) -> Result<(Tensor, Tensor)> {
    if points.is_empty() {
        return Err(CoreError::Contract("cannot embed an empty segment".into()));
    }
    let idx = subsample_indices(points.len(), max_len);
    let l = idx.len();
    let coords: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| vec![points[i][0] / world_size, points[i][1] / world_size])
        .collect();
    let time: Vec<Vec<f64>> = (1..=l).map(|i| vec![1.0, i as f64 / l as f64]).collect();
    Ok((Tensor::from_rows(&coords), Tensor::from_rows(&time)))
}

/// `EB = relu(C W_p^T + b_p) + T W_t^T + b_t`, one row per point.
pub fn embed(tape: &mut Tape, store: &ParamStore, coords: &Tensor, time: &Tensor) -> Result<Var> {
    let c = tape.constant(coords.clone());
    let t = tape.constant(time.clone());
    let wp = tape.param(store, "mhsa/W_p")?;
    let bp = tape.param(store, "mhsa/b_p")?;
    let wt = tape.param(store, "mhsa/W_t")?;
    let bt = tape.param(store, "mhsa/b_t")?;
    let pos = tape.matmul_nt(c, wp)?;
    let pos = tape.add_row(pos, bp)?;
    let pos = tape.relu(pos);
    let tim = tape.matmul_nt(t, wt)?;
    let tim = tape.add_row(tim, bt)?;
    Ok(tape.add(pos, tim)?)
}

pub struct MhsaOutput {
    /// `L x d` encoded sequence.
    pub h: Var,
    /// One `L x L` row-stochastic attention matrix per head.
    pub attention: Vec<Var>,
}

/// `H = Concat(head_1..head_h) W_O`, `head_n = softmax(Q_n K_n^T / sqrt(d_head)) V_n`.
pub fn mhsa_forward(tape: &mut Tape, store: &ParamStore, cfg: &MhsaConfig, eb: Var) -> Result<MhsaOutput> {
    let d = tape.value(eb).cols();
    if d != cfg.d_model {
        return Err(CoreError::Contract(format!(
            "embedding width {d} does not match d_model {}",
            cfg.d_model
        )));
    }
    let scale = 1.0 / (cfg.d_head() as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    let mut attention = Vec::with_capacity(cfg.heads);
    for n in 0..cfg.heads {
        let wq = tape.param(store, &head_param(n, "W_Q"))?;
        let wk = tape.param(store, &head_param(n, "W_K"))?;
        let wv = tape.param(store, &head_param(n, "W_V"))?;
        let q = tape.matmul(eb, wq)?;
        let k = tape.matmul(eb, wk)?;
        let v = tape.matmul(eb, wv)?;
        let scores = tape.matmul_nt(q, k)?;
        let scores = tape.scale(scores, scale);
        let a = tape.softmax_rows(scores);
        heads.push(tape.matmul(a, v)?);
        attention.push(a);
    }
    let cat = tape.concat(&heads, 1)?;
    let wo = tape.param(store, "mhsa/W_O")?;
    let h = tape.matmul(cat, wo)?;
    Ok(MhsaOutput { h, attention })
}

/// Embedding followed by self-attention for one segment.
pub fn encode_points(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &MhsaConfig,
    points: &[Point],
    world_size: f64,
) -> Result<MhsaOutput> {
    let (coords, time) = segment_inputs(points, world_size, cfg.max_len)?;
    let eb = embed(tape, store, &coords, &time)?;
    mhsa_forward(tape, store, cfg, eb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsampling_keeps_endpoints() {
        assert_eq!(subsample_indices(3, 5), vec![0, 1, 2]);
        let idx = subsample_indices(100, 8);
        assert_eq!(idx.len(), 8);
        assert_eq!((idx[0], idx[7]), (0, 99));
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_segment_is_rejected() {
        assert!(segment_inputs(&[], 10.0, 4).is_err());
    }

    #[test]
    fn config_requires_divisible_heads() {
        let bad = MhsaConfig {
            d_model: 10,
            heads: 4,
            max_len: 8,
        };
        assert!(bad.validate().is_err());
        assert!(MhsaConfig::desk().validate().is_ok());
        assert_eq!(MhsaConfig::benchmark().d_head(), 16);
    }
}
