//! Wall-clock scaling of the reward-inference networks.
//!
//! Each axis times one forward and backward pass while the other sizes stay
//! fixed: trajectory length `L` through the encoder, task count `m` and
//! agent count `n` through graph attention.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use mata_core::nets::{encode_points, gat_forward, init_gat, init_mhsa, GatConfig, MhsaConfig};
use mata_tensor::{ParamStore, Tape, Tensor};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    L,
    M,
    N,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::L => "L",
            Axis::M => "m",
            Axis::N => "n",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingSpec {
    pub mhsa: MhsaConfig,
    pub gat: GatConfig,
    pub lengths: Vec<usize>,
    pub tasks: Vec<usize>,
    pub agents: Vec<usize>,
    /// Held fixed on the GAT axes that are not varied.
    pub fixed_agents: usize,
    pub fixed_tasks: usize,
    pub repeats: usize,
    /// Minimum measured time per (size, repeat), in seconds.
    pub min_seconds: f64,
    /// `n = m = L` for the repeatability measurement.
    pub fixed_point: usize,
}

impl ScalingSpec {
    pub fn desk() -> Self {
        Self {
            mhsa: MhsaConfig::desk(),
            gat: GatConfig::default(),
            lengths: vec![512, 1024, 2048],
            tasks: vec![256, 512, 1024],
            agents: vec![256, 512, 1024],
            fixed_agents: 32,
            fixed_tasks: 32,
            repeats: 5,
            min_seconds: 0.1,
            fixed_point: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub axis: Axis,
    pub size: usize,
    /// Seconds per forward and backward pass, one entry per repeat.
    pub repeats: Vec<f64>,
}

impl Timing {
    pub fn best(&self) -> f64 {
        self.repeats.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest over smallest repeat.
    pub fn spread(&self) -> f64 {
        let max = self.repeats.iter().copied().fold(0.0, f64::max);
        max / self.best()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AxisFit {
    pub axis: Axis,
    /// Least-squares slope of log time against log size.
    pub exponent: f64,
    /// Time ratios between consecutive sizes.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub timings: Vec<Timing>,
    pub fits: Vec<AxisFit>,
    /// Median seconds per combined encoder and attention pass at the fixed
    /// point, three independent repeats.
    pub stability: Vec<f64>,
}

impl ScalingReport {
    pub fn fit(&self, axis: Axis) -> Option<&AxisFit> {
        self.fits.iter().find(|f| f.axis == axis)
    }

    /// Largest over smallest fixed-point repeat.
    pub fn stability_spread(&self) -> f64 {
        let min = self.stability.iter().copied().fold(f64::INFINITY, f64::min);
        self.stability.iter().copied().fold(0.0, f64::max) / min
    }

    pub fn render(&self) -> String {
        let mut out = String::from("axis  size   best_s        spread\n");
        for t in &self.timings {
            out.push_str(&format!(
                "{:<5} {:<6} {:<13.6e} {:.3}\n",
                t.axis.name(),
                t.size,
                t.best(),
                t.spread()
            ));
        }
        for f in &self.fits {
            let ratios: Vec<String> = f.ratios.iter().map(|r| format!("{r:.2}")).collect();
            out.push_str(&format!(
                "{}: exponent {:.2}, doubling ratios [{}]\n",
                f.axis.name(),
                f.exponent,
                ratios.join(", ")
            ));
        }
        let reps: Vec<String> = self.stability.iter().map(|t| format!("{t:.4e}")).collect();
        out.push_str(&format!(
            "fixed point repeats [{}], spread {:.3}\n",
            reps.join(", "),
            self.stability_spread()
        ));
        out
    }
}

pub fn loglog_slope(sizes: &[usize], times: &[f64]) -> f64 {
    let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs `f` repeatedly for at least `min_seconds` and returns seconds per call.
fn time_per_call(min_seconds: f64, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let start = Instant::now();
    let mut calls = 0u32;
    loop {
        f()?;
        calls += 1;
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= min_seconds {
            return Ok(elapsed / calls as f64);
        }
    }
}

fn random_points(rng: &mut ChaCha8Rng, len: usize) -> Vec<[f64; 2]> {
    (0..len).map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]).collect()
}

fn random_nodes(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

/// Seconds per encoder forward and backward pass on `len` points.
pub fn time_encoder(cfg: &MhsaConfig, len: usize, min_seconds: f64) -> Result<f64> {
    let cfg = MhsaConfig { max_len: len, ..*cfg };
    let mut rng = ChaCha8Rng::seed_from_u64(len as u64);
    let mut store = ParamStore::new();
    init_mhsa(&mut store, &cfg, &mut rng);
    let pts = random_points(&mut rng, len);
    let mut tape = Tape::new();
    time_per_call(min_seconds, || {
        tape.clear();
        let enc = encode_points(&mut tape, &store, &cfg, &pts, 10.0)?;
        let loss = tape.sum(enc.h);
        tape.backward(loss)?;
        Ok(())
    })
}

/// Seconds per graph-attention forward and backward pass.
pub fn time_gat(cfg: &GatConfig, n: usize, m: usize, min_seconds: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64((n * 100_003 + m) as u64);
    let mut store = ParamStore::new();
    init_gat(&mut store, cfg, &mut rng);
    let agents = random_nodes(&mut rng, n, cfg.d_in);
    let tasks = random_nodes(&mut rng, m, cfg.d_in);
    let mut tape = Tape::new();
    time_per_call(min_seconds, || {
        tape.clear();
        let out = gat_forward(&mut tape, &store, &agents, &tasks)?;
        let loss = tape.sum(out.q);
        tape.backward(loss)?;
        Ok(())
    })
}

pub fn scaling_probe(spec: &ScalingSpec) -> Result<ScalingReport> {
    for (axis, sizes) in [(Axis::L, &spec.lengths), (Axis::M, &spec.tasks), (Axis::N, &spec.agents)] {
        if sizes.len() < 3 {
            return Err(HarnessError::Config(format!("axis {} needs at least 3 sizes", axis.name())));
        }
    }
    if spec.repeats == 0 {
        return Err(HarnessError::Config("repeats must be positive".into()));
    }
    let mut timings = Vec::new();
    let mut fits = Vec::new();
    for (axis, sizes) in [(Axis::L, &spec.lengths), (Axis::M, &spec.tasks), (Axis::N, &spec.agents)] {
        // repeats are interleaved across sizes so slow drift hits every size alike
        let mut per_size = vec![Vec::with_capacity(spec.repeats); sizes.len()];
        for _ in 0..spec.repeats {
            for (slot, &size) in per_size.iter_mut().zip(sizes.iter()) {
                slot.push(match axis {
                    Axis::L => time_encoder(&spec.mhsa, size, spec.min_seconds)?,
                    Axis::M => time_gat(&spec.gat, spec.fixed_agents, size, spec.min_seconds)?,
                    Axis::N => time_gat(&spec.gat, size, spec.fixed_tasks, spec.min_seconds)?,
                });
            }
        }
        let mut best = Vec::new();
        for (&size, repeats) in sizes.iter().zip(per_size) {
            let t = Timing { axis, size, repeats };
            best.push(t.best());
            timings.push(t);
        }
        fits.push(AxisFit {
            axis,
            exponent: loglog_slope(sizes, &best),
            ratios: best.windows(2).map(|w| w[1] / w[0]).collect(),
        });
    }
    let k = spec.fixed_point;
    let mut stability = Vec::with_capacity(3);
    for _ in 0..3 {
        let mut bursts = Vec::with_capacity(spec.repeats);
        for _ in 0..spec.repeats {
            bursts.push(time_encoder(&spec.mhsa, k, spec.min_seconds)? + time_gat(&spec.gat, k, k, spec.min_seconds)?);
        }
        bursts.sort_by(f64::total_cmp);
        stability.push(bursts[bursts.len() / 2]);
    }
    Ok(ScalingReport { timings, fits, stability })
}
