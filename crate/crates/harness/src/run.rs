//! Single training runs, checkpoint evaluation and demonstration files.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use mata_core::env::EpisodeMetrics;
use mata_core::expert::{generate_demos, read_demos, write_demos, DemoDataset};
use mata_core::irl::IrlModule;
use mata_core::marl::{self, tail_mean_reward, AgentNets, IrlSetup, TrainOutput};
use mata_tensor::{checkpoint, ParamStore};

use crate::config::{RunConfig, TAIL_EPISODES};
use crate::error::{HarnessError, Result};
use crate::format::{write_coefficients_csv, write_metrics_csv};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const COEFFICIENTS_FILE: &str = "coefficients.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.json";

/// The files every run directory holds, and nothing else.
pub const RUN_FILES: [&str; 5] = [CONFIG_FILE, METRICS_FILE, COEFFICIENTS_FILE, CHECKPOINT_FILE, SUMMARY_FILE];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub variant: String,
    pub seed: u64,
    pub n_agents: usize,
    pub n_tasks: usize,
    pub episodes: usize,
    pub tail_episodes: usize,
    pub tail_mean_reward: f64,
    pub tail_mean_tasks_completed: f64,
    pub tail_mean_distance: f64,
    pub tail_mean_waiting: f64,
    pub tail_mean_timesteps: f64,
    pub final_alpha: Option<f64>,
    pub final_beta: Option<f64>,
    pub wall_clock_seconds: f64,
}

fn tail_mean(episodes: &[EpisodeMetrics], f: impl Fn(&EpisodeMetrics) -> f64) -> f64 {
    let tail = &episodes[episodes.len().saturating_sub(TAIL_EPISODES)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}

pub fn load_demos(path: &Path) -> Result<DemoDataset> {
    let file = File::open(path).map_err(|source| HarnessError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(read_demos(BufReader::new(file))?)
}

pub fn save_demos(demos: &DemoDataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    write_demos(demos, &mut out)?;
    Ok(())
}

/// Generates demonstrations for `cfg.env` and writes them to `path`.
pub fn gen_demos(cfg: &RunConfig, episodes: usize, seed: u64, path: &Path) -> Result<DemoDataset> {
    let demos = generate_demos(&cfg.env, episodes, seed)?;
    save_demos(&demos, path)?;
    Ok(demos)
}

fn check_demos(cfg: &RunConfig, demos: &DemoDataset) -> Result<()> {
    if demos.config != cfg.env {
        return Err(HarnessError::Config(
            "demonstration file was generated for a different environment".into(),
        ));
    }
    Ok(())
}

/// Trains with `cfg` and `seed`. Demos are required unless `no_irl` is set.
pub fn train_run(cfg: &RunConfig, seed: u64, demos: Option<&DemoDataset>) -> Result<TrainOutput> {
    cfg.validate()?;
    let setup = if cfg.ablation.no_irl {
        None
    } else {
        let demos = demos.ok_or(HarnessError::MissingDemos)?;
        check_demos(cfg, demos)?;
        Some(IrlSetup {
            config: &cfg.irl,
            ablation: cfg.ablation.features(),
            demos,
            frozen: cfg.freeze_irl,
        })
    };
    Ok(marl::train(&cfg.env, &cfg.marl, setup, seed)?)
}

/// Actor, critic and (if present) generator and discriminator weights.
pub fn checkpoint_store(out: &TrainOutput) -> ParamStore {
    let mut store = out.nets.to_store();
    if let Some(m) = &out.irl {
        store.extend(m.generator_params());
        store.extend(m.discriminator_params());
    }
    store
}

/// Trains and writes the five run files into `dir`.
pub fn execute_run(cfg: &RunConfig, seed: u64, demos: Option<&DemoDataset>, dir: &Path) -> Result<RunSummary> {
    let start = Instant::now();
    let out = train_run(cfg, seed, demos)?;
    let seconds = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_json_pretty())?;
    write_metrics_csv(&out.record.episodes, BufWriter::new(File::create(dir.join(METRICS_FILE))?))?;
    write_coefficients_csv(
        &out.record.coefficients,
        BufWriter::new(File::create(dir.join(COEFFICIENTS_FILE))?),
    )?;
    checkpoint::save(&checkpoint_store(&out), &dir.join(CHECKPOINT_FILE))?;

    let eps = &out.record.episodes;
    let last = out.irl.as_ref().map(|m| m.shared().current);
    let summary = RunSummary {
        config_hash: cfg.hash(),
        variant: cfg.ablation.label(),
        seed,
        n_agents: cfg.env.n_agents,
        n_tasks: cfg.env.n_tasks,
        episodes: eps.len(),
        tail_episodes: eps.len().min(TAIL_EPISODES),
        tail_mean_reward: tail_mean_reward(eps, TAIL_EPISODES),
        tail_mean_tasks_completed: tail_mean(eps, |m| m.tasks_completed as f64),
        tail_mean_distance: tail_mean(eps, |m| m.total_distance),
        tail_mean_waiting: tail_mean(eps, EpisodeMetrics::total_waiting),
        tail_mean_timesteps: tail_mean(eps, |m| m.timesteps as f64),
        final_alpha: last.map(|c| c.alpha),
        final_beta: last.map(|c| c.beta),
        wall_clock_seconds: seconds,
    };
    std::fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Demonstrations for a run: the configured file, or none for `no_irl`.
pub fn resolve_demos(cfg: &RunConfig, explicit: Option<&Path>) -> Result<Option<DemoDataset>> {
    if cfg.ablation.no_irl {
        return Ok(None);
    }
    let path: PathBuf = explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.demos.path.clone())
        .ok_or(HarnessError::MissingDemos)?;
    Ok(Some(load_demos(&path)?))
}

/// Evaluates a saved checkpoint on the environmental reward. With `demos`,
/// a reward-inference module rebuilt from the checkpoint observes the
/// episodes without influencing them.
pub fn evaluate_checkpoint(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    episodes: usize,
    seed: u64,
    demos: Option<&DemoDataset>,
) -> Result<Vec<EpisodeMetrics>> {
    cfg.validate()?;
    let store = checkpoint::load(checkpoint_path).map_err(|e| match e {
        mata_tensor::TensorError::Io(source) => HarnessError::Read {
            path: checkpoint_path.to_path_buf(),
            source,
        },
        other => other.into(),
    })?;
    let nets = AgentNets::from_store(&cfg.env, &cfg.marl, &store)?;
    let mut module = match demos {
        Some(d) => {
            check_demos(cfg, d)?;
            let mut m = IrlModule::new(&cfg.irl, &cfg.env, cfg.ablation.features(), d, seed)?;
            load_into(m.generator_params_mut(), &store)?;
            load_into(m.discriminator_params_mut(), &store)?;
            m.train_generator = false;
            m.train_discriminator = false;
            Some(m)
        }
        None => None,
    };
    Ok(marl::evaluate(&cfg.env, &nets, episodes, seed, module.as_mut())?)
}

fn load_into(target: &mut ParamStore, source: &ParamStore) -> Result<()> {
    for (name, value) in target.iter_mut() {
        let loaded = source.require(name)?;
        if loaded.shape() != value.shape() {
            return Err(HarnessError::Config(format!("checkpoint tensor {name} has the wrong shape")));
        }
        *value = loaded.clone();
    }
    Ok(())
}
