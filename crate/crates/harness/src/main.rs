use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mata_core::env::{read_episode_log, score_objective, validate_constraints, write_episode_log, ObjectiveWeights};
use mata_core::expert::run_expert_episode;
use mata_harness::format::write_metrics_csv;
use mata_harness::grid::{run_grid, GridSpec};
use mata_harness::run::{evaluate_checkpoint, execute_run, gen_demos, load_demos, resolve_demos};
use mata_harness::scaling::{scaling_probe, ScalingSpec};
use mata_harness::{selfcheck, HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "mata", version, about = "Adversarial reward inference for multi-agent task allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Benchmark,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON run configuration; the desk profile when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> anyhow::Result<RunConfig> {
        match &self.config {
            Some(p) => Ok(RunConfig::load(p)?),
            None => Ok(RunConfig::desk()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print a default configuration.
    PrintConfig {
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
    },
    /// Generate expert demonstrations.
    GenDemos {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one run and write its run directory.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Demonstration file; overrides `demos.path`.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        no_gat: bool,
        #[arg(long)]
        no_mhsa: bool,
        #[arg(long)]
        no_irl: bool,
        /// Keep generator and discriminator at their initial weights.
        #[arg(long)]
        freeze_irl: bool,
        /// Override the number of training episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate a checkpoint on the environmental reward.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        seed: u64,
        /// Attach the checkpoint's reward-inference module, built with these demos.
        #[arg(long)]
        with_irl: Option<PathBuf>,
        /// Metrics CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every (agents, tasks, seed) combination and summarize.
    Grid {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        agents: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "20,40,60")]
        tasks: Vec<usize>,
        /// Use seeds 0..K instead of the configured seed list.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_gat: bool,
        #[arg(long)]
        no_mhsa: bool,
        #[arg(long)]
        no_irl: bool,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Check an episode log against the allocation constraints.
    Validate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        energy_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        time_weight: f64,
    },
    /// Write the log of one expert episode.
    ExpertLog {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the gradient and invariant suite.
    Selfcheck,
    /// Time the reward networks while growing L, m and n.
    Scaling {
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn apply_overrides(
    cfg: &mut RunConfig,
    no_gat: bool,
    no_mhsa: bool,
    no_irl: bool,
    episodes: Option<usize>,
) {
    cfg.ablation.no_gat |= no_gat;
    cfg.ablation.no_mhsa |= no_mhsa;
    cfg.ablation.no_irl |= no_irl;
    if let Some(e) = episodes {
        cfg.marl.episodes = e;
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let stdout = io::stdout();
    match cli.command {
        Command::PrintConfig { profile } => {
            let cfg = match profile {
                Profile::Desk => RunConfig::desk(),
                Profile::Benchmark => RunConfig::benchmark(),
            };
            println!("{}", cfg.to_json_pretty());
        }
        Command::GenDemos { config, episodes, seed, out } => {
            let cfg = config.load()?;
            let episodes = episodes.unwrap_or(cfg.demos.episodes);
            let demos = gen_demos(&cfg, episodes, seed.unwrap_or(cfg.demos.seed), &out)?;
            println!("wrote {} segments from {episodes} episodes to {}", demos.len(), out.display());
        }
        Command::Train { config, seed, out, demos, no_gat, no_mhsa, no_irl, freeze_irl, episodes } => {
            let mut cfg = config.load()?;
            apply_overrides(&mut cfg, no_gat, no_mhsa, no_irl, episodes);
            cfg.freeze_irl |= freeze_irl;
            cfg.out_dir = out.clone();
            cfg.validate()?;
            let demos = resolve_demos(&cfg, demos.as_deref())?;
            let summary = execute_run(&cfg, seed, demos.as_ref(), &out)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Evaluate { config, checkpoint, episodes, seed, with_irl, out } => {
            let cfg = config.load()?;
            let demos = with_irl.as_deref().map(load_demos).transpose()?;
            let metrics = evaluate_checkpoint(&cfg, &checkpoint, episodes, seed, demos.as_ref())?;
            match out {
                Some(p) => write_metrics_csv(&metrics, BufWriter::new(File::create(&p)?))?,
                None => write_metrics_csv(&metrics, stdout.lock())?,
            }
        }
        Command::Grid { config, agents, tasks, seeds, out, no_gat, no_mhsa, no_irl, episodes } => {
            let mut cfg = config.load()?;
            apply_overrides(&mut cfg, no_gat, no_mhsa, no_irl, episodes);
            let seeds = match seeds {
                Some(k) => (0..k).collect(),
                None => cfg.seeds.clone(),
            };
            let spec = GridSpec { agents, tasks, seeds };
            let output = run_grid(&cfg, &spec, &out)?;
            print!("{}", output.table);
        }
        Command::Validate { log, energy_weight, time_weight } => {
            let file = File::open(&log).with_context(|| format!("cannot read {}", log.display()))?;
            let episode = read_episode_log(BufReader::new(file)).map_err(HarnessError::from)?;
            let report = validate_constraints(&episode);
            let score = score_objective(&episode, ObjectiveWeights { energy: energy_weight, time: time_weight });
            let line = serde_json::json!({
                "clean": report.is_clean(),
                "assignment_violations": report.count_assignment(),
                "overlap_violations": report.count_overlap(),
                "energy_violations": report.count_energy(),
                "unfinished_tasks": report.unfinished_tasks,
                "objective": score,
            });
            println!("{line}");
            if !report.is_clean() {
                bail!(HarnessError::Config(format!(
                    "log violates constraints: {} violation(s)",
                    report.violations.len()
                )));
            }
        }
        Command::ExpertLog { config, seed, out } => {
            let cfg = config.load()?;
            let log = run_expert_episode(&cfg.env, seed).map_err(HarnessError::from)?;
            write_episode_log(&log, BufWriter::new(File::create(&out)?)).map_err(HarnessError::from)?;
        }
        Command::Selfcheck => {
            let results = selfcheck::run_all();
            let mut lock = stdout.lock();
            for r in &results {
                let status = if r.passed { "PASS" } else { "FAIL" };
                writeln!(lock, "{status} {} ({:.2}s): {}", r.name, r.seconds, r.detail)?;
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                bail!("{failed} self-check(s) failed");
            }
        }
        Command::Scaling { repeats } => {
            let spec = ScalingSpec { repeats, ..ScalingSpec::desk() };
            let report = scaling_probe(&spec)?;
            print!("{}", report.render());
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<HarnessError>().map_or("runtime", HarnessError::kind);
            eprintln!("{}", error_line(kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}

