use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use neuroslam::harness::{self, ExperimentConfig, Mode};
use neuroslam::world::builtin_environments;

/// Neuromorphic heading SLAM on a deterministic spiking engine.
#[derive(Parser)]
#[command(name = "neuroslam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials and write artifacts.
    Run(RunArgs),
    /// Compare the decoded posterior with the optimal Gaussian product.
    Audit(RunArgs),
    /// List builtin environments.
    Envs,
    /// Re-decode a saved spike raster.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// full, odometry_only, vision_only or maze2d.
    #[arg(long)]
    mode: Option<Mode>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Seconds per step.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// raster.csv written by `run`.
    #[arg(long)]
    raster: PathBuf,
    /// config.json written by `run`.
    #[arg(long)]
    config: PathBuf,
    /// weights.csv; defaults to the one next to the raster.
    #[arg(long)]
    weights: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.env {
            c.environment = v.clone();
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.duration {
            c.duration = v;
        }
        if let Some(v) = self.dt {
            c.dt = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.trials {
            c.trials = v;
        }
        if let Some(v) = &self.out {
            c.output = Some(v.clone());
        }
        c.validate()?;
        c.environment()?;
        Ok(c)
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let config = args.resolve()?;
    let report = harness::run_experiment(&config)?;
    for m in &report.trials {
        println!(
            "{} {} seed {}: mean error {:.2} deg, std {:.2}, final {:.2}, map F1 {:.3}",
            m.environment, m.mode, m.seed, m.heading.mean, m.heading.std, m.heading.final_error, m.map_f1
        );
    }
    if let Some(out) = &config.output {
        println!("artifacts in {}", out.display());
    }
    Ok(())
}

fn audit(args: &RunArgs) -> Result<()> {
    let config = args.resolve()?;
    let (report, samples) = harness::run_posterior_audit(&config)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &config.output {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join("posterior.json");
        std::fs::write(&path, serde_json::to_string_pretty(&samples)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn envs() {
    for env in builtin_environments() {
        println!(
            "{:<12} {} segments, robot at ({:.2}, {:.2})",
            env.name,
            env.segments.len(),
            env.robot_position.x,
            env.robot_position.y
        );
    }
}

fn replay(args: &ReplayArgs) -> Result<()> {
    let weights = match &args.weights {
        Some(w) => w.clone(),
        None => args.raster.with_file_name("weights.csv"),
    };
    let analysis = harness::replay(&args.raster, &args.config, &weights)?;
    println!("{}", harness::metrics_json(&analysis.metrics));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Audit(a) => audit(a),
        Command::Envs => {
            envs();
            Ok(())
        }
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
