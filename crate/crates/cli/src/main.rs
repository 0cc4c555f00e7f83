//! `d4m`: dataset distillation by diffusion from clustered latent
//! prototypes, driven stage by stage from a flat config file.

mod config;
mod stages;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use workspace::{StageError, Workspace};

#[derive(Parser)]
#[command(
    name = "d4m",
    about = "Distill a compact synthetic dataset via latent diffusion from clustered prototypes",
    after_help = "Run `d4m keys` to list every configuration key and its default."
)]
struct Cli {
    /// Flat key=value configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (overrides D4M_OUT_DIR and the config file)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Global seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override any config key, e.g. --set distill.ipc=20 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the procedural shapes train/test datasets
    GenData,
    /// Train the image autoencoder
    TrainAe,
    /// Train the label-conditioned denoiser on standardized latents
    TrainDiff,
    /// Train the teacher classifier on real data
    TrainTeacher,
    /// Learn per-category latent prototypes with streaming k-means
    Cluster,
    /// Synthesize the distilled dataset from prototypes
    Synthesize {
        /// Replace prototypes with seeded standard-normal latents (ablation)
        #[arg(long)]
        random_init: bool,
        /// Shorthand for --set distill.strength=S
        #[arg(long, value_name = "S")]
        strength: Option<f64>,
    },
    /// Train a student classifier on the distilled dataset
    TrainStudent {
        /// Train with cross-entropy on hard labels instead of soft labels
        #[arg(long)]
        hard_labels: bool,
    },
    /// Accuracy, inception score, Fréchet distance, and t-test report
    Evaluate,
    /// Run every stage in order from one configuration
    Pipeline,
    /// List all configuration keys with defaults
    Keys,
}

fn resolve_config(cli: &Cli) -> Result<(RunConfig, Workspace), StageError> {
    const STAGE: &str = "config";
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path).map_err(|e| StageError::new(STAGE, e.to_string()))?;
    }
    if let Ok(dir) = std::env::var("D4M_OUT_DIR") {
        if !dir.is_empty() {
            cfg.set("out_dir", &dir).map_err(|e| StageError::new(STAGE, e.to_string()))?;
        }
    }
    if let Some(out) = &cli.out {
        cfg.set("out_dir", &out.display().to_string())
            .map_err(|e| StageError::new(STAGE, e.to_string()))?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string()).map_err(|e| StageError::new(STAGE, e.to_string()))?;
    }
    for pair in &cli.overrides {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| StageError::new(STAGE, format!("--set expects KEY=VALUE, got {pair:?}")))?;
        cfg.set(key.trim(), value.trim()).map_err(|e| StageError::new(STAGE, e.to_string()))?;
    }
    if let Command::Synthesize { strength: Some(s), .. } = &cli.command {
        cfg.set("distill.strength", &s.to_string())
            .map_err(|e| StageError::new(STAGE, e.to_string()))?;
    }
    let ws = Workspace::new(cfg.get_str("out_dir"));
    Ok((cfg, ws))
}

fn run(cli: &Cli) -> Result<(), StageError> {
    if matches!(cli.command, Command::Keys) {
        print!("{}", RunConfig::describe_keys());
        return Ok(());
    }
    let (cfg, ws) = resolve_config(cli)?;
    match &cli.command {
        Command::GenData => stages::gen_data(&cfg, &ws),
        Command::TrainAe => stages::train_ae(&cfg, &ws),
        Command::TrainDiff => stages::train_diff(&cfg, &ws),
        Command::TrainTeacher => stages::train_teacher_stage(&cfg, &ws),
        Command::Cluster => stages::cluster(&cfg, &ws),
        Command::Synthesize { random_init, .. } => stages::synthesize_stage(&cfg, &ws, *random_init),
        Command::TrainStudent { hard_labels } => stages::train_student_stage(&cfg, &ws, *hard_labels),
        Command::Evaluate => stages::evaluate(&cfg, &ws),
        Command::Pipeline => stages::pipeline(&cfg, &ws),
        Command::Keys => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
