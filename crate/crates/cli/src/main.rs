use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sceneforge_core::pipeline::{self, PipelineConfig, Stage, EXIT_ALL_FAILED, EXIT_CONFIG};
use sceneforge_core::rfdit::TrainConfig;

#[derive(Parser)]
#[command(name = "sceneforge", version, about = "Insert 3D assets into multi-camera driving scenes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Place, render, build guidance, composite and export annotations.
    Edit,
    /// Place, render and write guidance maps.
    Guidance,
    /// Sample placements and export annotations only.
    Place,
    /// Place and write raw asset renders.
    RenderAsset,
    /// Toy generative model.
    #[command(subcommand)]
    Toy(Toy),
}

#[derive(Subcommand)]
enum Toy {
    /// Train on the built-in toy fixture.
    Train {
        /// Overrides the number of training steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sample the toy scene and write PNGs.
    Sample {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Use an identically zero velocity field instead of a model.
        #[arg(long)]
        zero_field: bool,
        /// Classifier-free guidance scale.
        #[arg(long, default_value_t = 1.0)]
        guidance_scale: f64,
        /// Overrides the number of Euler steps.
        #[arg(long)]
        steps: Option<usize>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn pipeline_config(c: &Common) -> Result<PipelineConfig, Failure> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("--config is required")))?;
    let mut cfg = PipelineConfig::load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::Config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn toy_config(c: &Common) -> Result<TrainConfig, Failure> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Config)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(Failure::Config)?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stage = match &cli.command {
        Command::Edit => Some(Stage::Edit),
        Command::Guidance => Some(Stage::Guidance),
        Command::Place => Some(Stage::Place),
        Command::RenderAsset => Some(Stage::RenderAsset),
        Command::Toy(_) => None,
    };
    if let Some(stage) = stage {
        let cfg = pipeline_config(&cli.common)?;
        let report = pipeline::run(&cfg, stage).map_err(|e| Failure::Config(e.into()))?;
        for s in &report.specs {
            match &s.error {
                None => log::info!("{}: ok", s.id),
                Some(e) => log::warn!("{}: {}: {e}", s.id, s.status),
            }
        }
        println!(
            "{} ok, {} failed; report at {}",
            report.succeeded,
            report.failed,
            cfg.out.join("report.json").display()
        );
        if report.exit_code() == EXIT_ALL_FAILED {
            return Err(Failure::Run(anyhow::anyhow!("every placement spec failed")));
        }
        return Ok(());
    }

    let Command::Toy(toy) = cli.command else {
        unreachable!("pipeline stages handled above")
    };
    let mut cfg = toy_config(&cli.common)?;
    let out = cli.common.out.clone().unwrap_or_else(|| PathBuf::from("toy_out"));
    match toy {
        Toy::Train { steps } => {
            if let Some(s) = steps {
                cfg.steps = s;
            }
            let summary = pipeline::run_toy_train(&cfg, &out).map_err(|e| Failure::Run(e.into()))?;
            println!(
                "trained {} steps: eval loss {:.6} -> {:.6} ({:.4}), masked PSNR {:.2} dB",
                summary.steps,
                summary.initial_eval_loss,
                summary.final_eval_loss,
                summary.loss_ratio,
                summary.masked_psnr_db
            );
        }
        Toy::Sample {
            checkpoint,
            zero_field,
            guidance_scale,
            steps,
        } => {
            if let Some(s) = steps {
                cfg.sample_steps = s;
            }
            if let Some(p) = &checkpoint {
                if !p.is_file() {
                    return Err(Failure::Config(anyhow::anyhow!("checkpoint {} not found", p.display())));
                }
            } else if !zero_field {
                return Err(Failure::Config(anyhow::anyhow!(
                    "no checkpoint given; pass --checkpoint <path> or --zero-field"
                )));
            }
            let written = pipeline::run_toy_sample(&cfg, checkpoint.as_deref(), zero_field, guidance_scale, &out)
                .map_err(|e| Failure::Run(e.into()))?;
            println!("wrote {} images under {}", written.len(), out.join("samples").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ALL_FAILED as u8)
        }
    }
}
