use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gan_poison::{Mode, Profile, TrainingConfig};
use gan_poison_cli::{cmd_eval, cmd_export, cmd_grid, cmd_preprocess, cmd_train, GridSpec, Which};

#[derive(Parser)]
#[command(name = "gan-poison", version, about = "Poisoned GAN training and evaluation")]
struct Cli {
    /// Overrides the config seed (train), the proxy seed (eval) or the sampling seed (export).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Training config (TOML); unspecified fields come from the profile preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tensor file, Canny and Laplacian edge maps and a 512x512 resize of one image.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 128)]
        side: usize,
    },
    /// Train one run.
    Train {
        /// Image file or directory; defaults to a built-in synthetic scene.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Mode used when no config file is given.
        #[arg(long, value_parser = parse_mode, default_value = "poisoned")]
        mode: Mode,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        which: Which,
    },
    /// Sweep poison rates, budgets and seeds.
    Grid {
        /// Grid spec (TOML); defaults to the built-in 4 x 3 x 3 grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Generate an image and write the diffusion hand-off bundle.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value = "")]
        negative_prompt: String,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "baseline" => Ok(Mode::Baseline),
        "poisoned" => Ok(Mode::Poisoned),
        other => Err(format!("unknown mode {other:?}")),
    }
}

fn load_config(cli: &Cli, mode: Mode) -> Result<TrainingConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            TrainingConfig::from_toml_str(&text, cli.profile)?
        }
        None => TrainingConfig::preset(mode, cli.profile),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Preprocess { input, side } => {
            let out = cmd_preprocess(input, &cli.out, *side)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Train { data, mode } => {
            let cfg = load_config(cli, *mode)?;
            let m = cmd_train(&cfg, data.as_deref(), &cli.out)?;
            println!("{} -> {}", m.run_id, gan_poison_cli::final_checkpoint(&cli.out).display());
        }
        Command::Eval { checkpoint, which } => {
            let out = cmd_eval(checkpoint, *which, &cli.out, cli.seed)?;
            for p in &out.reports {
                println!("{}", p.display());
            }
            println!("{}", out.summary.display());
        }
        Command::Grid { grid, data } => {
            let spec = match grid {
                Some(p) => GridSpec::from_toml_str(
                    &std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
                )?,
                None => GridSpec::default(),
            };
            let base = load_config(cli, Mode::Poisoned)?;
            let out = cmd_grid(&spec, &base, data.as_deref(), &cli.out)?;
            println!("{}", out.aggregate_csv.display());
            if !out.failures.is_empty() {
                bail!("{} of {} grid cells failed (see failures.txt)", out.failures.len(), spec.cells().len());
            }
        }
        Command::Export {
            checkpoint,
            prompt,
            negative_prompt,
        } => {
            let path = cmd_export(checkpoint, prompt, negative_prompt, &cli.out, cli.seed.unwrap_or(0))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
