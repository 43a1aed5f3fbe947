use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hnwave_cli::commands::{eval, extract, synth, train};
use hnwave_cli::runconfig::RunConfig;
use hnwave_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "hnwave", version, about = "Harmonic-plus-noise guided GAN singing vocoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set train.steps=50`. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse a directory of WAV files into feature files and audio targets.
    Extract {
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train (or resume) on an extracted directory.
    Train {
        #[arg(long = "data")]
        data_dir: Option<PathBuf>,
        #[arg(long = "ckpt")]
        ckpt_dir: Option<PathBuf>,
        /// Stop after this many steps in this invocation.
        #[arg(long)]
        max_steps: Option<u64>,
        /// Replace the bridge latent by zeros (ablation).
        #[arg(long)]
        zero_latent: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render a feature file to a 48 kHz WAV.
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare generated WAVs with references paired by file stem.
    Eval {
        #[arg(long = "ref")]
        ref_dir: PathBuf,
        #[arg(long = "gen")]
        gen_dir: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract {
            in_dir,
            out_dir,
            config,
        } => {
            let rc = RunConfig::load(config.config.as_deref(), &config.overrides)?;
            let r = extract::extract(&in_dir, &out_dir, &rc.model)?;
            println!("extracted {} clips, skipped {}", r.clips.len(), r.skipped.len());
            for (name, why) in &r.skipped {
                println!("skipped\t{name}\t{why}");
            }
        }
        Command::Train {
            data_dir,
            ckpt_dir,
            max_steps,
            zero_latent,
            config,
        } => {
            let rc = RunConfig::load(config.config.as_deref(), &config.overrides)?;
            let data = data_dir
                .or(rc.paths.data_dir)
                .ok_or_else(|| CliError::user("no data directory (use --data or paths.data_dir)"))?;
            let ckpt = ckpt_dir
                .or(rc.paths.ckpt_dir)
                .ok_or_else(|| CliError::user("no checkpoint directory (use --ckpt or paths.ckpt_dir)"))?;
            let opts = train::TrainOptions { max_steps, zero_latent };
            let s = train::train(&rc.model, &data, &ckpt, &opts)?;
            println!("trained to step {}", s.final_step);
        }
        Command::Synth {
            ckpt,
            features,
            out,
            seed,
        } => {
            let r = synth::synth(&ckpt, &features, &out, seed)?;
            println!(
                "wrote {} samples ({:.2} s), RTF {:.3} (published GPU reference {})",
                r.samples,
                r.seconds,
                r.rtf,
                synth::PUBLISHED_RTF
            );
        }
        Command::Eval { ref_dir, gen_dir, out } => {
            let report = eval::eval(&ref_dir, &gen_dir)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
            if let Some(p) = out {
                std::fs::write(&p, format!("{json}\n")).map_err(hnwave_cli::error::io_at(&p))?;
            }
            println!("{json}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
