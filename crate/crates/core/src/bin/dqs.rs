use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dqs::cli;

#[derive(Parser)]
#[command(name = "dqs", about = "Train, evaluate, plot and sample Boltzmann diffusion policies")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run per seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// `key=value`, repeatable.
        #[arg(long = "override", value_name = "K=V")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with a frozen policy.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render images from a run directory.
    Plot { run_dir: PathBuf },
    /// Draw actions from a checkpointed policy at one state.
    Sample {
        checkpoint: PathBuf,
        /// Comma-separated state, e.g. `0,0`.
        #[arg(long, allow_hyphen_values = true)]
        state: String,
        #[arg(short, long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Args::parse().cmd {
        Cmd::Train { config, seed, overrides, out } => {
            let runs = cli::cmd_train(&config, &overrides, seed, out.as_deref())?;
            for r in runs {
                println!("{}: {} updates, metrics in {}", r.run_dir.display(), r.updates, r.metrics_path.display());
                if let Some(e) = &r.final_eval {
                    print!("{}", e.report.to_text());
                }
            }
        }
        Cmd::Eval { checkpoint, episodes, seed, out } => {
            let dir = out.unwrap_or_else(|| cli::default_eval_dir(&checkpoint, seed));
            let report = cli::cmd_eval(&checkpoint, episodes, seed, &dir)?;
            print!("{}", report.to_text());
            println!("written to {}", dir.display());
        }
        Cmd::Plot { run_dir } => {
            let summary = cli::cmd_plot(&run_dir)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for p in &summary.written {
                println!("{}", p.display());
            }
        }
        Cmd::Sample { checkpoint, state, n, seed, out } => {
            let s = cli::parse_state(&state)?;
            let actions = cli::cmd_sample(&checkpoint, &s, n, seed)?;
            let csv = cli::actions_csv(&actions);
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}
