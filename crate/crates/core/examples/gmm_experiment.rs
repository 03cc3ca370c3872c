//! DQS against the Gaussian baseline on the 40-mode navigation task.
//!
//! `cargo run --release --example gmm_experiment -- [steps] [out_dir]`
//! Defaults to a short 5000-step run; the shipped config uses 50000.

use std::path::PathBuf;

use anyhow::Result;
use dqs::agent::run_training;
use dqs::config::{AgentKind, RunConfig};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5000);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/example_gmm".into()));
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/gmm.cfg");
    let overrides = [format!("total_steps={steps}"), format!("seed_steps={}", (steps / 10).min(5000))];
    for agent in [AgentKind::Dqs, AgentKind::GaussianBaseline] {
        let mut cfg = RunConfig::load(&path, &overrides)?;
        cfg.agent = agent;
        cfg.out_dir = out.join(agent.as_str());
        let run = run_training(&cfg, 0)?;
        let report = &run.final_eval.as_ref().expect("final evaluation").report;
        println!(
            "{:<18} mmd {:.4}  coverage {:.3}  mean return {:.1}  ({})",
            agent.as_str(),
            report.mmd.unwrap_or(f64::NAN),
            report.mode_coverage.unwrap_or(f64::NAN),
            report.mean_return.unwrap_or(f64::NAN),
            run.run_dir.display()
        );
    }
    Ok(())
}
