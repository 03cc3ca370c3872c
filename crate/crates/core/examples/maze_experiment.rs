//! DQS against the Gaussian baseline in the two-goal maze, reporting how
//! often each goal is reached.
//!
//! `cargo run --release --example maze_experiment -- [steps] [out_dir]`

use std::path::PathBuf;

use anyhow::Result;
use dqs::agent::run_training;
use dqs::config::{AgentKind, RunConfig};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/example_maze".into()));
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/maze.cfg");
    let overrides = [
        format!("total_steps={steps}"),
        format!("seed_steps={}", (steps / 10).min(5000)),
        format!("temperature_horizon={steps}"),
    ];
    for agent in [AgentKind::Dqs, AgentKind::GaussianBaseline] {
        let mut cfg = RunConfig::load(&path, &overrides)?;
        cfg.agent = agent;
        cfg.out_dir = out.join(agent.as_str());
        let run = run_training(&cfg, 0)?;
        let report = &run.final_eval.as_ref().expect("final evaluation").report;
        let rates: Vec<String> = report.goal_rates.iter().map(|r| format!("{r:.2}")).collect();
        println!("{:<18} goal rates [{}]  ({})", agent.as_str(), rates.join(", "), run.run_dir.display());
    }
    Ok(())
}
