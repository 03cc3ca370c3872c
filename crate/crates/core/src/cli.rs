//! Command implementations behind the `dqs` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agent::{self, load_checkpoint, RunArtifacts};
use crate::config::RunConfig;
use crate::error::{DqsError, Result};
use crate::eval::{self, EvalReport};
use crate::ndmath::DenseArray;
use crate::plot::{self, PlotSummary};
use crate::policy::ActionSampler;
use crate::rng::{substream, Stream};

/// Loads a config, applies overrides, and trains every seed in turn.
/// `seed` and `out` replace the configured seed list and output directory.
pub fn cmd_train(
    config_path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<Vec<RunArtifacts>> {
    let mut cfg = RunConfig::load(config_path, overrides)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = out {
        cfg.out_dir = o.to_path_buf();
    }
    cfg.validate()?;
    cfg.seeds.clone().into_iter().map(|s| agent::run_training(&cfg, s)).collect()
}

/// Runs frozen-policy episodes from a checkpoint and writes the report and
/// trajectory dump to `out_dir`.
pub fn cmd_eval(checkpoint: &Path, n_episodes: usize, seed: u64, out_dir: &Path) -> Result<EvalReport> {
    let mut ckpt = load_checkpoint(checkpoint)?;
    ckpt.agent.set_step(ckpt.step);
    let mut rng = substream(seed, Stream::Eval);
    let mut outcome = agent::evaluate(&ckpt.agent, &ckpt.env, n_episodes, &mut rng)?;
    std::fs::create_dir_all(out_dir).map_err(|e| DqsError::io(out_dir, e))?;
    agent::write_trajectories(&outcome.trajectories, &out_dir.join("trajectories.csv"))?;
    if ckpt.env == "gmm" && n_episodes > 0 {
        let p = out_dir.join("samples.csv");
        eval::write_points(&outcome.terminal_positions, &p)?;
        outcome.report.samples_path = Some(p);
    }
    eval::write_text(&out_dir.join("eval_report.txt"), &outcome.report.to_text())?;
    Ok(outcome.report)
}

pub fn cmd_plot(run_dir: &Path) -> Result<PlotSummary> {
    plot::plot_run(run_dir)
}

/// Draws `n` actions at `state` from a checkpointed policy.
pub fn cmd_sample(checkpoint: &Path, state: &[f64], n: usize, seed: u64) -> Result<DenseArray> {
    let mut ckpt = load_checkpoint(checkpoint)?;
    ckpt.agent.set_step(ckpt.step);
    let expected = ckpt.agent.critic().state_dim();
    if state.len() != expected {
        return Err(DqsError::Dimension {
            expected: format!("state of length {expected}"),
            actual: format!("{}", state.len()),
        });
    }
    let states = DenseArray::from_vec(&[n, state.len()], state.repeat(n))?;
    ckpt.agent.sample_actions(&states, &mut substream(seed, Stream::Act))
}

/// Actions as CSV with `a0,a1,...` columns.
pub fn actions_csv(actions: &DenseArray) -> String {
    let cols = actions.shape().get(1).copied().unwrap_or(0);
    let header: Vec<String> = (0..cols).map(|j| format!("a{j}")).collect();
    let mut s = header.join(",") + "\n";
    for i in 0..actions.shape()[0] {
        let row: Vec<String> = actions.row_slice(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Parses `"0.5,-1"` into a state vector.
pub fn parse_state(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| DqsError::Config(format!("bad state component {f:?}: {e}")))
        })
        .collect()
}

/// Default eval output directory: inside the `ckpt_<step>` directory.
pub fn default_eval_dir(checkpoint: &Path, seed: u64) -> PathBuf {
    let dir = if checkpoint.is_dir() {
        checkpoint
    } else {
        checkpoint.parent().unwrap_or(Path::new("."))
    };
    dir.join(format!("eval_seed{seed}"))
}
