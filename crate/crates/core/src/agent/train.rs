use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::envs::{constants::MAZE_LAYOUT, make_env, Environment, GaussianMixture, MazeLayout};
use crate::error::{DqsError, Result};
use crate::eval::{self, EvalReport, MetricsRow, MetricsWriter};
use crate::ndmath::{DenseArray, ParamContainer, FORMAT_VERSION};
use crate::policy::ActionSampler;
use crate::rng::{seeded, substream, DqsRng, Stream};

use super::{AnyAgent, ReplayBuffer, TrainLosses, TrainRngs, Transition};

/// Ground-truth mixture draws compared against terminal positions.
pub const GROUND_TRUTH_SAMPLES: usize = 1000;
const GROUND_TRUTH_SEED: u64 = 1_000_003;
/// Coverage radius: two standard deviations of a unit-variance component.
pub const COVERAGE_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub transition: Transition,
    /// The action came from the uniform seeding phase.
    pub exploratory: bool,
    pub done: bool,
    pub goal: Option<usize>,
}

/// Takes one environment step: uniform actions before `seed_steps`, policy
/// samples afterwards.
#[allow(clippy::too_many_arguments)]
pub fn env_step(
    agent: &dyn ActionSampler,
    env: &mut dyn Environment,
    state: &[f64],
    step: u64,
    seed_steps: u64,
    env_rng: &mut DqsRng,
    policy_rng: &mut DqsRng,
) -> Result<StepRecord> {
    let exploratory = step < seed_steps;
    let action = if exploratory {
        env.uniform_action(env_rng)
    } else {
        agent.sample_actions(&DenseArray::row(state), policy_rng)?.into_vec()
    };
    let out = env.step(&action, env_rng)?;
    if !out.reward.is_finite() {
        return Err(DqsError::Numeric(format!("non-finite reward at step {step}")));
    }
    Ok(StepRecord {
        transition: Transition {
            state: state.to_vec(),
            action,
            reward: out.reward,
            next_state: out.state.clone(),
            terminal: out.terminal(),
        },
        exploratory,
        done: out.done,
        goal: env.goal_reached(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub episode: usize,
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub ax: f64,
    pub ay: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalOutcome {
    pub report: EvalReport,
    /// Position at the end of each episode.
    pub terminal_positions: Vec<[f64; 2]>,
    pub trajectories: Vec<TrajectoryRow>,
}

/// Runs `n_episodes` episodes of a frozen policy in lockstep, batching the
/// action sampling across live episodes. Nothing is written to any buffer.
pub fn evaluate(
    agent: &dyn ActionSampler,
    env_name: &str,
    n_episodes: usize,
    rng: &mut DqsRng,
) -> Result<EvalOutcome> {
    let mut out = EvalOutcome::default();
    out.report.episodes = n_episodes;
    if n_episodes == 0 {
        return Ok(out);
    }
    let mut envs = (0..n_episodes)
        .map(|_| make_env(env_name))
        .collect::<Result<Vec<_>>>()?;
    let n_goals = if env_name == "maze" {
        MazeLayout::parse(MAZE_LAYOUT)?.goals.len()
    } else {
        0
    };
    let mut states: Vec<Vec<f64>> = envs.iter_mut().map(|e| e.reset(rng)).collect();
    let mut alive: Vec<bool> = vec![true; n_episodes];
    let mut returns = vec![0.0; n_episodes];
    let mut goal_hits = vec![0usize; n_goals];
    let mut t = 0;
    while alive.iter().any(|a| *a) {
        let idx: Vec<usize> = (0..n_episodes).filter(|&i| alive[i]).collect();
        let sd = states[idx[0]].len();
        let batch = DenseArray::from_vec(
            &[idx.len(), sd],
            idx.iter().flat_map(|&i| states[i].iter().copied()).collect(),
        )?;
        let actions = agent.sample_actions(&batch, rng)?;
        for (row, &i) in idx.iter().enumerate() {
            let a = actions.row_slice(row);
            let o = envs[i].step(a, rng)?;
            returns[i] += o.reward;
            let p = envs[i].position();
            out.trajectories.push(TrajectoryRow {
                episode: i,
                t,
                x: p[0],
                y: p[1],
                ax: a[0],
                ay: a.get(1).copied().unwrap_or(0.0),
                reward: o.reward,
            });
            states[i] = o.state;
            if o.done {
                alive[i] = false;
                if let Some(g) = envs[i].goal_reached() {
                    goal_hits[g] += 1;
                }
            }
        }
        t += 1;
    }
    out.terminal_positions = envs.iter().map(|e| e.position()).collect();
    out.report.mean_return = Some(returns.iter().sum::<f64>() / n_episodes as f64);
    out.report.goal_rates = goal_hits.iter().map(|&h| h as f64 / n_episodes as f64).collect();
    if env_name == "gmm" {
        let mixture = GaussianMixture::standard();
        let truth = mixture.sample(GROUND_TRUTH_SAMPLES, &mut seeded(GROUND_TRUTH_SEED));
        let as_array = |pts: &[[f64; 2]]| {
            DenseArray::from_vec(&[pts.len(), 2], pts.iter().flat_map(|p| p.iter().copied()).collect())
        };
        if n_episodes >= 2 {
            out.report.mmd = Some(eval::mmd(&as_array(&out.terminal_positions)?, &as_array(&truth)?)?);
            out.report.mmd_kernel = "rbf, median-heuristic bandwidth".into();
        }
        out.report.mode_coverage = Some(eval::mode_coverage(
            &out.terminal_positions,
            &mixture.means,
            COVERAGE_RADIUS,
        )?);
    }
    Ok(out)
}

pub fn write_trajectories(rows: &[TrajectoryRow], path: &Path) -> Result<()> {
    let mut s = String::from("episode,t,x,y,ax,ay,reward\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.episode, r.t, r.x, r.y, r.ax, r.ay, r.reward);
    }
    eval::write_text(path, &s)
}

/// `log ∫ exp(min Q((x, y), a)) da` over the unit action box on a grid of
/// positions, as `(x, y, log Z)` rows.
pub fn state_log_partition_map(
    agent: &AnyAgent,
    half_extent: f64,
    n_states: usize,
    n_actions: usize,
) -> Result<Vec<[f64; 3]>> {
    let mut rows = Vec::with_capacity(n_states * n_states);
    let h = 2.0 * half_extent / n_states as f64;
    for i in 0..n_states {
        for j in 0..n_states {
            let x = -half_extent + (i as f64 + 0.5) * h;
            let y = -half_extent + (j as f64 + 0.5) * h;
            let lp = eval::log_partition_grid(agent.critic(), &[x, y], [[-1.0, 1.0], [-1.0, 1.0]], n_actions)?;
            rows.push([x, y, lp.log_z]);
        }
    }
    Ok(rows)
}

pub fn write_log_partition(rows: &[[f64; 3]], path: &Path) -> Result<()> {
    let mut s = String::from("x,y,logZ_cell\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r[0], r[1], r[2]);
    }
    eval::write_text(path, &s)
}

/// An agent with the configuration and position in training it was saved at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub agent: AnyAgent,
    pub config: RunConfig,
    pub env: String,
    pub step: u64,
    pub seed: u64,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut c = ParamContainer::new();
    ckpt.agent.save_into(&mut c);
    c.put_text("meta.config", &ckpt.config.to_text());
    c.put_text("meta.env", &ckpt.env);
    c.put_scalar("meta.step", ckpt.step as f64);
    c.put_scalar("meta.seed", ckpt.seed as f64);
    c.save(path)
}

/// File name of the parameter container inside a `ckpt_<step>` directory.
pub const CHECKPOINT_FILE: &str = "agent.dqsc";

/// Loads a checkpoint from its container file or its `ckpt_<step>` directory.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
    let path = file.as_path();
    let c = ParamContainer::load(path)?;
    let bad = |e: DqsError| DqsError::Checkpoint {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    Ok(Checkpoint {
        agent: AnyAgent::load_from(&c).map_err(bad)?,
        config: RunConfig::parse(c.text("meta.config").map_err(bad)?, &[]).map_err(bad)?,
        env: c.text("meta.env").map_err(bad)?.to_string(),
        step: c.scalar("meta.step").map_err(bad)? as u64,
        seed: c.scalar("meta.seed").map_err(bad)? as u64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub final_eval: Option<EvalOutcome>,
    pub agent: AnyAgent,
    /// Gradient updates performed.
    pub updates: u64,
    /// Update slots skipped because the buffer held less than a batch.
    pub skipped_updates: u64,
    /// Transitions pushed to the replay buffer.
    pub stored_transitions: u64,
    /// Temperature used at each env step.
    pub temperature_trace: Vec<f64>,
}

fn write_run_metadata(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<()> {
    let mut snapshot = cfg.clone();
    snapshot.seeds = vec![seed];
    eval::write_text(&dir.join("config.cfg"), &snapshot.to_text())?;
    let mut meta = String::new();
    let _ = writeln!(meta, "env = {}", cfg.env);
    let _ = writeln!(meta, "agent = {}", cfg.agent.as_str());
    let _ = writeln!(meta, "seed = {seed}");
    let _ = writeln!(meta, "checkpoint_format = {FORMAT_VERSION}");
    if cfg.env == "maze" {
        let _ = writeln!(meta, "maze_layout_crc32 = {:08x}", MazeLayout::parse(MAZE_LAYOUT)?.checksum);
    }
    eval::write_text(&dir.join("run_meta.txt"), &meta)
}

/// Trains one seed: alternates env steps and gradient updates, evaluates
/// periodically and at the end, and writes everything under
/// `<out>/run_<seed>/`.
pub fn run_training(cfg: &RunConfig, seed: u64) -> Result<RunArtifacts> {
    cfg.validate()?;
    let t = &cfg.train;
    let run_dir = cfg.out_dir.join(format!("run_{seed}"));
    std::fs::create_dir_all(&run_dir).map_err(|e| DqsError::io(&run_dir, e))?;
    write_run_metadata(cfg, seed, &run_dir)?;
    let metrics_path = run_dir.join("metrics.csv");
    let mut metrics = MetricsWriter::create(&metrics_path)?;

    let mut env = make_env(&cfg.env)?;
    let mut init_rng = substream(seed, Stream::Init);
    let mut agent = AnyAgent::build(cfg, env.state_dim(), env.action_bound(), &mut init_rng)?;
    let mut env_rng = substream(seed, Stream::Env);
    let mut act_rng = substream(seed, Stream::Act);
    let mut eval_rng = substream(seed, Stream::Eval);
    let mut rngs = TrainRngs::from_seed(seed);
    let mut buffer = ReplayBuffer::new(t.buffer_capacity)?;

    let mut art = RunArtifacts {
        run_dir: run_dir.clone(),
        metrics_path: metrics_path.clone(),
        checkpoints: Vec::new(),
        final_eval: None,
        agent: agent.clone(),
        updates: 0,
        skipped_updates: 0,
        stored_transitions: 0,
        temperature_trace: Vec::with_capacity(t.total_steps as usize),
    };
    let mut state = env.reset(&mut env_rng);
    let mut episode_return = 0.0;
    let mut last = TrainLosses {
        critic: f64::NAN,
        policy: f64::NAN,
    };
    for step in 0..t.total_steps {
        agent.set_step(step);
        art.temperature_trace.push(agent.temperature());
        let rec = env_step(&agent, env.as_mut(), &state, step, t.seed_steps, &mut env_rng, &mut act_rng)?;
        episode_return += rec.transition.reward;
        state = if rec.done {
            env.reset(&mut env_rng)
        } else {
            rec.transition.next_state.clone()
        };
        buffer.push(rec.transition);
        art.stored_transitions += 1;

        if step >= t.seed_steps {
            for _ in 0..t.updates_per_step {
                match agent.train_step(&buffer, &mut rngs)? {
                    Some(l) => {
                        last = l;
                        art.updates += 1;
                    }
                    None => art.skipped_updates += 1,
                }
            }
        }

        let done_steps = step + 1;
        let is_last = done_steps == t.total_steps;
        let eval_due = is_last || (t.eval_interval > 0 && done_steps % t.eval_interval == 0);
        if !rec.done && !eval_due {
            continue;
        }
        let opt = |v: f64| v.is_finite().then_some(v);
        let mut row = MetricsRow {
            step: done_steps,
            episode_return: rec.done.then_some(episode_return),
            critic_loss: opt(last.critic),
            policy_loss: opt(last.policy),
            temperature: Some(agent.temperature()),
            ..Default::default()
        };
        if rec.done {
            episode_return = 0.0;
        }
        if eval_due {
            let outcome = evaluate(&agent, &cfg.env, t.eval_episodes, &mut eval_rng)?;
            row.mmd = outcome.report.mmd;
            row.mode_coverage = outcome.report.mode_coverage;
            if is_last {
                art.final_eval = Some(outcome);
            }
        }
        metrics.append(&row)?;
        if eval_due {
            metrics.flush()?;
        }
        if !agent.is_finite() {
            return Err(DqsError::Numeric(format!("non-finite parameters after step {done_steps}")));
        }
        let ckpt_due = is_last || (t.checkpoint_interval > 0 && done_steps % t.checkpoint_interval == 0);
        if ckpt_due {
            let path = run_dir.join(format!("ckpt_{done_steps}")).join(CHECKPOINT_FILE);
            save_checkpoint(
                &Checkpoint {
                    agent: agent.clone(),
                    config: cfg.clone(),
                    env: cfg.env.clone(),
                    step: done_steps,
                    seed,
                },
                &path,
            )?;
            art.checkpoints.push(path);
        }
    }
    metrics.flush()?;

    if let Some(outcome) = art.final_eval.as_mut() {
        write_trajectories(&outcome.trajectories, &run_dir.join("trajectories.csv"))?;
        if cfg.env == "gmm" {
            let samples = run_dir.join("samples.csv");
            eval::write_points(&outcome.terminal_positions, &samples)?;
            outcome.report.samples_path = Some(samples);
            let truth = GaussianMixture::standard().sample(GROUND_TRUTH_SAMPLES, &mut seeded(GROUND_TRUTH_SEED));
            eval::write_points(&truth, &run_dir.join("ground_truth.csv"))?;
            let logz = state_log_partition_map(&agent, 45.0, 60, 8)?;
            write_log_partition(&logz, &run_dir.join("logz.csv"))?;
        }
        eval::write_text(&run_dir.join("eval_report.txt"), &outcome.report.to_text())?;
    }
    art.agent = agent;
    Ok(art)
}
