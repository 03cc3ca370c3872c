//! Run configuration and its `key = value` text format.
//!
//! ```text
//! # comment
//! [run]
//! env = gmm
//! seeds = 0,1,2
//! [dqs]
//! mc_samples = 200
//! ```
//!
//! Keys are unique across sections, so overrides may use either the bare
//! key or `section.key`.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::diffusion::{UpdateRule, DEFAULT_INTEGRATION_STEPS, DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN};
use crate::error::{DqsError, Result};
use crate::policy::TemperatureSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Dqs,
    GaussianBaseline,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Dqs => "dqs",
            Self::GaussianBaseline => "gaussian-baseline",
        }
    }
}

/// Training hyperparameters of the diffusion agent; the shared ones also
/// drive the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct DqsConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub target_smoothing: f64,
    pub target_update_period: usize,
    pub updates_per_step: usize,
    pub seed_steps: u64,
    pub buffer_capacity: usize,
    pub critic_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub mc_samples: usize,
    pub integration_steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub update_rule: UpdateRule,
    pub temperature: TemperatureSchedule,
    pub total_steps: u64,
    /// Evaluate every this many env steps; 0 evaluates only at the end.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Checkpoint every this many env steps; 0 checkpoints only at the end.
    pub checkpoint_interval: u64,
}

impl Default for DqsConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 3e-4,
            gamma: 0.99,
            target_smoothing: 0.005,
            target_update_period: 1,
            updates_per_step: 1,
            seed_steps: 10_000,
            buffer_capacity: 250_000,
            critic_hidden: vec![256, 256],
            policy_hidden: vec![256, 256],
            embed_dim: 256,
            mc_samples: 1000,
            integration_steps: DEFAULT_INTEGRATION_STEPS,
            sigma_min: DEFAULT_SIGMA_MIN,
            sigma_max: DEFAULT_SIGMA_MAX,
            update_rule: UpdateRule::EulerMaruyama,
            temperature: TemperatureSchedule::Fixed(0.05),
            total_steps: 250_000,
            eval_interval: 0,
            eval_episodes: 100,
            checkpoint_interval: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub policy_hidden: Vec<usize>,
    pub initial_alpha: f64,
    /// `None` means `−action_dim`.
    pub target_entropy: Option<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            policy_hidden: vec![256, 256],
            initial_alpha: 1.0,
            target_entropy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub agent: AgentKind,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub train: DqsConfig,
    pub baseline: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "gmm".into(),
            agent: AgentKind::Dqs,
            seeds: vec![0],
            out_dir: PathBuf::from("runs"),
            train: DqsConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

/// `(section, key)` for every accepted key.
const KEYS: &[(&str, &str)] = &[
    ("run", "env"),
    ("run", "agent"),
    ("run", "seeds"),
    ("run", "out"),
    ("run", "total_steps"),
    ("run", "eval_interval"),
    ("run", "eval_episodes"),
    ("run", "checkpoint_interval"),
    ("train", "batch_size"),
    ("train", "learning_rate"),
    ("train", "gamma"),
    ("train", "target_smoothing"),
    ("train", "target_update_period"),
    ("train", "updates_per_step"),
    ("train", "seed_steps"),
    ("train", "buffer_capacity"),
    ("train", "critic_hidden"),
    ("dqs", "policy_hidden"),
    ("dqs", "embed_dim"),
    ("dqs", "mc_samples"),
    ("dqs", "integration_steps"),
    ("dqs", "sigma_min"),
    ("dqs", "sigma_max"),
    ("dqs", "update_rule"),
    ("dqs", "temperature_mode"),
    ("dqs", "temperature_start"),
    ("dqs", "temperature_end"),
    ("dqs", "temperature_horizon"),
    ("baseline", "baseline_hidden"),
    ("baseline", "initial_alpha"),
    ("baseline", "target_entropy"),
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{key}`: cannot parse `{v}`: {e}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Intermediate temperature fields, assembled after all keys are read.
#[derive(Debug, Clone)]
struct TemperatureFields {
    mode: String,
    start: f64,
    end: f64,
    horizon: u64,
}

impl TemperatureFields {
    fn from_schedule(s: &TemperatureSchedule) -> Self {
        match *s {
            TemperatureSchedule::Fixed(t) => Self {
                mode: "fixed".into(),
                start: t,
                end: t,
                horizon: 1,
            },
            TemperatureSchedule::ExponentialDecay { start, end, horizon } => Self {
                mode: "exponential".into(),
                start,
                end,
                horizon,
            },
        }
    }

    fn build(&self) -> std::result::Result<TemperatureSchedule, String> {
        match self.mode.as_str() {
            "fixed" => Ok(TemperatureSchedule::Fixed(self.start)),
            "exponential" => Ok(TemperatureSchedule::ExponentialDecay {
                start: self.start,
                end: self.end,
                horizon: self.horizon,
            }),
            other => Err(format!("`temperature_mode` must be fixed or exponential, got `{other}`")),
        }
    }
}

impl RunConfig {
    fn resolve_key(key: &str, section: Option<&str>) -> std::result::Result<&'static str, String> {
        let (sec, bare) = match key.split_once('.') {
            Some((s, k)) => (Some(s), k),
            None => (section, key),
        };
        match KEYS.iter().find(|(_, k)| *k == bare) {
            Some((s, k)) => match sec {
                Some(given) if given != *s => Err(format!("key `{bare}` belongs in section [{s}], not [{given}]")),
                _ => Ok(k),
            },
            None => Err(format!("unknown key `{key}`")),
        }
    }

    fn set(&mut self, temp: &mut TemperatureFields, key: &'static str, v: &str) -> std::result::Result<(), String> {
        let t = &mut self.train;
        match key {
            "env" => self.env = v.to_string(),
            "agent" => {
                self.agent = match v {
                    "dqs" => AgentKind::Dqs,
                    "gaussian-baseline" | "baseline" | "sac" => AgentKind::GaussianBaseline,
                    other => return Err(format!("`agent` must be dqs or gaussian-baseline, got `{other}`")),
                }
            }
            "seeds" => self.seeds = parse_list(key, v)?,
            "out" => self.out_dir = PathBuf::from(v),
            "total_steps" => t.total_steps = parse_num(key, v)?,
            "eval_interval" => t.eval_interval = parse_num(key, v)?,
            "eval_episodes" => t.eval_episodes = parse_num(key, v)?,
            "checkpoint_interval" => t.checkpoint_interval = parse_num(key, v)?,
            "batch_size" => t.batch_size = parse_num(key, v)?,
            "learning_rate" => t.learning_rate = parse_num(key, v)?,
            "gamma" => t.gamma = parse_num(key, v)?,
            "target_smoothing" => t.target_smoothing = parse_num(key, v)?,
            "target_update_period" => t.target_update_period = parse_num(key, v)?,
            "updates_per_step" => t.updates_per_step = parse_num(key, v)?,
            "seed_steps" => t.seed_steps = parse_num(key, v)?,
            "buffer_capacity" => t.buffer_capacity = parse_num(key, v)?,
            "critic_hidden" => t.critic_hidden = parse_list(key, v)?,
            "policy_hidden" => t.policy_hidden = parse_list(key, v)?,
            "embed_dim" => t.embed_dim = parse_num(key, v)?,
            "mc_samples" => t.mc_samples = parse_num(key, v)?,
            "integration_steps" => t.integration_steps = parse_num(key, v)?,
            "sigma_min" => t.sigma_min = parse_num(key, v)?,
            "sigma_max" => t.sigma_max = parse_num(key, v)?,
            "update_rule" => {
                t.update_rule = match v {
                    "euler-maruyama" => UpdateRule::EulerMaruyama,
                    "literal" => UpdateRule::Literal,
                    other => return Err(format!("`update_rule` must be euler-maruyama or literal, got `{other}`")),
                }
            }
            "temperature_mode" => temp.mode = v.to_string(),
            "temperature_start" => temp.start = parse_num(key, v)?,
            "temperature_end" => temp.end = parse_num(key, v)?,
            "temperature_horizon" => temp.horizon = parse_num(key, v)?,
            "baseline_hidden" => self.baseline.policy_hidden = parse_list(key, v)?,
            "initial_alpha" => self.baseline.initial_alpha = parse_num(key, v)?,
            "target_entropy" => {
                self.baseline.target_entropy = if v == "auto" { None } else { Some(parse_num(key, v)?) }
            }
            _ => unreachable!("key table and setter disagree on `{key}`"),
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults, then applies `overrides`
    /// (`key=value` or `section.key=value`).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        let mut temp = TemperatureFields::from_schedule(&cfg.train.temperature);
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let err = |m: String| DqsError::Config(format!("line {}: {m}", i + 1));
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = Self::resolve_key(k.trim(), section.as_deref()).map_err(err)?;
            cfg.set(&mut temp, key, v.trim()).map_err(err)?;
        }
        for o in overrides {
            let err = |m: String| DqsError::Config(format!("override `{o}`: {m}"));
            let (k, v) = o.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let key = Self::resolve_key(k.trim(), None).map_err(err)?;
            cfg.set(&mut temp, key, v.trim()).map_err(err)?;
        }
        cfg.train.temperature = temp.build().map_err(DqsError::Config)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DqsError::io(path, e))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            DqsError::Config(m) => DqsError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        let fail = |m: &str| Err(DqsError::Config(m.to_string()));
        if !matches!(self.env.as_str(), "gmm" | "maze") {
            return fail(&format!("`env` must be gmm or maze, got `{}`", self.env));
        }
        if self.seeds.is_empty() {
            return fail("`seeds` must list at least one seed");
        }
        if t.batch_size == 0 || t.buffer_capacity < t.batch_size {
            return fail("`batch_size` must be positive and at most `buffer_capacity`");
        }
        if !(t.learning_rate >= 0.0) {
            return fail("`learning_rate` must be non-negative");
        }
        if !(0.0..=1.0).contains(&t.gamma) {
            return fail("`gamma` must lie in [0, 1]");
        }
        if !(t.target_smoothing > 0.0 && t.target_smoothing <= 1.0) {
            return fail("`target_smoothing` must lie in (0, 1]");
        }
        if t.target_update_period == 0 || t.updates_per_step == 0 {
            return fail("`target_update_period` and `updates_per_step` must be positive");
        }
        if t.seed_steps > t.total_steps {
            return fail("`seed_steps` must not exceed `total_steps`");
        }
        if t.critic_hidden.is_empty() || t.policy_hidden.is_empty() || self.baseline.policy_hidden.is_empty() {
            return fail("hidden layer lists must not be empty");
        }
        if [&t.critic_hidden, &t.policy_hidden, &self.baseline.policy_hidden]
            .iter()
            .any(|h| h.contains(&0))
        {
            return fail("hidden widths must be positive");
        }
        if t.embed_dim == 0 || t.embed_dim % 2 != 0 {
            return fail("`embed_dim` must be even and positive");
        }
        if t.mc_samples == 0 || t.integration_steps == 0 {
            return fail("`mc_samples` and `integration_steps` must be positive");
        }
        if !(t.sigma_min > 0.0 && t.sigma_max > t.sigma_min) {
            return fail("need 0 < sigma_min < sigma_max");
        }
        if !(self.baseline.initial_alpha > 0.0) {
            return fail("`initial_alpha` must be positive");
        }
        t.temperature.validate()
    }

    /// Canonical text form; parsing it yields an identical config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let temp = TemperatureFields::from_schedule(&t.temperature);
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "env = {}", self.env);
        let _ = writeln!(s, "agent = {}", self.agent.as_str());
        let _ = writeln!(s, "seeds = {}", join(&self.seeds));
        let _ = writeln!(s, "out = {}", self.out_dir.display());
        let _ = writeln!(s, "total_steps = {}", t.total_steps);
        let _ = writeln!(s, "eval_interval = {}", t.eval_interval);
        let _ = writeln!(s, "eval_episodes = {}", t.eval_episodes);
        let _ = writeln!(s, "checkpoint_interval = {}", t.checkpoint_interval);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "learning_rate = {}", t.learning_rate);
        let _ = writeln!(s, "gamma = {}", t.gamma);
        let _ = writeln!(s, "target_smoothing = {}", t.target_smoothing);
        let _ = writeln!(s, "target_update_period = {}", t.target_update_period);
        let _ = writeln!(s, "updates_per_step = {}", t.updates_per_step);
        let _ = writeln!(s, "seed_steps = {}", t.seed_steps);
        let _ = writeln!(s, "buffer_capacity = {}", t.buffer_capacity);
        let _ = writeln!(s, "critic_hidden = {}", join(&t.critic_hidden));
        let _ = writeln!(s, "\n[dqs]");
        let _ = writeln!(s, "policy_hidden = {}", join(&t.policy_hidden));
        let _ = writeln!(s, "embed_dim = {}", t.embed_dim);
        let _ = writeln!(s, "mc_samples = {}", t.mc_samples);
        let _ = writeln!(s, "integration_steps = {}", t.integration_steps);
        let _ = writeln!(s, "sigma_min = {}", t.sigma_min);
        let _ = writeln!(s, "sigma_max = {}", t.sigma_max);
        let rule = match t.update_rule {
            UpdateRule::EulerMaruyama => "euler-maruyama",
            UpdateRule::Literal => "literal",
        };
        let _ = writeln!(s, "update_rule = {rule}");
        let _ = writeln!(s, "temperature_mode = {}", temp.mode);
        let _ = writeln!(s, "temperature_start = {}", temp.start);
        let _ = writeln!(s, "temperature_end = {}", temp.end);
        let _ = writeln!(s, "temperature_horizon = {}", temp.horizon);
        let _ = writeln!(s, "\n[baseline]");
        let _ = writeln!(s, "baseline_hidden = {}", join(&self.baseline.policy_hidden));
        let _ = writeln!(s, "initial_alpha = {}", self.baseline.initial_alpha);
        let te = self.baseline.target_entropy.map_or_else(|| "auto".to_string(), |v| v.to_string());
        let _ = writeln!(s, "target_entropy = {te}");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.train.batch_size, 256);
        assert_eq!(c.train.buffer_capacity, 250_000);
        assert_eq!(c.train.seed_steps, 10_000);
        assert_eq!(c.train.mc_samples, 1000);
        assert_eq!(c.train.target_smoothing, 0.005);
        c.validate().unwrap();
    }

    #[test]
    fn sections_overrides_and_round_trip() {
        let text = "[run]\nenv = maze # trailing comment\nseeds = 1, 2\n[dqs]\nmc_samples = 200\ntemperature_mode = exponential\ntemperature_start = 10\ntemperature_end = 1\ntemperature_horizon = 1000\n";
        let c = RunConfig::parse(text, &["total_steps=2000".into(), "seed_steps=100".into(), "train.batch_size=32".into()]).unwrap();
        assert_eq!(c.env, "maze");
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.train.total_steps, 2000);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(
            c.train.temperature,
            TemperatureSchedule::ExponentialDecay { start: 10.0, end: 1.0, horizon: 1000 }
        );
        assert_eq!(RunConfig::parse(&c.to_text(), &[]).unwrap(), c);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let e = RunConfig::parse("[train]\n\nlearningrate = 0.1\n", &[]).unwrap_err().to_string();
        assert!(e.contains("learningrate") && e.contains("line 3"), "{e}");
        let e = RunConfig::parse("", &["nope=1".into()]).unwrap_err().to_string();
        assert!(e.contains("nope"), "{e}");
        let e = RunConfig::parse("[dqs]\nbatch_size = 3\n", &[]).unwrap_err().to_string();
        assert!(e.contains("[train]"), "{e}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::parse("gamma = 1.5", &[]).is_err());
        assert!(RunConfig::parse("seed_steps = 10\ntotal_steps = 5", &[]).is_err());
        assert!(RunConfig::parse("batch_size = x", &[]).is_err());
    }
}
