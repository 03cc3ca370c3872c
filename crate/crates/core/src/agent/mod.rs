//! Training loops: the diffusion-policy agent and a Gaussian soft actor-critic baseline.

mod baseline;
mod buffer;
mod dqs;
mod train;

pub use baseline::{tanh_log_det, BaselineLosses, GaussianBaselineAgent, LOG_STD_MAX, LOG_STD_MIN};
pub use buffer::{ReplayBuffer, Transition, DEFAULT_BUFFER_CAPACITY};
pub use dqs::DqsAgent;
pub use train::{
    env_step, evaluate, load_checkpoint, CHECKPOINT_FILE, run_training, save_checkpoint, Checkpoint, EvalOutcome,
    state_log_partition_map, write_log_partition, write_trajectories, RunArtifacts, StepRecord,
    TrajectoryRow, COVERAGE_RADIUS, GROUND_TRUTH_SAMPLES,
};

use crate::config::{AgentKind, RunConfig};
use crate::critic::QEnsemble;
use crate::error::Result;
use crate::ndmath::{DenseArray, ParamContainer};
use crate::policy::ActionSampler;
use crate::rng::{substream, DqsRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLosses {
    pub critic: f64,
    pub policy: f64,
}

/// Generators consumed by gradient updates.
#[derive(Debug, Clone)]
pub struct TrainRngs {
    pub buffer: DqsRng,
    pub critic: DqsRng,
    pub policy: DqsRng,
}

impl TrainRngs {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            buffer: substream(seed, Stream::Buffer),
            critic: substream(seed, Stream::Critic),
            policy: substream(seed, Stream::Policy),
        }
    }
}

/// Either agent behind one interface for the training loop.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyAgent {
    Dqs(DqsAgent),
    Baseline(GaussianBaselineAgent),
}

impl AnyAgent {
    pub fn build(cfg: &RunConfig, state_dim: usize, action_bound: Vec<f64>, rng: &mut DqsRng) -> Result<Self> {
        let t = &cfg.train;
        Ok(match cfg.agent {
            AgentKind::Dqs => {
                let mut a = DqsAgent::new(t, state_dim, action_bound, rng)?;
                a.target_update_period = t.target_update_period;
                Self::Dqs(a)
            }
            AgentKind::GaussianBaseline => {
                let critic = QEnsemble::new(
                    state_dim,
                    action_bound.len(),
                    &t.critic_hidden,
                    t.learning_rate,
                    t.gamma,
                    t.target_smoothing,
                    rng,
                )?;
                let mut a = GaussianBaselineAgent::new(
                    state_dim,
                    action_bound,
                    &cfg.baseline.policy_hidden,
                    critic,
                    t.learning_rate,
                    cfg.baseline.initial_alpha,
                    cfg.baseline.target_entropy,
                    t.batch_size,
                    rng,
                )?;
                a.target_update_period = t.target_update_period;
                Self::Baseline(a)
            }
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Self::Dqs(_) => AgentKind::Dqs,
            Self::Baseline(_) => AgentKind::GaussianBaseline,
        }
    }

    pub fn critic(&self) -> &QEnsemble {
        match self {
            Self::Dqs(a) => &a.critic,
            Self::Baseline(a) => &a.critic,
        }
    }

    /// Current Boltzmann temperature, or the entropy coefficient for the baseline.
    pub fn temperature(&self) -> f64 {
        match self {
            Self::Dqs(a) => a.temperature(),
            Self::Baseline(a) => a.alpha(),
        }
    }

    pub fn set_step(&mut self, step: u64) {
        if let Self::Dqs(a) = self {
            a.set_step(step);
        }
    }

    pub fn train_step(&mut self, buffer: &ReplayBuffer, rngs: &mut TrainRngs) -> Result<Option<TrainLosses>> {
        match self {
            Self::Dqs(a) => a.train_step(buffer, rngs),
            Self::Baseline(a) => Ok(a.train_step(buffer, rngs)?.map(Into::into)),
        }
    }

    pub fn save_into(&self, c: &mut ParamContainer) {
        c.put_text("meta.agent", self.kind().as_str());
        match self {
            Self::Dqs(a) => a.save_into(c),
            Self::Baseline(a) => a.save_into(c),
        }
    }

    pub fn load_from(c: &ParamContainer) -> Result<Self> {
        match c.text("meta.agent")? {
            "dqs" => Ok(Self::Dqs(DqsAgent::load_from(c)?)),
            _ => Ok(Self::Baseline(GaussianBaselineAgent::load_from(c)?)),
        }
    }

    pub fn is_finite(&self) -> bool {
        let c = self.critic();
        let critic_ok = [&c.q1, &c.q2, &c.q1_target, &c.q2_target].iter().all(|n| n.is_finite());
        critic_ok
            && match self {
                Self::Dqs(a) => a.policy.score_net.is_finite() && a.temperature().is_finite(),
                Self::Baseline(a) => a.policy.is_finite() && a.log_alpha.is_finite(),
            }
    }
}

impl ActionSampler for AnyAgent {
    fn sample_actions(&self, states: &DenseArray, rng: &mut DqsRng) -> Result<DenseArray> {
        match self {
            Self::Dqs(a) => a.sample_actions(states, rng),
            Self::Baseline(a) => a.sample_actions(states, rng),
        }
    }
}
