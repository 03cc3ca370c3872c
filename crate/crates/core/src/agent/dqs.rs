use rand::Rng;

use crate::config::DqsConfig;
use crate::critic::{stack_rows, QEnsemble};
use crate::diffusion::{NoiseSchedule, ReverseSampler};
use crate::error::Result;
use crate::ndmath::{DenseArray, ParamContainer};
use crate::policy::{ActionSampler, DiffusionPolicy, TemperatureSchedule};
use crate::rng::DqsRng;

use super::{ReplayBuffer, TrainLosses, TrainRngs};

/// Diffusion-policy agent: twin critics plus a score network sampled by
/// reverse diffusion from `exp(Q / T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DqsAgent {
    pub critic: QEnsemble,
    pub policy: DiffusionPolicy,
    pub schedule: TemperatureSchedule,
    pub batch_size: usize,
    pub target_update_period: usize,
    /// When set, every update stage appends its name here.
    pub call_log: Option<Vec<&'static str>>,
    updates: u64,
}

impl DqsAgent {
    pub fn new<R: Rng + ?Sized>(
        cfg: &DqsConfig,
        state_dim: usize,
        action_bound: Vec<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.temperature.validate()?;
        let critic = QEnsemble::new(
            state_dim,
            action_bound.len(),
            &cfg.critic_hidden,
            cfg.learning_rate,
            cfg.gamma,
            cfg.target_smoothing,
            rng,
        )?;
        let mut sampler = ReverseSampler::new(
            NoiseSchedule::new(cfg.sigma_min, cfg.sigma_max)?,
            cfg.integration_steps,
        );
        sampler.rule = cfg.update_rule;
        let mut policy = DiffusionPolicy::new(
            state_dim,
            action_bound,
            &cfg.policy_hidden,
            cfg.embed_dim,
            sampler,
            cfg.temperature.at(0),
            cfg.learning_rate,
            rng,
        )?;
        policy.mc_samples = cfg.mc_samples;
        Ok(Self {
            critic,
            policy,
            schedule: cfg.temperature,
            batch_size: cfg.batch_size,
            target_update_period: cfg.target_update_period,
            call_log: None,
            updates: 0,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.policy.temperature
    }

    /// Moves the temperature to the schedule value at env step `step`.
    pub fn set_step(&mut self, step: u64) {
        self.policy.temperature = self.schedule.at(step);
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.critic.set_learning_rate(lr);
        self.policy.adam.learning_rate = lr;
    }

    fn log(&mut self, stage: &'static str) {
        if let Some(l) = self.call_log.as_mut() {
            l.push(stage);
        }
    }

    /// Critic update, policy update, then target smoothing on one minibatch.
    /// Returns `None` while the buffer holds fewer than a batch.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rngs: &mut TrainRngs) -> Result<Option<TrainLosses>> {
        if buffer.len() < self.batch_size {
            return Ok(None);
        }
        let batch = buffer.sample(self.batch_size, &mut rngs.buffer)?;
        let critic_loss = self.critic.critic_update(&batch, &self.policy, &mut rngs.critic)?;
        self.log("critic");
        let states = stack_rows(batch.iter().map(|t| t.state.as_slice()), self.critic.state_dim())?;
        let actions = stack_rows(batch.iter().map(|t| t.action.as_slice()), self.critic.action_dim())?;
        let policy_loss = self.policy.policy_update(&self.critic, &states, &actions, &mut rngs.policy)?;
        self.log("policy");
        self.updates += 1;
        if self.updates % self.target_update_period as u64 == 0 {
            self.critic.ema_update()?;
            self.log("targets");
        }
        Ok(Some(TrainLosses {
            critic: critic_loss,
            policy: policy_loss,
        }))
    }

    pub fn save_into(&self, c: &mut ParamContainer) {
        self.critic.save_into(c, "critic.");
        self.policy.save_into(c, "policy.");
        let (mode, start, end, horizon) = match self.schedule {
            TemperatureSchedule::Fixed(t) => (0.0, t, t, 1),
            TemperatureSchedule::ExponentialDecay { start, end, horizon } => (1.0, start, end, horizon),
        };
        c.put_scalar("dqs.schedule.mode", mode);
        c.put_scalar("dqs.schedule.start", start);
        c.put_scalar("dqs.schedule.end", end);
        c.put_scalar("dqs.schedule.horizon", horizon as f64);
        c.put_scalar("dqs.batch_size", self.batch_size as f64);
        c.put_scalar("dqs.updates", self.updates as f64);
        c.put_scalar("dqs.target_update_period", self.target_update_period as f64);
    }

    pub fn load_from(c: &ParamContainer) -> Result<Self> {
        let start = c.scalar("dqs.schedule.start")?;
        let schedule = if c.scalar("dqs.schedule.mode")? == 0.0 {
            TemperatureSchedule::Fixed(start)
        } else {
            TemperatureSchedule::ExponentialDecay {
                start,
                end: c.scalar("dqs.schedule.end")?,
                horizon: c.scalar("dqs.schedule.horizon")? as u64,
            }
        };
        Ok(Self {
            critic: QEnsemble::load_from(c, "critic.")?,
            policy: DiffusionPolicy::load_from(c, "policy.")?,
            schedule,
            batch_size: c.scalar("dqs.batch_size")? as usize,
            target_update_period: c.scalar("dqs.target_update_period")? as usize,
            call_log: None,
            updates: c.scalar("dqs.updates")? as u64,
        })
    }
}

impl ActionSampler for DqsAgent {
    fn sample_actions(&self, states: &DenseArray, rng: &mut DqsRng) -> Result<DenseArray> {
        self.policy.sample_actions(states, rng)
    }
}
