use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::critic::{load_adam, save_adam, stack_rows, QEnsemble};
use crate::error::{DqsError, Result};
use crate::ndmath::{adam_step, adam_step_network, AdamState, DenseArray, MlpGrads, MlpNetwork, ParamContainer};
use crate::policy::ActionSampler;
use crate::rng::DqsRng;

use super::{ReplayBuffer, TrainLosses, TrainRngs};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `log(1 − tanh²(u))`, stable for large `|u|`.
pub fn tanh_log_det(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Reparameterized draws with everything the policy gradient needs.
struct GaussianDraw {
    actions: DenseArray,
    log_probs: Vec<f64>,
    pre_squash: Vec<f64>,
    noise: Vec<f64>,
    log_std: Vec<f64>,
    clamped: Vec<bool>,
}

/// Soft actor-critic with a tanh-squashed diagonal Gaussian policy and
/// automatic entropy tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBaselineAgent {
    /// `state → [mean | log-std]`.
    pub policy: MlpNetwork,
    pub policy_adam: AdamState,
    pub critic: QEnsemble,
    pub log_alpha: f64,
    pub alpha_adam: AdamState,
    pub target_entropy: f64,
    pub action_bound: Vec<f64>,
    pub batch_size: usize,
    pub target_update_period: usize,
    updates: u64,
}

impl GaussianBaselineAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_bound: Vec<f64>,
        policy_hidden: &[usize],
        critic: QEnsemble,
        learning_rate: f64,
        initial_alpha: f64,
        target_entropy: Option<f64>,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let ad = action_bound.len();
        if critic.state_dim() != state_dim || critic.action_dim() != ad {
            return Err(DqsError::dim(
                format!("critic for {state_dim} + {ad}"),
                format!("{} + {}", critic.state_dim(), critic.action_dim()),
            ));
        }
        if !(initial_alpha > 0.0) {
            return Err(DqsError::Config(format!("initial alpha must be positive, got {initial_alpha}")));
        }
        let mut dims = vec![state_dim];
        dims.extend_from_slice(policy_hidden);
        dims.push(2 * ad);
        let policy = MlpNetwork::new(&dims, false, rng)?;
        Ok(Self {
            policy_adam: AdamState::for_network(&policy, learning_rate),
            policy,
            critic,
            log_alpha: initial_alpha.ln(),
            alpha_adam: AdamState::new(&[&[1]], learning_rate),
            target_entropy: target_entropy.unwrap_or(-(ad as f64)),
            action_bound,
            batch_size,
            target_update_period: 1,
            updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn action_dim(&self) -> usize {
        self.action_bound.len()
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.policy_adam.learning_rate = lr;
        self.alpha_adam.learning_rate = lr;
        self.critic.set_learning_rate(lr);
    }

    fn draw(&self, states: &DenseArray, rng: &mut DqsRng) -> Result<GaussianDraw> {
        let out = self.policy.forward(states)?;
        let ad = self.action_dim();
        let n = states.rows();
        let mut d = GaussianDraw {
            actions: DenseArray::zeros(&[n.max(1), ad]),
            log_probs: vec![0.0; n],
            pre_squash: vec![0.0; n * ad],
            noise: vec![0.0; n * ad],
            log_std: vec![0.0; n * ad],
            clamped: vec![false; n * ad],
        };
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        for r in 0..n {
            let row = out.row_slice(r);
            let mut lp = 0.0;
            for j in 0..ad {
                let raw = row[ad + j];
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let eps: f64 = rng.sample(StandardNormal);
                let u = row[j] + ls.exp() * eps;
                let i = r * ad + j;
                d.pre_squash[i] = u;
                d.noise[i] = eps;
                d.log_std[i] = ls;
                d.clamped[i] = raw != ls;
                d.actions.data_mut()[i] = u.tanh() * self.action_bound[j];
                lp += -0.5 * eps * eps - ls - half_log_2pi - self.action_bound[j].ln() - tanh_log_det(u);
            }
            d.log_probs[r] = lp;
        }
        Ok(d)
    }

    /// Actions with their log-densities under the squashed policy.
    pub fn sample_with_log_prob(&self, states: &DenseArray, rng: &mut DqsRng) -> Result<(DenseArray, Vec<f64>)> {
        let d = self.draw(states, rng)?;
        Ok((d.actions, d.log_probs))
    }

    /// `mean(α log π(a|s) − min Q(s, a))` over reparameterized draws, its
    /// gradient with respect to the policy parameters, and the mean log-density.
    pub fn actor_objective(&self, states: &DenseArray, rng: &mut DqsRng) -> Result<(f64, MlpGrads, f64)> {
        let n = states.rows();
        let ad = self.action_dim();
        let alpha = self.alpha();
        let trace = self.policy.forward_trace(states)?;
        let d = self.draw(states, rng)?;
        let (q, dq) = self.critic.min_q_batch_with_action_grad(states, &d.actions)?;
        let mut cot = vec![0.0; n * 2 * ad];
        let mut loss = 0.0;
        for r in 0..n {
            loss += alpha * d.log_probs[r] - q[r];
            for j in 0..ad {
                let i = r * ad + j;
                let th = d.pre_squash[i].tanh();
                let dl_du = alpha * 2.0 * th - dq.data()[i] * self.action_bound[j] * (1.0 - th * th);
                cot[r * 2 * ad + j] = dl_du / n as f64;
                if !d.clamped[i] {
                    let dl_dls = -alpha + dl_du * d.log_std[i].exp() * d.noise[i];
                    cot[r * 2 * ad + ad + j] = dl_dls / n as f64;
                }
            }
        }
        let (g, _) = self
            .policy
            .backward(&trace, &DenseArray::from_vec(&[n, 2 * ad], cot)?, true, false)?;
        let mean_lp = d.log_probs.iter().sum::<f64>() / n as f64;
        Ok((loss / n as f64, g.expect("parameter gradients requested"), mean_lp))
    }

    /// Soft critic update, reparameterized policy update, entropy
    /// coefficient update, then target smoothing.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rngs: &mut TrainRngs) -> Result<Option<BaselineLosses>> {
        if buffer.len() < self.batch_size {
            return Ok(None);
        }
        let batch = buffer.sample(self.batch_size, &mut rngs.buffer)?;
        let sd = self.critic.state_dim();
        let alpha = self.alpha();

        let next_states = stack_rows(batch.iter().map(|t| t.next_state.as_slice()), sd)?;
        let (next_actions, next_lp) = self.sample_with_log_prob(&next_states, &mut rngs.critic)?;
        let penalty: Vec<f64> = next_lp.iter().map(|lp| alpha * lp).collect();
        let targets = self.critic.td_targets(&batch, &next_actions, Some(&penalty))?;
        let critic_loss = self.critic.regress(&batch, &targets)?;

        let states = stack_rows(batch.iter().map(|t| t.state.as_slice()), sd)?;
        let (policy_loss, grads, mean_lp) = self.actor_objective(&states, &mut rngs.policy)?;
        adam_step_network(&mut self.policy, &grads, &mut self.policy_adam)?;

        let alpha_grad = -(mean_lp + self.target_entropy);
        let mut la = DenseArray::vector(&[self.log_alpha]);
        adam_step(&mut [&mut la], &[DenseArray::vector(&[alpha_grad])], &mut self.alpha_adam)?;
        self.log_alpha = la.data()[0];

        self.updates += 1;
        if self.updates % self.target_update_period as u64 == 0 {
            self.critic.ema_update()?;
        }
        Ok(Some(BaselineLosses {
            critic: critic_loss,
            policy: policy_loss,
            alpha_loss: -self.log_alpha * (mean_lp + self.target_entropy),
            entropy: -mean_lp,
        }))
    }

    pub fn save_into(&self, c: &mut ParamContainer) {
        self.critic.save_into(c, "critic.");
        c.put_network("baseline.policy", &self.policy);
        save_adam(c, "baseline.policy_adam", &self.policy_adam);
        c.put_scalar("baseline.log_alpha", self.log_alpha);
        c.put_scalar("baseline.alpha_adam.step", self.alpha_adam.step_count as f64);
        c.put_array("baseline.alpha_adam.m", &self.alpha_adam.first_moment[0]);
        c.put_array("baseline.alpha_adam.v", &self.alpha_adam.second_moment[0]);
        c.put_scalar("baseline.target_entropy", self.target_entropy);
        c.put_array("baseline.action_bound", &DenseArray::vector(&self.action_bound));
        c.put_scalar("baseline.batch_size", self.batch_size as f64);
        c.put_scalar("baseline.updates", self.updates as f64);
        c.put_scalar("baseline.target_update_period", self.target_update_period as f64);
    }

    pub fn load_from(c: &ParamContainer) -> Result<Self> {
        let critic = QEnsemble::load_from(c, "critic.")?;
        let policy = c.network("baseline.policy")?.clone();
        let mut alpha_adam = AdamState::new(&[&[1]], critic.adam1.learning_rate);
        alpha_adam.step_count = c.scalar("baseline.alpha_adam.step")? as u64;
        alpha_adam.first_moment[0] = c.array("baseline.alpha_adam.m")?.clone();
        alpha_adam.second_moment[0] = c.array("baseline.alpha_adam.v")?.clone();
        Ok(Self {
            policy_adam: load_adam(c, "baseline.policy_adam", &policy)?,
            policy,
            critic,
            log_alpha: c.scalar("baseline.log_alpha")?,
            alpha_adam,
            target_entropy: c.scalar("baseline.target_entropy")?,
            action_bound: c.array("baseline.action_bound")?.data().to_vec(),
            batch_size: c.scalar("baseline.batch_size")? as usize,
            target_update_period: c.scalar("baseline.target_update_period")? as usize,
            updates: c.scalar("baseline.updates")? as u64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineLosses {
    pub critic: f64,
    pub policy: f64,
    pub alpha_loss: f64,
    pub entropy: f64,
}

impl From<BaselineLosses> for TrainLosses {
    fn from(l: BaselineLosses) -> Self {
        TrainLosses {
            critic: l.critic,
            policy: l.policy,
        }
    }
}

impl ActionSampler for GaussianBaselineAgent {
    fn sample_actions(&self, states: &DenseArray, rng: &mut DqsRng) -> Result<DenseArray> {
        Ok(self.draw(states, rng)?.actions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Transition;
    use crate::rng::seeded;

    fn agent(seed: u64) -> GaussianBaselineAgent {
        let mut rng = seeded(seed);
        let critic = QEnsemble::new(2, 2, &[16, 16], 3e-4, 0.99, 0.005, &mut rng).unwrap();
        GaussianBaselineAgent::new(2, vec![1.0, 2.0], &[16, 16], critic, 3e-4, 1.0, None, 8, &mut rng).unwrap()
    }

    #[test]
    fn tanh_log_det_matches_direct_form() {
        for u in [-6.0, -2.5, -0.3, 0.0, 0.7, 3.0, 6.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            assert!(tanh_log_det(u).is_finite());
            assert!((tanh_log_det(u) - direct).abs() < 1e-9, "{u}");
        }
        assert!(tanh_log_det(40.0).is_finite());
    }

    #[test]
    fn log_prob_matches_change_of_variables() {
        let a = agent(1);
        let s = DenseArray::row(&[0.3, -0.2]);
        let out = a.policy.forward(&s).unwrap();
        let (act, lp) = a.sample_with_log_prob(&s, &mut seeded(4)).unwrap();
        let mut want = 0.0;
        for j in 0..2 {
            let b = a.action_bound[j];
            let u = (act.data()[j] / b).atanh();
            let (mu, ls) = (out.data()[j], out.data()[2 + j].clamp(LOG_STD_MIN, LOG_STD_MAX));
            let z = (u - mu) / ls.exp();
            want += -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln() - (b * (1.0 - u.tanh().powi(2))).ln();
        }
        assert!((lp[0] - want).abs() < 1e-8, "{} vs {want}", lp[0]);
    }

    #[test]
    fn alpha_rises_when_entropy_below_target() {
        let mut a = agent(2);
        // a hugely negative log-std makes the policy nearly deterministic
        let last = a.policy.layers().len() - 1;
        for j in 2..4 {
            a.policy.layers_mut()[last].bias.data_mut()[j] = -15.0;
        }
        a.target_entropy = 0.0;
        let mut buf = ReplayBuffer::new(16).unwrap();
        for i in 0..16 {
            buf.push(Transition {
                state: vec![i as f64 * 0.1, 0.0],
                action: vec![0.0, 0.0],
                reward: 0.0,
                next_state: vec![0.0, 0.1],
                terminal: false,
            });
        }
        let before = a.log_alpha;
        let l = a.train_step(&buf, &mut TrainRngs::from_seed(0)).unwrap().unwrap();
        assert!(l.entropy < a.target_entropy);
        assert!(a.log_alpha > before);
        assert!(l.critic.is_finite() && l.policy.is_finite());
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let a = agent(5);
        let s = DenseArray::from_vec(&[3, 2], vec![0.1, 0.5, -0.4, 0.2, 0.9, -0.8]).unwrap();
        let (_, g, _) = a.actor_objective(&s, &mut seeded(6)).unwrap();
        for (pi, grad) in g.tensors.iter().enumerate() {
            for k in (0..grad.len()).step_by(7) {
                let h = 1e-6;
                let mut plus = a.clone();
                plus.policy.parameters_mut()[pi].data_mut()[k] += h;
                let mut minus = a.clone();
                minus.policy.parameters_mut()[pi].data_mut()[k] -= h;
                let fd = (plus.actor_objective(&s, &mut seeded(6)).unwrap().0
                    - minus.actor_objective(&s, &mut seeded(6)).unwrap().0)
                    / (2.0 * h);
                let an = grad.data()[k];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "tensor {pi} [{k}]: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn bounded_actions_and_round_trip() {
        let a = agent(3);
        let s = DenseArray::from_vec(&[5, 2], vec![9.0; 10]).unwrap();
        let act = a.sample_actions(&s, &mut seeded(0)).unwrap();
        for r in 0..5 {
            assert!(act.row_slice(r)[0].abs() <= 1.0 && act.row_slice(r)[1].abs() <= 2.0);
        }
        let mut c = ParamContainer::new();
        a.save_into(&mut c);
        assert_eq!(GaussianBaselineAgent::load_from(&c).unwrap(), a);
    }
}
