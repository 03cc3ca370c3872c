//! Diffusion policy: a state- and temperature-conditioned score network,
//! fitted to the Monte Carlo score of `exp(Q / T)` and sampled by reverse
//! diffusion followed by tanh squashing.

use rand::{Rng, RngCore, SeedableRng};

use crate::critic::{load_adam, save_adam, QEnsemble};
use crate::diffusion::{
    add_noise, mc_score_estimate, EnergyBatch, EnergyFunction, NoiseSchedule, ReverseSampler,
    UpdateRule,
};
use crate::error::{DqsError, Result};
use crate::ndmath::{
    adam_step_network, sinusoidal_embedding_into, AdamState, DenseArray, MlpNetwork,
    ParamContainer,
};
use crate::par;
use crate::rng::DqsRng;

pub const DEFAULT_EMBED_DIM: usize = 256;
pub const DEFAULT_MC_SAMPLES: usize = 1000;

/// The diffusion time lives in [0, 1] and the temperature is O(0.01..10);
/// both are stretched before embedding so the low-frequency channels vary.
const TAU_EMBED_SCALE: f64 = 1000.0;
const TEMPERATURE_EMBED_SCALE: f64 = 100.0;

/// Anything that maps a batch of states to a batch of actions.
pub trait ActionSampler {
    fn sample_actions(&self, states: &DenseArray, rng: &mut DqsRng) -> Result<DenseArray>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemperatureSchedule {
    Fixed(f64),
    /// `start · (end / start)^{min(step / horizon, 1)}`.
    ExponentialDecay { start: f64, end: f64, horizon: u64 },
}

impl TemperatureSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Fixed(t) => t > 0.0 && t.is_finite(),
            Self::ExponentialDecay { start, end, horizon } => {
                start.is_finite() && end > 0.0 && start >= end && horizon > 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(DqsError::Config(format!("invalid temperature schedule {self:?}")))
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        match *self {
            Self::Fixed(t) => t,
            Self::ExponentialDecay { start, end, horizon } => {
                let frac = (step as f64 / horizon as f64).min(1.0);
                if frac >= 1.0 {
                    end
                } else {
                    start * (end / start).powf(frac)
                }
            }
        }
    }
}

pub fn anneal_temperature(schedule: &TemperatureSchedule, step: u64) -> f64 {
    schedule.at(step)
}

/// Energy `𝓔(a) = −min(Q1, Q2)(s, a) / T` at a fixed state, online heads.
pub struct QEnergy<'a> {
    pub q: &'a QEnsemble,
    pub state: &'a [f64],
    pub temperature: f64,
}

impl EnergyFunction for QEnergy<'_> {
    fn dim(&self) -> usize {
        self.q.action_dim()
    }

    fn evaluate(&self, points: &DenseArray) -> Result<EnergyBatch> {
        let (values, mut grads) = self.q.min_q_with_action_grad(self.state, points)?;
        let inv_t = 1.0 / self.temperature;
        grads.scale(-inv_t);
        Ok(EnergyBatch {
            energies: values.iter().map(|v| -v * inv_t).collect(),
            gradients: grads,
        })
    }
}

/// Score target for one noised action: the K-sample estimate of
/// `∇ log E[exp(Q(s, a) / T)]` around `noisy_action`. The Q-networks are
/// only read.
#[allow(clippy::too_many_arguments)]
pub fn policy_score_target<R: Rng + ?Sized>(
    q: &QEnsemble,
    schedule: &NoiseSchedule,
    state: &[f64],
    noisy_action: &[f64],
    tau: f64,
    temperature: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(DqsError::Domain(format!("temperature must be positive, got {temperature}")));
    }
    let energy = QEnergy {
        q,
        state,
        temperature,
    };
    mc_score_estimate(&energy, schedule, noisy_action, tau, k, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPolicy {
    pub score_net: MlpNetwork,
    pub sampler: ReverseSampler,
    pub temperature: f64,
    pub action_bound: Vec<f64>,
    /// Monte Carlo sample count for score targets.
    pub mc_samples: usize,
    pub adam: AdamState,
    state_dim: usize,
    embed_dim: usize,
}

impl DiffusionPolicy {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_bound: Vec<f64>,
        hidden: &[usize],
        embed_dim: usize,
        sampler: ReverseSampler,
        temperature: f64,
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let action_dim = action_bound.len();
        let mut dims = vec![state_dim + action_dim + 2 * embed_dim];
        dims.extend_from_slice(hidden);
        dims.push(action_dim);
        let net = MlpNetwork::new(&dims, true, rng)?;
        Self::from_network(net, state_dim, action_bound, embed_dim, sampler, temperature, learning_rate)
    }

    pub fn from_network(
        score_net: MlpNetwork,
        state_dim: usize,
        action_bound: Vec<f64>,
        embed_dim: usize,
        sampler: ReverseSampler,
        temperature: f64,
        learning_rate: f64,
    ) -> Result<Self> {
        let action_dim = action_bound.len();
        if action_dim == 0 || action_bound.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(DqsError::Config(format!("action bounds must be positive, got {action_bound:?}")));
        }
        if embed_dim == 0 || embed_dim % 2 != 0 {
            return Err(DqsError::Config(format!("embedding width must be even and positive, got {embed_dim}")));
        }
        let want_in = state_dim + action_dim + 2 * embed_dim;
        if score_net.input_dim() != want_in || score_net.output_dim() != action_dim {
            return Err(DqsError::dim(
                format!("score net {want_in} -> {action_dim}"),
                format!("{} -> {}", score_net.input_dim(), score_net.output_dim()),
            ));
        }
        if !(temperature > 0.0) {
            return Err(DqsError::Domain(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self {
            adam: AdamState::for_network(&score_net, learning_rate),
            score_net,
            sampler,
            temperature,
            action_bound,
            mc_samples: DEFAULT_MC_SAMPLES,
            state_dim,
            embed_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_bound.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// `[emb(τ) | emb(T)]`, the conditioning block shared by a batch.
    fn conditioning(&self, tau: f64, temperature: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; 2 * self.embed_dim];
        let (a, b) = out.split_at_mut(self.embed_dim);
        sinusoidal_embedding_into(tau * TAU_EMBED_SCALE, a)?;
        sinusoidal_embedding_into(temperature * TEMPERATURE_EMBED_SCALE, b)?;
        Ok(out)
    }

    fn join(&self, states: &DenseArray, noisy: &DenseArray) -> Result<DenseArray> {
        let ad = self.action_dim();
        if states.cols() != self.state_dim || noisy.cols() != ad || states.rows() != noisy.rows() {
            return Err(DqsError::dim(
                format!("[n, {}] states with [n, {ad}] actions", self.state_dim),
                format!("{:?} / {:?}", states.shape(), noisy.shape()),
            ));
        }
        let n = states.rows();
        let mut data = Vec::with_capacity(n * (self.state_dim + ad));
        for r in 0..n {
            data.extend_from_slice(states.row_slice(r));
            data.extend_from_slice(noisy.row_slice(r));
        }
        DenseArray::from_vec(&[n, self.state_dim + ad], data)
    }

    /// `f_φ(s, a_τ, τ; T)` for a batch sharing `τ` and `T`.
    pub fn score_net_forward(
        &self,
        states: &DenseArray,
        noisy_actions: &DenseArray,
        tau: f64,
        temperature: f64,
    ) -> Result<DenseArray> {
        let prefix = self.join(states, noisy_actions)?;
        self.score_net.forward_with_suffix(&prefix, &self.conditioning(tau, temperature)?)
    }

    /// Full network input rows for per-row `τ`.
    fn inputs_per_row(
        &self,
        states: &DenseArray,
        noisy: &DenseArray,
        taus: &[f64],
    ) -> Result<DenseArray> {
        let n = states.rows();
        let width = self.score_net.input_dim();
        let mut data = Vec::with_capacity(n * width);
        for r in 0..n {
            data.extend_from_slice(states.row_slice(r));
            data.extend_from_slice(noisy.row_slice(r));
            data.extend(self.conditioning(taus[r], self.temperature)?);
        }
        DenseArray::from_vec(&[n, width], data)
    }

    fn squash(&self, x: &mut DenseArray) {
        let ad = self.action_dim();
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = v.tanh() * self.action_bound[i % ad];
        }
    }

    /// Runs the reverse chain with an arbitrary score function and squashes
    /// the result. `score_fn` receives the current `[n, action_dim]` batch.
    pub fn sample_with_score<F>(&self, n: usize, mut score_fn: F, rng: &mut DqsRng) -> Result<DenseArray>
    where
        F: FnMut(&DenseArray, f64) -> Result<DenseArray>,
    {
        let mut x = self.sampler.generate_batch(
            |x, tau| {
                let s = score_fn(x, tau)?;
                if !s.is_finite() {
                    return Err(DqsError::Sampling { tau });
                }
                Ok(s)
            },
            n,
            self.action_dim(),
            rng,
        )?;
        if !x.is_finite() {
            return Err(DqsError::Sampling { tau: 0.0 });
        }
        self.squash(&mut x);
        Ok(x)
    }

    /// One action per state row via reverse diffusion at the current temperature.
    pub fn sample_action(&self, state: &[f64], rng: &mut DqsRng) -> Result<Vec<f64>> {
        Ok(self.sample_actions(&DenseArray::row(state), rng)?.into_vec())
    }

    /// Fits the score network to externally supplied targets for one Adam
    /// step. For element `i`, `tau_i ~ U[0, 1)` and the stored action is
    /// noised; `target(i, state, noisy, tau, rng)` returns the regression
    /// target. Element `i` uses its own generator seeded from `rng`, so the
    /// result does not depend on the worker count.
    pub fn fit_score<F>(
        &mut self,
        states: &DenseArray,
        actions: &DenseArray,
        target: F,
        rng: &mut DqsRng,
    ) -> Result<f64>
    where
        F: Fn(usize, &[f64], &[f64], f64, &mut DqsRng) -> Result<Vec<f64>> + Sync,
    {
        let n = states.rows();
        if n == 0 || states.is_empty() {
            return Err(DqsError::Domain("policy update on an empty batch".into()));
        }
        let ad = self.action_dim();
        if actions.rows() != n || actions.cols() != ad || states.cols() != self.state_dim {
            return Err(DqsError::dim(
                format!("[{n}, {}] states with [{n}, {ad}] actions", self.state_dim),
                format!("{:?} / {:?}", states.shape(), actions.shape()),
            ));
        }
        let seeds: Vec<u64> = (0..n).map(|_| rng.next_u64()).collect();
        let schedule = self.sampler.schedule;
        let per_element = par::map_indexed(n, par::thread_count(), |i| {
            let mut r = DqsRng::seed_from_u64(seeds[i]);
            let tau: f64 = r.random();
            let noisy = add_noise(&schedule, actions.row_slice(i), tau, &mut r)?;
            let s = target(i, states.row_slice(i), &noisy, tau, &mut r)?;
            if s.len() != ad {
                return Err(DqsError::dim(ad, s.len()));
            }
            Ok((tau, noisy, s))
        })?;
        let taus: Vec<f64> = per_element.iter().map(|e| e.0).collect();
        let noisy = DenseArray::from_vec(&[n, ad], per_element.iter().flat_map(|e| e.1.iter().copied()).collect())?;
        let x = self.inputs_per_row(states, &noisy, &taus)?;
        let trace = self.score_net.forward_trace(&x)?;
        let f = trace.output().data();
        let mut loss = 0.0;
        let mut cot = vec![0.0; n * ad];
        for (i, (_, _, s)) in per_element.iter().enumerate() {
            for d in 0..ad {
                let diff = f[i * ad + d] - s[d];
                loss += diff * diff;
                cot[i * ad + d] = 2.0 * diff / n as f64;
            }
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(DqsError::Numeric(format!("policy loss {loss}")));
        }
        let (grads, _) = self
            .score_net
            .backward(&trace, &DenseArray::from_vec(&[n, ad], cot)?, true, false)?;
        adam_step_network(&mut self.score_net, &grads.expect("parameter gradients requested"), &mut self.adam)?;
        Ok(loss)
    }

    /// Score matching against the Monte Carlo score of `exp(min Q / T)`.
    /// Returns the mean squared error `‖f_φ − S‖²` over the batch.
    pub fn policy_update(
        &mut self,
        q: &QEnsemble,
        states: &DenseArray,
        actions: &DenseArray,
        rng: &mut DqsRng,
    ) -> Result<f64> {
        let schedule = self.sampler.schedule;
        let (temperature, k) = (self.temperature, self.mc_samples);
        self.fit_score(
            states,
            actions,
            |_, s, a, tau, r| policy_score_target(q, &schedule, s, a, tau, temperature, k, r),
            rng,
        )
    }

    pub fn save_into(&self, c: &mut ParamContainer, prefix: &str) {
        c.put_network(&format!("{prefix}score_net"), &self.score_net);
        c.put_scalar(&format!("{prefix}temperature"), self.temperature);
        c.put_scalar(&format!("{prefix}state_dim"), self.state_dim as f64);
        c.put_scalar(&format!("{prefix}embed_dim"), self.embed_dim as f64);
        c.put_scalar(&format!("{prefix}mc_samples"), self.mc_samples as f64);
        c.put_array(&format!("{prefix}action_bound"), &DenseArray::vector(&self.action_bound));
        c.put_scalar(&format!("{prefix}sigma_min"), self.sampler.schedule.sigma_min());
        c.put_scalar(&format!("{prefix}sigma_max"), self.sampler.schedule.sigma_max());
        c.put_scalar(&format!("{prefix}n_steps"), self.sampler.n_steps as f64);
        c.put_text(
            &format!("{prefix}update_rule"),
            match self.sampler.rule {
                UpdateRule::EulerMaruyama => "euler-maruyama",
                UpdateRule::Literal => "literal",
            },
        );
        save_adam(c, &format!("{prefix}adam"), &self.adam);
    }

    pub fn load_from(c: &ParamContainer, prefix: &str) -> Result<Self> {
        let schedule = NoiseSchedule::new(
            c.scalar(&format!("{prefix}sigma_min"))?,
            c.scalar(&format!("{prefix}sigma_max"))?,
        )?;
        let mut sampler = ReverseSampler::new(schedule, c.scalar(&format!("{prefix}n_steps"))? as usize);
        sampler.rule = match c.text(&format!("{prefix}update_rule"))? {
            "literal" => UpdateRule::Literal,
            _ => UpdateRule::EulerMaruyama,
        };
        let net = c.network(&format!("{prefix}score_net"))?.clone();
        let mut p = Self::from_network(
            net,
            c.scalar(&format!("{prefix}state_dim"))? as usize,
            c.array(&format!("{prefix}action_bound"))?.data().to_vec(),
            c.scalar(&format!("{prefix}embed_dim"))? as usize,
            sampler,
            c.scalar(&format!("{prefix}temperature"))?,
            0.0,
        )?;
        p.mc_samples = c.scalar(&format!("{prefix}mc_samples"))? as usize;
        p.adam = load_adam(c, &format!("{prefix}adam"), &p.score_net)?;
        Ok(p)
    }
}

impl ActionSampler for DiffusionPolicy {
    fn sample_actions(&self, states: &DenseArray, rng: &mut DqsRng) -> Result<DenseArray> {
        if states.cols() != self.state_dim {
            return Err(DqsError::dim(self.state_dim, states.cols()));
        }
        let temperature = self.temperature;
        self.sample_with_score(
            states.rows(),
            |x, tau| self.score_net_forward(states, x, tau, temperature),
            rng,
        )
    }
}
