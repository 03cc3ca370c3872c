//! Twin Q-networks with EMA targets and one-sample TD targets.

use rand::Rng;

use crate::agent::Transition;
use crate::error::{DqsError, Result};
use crate::ndmath::{adam_step_network, AdamState, DenseArray, MlpGrads, MlpNetwork, ParamContainer};
use crate::policy::ActionSampler;
use crate::rng::DqsRng;

pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_TARGET_SMOOTHING: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct QEnsemble {
    pub q1: MlpNetwork,
    pub q2: MlpNetwork,
    pub q1_target: MlpNetwork,
    pub q2_target: MlpNetwork,
    pub gamma: f64,
    pub eta: f64,
    pub adam1: AdamState,
    pub adam2: AdamState,
    state_dim: usize,
    action_dim: usize,
}

impl QEnsemble {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        learning_rate: f64,
        gamma: f64,
        eta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = vec![state_dim + action_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let q1 = MlpNetwork::new(&dims, false, rng)?;
        let q2 = MlpNetwork::new(&dims, false, rng)?;
        Self::from_networks(q1, q2, state_dim, learning_rate, gamma, eta)
    }

    /// Wraps two online heads; targets start as exact copies.
    pub fn from_networks(
        q1: MlpNetwork,
        q2: MlpNetwork,
        state_dim: usize,
        learning_rate: f64,
        gamma: f64,
        eta: f64,
    ) -> Result<Self> {
        if q1.layer_dims() != q2.layer_dims() || q1.output_dim() != 1 {
            return Err(DqsError::dim(
                format!("{:?} -> 1", q1.layer_dims()),
                format!("{:?}", q2.layer_dims()),
            ));
        }
        if q1.input_dim() <= state_dim {
            return Err(DqsError::dim(format!("more than {state_dim} Q inputs"), q1.input_dim()));
        }
        if !(0.0..=1.0).contains(&gamma) || !(eta > 0.0 && eta <= 1.0) {
            return Err(DqsError::Config(format!(
                "need gamma in [0, 1] and eta in (0, 1], got {gamma} / {eta}"
            )));
        }
        Ok(Self {
            action_dim: q1.input_dim() - state_dim,
            state_dim,
            adam1: AdamState::for_network(&q1, learning_rate),
            adam2: AdamState::for_network(&q2, learning_rate),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            gamma,
            eta,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.adam1.learning_rate = lr;
        self.adam2.learning_rate = lr;
    }

    fn heads(&self, use_targets: bool) -> (&MlpNetwork, &MlpNetwork) {
        if use_targets {
            (&self.q1_target, &self.q2_target)
        } else {
            (&self.q1, &self.q2)
        }
    }

    /// Concatenates `[states | actions]` row-wise.
    pub fn join_inputs(&self, states: &DenseArray, actions: &DenseArray) -> Result<DenseArray> {
        if states.cols() != self.state_dim
            || actions.cols() != self.action_dim
            || states.rows() != actions.rows()
        {
            return Err(DqsError::dim(
                format!("[n, {}] states with [n, {}] actions", self.state_dim, self.action_dim),
                format!("{:?} / {:?}", states.shape(), actions.shape()),
            ));
        }
        let n = states.rows();
        let mut data = Vec::with_capacity(n * (self.state_dim + self.action_dim));
        for r in 0..n {
            data.extend_from_slice(states.row_slice(r));
            data.extend_from_slice(actions.row_slice(r));
        }
        DenseArray::from_vec(&[n, self.state_dim + self.action_dim], data)
    }

    /// `min(Q1, Q2)` of the selected pair at one state-action.
    pub fn min_q(&self, state: &[f64], action: &[f64], use_targets: bool) -> Result<f64> {
        let v = self.min_q_batch(&DenseArray::row(state), &DenseArray::row(action), use_targets)?;
        Ok(v[0])
    }

    pub fn min_q_batch(
        &self,
        states: &DenseArray,
        actions: &DenseArray,
        use_targets: bool,
    ) -> Result<Vec<f64>> {
        let x = self.join_inputs(states, actions)?;
        let (a, b) = self.heads(use_targets);
        let ya = a.forward(&x)?;
        let yb = b.forward(&x)?;
        Ok(ya.data().iter().zip(yb.data()).map(|(p, q)| p.min(*q)).collect())
    }

    /// Online `min(Q1, Q2)(s, aᵢ)` for a fixed state and its gradient with
    /// respect to each action; the gradient follows whichever head is smaller.
    pub fn min_q_with_action_grad(
        &self,
        state: &[f64],
        actions: &DenseArray,
    ) -> Result<(Vec<f64>, DenseArray)> {
        if state.len() != self.state_dim || actions.cols() != self.action_dim {
            return Err(DqsError::dim(
                format!("state {} / action {}", self.state_dim, self.action_dim),
                format!("{} / {:?}", state.len(), actions.shape()),
            ));
        }
        let k = actions.rows();
        let width = self.state_dim + self.action_dim;
        let mut data = Vec::with_capacity(k * width);
        for r in 0..k {
            data.extend_from_slice(state);
            data.extend_from_slice(actions.row_slice(r));
        }
        self.min_q_grad_on(&DenseArray::from_vec(&[k, width], data)?)
    }

    /// Row-wise form of [`min_q_with_action_grad`](Self::min_q_with_action_grad).
    pub fn min_q_batch_with_action_grad(
        &self,
        states: &DenseArray,
        actions: &DenseArray,
    ) -> Result<(Vec<f64>, DenseArray)> {
        self.min_q_grad_on(&self.join_inputs(states, actions)?)
    }

    fn min_q_grad_on(&self, x: &DenseArray) -> Result<(Vec<f64>, DenseArray)> {
        let k = x.rows();
        let t1 = self.q1.forward_trace(x)?;
        let t2 = self.q2.forward_trace(x)?;
        let (v1, v2) = (t1.output().data(), t2.output().data());
        let mut values = Vec::with_capacity(k);
        let (mut rows1, mut rows2) = (Vec::new(), Vec::new());
        for r in 0..k {
            if v1[r] <= v2[r] {
                values.push(v1[r]);
                rows1.push(r);
            } else {
                values.push(v2[r]);
                rows2.push(r);
            }
        }
        let mut grads = DenseArray::zeros(&[k, self.action_dim]);
        for (net, trace, rows) in [(&self.q1, &t1, &rows1), (&self.q2, &t2, &rows2)] {
            if rows.is_empty() {
                continue;
            }
            let sub = trace.gather(net, rows);
            let (_, dx) = net.backward(&sub, &DenseArray::filled(&[rows.len(), 1], 1.0), false, true)?;
            let dx = dx.expect("input gradient requested");
            for (i, &r) in rows.iter().enumerate() {
                grads
                    .row_slice_mut(r)
                    .copy_from_slice(&dx.row_slice(i)[self.state_dim..]);
            }
        }
        Ok((values, grads))
    }

    /// `rᵢ + γ (1 − terminalᵢ) (min Q̄(s′ᵢ, a′ᵢ) − bonusᵢ)` for given next actions.
    /// `entropy_penalty` is subtracted from the bootstrapped value (soft targets).
    pub fn td_targets(
        &self,
        batch: &[&Transition],
        next_actions: &DenseArray,
        entropy_penalty: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let next_states = stack_rows(batch.iter().map(|t| t.next_state.as_slice()), self.state_dim)?;
        let q_next = self.min_q_batch(&next_states, next_actions, true)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.terminal {
                    t.reward
                } else {
                    let bonus = entropy_penalty.map_or(0.0, |p| p[i]);
                    t.reward + self.gamma * (q_next[i] - bonus)
                }
            })
            .collect())
    }

    /// One-sample TD target `r + γ min Q̄(s′, a′)`, `a′ ~ π(s′)`; `r` if terminal.
    pub fn td_target(
        &self,
        transition: &Transition,
        policy: &dyn ActionSampler,
        rng: &mut DqsRng,
    ) -> Result<f64> {
        if transition.terminal {
            return Ok(transition.reward);
        }
        let s = DenseArray::row(&transition.next_state);
        let a = policy.sample_actions(&s, rng)?;
        Ok(self.td_targets(&[transition], &a, None)?[0])
    }

    /// Regresses both online heads onto fixed targets with one Adam step
    /// each. Returns the mean of the two heads' mean squared errors.
    pub fn regress(&mut self, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
        let n = batch.len();
        if n == 0 {
            return Err(DqsError::Domain("critic update on an empty batch".into()));
        }
        if targets.len() != n {
            return Err(DqsError::dim(n, targets.len()));
        }
        let states = stack_rows(batch.iter().map(|t| t.state.as_slice()), self.state_dim)?;
        let actions = stack_rows(batch.iter().map(|t| t.action.as_slice()), self.action_dim)?;
        let x = self.join_inputs(&states, &actions)?;
        let mut total = 0.0;
        let mut grads: Vec<MlpGrads> = Vec::with_capacity(2);
        for net in [&self.q1, &self.q2] {
            let trace = net.forward_trace(&x)?;
            let q = trace.output().data();
            let mut cot = Vec::with_capacity(n);
            let mut mse = 0.0;
            for (qi, yi) in q.iter().zip(targets) {
                let d = qi - yi;
                mse += d * d;
                cot.push(2.0 * d / n as f64);
            }
            total += mse / n as f64;
            let (g, _) = net.backward(&trace, &DenseArray::from_vec(&[n, 1], cot)?, true, false)?;
            grads.push(g.expect("parameter gradients requested"));
        }
        let loss = 0.5 * total;
        if !loss.is_finite() {
            return Err(DqsError::Numeric(format!("critic loss {loss}")));
        }
        adam_step_network(&mut self.q1, &grads[0], &mut self.adam1)?;
        adam_step_network(&mut self.q2, &grads[1], &mut self.adam2)?;
        Ok(loss)
    }

    /// TD regression with one next action per transition drawn from `policy`.
    pub fn critic_update(
        &mut self,
        batch: &[&Transition],
        policy: &dyn ActionSampler,
        rng: &mut DqsRng,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(DqsError::Domain("critic update on an empty batch".into()));
        }
        let next_states = stack_rows(batch.iter().map(|t| t.next_state.as_slice()), self.state_dim)?;
        let next_actions = policy.sample_actions(&next_states, rng)?;
        let targets = self.td_targets(batch, &next_actions, None)?;
        self.regress(batch, &targets)
    }

    /// `θ̄ ← η θ + (1 − η) θ̄` for both heads.
    pub fn ema_update(&mut self) -> Result<()> {
        self.q1_target.soft_update_from(&self.q1, self.eta)?;
        self.q2_target.soft_update_from(&self.q2, self.eta)
    }

    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for n in [&self.q1, &self.q2, &self.q1_target, &self.q2_target] {
            h.update(&n.checksum().to_le_bytes());
        }
        h.finalize()
    }

    pub fn save_into(&self, c: &mut ParamContainer, prefix: &str) {
        c.put_network(&format!("{prefix}q1"), &self.q1);
        c.put_network(&format!("{prefix}q2"), &self.q2);
        c.put_network(&format!("{prefix}q1_target"), &self.q1_target);
        c.put_network(&format!("{prefix}q2_target"), &self.q2_target);
        c.put_scalar(&format!("{prefix}gamma"), self.gamma);
        c.put_scalar(&format!("{prefix}eta"), self.eta);
        c.put_scalar(&format!("{prefix}state_dim"), self.state_dim as f64);
        for (tag, st) in [("adam1", &self.adam1), ("adam2", &self.adam2)] {
            save_adam(c, &format!("{prefix}{tag}"), st);
        }
    }

    pub fn load_from(c: &ParamContainer, prefix: &str) -> Result<Self> {
        let q1 = c.network(&format!("{prefix}q1"))?.clone();
        let q2 = c.network(&format!("{prefix}q2"))?.clone();
        let state_dim = c.scalar(&format!("{prefix}state_dim"))? as usize;
        let mut ens = Self::from_networks(
            q1,
            q2,
            state_dim,
            0.0,
            c.scalar(&format!("{prefix}gamma"))?,
            c.scalar(&format!("{prefix}eta"))?,
        )?;
        ens.q1_target = c.network(&format!("{prefix}q1_target"))?.clone();
        ens.q2_target = c.network(&format!("{prefix}q2_target"))?.clone();
        ens.adam1 = load_adam(c, &format!("{prefix}adam1"), &ens.q1)?;
        ens.adam2 = load_adam(c, &format!("{prefix}adam2"), &ens.q2)?;
        Ok(ens)
    }
}

pub(crate) fn save_adam(c: &mut ParamContainer, prefix: &str, st: &AdamState) {
    c.put_scalar(&format!("{prefix}.step"), st.step_count as f64);
    c.put_scalar(&format!("{prefix}.lr"), st.learning_rate);
    for (i, (m, v)) in st.first_moment.iter().zip(&st.second_moment).enumerate() {
        c.put_array(&format!("{prefix}.m{i}"), m);
        c.put_array(&format!("{prefix}.v{i}"), v);
    }
}

pub(crate) fn load_adam(c: &ParamContainer, prefix: &str, net: &MlpNetwork) -> Result<AdamState> {
    let mut st = AdamState::for_network(net, c.scalar(&format!("{prefix}.lr"))?);
    st.step_count = c.scalar(&format!("{prefix}.step"))? as u64;
    for i in 0..st.first_moment.len() {
        st.first_moment[i] = c.array(&format!("{prefix}.m{i}"))?.clone();
        st.second_moment[i] = c.array(&format!("{prefix}.v{i}"))?.clone();
    }
    Ok(st)
}

/// Stacks equal-width rows into `[n, width]`.
pub(crate) fn stack_rows<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    width: usize,
) -> Result<DenseArray> {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        if r.len() != width {
            return Err(DqsError::dim(width, r.len()));
        }
        data.extend_from_slice(r);
        n += 1;
    }
    if n == 0 {
        return Ok(DenseArray::zeros(&[0, width]));
    }
    DenseArray::from_vec(&[n, width], data)
}
