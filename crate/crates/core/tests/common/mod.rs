#![allow(dead_code)]

use dqs::envs::{Environment, StepOutcome};
use dqs::ndmath::DenseArray;
use dqs::policy::ActionSampler;
use dqs::rng::DqsRng;
use rand::Rng;

pub const MDP_GAMMA: f64 = 0.9;
/// `MDP_REWARD[s][a]`; action index 1 is a positive action. The chosen
/// action index is also the next state.
pub const MDP_REWARD: [[f64; 2]; 2] = [[0.0, 1.0], [2.0, 0.0]];

/// Two states, a 1-D action whose sign picks the next state, fixed horizon.
pub struct TwoStateMdp {
    pub state: usize,
    pub t: usize,
    pub horizon: usize,
}

impl TwoStateMdp {
    pub fn new(horizon: usize) -> Self {
        Self { state: 0, t: 0, horizon }
    }
}

impl Environment for TwoStateMdp {
    fn name(&self) -> &'static str {
        "two-state"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn action_bound(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn reset(&mut self, _rng: &mut DqsRng) -> Vec<f64> {
        self.state = 0;
        self.t = 0;
        vec![0.0]
    }
    fn step(&mut self, action: &[f64], _rng: &mut DqsRng) -> dqs::Result<StepOutcome> {
        let a = usize::from(action[0] > 0.0);
        let reward = MDP_REWARD[self.state][a];
        self.state = a;
        self.t += 1;
        let done = self.t >= self.horizon;
        Ok(StepOutcome {
            state: vec![a as f64],
            reward,
            done,
            truncated: done,
        })
    }
    fn uniform_action(&self, rng: &mut DqsRng) -> Vec<f64> {
        vec![rng.random_range(-1.0..=1.0)]
    }
    fn position(&self) -> [f64; 2] {
        [self.state as f64, 0.0]
    }
}

/// `Q^π` of the two-state MDP under the policy that always plays +1, by
/// iterating the Bellman expectation operator.
pub fn always_plus_q() -> [[f64; 2]; 2] {
    let mut q = [[0.0; 2]; 2];
    for _ in 0..1000 {
        let prev = q;
        for s in 0..2 {
            for a in 0..2 {
                q[s][a] = MDP_REWARD[s][a] + MDP_GAMMA * prev[a][1];
            }
        }
    }
    q
}

/// Best achievable undiscounted return over `horizon` steps from state 0,
/// by backward induction over the two actions.
pub fn optimal_return(horizon: usize) -> f64 {
    let mut v = [0.0f64; 2];
    for _ in 0..horizon {
        let prev = v;
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = (0..2).map(|a| MDP_REWARD[s][a] + prev[a]).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    v[0]
}

pub struct AlwaysPlus;

impl ActionSampler for AlwaysPlus {
    fn sample_actions(&self, states: &DenseArray, _: &mut DqsRng) -> dqs::Result<DenseArray> {
        Ok(DenseArray::filled(&[states.rows(), 1], 1.0))
    }
}

pub fn normal_array(n: usize, dim: usize, mean: f64, rng: &mut DqsRng) -> DenseArray {
    use rand_distr::StandardNormal;
    let data = (0..n * dim).map(|_| mean + rng.sample::<f64, _>(StandardNormal)).collect();
    DenseArray::from_vec(&[n, dim], data).unwrap()
}

pub fn points_array(p: &[[f64; 2]]) -> DenseArray {
    DenseArray::from_vec(&[p.len(), 2], p.iter().flatten().copied().collect()).unwrap()
}

/// Trains a double-Q critic on all four transitions of the two-state MDP
/// under [`AlwaysPlus`] and returns the largest absolute error against the
/// value-iteration table.
pub fn small_mdp_critic_error(updates: usize, seed: u64) -> f64 {
    use dqs::agent::Transition;
    use dqs::critic::QEnsemble;
    let transitions: Vec<Transition> = (0..2)
        .flat_map(|s| {
            (0..2).map(move |a| Transition {
                state: vec![s as f64],
                action: vec![if a == 1 { 1.0 } else { -1.0 }],
                reward: MDP_REWARD[s][a],
                next_state: vec![a as f64],
                terminal: false,
            })
        })
        .collect();
    let batch: Vec<&Transition> = transitions.iter().collect();
    let mut rng = dqs::rng::seeded(seed);
    let mut critic = QEnsemble::new(1, 1, &[32, 32], 1e-3, MDP_GAMMA, 0.05, &mut rng).unwrap();
    for _ in 0..updates {
        critic.critic_update(&batch, &AlwaysPlus, &mut rng).unwrap();
        critic.ema_update().unwrap();
    }
    let truth = always_plus_q();
    transitions
        .iter()
        .map(|t| {
            let q = critic.min_q(&t.state, &t.action, false).unwrap();
            (q - truth[t.state[0] as usize][usize::from(t.action[0] > 0.0)]).abs()
        })
        .fold(0.0, f64::max)
}

/// A run small enough for unit-speed tests.
pub fn tiny_config(env: &str, agent: dqs::config::AgentKind, out: &std::path::Path, total_steps: u64) -> dqs::config::RunConfig {
    let mut cfg = dqs::config::RunConfig {
        env: env.into(),
        agent,
        out_dir: out.to_path_buf(),
        ..Default::default()
    };
    let t = &mut cfg.train;
    t.total_steps = total_steps;
    t.seed_steps = total_steps.min(50);
    t.batch_size = 16;
    t.critic_hidden = vec![16, 16];
    t.policy_hidden = vec![16, 16];
    t.embed_dim = 8;
    t.mc_samples = 16;
    t.integration_steps = 10;
    t.eval_episodes = 4;
    t.temperature = dqs::policy::TemperatureSchedule::Fixed(1.0);
    cfg.baseline.policy_hidden = vec![16, 16];
    cfg
}
