//! Double-Q critic on a two-state, two-action MDP under a fixed policy,
//! compared with policy-evaluation value iteration.

use anyhow::Result;
use dqs::agent::Transition;
use dqs::critic::QEnsemble;
use dqs::ndmath::DenseArray;
use dqs::policy::ActionSampler;
use dqs::rng::{seeded, DqsRng};

const GAMMA: f64 = 0.9;
// reward[s][a], with action index 0 ↔ −1 and 1 ↔ +1; the action is the next state
const REWARD: [[f64; 2]; 2] = [[0.0, 1.0], [2.0, 0.0]];

struct AlwaysPlus;

impl ActionSampler for AlwaysPlus {
    fn sample_actions(&self, states: &DenseArray, _: &mut DqsRng) -> dqs::Result<DenseArray> {
        Ok(DenseArray::filled(&[states.rows(), 1], 1.0))
    }
}

fn main() -> Result<()> {
    let mut q_vi = [[0.0; 2]; 2];
    for _ in 0..500 {
        let prev = q_vi;
        for s in 0..2 {
            for a in 0..2 {
                q_vi[s][a] = REWARD[s][a] + GAMMA * prev[a][1];
            }
        }
    }
    let transitions: Vec<Transition> = (0..2)
        .flat_map(|s| {
            (0..2).map(move |a| Transition {
                state: vec![s as f64],
                action: vec![if a == 1 { 1.0 } else { -1.0 }],
                reward: REWARD[s][a],
                next_state: vec![a as f64],
                terminal: false,
            })
        })
        .collect();
    let batch: Vec<&Transition> = transitions.iter().collect();
    let mut rng = seeded(2);
    let mut critic = QEnsemble::new(1, 1, &[32, 32], 1e-3, GAMMA, 0.05, &mut rng)?;
    for it in 0..=6000 {
        let loss = critic.critic_update(&batch, &AlwaysPlus, &mut rng)?;
        critic.ema_update()?;
        if it % 2000 == 0 {
            println!("update {it:>5}  td loss {loss:.2e}");
        }
    }
    for t in &transitions {
        let s = t.state[0] as usize;
        let a = usize::from(t.action[0] > 0.0);
        println!(
            "Q(s={s}, a={:+}) learned {:.4}  value iteration {:.4}",
            t.action[0],
            critic.min_q(&t.state, &t.action, false)?,
            q_vi[s][a]
        );
    }
    Ok(())
}
