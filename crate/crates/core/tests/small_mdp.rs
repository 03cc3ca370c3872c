mod common;

use common::*;
use dqs::agent::{env_step, GaussianBaselineAgent, ReplayBuffer, TrainRngs};
use dqs::critic::QEnsemble;
use dqs::envs::Environment;
use dqs::rng::seeded;

#[test]
fn value_iteration_table_is_the_fixed_point() {
    let q = always_plus_q();
    // Q(1,+) = 0; Q(0,+) = 1; Q(0,−) = γ; Q(1,−) = 2 + γ
    assert!((q[1][1] - 0.0).abs() < 1e-12);
    assert!((q[0][1] - 1.0).abs() < 1e-12);
    assert!((q[0][0] - 0.9).abs() < 1e-12);
    assert!((q[1][0] - 2.9).abs() < 1e-12);
}

#[test]
fn critic_converges_to_policy_evaluation_q() {
    let err = small_mdp_critic_error(6000, 2);
    assert!(err <= 0.01, "max |Q - Q_vi| = {err}");
}

#[test]
fn baseline_reaches_near_optimal_return() {
    let horizon = 20;
    let mut env = TwoStateMdp::new(horizon);
    let mut rng = seeded(4);
    let critic = QEnsemble::new(1, 1, &[32, 32], 3e-3, MDP_GAMMA, 0.01, &mut rng).unwrap();
    let mut agent =
        GaussianBaselineAgent::new(1, vec![1.0], &[32, 32], critic, 3e-3, 1.0, None, 64, &mut rng).unwrap();
    let mut buffer = ReplayBuffer::new(10_000).unwrap();
    let mut rngs = TrainRngs::from_seed(4);
    let (mut env_rng, mut act_rng) = (seeded(5), seeded(6));
    let mut state = env.reset(&mut env_rng);
    for step in 0..4000u64 {
        let rec = env_step(&agent, &mut env, &state, step, 200, &mut env_rng, &mut act_rng).unwrap();
        state = if rec.done { env.reset(&mut env_rng) } else { rec.transition.next_state.clone() };
        buffer.push(rec.transition);
        if step >= 200 {
            agent.train_step(&buffer, &mut rngs).unwrap();
        }
    }
    // stochastic evaluation, as for every agent here
    let episodes = 20;
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut s = env.reset(&mut env_rng);
        loop {
            let rec = env_step(&agent, &mut env, &s, u64::MAX, 0, &mut env_rng, &mut act_rng).unwrap();
            total += rec.transition.reward;
            if rec.done {
                break;
            }
            s = rec.transition.next_state;
        }
    }
    let mean = total / episodes as f64;
    let best = optimal_return(horizon);
    assert!(mean >= 0.95 * best, "mean return {mean} vs optimal {best}");
}
