mod common;

use std::f64::consts::PI;

use dqs::envs::constants::{MAZE_DAMPING, MAZE_HORIZON, MAZE_LAYOUT};
use dqs::envs::{Environment, GaussianMixture, GmmNavEnv, MazeLayout, MultiGoalMazeEnv};
use dqs::rng::seeded;
use rand::Rng;

/// Direct density sum, no log-sum-exp.
fn direct_log_density(means: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let total: f64 = means
        .iter()
        .map(|m| (-0.5 * ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2))).exp() / (2.0 * PI))
        .sum();
    (total / means.len() as f64).ln()
}

#[test]
fn reward_at_isolated_mean_is_log_of_component_peak() {
    let mix = GaussianMixture::standard();
    let (k, gap) = (0..mix.means.len())
        .map(|i| {
            let d = (0..mix.means.len())
                .filter(|&j| j != i)
                .map(|j| (mix.means[i][0] - mix.means[j][0]).hypot(mix.means[i][1] - mix.means[j][1]))
                .fold(f64::INFINITY, f64::min);
            (i, d)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!(gap > 6.0, "no well-separated mean (best gap {gap})");
    let expected = -(40f64).ln() - (2.0 * PI).ln();
    assert!((mix.log_density(mix.means[k]) - expected).abs() < 1e-6);
}

#[test]
fn env_reward_matches_independent_density_at_random_points() {
    let mut env = GmmNavEnv::new();
    let means = env.mixture.means.clone();
    let mut rng = seeded(9);
    env.reset(&mut rng);
    let mut checked = 0;
    while checked < 100 {
        let angle: f64 = rng.random_range(0.0..2.0 * PI);
        let out = env.step(&[angle.cos(), angle.sin()], &mut rng).unwrap();
        let p = env.position();
        assert!((out.reward - direct_log_density(&means, p)).abs() < 1e-9, "at {p:?}");
        checked += 1;
        if out.done {
            env.reset(&mut rng);
        }
    }
    for _ in 0..100 {
        let p = [rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)];
        assert!((env.mixture.log_density(p) - direct_log_density(&means, p)).abs() < 1e-9);
    }
}

#[test]
fn gmm_actions_are_unit_steps_and_episode_ends_at_100() {
    let mut env = GmmNavEnv::new();
    let mut rng = seeded(1);
    env.reset(&mut rng);
    for t in 1..=100 {
        let before = env.position();
        let out = env.step(&[0.3, -0.4], &mut rng).unwrap();
        let p = env.position();
        assert!(((p[0] - before[0]).hypot(p[1] - before[1]) - 1.0).abs() < 1e-12);
        assert_eq!(out.done, t == 100);
    }
    // a zero action still moves one unit in some direction
    let start = env.reset(&mut rng);
    env.step(&[0.0, 0.0], &mut rng).unwrap();
    let p = env.position();
    assert!(((p[0] - start[0]).hypot(p[1] - start[1]) - 1.0).abs() < 1e-12);
}

fn maze() -> MultiGoalMazeEnv {
    MultiGoalMazeEnv::new(MazeLayout::parse(MAZE_LAYOUT).unwrap())
}

#[test]
fn maze_resets_are_gaussian_around_origin() {
    let mut env = maze();
    let mut rng = seeded(3);
    let n = 10_000;
    let mut sum = [0.0; 2];
    for _ in 0..n {
        let s = env.reset(&mut rng);
        assert_eq!(&s[2..], &[0.0, 0.0]);
        assert!(!env.layout.blocked([s[0], s[1]]));
        sum[0] += s[0];
        sum[1] += s[1];
    }
    assert!((sum[0] / n as f64).abs() < 0.01 && (sum[1] / n as f64).abs() < 0.01, "{sum:?}");
}

#[test]
fn kinetic_energy_never_grows_without_force() {
    let mut env = maze();
    let mut rng = seeded(0);
    env.reset(&mut rng);
    env.set_state([0.0, 0.0], [2.0, 1.3]);
    let mut ke = 0.5 * (2.0f64 * 2.0 + 1.3 * 1.3);
    for _ in 0..200 {
        env.step(&[0.0, 0.0], &mut rng).unwrap();
        let v = env.velocity();
        let now = 0.5 * (v[0] * v[0] + v[1] * v[1]);
        assert!(now <= ke * MAZE_DAMPING.powi(2) + 1e-15 || now == 0.0, "{now} > {ke}");
        ke = now;
        assert!(!env.layout.blocked(env.position()));
    }
}

/// Drives the ball through waypoints with a PD controller; returns the goal
/// reached, if any, and the number of steps used.
fn scripted(env: &mut MultiGoalMazeEnv, waypoints: &[[f64; 2]]) -> (Option<usize>, usize) {
    let mut rng = seeded(0);
    env.reset(&mut rng);
    env.set_state([0.0, 0.0], [0.0, 0.0]);
    let mut wp = 0;
    for t in 0..MAZE_HORIZON {
        let (p, v) = (env.position(), env.velocity());
        let target = waypoints[wp];
        let (dx, dy) = (target[0] - p[0], target[1] - p[1]);
        if dx.hypot(dy) < 0.15 && wp + 1 < waypoints.len() {
            wp += 1;
        }
        let a = [(2.0 * dx - 1.5 * v[0]).clamp(-2.0, 2.0), (2.0 * dy - 1.5 * v[1]).clamp(-2.0, 2.0)];
        let out = env.step(&a, &mut rng).unwrap();
        assert!(!env.layout.blocked(env.position()));
        if out.done {
            return (env.goal_reached(), t + 1);
        }
    }
    (None, MAZE_HORIZON)
}

#[test]
fn every_corridor_reaches_its_goal_within_the_horizon() {
    let layout = MazeLayout::parse(MAZE_LAYOUT).unwrap();
    let top_left = layout
        .goals
        .iter()
        .position(|g| g[0] < 0.0 && g[1] > 0.0)
        .expect("top-left goal");
    let bottom_right = 1 - top_left;
    let mut env = maze();
    // inner corridor: up column 3, then left along the top row
    let inner = [[-1.5, 0.0], [-1.5, 1.5], [-1.5, 4.5], [-4.5, 4.5]];
    // outer corridor: left along row 3, then up column 0
    let outer = [[-1.5, 0.0], [-1.5, 1.5], [-4.5, 1.5], [-4.5, 4.5]];
    let right = [[0.0, -1.5], [4.5, -1.5], [4.5, -4.5]];
    for (name, route, goal) in [
        ("inner", &inner[..], top_left),
        ("outer", &outer[..], top_left),
        ("right", &right[..], bottom_right),
    ] {
        let (reached, steps) = scripted(&mut env, route);
        assert_eq!(reached, Some(goal), "{name} route ended after {steps} steps");
    }
}

#[test]
fn identical_seeds_give_identical_episodes() {
    for name in ["gmm", "maze"] {
        let run = |seed| {
            let mut env = dqs::envs::make_env(name).unwrap();
            let mut rng = seeded(seed);
            let mut trace = env.reset(&mut rng);
            for _ in 0..50 {
                let a = env.uniform_action(&mut rng);
                let out = env.step(&a, &mut rng).unwrap();
                trace.extend(out.state);
                trace.push(out.reward);
            }
            trace
        };
        assert_eq!(run(12), run(12));
        assert_ne!(run(12), run(13));
    }
}
