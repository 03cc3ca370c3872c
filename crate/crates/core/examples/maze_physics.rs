//! Drives the maze ball with a scripted waypoint controller to each goal.

use anyhow::Result;
use dqs::envs::{constants::MAZE_LAYOUT, Environment, MazeLayout, MultiGoalMazeEnv};
use dqs::rng::seeded;

fn drive(env: &mut MultiGoalMazeEnv, waypoints: &[[f64; 2]]) -> Result<Option<usize>> {
    let mut rng = seeded(0);
    env.reset(&mut rng);
    let mut wp = 0;
    for _ in 0..env.horizon() {
        let p = env.position();
        let v = env.velocity();
        let target = waypoints[wp];
        let (dx, dy) = (target[0] - p[0], target[1] - p[1]);
        if dx.hypot(dy) < 0.15 && wp + 1 < waypoints.len() {
            wp += 1;
        }
        // PD control towards the active waypoint
        let a = [(2.0 * dx - 1.5 * v[0]).clamp(-2.0, 2.0), (2.0 * dy - 1.5 * v[1]).clamp(-2.0, 2.0)];
        let out = env.step(&a, &mut rng)?;
        if out.done {
            return Ok(env.goal_reached());
        }
    }
    Ok(None)
}

fn main() -> Result<()> {
    let layout = MazeLayout::parse(MAZE_LAYOUT)?;
    println!("start {:?}, goals {:?}, layout crc32 {:08x}", layout.start_center, layout.goals, layout.checksum);
    let mut env = MultiGoalMazeEnv::new(layout);
    let routes: [(&str, Vec<[f64; 2]>); 2] = [
        ("top-left", vec![[-1.5, 0.0], [-1.5, 1.5], [-1.5, 4.5], [-4.5, 4.5]]),
        ("bottom-right", vec![[1.5, -1.5], [4.5, -1.5], [4.5, -4.5]]),
    ];
    for (name, wps) in routes {
        println!("{name:<13} reached goal {:?}", drive(&mut env, &wps)?);
    }
    Ok(())
}
