//! Every tunable constant of the built-in environments.

/// Seed of the generator that places the mixture means.
pub const GMM_MEANS_SEED: u64 = 40_2024;
pub const GMM_COMPONENTS: usize = 40;
/// Means are drawn uniformly from `[-GMM_HALF_WIDTH, GMM_HALF_WIDTH]²`.
pub const GMM_HALF_WIDTH: f64 = 40.0;
pub const GMM_STEP_SIZE: f64 = 1.0;
pub const GMM_HORIZON: usize = 100;

pub const MAZE_DT: f64 = 0.1;
pub const MAZE_DAMPING: f64 = 0.99;
pub const MAZE_FORCE_MAX: f64 = 2.0;
/// Speed cap; with `MAZE_DT` it bounds a single move to 0.3 cells.
pub const MAZE_SPEED_MAX: f64 = 3.0;
pub const MAZE_HORIZON: usize = 300;
pub const MAZE_CELL_SIZE: f64 = 1.0;
pub const MAZE_GOAL_RADIUS: f64 = 0.5;
pub const MAZE_START_STD: f64 = 0.1;

/// The shipped layout: `#` wall, `.` free, `G` goal, `S` start region.
pub const MAZE_LAYOUT: &str = include_str!("../../configs/maze_layout.txt");
