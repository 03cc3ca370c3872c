//! Built-in environments behind one step/reset contract.

pub mod constants;
mod gmm;
mod maze;

pub use gmm::{mixture_log_density, GaussianMixture, GmmNavEnv};
pub use maze::{MazeLayout, MultiGoalMazeEnv};

use crate::error::{DqsError, Result};
use crate::rng::DqsRng;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    /// The episode is over, for any reason.
    pub done: bool,
    /// The episode ended only because the step budget ran out.
    pub truncated: bool,
}

impl StepOutcome {
    /// Whether the value of the next state should be bootstrapped away.
    pub fn terminal(&self) -> bool {
        self.done && !self.truncated
    }
}

pub trait Environment: Send {
    fn name(&self) -> &'static str;

    fn state_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    /// Per-coordinate bound of the action box the agent emits into.
    fn action_bound(&self) -> Vec<f64>;

    fn horizon(&self) -> usize;

    fn reset(&mut self, rng: &mut DqsRng) -> Vec<f64>;

    fn step(&mut self, action: &[f64], rng: &mut DqsRng) -> Result<StepOutcome>;

    /// An exploratory action drawn uniformly from the valid action set.
    fn uniform_action(&self, rng: &mut DqsRng) -> Vec<f64>;

    /// Planar position, for trajectory dumps and sample scatter plots.
    fn position(&self) -> [f64; 2];

    /// Index of the goal reached on the most recent step, for multi-goal tasks.
    fn goal_reached(&self) -> Option<usize> {
        None
    }
}

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "gmm" => Ok(Box::new(GmmNavEnv::new())),
        "maze" => Ok(Box::new(MultiGoalMazeEnv::new(MazeLayout::parse(constants::MAZE_LAYOUT)?))),
        other => Err(DqsError::Config(format!("unknown environment `{other}` (expected gmm or maze)"))),
    }
}
