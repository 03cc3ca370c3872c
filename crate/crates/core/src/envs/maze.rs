use rand::Rng;
use rand_distr::StandardNormal;

use super::constants::{
    MAZE_CELL_SIZE, MAZE_DAMPING, MAZE_DT, MAZE_FORCE_MAX, MAZE_GOAL_RADIUS, MAZE_HORIZON,
    MAZE_SPEED_MAX, MAZE_START_STD,
};
use super::{Environment, StepOutcome};
use crate::error::{DqsError, Result};
use crate::rng::DqsRng;

/// Parsed wall grid. Row 0 is the top edge; the grid is centred on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeLayout {
    rows: usize,
    cols: usize,
    walls: Vec<bool>,
    pub goals: Vec<[f64; 2]>,
    pub start_center: [f64; 2],
    pub checksum: u32,
}

impl MazeLayout {
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.chars().count());
        if rows == 0 || cols == 0 {
            return Err(DqsError::Config("maze layout is empty".into()));
        }
        let mut walls = Vec::with_capacity(rows * cols);
        let mut goal_cells = Vec::new();
        let mut start_cells = Vec::new();
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(DqsError::Config(format!(
                    "maze layout line {} has {} cells, expected {cols}",
                    r + 1,
                    line.chars().count()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'G' => {
                        walls.push(false);
                        goal_cells.push((r, c));
                    }
                    'S' => {
                        walls.push(false);
                        start_cells.push((r, c));
                    }
                    other => {
                        return Err(DqsError::Config(format!(
                            "maze layout line {}: unexpected character `{other}`",
                            r + 1
                        )))
                    }
                }
            }
        }
        if goal_cells.is_empty() || start_cells.is_empty() {
            return Err(DqsError::Config("maze layout needs at least one `G` and one `S`".into()));
        }
        let mut layout = Self {
            rows,
            cols,
            walls,
            goals: Vec::new(),
            start_center: [0.0, 0.0],
            checksum: crc32fast::hash(text.as_bytes()),
        };
        layout.goals = goal_cells.iter().map(|&(r, c)| layout.cell_center(r, c)).collect();
        let n = start_cells.len() as f64;
        for &(r, c) in &start_cells {
            let p = layout.cell_center(r, c);
            layout.start_center[0] += p[0] / n;
            layout.start_center[1] += p[1] / n;
        }
        Ok(layout)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.cols as f64 * MAZE_CELL_SIZE
    }

    pub fn half_height(&self) -> f64 {
        0.5 * self.rows as f64 * MAZE_CELL_SIZE
    }

    pub fn cell_center(&self, r: usize, c: usize) -> [f64; 2] {
        [
            (c as f64 + 0.5) * MAZE_CELL_SIZE - self.half_width(),
            self.half_height() - (r as f64 + 0.5) * MAZE_CELL_SIZE,
        ]
    }

    /// `(row, col)` containing `p`, or `None` outside the arena.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let c = ((p[0] + self.half_width()) / MAZE_CELL_SIZE).floor();
        let r = ((self.half_height() - p[1]) / MAZE_CELL_SIZE).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            None
        } else {
            Some((r as usize, c as usize))
        }
    }

    /// Walls and everything outside the arena are blocked.
    pub fn blocked(&self, p: [f64; 2]) -> bool {
        match self.cell_of(p) {
            Some((r, c)) => self.walls[r * self.cols + c],
            None => true,
        }
    }

    pub fn is_wall(&self, r: usize, c: usize) -> bool {
        self.walls[r * self.cols + c]
    }
}

/// Point-mass ball pushed by a bounded force through a walled arena with
/// two goals. State is `(x, y, vx, vy)`.
#[derive(Debug, Clone)]
pub struct MultiGoalMazeEnv {
    pub layout: MazeLayout,
    pos: [f64; 2],
    vel: [f64; 2],
    t: usize,
    last_goal: Option<usize>,
}

impl MultiGoalMazeEnv {
    pub fn new(layout: MazeLayout) -> Self {
        let pos = layout.start_center;
        Self {
            layout,
            pos,
            vel: [0.0, 0.0],
            t: 0,
            last_goal: None,
        }
    }

    /// Places the ball directly; used by scripted checks.
    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.vel
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    fn state(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    /// Moves along one axis; a blocked destination stops the ball at the
    /// face of its current cell and zeroes that velocity component.
    fn advance_axis(&mut self, axis: usize) {
        let delta = self.vel[axis] * MAZE_DT;
        if delta == 0.0 {
            return;
        }
        let mut next = self.pos;
        next[axis] += delta;
        if !self.layout.blocked(next) {
            self.pos = next;
            return;
        }
        // cell boundaries sit at integer multiples of the cell size from the arena edge
        let offset = if axis == 0 { self.layout.half_width() } else { self.layout.half_height() };
        let k = ((self.pos[axis] + offset) / MAZE_CELL_SIZE).floor();
        let face = if delta > 0.0 {
            (k + 1.0) * MAZE_CELL_SIZE - offset - 1e-9
        } else {
            k * MAZE_CELL_SIZE - offset
        };
        self.pos[axis] = face;
        self.vel[axis] = 0.0;
    }
}

impl Environment for MultiGoalMazeEnv {
    fn name(&self) -> &'static str {
        "maze"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_bound(&self) -> Vec<f64> {
        vec![MAZE_FORCE_MAX, MAZE_FORCE_MAX]
    }

    fn horizon(&self) -> usize {
        MAZE_HORIZON
    }

    /// Start position is Gaussian around the start centre, redrawn until it
    /// lands in a free cell.
    fn reset(&mut self, rng: &mut DqsRng) -> Vec<f64> {
        let c = self.layout.start_center;
        loop {
            let p = [
                c[0] + MAZE_START_STD * rng.sample::<f64, _>(StandardNormal),
                c[1] + MAZE_START_STD * rng.sample::<f64, _>(StandardNormal),
            ];
            if !self.layout.blocked(p) {
                self.pos = p;
                break;
            }
        }
        self.vel = [0.0, 0.0];
        self.t = 0;
        self.last_goal = None;
        self.state()
    }

    fn step(&mut self, action: &[f64], _rng: &mut DqsRng) -> Result<StepOutcome> {
        if action.len() != 2 {
            return Err(DqsError::dim(2, action.len()));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(DqsError::Numeric(format!("non-finite action {action:?}")));
        }
        for axis in 0..2 {
            let f = action[axis].clamp(-MAZE_FORCE_MAX, MAZE_FORCE_MAX);
            self.vel[axis] = MAZE_DAMPING * (self.vel[axis] + f * MAZE_DT);
        }
        let speed = self.vel[0].hypot(self.vel[1]);
        if speed > MAZE_SPEED_MAX {
            let k = MAZE_SPEED_MAX / speed;
            self.vel[0] *= k;
            self.vel[1] *= k;
        }
        self.advance_axis(0);
        self.advance_axis(1);
        self.t += 1;
        self.last_goal = self
            .layout
            .goals
            .iter()
            .position(|g| (g[0] - self.pos[0]).hypot(g[1] - self.pos[1]) <= MAZE_GOAL_RADIUS);
        let reached = self.last_goal.is_some();
        let out_of_time = self.t >= MAZE_HORIZON;
        Ok(StepOutcome {
            state: self.state(),
            reward: if reached { 1.0 } else { 0.0 },
            done: reached || out_of_time,
            truncated: out_of_time && !reached,
        })
    }

    fn uniform_action(&self, rng: &mut DqsRng) -> Vec<f64> {
        (0..2).map(|_| rng.random_range(-MAZE_FORCE_MAX..=MAZE_FORCE_MAX)).collect()
    }

    fn position(&self) -> [f64; 2] {
        self.pos
    }

    fn goal_reached(&self) -> Option<usize> {
        self.last_goal
    }
}
