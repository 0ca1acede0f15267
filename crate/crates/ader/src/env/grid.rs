//! A small stochastic grid world: an agent starts at the bottom, a goal
//! cell sits at the top, and a wall of impassable fire cells separates them
//! except for a single storm cell. Transitions are deterministic everywhere
//! except on the storm cell, where the chosen direction is usually
//! overridden by a uniformly random one. The storm passage is the only route
//! to the goal, so policies that undervalue stochastic-return states never
//! find it.
//!
//! Coordinates are `(col, row)` with row 0 at the bottom. Observations are
//! grid coordinates normalized to `[0, 1]^2`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Environment, StepInfo, StepResult, HORIZON};
use crate::{Error, Result};

/// Reward for an ordinary move (or a move blocked by the grid edge).
pub const STEP_REWARD: f64 = -1.0;
/// Reward for attempting to enter a fire cell (replaces the step reward).
pub const FIRE_REWARD: f64 = -3.0;
/// Reward for reaching the goal cell.
pub const GOAL_REWARD: f64 = 100.0;
/// Probability that the storm cell overrides the chosen direction.
pub const DEFAULT_OVERRIDE_PROB: f64 = 0.75;

/// The four moves, in the order used both by the action-interval mapping
/// and by storm override draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Right,
    Down,
    Left,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Right,
        Direction::Down,
        Direction::Left,
    ];

    fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (0, 1),
            Direction::Right => (1, 0),
            Direction::Down => (0, -1),
            Direction::Left => (-1, 0),
        }
    }
}

/// Maps a continuous action in `[-1, 1]` onto a direction by quartering the
/// interval: `[-1, -0.5) -> Up`, `[-0.5, 0) -> Right`, `[0, 0.5) -> Down`,
/// `[0.5, 1] -> Left`. Out-of-range values clamp; NaN is an error.
pub fn map_action(a: f64) -> Result<Direction> {
    if a.is_nan() {
        return Err(Error::NonFinite("grid action"));
    }
    let a = a.clamp(-1.0, 1.0);
    Ok(if a < -0.5 {
        Direction::Up
    } else if a < 0.0 {
        Direction::Right
    } else if a < 0.5 {
        Direction::Down
    } else {
        Direction::Left
    })
}

/// Static description of a grid: dimensions, start, goal, fire cells, and
/// the single storm cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    width: usize,
    height: usize,
    start: (usize, usize),
    goal: (usize, usize),
    storm: (usize, usize),
    fire: HashSet<(usize, usize)>,
}

impl GridLayout {
    /// The default 5x5 layout: start bottom-center, goal top-center, a fire
    /// wall across the middle row broken only by the storm cell.
    ///
    /// ```text
    ///   . . G . .
    ///   . . . . .
    ///   F F S F F
    ///   . . . . .
    ///   . . P . .
    /// ```
    pub fn default_5x5() -> Self {
        GridLayout {
            width: 5,
            height: 5,
            start: (2, 0),
            goal: (2, 4),
            storm: (2, 2),
            fire: [(0, 2), (1, 2), (3, 2), (4, 2)].into_iter().collect(),
        }
    }

    /// Parses a plain-text map. Each line is one row, listed top row first;
    /// `.` open, `F` fire, `S` storm, `P` start, `G` goal. Exactly one each
    /// of `P`, `G`, and `S` must appear.
    pub fn from_map_str(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.len() < 2 {
            return Err(Error::MapParse("map needs at least 2 rows".into()));
        }
        let width = rows[0].chars().count();
        if width < 2 {
            return Err(Error::MapParse("map needs at least 2 columns".into()));
        }
        let height = rows.len();

        let mut start = None;
        let mut goal = None;
        let mut storm = None;
        let mut fire = HashSet::new();
        for (i, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(Error::MapParse(format!(
                    "row {} has width {}, expected {width}",
                    i + 1,
                    line.chars().count()
                )));
            }
            let row = height - 1 - i;
            for (col, ch) in line.chars().enumerate() {
                let cell = (col, row);
                match ch {
                    '.' => {}
                    'F' => {
                        fire.insert(cell);
                    }
                    'S' => {
                        if storm.replace(cell).is_some() {
                            return Err(Error::MapParse("more than one storm cell".into()));
                        }
                    }
                    'P' => {
                        if start.replace(cell).is_some() {
                            return Err(Error::MapParse("more than one start cell".into()));
                        }
                    }
                    'G' => {
                        if goal.replace(cell).is_some() {
                            return Err(Error::MapParse("more than one goal cell".into()));
                        }
                    }
                    other => {
                        return Err(Error::MapParse(format!("unknown map character {other:?}")));
                    }
                }
            }
        }
        let start = start.ok_or_else(|| Error::MapParse("missing start cell P".into()))?;
        let goal = goal.ok_or_else(|| Error::MapParse("missing goal cell G".into()))?;
        let storm = storm.ok_or_else(|| Error::MapParse("missing storm cell S".into()))?;
        if start == goal {
            return Err(Error::MapParse("start and goal coincide".into()));
        }
        Ok(GridLayout {
            width,
            height,
            start,
            goal,
            storm,
            fire,
        })
    }

    pub fn from_map_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_map_str(&text)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    #[inline]
    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    #[inline]
    pub fn storm(&self) -> (usize, usize) {
        self.storm
    }

    #[inline]
    pub fn is_fire(&self, cell: (usize, usize)) -> bool {
        self.fire.contains(&cell)
    }

    #[inline]
    pub fn in_bounds(&self, col: isize, row: isize) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    fn observation(&self, cell: (usize, usize)) -> Vec<f64> {
        vec![
            cell.0 as f64 / (self.width - 1) as f64,
            cell.1 as f64 / (self.height - 1) as f64,
        ]
    }
}

impl fmt::Display for GridLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.height {
            let row = self.height - 1 - i;
            for col in 0..self.width {
                let cell = (col, row);
                let ch = if cell == self.start {
                    'P'
                } else if cell == self.goal {
                    'G'
                } else if cell == self.storm {
                    'S'
                } else if self.fire.contains(&cell) {
                    'F'
                } else {
                    '.'
                };
                write!(f, "{ch}")?;
            }
            if i + 1 < self.height {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Live grid-world episode state.
#[derive(Debug, Clone)]
pub struct GridWorld {
    layout: GridLayout,
    override_prob: f64,
    pos: (usize, usize),
    step_count: u64,
    finished: bool,
    rng: ChaCha8Rng,
}

impl GridWorld {
    pub fn new(layout: GridLayout) -> Self {
        Self::with_override_prob(layout, DEFAULT_OVERRIDE_PROB)
    }

    pub fn with_override_prob(layout: GridLayout, override_prob: f64) -> Self {
        let pos = layout.start();
        GridWorld {
            layout,
            override_prob,
            pos,
            step_count: 0,
            finished: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    #[inline]
    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    #[inline]
    pub fn pos(&self) -> (usize, usize) {
        self.pos
    }

    #[inline]
    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Steps with an already-mapped direction. On the storm cell one
    /// uniform draw decides whether the direction is overridden and, if so,
    /// a second draw picks the replacement uniformly over all four moves
    /// (possibly the intended one).
    pub fn step_direction(&mut self, intended: Direction) -> Result<StepResult> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        self.step_count += 1;

        let mut overridden = false;
        let mut dir = intended;
        if self.pos == self.layout.storm {
            if self.rng.gen_range(0.0..1.0) < self.override_prob {
                overridden = true;
                dir = Direction::ALL[self.rng.gen_range(0..4)];
            }
        }

        let (dc, dr) = dir.delta();
        let target_col = self.pos.0 as isize + dc;
        let target_row = self.pos.1 as isize + dr;

        let mut reward = STEP_REWARD;
        let mut done = false;
        if !self.layout.in_bounds(target_col, target_row) {
            // Blocked by the edge: stay put, ordinary step penalty.
        } else {
            let target = (target_col as usize, target_row as usize);
            if self.layout.is_fire(target) {
                reward = FIRE_REWARD;
            } else {
                self.pos = target;
                if target == self.layout.goal {
                    reward = GOAL_REWARD;
                    done = true;
                }
            }
        }

        let timeout = !done && self.step_count >= HORIZON;
        self.finished = done || timeout;
        Ok(StepResult {
            obs: self.layout.observation(self.pos),
            reward,
            done,
            timeout,
            info: StepInfo {
                cell: Some(self.pos),
                overridden,
            },
        })
    }
}

impl Environment for GridWorld {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.pos = self.layout.start();
        self.step_count = 0;
        self.finished = false;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.layout.observation(self.pos)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != 1 {
            return Err(Error::DimMismatch {
                what: "grid action",
                expected: 1,
                got: action.len(),
            });
        }
        let dir = map_action(action[0])?;
        self.step_direction(dir)
    }
}
