//! Deterministic, seeded, desk-scale environments with a discrete-action
//! episodic interface.
//!
//! Two environments: a 5x5 grid with a goal corner, and the classic
//! cart-pole balancing task with pinned physics constants and Euler
//! integration. Observations stay roughly in `[-1, 1]` per component: grid
//! coordinates are divided by 4, and the cart-pole state is already at unit
//! scale inside its termination bounds.

use std::fmt;
use std::str::FromStr;

use rand::RngExt;

use crate::{seeded_rng, Error, Result};

/// Static shape of an environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_count: usize,
    pub max_episode_steps: usize,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Single-threaded per instance; instances are `Send` so parallel seeded
/// runs can each own one.
pub trait Environment: Send {
    fn spec(&self) -> EnvSpec;

    /// Deterministically reinitialize from `seed`; returns the initial
    /// observation and zeroes the step counter.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advance one step. Errors once the episode has finished.
    fn step(&mut self, action: usize) -> Result<Step>;
}

/// Environment registry for configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    GridWorld,
    CartPole,
}

impl EnvKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvKind::GridWorld => "gridworld",
            EnvKind::CartPole => "cartpole",
        }
    }

    pub fn build(&self) -> Box<dyn Environment> {
        match self {
            EnvKind::GridWorld => Box::new(GridWorld::new()),
            EnvKind::CartPole => Box::new(CartPole::new()),
        }
    }

    pub fn spec(&self) -> EnvSpec {
        match self {
            EnvKind::GridWorld => GridWorld::new().spec(),
            EnvKind::CartPole => CartPole::new().spec(),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gridworld" => Ok(EnvKind::GridWorld),
            "cartpole" => Ok(EnvKind::CartPole),
            other => Err(Error::InvalidConfig(format!(
                "unknown environment '{other}' (expected gridworld or cartpole)"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// GridWorld
// ---------------------------------------------------------------------------

const GRID_SIZE: usize = 5;
const GRID_GOAL: (usize, usize) = (4, 4);
const GRID_STEP_REWARD: f64 = -0.01;
const GRID_GOAL_REWARD: f64 = 1.0;
const GRID_MAX_STEPS: usize = 200;

/// 5x5 grid, start (0,0), goal (4,4). Actions up/down/left/right with walls
/// clamping; -0.01 per step, +1.0 on the goal step, truncation after 200
/// steps. Observation is `[row/4, col/4]`.
///
/// The shortest path is 8 moves, so the optimal episode return is
/// 7 * (-0.01) + 1.0 = 0.93.
pub struct GridWorld {
    row: usize,
    col: usize,
    steps: usize,
    done: bool,
}

impl GridWorld {
    pub fn new() -> Self {
        Self {
            row: 0,
            col: 0,
            steps: 0,
            done: true,
        }
    }

    fn observation(&self) -> Vec<f64> {
        let denom = (GRID_SIZE - 1) as f64;
        vec![self.row as f64 / denom, self.col as f64 / denom]
    }
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for GridWorld {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 2,
            action_count: 4,
            max_episode_steps: GRID_MAX_STEPS,
        }
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.row = 0;
        self.col = 0;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        assert!(action < 4, "action index out of range");
        match action {
            0 => self.row = self.row.saturating_sub(1),        // up
            1 => self.row = (self.row + 1).min(GRID_SIZE - 1), // down
            2 => self.col = self.col.saturating_sub(1),        // left
            _ => self.col = (self.col + 1).min(GRID_SIZE - 1), // right
        }
        self.steps += 1;
        let at_goal = (self.row, self.col) == GRID_GOAL;
        let reward = if at_goal {
            GRID_GOAL_REWARD
        } else {
            GRID_STEP_REWARD
        };
        self.done = at_goal || self.steps >= GRID_MAX_STEPS;
        Ok(Step {
            observation: self.observation(),
            reward,
            terminal: self.done,
        })
    }
}

// ---------------------------------------------------------------------------
// CartPole
// ---------------------------------------------------------------------------

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const POLE_HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * POLE_HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
/// 12 degrees in radians.
const THETA_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;
const CARTPOLE_MAX_STEPS: usize = 500;

/// Cart-pole balancing with the classic constants: gravity 9.8, cart mass
/// 1.0, pole mass 0.1, half-length 0.5, force +-10, Euler integration with
/// dt 0.02. Reward +1 per step; the episode ends when `|x| > 2.4` or
/// `|theta| > 12 deg`, truncating after 500 steps. Reset draws each state
/// component uniformly from `[-0.05, 0.05]`.
///
/// The observation is the raw state `[x, x_dot, theta, theta_dot]`: within
/// the termination bounds every component already sits roughly in `[-1, 1]`,
/// and rescaling the velocities was measured to slow learning badly.
pub struct CartPole {
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl CartPole {
    pub fn new() -> Self {
        Self {
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    /// Raw physics state `[x, x_dot, theta, theta_dot]`.
    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// One Euler step of the cart-pole dynamics under a horizontal force.
    pub fn euler_step(state: [f64; 4], force: f64) -> [f64; 4] {
        let [x, x_dot, theta, theta_dot] = state;
        let cos = theta.cos();
        let sin = theta.sin();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ]
    }

    fn observation(&self) -> Vec<f64> {
        self.state.to_vec()
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CartPole {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 4,
            action_count: 2,
            max_episode_steps: CARTPOLE_MAX_STEPS,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        for s in &mut self.state {
            *s = rng.random_range(-0.05..=0.05);
        }
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        assert!(action < 2, "action index out of range");
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        self.state = Self::euler_step(self.state, force);
        self.steps += 1;
        let fell = self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > THETA_THRESHOLD;
        self.done = fell || self.steps >= CARTPOLE_MAX_STEPS;
        Ok(Step {
            observation: self.observation(),
            reward: 1.0,
            terminal: self.done,
        })
    }
}
