//! Mountain Car with a 2000-step episode cutoff.
//!
//! Dynamics follow the classic Gym formulation: a force of `(action - 1) * 0.001`
//! plus a gravity term `cos(3 * position) * -0.0025`, velocity clipped to
//! `[-0.07, 0.07]`, position clipped to `[-1.2, 0.6]`, and an inelastic left wall.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const GOAL_VELOCITY: f64 = 0.0;
pub const FORCE: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;
pub const START_LOW: f64 = -0.6;
pub const START_HIGH: f64 = -0.4;
/// Episodes are cut off after this many steps.
pub const MAX_EPISODE_STEPS: u32 = 2000;
pub const STEP_REWARD: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("invalid action {0}, expected 0, 1 or 2")]
    InvalidAction(usize),
    #[error("episode already finished, call reset first")]
    EpisodeFinished,
}

/// The three discrete accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left = 0,
    Coast = 1,
    Right = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Left, Action::Coast, Action::Right];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }
}

impl TryFrom<usize> for Action {
    type Error = EnvError;

    fn try_from(value: usize) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Action::Left),
            1 => Ok(Action::Coast),
            2 => Ok(Action::Right),
            other => Err(EnvError::InvalidAction(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub position: f64,
    pub velocity: f64,
}

impl CarState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }

    pub fn in_bounds(&self) -> bool {
        (MIN_POSITION..=MAX_POSITION).contains(&self.position)
            && (-MAX_SPEED..=MAX_SPEED).contains(&self.velocity)
    }

    pub fn as_input(&self) -> [f64; 2] {
        [self.position, self.velocity]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: CarState,
    pub reward: f64,
    /// Goal reached.
    pub terminated: bool,
    /// Step cutoff hit without reaching the goal.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// One application of the dynamics, without episode bookkeeping.
pub fn transition(state: CarState, action: Action) -> CarState {
    let push = (action.index() as f64 - 1.0) * FORCE;
    let mut velocity = state.velocity + push + (3.0 * state.position).cos() * (-GRAVITY);
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    let position = (state.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    CarState { position, velocity }
}

pub fn is_goal(state: &CarState) -> bool {
    state.position >= GOAL_POSITION && state.velocity >= GOAL_VELOCITY
}

/// Initial state for an episode: position uniform on `[-0.6, -0.4)`, zero velocity.
pub fn initial_state(episode_seed: u64) -> CarState {
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
    let u: f64 = rng.random();
    CarState {
        position: START_LOW + (START_HIGH - START_LOW) * u,
        velocity: 0.0,
    }
}

#[derive(Debug, Clone)]
pub struct MountainCar {
    state: CarState,
    steps: u32,
    done: bool,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl MountainCar {
    pub fn new() -> Self {
        Self {
            state: initial_state(0),
            steps: 0,
            done: true,
        }
    }

    pub fn reset(&mut self, episode_seed: u64) -> CarState {
        self.state = initial_state(episode_seed);
        self.steps = 0;
        self.done = false;
        self.state
    }

    pub fn state(&self) -> CarState {
        self.state
    }

    /// Steps taken in the current episode.
    pub fn episode_steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Places the car at an arbitrary in-bounds state, starting a fresh episode.
    pub fn set_state(&mut self, state: CarState) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let next = transition(self.state, action);
        self.steps += 1;
        let terminated = is_goal(&next);
        let truncated = !terminated && self.steps >= MAX_EPISODE_STEPS;
        self.state = next;
        self.done = terminated || truncated;
        Ok(StepResult {
            next_state: next,
            reward: STEP_REWARD,
            terminated,
            truncated,
        })
    }
}
