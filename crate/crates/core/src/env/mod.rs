//! Episodic environments: the two native classic-control tasks plus the
//! common interface shared with synthetic environments.

mod acrobot;
mod cartpole;
mod twostate;

pub use acrobot::{dynamics_step as acrobot_dynamics, observation as acrobot_observe, AcrobotEnv};
pub use cartpole::{dynamics_step as cartpole_dynamics, CartPoleEnv};
pub use twostate::TwoStateMdp;

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Static description of a target task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub max_episode_length: usize,
    pub solved_reward: f64,
}

/// The supported target tasks, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    CartPole,
    Acrobot,
}

impl Task {
    pub fn from_name(name: &str) -> Option<Task> {
        match name {
            "cartpole" => Some(Task::CartPole),
            "acrobot" => Some(Task::Acrobot),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::CartPole => "cartpole",
            Task::Acrobot => "acrobot",
        }
    }

    pub fn spec(&self) -> TaskSpec {
        match self {
            Task::CartPole => TaskSpec {
                name: "cartpole".into(),
                obs_dim: 4,
                n_actions: 2,
                max_episode_length: 200,
                solved_reward: 195.0,
            },
            Task::Acrobot => TaskSpec {
                name: "acrobot".into(),
                obs_dim: 6,
                n_actions: 3,
                max_episode_length: 500,
                solved_reward: -100.0,
            },
        }
    }

    pub fn make_env(&self) -> Box<dyn Environment> {
        match self {
            Task::CartPole => Box::new(CartPoleEnv::new()),
            Task::Acrobot => Box::new(AcrobotEnv::new()),
        }
    }

    /// Draw an initial internal state from the task's reset distribution.
    /// Synthetic environments reuse this as their episode initializer.
    pub fn sample_reset_observation(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self {
            Task::CartPole => cartpole::sample_reset_state(rng).to_vec(),
            Task::Acrobot => {
                let state = acrobot::sample_reset_state(rng);
                acrobot::observation(&state).to_vec()
            }
        }
    }
}

/// Why an episode ended, if it did. TimeLimit is distinguished from physical
/// termination because the TD bootstrap must not be cut off on TimeLimit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DoneCause {
    None,
    Terminal,
    TimeLimit,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub done_cause: DoneCause,
}

/// Observation plus episode progress.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub step_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvError {
    /// `step` was called on a finished episode.
    EpisodeDone,
    /// `step` was called before the first `reset`.
    NotReset,
    InvalidAction { n_actions: usize, got: usize },
    ObsDim { expected: usize, got: usize },
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::EpisodeDone => write!(f, "step called after the episode finished"),
            EnvError::NotReset => write!(f, "step called before reset"),
            EnvError::InvalidAction { n_actions, got } => {
                write!(f, "action {got} out of range (n_actions = {n_actions})")
            }
            EnvError::ObsDim { expected, got } => {
                write!(f, "observation has length {got}, expected {expected}")
            }
        }
    }
}

impl std::error::Error for EnvError {}

/// Common episodic interface for real and synthetic environments.
///
/// Instances are single-owner: one environment per worker, no internal
/// locking. `reset` starts a new episode and may be called at any time.
pub trait Environment: Send {
    fn task(&self) -> &TaskSpec;

    /// Synthetic environments run fixed-length episodes and use the
    /// convergence stop rule instead of the solved-reward rule.
    fn is_synthetic(&self) -> bool {
        false
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;

    fn state(&self) -> EnvState;

    /// A new, unstarted instance of the same environment.
    fn fresh(&self) -> Box<dyn Environment>;
}

/// Sum of rewards over an episode.
pub fn cumulative_reward(episode: &[StepResult]) -> f64 {
    episode.iter().map(|r| r.reward).sum()
}
