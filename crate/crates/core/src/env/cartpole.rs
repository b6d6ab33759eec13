//! Native CartPole-v0: pole balancing with Euler integration at dt = 0.02.
//!
//! Constants follow the canonical implementation and are pinned by the
//! trajectory fixture tests.

use rand::{Rng, RngCore};

use super::{DoneCause, EnvError, EnvState, Environment, StepResult, Task, TaskSpec};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_POLE_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_POLE_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

pub(super) fn sample_reset_state(rng: &mut dyn RngCore) -> [f64; 4] {
    let mut state = [0.0; 4];
    for v in &mut state {
        *v = rng.gen_range(-0.05..0.05);
    }
    state
}

/// One Euler step of the cart-pole dynamics. Action 1 pushes right.
/// Terminal when |x| or |theta| leaves the allowed band.
pub fn dynamics_step(state: &[f64; 4], action: usize) -> ([f64; 4], f64, bool) {
    let [x, x_dot, theta, theta_dot] = *state;
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let cos_theta = theta.cos();
    let sin_theta = theta.sin();

    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin_theta) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin_theta - cos_theta * temp)
        / (HALF_POLE_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_theta * cos_theta / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_theta / TOTAL_MASS;

    let next = [
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    ];
    let terminal = next[0] < -X_THRESHOLD
        || next[0] > X_THRESHOLD
        || next[2] < -THETA_THRESHOLD
        || next[2] > THETA_THRESHOLD;
    (next, 1.0, terminal)
}

#[derive(Debug, Clone)]
pub struct CartPoleEnv {
    spec: TaskSpec,
    state: [f64; 4],
    step_count: usize,
    started: bool,
    done: bool,
}

impl CartPoleEnv {
    pub fn new() -> CartPoleEnv {
        CartPoleEnv {
            spec: Task::CartPole.spec(),
            state: [0.0; 4],
            step_count: 0,
            started: false,
            done: false,
        }
    }

    /// Start an episode from a fixed internal state (fixture replay, tests).
    pub fn from_state(state: [f64; 4]) -> CartPoleEnv {
        CartPoleEnv { state, started: true, ..CartPoleEnv::new() }
    }
}

impl Default for CartPoleEnv {
    fn default() -> Self {
        CartPoleEnv::new()
    }
}

impl Environment for CartPoleEnv {
    fn task(&self) -> &TaskSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.state = sample_reset_state(rng);
        self.step_count = 0;
        self.started = true;
        self.done = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if action >= self.spec.n_actions {
            return Err(EnvError::InvalidAction { n_actions: self.spec.n_actions, got: action });
        }
        let (next, reward, terminal) = dynamics_step(&self.state, action);
        self.state = next;
        self.step_count += 1;
        let done_cause = if terminal {
            DoneCause::Terminal
        } else if self.step_count >= self.spec.max_episode_length {
            DoneCause::TimeLimit
        } else {
            DoneCause::None
        };
        self.done = done_cause != DoneCause::None;
        Ok(StepResult { next_obs: self.state.to_vec(), reward, done: self.done, done_cause })
    }

    fn state(&self) -> EnvState {
        EnvState { observation: self.state.to_vec(), step_count: self.step_count }
    }

    fn fresh(&self) -> Box<dyn Environment> {
        Box::new(CartPoleEnv::new())
    }
}
