//! A two-state diagnostic MDP with a known optimal policy, used to check
//! agent implementations against exact value iteration.
//!
//! States are observed one-hot. Action 0 stays, action 1 toggles the state.
//! Staying in state 1 pays 1.0; everything else pays 0. The optimal greedy
//! policy is therefore "toggle in state 0, stay in state 1".

use rand::{Rng, RngCore};

use super::{DoneCause, EnvError, EnvState, Environment, StepResult, TaskSpec};

#[derive(Debug, Clone)]
pub struct TwoStateMdp {
    spec: TaskSpec,
    state: usize,
    step_count: usize,
    started: bool,
    done: bool,
}

impl TwoStateMdp {
    pub fn new() -> TwoStateMdp {
        TwoStateMdp {
            spec: TaskSpec {
                name: "twostate".into(),
                obs_dim: 2,
                n_actions: 2,
                max_episode_length: 20,
                solved_reward: 18.0,
            },
            state: 0,
            step_count: 0,
            started: false,
            done: false,
        }
    }

    pub fn transition(state: usize, action: usize) -> usize {
        if action == 0 {
            state
        } else {
            1 - state
        }
    }

    pub fn reward(state: usize, action: usize) -> f64 {
        if state == 1 && action == 0 {
            1.0
        } else {
            0.0
        }
    }

    fn observe(state: usize) -> Vec<f64> {
        let mut obs = vec![0.0; 2];
        obs[state] = 1.0;
        obs
    }
}

impl Default for TwoStateMdp {
    fn default() -> Self {
        TwoStateMdp::new()
    }
}

impl Environment for TwoStateMdp {
    fn task(&self) -> &TaskSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.state = rng.gen_range(0..2);
        self.step_count = 0;
        self.started = true;
        self.done = false;
        Self::observe(self.state)
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if action >= 2 {
            return Err(EnvError::InvalidAction { n_actions: 2, got: action });
        }
        let reward = Self::reward(self.state, action);
        self.state = Self::transition(self.state, action);
        self.step_count += 1;
        let done_cause = if self.step_count >= self.spec.max_episode_length {
            DoneCause::TimeLimit
        } else {
            DoneCause::None
        };
        self.done = done_cause != DoneCause::None;
        Ok(StepResult {
            next_obs: Self::observe(self.state),
            reward,
            done: self.done,
            done_cause,
        })
    }

    fn state(&self) -> EnvState {
        EnvState { observation: Self::observe(self.state), step_count: self.step_count }
    }

    fn fresh(&self) -> Box<dyn Environment> {
        Box::new(TwoStateMdp::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::value_iteration;

    #[test]
    fn value_iteration_prefers_reaching_and_keeping_state_one() {
        let q = value_iteration(2, 2, TwoStateMdp::transition, TwoStateMdp::reward, 0.9);
        // Closed form: V(1) = 1/(1-g), V(0) = g V(1).
        assert!((q[1][0] - 10.0).abs() < 1e-9);
        assert!((q[0][1] - 9.0).abs() < 1e-9);
        assert!(q[0][1] > q[0][0]);
        assert!(q[1][0] > q[1][1]);
    }

    #[test]
    fn episodes_are_time_limited_only() {
        let mut env = TwoStateMdp::new();
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        env.reset(&mut rng);
        let mut steps = 0;
        loop {
            let r = env.step(1).unwrap();
            steps += 1;
            if r.done {
                assert_eq!(r.done_cause, DoneCause::TimeLimit);
                break;
            }
        }
        assert_eq!(steps, 20);
    }
}
