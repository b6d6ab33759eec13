//! Native Acrobot-v1: two-link underactuated swing-up, fourth-order
//! Runge-Kutta integration at dt = 0.2, torque on the second joint only.

use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{DoneCause, EnvError, EnvState, Environment, StepResult, Task, TaskSpec};

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const GRAVITY: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

pub(super) fn sample_reset_state(rng: &mut dyn RngCore) -> [f64; 4] {
    let mut state = [0.0; 4];
    for v in &mut state {
        *v = rng.gen_range(-0.1..0.1);
    }
    state
}

/// Observation is `[cos t1, sin t1, cos t2, sin t2, dt1, dt2]`.
pub fn observation(state: &[f64; 4]) -> [f64; 6] {
    [state[0].cos(), state[0].sin(), state[1].cos(), state[1].sin(), state[2], state[3]]
}

fn wrap_angle(mut x: f64) -> f64 {
    while x > PI {
        x -= 2.0 * PI;
    }
    while x < -PI {
        x += 2.0 * PI;
    }
    x
}

/// Equations of motion with the torque carried as a fifth state component.
fn derivatives(s: &[f64; 5]) -> [f64; 5] {
    let torque = s[4];
    let theta1 = s[0];
    let theta2 = s[1];
    let dtheta1 = s[2];
    let dtheta2 = s[3];

    let d1 = LINK_MASS_1 * LINK_COM_1 * LINK_COM_1
        + LINK_MASS_2
            * (LINK_LENGTH_1 * LINK_LENGTH_1
                + LINK_COM_2 * LINK_COM_2
                + 2.0 * LINK_LENGTH_1 * LINK_COM_2 * theta2.cos())
        + LINK_MOI
        + LINK_MOI;
    let d2 = LINK_MASS_2 * (LINK_COM_2 * LINK_COM_2 + LINK_LENGTH_1 * LINK_COM_2 * theta2.cos())
        + LINK_MOI;
    let phi2 = LINK_MASS_2 * LINK_COM_2 * GRAVITY * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -LINK_MASS_2 * LINK_LENGTH_1 * LINK_COM_2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * LINK_MASS_2 * LINK_LENGTH_1 * LINK_COM_2 * dtheta2 * dtheta1 * theta2.sin()
        + (LINK_MASS_1 * LINK_COM_1 + LINK_MASS_2 * LINK_LENGTH_1)
            * GRAVITY
            * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1
        - LINK_MASS_2 * LINK_LENGTH_1 * LINK_COM_2 * dtheta1 * dtheta1 * theta2.sin()
        - phi2)
        / (LINK_MASS_2 * LINK_COM_2 * LINK_COM_2 + LINK_MOI - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2, 0.0]
}

fn rk4_step(y0: &[f64; 5]) -> [f64; 4] {
    let k1 = derivatives(y0);
    let mut y = *y0;
    for i in 0..5 {
        y[i] = y0[i] + DT / 2.0 * k1[i];
    }
    let k2 = derivatives(&y);
    for i in 0..5 {
        y[i] = y0[i] + DT / 2.0 * k2[i];
    }
    let k3 = derivatives(&y);
    for i in 0..5 {
        y[i] = y0[i] + DT * k3[i];
    }
    let k4 = derivatives(&y);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = y0[i] + DT / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn terminal_height_reached(state: &[f64; 4]) -> bool {
    -state[0].cos() - (state[1] + state[0]).cos() > 1.0
}

/// One environment step on the internal `[t1, t2, dt1, dt2]` state. Angles
/// are wrapped to [-pi, pi]; velocities are clipped to (+-4pi, +-9pi).
/// Reward is -1 per step and 0 once the terminal height is reached.
pub fn dynamics_step(state: &[f64; 4], action: usize) -> ([f64; 4], f64, bool) {
    let augmented = [state[0], state[1], state[2], state[3], TORQUES[action]];
    let mut next = rk4_step(&augmented);
    next[0] = wrap_angle(next[0]);
    next[1] = wrap_angle(next[1]);
    next[2] = next[2].clamp(-MAX_VEL_1, MAX_VEL_1);
    next[3] = next[3].clamp(-MAX_VEL_2, MAX_VEL_2);
    let terminal = terminal_height_reached(&next);
    let reward = if terminal { 0.0 } else { -1.0 };
    (next, reward, terminal)
}

#[derive(Debug, Clone)]
pub struct AcrobotEnv {
    spec: TaskSpec,
    state: [f64; 4],
    step_count: usize,
    started: bool,
    done: bool,
}

impl AcrobotEnv {
    pub fn new() -> AcrobotEnv {
        AcrobotEnv {
            spec: Task::Acrobot.spec(),
            state: [0.0; 4],
            step_count: 0,
            started: false,
            done: false,
        }
    }

    /// Start an episode from fixed joint angles and velocities.
    pub fn from_state(state: [f64; 4]) -> AcrobotEnv {
        AcrobotEnv { state, started: true, ..AcrobotEnv::new() }
    }
}

impl Default for AcrobotEnv {
    fn default() -> Self {
        AcrobotEnv::new()
    }
}

impl Environment for AcrobotEnv {
    fn task(&self) -> &TaskSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.state = sample_reset_state(rng);
        self.step_count = 0;
        self.started = true;
        self.done = false;
        observation(&self.state).to_vec()
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
        Ok(StepResult {
            next_obs: observation(&self.state).to_vec(),
            reward,
            done: self.done,
            done_cause,
        })
    }

    fn state(&self) -> EnvState {
        EnvState { observation: observation(&self.state).to_vec(), step_count: self.step_count }
    }

    fn fresh(&self) -> Box<dyn Environment> {
        Box::new(AcrobotEnv::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rest_state_with_zero_torque_stays_at_rest() {
        let (next, reward, terminal) = dynamics_step(&[0.0; 4], 1);
        for v in next {
            assert!(v.abs() < 1e-12);
        }
        assert_eq!(reward, -1.0);
        assert!(!terminal);
    }

    #[test]
    fn step_matches_reference_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut state = sample_reset_state(&mut rng);
        for k in 0..500 {
            let action = (rng.next_u32() % 3) as usize;
            let (ours, r_ours, t_ours) = dynamics_step(&state, action);
            let (theirs, r_ref, t_ref) = crate::oracle::acrobot_reference_step(&state, action);
            for i in 0..4 {
                assert!(
                    (ours[i] - theirs[i]).abs() < 1e-10,
                    "step {k} dim {i}: {} vs {}",
                    ours[i],
                    theirs[i]
                );
            }
            assert_eq!(r_ours, r_ref);
            assert_eq!(t_ours, t_ref);
            state = ours;
        }
    }

    #[test]
    fn zero_angles_observe_as_unit_cosines() {
        let obs = observation(&[0.0; 4]);
        assert_eq!(obs, [1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn reaching_the_height_is_terminal_with_zero_reward() {
        // Both links pointing straight up: -cos(pi) - cos(pi + pi... use
        // theta1 = pi, theta2 = 0 -> height = -(-1) - (-1) = 2 > 1.
        // Start just below the terminal configuration with no velocity; no
        // single step from here stays above, so instead check the predicate
        // through a crafted state via from_state and a zero-torque step from
        // a configuration whose successor is terminal.
        let mut env = AcrobotEnv::from_state([PI - 1e-3, 0.0, 0.0, 0.0]);
        let step = env.step(1).unwrap();
        assert!(step.done);
        assert_eq!(step.done_cause, DoneCause::Terminal);
        assert_eq!(step.reward, 0.0);
        assert!(matches!(env.step(1), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn velocities_stay_clipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = [0.5, -0.5, MAX_VEL_1, MAX_VEL_2];
        for _ in 0..200 {
            let action = (rng.next_u32() % 3) as usize;
            let (next, _, _) = dynamics_step(&state, action);
            assert!(next[2].abs() <= MAX_VEL_1);
            assert!(next[3].abs() <= MAX_VEL_2);
            state = next;
        }
    }

    #[test]
    fn reset_draws_within_bounds() {
        let mut env = AcrobotEnv::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            env.reset(&mut rng);
            let st = env.state();
            assert_eq!(st.observation.len(), 6);
        }
    }
}

#[cfg(test)]
mod reset_distribution {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reset_statistics_match_the_declared_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let n = 100_000;
        let mut sums = [0.0f64; 4];
        for _ in 0..n {
            let s = sample_reset_state(&mut rng);
            for d in 0..4 {
                assert!((-0.1..0.1).contains(&s[d]));
                sums[d] += s[d];
            }
        }
        let sigma = 0.2 / 12.0f64.sqrt();
        let tol = 3.0 * sigma / (n as f64).sqrt();
        for (d, sum) in sums.iter().enumerate() {
            let mean = sum / n as f64;
            assert!(mean.abs() < tol, "dim {d}: mean {mean} outside band {tol}");
        }
    }

    #[test]
    fn returns_stay_in_the_task_band() {
        // Acrobot pays -1 per step and 0 on success: returns in [-500, -1].
        let mut env = AcrobotEnv::new();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            env.reset(&mut rng);
            let mut ret = 0.0;
            loop {
                let step = env.step((rng.next_u32() % 3) as usize).unwrap();
                ret += step.reward;
                if step.done {
                    break;
                }
            }
            assert!((-500.0..=-1.0).contains(&ret), "return {ret}");
        }
    }
}
