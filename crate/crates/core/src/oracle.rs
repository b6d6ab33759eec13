//! Independent reference implementations used by the verification suite.
//!
//! Everything in this module is deliberately written as plain, unoptimized
//! loops that do not call into the production code paths they check:
//! a naive matrix-multiply forward pass, central finite differences for
//! gradients, line-by-line transcriptions of the canonical CartPole-v0 and
//! Acrobot-v1 dynamics, and tabular value iteration for small MDPs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mlp::{Activation, FlatParams, GradientBuffer, MlpArchitecture};

/// Naive dense forward pass: explicit per-layer loops over a structured
/// (weights, biases) decomposition of the flat vector.
pub fn naive_forward(arch: &MlpArchitecture, params: &FlatParams, input: &[f64]) -> Vec<f64> {
    let layers = params.layers(arch);
    let slopes = params.prelu_slopes(arch);
    let n_layers = layers.len();
    let mut cur = input.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        let mut next = vec![0.0; layer.fan_out];
        for o in 0..layer.fan_out {
            let mut acc = layer.biases[o];
            for i in 0..layer.fan_in {
                acc += layer.weights[o * layer.fan_in + i] * cur[i];
            }
            next[o] = acc;
        }
        if l + 1 < n_layers {
            for v in next.iter_mut() {
                *v = match arch.activation {
                    Activation::Tanh => v.tanh(),
                    Activation::ReLU => v.max(0.0),
                    Activation::LeakyReLU => {
                        if *v < 0.0 {
                            0.01 * *v
                        } else {
                            *v
                        }
                    }
                    Activation::PReLU => {
                        if *v < 0.0 {
                            slopes[l] * *v
                        } else {
                            *v
                        }
                    }
                };
            }
        }
        cur = next;
    }
    cur
}

/// Max relative error between analytic parameter gradients and central finite
/// differences on `n_coords` randomly chosen coordinates (h = 1e-6).
///
/// Coordinates where both gradients are below 1e-4 in magnitude carry no
/// signal at finite-difference resolution; those are required to agree to
/// 1e-8 absolutely instead of entering the relative maximum.
pub fn gradient_check(arch: &MlpArchitecture, seed: u64, n_coords: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = arch.init_params(&mut rng);
    let input: Vec<f64> = (0..arch.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let upstream: Vec<f64> = (0..arch.output_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let trace = arch.forward_traced(&params, &input).expect("forward");
    let mut grads = GradientBuffer::for_arch(arch);
    arch.backward(&params, &trace, &upstream, &mut grads).expect("backward");

    let scalar = |p: &FlatParams| -> f64 {
        let out = naive_forward(arch, p, &input);
        out.iter().zip(upstream.iter()).map(|(o, u)| o * u).sum()
    };

    let h = 1e-6;
    let mut max_rel = 0.0_f64;
    for _ in 0..n_coords {
        let idx = rng.gen_range(0..params.len());
        let mut plus = params.clone();
        plus.as_mut_slice()[idx] += h;
        let mut minus = params.clone();
        minus.as_mut_slice()[idx] -= h;
        let fd = (scalar(&plus) - scalar(&minus)) / (2.0 * h);
        let analytic = grads.as_slice()[idx];
        let mag = analytic.abs().max(fd.abs());
        if mag < 1e-4 {
            assert!(
                (analytic - fd).abs() < 1e-8,
                "near-zero gradient disagrees at coord {idx}: analytic {analytic}, fd {fd}"
            );
        } else {
            max_rel = max_rel.max((analytic - fd).abs() / mag);
        }
    }
    max_rel
}

/// Same check for the gradient with respect to the network input.
pub fn input_gradient_check(arch: &MlpArchitecture, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = arch.init_params(&mut rng);
    let input: Vec<f64> = (0..arch.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let upstream: Vec<f64> = (0..arch.output_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let trace = arch.forward_traced(&params, &input).expect("forward");
    let mut grads = GradientBuffer::for_arch(arch);
    let d_input = arch.backward(&params, &trace, &upstream, &mut grads).expect("backward");

    let scalar = |x: &[f64]| -> f64 {
        let out = naive_forward(arch, &params, x);
        out.iter().zip(upstream.iter()).map(|(o, u)| o * u).sum()
    };

    let h = 1e-6;
    let mut max_rel = 0.0_f64;
    for idx in 0..input.len() {
        let mut plus = input.clone();
        plus[idx] += h;
        let mut minus = input.clone();
        minus[idx] -= h;
        let fd = (scalar(&plus) - scalar(&minus)) / (2.0 * h);
        let analytic = d_input[idx];
        let mag = analytic.abs().max(fd.abs());
        if mag < 1e-4 {
            assert!((analytic - fd).abs() < 1e-8);
        } else {
            max_rel = max_rel.max((analytic - fd).abs() / mag);
        }
    }
    max_rel
}

/// Central difference of a scalar function of one variable.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

// ---------------------------------------------------------------------------
// Classic-control dynamics transcriptions.
//
// These follow the canonical OpenAI Gym source line by line, keeping the
// original variable names, and are the generators for the trajectory fixture
// files under tests/fixtures/.
// ---------------------------------------------------------------------------

/// One CartPole-v0 Euler step. State is `[x, x_dot, theta, theta_dot]`;
/// action 1 pushes right, 0 pushes left. Returns (next_state, reward,
/// terminal) where terminal is the threshold predicate on the new state.
pub fn cartpole_reference_step(state: &[f64; 4], action: usize) -> ([f64; 4], f64, bool) {
    let gravity = 9.8;
    let masscart = 1.0;
    let masspole = 0.1;
    let total_mass = masspole + masscart;
    let length = 0.5; // half the pole's length
    let polemass_length = masspole * length;
    let force_mag = 10.0;
    let tau = 0.02;
    let theta_threshold_radians = 12.0 * 2.0 * PI / 360.0;
    let x_threshold = 2.4;

    let (mut x, mut x_dot, mut theta, mut theta_dot) = (state[0], state[1], state[2], state[3]);
    let force = if action == 1 { force_mag } else { -force_mag };
    let costheta = theta.cos();
    let sintheta = theta.sin();

    let temp = (force + polemass_length * theta_dot * theta_dot * sintheta) / total_mass;
    let thetaacc = (gravity * sintheta - costheta * temp)
        / (length * (4.0 / 3.0 - masspole * costheta * costheta / total_mass));
    let xacc = temp - polemass_length * thetaacc * costheta / total_mass;

    x += tau * x_dot;
    x_dot += tau * xacc;
    theta += tau * theta_dot;
    theta_dot += tau * thetaacc;

    let terminal =
        x < -x_threshold || x > x_threshold || theta < -theta_threshold_radians || theta > theta_threshold_radians;
    ([x, x_dot, theta, theta_dot], 1.0, terminal)
}

fn wrap(mut x: f64, m: f64, big_m: f64) -> f64 {
    let diff = big_m - m;
    while x > big_m {
        x -= diff;
    }
    while x < m {
        x += diff;
    }
    x
}

fn bound(x: f64, m: f64, big_m: f64) -> f64 {
    x.max(m).min(big_m)
}

fn acrobot_dsdt(s_augmented: &[f64; 5]) -> [f64; 5] {
    let m1 = 1.0;
    let m2 = 1.0;
    let l1 = 1.0;
    let lc1 = 0.5;
    let lc2 = 0.5;
    let i1 = 1.0;
    let i2 = 1.0;
    let g = 9.8;
    let a = s_augmented[4];
    let theta1 = s_augmented[0];
    let theta2 = s_augmented[1];
    let dtheta1 = s_augmented[2];
    let dtheta2 = s_augmented[3];

    let d1 =
        m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
        + phi2;
    // "book" variant of the second-link acceleration
    let ddtheta2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2, 0.0]
}

/// One Acrobot-v1 step: single fourth-order Runge-Kutta integration of the
/// two-link dynamics over dt = 0.2 with the torque appended to the state.
/// State is `[theta1, theta2, dtheta1, dtheta2]`, action in {0, 1, 2} maps to
/// torque {-1, 0, +1}. Returns (next_state, reward, terminal).
pub fn acrobot_reference_step(state: &[f64; 4], action: usize) -> ([f64; 4], f64, bool) {
    let dt = 0.2;
    let max_vel_1 = 4.0 * PI;
    let max_vel_2 = 9.0 * PI;
    let torque = [-1.0, 0.0, 1.0][action];

    let y0 = [state[0], state[1], state[2], state[3], torque];
    let k1 = acrobot_dsdt(&y0);
    let mut y = y0;
    for i in 0..5 {
        y[i] = y0[i] + dt / 2.0 * k1[i];
    }
    let k2 = acrobot_dsdt(&y);
    for i in 0..5 {
        y[i] = y0[i] + dt / 2.0 * k2[i];
    }
    let k3 = acrobot_dsdt(&y);
    for i in 0..5 {
        y[i] = y0[i] + dt * k3[i];
    }
    let k4 = acrobot_dsdt(&y);
    let mut ns = [0.0; 4];
    for i in 0..4 {
        ns[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }

    ns[0] = wrap(ns[0], -PI, PI);
    ns[1] = wrap(ns[1], -PI, PI);
    ns[2] = bound(ns[2], -max_vel_1, max_vel_1);
    ns[3] = bound(ns[3], -max_vel_2, max_vel_2);

    let terminal = -ns[0].cos() - (ns[1] + ns[0]).cos() > 1.0;
    let reward = if terminal { 0.0 } else { -1.0 };
    (ns, reward, terminal)
}

/// Observation mapping for Acrobot: `[cos t1, sin t1, cos t2, sin t2, dt1, dt2]`.
pub fn acrobot_observation(state: &[f64; 4]) -> [f64; 6] {
    [state[0].cos(), state[0].sin(), state[1].cos(), state[1].sin(), state[2], state[3]]
}

// ---------------------------------------------------------------------------
// Tabular value iteration.
// ---------------------------------------------------------------------------

/// Exact Q-values of a small deterministic MDP, by value iteration to a
/// sup-norm tolerance of 1e-13.
///
/// `transition(s, a)` returns the successor state, `reward(s, a)` the
/// immediate reward.
pub fn value_iteration(
    n_states: usize,
    n_actions: usize,
    transition: impl Fn(usize, usize) -> usize,
    reward: impl Fn(usize, usize) -> f64,
    gamma: f64,
) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; n_actions]; n_states];
    loop {
        let mut next = vec![vec![0.0; n_actions]; n_states];
        let mut delta = 0.0_f64;
        for s in 0..n_states {
            for a in 0..n_actions {
                let sp = transition(s, a);
                let vmax = q[sp].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                next[s][a] = reward(s, a) + gamma * vmax;
                delta = delta.max((next[s][a] - q[s][a]).abs());
            }
        }
        q = next;
        if delta < 1e-13 {
            return q;
        }
    }
}
