//! Inner-loop training with early stopping, and greedy evaluation on the
//! real task.
//!
//! Synthetic-environment training stops once the cumulative training rewards
//! converge (their signal says nothing about real performance, so only
//! convergence is observable). Real-environment training stops once the mean
//! of the last `d` greedy test returns crosses the task's solved threshold.

use rand::RngCore;

use crate::agents::{ActMode, Agent, Transition};
use crate::env::{DoneCause, EnvError, Environment};

pub const DEFAULT_TEST_EPISODES: usize = 10;

/// Convergence window parameters: `d` episodes per window, relative
/// difference threshold `c_diff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopHeuristic {
    pub d: usize,
    pub c_diff: f64,
}

impl Default for StopHeuristic {
    fn default() -> Self {
        StopHeuristic { d: 10, c_diff: 0.01 }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Convergence check on training returns: compare the mean of the last `d`
/// returns against the mean of the `d` returns immediately preceding them
/// (non-overlapping windows). Inactive until 2d returns exist.
///
/// Near-zero previous-window means would blow up the relative difference, so
/// both windows are instead required to be near zero in that case.
pub fn se_stop_check(returns: &[f64], h: &StopHeuristic) -> bool {
    let k = returns.len();
    if h.d == 0 || k < 2 * h.d {
        return false;
    }
    let mean_last = mean(&returns[k - h.d..]);
    let mean_prev = mean(&returns[k - 2 * h.d..k - h.d]);
    if mean_prev.abs() < 1e-8 {
        return mean_last.abs() < 1e-8;
    }
    (mean_last - mean_prev).abs() / mean_prev.abs() <= h.c_diff
}

/// Solved check on real-environment test returns: the mean of the last `d`
/// returns must reach the task's solved reward.
pub fn real_stop_check(test_returns: &[f64], solved_reward: f64, d: usize) -> bool {
    if d == 0 || test_returns.len() < d {
        return false;
    }
    mean(&test_returns[test_returns.len() - d..]) >= solved_reward
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCause {
    /// Training returns converged (synthetic environments).
    Converged,
    /// Test returns reached the solved threshold (real environments).
    Solved,
    MaxEpisodes,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub max_episodes: usize,
    /// `None` disables early stopping entirely.
    pub stop: Option<StopHeuristic>,
    /// Record every training transition into the report (histogram studies).
    pub log_transitions: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { max_episodes: 1000, stop: Some(StopHeuristic::default()), log_transitions: false }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub episodes_used: usize,
    /// Training environment steps, exactly the sum of episode lengths.
    pub env_steps_used: u64,
    /// Steps spent in greedy test episodes during real-environment training;
    /// kept separate so step comparisons between setups stay fair.
    pub eval_steps_used: u64,
    pub stop_cause: StopCause,
    /// Cumulative reward of each training episode.
    pub returns: Vec<f64>,
    /// Greedy test returns (one per training episode on real environments).
    pub test_returns: Vec<f64>,
    pub transitions: Vec<Transition>,
}

fn greedy_episode(
    agent: &dyn Agent,
    env: &mut dyn Environment,
    rng: &mut dyn RngCore,
    mut log: Option<&mut Vec<Transition>>,
) -> Result<(f64, u64), EnvError> {
    let mut obs = env.reset(rng);
    let mut ret = 0.0;
    let mut steps = 0u64;
    loop {
        let chosen = agent.act(&obs, ActMode::Greedy, rng);
        let step = env.step(chosen.action)?;
        ret += step.reward;
        steps += 1;
        if let Some(out) = log.as_deref_mut() {
            out.push(Transition {
                state: obs.clone(),
                action: chosen.action,
                reward: step.reward,
                next_state: step.next_obs.clone(),
                terminal: step.done_cause == DoneCause::Terminal,
            });
        }
        obs = step.next_obs;
        if step.done {
            return Ok((ret, steps));
        }
    }
}

/// Train a freshly initialized agent on `env` for up to
/// `opts.max_episodes` episodes, one gradient step per environment step.
pub fn train_agent(
    agent: &mut dyn Agent,
    env: &mut dyn Environment,
    opts: &TrainOptions,
    rng: &mut dyn RngCore,
) -> Result<TrainReport, EnvError> {
    let synthetic = env.is_synthetic();
    let mut test_env = if !synthetic && opts.stop.is_some() { Some(env.fresh()) } else { None };

    let mut report = TrainReport {
        episodes_used: 0,
        env_steps_used: 0,
        eval_steps_used: 0,
        stop_cause: StopCause::MaxEpisodes,
        returns: Vec::new(),
        test_returns: Vec::new(),
        transitions: Vec::new(),
    };

    for episode in 0..opts.max_episodes {
        agent.begin_episode(episode);
        let mut obs = env.reset(rng);
        let mut ep_return = 0.0;
        loop {
            let chosen = agent.act(&obs, ActMode::Explore, rng);
            let step = env.step(chosen.action)?;
            let transition = Transition {
                state: obs,
                action: chosen.action,
                reward: step.reward,
                next_state: step.next_obs.clone(),
                terminal: step.done_cause == DoneCause::Terminal,
            };
            if opts.log_transitions {
                report.transitions.push(transition.clone());
            }
            agent.observe(transition, &chosen);
            agent.train_step(rng);
            report.env_steps_used += 1;
            ep_return += step.reward;
            obs = step.next_obs;
            if step.done {
                break;
            }
        }
        report.returns.push(ep_return);
        report.episodes_used = episode + 1;

        if let Some(h) = &opts.stop {
            if synthetic {
                if se_stop_check(&report.returns, h) {
                    report.stop_cause = StopCause::Converged;
                    break;
                }
            } else {
                let test_env = test_env.as_mut().expect("test env exists for real training");
                let (ret, steps) = greedy_episode(agent, test_env.as_mut(), rng, None)?;
                report.eval_steps_used += steps;
                report.test_returns.push(ret);
                if real_stop_check(&report.test_returns, env.task().solved_reward, h.d) {
                    report.stop_cause = StopCause::Solved;
                    break;
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub steps: u64,
}

/// Mean cumulative reward over `n_test` greedy episodes. Takes the agent by
/// shared reference: evaluation cannot mutate parameters.
pub fn evaluate_agent(
    agent: &dyn Agent,
    env: &mut dyn Environment,
    n_test: usize,
    rng: &mut dyn RngCore,
) -> Result<Evaluation, EnvError> {
    evaluate_agent_logged(agent, env, n_test, rng, None)
}

/// As `evaluate_agent`, optionally recording every (s, a, r, s') tuple.
pub fn evaluate_agent_logged(
    agent: &dyn Agent,
    env: &mut dyn Environment,
    n_test: usize,
    rng: &mut dyn RngCore,
    mut log: Option<&mut Vec<Transition>>,
) -> Result<Evaluation, EnvError> {
    let mut returns = Vec::with_capacity(n_test);
    let mut steps = 0u64;
    for _ in 0..n_test {
        let (ret, ep_steps) = greedy_episode(agent, env, rng, log.as_deref_mut())?;
        returns.push(ret);
        steps += ep_steps;
    }
    let mean = mean(&returns);
    Ok(Evaluation { returns, mean, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentConfig, AgentKind, ChosenAction, DqnAgent};
    use crate::env::{CartPoleEnv, EnvState, StepResult, Task, TaskSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_returns_trip_the_convergence_check() {
        let h = StopHeuristic::default();
        let returns = vec![100.0; 20];
        assert!(se_stop_check(&returns, &h));
    }

    #[test]
    fn convergence_boundary_cases() {
        let h = StopHeuristic::default();
        let mut returns = vec![100.0; 10];
        returns.extend(vec![101.0; 10]);
        assert!(se_stop_check(&returns, &h), "ratio exactly 0.01 stops");

        let mut returns = vec![100.0; 10];
        returns.extend(vec![110.0; 10]);
        assert!(!se_stop_check(&returns, &h), "ratio 0.10 continues");
    }

    #[test]
    fn convergence_inactive_before_two_windows() {
        let h = StopHeuristic::default();
        assert!(!se_stop_check(&[5.0; 19], &h));
        assert!(se_stop_check(&[5.0; 20], &h));
    }

    #[test]
    fn zero_returns_hit_the_denominator_guard() {
        let h = StopHeuristic::default();
        assert!(se_stop_check(&[0.0; 20], &h));
        // previous window zero, last window clearly nonzero: keep training
        let mut returns = vec![0.0; 10];
        returns.extend(vec![5.0; 10]);
        assert!(!se_stop_check(&returns, &h));
    }

    #[test]
    fn solved_check_uses_last_window_mean() {
        assert!(real_stop_check(&[200.0; 10], 195.0, 10));
        assert!(!real_stop_check(&[194.0; 10], 195.0, 10));
        assert!(real_stop_check(&[-95.0; 10], -100.0, 10));
        assert!(!real_stop_check(&[200.0; 9], 195.0, 10), "needs d returns");
    }

    /// Fixed-length environment that always pays zero: the degenerate
    /// synthetic case where training returns converge immediately.
    struct ZeroEnv {
        spec: TaskSpec,
        steps: usize,
    }

    impl ZeroEnv {
        fn new() -> ZeroEnv {
            ZeroEnv { spec: Task::CartPole.spec(), steps: 0 }
        }
    }

    impl crate::env::Environment for ZeroEnv {
        fn task(&self) -> &TaskSpec {
            &self.spec
        }
        fn is_synthetic(&self) -> bool {
            true
        }
        fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
            self.steps = 0;
            vec![0.0; 4]
        }
        fn step(&mut self, _action: usize) -> Result<StepResult, EnvError> {
            self.steps += 1;
            let done = self.steps >= 5;
            Ok(StepResult {
                next_obs: vec![0.0; 4],
                reward: 0.0,
                done,
                done_cause: if done { DoneCause::TimeLimit } else { DoneCause::None },
            })
        }
        fn state(&self) -> EnvState {
            EnvState { observation: vec![0.0; 4], step_count: self.steps }
        }
        fn fresh(&self) -> Box<dyn Environment> {
            Box::new(ZeroEnv::new())
        }
    }

    fn tiny_dqn() -> DqnAgent {
        let mut cfg = AgentConfig::defaults(AgentKind::Ddqn);
        cfg.hidden_size = 4;
        cfg.hidden_layers = 1;
        cfg.batch_size = 4;
        cfg.initial_episodes = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        DqnAgent::new(cfg, &Task::CartPole.spec(), false, &mut rng)
    }

    #[test]
    fn constant_zero_environment_converges_at_first_check() {
        let mut agent = tiny_dqn();
        let mut env = ZeroEnv::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report =
            train_agent(&mut agent, &mut env, &TrainOptions::default(), &mut rng).unwrap();
        assert_eq!(report.stop_cause, StopCause::Converged);
        assert_eq!(report.episodes_used, 20);
        assert_eq!(report.env_steps_used, 20 * 5);
        assert!(report.returns.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn disabled_heuristics_run_to_the_episode_cap() {
        let mut agent = tiny_dqn();
        let mut env = ZeroEnv::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let opts = TrainOptions { max_episodes: 37, stop: None, log_transitions: false };
        let report = train_agent(&mut agent, &mut env, &opts, &mut rng).unwrap();
        assert_eq!(report.stop_cause, StopCause::MaxEpisodes);
        assert_eq!(report.episodes_used, 37);
        assert!(report.test_returns.is_empty());
    }

    /// A hand-tuned linear balancing policy for CartPole; no learning.
    struct BalancerStub;

    impl Agent for BalancerStub {
        fn kind(&self) -> AgentKind {
            AgentKind::Ddqn
        }
        fn act(&self, obs: &[f64], _mode: ActMode, _rng: &mut dyn RngCore) -> ChosenAction {
            let score = 0.1 * obs[0] + 0.3 * obs[1] + 10.0 * obs[2] + 1.5 * obs[3];
            ChosenAction::discrete(if score > 0.0 { 1 } else { 0 })
        }
        fn observe(&mut self, _t: Transition, _chosen: &ChosenAction) {}
        fn train_step(&mut self, _rng: &mut dyn RngCore) -> Option<f64> {
            None
        }
        fn begin_episode(&mut self, _episode_index: usize) {}
    }

    #[test]
    fn solving_policy_stops_after_d_test_episodes() {
        let mut agent = BalancerStub;
        let mut env = CartPoleEnv::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let report =
            train_agent(&mut agent, &mut env, &TrainOptions::default(), &mut rng).unwrap();
        assert_eq!(report.stop_cause, StopCause::Solved);
        assert_eq!(report.episodes_used, 10);
        assert_eq!(report.test_returns.len(), 10);
        assert!(report.eval_steps_used >= 10 * 195);
    }

    #[test]
    fn evaluation_caps_at_episode_length_and_is_repeatable() {
        let agent = BalancerStub;
        let mut env = CartPoleEnv::new();
        let mut rng_a = ChaCha8Rng::seed_from_u64(4);
        let mut rng_b = ChaCha8Rng::seed_from_u64(4);
        let eval_a = evaluate_agent(&agent, &mut env, 10, &mut rng_a).unwrap();
        let eval_b = evaluate_agent(&agent, &mut env, 10, &mut rng_b).unwrap();
        assert_eq!(eval_a.returns, eval_b.returns);
        assert_eq!(eval_a.returns.len(), 10);
        assert_eq!(eval_a.mean, 200.0, "balancer holds every episode to the cap");
    }

    struct RandomStub;

    impl Agent for RandomStub {
        fn kind(&self) -> AgentKind {
            AgentKind::Ddqn
        }
        fn act(&self, _obs: &[f64], _mode: ActMode, rng: &mut dyn RngCore) -> ChosenAction {
            ChosenAction::discrete(rand::Rng::gen_range(rng, 0..2))
        }
        fn observe(&mut self, _t: Transition, _chosen: &ChosenAction) {}
        fn train_step(&mut self, _rng: &mut dyn RngCore) -> Option<f64> {
            None
        }
        fn begin_episode(&mut self, _episode_index: usize) {}
    }

    #[test]
    fn random_policy_baseline_band() {
        // Monte-Carlo regression band, pinned once: a uniform-random CartPole
        // policy scores in the low tens.
        let agent = RandomStub;
        let mut env = CartPoleEnv::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eval = evaluate_agent(&agent, &mut env, 1000, &mut rng).unwrap();
        assert!(
            eval.mean > 10.0 && eval.mean < 60.0,
            "random baseline drifted: {}",
            eval.mean
        );
    }

    #[test]
    fn mean_is_arithmetic_mean_of_returns() {
        let returns: Vec<f64> = (0..10).map(|i| -80.0 - 2.0 * i as f64).collect();
        let m = super::mean(&returns);
        assert_eq!(m, returns.iter().sum::<f64>() / 10.0);
    }
}
