//! The oracle verification suite behind `seforge verify` and the acceptance
//! tests: each check compares a production code path against an independent
//! reference (fixture trajectories, finite differences, hand-computed
//! values, value iteration, or a replayed run).

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{build_agent, ActMode, AgentConfig, AgentKind, Transition};
use crate::env::{Environment, Task, TwoStateMdp};
use crate::mlp::{Activation, MlpArchitecture};
use crate::nes::{
    run_nes, InnerLoopEvaluator, NesConfig, NesSetup, TransformKind,
};
use crate::oracle;
use crate::train::{se_stop_check, real_stop_check, StopHeuristic};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
    pub elapsed: Duration,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{:<22} {}  ({:.2?})  {}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed,
            self.details
        )
    }
}

fn run_check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    let started = Instant::now();
    match f() {
        Ok(details) => CheckResult { name, passed: true, details, elapsed: started.elapsed() },
        Err(details) => CheckResult { name, passed: false, details, elapsed: started.elapsed() },
    }
}

pub mod fixtures {
    //! Versioned reference trajectories generated from the dynamics
    //! transcriptions (see tests/fixture_gen.rs).

    use crate::env::Task;

    pub const FIXTURE_SCRIPTS: usize = 10;
    pub const FIXTURE_STEPS: usize = 500;

    pub struct FixtureCase {
        pub task: Task,
        pub name: &'static str,
        pub text: &'static str,
    }

    macro_rules! fixture {
        ($task:expr, $name:literal) => {
            FixtureCase {
                task: $task,
                name: $name,
                text: include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/", $name)),
            }
        };
    }

    pub fn fixture_cases() -> Vec<FixtureCase> {
        vec![
            fixture!(Task::CartPole, "cartpole_00.csv"),
            fixture!(Task::CartPole, "cartpole_01.csv"),
            fixture!(Task::CartPole, "cartpole_02.csv"),
            fixture!(Task::CartPole, "cartpole_03.csv"),
            fixture!(Task::CartPole, "cartpole_04.csv"),
            fixture!(Task::CartPole, "cartpole_05.csv"),
            fixture!(Task::CartPole, "cartpole_06.csv"),
            fixture!(Task::CartPole, "cartpole_07.csv"),
            fixture!(Task::CartPole, "cartpole_08.csv"),
            fixture!(Task::CartPole, "cartpole_09.csv"),
            fixture!(Task::Acrobot, "acrobot_00.csv"),
            fixture!(Task::Acrobot, "acrobot_01.csv"),
            fixture!(Task::Acrobot, "acrobot_02.csv"),
            fixture!(Task::Acrobot, "acrobot_03.csv"),
            fixture!(Task::Acrobot, "acrobot_04.csv"),
            fixture!(Task::Acrobot, "acrobot_05.csv"),
            fixture!(Task::Acrobot, "acrobot_06.csv"),
            fixture!(Task::Acrobot, "acrobot_07.csv"),
            fixture!(Task::Acrobot, "acrobot_08.csv"),
            fixture!(Task::Acrobot, "acrobot_09.csv"),
        ]
    }

    pub(super) struct ParsedFixture {
        pub init_state: [f64; 4],
        pub rows: Vec<FixtureRow>,
    }

    pub(super) struct FixtureRow {
        pub action: usize,
        pub obs: Vec<f64>,
        pub reward: f64,
        pub done: bool,
    }

    pub(super) fn parse(case: &FixtureCase) -> Result<ParsedFixture, String> {
        let mut init_state = None;
        let mut rows = Vec::new();
        for line in case.text.lines() {
            if let Some(rest) = line.strip_prefix("# init_state,") {
                let vals: Result<Vec<f64>, _> = rest.split(',').map(str::parse).collect();
                let vals = vals.map_err(|e| format!("{}: bad init_state: {e}", case.name))?;
                if vals.len() != 4 {
                    return Err(format!("{}: init_state needs 4 entries", case.name));
                }
                init_state = Some([vals[0], vals[1], vals[2], vals[3]]);
                continue;
            }
            if line.starts_with('#') || line.starts_with("step,") || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let obs_dim = case.task.spec().obs_dim;
            if fields.len() != obs_dim + 4 {
                return Err(format!("{}: row has {} fields", case.name, fields.len()));
            }
            let action: usize =
                fields[1].parse().map_err(|e| format!("{}: action: {e}", case.name))?;
            let obs: Result<Vec<f64>, _> =
                fields[2..2 + obs_dim].iter().map(|s| s.parse()).collect();
            let obs = obs.map_err(|e| format!("{}: obs: {e}", case.name))?;
            let reward: f64 = fields[2 + obs_dim]
                .parse()
                .map_err(|e| format!("{}: reward: {e}", case.name))?;
            let done: bool = fields[3 + obs_dim]
                .parse()
                .map_err(|e| format!("{}: done: {e}", case.name))?;
            rows.push(FixtureRow { action, obs, reward, done });
        }
        Ok(ParsedFixture {
            init_state: init_state.ok_or_else(|| format!("{}: missing init_state", case.name))?,
            rows,
        })
    }
}

/// Replay one fixture through the production dynamics; the largest absolute
/// deviation across observations and rewards, or an error on flag mismatch.
pub fn replay_fixture(case: &fixtures::FixtureCase) -> Result<f64, String> {
    let parsed = fixtures::parse(case)?;
    if parsed.rows.len() != fixtures::FIXTURE_STEPS {
        return Err(format!("{}: expected {} rows", case.name, fixtures::FIXTURE_STEPS));
    }
    let mut state = parsed.init_state;
    let mut max_dev = 0.0_f64;
    for (idx, row) in parsed.rows.iter().enumerate() {
        let (next, reward, terminal, obs): ([f64; 4], f64, bool, Vec<f64>) = match case.task {
            Task::CartPole => {
                let (next, reward, terminal) = crate::env::cartpole_dynamics(&state, row.action);
                (next, reward, terminal, next.to_vec())
            }
            Task::Acrobot => {
                let (next, reward, terminal) = crate::env::acrobot_dynamics(&state, row.action);
                (next, reward, terminal, crate::env::acrobot_observe(&next).to_vec())
            }
        };
        for (a, b) in obs.iter().zip(row.obs.iter()) {
            max_dev = max_dev.max((a - b).abs());
        }
        max_dev = max_dev.max((reward - row.reward).abs());
        if terminal != row.done {
            return Err(format!("{}: step {}: done flag mismatch", case.name, idx + 1));
        }
        state = next;
    }
    Ok(max_dev)
}

/// Every fixture trajectory must replay within 1e-9.
pub fn check_physics() -> CheckResult {
    run_check("physics-oracle", || {
        let mut worst = 0.0_f64;
        for case in fixtures::fixture_cases() {
            let dev = replay_fixture(&case)?;
            worst = worst.max(dev);
            if dev >= 1e-9 {
                return Err(format!("{} deviates by {dev:.3e}", case.name));
            }
        }
        Ok(format!("20 scripts x 500 steps, max deviation {worst:.3e}"))
    })
}

/// Backward pass against central finite differences for 20 random
/// architectures spanning all four activations.
pub fn check_gradients() -> CheckResult {
    run_check("gradient-checks", || {
        let activations =
            [Activation::Tanh, Activation::ReLU, Activation::LeakyReLU, Activation::PReLU];
        let mut rng = ChaCha8Rng::seed_from_u64(0x6AD);
        let mut worst = 0.0_f64;
        for i in 0..20 {
            let activation = activations[i % 4];
            let n_hidden = rng.gen_range(1..=3);
            let hidden: Vec<usize> = (0..n_hidden).map(|_| rng.gen_range(2..24)).collect();
            let arch = MlpArchitecture::new(
                rng.gen_range(1..8),
                hidden,
                rng.gen_range(1..6),
                activation,
            )
            .expect("valid random architecture");
            let rel = oracle::gradient_check(&arch, 7000 + i as u64, 120);
            worst = worst.max(rel);
            if rel >= 1e-5 {
                return Err(format!(
                    "arch {i} ({}) relative error {rel:.3e}",
                    activation.name()
                ));
            }
        }
        Ok(format!("20 architectures, max relative error {worst:.3e}"))
    })
}

/// Score transform and update formula against hand-computed values.
pub fn check_nes_math() -> CheckResult {
    run_check("nes-math", || {
        let t = TransformKind::BetterAverage.strategy();
        if t.transform(&[3.0, 1.0]) != vec![1.0, 0.0] {
            return Err("transform [3,1] != [1,0]".into());
        }
        if t.transform(&[5.0, 5.0, 5.0]) != vec![0.0, 0.0, 0.0] {
            return Err("transform [5,5,5] != [0,0,0]".into());
        }
        if t.transform(&[0.0, 2.0, 4.0]) != vec![0.0, 0.0, 1.0] {
            return Err("transform [0,2,4] != [0,0,1]".into());
        }

        let cfg = NesConfig {
            step_size: 1.0,
            sigma: 0.1,
            population: 2,
            iterations: 1,
            mirrored: true,
            transform: TransformKind::BetterAverage,
        };
        let psi = crate::mlp::FlatParams::new(vec![0.25, -1.5]);
        let e = [0.3, -0.7];
        let noises = vec![
            crate::mlp::FlatParams::new(e.to_vec()),
            crate::mlp::FlatParams::new(e.iter().map(|v| -v).collect()),
        ];
        let out = crate::nes::update_se(&psi, &noises, &[1.0, 0.0], &cfg)
            .map_err(|err| err.to_string())?;
        for ((got, start), ei) in out.as_slice().iter().zip(psi.as_slice()).zip(&e) {
            if (got - (start + 5.0 * ei)).abs() >= 1e-12 {
                return Err(format!("update off by {}", (got - (start + 5.0 * ei)).abs()));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(0x0A);
        let cfg4 = NesConfig { population: 4, ..cfg };
        let noises = crate::nes::sample_noises(16, &cfg4, &mut rng).map_err(|e| e.to_string())?;
        for i in 0..2 {
            for (a, b) in noises[i].as_slice().iter().zip(noises[i + 2].as_slice()) {
                if *a != -*b {
                    return Err("mirrored antisymmetry violated".into());
                }
            }
        }
        Ok("transform exact, update < 1e-12, mirroring exact".into())
    })
}

/// Stop-rule example table, including the zero-denominator guard.
pub fn check_heuristics() -> CheckResult {
    run_check("stop-heuristics", || {
        let h = StopHeuristic::default();
        let cases: [(&str, Vec<f64>, bool); 5] = [
            ("constant", vec![100.0; 20], true),
            ("one-percent", {
                let mut v = vec![100.0; 10];
                v.extend(vec![101.0; 10]);
                v
            }, true),
            ("ten-percent", {
                let mut v = vec![100.0; 10];
                v.extend(vec![110.0; 10]);
                v
            }, false),
            ("zero-guard", vec![0.0; 20], true),
            ("too-short", vec![5.0; 19], false),
        ];
        for (name, returns, expected) in &cases {
            if se_stop_check(returns, &h) != *expected {
                return Err(format!("convergence case '{name}' wrong"));
            }
        }
        if !real_stop_check(&[200.0; 10], 195.0, 10)
            || real_stop_check(&[194.0; 10], 195.0, 10)
            || !real_stop_check(&[-95.0; 10], -100.0, 10)
        {
            return Err("solved-threshold cases wrong".into());
        }
        Ok("8 tabulated cases".into())
    })
}

fn mdp_agent_config(kind: AgentKind) -> AgentConfig {
    AgentConfig {
        hidden_size: 16,
        hidden_layers: 1,
        batch_size: 32,
        learning_rate: 3e-3,
        discount: 0.9,
        target_update_rate: 0.05,
        eps_init: 1.0,
        eps_decay: 0.98,
        eps_min: 0.1,
        initial_episodes: 2,
        ..AgentConfig::defaults(kind)
    }
}

/// Train an agent for `steps` environment steps on the two-state MDP and
/// return its greedy policy (action in state 0, action in state 1).
pub fn mdp_greedy_policy(kind: AgentKind, seed: u64, steps: usize) -> (usize, usize) {
    let cfg = mdp_agent_config(kind);
    let mdp = TwoStateMdp::new();
    let mut agent = build_agent(kind, &cfg, mdp.task(), seed.wrapping_add(0x11));
    let mut env = TwoStateMdp::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = 0usize;
    let mut episode = 0usize;
    'outer: loop {
        agent.begin_episode(episode);
        let mut obs = env.reset(&mut rng);
        loop {
            let chosen = agent.act(&obs, ActMode::Explore, &mut rng);
            let step = env.step(chosen.action).expect("mdp step");
            agent.observe(
                Transition {
                    state: obs,
                    action: chosen.action,
                    reward: step.reward,
                    next_state: step.next_obs.clone(),
                    terminal: false,
                },
                &chosen,
            );
            agent.train_step(&mut rng);
            taken += 1;
            obs = step.next_obs;
            if taken >= steps {
                break 'outer;
            }
            if step.done {
                break;
            }
        }
        episode += 1;
    }
    let mut dummy = ChaCha8Rng::seed_from_u64(0);
    let a0 = agent.act(&[1.0, 0.0], ActMode::Greedy, &mut dummy).action;
    let a1 = agent.act(&[0.0, 1.0], ActMode::Greedy, &mut dummy).action;
    (a0, a1)
}

/// All three agents recover the value-iteration-optimal greedy policy on the
/// two-state MDP, five seeds each.
pub fn check_small_mdp() -> CheckResult {
    run_check("small-mdp-oracle", || {
        let q = oracle::value_iteration(2, 2, TwoStateMdp::transition, TwoStateMdp::reward, 0.9);
        let optimal = (
            if q[0][1] > q[0][0] { 1 } else { 0 },
            if q[1][1] > q[1][0] { 1 } else { 0 },
        );
        for kind in [AgentKind::Ddqn, AgentKind::DuelingDdqn, AgentKind::DiscreteTd3] {
            for seed in 0..5 {
                let policy = mdp_greedy_policy(kind, seed, 5000);
                if policy != optimal {
                    return Err(format!(
                        "{} seed {seed}: policy {policy:?} != optimal {optimal:?}",
                        kind.name()
                    ));
                }
            }
        }
        Ok("3 agents x 5 seeds match value iteration".into())
    })
}

/// Micro search run that must be bit-identical between serial and 4-way
/// parallel execution.
pub fn determinism_psi_trajectory(workers: usize) -> (Vec<u64>, Vec<Vec<f64>>) {
    let setup = NesSetup {
        task: Task::CartPole,
        nes: NesConfig {
            step_size: 0.5,
            sigma: 0.05,
            population: 4,
            iterations: 2,
            mirrored: true,
            transform: TransformKind::BetterAverage,
        },
        se_hidden: vec![8],
        se_activation: Activation::LeakyReLU,
        workers,
        consecutive_solved_to_stop: 0,
        checkpoint_path: None,
    };
    let agent = AgentConfig {
        hidden_size: 8,
        hidden_layers: 1,
        batch_size: 8,
        initial_episodes: 0,
        ..AgentConfig::defaults(AgentKind::Ddqn)
    };
    let mut evaluator = InnerLoopEvaluator::new(Task::CartPole, agent.clone(), agent);
    evaluator.max_train_episodes = 5;
    evaluator.n_test = 2;
    let result = run_nes(&setup, &evaluator, 0xD00D, &mut |_| {}).expect("micro run");
    let psi_bits: Vec<u64> =
        result.best.params.as_slice().iter().map(|v| v.to_bits()).collect();
    let scores: Vec<Vec<f64>> = result.reports.iter().map(|r| r.scores.clone()).collect();
    (psi_bits, scores)
}

pub fn check_determinism() -> CheckResult {
    run_check("parallel-determinism", || {
        let serial = determinism_psi_trajectory(1);
        let parallel = determinism_psi_trajectory(4);
        if serial.0 != parallel.0 {
            return Err("best parameters differ between serial and parallel".into());
        }
        if serial.1 != parallel.1 {
            return Err("member scores differ between serial and parallel".into());
        }
        Ok("psi trajectory bit-identical across 1 and 4 workers".into())
    })
}

/// The full per-commit oracle suite.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_physics(),
        check_gradients(),
        check_nes_math(),
        check_heuristics(),
        check_small_mdp(),
        check_determinism(),
    ]
}
