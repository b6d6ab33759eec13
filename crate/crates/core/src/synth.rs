//! Learnable stateless synthetic environments.
//!
//! A synthetic environment (SE) is one MLP mapping `concat(state,
//! one_hot(action))` to `(next_state, reward)`. It exposes the same episodic
//! interface as the real tasks, with two differences: episodes always run
//! the task's full length (the network has no termination head), and initial
//! states are drawn from the real task's reset distribution.
//!
//! Outputs are intentionally unclipped; learned SEs drift freely away from
//! the real state and reward ranges.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::agents::{ActMode, Agent, Transition};
use crate::env::{DoneCause, EnvError, EnvState, Environment, StepResult, Task, TaskSpec};
use crate::mlp::{Activation, FlatParams, MlpArchitecture, MlpError};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum SynthError {
    Io(std::io::Error),
    Schema(String),
    TaskMismatch { expected: String, found: String },
    Dim(MlpError),
    NonFiniteParams,
    UnknownTask(String),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::Io(e) => write!(f, "checkpoint io: {e}"),
            SynthError::Schema(msg) => write!(f, "checkpoint schema: {msg}"),
            SynthError::TaskMismatch { expected, found } => {
                write!(f, "checkpoint is for task '{found}', expected '{expected}'")
            }
            SynthError::Dim(e) => write!(f, "dimension error: {e}"),
            SynthError::NonFiniteParams => write!(f, "parameters contain NaN or infinity"),
            SynthError::UnknownTask(name) => write!(f, "unknown task '{name}'"),
        }
    }
}

impl std::error::Error for SynthError {}

impl From<std::io::Error> for SynthError {
    fn from(e: std::io::Error) -> Self {
        SynthError::Io(e)
    }
}

impl From<MlpError> for SynthError {
    fn from(e: MlpError) -> Self {
        SynthError::Dim(e)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeMeta {
    pub nes_iteration: u64,
    pub eval_score: f64,
    pub run_seed: u64,
}

/// Architecture metadata plus flat parameters defining one SE.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEnvSpec {
    pub task: TaskSpec,
    pub arch: MlpArchitecture,
    pub params: FlatParams,
    pub meta: SeMeta,
}

/// The SE network architecture for a task: inputs are the observation plus a
/// one-hot action, outputs are the next observation plus one reward.
pub fn se_architecture(
    task: &TaskSpec,
    hidden_sizes: Vec<usize>,
    activation: Activation,
) -> Result<MlpArchitecture, MlpError> {
    MlpArchitecture::new(task.obs_dim + task.n_actions, hidden_sizes, task.obs_dim + 1, activation)
}

impl SyntheticEnvSpec {
    pub fn new(
        task: TaskSpec,
        arch: MlpArchitecture,
        params: FlatParams,
        meta: SeMeta,
    ) -> Result<SyntheticEnvSpec, SynthError> {
        if arch.input_dim != task.obs_dim + task.n_actions
            || arch.output_dim != task.obs_dim + 1
        {
            return Err(SynthError::Schema(format!(
                "architecture {}->{} inconsistent with task '{}' ({} obs, {} actions)",
                arch.input_dim, arch.output_dim, task.name, task.obs_dim, task.n_actions
            )));
        }
        if params.len() != arch.param_count() {
            return Err(SynthError::Dim(MlpError::ParamCount {
                expected: arch.param_count(),
                got: params.len(),
            }));
        }
        if !params.all_finite() {
            return Err(SynthError::NonFiniteParams);
        }
        Ok(SyntheticEnvSpec { task, arch, params, meta })
    }

    /// Same spec with different parameters (population perturbations).
    pub fn with_params(&self, params: FlatParams) -> SyntheticEnvSpec {
        SyntheticEnvSpec { params, ..self.clone() }
    }

    /// One stateless transition: `(s, a) -> (s', r)`. The first `obs_dim`
    /// network outputs are the next state, the last one is the reward.
    pub fn se_step(&self, state: &[f64], action: usize) -> Result<(Vec<f64>, f64), SynthError> {
        if state.len() != self.task.obs_dim {
            return Err(SynthError::Dim(MlpError::InputDim {
                layer: 0,
                expected: self.task.obs_dim,
                got: state.len(),
            }));
        }
        if action >= self.task.n_actions {
            return Err(SynthError::Schema(format!(
                "action {action} out of range for task '{}'",
                self.task.name
            )));
        }
        let mut input = Vec::with_capacity(self.arch.input_dim);
        input.extend_from_slice(state);
        let mut one_hot = vec![0.0; self.task.n_actions];
        one_hot[action] = 1.0;
        input.extend_from_slice(&one_hot);
        let mut out = self.arch.forward(&self.params, &input)?;
        let reward = out.pop().expect("output has obs_dim + 1 entries");
        Ok((out, reward))
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        if !self.params.all_finite() {
            return Err(SynthError::NonFiniteParams);
        }
        let file = CheckpointFile {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            task: self.task.clone(),
            arch: self.arch.clone(),
            // Shortest round-trip decimal strings: parsing returns the exact
            // same bits for every finite f64.
            params: self.params.as_slice().iter().map(|v| format!("{v}")).collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| SynthError::Schema(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SyntheticEnvSpec, SynthError> {
        let text = fs::read_to_string(path)?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| SynthError::Schema(e.to_string()))?;
        if file.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(SynthError::Schema(format!(
                "schema version {} unsupported (expected {})",
                file.schema_version, CHECKPOINT_SCHEMA_VERSION
            )));
        }
        let mut values = Vec::with_capacity(file.params.len());
        for s in &file.params {
            let v: f64 = s.parse().map_err(|_| {
                SynthError::Schema(format!("unparseable parameter value '{s}'"))
            })?;
            values.push(v);
        }
        SyntheticEnvSpec::new(file.task, file.arch, FlatParams::new(values), file.meta)
    }

    /// Load and require the checkpoint to belong to `task`.
    pub fn load_for_task(path: &Path, task: Task) -> Result<SyntheticEnvSpec, SynthError> {
        let spec = SyntheticEnvSpec::load(path)?;
        if spec.task.name != task.name() {
            return Err(SynthError::TaskMismatch {
                expected: task.name().to_string(),
                found: spec.task.name.clone(),
            });
        }
        Ok(spec)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    task: TaskSpec,
    arch: MlpArchitecture,
    params: Vec<String>,
    meta: SeMeta,
}

/// Episodic wrapper around a spec. Episodes run exactly
/// `task.max_episode_length` steps; the final step reports `TimeLimit`, never
/// `Terminal`, so agents keep bootstrapping across the artificial horizon.
pub struct SyntheticEnv {
    spec: SyntheticEnvSpec,
    reset_task: Task,
    obs: Vec<f64>,
    step_count: usize,
    started: bool,
    done: bool,
}

impl SyntheticEnv {
    pub fn new(spec: SyntheticEnvSpec) -> Result<SyntheticEnv, SynthError> {
        let reset_task = Task::from_name(&spec.task.name)
            .ok_or_else(|| SynthError::UnknownTask(spec.task.name.clone()))?;
        Ok(SyntheticEnv {
            obs: vec![0.0; spec.task.obs_dim],
            reset_task,
            spec,
            step_count: 0,
            started: false,
            done: false,
        })
    }

    pub fn spec(&self) -> &SyntheticEnvSpec {
        &self.spec
    }
}

impl Environment for SyntheticEnv {
    fn task(&self) -> &TaskSpec {
        &self.spec.task
    }

    fn is_synthetic(&self) -> bool {
        true
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.obs = self.reset_task.sample_reset_observation(rng);
        self.step_count = 0;
        self.started = true;
        self.done = false;
        self.obs.clone()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if action >= self.spec.task.n_actions {
            return Err(EnvError::InvalidAction {
                n_actions: self.spec.task.n_actions,
                got: action,
            });
        }
        let (next, reward) = self
            .spec
            .se_step(&self.obs, action)
            .expect("validated spec cannot fail on in-range inputs");
        self.obs = next;
        self.step_count += 1;
        let done = self.step_count >= self.spec.task.max_episode_length;
        self.done = done;
        Ok(StepResult {
            next_obs: self.obs.clone(),
            reward,
            done,
            done_cause: if done { DoneCause::TimeLimit } else { DoneCause::None },
        })
    }

    fn state(&self) -> EnvState {
        EnvState { observation: self.obs.clone(), step_count: self.step_count }
    }

    fn fresh(&self) -> Box<dyn Environment> {
        Box::new(SyntheticEnv::new(self.spec.clone()).expect("spec already validated"))
    }
}

/// Roll the agent's training policy through one fixed-length SE episode and
/// return the transitions; the caller feeds them to the replay buffer.
pub fn se_episode(
    spec: &SyntheticEnvSpec,
    agent: &dyn Agent,
    max_steps: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Transition>, SynthError> {
    let reset_task = Task::from_name(&spec.task.name)
        .ok_or_else(|| SynthError::UnknownTask(spec.task.name.clone()))?;
    let mut obs = reset_task.sample_reset_observation(rng);
    let mut out = Vec::with_capacity(max_steps);
    for _ in 0..max_steps {
        let chosen = agent.act(&obs, ActMode::Explore, rng);
        let (next, reward) = spec.se_step(&obs, chosen.action)?;
        out.push(Transition {
            state: obs,
            action: chosen.action,
            reward,
            next_state: next.clone(),
            terminal: false,
        });
        obs = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentConfig, AgentKind, DqnAgent};
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cartpole_spec(seed: u64) -> SyntheticEnvSpec {
        let task = Task::CartPole.spec();
        let arch = se_architecture(&task, vec![16], Activation::LeakyReLU).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = arch.init_params(&mut rng);
        SyntheticEnvSpec::new(task, arch, params, SeMeta::default()).unwrap()
    }

    fn zero_spec() -> SyntheticEnvSpec {
        let task = Task::CartPole.spec();
        let arch = se_architecture(&task, vec![16], Activation::LeakyReLU).unwrap();
        let params = FlatParams::zeros(arch.param_count());
        SyntheticEnvSpec::new(task, arch, params, SeMeta::default()).unwrap()
    }

    #[test]
    fn zero_network_maps_everything_to_zero() {
        let spec = zero_spec();
        let (next, reward) = spec.se_step(&[0.3, -0.1, 0.2, 0.9], 1).unwrap();
        assert_eq!(next, vec![0.0; 4]);
        assert_eq!(reward, 0.0);
    }

    #[test]
    fn se_step_matches_naive_forward() {
        let spec = cartpole_spec(42);
        let state = [0.1, -0.2, 0.3, -0.4];
        let (next, reward) = spec.se_step(&state, 1).unwrap();
        let input = [0.1, -0.2, 0.3, -0.4, 0.0, 1.0];
        let raw = oracle::naive_forward(&spec.arch, &spec.params, &input);
        for (a, b) in next.iter().zip(raw.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((reward - raw[4]).abs() < 1e-12);
    }

    #[test]
    fn se_step_is_stateless() {
        let spec = cartpole_spec(7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut inputs: Vec<(Vec<f64>, usize)> = (0..32)
            .map(|_| {
                let s: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (s, rng.gen_range(0..2))
            })
            .collect();
        let first: Vec<(Vec<f64>, f64)> =
            inputs.iter().map(|(s, a)| spec.se_step(s, *a).unwrap()).collect();
        // shuffle the call order and interleave unrelated queries
        inputs.reverse();
        for (s, a) in &inputs {
            spec.se_step(s, *a).unwrap();
        }
        for ((s, a), (next, reward)) in inputs.iter().rev().zip(first.iter()) {
            let (n2, r2) = spec.se_step(s, *a).unwrap();
            assert_eq!(&n2, next);
            assert_eq!(r2, *reward);
        }
    }

    #[test]
    fn episodes_have_fixed_length_and_never_terminate() {
        let spec = cartpole_spec(3);
        let mut env = SyntheticEnv::new(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        env.reset(&mut rng);
        let mut steps = 0;
        loop {
            let r = env.step(0).unwrap();
            steps += 1;
            assert_ne!(r.done_cause, DoneCause::Terminal);
            if r.done {
                break;
            }
        }
        assert_eq!(steps, 200);
        assert!(env.step(0).is_err());
    }

    #[test]
    fn rollout_collects_exactly_max_steps_transitions() {
        let spec = zero_spec();
        let mut cfg = AgentConfig::defaults(AgentKind::Ddqn);
        cfg.hidden_size = 4;
        cfg.hidden_layers = 1;
        cfg.initial_episodes = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let agent = DqnAgent::new(cfg, &Task::CartPole.spec(), false, &mut rng);
        let transitions = se_episode(&spec, &agent, 200, &mut rng).unwrap();
        assert_eq!(transitions.len(), 200);
        assert!(transitions.iter().all(|t| !t.terminal));
        // zero net: states collapse to zero and stay there
        assert!(transitions.iter().all(|t| t.next_state.iter().all(|v| *v == 0.0)));
        assert_eq!(transitions.iter().map(|t| t.reward).sum::<f64>(), 0.0);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let spec = cartpole_spec(99);
        let dir = std::env::temp_dir().join("seforge-test-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("se.json");
        spec.save(&path).unwrap();
        let loaded = SyntheticEnvSpec::load(&path).unwrap();
        assert_eq!(spec.params, loaded.params);
        let state = [0.5, 0.25, -0.125, 1.0];
        let (n1, r1) = spec.se_step(&state, 0).unwrap();
        let (n2, r2) = loaded.se_step(&state, 0).unwrap();
        assert!(n1.iter().zip(n2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(r1.to_bits(), r2.to_bits());
    }

    #[test]
    fn truncated_checkpoint_is_a_schema_error() {
        let spec = cartpole_spec(1);
        let dir = std::env::temp_dir().join("seforge-test-truncated");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("se.json");
        spec.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(SyntheticEnvSpec::load(&path), Err(SynthError::Schema(_))));
    }

    #[test]
    fn loading_into_the_wrong_task_is_rejected() {
        let spec = cartpole_spec(1);
        let dir = std::env::temp_dir().join("seforge-test-mismatch");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("se.json");
        spec.save(&path).unwrap();
        assert!(matches!(
            SyntheticEnvSpec::load_for_task(&path, Task::Acrobot),
            Err(SynthError::TaskMismatch { .. })
        ));
        assert!(SyntheticEnvSpec::load_for_task(&path, Task::CartPole).is_ok());
    }

    #[test]
    fn mismatched_architecture_is_rejected() {
        let task = Task::CartPole.spec();
        let arch = MlpArchitecture::new(3, vec![8], 5, Activation::Tanh).unwrap();
        let params = FlatParams::zeros(arch.param_count());
        assert!(SyntheticEnvSpec::new(task, arch, params, SeMeta::default()).is_err());
    }
}
