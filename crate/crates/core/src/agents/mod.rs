//! The inner-loop learners, each behind the common [`Agent`] trait and
//! registered by name so configs and the CLI can select them at runtime.

mod adam;
mod dqn;
mod replay;
mod td3;

pub use adam::Adam;
pub use dqn::{aggregate_dueling, DqnAgent};
pub use replay::{ReplayBuffer, Transition};
pub use td3::{gumbel_softmax, softmax, Td3Agent};

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::TaskSpec;
use crate::mlp::{Activation, FlatParams, MlpArchitecture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ddqn,
    DuelingDdqn,
    DiscreteTd3,
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Ddqn => "ddqn",
            AgentKind::DuelingDdqn => "dueling_ddqn",
            AgentKind::DiscreteTd3 => "td3_discrete",
        }
    }

    pub fn from_name(name: &str) -> Option<AgentKind> {
        registry().iter().find(|s| s.name == name).map(|s| s.kind)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentError {
    InvalidTemperature(f64),
    BadConfig(String),
}

impl fmt::Display for AgentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentError::InvalidTemperature(t) => {
                write!(f, "temperature must be positive, got {t}")
            }
            AgentError::BadConfig(msg) => write!(f, "bad agent config: {msg}"),
        }
    }
}

impl std::error::Error for AgentError {}

/// All agent hyperparameters. Defaults mirror the shipped experiment presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub agent_kind: AgentKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_size: usize,
    pub hidden_layers: usize,
    /// Soft target update rate tau.
    pub target_update_rate: f64,
    /// Discount gamma.
    pub discount: f64,
    pub eps_init: f64,
    pub eps_min: f64,
    pub eps_decay: f64,
    /// Episodes of pure random-action data collection before any gradient step.
    pub initial_episodes: usize,
    pub activation: Activation,
    pub replay_capacity: usize,
    pub gumbel_start_temperature: f64,
    pub policy_delay: usize,
}

impl AgentConfig {
    /// Default experiment hyperparameters per agent kind.
    pub fn defaults(kind: AgentKind) -> AgentConfig {
        AgentConfig {
            agent_kind: kind,
            learning_rate: match kind {
                AgentKind::DiscreteTd3 => 0.0005,
                _ => 0.001,
            },
            batch_size: 128,
            hidden_size: 128,
            hidden_layers: 2,
            target_update_rate: 0.01,
            discount: 0.99,
            eps_init: 1.0,
            eps_min: 0.05,
            eps_decay: 0.9,
            initial_episodes: 10,
            activation: match kind {
                AgentKind::DiscreteTd3 => Activation::Tanh,
                _ => Activation::ReLU,
            },
            replay_capacity: 100_000,
            gumbel_start_temperature: 1.0,
            policy_delay: 2,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(AgentError::BadConfig(format!("discount {} not in (0,1)", self.discount)));
        }
        if !(self.target_update_rate > 0.0 && self.target_update_rate <= 1.0) {
            return Err(AgentError::BadConfig(format!(
                "target update rate {} not in (0,1]",
                self.target_update_rate
            )));
        }
        if self.batch_size == 0 || self.hidden_size == 0 || self.replay_capacity == 0 {
            return Err(AgentError::BadConfig("sizes must be >= 1".into()));
        }
        if !(1..=3).contains(&self.hidden_layers) {
            return Err(AgentError::BadConfig("hidden layers must be in [1,3]".into()));
        }
        if self.gumbel_start_temperature <= 0.0 {
            return Err(AgentError::InvalidTemperature(self.gumbel_start_temperature));
        }
        if self.policy_delay == 0 {
            return Err(AgentError::BadConfig("policy delay must be >= 1".into()));
        }
        Ok(())
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        vec![self.hidden_size; self.hidden_layers]
    }
}

/// Exploration epsilon at a given training episode:
/// `max(eps_min, eps_init * decay^episode)`. Decay is per episode, not per
/// step.
pub fn epsilon_schedule(cfg: &AgentConfig, episode_index: usize) -> f64 {
    (cfg.eps_init * cfg.eps_decay.powi(episode_index as i32)).max(cfg.eps_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    /// Training-time action selection (epsilon-greedy or sampled).
    Explore,
    /// Deterministic test-time action.
    Greedy,
}

/// An action plus, for actor-critic agents, the differentiable policy output
/// that produced it.
#[derive(Debug, Clone)]
pub struct ChosenAction {
    pub action: usize,
    pub soft: Option<Vec<f64>>,
}

impl ChosenAction {
    pub fn discrete(action: usize) -> ChosenAction {
        ChosenAction { action, soft: None }
    }
}

/// Common interface over the inner-loop learners.
///
/// `act` with [`ActMode::Greedy`] never mutates the agent, so evaluation
/// cannot change parameters by construction.
pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    fn act(&self, obs: &[f64], mode: ActMode, rng: &mut dyn RngCore) -> ChosenAction;

    fn observe(&mut self, transition: Transition, chosen: &ChosenAction);

    /// One gradient step, or `None` while collecting initial data or when the
    /// buffer holds fewer than `batch_size` transitions. Returns the loss.
    fn train_step(&mut self, rng: &mut dyn RngCore) -> Option<f64>;

    /// Called at the start of every training episode with its index.
    fn begin_episode(&mut self, episode_index: usize);
}

/// Online/target parameter pair over one architecture. The target starts as
/// an exact copy and trails the online network by soft updates.
#[derive(Debug, Clone)]
pub struct QNetworkPair {
    pub arch: MlpArchitecture,
    pub online: FlatParams,
    pub target: FlatParams,
}

impl QNetworkPair {
    pub fn new(arch: MlpArchitecture, rng: &mut dyn RngCore) -> QNetworkPair {
        let online = arch.init_params(rng);
        let target = online.clone();
        QNetworkPair { arch, online, target }
    }

    /// theta_target <- (1 - tau) * theta_target + tau * theta_online
    pub fn soft_update(&mut self, tau: f64) {
        for (t, o) in self.target.as_mut_slice().iter_mut().zip(self.online.as_slice()) {
            *t = (1.0 - tau) * *t + tau * *o;
        }
    }
}

/// One registered agent strategy: a stable name plus a builder.
pub struct AgentStrategy {
    pub name: &'static str,
    pub kind: AgentKind,
    pub build: fn(&AgentConfig, &TaskSpec, u64) -> Box<dyn Agent>,
}

fn build_ddqn(cfg: &AgentConfig, task: &TaskSpec, seed: u64) -> Box<dyn Agent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Box::new(DqnAgent::new(cfg.clone(), task, false, &mut rng))
}

fn build_dueling(cfg: &AgentConfig, task: &TaskSpec, seed: u64) -> Box<dyn Agent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Box::new(DqnAgent::new(cfg.clone(), task, true, &mut rng))
}

fn build_td3(cfg: &AgentConfig, task: &TaskSpec, seed: u64) -> Box<dyn Agent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Box::new(Td3Agent::new(cfg.clone(), task, &mut rng))
}

static REGISTRY: &[AgentStrategy] = &[
    AgentStrategy { name: "ddqn", kind: AgentKind::Ddqn, build: build_ddqn },
    AgentStrategy { name: "dueling_ddqn", kind: AgentKind::DuelingDdqn, build: build_dueling },
    AgentStrategy { name: "td3_discrete", kind: AgentKind::DiscreteTd3, build: build_td3 },
];

pub fn registry() -> &'static [AgentStrategy] {
    REGISTRY
}

/// Build a freshly initialized agent of the given kind, seeded for
/// reproducibility.
pub fn build_agent(
    kind: AgentKind,
    cfg: &AgentConfig,
    task: &TaskSpec,
    seed: u64,
) -> Box<dyn Agent> {
    let strategy = registry()
        .iter()
        .find(|s| s.kind == kind)
        .expect("every AgentKind is registered");
    (strategy.build)(cfg, task, seed)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn uniform_action(n_actions: usize, rng: &mut dyn RngCore) -> usize {
    rng.gen_range(0..n_actions)
}
