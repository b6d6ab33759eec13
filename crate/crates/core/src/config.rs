//! Flat key-value run configuration.
//!
//! The format is deliberately plain so that shipped presets can be audited
//! line by line: `section.key = value`, `#` comments, blank lines. Unknown
//! keys are rejected. The shipped task presets under `configs/` mirror the
//! tuned search hyperparameters this project ships with.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::agents::{AgentConfig, AgentKind};
use crate::env::Task;
use crate::mlp::Activation;
use crate::nes::{NesConfig, TransformKind};
use crate::train::StopHeuristic;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Syntax { line: usize, text: String },
    MissingKey(String),
    UnknownKey(String),
    BadValue { key: String, value: String, expected: &'static str },
    Inconsistent(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(msg) => write!(f, "config io: {msg}"),
            ConfigError::Syntax { line, text } => {
                write!(f, "config line {line}: expected 'key = value', got '{text}'")
            }
            ConfigError::MissingKey(key) => write!(f, "config key '{key}' is missing"),
            ConfigError::UnknownKey(key) => write!(f, "unknown config key '{key}'"),
            ConfigError::BadValue { key, value, expected } => {
                write!(f, "config key '{key}': '{value}' is not {expected}")
            }
            ConfigError::Inconsistent(msg) => write!(f, "inconsistent config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parsed key-value map that tracks which keys were consumed.
#[derive(Debug)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<KvConfig, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: idx + 1, text: raw.trim().to_string() });
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvConfig { entries, consumed: Default::default() })
    }

    pub fn from_file(path: &Path) -> Result<KvConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        KvConfig::parse(&text)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let v = self.entries.get(key)?;
        self.consumed.borrow_mut().insert(key.to_string());
        Some(v.as_str())
    }

    pub fn str_req(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| ConfigError::MissingKey(key.into()))
    }

    pub fn f64_req(&self, key: &str) -> Result<f64, ConfigError> {
        let v = self.str_req(key)?;
        v.parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            value: v.into(),
            expected: "a real number",
        })
    }

    pub fn usize_req(&self, key: &str) -> Result<usize, ConfigError> {
        let v = self.str_req(key)?;
        v.parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            value: v.into(),
            expected: "a non-negative integer",
        })
    }

    pub fn bool_req(&self, key: &str) -> Result<bool, ConfigError> {
        let v = self.str_req(key)?;
        match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(ConfigError::BadValue {
                key: key.into(),
                value: v.into(),
                expected: "true or false",
            }),
        }
    }

    pub fn usize_opt(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: v.into(),
                expected: "a non-negative integer",
            }),
        }
    }

    pub fn f64_opt(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: v.into(),
                expected: "a real number",
            }),
        }
    }

    /// Error out if any key was never consumed (typo protection).
    pub fn finish(&self) -> Result<(), ConfigError> {
        let consumed = self.consumed.borrow();
        for key in self.entries.keys() {
            if !consumed.contains(key) {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
        }
        Ok(())
    }
}

fn activation(cfg: &KvConfig, key: &str) -> Result<Activation, ConfigError> {
    let v = cfg.str_req(key)?;
    Activation::from_name(v).ok_or_else(|| ConfigError::BadValue {
        key: key.into(),
        value: v.into(),
        expected: "one of tanh/relu/lrelu/prelu",
    })
}

/// Everything a search run needs, assembled from one config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub nes: NesConfig,
    pub se_hidden: Vec<usize>,
    pub se_activation: Activation,
    /// Inner-loop agent configuration used while searching.
    pub search_agent: AgentConfig,
    /// Sample the varied hyperparameter subset per population member.
    pub hp_variation: bool,
    pub max_train_episodes: usize,
    /// Episode cap for the per-generation acceptance evaluation.
    pub acceptance_eval_max_episodes: usize,
    pub test_episodes: usize,
    pub early_out: StopHeuristic,
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg = KvConfig::parse(text)?;
    let task_name = cfg.str_req("task")?;
    let task = Task::from_name(task_name).ok_or_else(|| ConfigError::BadValue {
        key: "task".into(),
        value: task_name.into(),
        expected: "cartpole or acrobot",
    })?;
    let spec = task.spec();

    let transform_name = cfg.str_req("nes.score_transformation")?;
    let transform = TransformKind::from_name(transform_name).ok_or_else(|| {
        ConfigError::BadValue {
            key: "nes.score_transformation".into(),
            value: transform_name.into(),
            expected: "one of better_avg/rank_linear/raw",
        }
    })?;
    let nes = NesConfig {
        step_size: cfg.f64_req("nes.step_size")?,
        sigma: cfg.f64_req("nes.std_dev")?,
        population: cfg.usize_req("nes.population_size")?,
        iterations: cfg.usize_req("nes.outer_loops")?,
        mirrored: cfg.bool_req("nes.mirrored_sampling")?,
        transform,
    };

    let se_layers = cfg.usize_req("se.hidden_layers")?;
    let se_size = cfg.usize_req("se.hidden_size")?;
    let se_activation = activation(&cfg, "se.activation")?;

    let search_agent = AgentConfig {
        agent_kind: AgentKind::Ddqn,
        learning_rate: cfg.f64_req("ddqn.learning_rate")?,
        batch_size: cfg.usize_req("ddqn.batch_size")?,
        hidden_size: cfg.usize_req("ddqn.hidden_size")?,
        hidden_layers: cfg.usize_req("ddqn.hidden_layers")?,
        target_update_rate: cfg.f64_req("ddqn.target_update_rate")?,
        discount: cfg.f64_req("ddqn.discount_factor")?,
        eps_init: cfg.f64_req("ddqn.initial_epsilon")?,
        eps_min: cfg.f64_req("ddqn.minimal_epsilon")?,
        eps_decay: cfg.f64_req("ddqn.epsilon_decay_factor")?,
        initial_episodes: cfg.usize_req("ddqn.initial_episodes")?,
        activation: activation(&cfg, "ddqn.activation")?,
        replay_capacity: cfg.usize_req("ddqn.replay_buffer_size")?,
        ..AgentConfig::defaults(AgentKind::Ddqn)
    };
    search_agent
        .validate()
        .map_err(|e| ConfigError::Inconsistent(e.to_string()))?;

    // Audit values: fixed per task, but kept in the file so presets are
    // reviewable against the task definition.
    let max_len = cfg.usize_req("env.max_episode_length")?;
    let solved = cfg.f64_req("env.solved_reward")?;
    if max_len != spec.max_episode_length || solved != spec.solved_reward {
        return Err(ConfigError::Inconsistent(format!(
            "env values ({max_len}, {solved}) do not match task '{}' ({}, {})",
            spec.name, spec.max_episode_length, spec.solved_reward
        )));
    }

    let early_out = StopHeuristic {
        d: cfg.usize_req("ddqn.early_out_num")?,
        c_diff: cfg.f64_req("ddqn.early_out_diff")?,
    };

    let run = RunConfig {
        task,
        nes,
        se_hidden: vec![se_size; se_layers],
        se_activation,
        search_agent,
        hp_variation: cfg.bool_req("hp_variation")?,
        max_train_episodes: cfg.usize_req("nes.max_train_episodes")?,
        acceptance_eval_max_episodes: cfg
            .usize_opt("nes.acceptance_eval_max_episodes", 1000)?,
        test_episodes: cfg.usize_req("nes.test_episodes")?,
        early_out,
    };
    run.nes.validate().map_err(|e| ConfigError::Inconsistent(e.to_string()))?;
    cfg.finish()?;
    Ok(run)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_run_config(&text)
}

/// The tuned CartPole search preset (also shipped as configs/cartpole.cfg).
pub fn cartpole_preset() -> RunConfig {
    RunConfig {
        task: Task::CartPole,
        nes: NesConfig {
            step_size: 0.148,
            sigma: 0.0124,
            population: 16,
            iterations: 200,
            mirrored: true,
            transform: TransformKind::BetterAverage,
        },
        se_hidden: vec![83],
        se_activation: Activation::LeakyReLU,
        search_agent: AgentConfig {
            agent_kind: AgentKind::Ddqn,
            learning_rate: 0.000304,
            batch_size: 199,
            hidden_size: 57,
            hidden_layers: 1,
            target_update_rate: 0.00848,
            discount: 0.988,
            eps_init: 0.809,
            eps_min: 0.0371,
            eps_decay: 0.961,
            initial_episodes: 1,
            activation: Activation::Tanh,
            replay_capacity: 100_000,
            ..AgentConfig::defaults(AgentKind::Ddqn)
        },
        hp_variation: false,
        max_train_episodes: 1000,
        acceptance_eval_max_episodes: 300,
        test_episodes: 10,
        early_out: StopHeuristic { d: 10, c_diff: 0.01 },
    }
}

/// The tuned Acrobot search preset (also shipped as configs/acrobot.cfg).
pub fn acrobot_preset() -> RunConfig {
    RunConfig {
        task: Task::Acrobot,
        nes: NesConfig {
            step_size: 0.727,
            sigma: 0.0114,
            population: 16,
            iterations: 200,
            mirrored: true,
            transform: TransformKind::BetterAverage,
        },
        se_hidden: vec![167],
        se_activation: Activation::PReLU,
        search_agent: AgentConfig {
            agent_kind: AgentKind::Ddqn,
            learning_rate: 0.00222,
            batch_size: 149,
            hidden_size: 112,
            hidden_layers: 1,
            target_update_rate: 0.0209,
            discount: 0.991,
            eps_init: 0.904,
            eps_min: 0.0471,
            eps_decay: 0.899,
            initial_episodes: 20,
            activation: Activation::LeakyReLU,
            replay_capacity: 100_000,
            ..AgentConfig::defaults(AgentKind::Ddqn)
        },
        hp_variation: false,
        max_train_episodes: 1000,
        acceptance_eval_max_episodes: 300,
        test_episodes: 10,
        early_out: StopHeuristic { d: 10, c_diff: 0.01 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repo_config(name: &str) -> String {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn shipped_cartpole_preset_matches_code() {
        let parsed = parse_run_config(&repo_config("cartpole.cfg")).unwrap();
        assert_eq!(parsed, cartpole_preset());
    }

    #[test]
    fn shipped_acrobot_preset_matches_code() {
        let parsed = parse_run_config(&repo_config("acrobot.cfg")).unwrap();
        assert_eq!(parsed, acrobot_preset());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = repo_config("cartpole.cfg") + "\nnes.extra_knob = 3\n";
        assert!(matches!(parse_run_config(&text), Err(ConfigError::UnknownKey(k)) if k == "nes.extra_knob"));
    }

    #[test]
    fn missing_keys_are_reported_by_name() {
        let text: String = repo_config("cartpole.cfg")
            .lines()
            .filter(|l| !l.starts_with("nes.std_dev"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(matches!(parse_run_config(&text), Err(ConfigError::MissingKey(k)) if k == "nes.std_dev"));
    }

    #[test]
    fn env_audit_values_must_match_the_task() {
        let text = repo_config("cartpole.cfg").replace("env.solved_reward = 195", "env.solved_reward = 150");
        assert!(matches!(parse_run_config(&text), Err(ConfigError::Inconsistent(_))));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = KvConfig::parse("# heading\n\nfoo = 1 # trailing\n").unwrap();
        assert_eq!(cfg.usize_req("foo").unwrap(), 1);
        cfg.finish().unwrap();
    }

    #[test]
    fn malformed_lines_error_with_location() {
        let err = KvConfig::parse("a = 1\nnot a pair\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }));
    }
}
