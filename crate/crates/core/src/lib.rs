//! seforge: learning synthetic training environments for RL agents.
//!
//! A synthetic environment (SE) is a small neural network standing in for a
//! real task's dynamics and reward. The outer loop evolves SE parameters
//! with natural evolution strategies; the inner loop trains fresh agents on
//! the candidate SEs and scores them on the real task. Agents trained on a
//! learned SE solve the real task with substantially fewer environment steps
//! and transfer across agent types.

pub mod agents;
pub mod config;
pub mod env;
pub mod experiments;
pub mod hp;
pub mod mlp;
pub mod nes;
pub mod oracle;
pub mod seed;
pub mod synth;
pub mod train;
pub mod verify;

pub use env::Task;
