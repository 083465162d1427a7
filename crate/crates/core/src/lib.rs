//! Game-theoretic generalization for reinforcement learning.
//!
//! An agent trains a population of policies against an adversary that
//! reweights a finite task set inside box bounds around the base
//! distribution. The loop alternates a meta-learned best response
//! ([`maml_oracle`]), payoff evaluation, and a restricted replicator-dynamics
//! meta-solver ([`metagame`]); [`eval_protocol`] scores the resulting mixture
//! after K-shot fine-tuning against a worst-case task distribution.

pub mod config;
pub mod env_suite;
pub mod error;
pub mod eval_protocol;
pub mod maml_oracle;
pub mod metagame;
pub mod policy_net;
pub mod psro_loop;
pub mod seeding;
pub mod stats;

pub use error::{GirlError, Result};
