//! Meta-learned price-setting agents for behavioral demand response in
//! office buildings.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: the fixed 2×256 tanh actor-critic network, its hand-derived
//!   gradients and the ADAM/SGD optimizers.
//! - [`env`]: the day-step office simulator with four occupant response
//!   models and the cost/penalty reward.
//! - [`ppo`]: rollout collection and the clipped-surrogate update.
//! - [`maml`]: meta-training of a shared initialization over a task
//!   distribution, plus checkpointing.
//! - [`experiments`]: the adaptation and checkpoint-ablation protocols.
//! - [`config`], [`csv`], [`plot`], [`cli`]: configuration, output files and
//!   command dispatch for the `metadr` binary.

// `!(x > 0.0)` is used on purpose so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csv;
pub mod env;
pub mod error;
pub mod experiments;
pub mod maml;
pub mod nn;
pub mod plot;
pub mod ppo;
pub mod seed;

pub use error::{Error, Result};
