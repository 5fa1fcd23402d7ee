//! Desk-scale laboratory for diversity-incentivized reinforcement learning
//! with verifiable rewards.
//!
//! The crate provides:
//! - group diversity metrics (BLEU-based textual diversity and formula-set
//!   equational diversity) over response groups,
//! - potential-based intrinsic-reward shaping with clipping, schedules, and
//!   conditional application,
//! - GRPO group advantages and the clipped surrogate objective with exact
//!   gradients for a tabular context softmax policy,
//! - a numerical verifier for optimal-policy invariance under potential
//!   shaping on tabular MDPs,
//! - a synthetic verifiable-reasoning environment with an enumerable answer
//!   set, and the training loop tying the pieces together.

pub mod bleu;
pub mod config;
pub mod diversity;
pub mod env;
pub mod formulas;
pub mod group;
pub mod grpo;
pub mod invariance;
pub mod mdp;
pub mod oracles;
pub mod policy;
pub mod rng;
pub mod shaping;
pub mod text;
pub mod trainer;
