//! Token-level proximal policy optimization for personalized query generation.
//!
//! The crate is organized bottom-up:
//!
//! - [`datagen`]: synthetic search-session corpus, toy chunk tokenizers, the
//!   rule-based word annotator and the word-to-token reward mapping.
//! - [`reward_model`]: the three-class token reward model with its local
//!   (weighted cross-entropy) and global (sentence consistency) losses, class
//!   balancing and the length-weighted penalty.
//! - [`policy`]: a tiny autoregressive policy/value network with sampling and
//!   log-probabilities.
//! - [`tppo`]: advantages, clipped token-level surrogate, the trainer with a
//!   sentence-level baseline mode, and the exact tabular KL-regularized oracle.
//! - [`harness`]: evaluation metrics, pipelines, ablations and report output.

pub mod checkpoint;
pub mod datagen;
mod error;
pub mod harness;
pub mod nn;
pub mod optim;
pub mod policy;
pub mod reward_model;
pub mod seed;
pub mod tppo;

pub use error::{Error, Result};
