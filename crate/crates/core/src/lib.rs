//! Multi-agent reinforcement-learning search for radioactive sources on
//! obstructed grid worlds.
//!
//! The crate bundles everything needed to train and evaluate cooperative
//! sensing agents that look for a radiation source whose existence and
//! reachability are uncertain:
//!
//! - [`nn`]: a small dense/convolutional network engine with exact
//!   backpropagation and Adam, sized for the ~350k-parameter policy CNN.
//! - [`env`]: the grid-world simulator — obstacle layouts, Poisson count
//!   physics, joint-action stepping, action masking, majority-vote
//!   declarations.
//! - [`obs`]: observation maps and their reduction to the nine windowed /
//!   downsampled channels plus a layout embedding.
//! - [`cae`]: the convolutional autoencoder that produces layout embeddings.
//! - [`reward`]: BFS distance fields and the shaped team reward.
//! - [`ppo`]: clipped-surrogate policy optimization with GAE over parallel
//!   rollouts, plus the greedy evaluation protocol.
//! - [`estimator`]: the transfer-learned coordinate regressor for
//!   unreachable targets and the combined two-headed model.
//! - [`baselines`]: uniform-sweep / random / reduced-action comparison
//!   policies and the paired-seed benchmark harness.
//! - [`io`]: checkpoints, run configuration, metrics, episode traces and
//!   seed derivation.

pub mod env;
pub mod error;
pub mod nn;
pub mod obs;
pub mod reward;

pub use error::{Error, Result};
