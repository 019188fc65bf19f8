//! Clipped-surrogate policy optimization with generalized advantage
//! estimation over parallel rollouts, plus the periodic greedy evaluation
//! protocol.

pub mod buffer;
pub mod policy;
pub mod rollout;
pub mod train;
pub mod update;

pub use buffer::{compute_gae, Advantages, RolloutBuffer};
pub use policy::{actor_sample_loss, critic_sample_loss, masked_entropy, masked_probs};
pub use rollout::{collect_rollout, evaluate_policy, greedy_action, EvalMetrics, PolicyNets, Worker};
pub use train::{train, TrainConfig, TrainOutputs};
pub use update::{ppo_update, UpdateConfig, UpdateStats};
