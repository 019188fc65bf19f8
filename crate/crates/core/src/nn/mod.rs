//! Minimal neural-network engine: tensors, layer specs, exact
//! backpropagation and Adam.
//!
//! The engine is deliberately small — dense, conv2d, maxpool, relu, sigmoid,
//! softmax and an embedding concat point are the only compute layers — and
//! runs on plain `Vec` buffers. Training uses `f32`; the whole forward /
//! backward path is generic over the scalar so gradient checks can run in
//! `f64`.

mod adam;
mod arch;
pub mod gradcheck;
mod net;
mod sample;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use arch::{
    actor_arch, cae_decoder_spec, cae_encoder_spec, critic_spec_for, ddqn_centralized_spec,
    init_params, spec_param_count, ActorArch, CaeArch,
};
pub use net::{
    backward, backward_layers, flops_estimate, forward, forward_layers, grad_l2_norm,
    param_count, scale_grads, Cache, Gradients, LayerSpec, NetworkParams, NetworkSpec, ParamEntry,
};
pub use sample::{categorical_sample, greedy_argmax};
pub use tensor::{Real, Tensor};
