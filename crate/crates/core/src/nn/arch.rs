//! Network architecture builders and weight initialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{LayerSpec, NetworkParams, NetworkSpec, ParamEntry};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Policy/value CNN family: two conv blocks over the stacked observation
/// maps, an embedding concat, one hidden dense layer, and a task head.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActorArch {
    pub n_maps: usize,
    pub window: usize,
    pub embed: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl Default for ActorArch {
    fn default() -> Self {
        // hidden = 1280 lands the action head at ~349k trainable scalars.
        Self { n_maps: 9, window: 7, embed: 128, conv1: 16, conv2: 32, hidden: 1280, actions: 11 }
    }
}

impl ActorArch {
    /// Spatial side length after conv(3) -> pool(2, stride 1) -> conv(3).
    pub fn feature_side(&self) -> Result<usize> {
        if self.window < 7 || self.window % 2 == 0 {
            return Err(Error::Config(format!(
                "observation window must be odd and >= 7, got {}",
                self.window
            )));
        }
        Ok(self.window - 5)
    }

    pub fn flat_features(&self) -> Result<usize> {
        Ok(self.conv2 * self.feature_side()?.pow(2))
    }

    fn trunk_layers(&self) -> Result<Vec<LayerSpec>> {
        self.feature_side()?;
        Ok(vec![
            LayerSpec::Conv2d {
                name: "conv1".into(),
                in_ch: self.n_maps,
                out_ch: self.conv1,
                kh: 3,
                kw: 3,
                stride: 1,
                pad: 0,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { k: 2, stride: 1 },
            LayerSpec::Conv2d {
                name: "conv2".into(),
                in_ch: self.conv1,
                out_ch: self.conv2,
                kh: 3,
                kw: 3,
                stride: 1,
                pad: 0,
            },
            LayerSpec::Relu,
            LayerSpec::ConcatEmbed { len: self.embed },
            LayerSpec::Dense {
                name: "fc1".into(),
                in_features: self.flat_features()? + self.embed,
                out_features: self.hidden,
            },
            LayerSpec::Relu,
        ])
    }

    /// Action policy: trunk -> dense head -> softmax over `actions` outputs.
    pub fn actor_spec(&self) -> Result<NetworkSpec> {
        let mut layers = self.trunk_layers()?;
        layers.push(LayerSpec::Dense {
            name: "fc2".into(),
            in_features: self.hidden,
            out_features: self.actions,
        });
        layers.push(LayerSpec::Softmax);
        NetworkSpec::new(vec![self.n_maps, self.window, self.window], layers)
    }

    /// Value function: identical trunk with a single linear output.
    pub fn critic_spec(&self) -> Result<NetworkSpec> {
        let mut layers = self.trunk_layers()?;
        layers.push(LayerSpec::Dense {
            name: "fc2".into(),
            in_features: self.hidden,
            out_features: 1,
        });
        NetworkSpec::new(vec![self.n_maps, self.window, self.window], layers)
    }

    /// Layer count of the shared trunk (everything before the task head).
    pub fn trunk_len(&self) -> usize {
        8
    }
}

/// Convenience constructor used by configs.
pub fn actor_arch(n_maps: usize, window: usize, embed: usize, hidden: usize, actions: usize) -> ActorArch {
    ActorArch { n_maps, window, embed, hidden, actions, ..ActorArch::default() }
}

/// Critic spec for an existing actor architecture.
pub fn critic_spec_for(arch: &ActorArch) -> Result<NetworkSpec> {
    arch.critic_spec()
}

/// Layout autoencoder: 3 strided conv + 2 dense for the encoder (last dense
/// is the embedding), 2 dense + 2 conv for the decoder.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CaeArch {
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    pub fc: usize,
    pub embed: usize,
    pub dec_ch: usize,
}

impl Default for CaeArch {
    fn default() -> Self {
        Self { c1: 8, c2: 16, c3: 16, fc: 256, embed: 128, dec_ch: 8 }
    }
}

fn strided_out(side: usize) -> usize {
    // k=3, stride=2, pad=1
    (side - 1) / 2 + 1
}

impl CaeArch {
    pub fn bottleneck_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (strided_out(strided_out(strided_out(h))), strided_out(strided_out(strided_out(w))))
    }
}

pub fn cae_encoder_spec(h: usize, w: usize, arch: &CaeArch) -> Result<NetworkSpec> {
    let (bh, bw) = arch.bottleneck_dims(h, w);
    NetworkSpec::new(
        vec![1, h, w],
        vec![
            LayerSpec::Conv2d { name: "conv1".into(), in_ch: 1, out_ch: arch.c1, kh: 3, kw: 3, stride: 2, pad: 1 },
            LayerSpec::Relu,
            LayerSpec::Conv2d { name: "conv2".into(), in_ch: arch.c1, out_ch: arch.c2, kh: 3, kw: 3, stride: 2, pad: 1 },
            LayerSpec::Relu,
            LayerSpec::Conv2d { name: "conv3".into(), in_ch: arch.c2, out_ch: arch.c3, kh: 3, kw: 3, stride: 2, pad: 1 },
            LayerSpec::Relu,
            LayerSpec::Dense { name: "fc1".into(), in_features: arch.c3 * bh * bw, out_features: arch.fc },
            LayerSpec::Relu,
            LayerSpec::Dense { name: "fc2".into(), in_features: arch.fc, out_features: arch.embed },
        ],
    )
}

pub fn cae_decoder_spec(h: usize, w: usize, arch: &CaeArch) -> Result<NetworkSpec> {
    NetworkSpec::new(
        vec![arch.embed],
        vec![
            LayerSpec::Dense { name: "fc1".into(), in_features: arch.embed, out_features: arch.fc },
            LayerSpec::Relu,
            LayerSpec::Dense { name: "fc2".into(), in_features: arch.fc, out_features: h * w },
            LayerSpec::Relu,
            LayerSpec::Reshape { shape: vec![1, h, w] },
            LayerSpec::Conv2d { name: "conv1".into(), in_ch: 1, out_ch: arch.dec_ch, kh: 3, kw: 3, stride: 1, pad: 1 },
            LayerSpec::Relu,
            LayerSpec::Conv2d { name: "conv2".into(), in_ch: arch.dec_ch, out_ch: 1, kh: 3, kw: 3, stride: 1, pad: 1 },
            LayerSpec::Sigmoid,
        ],
    )
}

/// Hypothetical centralized single-model variant used for complexity
/// comparisons only: one network observes every agent's maps (two extra
/// channels per agent beyond a 7-channel base) and outputs the joint action
/// space of size `actions^n_agents`. Never trained; exists so its parameter
/// and FLOP counts can be tabulated analytically.
pub fn ddqn_centralized_spec(n_agents: usize, base: &ActorArch) -> Result<NetworkSpec> {
    let joint_actions = (base.actions as u64).pow(n_agents as u32);
    let arch = ActorArch { n_maps: 2 * n_agents + 7, actions: joint_actions as usize, ..*base };
    arch.actor_spec()
}

/// Parameter count computed from the spec alone (no allocation), for specs
/// too large to instantiate.
pub fn spec_param_count(spec: &NetworkSpec) -> u64 {
    spec.layers
        .iter()
        .map(|l| match l {
            LayerSpec::Conv2d { in_ch, out_ch, kh, kw, .. } => {
                (*out_ch * *in_ch * *kh * *kw + *out_ch) as u64
            }
            LayerSpec::Dense { in_features, out_features, .. } => {
                (*in_features * *out_features + *out_features) as u64
            }
            _ => 0,
        })
        .sum()
}

/// He-uniform initialization for every conv/dense layer; biases start at
/// zero. When `final_dense_scale` is set the last dense layer's weights are
/// multiplied by it (policy heads start near-uniform).
pub fn init_params<R: Rng>(
    spec: &NetworkSpec,
    rng: &mut R,
    final_dense_scale: Option<f32>,
) -> Result<NetworkParams> {
    spec.validate()?;
    let last_dense = spec
        .layers
        .iter()
        .rposition(|l| matches!(l, LayerSpec::Dense { .. }));
    let mut entries = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv2d { name, in_ch, out_ch, kh, kw, .. } => {
                let fan_in = in_ch * kh * kw;
                let limit = (6.0f32 / fan_in as f32).sqrt();
                let n = out_ch * in_ch * kh * kw;
                let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
                entries.push(ParamEntry {
                    name: name.clone(),
                    w: Tensor::new(vec![*out_ch, *in_ch, *kh, *kw], data)?,
                    b: Tensor::zeros(vec![*out_ch]),
                });
            }
            LayerSpec::Dense { name, in_features, out_features } => {
                let limit = (6.0f32 / *in_features as f32).sqrt();
                let scale = if Some(i) == last_dense { final_dense_scale.unwrap_or(1.0) } else { 1.0 };
                let n = in_features * out_features;
                let data: Vec<f32> = (0..n).map(|_| scale * rng.gen_range(-limit..limit)).collect();
                entries.push(ParamEntry {
                    name: name.clone(),
                    w: Tensor::new(vec![*out_features, *in_features], data)?,
                    b: Tensor::zeros(vec![*out_features]),
                });
            }
            _ => {}
        }
    }
    Ok(NetworkParams { entries })
}
