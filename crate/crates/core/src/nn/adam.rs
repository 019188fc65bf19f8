//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::net::{Gradients, NetworkParams};
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates, shape-matched to the parameters they track.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<(Tensor, Tensor)>,
    v: Vec<(Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(params: &NetworkParams, cfg: AdamConfig) -> Self {
        let m = params
            .entries
            .iter()
            .map(|e| (e.w.zeros_like(), e.b.zeros_like()))
            .collect();
        let v = params
            .entries
            .iter()
            .map(|e| (e.w.zeros_like(), e.b.zeros_like()))
            .collect();
        Self { cfg, step: 0, m, v }
    }
}

/// One Adam update. Deterministic given identical inputs; increments the step
/// counter. Non-finite gradients abort with a diagnostic instead of poisoning
/// the parameters.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if params.entries.len() != grads.entries.len() || params.entries.len() != state.m.len() {
        return Err(Error::Internal("adam: params/grads/state entry count mismatch".into()));
    }
    if !grads.all_finite() {
        return Err(Error::TrainAbort(format!(
            "non-finite gradient at optimizer step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as f32;
    let cfg = state.cfg;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);

    for i in 0..params.entries.len() {
        update_one(
            params.entries[i].w.data_mut(),
            grads.entries[i].w.data(),
            state.m[i].0.data_mut(),
            state.v[i].0.data_mut(),
            cfg,
            bc1,
            bc2,
        )?;
        update_one(
            params.entries[i].b.data_mut(),
            grads.entries[i].b.data(),
            state.m[i].1.data_mut(),
            state.v[i].1.data_mut(),
            cfg,
            bc1,
            bc2,
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update_one(
    p: &mut [f32],
    g: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    cfg: AdamConfig,
    bc1: f32,
    bc2: f32,
) -> Result<()> {
    if p.len() != g.len() {
        return Err(Error::Internal("adam: gradient shape mismatch".into()));
    }
    for j in 0..p.len() {
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
        let m_hat = m[j] / bc1;
        let v_hat = v[j] / bc2;
        p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::ParamEntry;

    fn one_param(val: f32) -> NetworkParams {
        NetworkParams {
            entries: vec![ParamEntry {
                name: "p".into(),
                w: Tensor::new(vec![2], vec![val, val]).unwrap(),
                b: Tensor::zeros(vec![1]),
            }],
        }
    }

    fn grads_of(params: &NetworkParams, gw: f32) -> Gradients {
        let mut g = Gradients::zeros_like(params, &[1]);
        for v in g.entries[0].w.data_mut() {
            *v = gw;
        }
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = one_param(0.7);
        let g = grads_of(&params, 0.0);
        let mut state = AdamState::new(&params, AdamConfig::default());
        adam_step(&mut params, &g, &mut state).unwrap();
        assert_eq!(params.entries[0].w.data(), &[0.7, 0.7]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_magnitude_is_bias_corrected_lr() {
        // From zeroed moments with constant gradient g:
        // m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps) ≈ lr * sign(g).
        let mut params = one_param(0.0);
        let g = grads_of(&params, 0.3);
        let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
        let mut state = AdamState::new(&params, cfg);
        adam_step(&mut params, &g, &mut state).unwrap();
        for v in params.entries[0].w.data() {
            assert!((v + 1e-3).abs() < 1e-7, "update {v} should be ≈ -lr");
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut params = one_param(0.5);
            let mut state = AdamState::new(&params, AdamConfig::default());
            for k in 0..10 {
                let g = grads_of(&params, 0.1 * (k as f32 + 1.0));
                adam_step(&mut params, &g, &mut state).unwrap();
            }
            params.entries[0].w.data().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut params = one_param(0.5);
        let g = grads_of(&params, f32::NAN);
        let mut state = AdamState::new(&params, AdamConfig::default());
        assert!(adam_step(&mut params, &g, &mut state).is_err());
    }
}
