//! Convolutional autoencoder over obstacle layouts.
//!
//! Trained on synthetic layouts before policy training; the encoder's
//! 128-float bottleneck then serves as the layout observation channel and
//! the decoder is discarded.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{layout, EmbeddingSource};
use crate::io::rng::substream;
use crate::nn::{
    adam_step, backward, cae_decoder_spec, cae_encoder_spec, forward, init_params, scale_grads,
    AdamConfig, AdamState, CaeArch, Gradients, NetworkParams, NetworkSpec, Tensor,
};
use crate::{Error, Result};

const GRAD_CHUNKS: usize = 8;

fn default_dataset_size() -> usize {
    500_000
}
fn default_lr() -> f32 {
    1e-3
}
fn default_epochs() -> usize {
    50
}
fn default_batch() -> usize {
    64
}
fn default_val_frac() -> f64 {
    0.1
}
fn default_sealed_frac() -> f64 {
    1.0 / 3.0
}
fn default_side() -> usize {
    32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CaeConfig {
    pub h: usize,
    pub w: usize,
    pub dataset_size: usize,
    pub lr: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_frac: f64,
    /// Fraction of layouts given a sealed region, matching the episode mix.
    pub sealed_frac: f64,
    /// Stop once validation MSE drops below this.
    pub early_stop_mse: Option<f32>,
    pub arch: CaeArch,
}

impl Default for CaeConfig {
    fn default() -> Self {
        Self {
            h: default_side(),
            w: default_side(),
            dataset_size: default_dataset_size(),
            lr: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            val_frac: default_val_frac(),
            sealed_frac: default_sealed_frac(),
            early_stop_mse: None,
            arch: CaeArch::default(),
        }
    }
}

/// Trained encoder: everything needed to embed an `h x w` layout.
#[derive(Debug, Clone)]
pub struct CaeModel {
    pub h: usize,
    pub w: usize,
    pub arch: CaeArch,
    pub enc_spec: NetworkSpec,
    pub enc: NetworkParams,
}

impl CaeModel {
    pub fn encode(&self, layout_map: &[f32]) -> Result<Vec<f32>> {
        if layout_map.len() != self.h * self.w {
            return Err(Error::Config(format!(
                "layout has {} cells, encoder expects {}x{}",
                layout_map.len(),
                self.h,
                self.w
            )));
        }
        let input = Tensor::new(vec![1, self.h, self.w], layout_map.to_vec())?;
        let (out, _) = forward(&self.enc_spec, &self.enc, &input, None)?;
        Ok(out.into_data())
    }

    pub fn embedding_len(&self) -> usize {
        self.arch.embed
    }

    pub fn into_embedding_source(self) -> EmbeddingSource {
        EmbeddingSource::Encoder { spec: self.enc_spec, params: self.enc }
    }
}

/// Synthetic layouts drawn from the same generator the environment uses
/// (random density, walls, blocks, occasional sealed region).
pub fn gen_layout_dataset<R: Rng>(count: usize, h: usize, w: usize, sealed_frac: f64, rng: &mut R) -> Vec<Vec<f32>> {
    (0..count)
        .map(|_| {
            let density = rng.gen::<f64>();
            let mut mask = layout::gen_layout(h, w, density, rng);
            if rng.gen::<f64>() < sealed_frac {
                let _ = layout::add_sealed_region(&mut mask, h, w, rng);
            }
            mask.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CaeEpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

struct ChunkResult {
    enc: Gradients,
    dec: Gradients,
    loss_sum: f64,
}

fn recon_loss_and_grad(
    enc_spec: &NetworkSpec,
    enc: &NetworkParams,
    dec_spec: &NetworkSpec,
    dec: &NetworkParams,
    sample: &[f32],
    h: usize,
    w: usize,
) -> Result<(f64, Gradients, Gradients)> {
    let n_pix = (h * w) as f32;
    let input = Tensor::new(vec![1, h, w], sample.to_vec())?;
    let (emb, enc_cache) = forward(enc_spec, enc, &input, None)?;
    let (recon, dec_cache) = forward(dec_spec, dec, &emb, None)?;
    let mut loss = 0.0f64;
    let mut d_recon = vec![0.0f32; recon.len()];
    for (i, (r, x)) in recon.data().iter().zip(sample).enumerate() {
        let diff = r - x;
        loss += (diff * diff) as f64;
        d_recon[i] = 2.0 * diff / n_pix;
    }
    loss /= n_pix as f64;
    let dec_grads = backward(dec_spec, dec, &dec_cache, &Tensor::new(vec![1, h, w], d_recon)?)?;
    let d_emb = dec_grads.d_input.clone().reshaped(vec![emb.len()])?;
    let enc_grads = backward(enc_spec, enc, &enc_cache, &d_emb)?;
    Ok((loss, enc_grads, dec_grads))
}

fn mean_val_mse(
    enc_spec: &NetworkSpec,
    enc: &NetworkParams,
    dec_spec: &NetworkSpec,
    dec: &NetworkParams,
    samples: &[&Vec<f32>],
    h: usize,
    w: usize,
) -> Result<f64> {
    let losses: Vec<Result<f64>> = samples
        .par_iter()
        .map(|s| {
            let input = Tensor::new(vec![1, h, w], s.to_vec())?;
            let (emb, _) = forward(enc_spec, enc, &input, None)?;
            let (recon, _) = forward(dec_spec, dec, &emb, None)?;
            let mut loss = 0.0f64;
            for (r, x) in recon.data().iter().zip(s.iter()) {
                let diff = r - x;
                loss += (diff * diff) as f64;
            }
            Ok(loss / (h * w) as f64)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Trains encoder and decoder jointly on per-pixel reconstruction MSE,
/// returning the encoder (the decoder is dropped) and the loss curve.
pub fn train_cae(dataset: &[Vec<f32>], cfg: &CaeConfig, seed: u64) -> Result<(CaeModel, Vec<CaeEpochStats>)> {
    if dataset.is_empty() {
        return Err(Error::Config("empty layout dataset".into()));
    }
    let (h, w) = (cfg.h, cfg.w);
    for (i, s) in dataset.iter().enumerate() {
        if s.len() != h * w {
            return Err(Error::Config(format!(
                "layout {i} has {} cells, expected {}",
                s.len(),
                h * w
            )));
        }
    }
    let enc_spec = cae_encoder_spec(h, w, &cfg.arch)?;
    let dec_spec = cae_decoder_spec(h, w, &cfg.arch)?;
    let mut enc = init_params(&enc_spec, &mut substream(seed, "cae-init", 0), None)?;
    let mut dec = init_params(&dec_spec, &mut substream(seed, "cae-init", 1), None)?;
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut enc_adam = AdamState::new(&enc, adam_cfg);
    let mut dec_adam = AdamState::new(&dec, adam_cfg);

    // Deterministic 90/10 split.
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut split_rng = substream(seed, "cae-split", 0);
    for i in (1..order.len()).rev() {
        let j = split_rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_val = ((dataset.len() as f64 * cfg.val_frac) as usize).min(dataset.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_set: Vec<&Vec<f32>> = val_idx.iter().map(|&i| &dataset[i]).collect();
    let mut train_order: Vec<usize> = train_idx.to_vec();

    let mut curve = Vec::new();
    let mut shuffle_rng: ChaCha8Rng = substream(seed, "cae-shuffle", 0);
    for epoch in 0..cfg.epochs {
        for i in (1..train_order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            train_order.swap(i, j);
        }
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for batch in train_order.chunks(cfg.batch_size) {
            let chunk_size = batch.len().div_ceil(GRAD_CHUNKS);
            let chunks: Vec<ChunkResult> = batch
                .par_chunks(chunk_size)
                .map(|ix| {
                    let mut enc_g = Gradients::zeros_like(&enc, &enc_spec.input_shape);
                    let mut dec_g = Gradients::zeros_like(&dec, &dec_spec.input_shape);
                    let mut loss_sum = 0.0f64;
                    for &i in ix {
                        let (loss, eg, dg) = recon_loss_and_grad(
                            &enc_spec, &enc, &dec_spec, &dec, &dataset[i], h, w,
                        )?;
                        enc_g.accumulate(&eg);
                        dec_g.accumulate(&dg);
                        loss_sum += loss;
                    }
                    Ok(ChunkResult { enc: enc_g, dec: dec_g, loss_sum })
                })
                .collect::<Result<_>>()?;
            let mut enc_grads = Gradients::zeros_like(&enc, &enc_spec.input_shape);
            let mut dec_grads = Gradients::zeros_like(&dec, &dec_spec.input_shape);
            let mut loss_sum = 0.0f64;
            for c in &chunks {
                enc_grads.accumulate(&c.enc);
                dec_grads.accumulate(&c.dec);
                loss_sum += c.loss_sum;
            }
            if !loss_sum.is_finite() {
                return Err(Error::TrainAbort(format!(
                    "reconstruction loss diverged in epoch {epoch}"
                )));
            }
            let inv = 1.0 / batch.len() as f32;
            scale_grads(&mut enc_grads, inv);
            scale_grads(&mut dec_grads, inv);
            adam_step(&mut enc, &enc_grads, &mut enc_adam)?;
            adam_step(&mut dec, &dec_grads, &mut dec_adam)?;
            epoch_loss += loss_sum / batch.len() as f64;
            batches += 1;
        }
        let train_mse = epoch_loss / batches.max(1) as f64;
        let val_mse = if val_set.is_empty() {
            train_mse
        } else {
            mean_val_mse(&enc_spec, &enc, &dec_spec, &dec, &val_set, h, w)?
        };
        curve.push(CaeEpochStats { epoch, train_mse, val_mse });
        if let Some(stop) = cfg.early_stop_mse {
            if val_mse < stop as f64 {
                break;
            }
        }
    }
    let model = CaeModel { h, w, arch: cfg.arch, enc_spec, enc };
    Ok((model, curve))
}
