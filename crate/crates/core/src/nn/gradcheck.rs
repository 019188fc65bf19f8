//! Finite-difference gradient checking in `f64`.
//!
//! The oracle perturbs every parameter, input and embedding scalar by ±eps,
//! evaluates a random linear functional of the network output through
//! [`forward`](super::forward) alone, and compares the central difference
//! against the analytic [`backward`](super::backward) result.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{backward, forward, LayerSpec, NetworkSpec};
use super::tensor::Tensor;
use super::{init_params, NetworkParams};
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

fn rel_err(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs()).max(1e-8);
    (a - n).abs() / denom
}

/// Random values with pairwise spacing >= 0.02 and magnitude >= 0.05, so
/// perturbations never cross a relu kink or flip a pooling argmax.
fn spaced_values<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut vals: Vec<f64> = (0..n)
        .map(|k| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * (0.05 + 0.02 * k as f64)
        })
        .collect();
    // Fisher-Yates shuffle for position randomness.
    for i in (1..vals.len()).rev() {
        let j = rng.gen_range(0..=i);
        vals.swap(i, j);
    }
    vals
}

/// Checks every analytic gradient of `spec` (parameters, input, embedding)
/// against a central finite difference. Returns the worst relative error.
pub fn check_network(spec: &NetworkSpec, seed: u64, eps: f64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params32 = init_params(spec, &mut rng, None)?;
    let mut params: NetworkParams<f64> = params32.cast();
    // Cast loses nothing but keep parameters away from exact zero regions too.
    for e in params.entries.iter_mut() {
        for v in e.b.data_mut() {
            *v = rng.gen_range(-0.3..0.3);
        }
    }
    let in_len: usize = spec.input_shape.iter().product();
    let mut input = Tensor::<f64>::new(spec.input_shape.clone(), spaced_values(in_len, &mut rng))?;
    let embedding: Option<Vec<f64>> = spec
        .embedding_len()
        .map(|len| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let out_len: usize = spec.validate()?.iter().product();
    let coeffs: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let loss = |params: &NetworkParams<f64>, input: &Tensor<f64>, emb: Option<&[f64]>| -> f64 {
        let (out, _) = forward(spec, params, input, emb).expect("forward in gradcheck");
        out.data().iter().zip(&coeffs).map(|(o, c)| o * c).sum()
    };

    let (_, cache) = forward(&spec.clone(), &params, &input, embedding.as_deref())?;
    let upstream = Tensor::<f64>::new(vec![out_len], coeffs.clone())?;
    let grads = backward(spec, &params, &cache, &upstream)?;

    let mut max_err = 0.0f64;
    let mut checked = 0usize;

    // Parameters.
    for i in 0..params.entries.len() {
        for which in 0..2 {
            let len = if which == 0 { params.entries[i].w.len() } else { params.entries[i].b.len() };
            for j in 0..len {
                let orig = {
                    let t = if which == 0 { &mut params.entries[i].w } else { &mut params.entries[i].b };
                    let orig = t.data()[j];
                    t.data_mut()[j] = orig + eps;
                    orig
                };
                let plus = loss(&params, &input, embedding.as_deref());
                {
                    let t = if which == 0 { &mut params.entries[i].w } else { &mut params.entries[i].b };
                    t.data_mut()[j] = orig - eps;
                }
                let minus = loss(&params, &input, embedding.as_deref());
                {
                    let t = if which == 0 { &mut params.entries[i].w } else { &mut params.entries[i].b };
                    t.data_mut()[j] = orig;
                }
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic = if which == 0 {
                    grads.entries[i].w.data()[j]
                } else {
                    grads.entries[i].b.data()[j]
                };
                max_err = max_err.max(rel_err(analytic, numeric));
                checked += 1;
            }
        }
    }

    // Input.
    for j in 0..input.len() {
        let orig = input.data()[j];
        input.data_mut()[j] = orig + eps;
        let plus = loss(&params, &input, embedding.as_deref());
        input.data_mut()[j] = orig - eps;
        let minus = loss(&params, &input, embedding.as_deref());
        input.data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        max_err = max_err.max(rel_err(grads.d_input.data()[j], numeric));
        checked += 1;
    }

    // Embedding.
    if let Some(mut emb) = embedding {
        let d_emb = grads.d_embedding.as_ref().expect("embedding gradient");
        for j in 0..emb.len() {
            let orig = emb[j];
            emb[j] = orig + eps;
            let plus = loss(&params, &input, Some(&emb));
            emb[j] = orig - eps;
            let minus = loss(&params, &input, Some(&emb));
            emb[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            max_err = max_err.max(rel_err(d_emb[j], numeric));
            checked += 1;
        }
    }

    Ok(CheckReport { max_rel_err: max_err, checked })
}

/// Small randomized spec exercising one layer kind (each spec stays tiny so
/// exhaustive per-scalar finite differences remain fast).
pub fn random_spec_for_kind(kind: &str, rng: &mut ChaCha8Rng) -> NetworkSpec {
    match kind {
        "conv2d" => {
            let in_ch = rng.gen_range(1..=3);
            let out_ch = rng.gen_range(1..=3);
            let k = rng.gen_range(1..=3);
            let stride = rng.gen_range(1..=2);
            let pad = rng.gen_range(0..=1);
            let side = rng.gen_range(k + 1..=k + 4);
            NetworkSpec::new(
                vec![in_ch, side, side],
                vec![LayerSpec::Conv2d {
                    name: "conv".into(),
                    in_ch,
                    out_ch,
                    kh: k,
                    kw: k,
                    stride,
                    pad,
                }],
            )
            .expect("conv spec")
        }
        "maxpool2d" => {
            let c = rng.gen_range(1..=3);
            let stride = rng.gen_range(1..=2);
            let side = rng.gen_range(3..=6);
            NetworkSpec::new(
                vec![c, side, side],
                vec![LayerSpec::MaxPool2d { k: 2, stride }],
            )
            .expect("pool spec")
        }
        "fully-connected" => {
            let inf = rng.gen_range(1..=10);
            let outf = rng.gen_range(1..=6);
            NetworkSpec::new(
                vec![inf],
                vec![LayerSpec::Dense { name: "fc".into(), in_features: inf, out_features: outf }],
            )
            .expect("dense spec")
        }
        "relu" => {
            let n = rng.gen_range(2..=12);
            NetworkSpec::new(vec![n], vec![LayerSpec::Relu]).expect("relu spec")
        }
        "sigmoid" => {
            let n = rng.gen_range(2..=12);
            NetworkSpec::new(vec![n], vec![LayerSpec::Sigmoid]).expect("sigmoid spec")
        }
        "softmax" => {
            let n = rng.gen_range(2..=12);
            NetworkSpec::new(vec![n], vec![LayerSpec::Softmax]).expect("softmax spec")
        }
        "concat-point" => {
            let n = rng.gen_range(2..=8);
            let len = rng.gen_range(1..=6);
            let total = n + len;
            NetworkSpec::new(
                vec![n],
                vec![
                    LayerSpec::ConcatEmbed { len },
                    LayerSpec::Dense { name: "fc".into(), in_features: total, out_features: 3 },
                ],
            )
            .expect("concat spec")
        }
        other => panic!("unknown layer kind {other}"),
    }
}

/// All layer kinds covered by [`random_spec_for_kind`].
pub const LAYER_KINDS: [&str; 7] = [
    "conv2d",
    "maxpool2d",
    "fully-connected",
    "relu",
    "sigmoid",
    "softmax",
    "concat-point",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_kind_passes_a_quick_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for kind in LAYER_KINDS {
            for rep in 0..3 {
                let spec = random_spec_for_kind(kind, &mut rng);
                let report = check_network(&spec, 1000 + rep, 1e-5).unwrap();
                assert!(
                    report.max_rel_err < 1e-4,
                    "{kind} rep {rep}: rel err {} over {} scalars",
                    report.max_rel_err,
                    report.checked
                );
            }
        }
    }

    #[test]
    fn composed_network_passes() {
        // conv -> relu -> pool -> conv -> relu -> concat -> dense -> relu -> dense -> softmax
        let spec = crate::nn::ActorArch {
            n_maps: 2,
            window: 7,
            embed: 4,
            conv1: 2,
            conv2: 3,
            hidden: 6,
            actions: 5,
        }
        .actor_spec()
        .unwrap();
        let report = check_network(&spec, 77, 1e-5).unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }
}
