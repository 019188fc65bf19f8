//! Layer specs, forward pass, exact backpropagation, parameter/FLOP counting.

use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::{Error, Result};

/// One layer of a feed-forward network.
///
/// `Conv2d`/`Dense` carry parameters; everything else is shape bookkeeping or
/// a fixed nonlinearity. `ConcatEmbed` flattens the running activation and
/// appends an externally supplied embedding vector — at most one per network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        name: String,
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    },
    MaxPool2d {
        k: usize,
        stride: usize,
    },
    Dense {
        name: String,
        in_features: usize,
        out_features: usize,
    },
    Relu,
    Sigmoid,
    Softmax,
    ConcatEmbed {
        len: usize,
    },
    /// Shape-only adapter (free reinterpretation of the flat buffer).
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn param_name(&self) -> Option<&str> {
        match self {
            LayerSpec::Conv2d { name, .. } | LayerSpec::Dense { name, .. } => Some(name),
            _ => None,
        }
    }
}

/// An ordered stack of layers plus the expected input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return Err(Error::Config(format!(
            "conv/pool kernel {k} larger than padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self { input_shape, layers };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks that consecutive layer dims compose; returns the output shape.
    pub fn validate(&self) -> Result<Vec<usize>> {
        self.shape_after(self.layers.len())
    }

    /// Activation shape after the first `n_layers` layers.
    pub fn shape_after(&self, n_layers: usize) -> Result<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        let mut concat_seen = false;
        for (i, layer) in self.layers.iter().take(n_layers).enumerate() {
            shape = match layer {
                LayerSpec::Conv2d { in_ch, out_ch, kh, kw, stride, pad, name } => {
                    if shape.len() != 3 || shape[0] != *in_ch {
                        return Err(Error::Config(format!(
                            "layer {i} ({name}): conv expects [{in_ch}, h, w], got {shape:?}"
                        )));
                    }
                    let oh = conv_out_dim(shape[1], *kh, *stride, *pad)?;
                    let ow = conv_out_dim(shape[2], *kw, *stride, *pad)?;
                    vec![*out_ch, oh, ow]
                }
                LayerSpec::MaxPool2d { k, stride } => {
                    if shape.len() != 3 {
                        return Err(Error::Config(format!(
                            "layer {i}: maxpool expects [c, h, w], got {shape:?}"
                        )));
                    }
                    let oh = conv_out_dim(shape[1], *k, *stride, 0)?;
                    let ow = conv_out_dim(shape[2], *k, *stride, 0)?;
                    vec![shape[0], oh, ow]
                }
                LayerSpec::Dense { in_features, out_features, name } => {
                    let flat: usize = shape.iter().product();
                    if flat != *in_features {
                        return Err(Error::Config(format!(
                            "layer {i} ({name}): dense expects {in_features} features, got {flat}"
                        )));
                    }
                    vec![*out_features]
                }
                LayerSpec::Relu | LayerSpec::Sigmoid => shape,
                LayerSpec::Softmax => vec![shape.iter().product()],
                LayerSpec::ConcatEmbed { len } => {
                    if concat_seen {
                        return Err(Error::Config(
                            "at most one concat point per network".into(),
                        ));
                    }
                    concat_seen = true;
                    let flat: usize = shape.iter().product();
                    vec![flat + len]
                }
                LayerSpec::Reshape { shape: to } => {
                    let flat: usize = shape.iter().product();
                    let target: usize = to.iter().product();
                    if flat != target {
                        return Err(Error::Config(format!(
                            "layer {i}: reshape {shape:?} -> {to:?} changes volume"
                        )));
                    }
                    to.clone()
                }
            };
        }
        Ok(shape)
    }

    pub fn embedding_len(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            LayerSpec::ConcatEmbed { len } => Some(*len),
            _ => None,
        })
    }

    /// Standard multiply-add FLOP count (2 per MAC) over conv and dense layers.
    pub fn flops(&self) -> Result<u64> {
        let mut shape = self.input_shape.clone();
        let mut total: u64 = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv2d { in_ch, out_ch, kh, kw, stride, pad, .. } => {
                    let oh = conv_out_dim(shape[1], *kh, *stride, *pad)?;
                    let ow = conv_out_dim(shape[2], *kw, *stride, *pad)?;
                    let macs = (out_ch * oh * ow * in_ch * kh * kw) as u64;
                    total += 2 * macs;
                    shape = vec![*out_ch, oh, ow];
                }
                LayerSpec::Dense { in_features, out_features, .. } => {
                    total += 2 * (*in_features as u64) * (*out_features as u64);
                    shape = vec![*out_features];
                }
                _ => {
                    shape = self.shape_after(i + 1)?;
                }
            }
        }
        Ok(total)
    }
}

/// Named weight/bias pair for one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<S: Real = f32> {
    pub name: String,
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

/// Ordered parameters for a [`NetworkSpec`], one entry per conv/dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<S: Real = f32> {
    pub entries: Vec<ParamEntry<S>>,
}

impl<S: Real> NetworkParams<S> {
    pub fn cast<T: Real>(&self) -> NetworkParams<T> {
        NetworkParams {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry { name: e.name.clone(), w: e.w.cast(), b: e.b.cast() })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.w.all_finite() && e.b.all_finite())
    }

    pub fn zeros_like(&self) -> NetworkParams<S> {
        NetworkParams {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    w: e.w.zeros_like(),
                    b: e.b.zeros_like(),
                })
                .collect(),
        }
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry<S>> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Total trainable scalar count.
pub fn param_count<S: Real>(params: &NetworkParams<S>) -> usize {
    params.entries.iter().map(|e| e.w.len() + e.b.len()).sum()
}

/// See [`NetworkSpec::flops`].
pub fn flops_estimate(spec: &NetworkSpec) -> Result<u64> {
    spec.flops()
}

enum LayerCache<S: Real> {
    Conv { input: Tensor<S> },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Dense { input: Vec<S> },
    Relu { input: Tensor<S> },
    Sigmoid { output: Tensor<S> },
    Softmax { output: Tensor<S> },
    Concat { input_shape: Vec<usize>, split: usize },
    Reshape { input_shape: Vec<usize> },
}

/// Activation record from [`forward`], sufficient for [`backward`].
pub struct Cache<S: Real = f32> {
    items: Vec<LayerCache<S>>,
    output_shape: Vec<usize>,
}

/// Per-parameter gradients plus the gradient w.r.t. network input/embedding.
#[derive(Debug, Clone)]
pub struct Gradients<S: Real = f32> {
    pub entries: Vec<ParamEntry<S>>,
    pub d_input: Tensor<S>,
    pub d_embedding: Option<Vec<S>>,
}

impl<S: Real> Gradients<S> {
    pub fn zeros_like(params: &NetworkParams<S>, input_shape: &[usize]) -> Self {
        Gradients {
            entries: params.zeros_like().entries,
            d_input: Tensor::zeros(input_shape.to_vec()),
            d_embedding: None,
        }
    }

    /// Element-wise accumulation; shapes must match.
    pub fn accumulate(&mut self, other: &Gradients<S>) {
        debug_assert_eq!(self.entries.len(), other.entries.len());
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in a.w.data_mut().iter_mut().zip(b.w.data()) {
                *x = *x + *y;
            }
            for (x, y) in a.b.data_mut().iter_mut().zip(b.b.data()) {
                *x = *x + *y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.w.all_finite() && e.b.all_finite())
    }
}

/// Multiplies every parameter gradient by `factor`.
pub fn scale_grads<S: Real>(grads: &mut Gradients<S>, factor: S) {
    for e in grads.entries.iter_mut() {
        for v in e.w.data_mut() {
            *v = *v * factor;
        }
        for v in e.b.data_mut() {
            *v = *v * factor;
        }
    }
}

/// Global L2 norm over all parameter gradients.
pub fn grad_l2_norm<S: Real>(grads: &Gradients<S>) -> S {
    let mut acc = S::zero();
    for e in &grads.entries {
        for v in e.w.data() {
            acc = acc + *v * *v;
        }
        for v in e.b.data() {
            acc = acc + *v * *v;
        }
    }
    acc.sqrt()
}

/// Runs the full network. `embedding` is consumed at the concat point and must
/// be present iff the spec declares one.
pub fn forward<S: Real>(
    spec: &NetworkSpec,
    params: &NetworkParams<S>,
    input: &Tensor<S>,
    embedding: Option<&[S]>,
) -> Result<(Tensor<S>, Cache<S>)> {
    forward_layers(spec, params, input, embedding, spec.layers.len())
}

/// Runs the first `n_layers` layers (policy code uses this to stop before a
/// trailing softmax and apply action masking on the raw logits).
pub fn forward_layers<S: Real>(
    spec: &NetworkSpec,
    params: &NetworkParams<S>,
    input: &Tensor<S>,
    embedding: Option<&[S]>,
    n_layers: usize,
) -> Result<(Tensor<S>, Cache<S>)> {
    if input.shape() != spec.input_shape.as_slice() {
        return Err(Error::Config(format!(
            "input shape {:?} does not match spec input {:?}",
            input.shape(),
            spec.input_shape
        )));
    }
    let mut act = input.clone();
    let mut items = Vec::with_capacity(n_layers);
    let mut p_idx = 0usize;
    for layer in spec.layers.iter().take(n_layers) {
        match layer {
            LayerSpec::Conv2d { stride, pad, out_ch, in_ch, kh, kw, name } => {
                let entry = params.entries.get(p_idx).ok_or_else(|| {
                    Error::Config(format!("missing params for layer {name}"))
                })?;
                p_idx += 1;
                if act.shape().len() != 3 || act.shape()[0] != *in_ch {
                    return Err(Error::Config(format!(
                        "conv {name}: expected [{in_ch}, h, w], got {:?}",
                        act.shape()
                    )));
                }
                let out = conv2d_forward(&act, &entry.w, &entry.b, *out_ch, *kh, *kw, *stride, *pad)?;
                items.push(LayerCache::Conv { input: act });
                act = out;
            }
            LayerSpec::MaxPool2d { k, stride } => {
                let (out, argmax) = maxpool_forward(&act, *k, *stride)?;
                items.push(LayerCache::Pool { input_shape: act.shape().to_vec(), argmax });
                act = out;
            }
            LayerSpec::Dense { in_features, out_features, name } => {
                let entry = params.entries.get(p_idx).ok_or_else(|| {
                    Error::Config(format!("missing params for layer {name}"))
                })?;
                p_idx += 1;
                if act.len() != *in_features {
                    return Err(Error::Config(format!(
                        "dense {name}: expected {in_features} features, got {}",
                        act.len()
                    )));
                }
                let x = act.into_data();
                let mut y = vec![S::zero(); *out_features];
                let w = entry.w.data();
                for (o, yo) in y.iter_mut().enumerate() {
                    let row = &w[o * in_features..(o + 1) * in_features];
                    let mut acc = entry.b.data()[o];
                    for (wi, xi) in row.iter().zip(&x) {
                        acc = acc + *wi * *xi;
                    }
                    *yo = acc;
                }
                items.push(LayerCache::Dense { input: x });
                act = Tensor::from_flat(y);
            }
            LayerSpec::Relu => {
                let mut out = act.clone();
                for v in out.data_mut() {
                    if *v < S::zero() {
                        *v = S::zero();
                    }
                }
                items.push(LayerCache::Relu { input: act });
                act = out;
            }
            LayerSpec::Sigmoid => {
                let mut out = act;
                for v in out.data_mut() {
                    *v = S::one() / (S::one() + (-*v).exp());
                }
                items.push(LayerCache::Sigmoid { output: out.clone() });
                act = out;
            }
            LayerSpec::Softmax => {
                let out = softmax(act.data());
                let out = Tensor::from_flat(out);
                items.push(LayerCache::Softmax { output: out.clone() });
                act = out;
            }
            LayerSpec::ConcatEmbed { len } => {
                let emb = embedding.ok_or_else(|| {
                    Error::Config("spec declares a concat point but no embedding given".into())
                })?;
                if emb.len() != *len {
                    return Err(Error::Config(format!(
                        "embedding length {} does not match concat spec {len}",
                        emb.len()
                    )));
                }
                let input_shape = act.shape().to_vec();
                let mut data = act.into_data();
                let split = data.len();
                data.extend_from_slice(emb);
                items.push(LayerCache::Concat { input_shape, split });
                act = Tensor::from_flat(data);
            }
            LayerSpec::Reshape { shape } => {
                let input_shape = act.shape().to_vec();
                act = act.reshaped(shape.clone())?;
                items.push(LayerCache::Reshape { input_shape });
            }
        }
    }
    let output_shape = act.shape().to_vec();
    Ok((act, Cache { items, output_shape }))
}

/// Backpropagates `upstream` (dL/d output) through every layer that
/// contributed to `cache`, returning parameter gradients shape-matched to
/// `params`.
pub fn backward<S: Real>(
    spec: &NetworkSpec,
    params: &NetworkParams<S>,
    cache: &Cache<S>,
    upstream: &Tensor<S>,
) -> Result<Gradients<S>> {
    backward_layers(spec, params, cache, upstream, cache.items.len())
}

pub fn backward_layers<S: Real>(
    spec: &NetworkSpec,
    params: &NetworkParams<S>,
    cache: &Cache<S>,
    upstream: &Tensor<S>,
    n_layers: usize,
) -> Result<Gradients<S>> {
    if cache.items.len() != n_layers {
        return Err(Error::Internal(format!(
            "cache covers {} layers, backward requested {n_layers}",
            cache.items.len()
        )));
    }
    if upstream.len() != cache.output_shape.iter().product::<usize>() {
        return Err(Error::Internal(format!(
            "upstream gradient has {} elems, forward output had shape {:?}",
            upstream.len(),
            cache.output_shape
        )));
    }
    let mut grads = Gradients::zeros_like(params, &spec.input_shape);
    let mut dy = upstream.clone();
    // Parametric-layer cursor, walked backwards.
    let mut p_idx = spec
        .layers
        .iter()
        .take(n_layers)
        .filter(|l| l.param_name().is_some())
        .count();

    for (layer, item) in spec.layers.iter().take(n_layers).zip(&cache.items).rev() {
        match (layer, item) {
            (LayerSpec::Conv2d { out_ch, in_ch, kh, kw, stride, pad, .. }, LayerCache::Conv { input }) => {
                p_idx -= 1;
                let entry = &params.entries[p_idx];
                let g = &mut grads.entries[p_idx];
                let dx = conv2d_backward(
                    input, &entry.w, &dy, &mut g.w, &mut g.b, *out_ch, *in_ch, *kh, *kw, *stride,
                    *pad,
                )?;
                dy = dx;
            }
            (LayerSpec::MaxPool2d { .. }, LayerCache::Pool { input_shape, argmax }) => {
                let mut dx = Tensor::zeros(input_shape.clone());
                for (o, &src) in argmax.iter().enumerate() {
                    dx.data_mut()[src] = dx.data()[src] + dy.data()[o];
                }
                dy = dx;
            }
            (LayerSpec::Dense { in_features, out_features, .. }, LayerCache::Dense { input }) => {
                p_idx -= 1;
                let entry = &params.entries[p_idx];
                let g = &mut grads.entries[p_idx];
                let w = entry.w.data();
                let gw = g.w.data_mut();
                let gb = g.b.data_mut();
                let mut dx = vec![S::zero(); *in_features];
                for o in 0..*out_features {
                    let d = dy.data()[o];
                    gb[o] = gb[o] + d;
                    let row = o * in_features;
                    for i in 0..*in_features {
                        gw[row + i] = gw[row + i] + d * input[i];
                        dx[i] = dx[i] + w[row + i] * d;
                    }
                }
                dy = Tensor::from_flat(dx);
            }
            (LayerSpec::Relu, LayerCache::Relu { input }) => {
                let mut dx = dy;
                for (d, x) in dx.data_mut().iter_mut().zip(input.data()) {
                    if *x <= S::zero() {
                        *d = S::zero();
                    }
                }
                dy = dx.reshaped(input.shape().to_vec())?;
            }
            (LayerSpec::Sigmoid, LayerCache::Sigmoid { output }) => {
                let mut dx = dy;
                for (d, y) in dx.data_mut().iter_mut().zip(output.data()) {
                    *d = *d * *y * (S::one() - *y);
                }
                dy = dx.reshaped(output.shape().to_vec())?;
            }
            (LayerSpec::Softmax, LayerCache::Softmax { output }) => {
                let p = output.data();
                let dot: S = p.iter().zip(dy.data()).map(|(pi, di)| *pi * *di).sum();
                let mut dx = vec![S::zero(); p.len()];
                for i in 0..p.len() {
                    dx[i] = p[i] * (dy.data()[i] - dot);
                }
                dy = Tensor::from_flat(dx);
            }
            (LayerSpec::ConcatEmbed { .. }, LayerCache::Concat { input_shape, split }) => {
                let data = dy.into_data();
                grads.d_embedding = Some(data[*split..].to_vec());
                dy = Tensor::new(vec![*split], data[..*split].to_vec())?
                    .reshaped(input_shape.clone())?;
            }
            (LayerSpec::Reshape { .. }, LayerCache::Reshape { input_shape }) => {
                dy = dy.reshaped(input_shape.clone())?;
            }
            _ => {
                return Err(Error::Internal(
                    "cache does not match spec (stale or mismatched forward)".into(),
                ));
            }
        }
    }
    grads.d_input = dy.reshaped(spec.input_shape.clone())?;
    Ok(grads)
}

/// Numerically stable softmax over a flat slice.
pub fn softmax<S: Real>(z: &[S]) -> Vec<S> {
    let max = z.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = z.iter().map(|v| (*v - max).exp()).collect();
    let sum: S = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward<S: Real>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    out_ch: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor<S>> {
    let (ic, h, iw_dim) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let oh = conv_out_dim(h, kh, stride, pad)?;
    let ow = conv_out_dim(iw_dim, kw, stride, pad)?;
    let mut out = vec![S::zero(); out_ch * oh * ow];
    let xd = x.data();
    let wd = w.data();
    for oc in 0..out_ch {
        let bias = b.data()[oc];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias;
                for c in 0..ic {
                    let w_base = ((oc * ic + c) * kh) * kw;
                    let x_base = c * h * iw_dim;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = x_base + iy as usize * iw_dim;
                        let w_row = w_base + ky * kw;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= iw_dim as isize {
                                continue;
                            }
                            acc = acc + wd[w_row + kx] * xd[x_row + ix as usize];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Tensor::new(vec![out_ch, oh, ow], out)
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward<S: Real>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
    gw: &mut Tensor<S>,
    gb: &mut Tensor<S>,
    out_ch: usize,
    in_ch: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor<S>> {
    let (h, iw_dim) = (x.shape()[1], x.shape()[2]);
    let oh = conv_out_dim(h, kh, stride, pad)?;
    let ow = conv_out_dim(iw_dim, kw, stride, pad)?;
    let mut dx = vec![S::zero(); in_ch * h * iw_dim];
    let xd = x.data();
    let wd = w.data();
    let dyd = dy.data();
    let gwd = gw.data_mut();
    let gbd = gb.data_mut();
    for oc in 0..out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let d = dyd[(oc * oh + oy) * ow + ox];
                gbd[oc] = gbd[oc] + d;
                for c in 0..in_ch {
                    let w_base = ((oc * in_ch + c) * kh) * kw;
                    let x_base = c * h * iw_dim;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_row = x_base + iy as usize * iw_dim;
                        let w_row = w_base + ky * kw;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= iw_dim as isize {
                                continue;
                            }
                            let ix = ix as usize;
                            gwd[w_row + kx] = gwd[w_row + kx] + d * xd[x_row + ix];
                            dx[x_row + ix] = dx[x_row + ix] + d * wd[w_row + kx];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![in_ch, h, iw_dim], dx)
}

fn maxpool_forward<S: Real>(x: &Tensor<S>, k: usize, stride: usize) -> Result<(Tensor<S>, Vec<usize>)> {
    if x.shape().len() != 3 {
        return Err(Error::Config(format!("maxpool expects [c, h, w], got {:?}", x.shape())));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let oh = conv_out_dim(h, k, stride, 0)?;
    let ow = conv_out_dim(w, k, stride, 0)?;
    let xd = x.data();
    let mut out = vec![S::zero(); c * oh * ow];
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = S::neg_infinity();
                let mut best_idx = 0usize;
                for ky in 0..k {
                    let iy = oy * stride + ky;
                    for kx in 0..k {
                        let ix = ox * stride + kx;
                        let idx = base + iy * w + ix;
                        // Strict > keeps the first (lowest-index) max on ties.
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (ch * oh + oy) * ow + ox;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_spec(inf: usize, outf: usize) -> NetworkSpec {
        NetworkSpec::new(
            vec![inf],
            vec![LayerSpec::Dense { name: "fc".into(), in_features: inf, out_features: outf }],
        )
        .unwrap()
    }

    fn identity_params(n: usize) -> NetworkParams {
        let mut w = vec![0.0f32; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        NetworkParams {
            entries: vec![ParamEntry {
                name: "fc".into(),
                w: Tensor::new(vec![n, n], w).unwrap(),
                b: Tensor::zeros(vec![n]),
            }],
        }
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let spec = dense_spec(4, 4);
        let params = identity_params(4);
        let x = Tensor::new(vec![4], vec![1.0, -2.0, 3.5, 0.0]).unwrap();
        let (y, _) = forward(&spec, &params, &x, None).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn forward_is_pure() {
        let spec = dense_spec(4, 4);
        let params = identity_params(4);
        let x = Tensor::new(vec![4], vec![0.25, -1.0, 2.0, 9.0]).unwrap();
        let (a, _) = forward(&spec, &params, &x, None).unwrap();
        let (b, _) = forward(&spec, &params, &x, None).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn softmax_of_zero_logits_is_uniform() {
        let p = softmax(&[0.0f32; 11]);
        for v in &p {
            assert!((v - 1.0 / 11.0).abs() < 1e-6);
        }
        let sum: f32 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dense_backward_is_outer_product() {
        // y = Wx, dL/dW = outer(upstream, x)
        let spec = dense_spec(3, 2);
        let params = NetworkParams {
            entries: vec![ParamEntry {
                name: "fc".into(),
                w: Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
                b: Tensor::zeros(vec![2]),
            }],
        };
        let x = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let (_, cache) = forward(&spec, &params, &x, None).unwrap();
        let up = Tensor::new(vec![2], vec![1.0, -3.0]).unwrap();
        let g = backward(&spec, &params, &cache, &up).unwrap();
        let gw = g.entries[0].w.data();
        let expect = [0.5f32, -1.0, 2.0, -1.5, 3.0, -6.0];
        for (a, b) in gw.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(g.entries[0].b.data(), &[1.0, -3.0]);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax_only() {
        let spec = NetworkSpec::new(
            vec![1, 2, 2],
            vec![LayerSpec::MaxPool2d { k: 2, stride: 1 }],
        )
        .unwrap();
        let params = NetworkParams { entries: vec![] };
        let x = Tensor::new(vec![1, 2, 2], vec![0.1, 0.9, 0.3, 0.2]).unwrap();
        let (y, cache) = forward(&spec, &params, &x, None).unwrap();
        assert_eq!(y.data(), &[0.9]);
        let up = Tensor::new(vec![1, 1, 1], vec![5.0]).unwrap();
        let g = backward(&spec, &params, &cache, &up).unwrap();
        assert_eq!(g.d_input.data(), &[0.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn fc_10_to_5_counts_55_params() {
        let spec = dense_spec(10, 5);
        let mut params: NetworkParams<f32> = NetworkParams { entries: vec![] };
        params.entries.push(ParamEntry {
            name: "fc".into(),
            w: Tensor::zeros(vec![5, 10]),
            b: Tensor::zeros(vec![5]),
        });
        assert_eq!(param_count(&params), 55);
        assert_eq!(spec.flops().unwrap(), 100);
    }

    #[test]
    fn concat_point_appends_embedding() {
        let spec = NetworkSpec::new(vec![2], vec![LayerSpec::ConcatEmbed { len: 3 }]).unwrap();
        let params = NetworkParams { entries: vec![] };
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let (y, _) = forward(&spec, &params, &x, Some(&[3.0, 4.0, 5.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(forward(&spec, &params, &x, None).is_err());
        assert!(forward(&spec, &params, &x, Some(&[1.0])).is_err());
    }

    #[test]
    fn mismatched_dims_rejected_at_validation() {
        let bad = NetworkSpec::new(
            vec![4],
            vec![LayerSpec::Dense { name: "fc".into(), in_features: 5, out_features: 2 }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn stale_cache_rejected() {
        let spec = dense_spec(4, 4);
        let params = identity_params(4);
        let x = Tensor::new(vec![4], vec![1.0; 4]).unwrap();
        let (_, cache) = forward(&spec, &params, &x, None).unwrap();
        let bad_up = Tensor::new(vec![2], vec![1.0; 2]).unwrap();
        assert!(backward(&spec, &params, &cache, &bad_up).is_err());
    }
}
