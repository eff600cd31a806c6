//! Forward and backward passes for the three architectures.
//!
//! Parameters live in a flat list of named tensors so that the optimizer,
//! checkpointing and the gradient check can treat every architecture alike.

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::Architecture;
use crate::error::{Error, Result};
use crate::util::Rng;

pub const CONV_BLOCKS: usize = 3;
pub const CONV_KERNEL: usize = 5;
pub const POOL_WIDTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    fn glorot(name: &str, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        let mut t = Self::zeros(name, shape);
        for v in &mut t.data {
            *v = dist.sample(rng);
        }
        t
    }

    /// Uniform in `±sqrt(6 / fan_in)`, suited to ReLU layers.
    fn he(name: &str, shape: &[usize], fan_in: usize, rng: &mut Rng) -> Self {
        let a = (6.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        let mut t = Self::zeros(name, shape);
        for v in &mut t.data {
            *v = dist.sample(rng);
        }
        t
    }
}

/// Sequence length after each conv block, starting from the input length.
pub fn conv_lengths(input: usize) -> Vec<usize> {
    let mut lens = vec![input];
    let mut l = input;
    for _ in 0..CONV_BLOCKS {
        l = l.saturating_sub(CONV_KERNEL - 1) / POOL_WIDTH;
        lens.push(l);
    }
    lens
}

/// Network shape plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_dim: usize,
    pub tensors: Vec<Tensor>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub(crate) struct Cache {
    input: Vec<f64>,
    layers: Vec<LayerCache>,
    /// Input to the final dense layer (after dropout).
    head_input: Vec<f64>,
    /// Dropout scale per head input (0 or 1/(1−p)); empty when inactive.
    head_mask: Vec<f64>,
    pub(crate) logits: Vec<f64>,
}

enum LayerCache {
    Hidden {
        pre: Vec<f64>,
    },
    Conv {
        pre: Vec<f64>,
        pool_idx: Vec<usize>,
        in_len: usize,
        in_ch: usize,
    },
}

impl Network {
    pub fn new(
        architecture: Architecture,
        input_dim: usize,
        output_dim: usize,
        hidden_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::param("input_dim", "feature vectors are empty"));
        }
        if output_dim < 2 {
            return Err(Error::param("output_dim", "need at least 2 labels"));
        }
        let (d_in, d_out, h) = (input_dim, output_dim, hidden_dim);
        let tensors = match architecture {
            Architecture::Linear => vec![
                Tensor::zeros("dense.weight", &[d_out, d_in]),
                Tensor::zeros("dense.bias", &[d_out]),
            ],
            Architecture::Mlp => {
                if h == 0 {
                    return Err(Error::param("hidden_dim", "must be positive"));
                }
                vec![
                    Tensor::he("hidden.weight", &[h, d_in], d_in, rng),
                    Tensor::zeros("hidden.bias", &[h]),
                    Tensor::glorot("dense.weight", &[d_out, h], h, d_out, rng),
                    Tensor::zeros("dense.bias", &[d_out]),
                ]
            }
            Architecture::Conv1d => {
                if h == 0 {
                    return Err(Error::param("hidden_dim", "must be positive"));
                }
                let lens = conv_lengths(d_in);
                let last = lens[CONV_BLOCKS];
                if last == 0 {
                    return Err(Error::param(
                        "architecture",
                        format!("conv1d needs longer inputs than {d_in} features"),
                    ));
                }
                let mut t = Vec::new();
                let mut in_ch = 1;
                for b in 0..CONV_BLOCKS {
                    t.push(Tensor::he(
                        &format!("conv{b}.weight"),
                        &[h, in_ch, CONV_KERNEL],
                        in_ch * CONV_KERNEL,
                        rng,
                    ));
                    t.push(Tensor::zeros(&format!("conv{b}.bias"), &[h]));
                    in_ch = h;
                }
                let flat = h * last;
                t.push(Tensor::glorot(
                    "dense.weight",
                    &[d_out, flat],
                    flat,
                    d_out,
                    rng,
                ));
                t.push(Tensor::zeros("dense.bias", &[d_out]));
                t
            }
        };
        Ok(Self {
            architecture,
            input_dim,
            output_dim,
            hidden_dim,
            tensors,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.tensors
            .iter()
            .map(|t| vec![0.0; t.data.len()])
            .collect()
    }

    /// Forward pass. `dropout` is `Some((rate, rng))` in training mode.
    pub(crate) fn forward(&self, x: &[f64], dropout: Option<(f64, &mut Rng)>) -> Cache {
        let mut layers = Vec::new();
        let head_input: Vec<f64> = match self.architecture {
            Architecture::Linear => x.to_vec(),
            Architecture::Mlp => {
                let (w, b) = (&self.tensors[0], &self.tensors[1]);
                let pre = dense(&w.data, &b.data, x);
                let act = pre.iter().map(|v| v.max(0.0)).collect();
                layers.push(LayerCache::Hidden { pre });
                act
            }
            Architecture::Conv1d => {
                let mut cur = x.to_vec();
                let mut in_ch = 1;
                let mut in_len = self.input_dim;
                for blk in 0..CONV_BLOCKS {
                    let (k, b) = (&self.tensors[2 * blk], &self.tensors[2 * blk + 1]);
                    let (pre, out_len) =
                        conv_valid(&k.data, &b.data, &cur, in_ch, in_len, self.hidden_dim);
                    let (pooled, pool_idx) = relu_maxpool(&pre, self.hidden_dim, out_len);
                    layers.push(LayerCache::Conv {
                        pre,
                        pool_idx,
                        in_len,
                        in_ch,
                    });
                    in_len = out_len / POOL_WIDTH;
                    in_ch = self.hidden_dim;
                    cur = pooled;
                }
                cur
            }
        };
        let (head_input, head_mask) = match dropout {
            Some((rate, rng)) if rate > 0.0 && self.architecture != Architecture::Linear => {
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..head_input.len())
                    .map(|_| {
                        if rng.random::<f64>() < rate {
                            0.0
                        } else {
                            keep
                        }
                    })
                    .collect();
                let dropped = head_input.iter().zip(&mask).map(|(v, m)| v * m).collect();
                (dropped, mask)
            }
            _ => (head_input, Vec::new()),
        };
        let n = self.tensors.len();
        let logits = dense(
            &self.tensors[n - 2].data,
            &self.tensors[n - 1].data,
            &head_input,
        );
        Cache {
            input: x.to_vec(),
            layers,
            head_input,
            head_mask,
            logits,
        }
    }

    /// Accumulates `scale · ∂L/∂θ` into `grads` given `∂L/∂logits`.
    pub(crate) fn backward(
        &self,
        cache: &Cache,
        dlogits: &[f64],
        scale: f64,
        grads: &mut [Vec<f64>],
    ) {
        let n = self.tensors.len();
        let mut d_head = vec![0.0; cache.head_input.len()];
        {
            let w = &self.tensors[n - 2].data;
            let cols = cache.head_input.len();
            let (gw, rest) = grads[n - 2..].split_at_mut(1);
            for (o, &g) in dlogits.iter().enumerate() {
                let g = g * scale;
                rest[0][o] += g;
                let row = &w[o * cols..(o + 1) * cols];
                let grow = &mut gw[0][o * cols..(o + 1) * cols];
                for ((gv, &hv), (dh, &wv)) in grow
                    .iter_mut()
                    .zip(&cache.head_input)
                    .zip(d_head.iter_mut().zip(row))
                {
                    *gv += g * hv;
                    *dh += g * wv;
                }
            }
        }
        if !cache.head_mask.is_empty() {
            for (d, m) in d_head.iter_mut().zip(&cache.head_mask) {
                *d *= m;
            }
        }
        match self.architecture {
            Architecture::Linear => {}
            Architecture::Mlp => {
                let LayerCache::Hidden { pre } = &cache.layers[0] else {
                    unreachable!("mlp caches a hidden layer")
                };
                let cols = self.input_dim;
                let (gw, gb) = grads.split_at_mut(1);
                for (j, (&z, &dh)) in pre.iter().zip(&d_head).enumerate() {
                    if z <= 0.0 || dh == 0.0 {
                        continue;
                    }
                    gb[0][j] += dh;
                    for (gv, &xv) in gw[0][j * cols..(j + 1) * cols].iter_mut().zip(&cache.input) {
                        *gv += dh * xv;
                    }
                }
            }
            Architecture::Conv1d => {
                let mut d_out = d_head;
                for blk in (0..CONV_BLOCKS).rev() {
                    let LayerCache::Conv {
                        pre,
                        pool_idx,
                        in_len,
                        in_ch,
                    } = &cache.layers[blk]
                    else {
                        unreachable!("conv1d caches conv layers")
                    };
                    // route pooled gradients to the winning, active positions
                    let mut d_pre = vec![0.0; pre.len()];
                    for (&idx, &g) in pool_idx.iter().zip(&d_out) {
                        if pre[idx] > 0.0 {
                            d_pre[idx] += g;
                        }
                    }
                    let input: Vec<f64> = if blk == 0 {
                        cache.input.clone()
                    } else {
                        match &cache.layers[blk - 1] {
                            LayerCache::Conv { pre, pool_idx, .. } => {
                                pool_idx.iter().map(|&i| pre[i].max(0.0)).collect()
                            }
                            LayerCache::Hidden { .. } => unreachable!(),
                        }
                    };
                    let (gk, gb) = {
                        let (a, b) = grads.split_at_mut(2 * blk + 1);
                        (&mut a[2 * blk], &mut b[0])
                    };
                    d_out = conv_backward(
                        &self.tensors[2 * blk].data,
                        &input,
                        &d_pre,
                        *in_ch,
                        *in_len,
                        self.hidden_dim,
                        gk,
                        gb,
                        blk > 0,
                    );
                }
            }
        }
    }
}

/// `W x + b` with `W` stored row-major.
fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| {
            w[o * cols..(o + 1) * cols]
                .iter()
                .zip(x)
                .fold(bias, |acc, (wv, xv)| acc + wv * xv)
        })
        .collect()
}

/// Valid 1D convolution. Input is `[in_ch][in_len]`, kernel
/// `[out_ch][in_ch][K]`. Returns the `[out_ch][out_len]` pre-activations.
fn conv_valid(
    k: &[f64],
    b: &[f64],
    input: &[f64],
    in_ch: usize,
    in_len: usize,
    out_ch: usize,
) -> (Vec<f64>, usize) {
    let out_len = in_len + 1 - CONV_KERNEL;
    let mut out = vec![0.0; out_ch * out_len];
    for o in 0..out_ch {
        let row = &mut out[o * out_len..(o + 1) * out_len];
        row.iter_mut().for_each(|v| *v = b[o]);
        for c in 0..in_ch {
            let kern = &k[(o * in_ch + c) * CONV_KERNEL..(o * in_ch + c + 1) * CONV_KERNEL];
            let sig = &input[c * in_len..(c + 1) * in_len];
            for (t, v) in row.iter_mut().enumerate() {
                *v += kern
                    .iter()
                    .zip(&sig[t..t + CONV_KERNEL])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
    }
    (out, out_len)
}

/// ReLU then non-overlapping max-pool. Returns pooled values and, per pooled
/// cell, the flat index of the winning pre-activation (first on ties).
fn relu_maxpool(pre: &[f64], ch: usize, len: usize) -> (Vec<f64>, Vec<usize>) {
    let pooled_len = len / POOL_WIDTH;
    let mut vals = Vec::with_capacity(ch * pooled_len);
    let mut idx = Vec::with_capacity(ch * pooled_len);
    for c in 0..ch {
        for u in 0..pooled_len {
            let base = c * len + u * POOL_WIDTH;
            let mut best = base;
            for i in base + 1..base + POOL_WIDTH {
                if pre[i] > pre[best] {
                    best = i;
                }
            }
            vals.push(pre[best].max(0.0));
            idx.push(best);
        }
    }
    (vals, idx)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    k: &[f64],
    input: &[f64],
    d_pre: &[f64],
    in_ch: usize,
    in_len: usize,
    out_ch: usize,
    gk: &mut [f64],
    gb: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let out_len = in_len + 1 - CONV_KERNEL;
    let mut d_in = vec![0.0; if need_input_grad { in_ch * in_len } else { 0 }];
    for o in 0..out_ch {
        let drow = &d_pre[o * out_len..(o + 1) * out_len];
        if drow.iter().all(|&g| g == 0.0) {
            continue;
        }
        gb[o] += drow.iter().sum::<f64>();
        for c in 0..in_ch {
            let off = (o * in_ch + c) * CONV_KERNEL;
            let sig = &input[c * in_len..(c + 1) * in_len];
            for (t, &g) in drow.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for j in 0..CONV_KERNEL {
                    gk[off + j] += g * sig[t + j];
                }
                if need_input_grad {
                    for j in 0..CONV_KERNEL {
                        d_in[c * in_len + t + j] += g * k[off + j];
                    }
                }
            }
        }
    }
    d_in
}
