//! Group normalization over `[N, C, H, W]` activations.
//!
//! Statistics are computed per sample and per channel group, so the output
//! for sample `n` is a function of sample `n` alone.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_GN_EPS: f64 = 1e-5;

/// Default group count for `channels`: `min(32, channels)`.
pub fn default_groups(channels: usize) -> usize {
    channels.min(32)
}

/// Saved forward state for the backward pass.
#[derive(Debug, Clone)]
pub struct GroupNormCache {
    /// Normalized input before the affine transform.
    pub x_hat: Tensor,
    /// `1 / sqrt(var + eps)` per `(sample, group)`.
    pub inv_std: Vec<f64>,
    pub groups: usize,
}

fn dims(input: &Tensor, gamma: &Tensor, beta: &Tensor, groups: usize) -> Result<(usize, usize, usize)> {
    if input.rank() != 4 {
        return Err(Error::dim("group_norm", format!("input must be [N,C,H,W], got {:?}", input.shape())));
    }
    let (n, c) = (input.shape()[0], input.shape()[1]);
    let spatial = input.shape()[2] * input.shape()[3];
    if groups == 0 || c % groups != 0 {
        return Err(Error::config("gn_groups", format!("{c} channels not divisible into {groups} groups")));
    }
    gamma.expect_shape("group_norm", "gamma", &[c])?;
    beta.expect_shape("group_norm", "beta", &[c])?;
    Ok((n, c, spatial))
}

pub fn group_norm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    groups: usize,
    eps: f64,
) -> Result<(Tensor, GroupNormCache)> {
    let (n, c, spatial) = dims(input, gamma, beta, groups)?;
    let per_group = c / groups;
    let m = (per_group * spatial) as f64;
    let mut out = Tensor::zeros(input.shape().to_vec());
    let mut x_hat = Tensor::zeros(input.shape().to_vec());
    let mut inv_std = vec![0.0; n * groups];
    let x = input.data();
    for s in 0..n {
        for g in 0..groups {
            let start = (s * c + g * per_group) * spatial;
            let end = start + per_group * spatial;
            let block = &x[start..end];
            let mean = block.iter().sum::<f64>() / m;
            let var = block.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let istd = 1.0 / libm::sqrt(var + eps);
            inv_std[s * groups + g] = istd;
            for ch in 0..per_group {
                let channel = g * per_group + ch;
                let (gm, bt) = (gamma.data()[channel], beta.data()[channel]);
                let off = start + ch * spatial;
                let src = &x[off..off + spatial];
                let xh = &mut x_hat.data_mut()[off..off + spatial];
                for (d, v) in xh.iter_mut().zip(src) {
                    *d = (v - mean) * istd;
                }
                for (o, v) in out.data_mut()[off..off + spatial].iter_mut().zip(xh.iter()) {
                    *o = gm * v + bt;
                }
            }
        }
    }
    Ok((out, GroupNormCache { x_hat, inv_std, groups }))
}

/// Gradients with respect to input, gamma and beta.
pub fn group_norm_backward(gamma: &Tensor, cache: &GroupNormCache, upstream: &Tensor) -> Result<LayerGrads> {
    upstream.expect_shape("group_norm", "upstream", cache.x_hat.shape())?;
    let shape = cache.x_hat.shape();
    let (n, c) = (shape[0], shape[1]);
    let spatial = shape[2] * shape[3];
    let groups = cache.groups;
    let per_group = c / groups;
    let m = (per_group * spatial) as f64;
    let up = upstream.data();
    let xh = cache.x_hat.data();

    let mut d_input = Tensor::zeros(shape.to_vec());
    let mut d_gamma = Tensor::zeros([c]);
    let mut d_beta = Tensor::zeros([c]);
    for s in 0..n {
        for g in 0..groups {
            let start = (s * c + g * per_group) * spatial;
            // Σ dx̂ and Σ dx̂·x̂ over the group.
            let mut sum_d = 0.0;
            let mut sum_dx = 0.0;
            for ch in 0..per_group {
                let channel = g * per_group + ch;
                let gm = gamma.data()[channel];
                let off = start + ch * spatial;
                let mut dg = 0.0;
                let mut db = 0.0;
                for i in off..off + spatial {
                    dg += up[i] * xh[i];
                    db += up[i];
                    let d = up[i] * gm;
                    sum_d += d;
                    sum_dx += d * xh[i];
                }
                d_gamma.data_mut()[channel] += dg;
                d_beta.data_mut()[channel] += db;
            }
            let istd = cache.inv_std[s * groups + g];
            for ch in 0..per_group {
                let gm = gamma.data()[g * per_group + ch];
                let off = start + ch * spatial;
                for i in off..off + spatial {
                    let d = up[i] * gm;
                    d_input.data_mut()[i] = istd / m * (m * d - sum_d - xh[i] * sum_dx);
                }
            }
        }
    }
    Ok(LayerGrads {
        d_input,
        d_params: vec![d_gamma, d_beta],
    })
}

pub fn group_norm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    groups: usize,
    eps: f64,
    upstream: Option<&Tensor>,
) -> Result<(Tensor, Option<LayerGrads>)> {
    let (out, cache) = group_norm_forward(input, gamma, beta, groups, eps)?;
    let grads = upstream.map(|up| group_norm_backward(gamma, &cache, up)).transpose()?;
    Ok((out, grads))
}
