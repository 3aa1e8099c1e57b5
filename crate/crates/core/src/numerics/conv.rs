//! 3×3, stride-1, zero-padding-1 convolution.
//!
//! Every loop is written as a shifted plane-by-plane multiply-add so the
//! innermost loop runs over contiguous columns.

use alloc::format;
use alloc::vec;

use super::kernels::{axpy, dot};

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const K: usize = 3;

/// Rows (or columns) of the output whose input neighbour at `offset`
/// (−1, 0 or +1) lies inside `0..len`.
#[inline]
fn valid_range(len: usize, offset: isize) -> (usize, usize) {
    match offset {
        -1 => (1, len),
        0 => (0, len),
        _ => (0, len - 1),
    }
}

fn check_shapes(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    if input.rank() != 4 {
        return Err(Error::dim("conv2d", format!("input must be [N,C,H,W], got {:?}", input.shape())));
    }
    let [n, c, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    if weights.rank() != 4 {
        return Err(Error::dim("conv2d", format!("weights must be [F,C,3,3], got {:?}", weights.shape())));
    }
    let f = weights.shape()[0];
    weights.expect_shape("conv2d", "weights", &[f, c, K, K])?;
    bias.expect_shape("conv2d", "bias", &[f])?;
    Ok((n, c, h, w, f))
}

/// Unfolds one `[C, H, W]` sample into `col[(c·3 + dh)·3 + dw][h·W + w] =
/// in[c, h + dh − 1, w + dw − 1]`, zero outside the image.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, col: &mut [f64]) {
    let plane = h * w;
    col.fill(0.0);
    for ci in 0..c {
        let in_plane = &x[ci * plane..(ci + 1) * plane];
        for dh in 0..K {
            let oy = dh as isize - 1;
            let (r0, r1) = valid_range(h, oy);
            for dw in 0..K {
                let ox = dw as isize - 1;
                let (c0, c1) = valid_range(w, ox);
                let row = &mut col[((ci * K + dh) * K + dw) * plane..((ci * K + dh) * K + dw + 1) * plane];
                for r in r0..r1 {
                    let src = ((r as isize + oy) as usize * w) as isize + c0 as isize + ox;
                    let src = src as usize;
                    row[r * w + c0..r * w + c1].copy_from_slice(&in_plane[src..src + (c1 - c0)]);
                }
            }
        }
    }
}

/// Adds the columns back onto a `[C, H, W]` gradient (adjoint of [`im2col`]).
fn col2im(col: &[f64], c: usize, h: usize, w: usize, dx: &mut [f64]) {
    let plane = h * w;
    for ci in 0..c {
        let out_plane = &mut dx[ci * plane..(ci + 1) * plane];
        for dh in 0..K {
            let oy = dh as isize - 1;
            let (r0, r1) = valid_range(h, oy);
            for dw in 0..K {
                let ox = dw as isize - 1;
                let (c0, c1) = valid_range(w, ox);
                let row = &col[((ci * K + dh) * K + dw) * plane..((ci * K + dh) * K + dw + 1) * plane];
                for r in r0..r1 {
                    let dst = (((r as isize + oy) as usize * w) as isize + c0 as isize + ox) as usize;
                    for (d, v) in out_plane[dst..dst + (c1 - c0)].iter_mut().zip(&row[r * w + c0..r * w + c1]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Forward pass: `out[n,f,h,w] = bias[f] + Σ in[n,c,h+dh−1,w+dw−1]·W[f,c,dh,dw]`.
pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, c, h, w, f) = check_shapes(input, weights, bias)?;
    let plane = h * w;
    let taps = c * K * K;
    let x = input.data();
    let wt = weights.data();
    let mut out = Tensor::zeros([n, f, h, w]);
    let y = out.data_mut();
    let mut col = vec![0.0; taps * plane];
    for s in 0..n {
        im2col(&x[s * c * plane..(s + 1) * c * plane], c, h, w, &mut col);
        for fo in 0..f {
            let out_plane = &mut y[(s * f + fo) * plane..(s * f + fo + 1) * plane];
            out_plane.fill(bias.data()[fo]);
            for (k, &wk) in wt[fo * taps..(fo + 1) * taps].iter().enumerate() {
                if wk != 0.0 {
                    axpy(wk, &col[k * plane..(k + 1) * plane], out_plane);
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `Σ upstream ⊙ conv2d(input)` with respect to input,
/// weights and bias. `want_input` skips the input gradient when the caller
/// does not need it (the first layer of a network).
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    upstream: &Tensor,
    want_input: bool,
) -> Result<LayerGrads> {
    let f = weights.shape().first().copied().unwrap_or(0);
    let bias_shape = Tensor::zeros([f.max(1)]);
    let (n, c, h, w, f) = check_shapes(input, weights, &bias_shape)?;
    upstream.expect_shape("conv2d", "upstream", &[n, f, h, w])?;
    let plane = h * w;
    let taps = c * K * K;
    let x = input.data();
    let wt = weights.data();
    let up = upstream.data();

    let mut d_input = Tensor::zeros([n, c, h, w]);
    let mut d_weights = Tensor::zeros([f, c, K, K]);
    let mut d_bias = Tensor::zeros([f]);
    let mut col = vec![0.0; taps * plane];
    let mut d_col = vec![0.0; if want_input { taps * plane } else { 0 }];
    {
        let dx = d_input.data_mut();
        let dw_all = d_weights.data_mut();
        let db = d_bias.data_mut();
        for s in 0..n {
            im2col(&x[s * c * plane..(s + 1) * c * plane], c, h, w, &mut col);
            d_col.fill(0.0);
            for fo in 0..f {
                let up_plane = &up[(s * f + fo) * plane..(s * f + fo + 1) * plane];
                db[fo] += up_plane.iter().sum::<f64>();
                for k in 0..taps {
                    dw_all[fo * taps + k] += dot(up_plane, &col[k * plane..(k + 1) * plane]);
                    if want_input {
                        axpy(wt[fo * taps + k], up_plane, &mut d_col[k * plane..(k + 1) * plane]);
                    }
                }
            }
            if want_input {
                col2im(&d_col, c, h, w, &mut dx[s * c * plane..(s + 1) * c * plane]);
            }
        }
    }
    Ok(LayerGrads {
        d_input,
        d_params: alloc::vec![d_weights, d_bias],
    })
}

/// Forward pass plus, when `upstream` is given, the exact gradients of
/// `Σ upstream ⊙ output`.
pub fn conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    upstream: Option<&Tensor>,
) -> Result<(Tensor, Option<LayerGrads>)> {
    let out = conv2d_forward(input, weights, bias)?;
    let grads = match upstream {
        Some(up) => Some(conv2d_backward(input, weights, up, true)?),
        None => None,
    };
    Ok((out, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{finite_diff_check, FnWithGrad};
    use crate::rng;
    use alloc::vec;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut r = rng::seeded(seed);
        Tensor::from_fn(shape.to_vec(), |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let input = Tensor::full([1, 1, 3, 3], 1.0);
        let mut k = Tensor::zeros([1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let (out, _) = conv2d(&input, &k, &Tensor::zeros([1]), None).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn zero_input_gives_bias() {
        let input = Tensor::zeros([2, 3, 4, 5]);
        let k = random(&[2, 3, 3, 3], 1);
        let b = Tensor::vector(vec![0.25, -1.5]);
        let (out, _) = conv2d(&input, &k, &b, None).unwrap();
        for s in 0..2 {
            for f in 0..2 {
                for i in 0..20 {
                    assert_eq!(out.data()[(s * 2 + f) * 20 + i], b.data()[f]);
                }
            }
        }
    }

    #[test]
    fn matches_direct_definition() {
        let x = random(&[2, 2, 4, 5], 3);
        let k = random(&[3, 2, 3, 3], 4);
        let b = random(&[3], 5);
        let (out, _) = conv2d(&x, &k, &b, None).unwrap();
        let at = |n: usize, c: usize, h: isize, w: isize| -> f64 {
            if h < 0 || w < 0 || h >= 4 || w >= 5 {
                0.0
            } else {
                x.data()[((n * 2 + c) * 4 + h as usize) * 5 + w as usize]
            }
        };
        for n in 0..2 {
            for f in 0..3 {
                for h in 0..4 {
                    for w in 0..5 {
                        let mut acc = b.data()[f];
                        for c in 0..2 {
                            for dh in 0..3 {
                                for dw in 0..3 {
                                    acc += at(n, c, h as isize + dh as isize - 1, w as isize + dw as isize - 1)
                                        * k.data()[((f * 2 + c) * 3 + dh) * 3 + dw];
                                }
                            }
                        }
                        let got = out.data()[((n * 3 + f) * 4 + h) * 5 + w];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let x = random(&[1, 2, 4, 4], 10);
        let k = random(&[3, 2, 3, 3], 11);
        let b = random(&[3], 12);
        let up = random(&[1, 3, 4, 4], 13);
        let f = FnWithGrad(
            |w: &Tensor| conv2d_forward(&x, w, &b).unwrap().dot(&up),
            |w: &Tensor| conv2d_backward(&x, w, &up, true).unwrap().d_params[0].clone(),
        );
        let err = finite_diff_check(&f, &k, 1e-3).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn input_and_bias_gradients_match_finite_differences() {
        let x = random(&[2, 2, 3, 5], 20);
        let k = random(&[2, 2, 3, 3], 21);
        let b = random(&[2], 22);
        let up = random(&[2, 2, 3, 5], 23);
        let fx = FnWithGrad(
            |x: &Tensor| conv2d_forward(x, &k, &b).unwrap().dot(&up),
            |x: &Tensor| conv2d_backward(x, &k, &up, true).unwrap().d_input,
        );
        assert!(finite_diff_check(&fx, &x, 1e-3).unwrap() < 1e-6);
        let fb = FnWithGrad(
            |b: &Tensor| conv2d_forward(&x, &k, b).unwrap().dot(&up),
            |_: &Tensor| conv2d_backward(&x, &k, &up, true).unwrap().d_params[1].clone(),
        );
        assert!(finite_diff_check(&fb, &b, 1e-3).unwrap() < 1e-6);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros([1, 2, 4, 4]);
        let k = Tensor::zeros([3, 3, 3, 3]);
        let err = conv2d(&x, &k, &Tensor::zeros([3]), None).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        let k = Tensor::zeros([3, 2, 3, 3]);
        let up = Tensor::zeros([1, 3, 4, 5]);
        assert!(conv2d(&x, &k, &Tensor::zeros([3]), Some(&up)).is_err());
    }
}
