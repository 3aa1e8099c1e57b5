use alloc::format;
use alloc::vec;

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check(input: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize)> {
    if input.rank() != 2 || weights.rank() != 2 {
        return Err(Error::dim(
            "fully_connected",
            format!("expected 2-D input and weights, got {:?} and {:?}", input.shape(), weights.shape()),
        ));
    }
    let (n, d_in) = (input.shape()[0], input.shape()[1]);
    let d_out = weights.shape()[0];
    if weights.shape()[1] != d_in {
        return Err(Error::dim(
            "fully_connected",
            format!("input axis 1 is {d_in} but weights axis 1 is {}", weights.shape()[1]),
        ));
    }
    Ok((n, d_in, d_out))
}

/// `output = input · weightsᵀ + bias`.
pub fn fully_connected_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, d_in, d_out) = check(input, weights)?;
    bias.expect_shape("fully_connected", "bias", &[d_out])?;
    let mut out = Tensor::zeros([n, d_out]);
    let y = out.data_mut();
    for s in 0..n {
        let x = input.row(s);
        for o in 0..d_out {
            let w = &weights.data()[o * d_in..(o + 1) * d_in];
            let acc: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            y[s * d_out + o] = acc + bias.data()[o];
        }
    }
    Ok(out)
}

pub fn fully_connected_backward(input: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<LayerGrads> {
    let (n, d_in, d_out) = check(input, weights)?;
    upstream.expect_shape("fully_connected", "upstream", &[n, d_out])?;
    let mut d_input = Tensor::zeros([n, d_in]);
    let mut d_weights = Tensor::zeros([d_out, d_in]);
    let mut d_bias = Tensor::zeros([d_out]);
    for s in 0..n {
        let x = input.row(s);
        let u = upstream.row(s);
        let dx = &mut d_input.data_mut()[s * d_in..(s + 1) * d_in];
        for o in 0..d_out {
            let g = u[o];
            let w = &weights.data()[o * d_in..(o + 1) * d_in];
            for (d, wv) in dx.iter_mut().zip(w) {
                *d += g * wv;
            }
        }
        for o in 0..d_out {
            let g = u[o];
            d_bias.data_mut()[o] += g;
            let dw = &mut d_weights.data_mut()[o * d_in..(o + 1) * d_in];
            for (d, xv) in dw.iter_mut().zip(x) {
                *d += g * xv;
            }
        }
    }
    Ok(LayerGrads {
        d_input,
        d_params: vec![d_weights, d_bias],
    })
}

/// Weights `[D_out, D_in]` and bias `[D_out]` of an affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(d_out: usize, d_in: usize) -> Self {
        Self {
            weights: Tensor::zeros([d_out, d_in]),
            bias: Tensor::zeros([d_out]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: Tensor::zeros_like(&self.weights),
            bias: Tensor::zeros_like(&self.bias),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn d_out(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        fully_connected_forward(input, &self.weights, &self.bias)
    }

    /// Returns `(d_input, d_params)` for `Σ upstream ⊙ forward(input)`.
    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<(Tensor, Dense)> {
        let mut g = fully_connected_backward(input, &self.weights, upstream)?;
        let d_bias = g.d_params.pop().expect("bias grad");
        let d_weights = g.d_params.pop().expect("weight grad");
        Ok((g.d_input, Dense { weights: d_weights, bias: d_bias }))
    }
}

pub fn fully_connected(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    upstream: Option<&Tensor>,
) -> Result<(Tensor, Option<LayerGrads>)> {
    let out = fully_connected_forward(input, weights, bias)?;
    let grads = upstream
        .map(|up| fully_connected_backward(input, weights, up))
        .transpose()?;
    Ok((out, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{finite_diff_check, FnWithGrad};
    use crate::rng;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut r = rng::seeded(seed);
        Tensor::from_fn(shape.to_vec(), |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_weights() {
        let x = random(&[3, 4], 1);
        let eye = Tensor::from_fn([4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
        let (y, _) = fully_connected(&x, &eye, &Tensor::zeros([4]), None).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_broadcasts_bias() {
        let w = random(&[3, 5], 2);
        let b = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let (y, _) = fully_connected(&Tensor::zeros([4, 5]), &w, &b, None).unwrap();
        for s in 0..4 {
            assert_eq!(y.row(s), b.data());
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = random(&[2, 5], 3);
        let w = random(&[3, 5], 4);
        let b = random(&[3], 5);
        let up = random(&[2, 3], 6);
        let fw = FnWithGrad(
            |w: &Tensor| fully_connected_forward(&x, w, &b).unwrap().dot(&up),
            |w: &Tensor| fully_connected_backward(&x, w, &up).unwrap().d_params[0].clone(),
        );
        assert!(finite_diff_check(&fw, &w, 1e-3).unwrap() < 1e-6);
        let fx = FnWithGrad(
            |x: &Tensor| fully_connected_forward(x, &w, &b).unwrap().dot(&up),
            |x: &Tensor| fully_connected_backward(x, &w, &up).unwrap().d_input,
        );
        assert!(finite_diff_check(&fx, &x, 1e-3).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_mismatched_input_width() {
        let err = fully_connected(&Tensor::zeros([2, 4]), &Tensor::zeros([3, 5]), &Tensor::zeros([3]), None)
            .unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }
}
