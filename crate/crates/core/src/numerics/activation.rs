use alloc::vec;

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_LRELU_SLOPE: f64 = 0.01;

fn check_slope(slope: f64) -> Result<()> {
    if slope > 0.0 && slope < 1.0 {
        Ok(())
    } else {
        Err(Error::config("lrelu_slope", alloc::format!("must lie in (0, 1), got {slope}")))
    }
}

pub fn leaky_relu_forward(input: &Tensor, slope: f64) -> Tensor {
    input.map(|x| if x > 0.0 { x } else { slope * x })
}

/// Gradient of `Σ upstream ⊙ lrelu(input)`. At `x == 0` the slope branch is
/// taken.
pub fn leaky_relu_backward(input: &Tensor, slope: f64, upstream: &Tensor) -> Result<Tensor> {
    upstream.expect_shape("leaky_relu", "upstream", input.shape())?;
    let mut d = upstream.clone();
    for (g, &x) in d.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g *= slope;
        }
    }
    Ok(d)
}

pub fn leaky_relu(input: &Tensor, slope: f64, upstream: Option<&Tensor>) -> Result<(Tensor, Option<LayerGrads>)> {
    check_slope(slope)?;
    let out = leaky_relu_forward(input, slope);
    let grads = match upstream {
        Some(up) => Some(LayerGrads {
            d_input: leaky_relu_backward(input, slope, up)?,
            d_params: vec![],
        }),
        None => None,
    };
    Ok((out, grads))
}

/// Row-wise softmax of a `[N, C]` tensor with max subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 2 {
        return Err(Error::dim("softmax", alloc::format!("expected [N,C], got {:?}", logits.shape())));
    }
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    let mut out = Tensor::zeros([n, c]);
    for r in 0..n {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dst = &mut out.data_mut()[r * c..(r + 1) * c];
        let mut total = 0.0;
        for (d, &x) in dst.iter_mut().zip(row) {
            *d = libm::exp(x - max);
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{finite_diff_check, FnWithGrad};
    use crate::rng;
    use rand::Rng;

    #[test]
    fn lrelu_values() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        let (y, _) = leaky_relu(&x, 0.01, None).unwrap();
        assert_eq!(y.data(), &[-0.01, 0.0, 2.0]);
        let pos = Tensor::vector(vec![0.5, 3.0, 1e-9]);
        assert_eq!(leaky_relu(&pos, 0.01, None).unwrap().0, pos);
    }

    #[test]
    fn lrelu_kink_uses_slope() {
        let x = Tensor::vector(vec![0.0]);
        let up = Tensor::vector(vec![1.0]);
        let (_, g) = leaky_relu(&x, 0.2, Some(&up)).unwrap();
        assert_eq!(g.unwrap().d_input.data(), &[0.2]);
    }

    #[test]
    fn lrelu_rejects_bad_slope() {
        assert!(leaky_relu(&Tensor::zeros([1]), 1.0, None).is_err());
        assert!(leaky_relu(&Tensor::zeros([1]), 0.0, None).is_err());
    }

    #[test]
    fn lrelu_gradient_away_from_kink() {
        let mut r = rng::seeded(7);
        let x = Tensor::from_fn([40], |_| {
            let v: f64 = r.random_range(0.02..2.0);
            if r.random_bool(0.5) { v } else { -v }
        });
        let up = Tensor::from_fn([40], |i| 0.3 + i as f64 * 0.01);
        let f = FnWithGrad(
            |x: &Tensor| leaky_relu_forward(x, 0.01).dot(&up),
            |x: &Tensor| leaky_relu_backward(x, 0.01, &up).unwrap(),
        );
        assert!(finite_diff_check(&f, &x, 1e-3).unwrap() < 1e-6);
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let p = softmax(&Tensor::zeros([2, 6])).unwrap();
        for &v in p.data() {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        let p = softmax(&Tensor::new([1, 2], vec![1000.0, 0.0]).unwrap()).unwrap();
        assert!(p.is_finite());
        assert!((p.data()[0] - 1.0).abs() < 1e-15);
        assert!(p.data()[1] < 1e-300);
    }

    #[test]
    fn softmax_one_hot_logit() {
        let mut logits = Tensor::zeros([1, 6]);
        logits.data_mut()[0] = 1.0;
        let p = softmax(&logits).unwrap();
        let e = core::f64::consts::E;
        assert!((p.data()[0] - e / (e + 5.0)).abs() < 1e-15);
        assert!((p.data()[0] - 0.352_187_43).abs() < 1e-8);
    }
}
