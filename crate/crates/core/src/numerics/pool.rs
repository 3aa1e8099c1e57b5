use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2×2, stride-2 max pooling. Returns the pooled tensor and, for every
/// output element, the flat index of the input element it came from (the
/// first maximum in row-major window order).
pub fn max_pool2_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    if input.rank() != 4 {
        return Err(Error::dim("max_pool2", format!("input must be [N,C,H,W], got {:?}", input.shape())));
    }
    let [n, c, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim("max_pool2", format!("spatial size {h}x{w} is not even")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let x = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for r in 0..oh {
            for col in 0..ow {
                let mut best = base + 2 * r * w + 2 * col;
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * r + dr) * w + 2 * col + dc;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.data_mut()[arg.len()] = x[best];
                arg.push(best);
            }
        }
    }
    Ok((out, arg))
}

pub fn max_pool2_backward(input_shape: &[usize], argmax: &[usize], upstream: &Tensor) -> Result<Tensor> {
    if upstream.len() != argmax.len() {
        return Err(Error::dim("max_pool2", "upstream does not match the pooled output"));
    }
    let mut d = Tensor::zeros(input_shape.to_vec());
    for (&i, &g) in argmax.iter().zip(upstream.data()) {
        d.data_mut()[i] += g;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_and_routes() {
        let x = Tensor::new([1, 1, 2, 4], alloc::vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, -1.0]).unwrap();
        let (y, arg) = max_pool2_forward(&x).unwrap();
        assert_eq!(y.data(), &[5.0, 9.0]);
        let d = max_pool2_backward(x.shape(), &arg, &Tensor::vector(alloc::vec![1.0, 2.0])).unwrap();
        assert_eq!(d.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn odd_size_rejected() {
        assert!(max_pool2_forward(&Tensor::zeros([1, 1, 3, 4])).is_err());
    }
}
