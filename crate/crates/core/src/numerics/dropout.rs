use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::config("dropout_rate", alloc::format!("must lie in [0, 1), got {rate}")))
    }
}

/// Inverted dropout. Survivors are scaled by `1 / (1 - rate)` so evaluation
/// needs no rescaling. Returns the output and the mask of per-element
/// multipliers (`0` or `1 / (1 - rate)` in training, all ones otherwise), so
/// `output == input ⊙ mask` and the backward pass replays it exactly.
pub fn dropout<R: Rng + ?Sized>(input: &Tensor, rate: f64, mode: Mode, rng: &mut R) -> Result<(Tensor, Tensor)> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), Tensor::full(input.shape().to_vec(), 1.0)));
    }
    let scale = 1.0 / (1.0 - rate);
    let mut mask = Tensor::zeros(input.shape().to_vec());
    let mut out = Tensor::zeros(input.shape().to_vec());
    // An element survives when a uniform 32-bit draw clears `rate·2³²`.
    let threshold = (rate * 4_294_967_296.0) as u64;
    for ((m, o), &x) in mask.data_mut().iter_mut().zip(out.data_mut()).zip(input.data()) {
        if u64::from(rng.next_u32()) >= threshold {
            *m = scale;
            *o = x * scale;
        }
    }
    Ok((out, mask))
}

/// Replays a recorded mask on the upstream gradient.
pub fn dropout_backward(mask: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    upstream.expect_shape("dropout", "upstream", mask.shape())?;
    let mut d = upstream.clone();
    for (g, &m) in d.data_mut().iter_mut().zip(mask.data()) {
        *g *= m;
    }
    Ok(d)
}
