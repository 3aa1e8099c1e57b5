//! Central finite-difference gradient checking.

use alloc::format;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A scalar function of a tensor together with its analytic gradient.
pub trait Differentiable {
    fn value(&self, x: &Tensor) -> f64;
    fn gradient(&self, x: &Tensor) -> Tensor;
}

/// Adapts a `(value, gradient)` closure pair.
pub struct FnWithGrad<V, G>(pub V, pub G);

impl<V, G> Differentiable for FnWithGrad<V, G>
where
    V: Fn(&Tensor) -> f64,
    G: Fn(&Tensor) -> Tensor,
{
    fn value(&self, x: &Tensor) -> f64 {
        (self.0)(x)
    }

    fn gradient(&self, x: &Tensor) -> Tensor {
        (self.1)(x)
    }
}

/// Floor on the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-8;

/// Relative error used by all gradient checks:
/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Maximum relative error between the analytic gradient and central
/// differences `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` over every coordinate.
///
/// The function is evaluated twice at `x` first; if the two values differ
/// bit-wise it is not deterministic and a contract error is returned.
pub fn finite_diff_check(f: &impl Differentiable, input: &Tensor, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::config("step", format!("must be positive, got {step}")));
    }
    let v0 = f.value(input);
    let v1 = f.value(input);
    if v0.to_bits() != v1.to_bits() {
        return Err(Error::Contract(format!(
            "function is not deterministic: {v0} then {v1} at the same point"
        )));
    }
    let analytic = f.gradient(input);
    analytic.expect_shape("finite_diff_check", "gradient", input.shape())?;
    let mut probe = input.clone();
    let mut worst = 0.0f64;
    for i in 0..input.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f.value(&probe);
        probe.data_mut()[i] = orig - step;
        let minus = f.value(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::cell::Cell;

    #[test]
    fn linear_function_is_exact() {
        let f = FnWithGrad(|x: &Tensor| 3.0 * x.sum(), |x: &Tensor| Tensor::full(x.shape().to_vec(), 3.0));
        let x = Tensor::vector(alloc::vec![0.3, -1.7, 2.2, 10.0]);
        for step in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5] {
            let err = finite_diff_check(&f, &x, step).unwrap();
            assert!(err < 1e-10, "step {step}: {err}");
        }
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = FnWithGrad(|x: &Tensor| x.dot(x), |x: &Tensor| x.clone());
        let err = finite_diff_check(&f, &Tensor::vector(alloc::vec![1.0, 2.0]), 1e-3).unwrap();
        assert!((err - 0.5).abs() < 1e-6);
    }

    #[test]
    fn nondeterministic_function_rejected() {
        let calls = Cell::new(0u32);
        let f = FnWithGrad(
            |x: &Tensor| {
                calls.set(calls.get() + 1);
                x.sum() + calls.get() as f64
            },
            |x: &Tensor| Tensor::full(x.shape().to_vec(), 1.0),
        );
        let err = finite_diff_check(&f, &Tensor::zeros([3]), 1e-3).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn nonpositive_step_rejected() {
        let f = FnWithGrad(|x: &Tensor| x.sum(), |x: &Tensor| Tensor::full(x.shape().to_vec(), 1.0));
        assert!(finite_diff_check(&f, &Tensor::zeros([1]), 0.0).is_err());
    }
}
