//! Classification and matching losses.
//!
//! * [`cross_entropy`]: mean over the batch of `−log p̂_c`, `p̂ = softmax(head(f))`.
//! * [`contrastive`]: `½‖fᵢ − fⱼ‖²` for same-class pairs and
//!   `½·max(0, m − ‖fᵢ − fⱼ‖²)` for different-class pairs. The margin bounds
//!   the *squared* distance.
//! * [`joint_loss`]: `λ₁L₁ + λ₂L₂ + λ₃L_c`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{softmax, Dense};
use crate::tensor::Tensor;

pub const DEFAULT_MARGIN: f64 = 1.0;

/// Output of a classification loss.
#[derive(Debug, Clone)]
pub struct ClassLoss {
    pub value: f64,
    /// Gradient with respect to the `[N, D]` features.
    pub d_feature: Tensor,
    /// Gradient with respect to the classifier head.
    pub d_head: Dense,
    pub probabilities: Tensor,
}

/// Mean cross-entropy of `softmax(head(f))` against `labels`.
pub fn cross_entropy(f: &Tensor, labels: &[usize], head: &Dense) -> Result<ClassLoss> {
    let logits = head.forward(f)?;
    let (n, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::dim(
            "cross_entropy",
            format!("{} labels for a batch of {n}", labels.len()),
        ));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::data(Some(i), format!("label {l} out of range for {classes} classes")));
    }
    let probabilities = softmax(&logits)?;
    let mut value = 0.0;
    let mut d_logits = probabilities.clone();
    let inv_n = 1.0 / n as f64;
    for (s, &l) in labels.iter().enumerate() {
        let row = logits.row(s);
        // −log p̂_c computed from logits: logsumexp − logit_c.
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(row.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
        value += lse - row[l];
        d_logits.data_mut()[s * classes + l] -= 1.0;
    }
    value *= inv_n;
    for g in d_logits.data_mut() {
        *g *= inv_n;
    }
    let (d_feature, d_head) = head.backward(f, &d_logits)?;
    Ok(ClassLoss {
        value,
        d_feature,
        d_head,
        probabilities,
    })
}

/// Parameters of the matching signal: the margin and an optional learnable
/// projection applied to both features before the distance.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchHead {
    margin: f64,
    pub projection: Option<Dense>,
}

impl MatchHead {
    pub fn new(margin: f64, projection: Option<Dense>) -> Result<Self> {
        if !(margin > 0.0) || !margin.is_finite() {
            return Err(Error::config("margin", format!("must be positive, got {margin}")));
        }
        Ok(Self { margin, projection })
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }
}

impl Default for MatchHead {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            projection: None,
        }
    }
}

/// Output of the matching loss for one pair.
#[derive(Debug, Clone)]
pub struct PairLoss {
    pub value: f64,
    pub d_first: Tensor,
    pub d_second: Tensor,
    /// Projection gradient; `None` when the head has no projection.
    pub d_projection: Option<Dense>,
}

/// `1` when both labels agree, `0` otherwise.
pub fn pair_label(l_i: usize, l_j: usize) -> u8 {
    u8::from(l_i == l_j)
}

/// Contrastive loss of one pair of `[D]` features.
pub fn contrastive(f_i: &Tensor, f_j: &Tensor, y_ij: u8, head: &MatchHead) -> Result<PairLoss> {
    if f_i.rank() != 1 || f_i.shape() != f_j.shape() {
        return Err(Error::dim(
            "contrastive",
            format!("features must be equal-length vectors, got {:?} and {:?}", f_i.shape(), f_j.shape()),
        ));
    }
    if y_ij > 1 {
        return Err(Error::data(None, format!("pair label must be 0 or 1, got {y_ij}")));
    }
    let d = f_i.len();
    let a = f_i.clone().reshape([1, d])?;
    let b = f_j.clone().reshape([1, d])?;
    let out = contrastive_pairs(&a, &b, &[(0, 0, y_ij)], head)?;
    Ok(PairLoss {
        value: out.value,
        d_first: out.d_first.reshape([d])?,
        d_second: out.d_second.reshape([d])?,
        d_projection: out.d_projection,
    })
}

/// Mean contrastive loss over `pairs` of rows `(i, j, y)` drawn from two
/// `[K, D]` feature batches. Gradients are returned per batch.
pub fn contrastive_pairs(
    first: &Tensor,
    second: &Tensor,
    pairs: &[(usize, usize, u8)],
    head: &MatchHead,
) -> Result<PairLoss> {
    if first.rank() != 2 || second.rank() != 2 || first.shape()[1] != second.shape()[1] {
        return Err(Error::dim(
            "contrastive",
            format!("feature batches {:?} and {:?} are incompatible", first.shape(), second.shape()),
        ));
    }
    if pairs.is_empty() {
        return Err(Error::data(None, "no pairs to score"));
    }
    let (ga, gb) = match &head.projection {
        Some(p) => (p.forward(first)?, p.forward(second)?),
        None => (first.clone(), second.clone()),
    };
    let dim = ga.shape()[1];
    let mut d_ga = Tensor::zeros_like(&ga);
    let mut d_gb = Tensor::zeros_like(&gb);
    let scale = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    let mut diff = Vec::with_capacity(dim);
    for &(i, j, y) in pairs {
        if i >= ga.shape()[0] || j >= gb.shape()[0] {
            return Err(Error::dim("contrastive", format!("pair ({i}, {j}) out of range")));
        }
        diff.clear();
        diff.extend(ga.row(i).iter().zip(gb.row(j)).map(|(p, q)| p - q));
        let d2: f64 = diff.iter().map(|v| v * v).sum();
        // d(value)/d(diff): +diff when pulling together, −diff when pushing
        // apart inside the margin, zero when clamped.
        let sign = if y == 1 {
            value += 0.5 * d2;
            1.0
        } else if d2 < head.margin {
            value += 0.5 * (head.margin - d2);
            -1.0
        } else {
            0.0
        };
        if sign != 0.0 {
            let s = sign * scale;
            for (k, &v) in diff.iter().enumerate() {
                d_ga.data_mut()[i * dim + k] += s * v;
                d_gb.data_mut()[j * dim + k] -= s * v;
            }
        }
    }
    value *= scale;
    match &head.projection {
        Some(p) => {
            let (d_first, mut grad_a) = p.backward(first, &d_ga)?;
            let (d_second, grad_b) = p.backward(second, &d_gb)?;
            grad_a.weights.axpy(1.0, &grad_b.weights);
            grad_a.bias.axpy(1.0, &grad_b.bias);
            Ok(PairLoss {
                value,
                d_first,
                d_second,
                d_projection: Some(grad_a),
            })
        }
        None => Ok(PairLoss {
            value,
            d_first: d_ga,
            d_second: d_gb,
            d_projection: None,
        }),
    }
}

/// Loss weights `(λ₁, λ₂, λ₃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub class1: f64,
    pub class2: f64,
    pub matching: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            class1: 1.0,
            class2: 1.0,
            matching: 0.01,
        }
    }
}

pub fn joint_loss(l1: f64, l2: f64, lc: f64, weights: LossWeights) -> f64 {
    weights.class1 * l1 + weights.class2 * l2 + weights.matching * lc
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

    fn identity_head(d: usize) -> Dense {
        Dense {
            weights: Tensor::from_fn([d, d], |i| if i / d == i % d { 1.0 } else { 0.0 }),
            bias: Tensor::zeros([d]),
        }
    }

    #[test]
    fn uniform_prediction_costs_ln6() {
        let head = Dense::zeros(6, 4);
        let f = random(&[3, 4], 1);
        for label in 0..6 {
            let out = cross_entropy(&f, &[label, label, label], &head).unwrap();
            assert!((out.value - libm::log(6.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logit_costs_nothing() {
        let mut f = Tensor::zeros([1, 6]);
        f.data_mut()[2] = 800.0;
        let out = cross_entropy(&f, &[2], &identity_head(6)).unwrap();
        assert!(out.value.abs() < 1e-12);
    }

    #[test]
    fn one_hot_logit_value() {
        let mut f = Tensor::zeros([1, 6]);
        f.data_mut()[0] = 1.0;
        let out = cross_entropy(&f, &[0], &identity_head(6)).unwrap();
        let e = core::f64::consts::E;
        assert!((out.value - libm::log((e + 5.0) / e)).abs() < 1e-14);
        assert!((out.value - 1.043_591_78).abs() < 1e-8);
    }

    #[test]
    fn label_out_of_range_names_sample() {
        let err = cross_entropy(&Tensor::zeros([3, 2]), &[0, 6, 1], &Dense::zeros(6, 2)).unwrap_err();
        assert_eq!(err, Error::Data { index: Some(1), reason: "label 6 out of range for 6 classes".into() });
    }

    #[test]
    fn cross_entropy_gradients() {
        let f = random(&[4, 5], 2);
        let head = Dense { weights: random(&[6, 5], 3), bias: random(&[6], 4) };
        let labels = [0, 3, 5, 3];
        let ff = FnWithGrad(
            |f: &Tensor| cross_entropy(f, &labels, &head).unwrap().value,
            |f: &Tensor| cross_entropy(f, &labels, &head).unwrap().d_feature,
        );
        assert!(finite_diff_check(&ff, &f, 1e-3).unwrap() < 1e-6);
        let fw = FnWithGrad(
            |w: &Tensor| {
                let h = Dense { weights: w.clone(), bias: head.bias.clone() };
                cross_entropy(&f, &labels, &h).unwrap().value
            },
            |w: &Tensor| {
                let h = Dense { weights: w.clone(), bias: head.bias.clone() };
                cross_entropy(&f, &labels, &h).unwrap().d_head.weights
            },
        );
        assert!(finite_diff_check(&fw, &head.weights, 1e-3).unwrap() < 1e-6);
    }

    #[test]
    fn pair_label_rule() {
        assert_eq!(pair_label(3, 3), 1);
        assert_eq!(pair_label(0, 5), 0);
        for l in 0..6 {
            assert_eq!(pair_label(l, l), 1);
        }
    }

    #[test]
    fn identical_features_same_class() {
        let f = random(&[8], 5);
        let out = contrastive(&f, &f, 1, &MatchHead::default()).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.d_first.data().iter().chain(out.d_second.data()).all(|&g| g == 0.0));
    }

    #[test]
    fn clamped_region_is_flat() {
        let a = Tensor::vector(vec![0.0, 0.0]);
        let b = Tensor::vector(vec![1.0, 0.5]);
        let out = contrastive(&a, &b, 0, &MatchHead::default()).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.d_first.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn inside_margin_value_and_gradient() {
        // d² = 0.36 with m = 1.
        let a = Tensor::vector(vec![0.6, 0.0]);
        let b = Tensor::vector(vec![0.0, 0.0]);
        let out = contrastive(&a, &b, 0, &MatchHead::new(1.0, None).unwrap()).unwrap();
        assert!((out.value - 0.32).abs() < 1e-15);
        assert_eq!(out.d_first.data(), &[-0.6, 0.0]);
        assert_eq!(out.d_second.data(), &[0.6, 0.0]);
    }

    #[test]
    fn contrastive_is_symmetric() {
        let a = random(&[6], 6);
        let b = random(&[6], 7);
        for y in [0, 1] {
            let head = MatchHead::new(4.0, None).unwrap();
            let ab = contrastive(&a, &b, y, &head).unwrap();
            let ba = contrastive(&b, &a, y, &head).unwrap();
            assert_eq!(ab.value, ba.value);
            assert_eq!(ab.d_first, ba.d_second);
            assert_eq!(ab.d_second, ba.d_first);
        }
    }

    #[test]
    fn margin_must_be_positive() {
        assert!(MatchHead::new(0.0, None).is_err());
        assert!(MatchHead::new(-1.0, None).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let err = contrastive(&Tensor::zeros([3]), &Tensor::zeros([4]), 1, &MatchHead::default()).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn projection_gradients() {
        let a = random(&[3, 4], 8);
        let b = random(&[3, 4], 9);
        let proj = Dense { weights: random(&[2, 4], 10), bias: random(&[2], 11) };
        let pairs: Vec<(usize, usize, u8)> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j, u8::from(i == j)))).collect();
        let margin = 3.0;
        let fw = FnWithGrad(
            |w: &Tensor| {
                let h = MatchHead::new(margin, Some(Dense { weights: w.clone(), bias: proj.bias.clone() })).unwrap();
                contrastive_pairs(&a, &b, &pairs, &h).unwrap().value
            },
            |w: &Tensor| {
                let h = MatchHead::new(margin, Some(Dense { weights: w.clone(), bias: proj.bias.clone() })).unwrap();
                contrastive_pairs(&a, &b, &pairs, &h).unwrap().d_projection.unwrap().weights
            },
        );
        assert!(finite_diff_check(&fw, &proj.weights, 1e-4).unwrap() < 1e-6);
    }

    #[test]
    fn joint_loss_arithmetic() {
        let w = LossWeights::default();
        assert!((joint_loss(1.0, 2.0, 3.0, w) - 3.03).abs() < 1e-15);
        let naive = LossWeights { matching: 0.0, ..w };
        assert_eq!(joint_loss(1.5, 2.5, 9.0, naive), 4.0);
        assert_eq!(joint_loss(0.0, 0.0, 0.0, w), 0.0);
    }
}
