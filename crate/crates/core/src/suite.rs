//! The finite-difference gradient suite: every layer, both losses, the
//! end-to-end extractor and the assembled joint-learning gradient, each
//! checked over many random seeds.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{sample_pair_batches, Dataset, Modality, PairBatch, Sample};
use crate::error::Result;
use crate::losses::{contrastive_pairs, cross_entropy, LossWeights, MatchHead};
use crate::network::{build_model, forward_features, forward_with_cache, ArchConfig, ModelParams, ParamGroup};
use crate::numerics::gradcheck::{finite_diff_check, FnWithGrad};
use crate::numerics::{
    conv2d, dropout, fully_connected, group_norm, leaky_relu, max_pool2_backward, max_pool2_forward, Dense, Mode,
    DEFAULT_LRELU_SLOPE,
};
use crate::rng::{self, SeededRng};
use crate::tensor::Tensor;
use crate::train::{joint_gradients, Freeze};

/// Central-difference step of the per-layer and per-loss checks.
pub const STEP: f64 = 1e-3;
/// Step of the whole-network checks. A 1e-3 step there routinely moves some
/// activation across a pooling switch or activation kink.
pub const NETWORK_STEP: f64 = 1e-5;
/// Step for the classifier heads inside the joint check.
pub const HEAD_STEP: f64 = 1e-4;
/// Tolerance for ops that are piecewise polynomial of degree at most two
/// where they are probed, so central differences are exact up to rounding.
pub const EXACT_TOLERANCE: f64 = 1e-6;
/// Tolerance for everything else, where the O(h²) truncation error of
/// central differences is visible on small gradient coordinates.
pub const TOLERANCE: f64 = 1e-4;
pub const DEFAULT_SEEDS: usize = 20;

/// Worst relative error of one check over all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub seeds: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

fn normal(shape: &[usize], r: &mut SeededRng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| StandardNormal.sample(r))
}

/// Values whose magnitude stays at least `gap` away from zero.
fn away_from_zero(shape: &[usize], gap: f64, r: &mut SeededRng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let v: f64 = StandardNormal.sample(r);
        v.signum() * (gap + v.abs())
    })
}

/// A random permutation of evenly spaced values, so no two pooling
/// candidates are within `spacing` of each other.
fn spaced(shape: &[usize], spacing: f64, r: &mut SeededRng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, r.random_range(0..=i));
    }
    Tensor::from_fn(shape.to_vec(), |i| (order[i] as f64 - n as f64 / 2.0) * spacing)
}

type Check = fn(&mut SeededRng) -> Result<f64>;

fn worst(checks: &[Result<f64>]) -> Result<f64> {
    let mut w = 0.0f64;
    for c in checks {
        w = w.max(c.clone()?);
    }
    Ok(w)
}

fn conv_check(r: &mut SeededRng) -> Result<f64> {
    let x = normal(&[2, 2, 4, 4], r);
    let w = normal(&[3, 2, 3, 3], r);
    let b = normal(&[3], r);
    let up = normal(&[2, 3, 4, 4], r);
    let fx = FnWithGrad(
        |x: &Tensor| conv2d(x, &w, &b, None).unwrap().0.dot(&up),
        |x: &Tensor| conv2d(x, &w, &b, Some(&up)).unwrap().1.unwrap().d_input,
    );
    let fw = FnWithGrad(
        |w: &Tensor| conv2d(&x, w, &b, None).unwrap().0.dot(&up),
        |w: &Tensor| conv2d(&x, w, &b, Some(&up)).unwrap().1.unwrap().d_params[0].clone(),
    );
    let fb = FnWithGrad(
        |b: &Tensor| conv2d(&x, &w, b, None).unwrap().0.dot(&up),
        |b: &Tensor| conv2d(&x, &w, b, Some(&up)).unwrap().1.unwrap().d_params[1].clone(),
    );
    worst(&[
        finite_diff_check(&fx, &x, STEP),
        finite_diff_check(&fw, &w, STEP),
        finite_diff_check(&fb, &b, STEP),
    ])
}

fn fc_check(r: &mut SeededRng) -> Result<f64> {
    let x = normal(&[2, 5], r);
    let w = normal(&[3, 5], r);
    let b = normal(&[3], r);
    let up = normal(&[2, 3], r);
    let fx = FnWithGrad(
        |x: &Tensor| fully_connected(x, &w, &b, None).unwrap().0.dot(&up),
        |x: &Tensor| fully_connected(x, &w, &b, Some(&up)).unwrap().1.unwrap().d_input,
    );
    let fw = FnWithGrad(
        |w: &Tensor| fully_connected(&x, w, &b, None).unwrap().0.dot(&up),
        |w: &Tensor| fully_connected(&x, w, &b, Some(&up)).unwrap().1.unwrap().d_params[0].clone(),
    );
    let fb = FnWithGrad(
        |b: &Tensor| fully_connected(&x, &w, b, None).unwrap().0.dot(&up),
        |b: &Tensor| fully_connected(&x, &w, b, Some(&up)).unwrap().1.unwrap().d_params[1].clone(),
    );
    worst(&[
        finite_diff_check(&fx, &x, STEP),
        finite_diff_check(&fw, &w, STEP),
        finite_diff_check(&fb, &b, STEP),
    ])
}

fn lrelu_check(r: &mut SeededRng) -> Result<f64> {
    let x = away_from_zero(&[2, 3, 4], 1e-2, r);
    let up = normal(&[2, 3, 4], r);
    let s = DEFAULT_LRELU_SLOPE;
    let f = FnWithGrad(
        |x: &Tensor| leaky_relu(x, s, None).unwrap().0.dot(&up),
        |x: &Tensor| leaky_relu(x, s, Some(&up)).unwrap().1.unwrap().d_input,
    );
    finite_diff_check(&f, &x, STEP)
}

fn gn_check(r: &mut SeededRng) -> Result<f64> {
    let x = normal(&[2, 4, 2, 3], r);
    // Scales near their initial value of 1. A scale near zero leaves that
    // channel's gradient tiny while its group statistics still curve.
    let gamma = normal(&[4], r).map(|v| 1.0 + 0.25 * v);
    let beta = normal(&[4], r);
    let up = normal(&[2, 4, 2, 3], r);
    let eps = crate::numerics::DEFAULT_GN_EPS;
    let fx = FnWithGrad(
        |x: &Tensor| group_norm(x, &gamma, &beta, 2, eps, None).unwrap().0.dot(&up),
        |x: &Tensor| group_norm(x, &gamma, &beta, 2, eps, Some(&up)).unwrap().1.unwrap().d_input,
    );
    let fg = FnWithGrad(
        |g: &Tensor| group_norm(&x, g, &beta, 2, eps, None).unwrap().0.dot(&up),
        |g: &Tensor| group_norm(&x, g, &beta, 2, eps, Some(&up)).unwrap().1.unwrap().d_params[0].clone(),
    );
    let fb = FnWithGrad(
        |b: &Tensor| group_norm(&x, &gamma, b, 2, eps, None).unwrap().0.dot(&up),
        |b: &Tensor| group_norm(&x, &gamma, b, 2, eps, Some(&up)).unwrap().1.unwrap().d_params[1].clone(),
    );
    worst(&[
        finite_diff_check(&fx, &x, STEP),
        finite_diff_check(&fg, &gamma, STEP),
        finite_diff_check(&fb, &beta, STEP),
    ])
}

fn pool_check(r: &mut SeededRng) -> Result<f64> {
    let x = spaced(&[2, 2, 4, 4], 0.05, r);
    let up = normal(&[2, 2, 2, 2], r);
    let f = FnWithGrad(
        |x: &Tensor| max_pool2_forward(x).unwrap().0.dot(&up),
        |x: &Tensor| {
            let (_, argmax) = max_pool2_forward(x).unwrap();
            max_pool2_backward(x.shape(), &argmax, &up).unwrap()
        },
    );
    finite_diff_check(&f, &x, STEP)
}

fn dropout_check(r: &mut SeededRng) -> Result<f64> {
    // A fixed mask replayed on both sides of the difference.
    let x = normal(&[2, 3, 4], r);
    let up = normal(&[2, 3, 4], r);
    let seed: u64 = r.random();
    let mask = dropout(&x, 0.5, Mode::Train, &mut rng::seeded(seed))?.1;
    let f = FnWithGrad(
        |x: &Tensor| dropout(x, 0.5, Mode::Train, &mut rng::seeded(seed)).unwrap().0.dot(&up),
        |_: &Tensor| crate::numerics::dropout_backward(&mask, &up).unwrap(),
    );
    finite_diff_check(&f, &x, STEP)
}

fn composition_check(r: &mut SeededRng) -> Result<f64> {
    let eps = crate::numerics::DEFAULT_GN_EPS;
    let s = DEFAULT_LRELU_SLOPE;
    // Redraw until every activation input is clear of the kink, as in the
    // single-layer check.
    let (x, w, b, gamma, beta) = loop {
        let x = normal(&[2, 2, 4, 4], r);
        let w = normal(&[4, 2, 3, 3], r);
        let b = normal(&[4], r);
        let gamma = normal(&[4], r);
        let beta = normal(&[4], r);
        let y = conv2d(&x, &w, &b, None)?.0;
        let z = group_norm(&y, &gamma, &beta, 2, eps, None)?.0;
        if z.data().iter().all(|v| v.abs() > 1e-2) {
            break (x, w, b, gamma, beta);
        }
    };
    let up = normal(&[2, 4, 4, 4], r);
    let value = |x: &Tensor| {
        let y = conv2d(x, &w, &b, None).unwrap().0;
        let z = group_norm(&y, &gamma, &beta, 2, eps, None).unwrap().0;
        leaky_relu(&z, s, None).unwrap().0.dot(&up)
    };
    let grad = |x: &Tensor| {
        let y = conv2d(x, &w, &b, None).unwrap().0;
        let z = group_norm(&y, &gamma, &beta, 2, eps, None).unwrap().0;
        let dz = leaky_relu(&z, s, Some(&up)).unwrap().1.unwrap().d_input;
        let dy = group_norm(&y, &gamma, &beta, 2, eps, Some(&dz)).unwrap().1.unwrap().d_input;
        conv2d(x, &w, &b, Some(&dy)).unwrap().1.unwrap().d_input
    };
    finite_diff_check(&FnWithGrad(value, grad), &x, STEP)
}

fn cross_entropy_check(r: &mut SeededRng) -> Result<f64> {
    let f = normal(&[3, 5], r);
    let head = Dense {
        weights: normal(&[6, 5], r).scale(0.5),
        bias: normal(&[6], r).scale(0.1),
    };
    let labels: Vec<usize> = (0..3).map(|_| r.random_range(0..6)).collect();
    let ff = FnWithGrad(
        |f: &Tensor| cross_entropy(f, &labels, &head).unwrap().value,
        |f: &Tensor| cross_entropy(f, &labels, &head).unwrap().d_feature,
    );
    let fw = FnWithGrad(
        |w: &Tensor| {
            let h = Dense {
                weights: w.clone(),
                bias: head.bias.clone(),
            };
            cross_entropy(&f, &labels, &h).unwrap().value
        },
        |w: &Tensor| {
            let h = Dense {
                weights: w.clone(),
                bias: head.bias.clone(),
            };
            cross_entropy(&f, &labels, &h).unwrap().d_head.weights
        },
    );
    let fb = FnWithGrad(
        |b: &Tensor| {
            let h = Dense {
                weights: head.weights.clone(),
                bias: b.clone(),
            };
            cross_entropy(&f, &labels, &h).unwrap().value
        },
        |b: &Tensor| {
            let h = Dense {
                weights: head.weights.clone(),
                bias: b.clone(),
            };
            cross_entropy(&f, &labels, &h).unwrap().d_head.bias
        },
    );
    worst(&[
        finite_diff_check(&ff, &f, STEP),
        finite_diff_check(&fw, &head.weights, STEP),
        finite_diff_check(&fb, &head.bias, STEP),
    ])
}

/// Two feature batches and all K² pairs with random labels, plus a margin
/// chosen so that every squared distance sits well away from it.
fn pair_problem(r: &mut SeededRng, projection: bool) -> (Tensor, Tensor, Vec<(usize, usize, u8)>, MatchHead) {
    let (k, d) = (3, 4);
    let a = normal(&[k, d], r);
    let b = normal(&[k, d], r);
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in 0..k {
            pairs.push((i, j, u8::from(r.random_bool(0.5))));
        }
    }
    let proj = projection.then(|| Dense {
        weights: normal(&[d, d], r).scale(0.5),
        bias: normal(&[d], r),
    });
    let project = |t: &Tensor| match &proj {
        Some(p) => p.forward(t).unwrap(),
        None => t.clone(),
    };
    let (ga, gb) = (project(&a), project(&b));
    let mut d2: Vec<f64> = pairs
        .iter()
        .map(|&(i, j, _)| ga.row(i).iter().zip(gb.row(j)).map(|(p, q)| (p - q) * (p - q)).sum())
        .collect();
    d2.sort_by(f64::total_cmp);
    // Midpoint of the widest gap between sorted squared distances: some
    // negative pairs are active and some clamped, none near the boundary.
    let mut margin = d2[d2.len() - 1] + 1.0;
    let mut widest = 0.0;
    for w in d2.windows(2) {
        if w[1] - w[0] > widest {
            widest = w[1] - w[0];
            margin = 0.5 * (w[0] + w[1]);
        }
    }
    (a, b, pairs, MatchHead::new(margin, proj).expect("positive margin"))
}

fn contrastive_check(r: &mut SeededRng) -> Result<f64> {
    let mut results = Vec::new();
    for projection in [false, true] {
        let (a, b, pairs, head) = pair_problem(r, projection);
        let fa = FnWithGrad(
            |a: &Tensor| contrastive_pairs(a, &b, &pairs, &head).unwrap().value,
            |a: &Tensor| contrastive_pairs(a, &b, &pairs, &head).unwrap().d_first,
        );
        let fb = FnWithGrad(
            |b: &Tensor| contrastive_pairs(&a, b, &pairs, &head).unwrap().value,
            |b: &Tensor| contrastive_pairs(&a, b, &pairs, &head).unwrap().d_second,
        );
        results.push(finite_diff_check(&fa, &a, STEP));
        results.push(finite_diff_check(&fb, &b, STEP));
        if let Some(p) = &head.projection {
            let with = |w: &Tensor| {
                let proj = Dense {
                    weights: w.clone(),
                    bias: p.bias.clone(),
                };
                MatchHead::new(head.margin(), Some(proj)).unwrap()
            };
            let fw = FnWithGrad(
                |w: &Tensor| contrastive_pairs(&a, &b, &pairs, &with(w)).unwrap().value,
                |w: &Tensor| contrastive_pairs(&a, &b, &pairs, &with(w)).unwrap().d_projection.unwrap().weights,
            );
            results.push(finite_diff_check(&fw, &p.weights, STEP));
        }
    }
    worst(&results)
}

/// The reduced network used by the end-to-end and joint checks: 8×8
/// inputs, two conv blocks and 8-dimensional features.
pub fn shrunken_arch() -> ArchConfig {
    ArchConfig {
        input_size: 8,
        in_channels: 3,
        conv_filters: vec![2, 4],
        fc_dims: vec![8, 8, 6],
        gn_groups: Some(2),
        ..ArchConfig::full()
    }
}

/// Moves a freshly built model to a generic point: random heads instead of
/// zero ones, and random biases so that no activation sits exactly on the
/// LReLU kink (a zero-bias conv over a fully dropped receptive field
/// outputs exactly 0).
fn perturb(params: &mut ModelParams, r: &mut SeededRng) {
    for head in [&mut params.class1, &mut params.class2] {
        head.weights = normal(head.weights.shape(), r).scale(0.1);
        head.bias = normal(head.bias.shape(), r).scale(0.1);
    }
    for block in &mut params.extractor.conv {
        block.bias = normal(block.bias.shape(), r).scale(0.1);
    }
    for layer in &mut params.extractor.fc {
        layer.bias = normal(layer.bias.shape(), r).scale(0.1);
    }
}

fn extractor_check(r: &mut SeededRng) -> Result<f64> {
    let arch = shrunken_arch();
    let mut params = build_model(&arch, r.random())?;
    perturb(&mut params, r);
    let x = normal(&[2, 3, 8, 8], r);
    let up = normal(&[2, 8], r);
    let dropout_seed: u64 = r.random();
    let mut results = Vec::new();
    for k in 0..params.named_tensors().len() {
        let value = |t: &Tensor| {
            let mut p = params.clone();
            *p.tensors_mut()[k].1 = t.clone();
            forward_features(&x, &p, Mode::Train, &mut rng::seeded(dropout_seed)).unwrap().dot(&up)
        };
        let grad = |t: &Tensor| {
            let mut p = params.clone();
            *p.tensors_mut()[k].1 = t.clone();
            let mut dr = rng::seeded(dropout_seed);
            let (_, cache) = crate::network::forward_with_cache(&x, &p, Mode::Train, &mut dr).unwrap();
            let g = crate::network::backward_features(&p, &cache, &up, true).unwrap();
            let mut grads = p.zero_grads();
            grads.extractor = g;
            grads.tensors()[k].1.clone()
        };
        if params.named_tensors()[k].1.in_extractor() {
            results.push(finite_diff_check(&FnWithGrad(value, grad), params.named_tensors()[k].2, NETWORK_STEP));
        }
    }
    worst(&results)
}

/// Distance a joint-check point keeps from every LReLU kink and pooling
/// switch, so that no probe of the check crosses one.
pub const KINK_MARGIN: f64 = 1e-2;
/// Relative distance a joint-check point keeps between each negative pair's
/// squared distance and the contrastive margin.
pub const CLAMP_MARGIN: f64 = 0.05;
/// Step for the extractor tensors inside the joint check.
pub const JOINT_STEP: f64 = 1e-4;
/// Step for the projection inside the joint check.
pub const PROJECTION_STEP: f64 = 1e-2;

/// Draws a random shrunken model and pair batch for the joint check, or
/// `None` when the drawn point is too close to a point where `L_joint` is
/// not differentiable.
fn joint_point(r: &mut SeededRng) -> Result<Option<(ModelParams, PairBatch, u64)>> {
    let arch = shrunken_arch();
    let mut params = build_model(&arch, r.random())?.with_matching(1.0, true, r.random())?;
    perturb(&mut params, r);
    let make = |labels: [usize; 2], r: &mut SeededRng| {
        let samples = labels
            .iter()
            .enumerate()
            .map(|(g, &label)| Sample {
                input: normal(&[3, 8, 8], r),
                label,
                group: g,
            })
            .collect();
        Dataset::new("fd", Modality::Visual, samples)
    };
    let ds_i = make([0, 1], r)?;
    let ds_j = make([0, 2], r)?;
    let batch = sample_pair_batches(&ds_i, &ds_j, vec![0, 1], vec![0, 1], (None, None))?;
    let dropout_seed: u64 = r.random();
    // Replays the two forward passes of `joint_gradients`, dropout included.
    let mut e = rng::seeded(dropout_seed);
    let (fi, ci) = forward_with_cache(&batch.x_i, &params, Mode::Train, &mut e)?;
    let (fj, cj) = forward_with_cache(&batch.x_j, &params, Mode::Train, &mut e)?;
    if ci.kink_distance().min(cj.kink_distance()) < KINK_MARGIN {
        return Ok(None);
    }
    // Put the margin between the negative pairs' squared distances so both
    // contrastive branches contribute.
    let proj = params.matching.projection.clone().expect("projection enabled");
    let (gi, gj) = (proj.forward(&fi)?, proj.forward(&fj)?);
    let mut neg: Vec<f64> = batch
        .pairs
        .iter()
        .filter(|p| p.y == 0)
        .map(|p| gi.row(p.a).iter().zip(gj.row(p.b)).map(|(u, v)| (u - v) * (u - v)).sum())
        .collect();
    neg.sort_by(f64::total_cmp);
    let margin = 0.5 * (neg[0] + neg[neg.len() - 1]);
    if neg.iter().any(|d| (d - margin).abs() < CLAMP_MARGIN * margin) {
        return Ok(None);
    }
    params.matching = MatchHead::new(margin, Some(proj))?;
    Ok(Some((params, batch, dropout_seed)))
}

/// Relative error of the assembled joint-learning gradient against central
/// differences of `L_joint`, per parameter group, on the shrunken network.
///
/// Points are redrawn until they clear every kink by the margins above, so
/// each group can use the step that balances its truncation and rounding
/// error: [`JOINT_STEP`] for the extractor, [`HEAD_STEP`] for the smooth but
/// curved heads. `L_joint` is piecewise quadratic in the projection, so central
/// differences are exact there and the large [`PROJECTION_STEP`] keeps its
/// small, λ3-scaled gradient clear of rounding noise.
pub fn joint_assembly_errors(seed: u64, weights: LossWeights) -> Result<Vec<(ParamGroup, f64)>> {
    let mut r = rng::seeded(seed);
    let (params, batch, dropout_seed) = loop {
        if let Some(point) = joint_point(&mut r)? {
            break point;
        }
    };
    let loss = |p: &ModelParams| {
        joint_gradients(p, &batch, weights, Freeze::AllTrainable, Mode::Train, &mut rng::seeded(dropout_seed))
            .unwrap()
            .0
            .joint
    };
    let (_, analytic) = joint_gradients(
        &params,
        &batch,
        weights,
        Freeze::AllTrainable,
        Mode::Train,
        &mut rng::seeded(dropout_seed),
    )?;
    let analytic: Vec<Tensor> = analytic.tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let named = params.named_tensors();
    let mut out: Vec<(ParamGroup, f64)> = Vec::new();
    for (k, (_, group, tensor)) in named.iter().enumerate() {
        // Both extractor groups are reported together as θₑ.
        let group = if group.in_extractor() { ParamGroup::Conv } else { *group };
        let g = analytic[k].clone();
        let f = FnWithGrad(
            |t: &Tensor| {
                let mut p = params.clone();
                *p.tensors_mut()[k].1 = t.clone();
                loss(&p)
            },
            |_: &Tensor| g.clone(),
        );
        let step = match group {
            ParamGroup::Conv | ParamGroup::FeatureFc => JOINT_STEP,
            ParamGroup::Class1 | ParamGroup::Class2 => HEAD_STEP,
            ParamGroup::Match => PROJECTION_STEP,
        };
        let err = finite_diff_check(&f, tensor, step)?;
        match out.iter_mut().find(|(g, _)| *g == group) {
            Some(slot) => slot.1 = slot.1.max(err),
            None => out.push((group, err)),
        }
    }
    Ok(out)
}

fn joint_check(r: &mut SeededRng) -> Result<f64> {
    let errs = joint_assembly_errors(r.random(), LossWeights::default())?;
    Ok(errs.iter().fold(0.0f64, |w, (_, e)| w.max(*e)))
}

const CHECKS: [(&str, Check, f64); 11] = [
    ("conv2d", conv_check, EXACT_TOLERANCE),
    ("fully_connected", fc_check, EXACT_TOLERANCE),
    ("leaky_relu", lrelu_check, EXACT_TOLERANCE),
    ("group_norm", gn_check, TOLERANCE),
    ("max_pool2", pool_check, EXACT_TOLERANCE),
    ("dropout", dropout_check, EXACT_TOLERANCE),
    ("conv_gn_lrelu", composition_check, TOLERANCE),
    ("cross_entropy", cross_entropy_check, TOLERANCE),
    ("contrastive", contrastive_check, EXACT_TOLERANCE),
    ("feature_extractor", extractor_check, TOLERANCE),
    ("joint_assembly", joint_check, TOLERANCE),
];

/// Runs every check for `seeds` seeds derived from `base_seed`.
pub fn run_suite(seeds: usize, base_seed: u64) -> Result<Vec<CheckResult>> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(c, (name, check, tolerance))| {
            let mut w = 0.0f64;
            for s in 0..seeds {
                let mut r = rng::seeded(rng::derive_seed(base_seed, (c * 1000 + s) as u64));
                w = w.max(check(&mut r)?);
            }
            Ok(CheckResult {
                name,
                max_rel_error: w,
                tolerance: *tolerance,
                seeds,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes_on_a_few_seeds() {
        for res in run_suite(3, 7).unwrap() {
            assert!(res.passed(), "{} error {}", res.name, res.max_rel_error);
        }
    }
}
