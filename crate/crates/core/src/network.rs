//! The convolutional feature extractor, its two classifier heads and the
//! matching head.
//!
//! Each conv block applies `conv3×3 → LReLU → GroupNorm → dropout →
//! maxpool2×2`; the flattened map then goes through the fully-connected
//! layers, each followed by LReLU. The output of the last of those layers is
//! the feature vector `f`. The two heads are plain affine maps `f → logits`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::losses::MatchHead;
use crate::numerics::{
    conv2d_backward, conv2d_forward, default_groups, dropout, dropout_backward, group_norm_backward,
    group_norm_forward, leaky_relu_backward, leaky_relu_forward, max_pool2_backward, max_pool2_forward, softmax,
    Dense, GroupNormCache, Mode, DEFAULT_GN_EPS, DEFAULT_LRELU_SLOPE,
};
use crate::rng;
use crate::tensor::Tensor;

/// Structural constants of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    /// Input height and width.
    pub input_size: usize,
    pub in_channels: usize,
    /// Filter count of each 3×3 conv block.
    pub conv_filters: Vec<usize>,
    /// Widths of the fully-connected stack. The second-to-last entry is the
    /// feature dimension; the last is the number of classes (head output).
    pub fc_dims: Vec<usize>,
    /// Group count for every GN layer; `None` means `min(32, C)` per layer.
    pub gn_groups: Option<usize>,
    pub gn_eps: f64,
    pub lrelu_slope: f64,
    pub dropout_rate: f64,
}

impl ArchConfig {
    /// The full-size network: 64×64×3 input, conv filters 64/128/256/512,
    /// FC widths 512/128/32/6.
    pub fn full() -> Self {
        Self {
            input_size: 64,
            in_channels: 3,
            conv_filters: vec![64, 128, 256, 512],
            fc_dims: vec![512, 128, 32, 6],
            gn_groups: None,
            gn_eps: DEFAULT_GN_EPS,
            lrelu_slope: DEFAULT_LRELU_SLOPE,
            dropout_rate: 0.5,
        }
    }

    /// Same topology at a width a single CPU core trains in seconds: the
    /// input size, feature dimension and class count are unchanged.
    pub fn desk() -> Self {
        Self {
            conv_filters: vec![4, 8, 8, 16],
            fc_dims: vec![64, 32, 32, 6],
            ..Self::full()
        }
    }

    pub fn num_classes(&self) -> usize {
        *self.fc_dims.last().expect("validated fc_dims")
    }

    pub fn feature_dim(&self) -> usize {
        self.fc_dims[self.fc_dims.len() - 2]
    }

    /// Spatial size after the last pooling stage.
    pub fn pooled_size(&self) -> usize {
        self.input_size >> self.conv_filters.len()
    }

    pub fn flatten_dim(&self) -> usize {
        let s = self.pooled_size();
        self.conv_filters.last().copied().unwrap_or(self.in_channels) * s * s
    }

    pub fn groups_for(&self, channels: usize) -> usize {
        self.gn_groups.unwrap_or_else(|| default_groups(channels))
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::config("in_channels", "must be positive"));
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return Err(Error::config("conv_filters", format!("need positive filter counts, got {:?}", self.conv_filters)));
        }
        let blocks = self.conv_filters.len();
        if blocks >= usize::BITS as usize || self.input_size == 0 || self.input_size % (1 << blocks) != 0 {
            return Err(Error::config(
                "input_size",
                format!("{} is not divisible by 2^{blocks} (one 2x2 pool per conv block)", self.input_size),
            ));
        }
        if self.fc_dims.len() < 2 || self.fc_dims.contains(&0) {
            return Err(Error::config(
                "fc_dims",
                format!("need at least a feature layer and a class layer, got {:?}", self.fc_dims),
            ));
        }
        for &c in &self.conv_filters {
            let g = self.groups_for(c);
            if g == 0 || c % g != 0 {
                return Err(Error::config("gn_groups", format!("{c} channels not divisible into {g} groups")));
            }
        }
        if !(self.gn_eps > 0.0) {
            return Err(Error::config("gn_eps", "must be positive"));
        }
        if !(self.lrelu_slope > 0.0 && self.lrelu_slope < 1.0) {
            return Err(Error::config("lrelu_slope", format!("must lie in (0, 1), got {}", self.lrelu_slope)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate", format!("must lie in [0, 1), got {}", self.dropout_rate)));
        }
        Ok(())
    }

    /// Errors with the first differing field when a checkpoint built for
    /// `self` is loaded into a stage expecting `expected`.
    pub fn ensure_compatible(&self, expected: &ArchConfig) -> Result<()> {
        fn mismatch<T: core::fmt::Debug>(field: &'static str, found: T, expected: T) -> Error {
            Error::ArchMismatch {
                field,
                found: format!("{found:?}"),
                expected: format!("{expected:?}"),
            }
        }
        if self.num_classes() != expected.num_classes() {
            return Err(mismatch("num_classes", self.num_classes(), expected.num_classes()));
        }
        if self.input_size != expected.input_size {
            return Err(mismatch("input_size", self.input_size, expected.input_size));
        }
        if self.in_channels != expected.in_channels {
            return Err(mismatch("in_channels", self.in_channels, expected.in_channels));
        }
        if self.conv_filters != expected.conv_filters {
            return Err(mismatch("conv_filters", &self.conv_filters, &expected.conv_filters));
        }
        if self.fc_dims != expected.fc_dims {
            return Err(mismatch("fc_dims", &self.fc_dims, &expected.fc_dims));
        }
        if self.gn_groups != expected.gn_groups {
            return Err(mismatch("gn_groups", self.gn_groups, expected.gn_groups));
        }
        Ok(())
    }

    /// Number of trainable scalars (heads included, projection excluded).
    pub fn parameter_count(&self) -> usize {
        let mut total = 0;
        let mut c_in = self.in_channels;
        for &f in &self.conv_filters {
            total += f * c_in * 9 + f + 2 * f;
            c_in = f;
        }
        let mut d_in = self.flatten_dim();
        let (body, head) = self.fc_dims.split_at(self.fc_dims.len() - 1);
        for &d in body {
            total += d * d_in + d;
            d_in = d;
        }
        total + 2 * (head[0] * d_in + head[0])
    }
}

/// Parameters of one conv block (also used for its gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    /// `[F, C, 3, 3]`
    pub weights: Tensor,
    pub bias: Tensor,
    /// GroupNorm scale and shift, `[F]` each.
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl ConvBlock {
    fn zeros_like(&self) -> Self {
        Self {
            weights: Tensor::zeros_like(&self.weights),
            bias: Tensor::zeros_like(&self.bias),
            gamma: Tensor::zeros_like(&self.gamma),
            beta: Tensor::zeros_like(&self.beta),
        }
    }
}

/// θₑ: the conv blocks and the fully-connected layers up to the feature
/// vector. The same layout holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    pub conv: Vec<ConvBlock>,
    pub fc: Vec<Dense>,
}

impl FeatureExtractor {
    pub fn zeros_like(&self) -> Self {
        Self {
            conv: self.conv.iter().map(ConvBlock::zeros_like).collect(),
            fc: self.fc.iter().map(Dense::zeros_like).collect(),
        }
    }
}

/// Trainable-parameter groups, used by freeze policies and gradient norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    /// Conv blocks of θₑ, GroupNorm affine parameters included.
    Conv,
    /// Fully-connected layers of θₑ.
    FeatureFc,
    Class1,
    Class2,
    /// The optional matching projection.
    Match,
}

impl ParamGroup {
    pub fn in_extractor(self) -> bool {
        matches!(self, ParamGroup::Conv | ParamGroup::FeatureFc)
    }
}

/// Which classifier head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    One,
    Two,
}

impl Head {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Head::One),
            2 => Ok(Head::Two),
            _ => Err(Error::config("head", format!("must be 1 or 2, got {i}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Head::One => 1,
            Head::Two => 2,
        }
    }
}

/// The complete parameter set `{θₑ, θ_class1, θ_class2, θ_match}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchConfig,
    pub extractor: FeatureExtractor,
    pub class1: Dense,
    pub class2: Dense,
    pub matching: MatchHead,
}

/// Gradients for every trainable tensor of [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub extractor: FeatureExtractor,
    pub class1: Dense,
    pub class2: Dense,
    pub projection: Option<Dense>,
}

/// Truncated-normal variance-scaling draw with `std = sqrt(2 / fan_in)`.
///
/// Samples beyond two standard deviations are redrawn; the raw scale is
/// divided by the std of a standard normal truncated to ±2 so the realised
/// std equals the target.
fn variance_scaling<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    const TRUNC_STD: f64 = 0.879_625_661_034_239_8;
    let std = libm::sqrt(2.0 / fan_in as f64) / TRUNC_STD;
    Tensor::from_fn(shape.to_vec(), |_| loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            break z * std;
        }
    })
}

fn dense_init<R: Rng>(d_out: usize, d_in: usize, rng: &mut R) -> Dense {
    Dense {
        weights: variance_scaling(&[d_out, d_in], d_in, rng),
        bias: Tensor::zeros([d_out]),
    }
}

/// Builds a freshly initialised model: variance-scaling weights for the
/// conv and fully-connected layers of θₑ, zero classifier heads, zero
/// biases, GroupNorm `γ = 1, β = 0`. Identical `(arch, seed)` give
/// bit-identical parameters.
pub fn build_model(arch: &ArchConfig, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let mut r = rng::stream(seed, rng::TAG_INIT);
    let mut conv = Vec::with_capacity(arch.conv_filters.len());
    let mut c_in = arch.in_channels;
    for &f in &arch.conv_filters {
        conv.push(ConvBlock {
            weights: variance_scaling(&[f, c_in, 3, 3], c_in * 9, &mut r),
            bias: Tensor::zeros([f]),
            gamma: Tensor::full([f], 1.0),
            beta: Tensor::zeros([f]),
        });
        c_in = f;
    }
    let (body, head) = arch.fc_dims.split_at(arch.fc_dims.len() - 1);
    let mut fc = Vec::with_capacity(body.len());
    let mut d_in = arch.flatten_dim();
    for &d in body {
        fc.push(dense_init(d, d_in, &mut r));
        d_in = d;
    }
    // Zero heads start every class at probability 1/C, so the initial
    // cross-entropy is exactly ln C.
    let class1 = Dense::zeros(head[0], d_in);
    let class2 = Dense::zeros(head[0], d_in);
    Ok(ModelParams {
        arch: arch.clone(),
        extractor: FeatureExtractor { conv, fc },
        class1,
        class2,
        matching: MatchHead::default(),
    })
}

impl ModelParams {
    /// Replaces the matching head. A learnable projection is initialised as
    /// a `feature_dim → feature_dim` variance-scaling map drawn from `seed`.
    pub fn with_matching(mut self, margin: f64, learnable_projection: bool, seed: u64) -> Result<Self> {
        let projection = if learnable_projection {
            let d = self.arch.feature_dim();
            Some(dense_init(d, d, &mut rng::stream(seed, rng::TAG_INIT ^ 0xA5)))
        } else {
            None
        };
        self.matching = MatchHead::new(margin, projection)?;
        Ok(self)
    }

    pub fn head(&self, head: Head) -> &Dense {
        match head {
            Head::One => &self.class1,
            Head::Two => &self.class2,
        }
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            extractor: self.extractor.zeros_like(),
            class1: self.class1.zeros_like(),
            class2: self.class2.zeros_like(),
            projection: self.matching.projection.as_ref().map(Dense::zeros_like),
        }
    }

    /// Every trainable tensor with its stable name and group, in a fixed
    /// order. Each tensor appears exactly once.
    pub fn named_tensors(&self) -> Vec<(String, ParamGroup, &Tensor)> {
        let mut out = Vec::new();
        visit_extractor(&self.extractor, &mut |name, group, t| out.push((name, group, t)));
        visit_dense("class1", ParamGroup::Class1, &self.class1, &mut |n, g, t| out.push((n, g, t)));
        visit_dense("class2", ParamGroup::Class2, &self.class2, &mut |n, g, t| out.push((n, g, t)));
        if let Some(p) = &self.matching.projection {
            visit_dense("match.proj", ParamGroup::Match, p, &mut |n, g, t| out.push((n, g, t)));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut Tensor)> {
        let mut out: Vec<(ParamGroup, &mut Tensor)> = Vec::new();
        for block in &mut self.extractor.conv {
            for t in [&mut block.weights, &mut block.bias, &mut block.gamma, &mut block.beta] {
                out.push((ParamGroup::Conv, t));
            }
        }
        for layer in &mut self.extractor.fc {
            out.push((ParamGroup::FeatureFc, &mut layer.weights));
            out.push((ParamGroup::FeatureFc, &mut layer.bias));
        }
        out.push((ParamGroup::Class1, &mut self.class1.weights));
        out.push((ParamGroup::Class1, &mut self.class1.bias));
        out.push((ParamGroup::Class2, &mut self.class2.weights));
        out.push((ParamGroup::Class2, &mut self.class2.bias));
        if let Some(p) = &mut self.matching.projection {
            out.push((ParamGroup::Match, &mut p.weights));
            out.push((ParamGroup::Match, &mut p.bias));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, t)| t.len()).sum()
    }
}

impl ModelGrads {
    /// Gradient tensors in the same order as [`ModelParams::tensors_mut`].
    pub fn tensors(&self) -> Vec<(ParamGroup, &Tensor)> {
        let mut out = Vec::new();
        visit_extractor(&self.extractor, &mut |_, g, t| out.push((g, t)));
        visit_dense("", ParamGroup::Class1, &self.class1, &mut |_, g, t| out.push((g, t)));
        visit_dense("", ParamGroup::Class2, &self.class2, &mut |_, g, t| out.push((g, t)));
        if let Some(p) = &self.projection {
            visit_dense("", ParamGroup::Match, p, &mut |_, g, t| out.push((g, t)));
        }
        out
    }

    /// L2 norm over the tensors of the given groups.
    pub fn norm(&self, groups: &[ParamGroup]) -> f64 {
        let sq: f64 = self
            .tensors()
            .iter()
            .filter(|(g, _)| groups.contains(g))
            .map(|(_, t)| t.dot(t))
            .sum();
        libm::sqrt(sq)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }
}

fn visit_dense<'a>(prefix: &str, group: ParamGroup, d: &'a Dense, f: &mut impl FnMut(String, ParamGroup, &'a Tensor)) {
    f(format!("{prefix}.weight"), group, &d.weights);
    f(format!("{prefix}.bias"), group, &d.bias);
}

fn visit_extractor<'a>(e: &'a FeatureExtractor, f: &mut impl FnMut(String, ParamGroup, &'a Tensor)) {
    for (i, b) in e.conv.iter().enumerate() {
        f(format!("e.conv{i}.weight"), ParamGroup::Conv, &b.weights);
        f(format!("e.conv{i}.bias"), ParamGroup::Conv, &b.bias);
        f(format!("e.conv{i}.gn_gamma"), ParamGroup::Conv, &b.gamma);
        f(format!("e.conv{i}.gn_beta"), ParamGroup::Conv, &b.beta);
    }
    for (i, d) in e.fc.iter().enumerate() {
        visit_dense(&format!("e.fc{i}"), ParamGroup::FeatureFc, d, f);
    }
}

struct BlockCache {
    input: Tensor,
    pre_activation: Tensor,
    gn: GroupNormCache,
    mask: Tensor,
    pool_input: Tensor,
    argmax: Vec<usize>,
}

/// Activations saved by [`forward_features`] for the backward pass.
pub struct FeatureCache {
    blocks: Vec<BlockCache>,
    flat_shape: Vec<usize>,
    /// Input of each FC layer.
    fc_inputs: Vec<Tensor>,
    /// Pre-activation output of each FC layer.
    fc_pre: Vec<Tensor>,
}

impl FeatureCache {
    /// How far the cached forward pass is from a point where it is not
    /// differentiable: the smallest |pre-activation| of any LReLU and the
    /// smallest gap between a pooling window's maximum and another live
    /// entry. Entries zeroed by dropout stay zero under any perturbation, so
    /// ties among them do not count.
    pub fn kink_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for z in self.blocks.iter().map(|b| &b.pre_activation).chain(&self.fc_pre) {
            d = z.data().iter().fold(d, |m, v| m.min(v.abs()));
        }
        for b in &self.blocks {
            let [n, c, h, w] = [b.pool_input.shape()[0], b.pool_input.shape()[1], b.pool_input.shape()[2], b.pool_input.shape()[3]];
            let (x, live) = (b.pool_input.data(), b.mask.data());
            for plane in 0..n * c {
                for r in (0..h).step_by(2) {
                    for col in (0..w).step_by(2) {
                        let base = plane * h * w + r * w + col;
                        let window = [base, base + 1, base + w, base + w + 1];
                        let top = *window.iter().max_by(|&&a, &&b| x[a].total_cmp(&x[b])).expect("window");
                        for &i in window.iter().filter(|&&i| i != top) {
                            if live[i] != 0.0 || live[top] != 0.0 {
                                d = d.min(x[top] - x[i]);
                            }
                        }
                    }
                }
            }
        }
        d
    }
}

/// `f = Conv(x, θₑ)` for a `[N, C, H, W]` batch. Returns `[N, feature_dim]`.
pub fn forward_features<R: Rng + ?Sized>(x: &Tensor, params: &ModelParams, mode: Mode, rng: &mut R) -> Result<Tensor> {
    Ok(forward_with_cache(x, params, mode, rng)?.0)
}

pub fn forward_with_cache<R: Rng + ?Sized>(
    x: &Tensor,
    params: &ModelParams,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, FeatureCache)> {
    let arch = &params.arch;
    let s = arch.input_size;
    if x.rank() != 4 {
        return Err(Error::dim("forward_features", format!("input must be [N,C,H,W], got {:?}", x.shape())));
    }
    x.expect_shape("forward_features", "input", &[x.shape()[0], arch.in_channels, s, s])?;
    let slope = arch.lrelu_slope;
    let mut blocks = Vec::with_capacity(params.extractor.conv.len());
    let mut h = x.clone();
    for block in &params.extractor.conv {
        let z = conv2d_forward(&h, &block.weights, &block.bias)?;
        let a = leaky_relu_forward(&z, slope);
        let groups = arch.groups_for(block.gamma.len());
        let (n, gn) = group_norm_forward(&a, &block.gamma, &block.beta, groups, arch.gn_eps)?;
        let (d, mask) = dropout(&n, arch.dropout_rate, mode, rng)?;
        let (p, argmax) = max_pool2_forward(&d)?;
        blocks.push(BlockCache {
            input: h,
            pre_activation: z,
            gn,
            mask,
            pool_input: d,
            argmax,
        });
        h = p;
    }
    let flat_shape = h.shape().to_vec();
    let batch = flat_shape[0];
    let mut act = h.reshape([batch, arch.flatten_dim()])?;
    let mut fc_inputs = Vec::with_capacity(params.extractor.fc.len());
    let mut fc_pre = Vec::with_capacity(params.extractor.fc.len());
    for layer in &params.extractor.fc {
        let z = layer.forward(&act)?;
        let next = leaky_relu_forward(&z, slope);
        fc_inputs.push(act);
        fc_pre.push(z);
        act = next;
    }
    Ok((
        act,
        FeatureCache {
            blocks,
            flat_shape,
            fc_inputs,
            fc_pre,
        },
    ))
}

/// Backpropagates `d_f = ∂L/∂f` into θₑ. When `conv_trainable` is false the
/// pass stops at the flatten and the conv gradients stay zero.
pub fn backward_features(
    params: &ModelParams,
    cache: &FeatureCache,
    d_f: &Tensor,
    conv_trainable: bool,
) -> Result<FeatureExtractor> {
    let arch = &params.arch;
    let slope = arch.lrelu_slope;
    let mut grads = params.extractor.zeros_like();
    let mut d = d_f.clone();
    for (l, layer) in params.extractor.fc.iter().enumerate().rev() {
        let dz = leaky_relu_backward(&cache.fc_pre[l], slope, &d)?;
        let need_input = l > 0 || conv_trainable;
        let (dx, g) = layer.backward(&cache.fc_inputs[l], &dz)?;
        grads.fc[l] = g;
        if !need_input {
            return Ok(grads);
        }
        d = dx;
    }
    let mut d = d.reshape(cache.flat_shape.clone())?;
    for (i, block) in params.extractor.conv.iter().enumerate().rev() {
        let c = &cache.blocks[i];
        let dd = max_pool2_backward(c.pool_input.shape(), &c.argmax, &d)?;
        let dn = dropout_backward(&c.mask, &dd)?;
        let gn = group_norm_backward(&block.gamma, &c.gn, &dn)?;
        let dz = leaky_relu_backward(&c.pre_activation, slope, &gn.d_input)?;
        let cg = conv2d_backward(&c.input, &block.weights, &dz, i > 0)?;
        let mut gn_params = gn.d_params.into_iter();
        let mut conv_params = cg.d_params.into_iter();
        grads.conv[i] = ConvBlock {
            weights: conv_params.next().expect("conv weight grad"),
            bias: conv_params.next().expect("conv bias grad"),
            gamma: gn_params.next().expect("gn gamma grad"),
            beta: gn_params.next().expect("gn beta grad"),
        };
        d = cg.d_input;
    }
    Ok(grads)
}

/// Class probabilities `softmax(head(f))`.
pub fn classify(f: &Tensor, head: Head, params: &ModelParams) -> Result<Tensor> {
    softmax(&params.head(head).forward(f)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{finite_diff_check, FnWithGrad};
    use rand::Rng;

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            input_size: 8,
            in_channels: 3,
            conv_filters: vec![2, 4],
            fc_dims: vec![6, 5, 6],
            gn_groups: Some(2),
            ..ArchConfig::full()
        }
    }

    fn random_input(n: usize, arch: &ArchConfig, seed: u64) -> Tensor {
        let mut r = rng::seeded(seed);
        Tensor::from_fn([n, arch.in_channels, arch.input_size, arch.input_size], |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn full_parameter_count() {
        // conv: 1_920 + 74_112 + 295_680 + 1_181_184
        // fc:   4_194_816 + 65_664 + 4_128; heads: 2 × 198
        assert_eq!(ArchConfig::full().parameter_count(), 5_817_900);
        let model = build_model(&ArchConfig::desk(), 0).unwrap();
        assert_eq!(model.parameter_count(), ArchConfig::desk().parameter_count());
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_model(&ArchConfig::desk(), 42).unwrap();
        let b = build_model(&ArchConfig::desk(), 42).unwrap();
        let c = build_model(&ArchConfig::desk(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn conv_init_std() {
        let model = build_model(&ArchConfig::desk(), 7).unwrap();
        for block in &model.extractor.conv {
            let w = block.weights.data();
            let fan_in = block.weights.shape()[1] * 9;
            let target = libm::sqrt(2.0 / fan_in as f64);
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let std = libm::sqrt(w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64);
            assert!((std / target - 1.0).abs() < 0.1, "std {std} vs {target}");
        }
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let mut a = ArchConfig::desk();
        a.input_size = 60;
        assert!(matches!(a.validate(), Err(Error::Config { field: "input_size", .. })));
        let mut a = ArchConfig::desk();
        a.gn_groups = Some(3);
        assert!(matches!(a.validate(), Err(Error::Config { field: "gn_groups", .. })));
        let mut a = ArchConfig::desk();
        a.dropout_rate = 1.0;
        assert!(matches!(build_model(&a, 0), Err(Error::Config { field: "dropout_rate", .. })));
    }

    #[test]
    fn feature_shape_and_eval_determinism() {
        let arch = tiny_arch();
        let model = build_model(&arch, 1).unwrap();
        for n in [1, 3] {
            let x = random_input(n, &arch, 2);
            let f1 = forward_features(&x, &model, Mode::Eval, &mut rng::seeded(0)).unwrap();
            let f2 = forward_features(&x, &model, Mode::Eval, &mut rng::seeded(99)).unwrap();
            assert_eq!(f1.shape(), &[n, 5]);
            assert_eq!(f1, f2);
        }
    }

    #[test]
    fn wrong_input_shape() {
        let arch = tiny_arch();
        let model = build_model(&arch, 1).unwrap();
        let x = Tensor::zeros([1, 3, 16, 16]);
        assert!(matches!(
            forward_features(&x, &model, Mode::Eval, &mut rng::seeded(0)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn partition_is_exact() {
        let model = build_model(&tiny_arch(), 3).unwrap().with_matching(1.0, true, 3).unwrap();
        let named = model.named_tensors();
        let mut names: Vec<&String> = named.iter().map(|(n, _, _)| n).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), named.len());
        let total: usize = named.iter().map(|(_, _, t)| t.len()).sum();
        let groups = [ParamGroup::Conv, ParamGroup::FeatureFc, ParamGroup::Class1, ParamGroup::Class2, ParamGroup::Match];
        let by_group: usize = groups
            .iter()
            .map(|g| named.iter().filter(|(_, gg, _)| gg == g).map(|(_, _, t)| t.len()).sum::<usize>())
            .sum();
        assert_eq!(total, by_group);
        let grads = model.zero_grads();
        assert_eq!(grads.tensors().len(), named.len());
    }

    #[test]
    fn probe_weight_gradient_end_to_end() {
        let arch = tiny_arch();
        let model = build_model(&arch, 5).unwrap();
        let x = random_input(2, &arch, 6);
        let objective = |m: &ModelParams| {
            let f = forward_features(&x, m, Mode::Eval, &mut rng::seeded(0)).unwrap();
            f.sum() / f.len() as f64
        };
        let grad_of = |m: &ModelParams| {
            let (f, cache) = forward_with_cache(&x, m, Mode::Eval, &mut rng::seeded(0)).unwrap();
            let d = Tensor::full(f.shape().to_vec(), 1.0 / f.len() as f64);
            backward_features(m, &cache, &d, true).unwrap()
        };
        let check = FnWithGrad(
            |w: &Tensor| {
                let mut m = model.clone();
                m.extractor.conv[1].weights = w.clone();
                objective(&m)
            },
            |w: &Tensor| {
                let mut m = model.clone();
                m.extractor.conv[1].weights = w.clone();
                grad_of(&m).conv[1].weights.clone()
            },
        );
        let err = finite_diff_check(&check, &model.extractor.conv[1].weights, 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn classify_rows() {
        let arch = tiny_arch();
        let mut model = build_model(&arch, 1).unwrap();
        let f = Tensor::from_fn([3, 5], |i| i as f64 * 0.1 - 0.4);
        let p = classify(&f, Head::One, &model).unwrap();
        for r in 0..3 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let logits = model.class1.forward(&f).unwrap();
        assert_eq!(p.argmax_rows(), logits.argmax_rows());
        model.class2 = Dense::zeros(6, 5);
        let p = classify(&f, Head::Two, &model).unwrap();
        assert!(p.data().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn arch_mismatch_is_reported() {
        let six = ArchConfig::desk();
        let mut seven = ArchConfig::desk();
        *seven.fc_dims.last_mut().unwrap() = 7;
        assert!(six.ensure_compatible(&ArchConfig::desk()).is_ok());
        assert!(matches!(six.ensure_compatible(&seven), Err(Error::ArchMismatch { field: "num_classes", .. })));
    }
}
