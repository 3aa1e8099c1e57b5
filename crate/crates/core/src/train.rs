//! Staged training: pretraining and fine-tuning of a single classifier head,
//! and joint learning of both heads plus the matching signal over pairs of
//! mini-batches drawn from two datasets.
//!
//! The optimizer is plain SGD with a constant (or step-decayed) learning
//! rate. Dropout is active during every training iteration.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::Rng;

use crate::codec::{Checkpoint, StageMeta};
use crate::data::{Dataset, EpochSampler, Normalizer, PairBatch, PairSampler, Sample};
use crate::error::{Error, Result};
use crate::losses::{contrastive_pairs, cross_entropy, joint_loss, LossWeights, DEFAULT_MARGIN};
use crate::network::{backward_features, build_model, forward_with_cache, ArchConfig, Head, ModelGrads, ModelParams, ParamGroup};
use crate::numerics::{Dense, Mode};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Pretrain,
    Finetune,
    Joint,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Pretrain => "pretrain",
            StageKind::Finetune => "finetune",
            StageKind::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pretrain" => Some(StageKind::Pretrain),
            "finetune" => Some(StageKind::Finetune),
            "joint" => Some(StageKind::Joint),
            _ => None,
        }
    }
}

/// Which parameter groups a stage updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    AllTrainable,
    /// Conv blocks (GroupNorm affine parameters included) stay fixed.
    FcOnly,
}

impl Freeze {
    pub fn name(self) -> &'static str {
        match self {
            Freeze::AllTrainable => "all_trainable",
            Freeze::FcOnly => "fc_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all_trainable" => Some(Freeze::AllTrainable),
            "fc_only" => Some(Freeze::FcOnly),
            _ => None,
        }
    }

    pub fn trains(self, group: ParamGroup) -> bool {
        !(self == Freeze::FcOnly && group == ParamGroup::Conv)
    }

    fn conv_trainable(self) -> bool {
        self.trains(ParamGroup::Conv)
    }
}

/// Learning rate `η(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant,
    /// Multiplies the rate by `factor` every `every` iterations.
    StepDecay { every: usize, factor: f64 },
}

impl Schedule {
    /// Rate at 1-based iteration `t`.
    pub fn lr_at(self, base: f64, t: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::StepDecay { every, factor } => base * libm::pow(factor, ((t - 1) / every) as f64),
        }
    }
}

/// Everything one training stage needs besides its data and initial model.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub name: String,
    pub kind: StageKind,
    /// Architecture a fresh model is built with, and that a loaded
    /// checkpoint must match.
    pub arch: ArchConfig,
    pub freeze: Freeze,
    pub lr: f64,
    pub schedule: Schedule,
    pub iterations: usize,
    /// Mini-batch size K (per dataset for joint stages).
    pub batch: usize,
    pub weights: LossWeights,
    pub margin: f64,
    pub learnable_projection: bool,
    /// Head trained by pretrain and fine-tune stages.
    pub head: Head,
    pub seed: u64,
}

impl StageSpec {
    /// Desk-scale defaults for a stage of the given kind.
    pub fn new(name: impl Into<String>, kind: StageKind) -> Self {
        let (lr, iterations) = match kind {
            StageKind::Pretrain | StageKind::Finetune => (1e-4, 2000),
            StageKind::Joint => (1e-4, 1000),
        };
        Self {
            name: name.into(),
            kind,
            arch: ArchConfig::desk(),
            freeze: Freeze::AllTrainable,
            lr,
            schedule: Schedule::Constant,
            iterations,
            batch: 2,
            weights: LossWeights::default(),
            margin: DEFAULT_MARGIN,
            learnable_projection: false,
            head: Head::One,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", format!("must be positive, got {}", self.lr)));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch", "must be positive"));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::config("margin", format!("must be positive, got {}", self.margin)));
        }
        let w = self.weights;
        if ![w.class1, w.class2, w.matching].iter().all(|v| *v >= 0.0 && v.is_finite()) {
            return Err(Error::config("lambda", "loss weights must be finite and non-negative"));
        }
        if let Schedule::StepDecay { every, factor } = self.schedule {
            if every == 0 || !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::config("schedule", "step decay needs every > 0 and 0 < factor <= 1"));
            }
        }
        if self.kind == StageKind::Pretrain && self.freeze != Freeze::AllTrainable {
            return Err(Error::config("freeze", "a freshly initialised model cannot be frozen"));
        }
        Ok(())
    }
}

/// One logged iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: usize,
    pub l1: f64,
    pub l2: f64,
    pub lc: f64,
    pub l_joint: f64,
    pub grad_norm_e: f64,
    pub grad_norm_c1: f64,
    pub grad_norm_c2: f64,
}

/// End-of-stage loss and accuracy over the training data in eval mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalMetrics {
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    pub final_metrics: Option<FinalMetrics>,
}

pub const LOG_HEADER: &str = "t,L1,L2,Lc,L_joint,grad_norm_e,grad_norm_c1,grad_norm_c2";

impl TrainLog {
    /// CSV with one row per iteration. Floats use the shortest round-trip
    /// representation, so equal logs give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(LOG_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.t, r.l1, r.l2, r.lc, r.l_joint, r.grad_norm_e, r.grad_norm_c1, r.grad_norm_c2
            );
        }
        s
    }
}

/// A finished stage: the checkpoint it produced and its log.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

/// `θ ← θ − η·Δθ` for every group the freeze policy trains. Frozen tensors
/// are not touched at all.
pub fn sgd_step(params: &mut ModelParams, grads: &ModelGrads, lr: f64, freeze: Freeze) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::config("lr", format!("must be positive, got {lr}")));
    }
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    if g.len() != p.len() {
        return Err(Error::Contract(format!(
            "gradient set has {} tensors, parameters have {}",
            g.len(),
            p.len()
        )));
    }
    for ((group, theta), (g_group, delta)) in p.iter_mut().zip(&g) {
        if group != g_group || theta.shape() != delta.shape() {
            return Err(Error::Contract(format!(
                "gradient {:?} {:?} does not line up with parameter {:?} {:?}",
                g_group,
                delta.shape(),
                group,
                theta.shape()
            )));
        }
        if freeze.trains(*group) {
            theta.axpy(-lr, delta);
        }
    }
    Ok(())
}

const EXTRACTOR_GROUPS: [ParamGroup; 2] = [ParamGroup::Conv, ParamGroup::FeatureFc];

fn head_grads_slot(grads: &mut ModelGrads, head: Head) -> &mut Dense {
    match head {
        Head::One => &mut grads.class1,
        Head::Two => &mut grads.class2,
    }
}

fn add_dense(into: &mut Dense, scale: f64, g: &Dense) {
    into.weights.axpy(scale, &g.weights);
    into.bias.axpy(scale, &g.bias);
}

fn add_extractor(into: &mut crate::network::FeatureExtractor, g: &crate::network::FeatureExtractor) {
    for (a, b) in into.conv.iter_mut().zip(&g.conv) {
        a.weights.axpy(1.0, &b.weights);
        a.bias.axpy(1.0, &b.bias);
        a.gamma.axpy(1.0, &b.gamma);
        a.beta.axpy(1.0, &b.beta);
    }
    for (a, b) in into.fc.iter_mut().zip(&g.fc) {
        add_dense(a, 1.0, b);
    }
}

/// Loss and gradients of one classifier mini-batch through `head`.
pub fn classifier_gradients<R: Rng + ?Sized>(
    params: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    head: Head,
    freeze: Freeze,
    mode: Mode,
    rng: &mut R,
) -> Result<(f64, ModelGrads)> {
    let (f, cache) = forward_with_cache(x, params, mode, rng)?;
    let ce = cross_entropy(&f, labels, params.head(head))?;
    let mut grads = params.zero_grads();
    grads.extractor = backward_features(params, &cache, &ce.d_feature, freeze.conv_trainable())?;
    *head_grads_slot(&mut grads, head) = ce.d_head;
    Ok((ce.value, grads))
}

/// The three loss terms of one joint iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLosses {
    pub l1: f64,
    pub l2: f64,
    pub lc: f64,
    pub joint: f64,
}

/// Loss terms and assembled gradients of one joint iteration.
///
/// Both heads score the features of both batches: `L1 = L(f_i, θ_class1) +
/// L(f_j, θ_class1)`, likewise `L2` with head 2, and `Lc` is the mean
/// contrastive loss over the K² pairs. Each feature batch receives
/// `λ1·∂L1/∂f + λ2·∂L2/∂f + λ3·∂Lc/∂f` and is backpropagated through its own
/// forward cache; the two extractor gradients are summed.
pub fn joint_gradients<R: Rng + ?Sized>(
    params: &ModelParams,
    batch: &PairBatch,
    weights: LossWeights,
    freeze: Freeze,
    mode: Mode,
    rng: &mut R,
) -> Result<(JointLosses, ModelGrads)> {
    let (f_i, cache_i) = forward_with_cache(&batch.x_i, params, mode, rng)?;
    let (f_j, cache_j) = forward_with_cache(&batch.x_j, params, mode, rng)?;
    let c1_i = cross_entropy(&f_i, &batch.labels_i, &params.class1)?;
    let c1_j = cross_entropy(&f_j, &batch.labels_j, &params.class1)?;
    let c2_i = cross_entropy(&f_i, &batch.labels_i, &params.class2)?;
    let c2_j = cross_entropy(&f_j, &batch.labels_j, &params.class2)?;
    let pair = contrastive_pairs(&f_i, &f_j, &batch.triples(), &params.matching)?;

    let l1 = c1_i.value + c1_j.value;
    let l2 = c2_i.value + c2_j.value;
    let losses = JointLosses {
        l1,
        l2,
        lc: pair.value,
        joint: joint_loss(l1, l2, pair.value, weights),
    };

    let mut grads = params.zero_grads();
    add_dense(&mut grads.class1, weights.class1, &c1_i.d_head);
    add_dense(&mut grads.class1, weights.class1, &c1_j.d_head);
    add_dense(&mut grads.class2, weights.class2, &c2_i.d_head);
    add_dense(&mut grads.class2, weights.class2, &c2_j.d_head);
    if let (Some(slot), Some(g)) = (grads.projection.as_mut(), pair.d_projection.as_ref()) {
        add_dense(slot, weights.matching, g);
    }

    let feature_grad = |c1: &Tensor, c2: &Tensor, c: &Tensor| {
        let mut d = c1.scale(weights.class1);
        d.axpy(weights.class2, c2);
        d.axpy(weights.matching, c);
        d
    };
    let d_f_i = feature_grad(&c1_i.d_feature, &c2_i.d_feature, &pair.d_first);
    let d_f_j = feature_grad(&c1_j.d_feature, &c2_j.d_feature, &pair.d_second);
    let conv = freeze.conv_trainable();
    grads.extractor = backward_features(params, &cache_i, &d_f_i, conv)?;
    let g_j = backward_features(params, &cache_j, &d_f_j, conv)?;
    add_extractor(&mut grads.extractor, &g_j);
    Ok((losses, grads))
}

fn check_finite(value: f64, grads: &ModelGrads, t: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite {
            quantity: "loss",
            iteration: t,
            last_good: t - 1,
        });
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            quantity: "gradient",
            iteration: t,
            last_good: t - 1,
        });
    }
    Ok(())
}

/// Mean loss and accuracy of `head` over `ds` in eval mode.
pub fn dataset_loss(params: &ModelParams, norm: &Normalizer, ds: &Dataset, head: Head) -> Result<FinalMetrics> {
    const CHUNK: usize = 32;
    let mut loss = 0.0;
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..ds.len()).collect();
    let mut r = rng::seeded(0);
    for chunk in indices.chunks(CHUNK) {
        let (x, labels) = ds.batch(chunk, Some(norm))?;
        let (f, _) = forward_with_cache(&x, params, Mode::Eval, &mut r)?;
        let ce = cross_entropy(&f, &labels, params.head(head))?;
        loss += ce.value * chunk.len() as f64;
        correct += ce
            .probabilities
            .argmax_rows()
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(FinalMetrics {
        train_loss: loss / ds.len() as f64,
        train_accuracy: correct as f64 / ds.len() as f64,
    })
}

fn meta(stage: &StageSpec, datasets: &[&Dataset]) -> StageMeta {
    StageMeta {
        name: stage.name.clone(),
        kind: stage.kind,
        datasets: datasets.iter().map(|d| d.id.clone()).collect(),
        seed: stage.seed,
        iterations: stage.iterations as u64,
    }
}

fn expect_kind(stage: &StageSpec, kind: StageKind) -> Result<()> {
    stage.validate()?;
    if stage.kind != kind {
        return Err(Error::config(
            "kind",
            format!("stage `{}` is a {} stage, expected {}", stage.name, stage.kind.name(), kind.name()),
        ));
    }
    Ok(())
}

fn check_input_shape(arch: &ArchConfig, ds: &Dataset) -> Result<()> {
    let want = [arch.in_channels, arch.input_size, arch.input_size];
    if ds.input_shape() != want {
        return Err(Error::data(
            None,
            format!("dataset `{}` has inputs {:?}, the network takes {want:?}", ds.id, ds.input_shape()),
        ));
    }
    Ok(())
}

fn train_classifier(stage: &StageSpec, mut params: ModelParams, ds: &Dataset) -> Result<StageOutput> {
    check_input_shape(&params.arch, ds)?;
    let norm = Normalizer::fit(ds.samples())?;
    let mut sampler = EpochSampler::new(ds.len(), rng::derive_seed(stage.seed, rng::TAG_SAMPLER_A));
    let mut dropout_rng = rng::stream(stage.seed, rng::TAG_DROPOUT);
    let mut log = TrainLog::default();
    for t in 1..=stage.iterations {
        let idx = sampler.next_batch(stage.batch);
        let (x, labels) = ds.batch(&idx, Some(&norm))?;
        let (loss, grads) = classifier_gradients(&params, &x, &labels, stage.head, stage.freeze, Mode::Train, &mut dropout_rng)?;
        check_finite(loss, &grads, t)?;
        let head_norm = grads.norm(&[match stage.head {
            Head::One => ParamGroup::Class1,
            Head::Two => ParamGroup::Class2,
        }]);
        let (c1, c2) = match stage.head {
            Head::One => (head_norm, 0.0),
            Head::Two => (0.0, head_norm),
        };
        let (l1, l2) = match stage.head {
            Head::One => (loss, 0.0),
            Head::Two => (0.0, loss),
        };
        log.records.push(LogRecord {
            t,
            l1,
            l2,
            lc: 0.0,
            l_joint: loss,
            grad_norm_e: grads.norm(&EXTRACTOR_GROUPS),
            grad_norm_c1: c1,
            grad_norm_c2: c2,
        });
        sgd_step(&mut params, &grads, stage.schedule.lr_at(stage.lr, t), stage.freeze)?;
    }
    log.final_metrics = Some(dataset_loss(&params, &norm, ds, stage.head)?);
    Ok(StageOutput {
        checkpoint: Checkpoint {
            params,
            meta: meta(stage, &[ds]),
            normalizer: norm,
        },
        log,
    })
}

/// Trains a freshly initialised model on one dataset through `stage.head`.
pub fn run_pretrain(stage: &StageSpec, ds: &Dataset) -> Result<StageOutput> {
    expect_kind(stage, StageKind::Pretrain)?;
    let params = build_model(&stage.arch, stage.seed)?.with_matching(stage.margin, stage.learnable_projection, stage.seed)?;
    train_classifier(stage, params, ds)
}

/// Continues training `init` on one dataset, honouring the freeze policy.
/// Input statistics are refitted to the new dataset.
pub fn run_finetune(stage: &StageSpec, init: &Checkpoint, ds: &Dataset) -> Result<StageOutput> {
    expect_kind(stage, StageKind::Finetune)?;
    init.params.arch.ensure_compatible(&stage.arch)?;
    train_classifier(stage, init.params.clone(), ds)
}

/// Joint learning over pairs of mini-batches from `ds_i` and `ds_j`,
/// starting from a transferred checkpoint.
pub fn run_joint(stage: &StageSpec, init: &Checkpoint, ds_i: &Dataset, ds_j: &Dataset) -> Result<StageOutput> {
    expect_kind(stage, StageKind::Joint)?;
    init.params.arch.ensure_compatible(&stage.arch)?;
    check_input_shape(&init.params.arch, ds_i)?;
    check_input_shape(&init.params.arch, ds_j)?;
    let mut params = init.params.clone();
    let keep_projection = stage.learnable_projection && params.matching.projection.is_some();
    if !keep_projection {
        params = params.with_matching(stage.margin, stage.learnable_projection, stage.seed)?;
    }
    let union: Vec<Sample> = ds_i.samples().iter().chain(ds_j.samples()).cloned().collect();
    let norm = Normalizer::fit(&union)?;
    let mut sampler = PairSampler::new(ds_i.len(), ds_j.len(), stage.batch, stage.seed);
    let mut dropout_rng = rng::stream(stage.seed, rng::TAG_DROPOUT);
    let mut log = TrainLog::default();
    for t in 1..=stage.iterations {
        let batch = sampler.next(ds_i, ds_j, (Some(&norm), Some(&norm)))?;
        let (losses, grads) = joint_gradients(&params, &batch, stage.weights, stage.freeze, Mode::Train, &mut dropout_rng)?;
        check_finite(losses.joint, &grads, t)?;
        log.records.push(LogRecord {
            t,
            l1: losses.l1,
            l2: losses.l2,
            lc: losses.lc,
            l_joint: losses.joint,
            grad_norm_e: grads.norm(&EXTRACTOR_GROUPS),
            grad_norm_c1: grads.norm(&[ParamGroup::Class1]),
            grad_norm_c2: grads.norm(&[ParamGroup::Class2]),
        });
        sgd_step(&mut params, &grads, stage.schedule.lr_at(stage.lr, t), stage.freeze)?;
    }
    let a = dataset_loss(&params, &norm, ds_i, Head::One)?;
    let b = dataset_loss(&params, &norm, ds_j, Head::Two)?;
    log.final_metrics = Some(FinalMetrics {
        train_loss: (a.train_loss + b.train_loss) / 2.0,
        train_accuracy: (a.train_accuracy + b.train_accuracy) / 2.0,
    });
    Ok(StageOutput {
        checkpoint: Checkpoint {
            params,
            meta: meta(stage, &[ds_i, ds_j]),
            normalizer: norm,
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            input_size: 64,
            conv_filters: vec![2, 2, 2, 2],
            fc_dims: vec![8, 8, 6],
            ..ArchConfig::full()
        }
    }

    fn tiny_data(seed: u64) -> (Dataset, Dataset) {
        synth_generate(
            &SynthSpec {
                per_class: 2,
                ..SynthSpec::default()
            },
            seed,
        )
        .unwrap()
    }

    fn stage(kind: StageKind, iterations: usize) -> StageSpec {
        StageSpec {
            arch: tiny_arch(),
            iterations,
            ..StageSpec::new("t", kind)
        }
    }

    #[test]
    fn sgd_arithmetic_and_zero_grads() {
        let mut p = build_model(&tiny_arch(), 1).unwrap();
        let before = p.clone();
        sgd_step(&mut p, &before.zero_grads(), 0.1, Freeze::AllTrainable).unwrap();
        assert_eq!(p, before);
        let mut g = p.zero_grads();
        g.class1.bias.data_mut()[0] = 2.0;
        p.class1.bias.data_mut()[0] = 1.0;
        sgd_step(&mut p, &g, 0.1, Freeze::AllTrainable).unwrap();
        assert_eq!(p.class1.bias.data()[0], 1.0 - 0.1 * 2.0);
        assert!((p.class1.bias.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn fc_only_leaves_conv_untouched() {
        let mut p = build_model(&tiny_arch(), 1).unwrap();
        let before = p.clone();
        let mut g = p.zero_grads();
        for b in &mut g.extractor.conv {
            b.weights = b.weights.map(|_| 1.0);
            b.gamma = b.gamma.map(|_| 1.0);
        }
        g.extractor.fc[0].weights = g.extractor.fc[0].weights.map(|_| 1.0);
        sgd_step(&mut p, &g, 0.5, Freeze::FcOnly).unwrap();
        assert_eq!(p.extractor.conv, before.extractor.conv);
        assert_ne!(p.extractor.fc[0], before.extractor.fc[0]);
    }

    #[test]
    fn sgd_rejects_misaligned_gradients() {
        let mut p = build_model(&tiny_arch(), 1).unwrap();
        let g = p.clone().with_matching(1.0, true, 1).unwrap().zero_grads();
        assert!(matches!(sgd_step(&mut p, &g, 0.1, Freeze::AllTrainable), Err(Error::Contract(_))));
    }

    #[test]
    fn schedule() {
        assert_eq!(Schedule::Constant.lr_at(0.1, 50), 0.1);
        let s = Schedule::StepDecay { every: 10, factor: 0.5 };
        assert_eq!(s.lr_at(1.0, 10), 1.0);
        assert_eq!(s.lr_at(1.0, 11), 0.5);
        assert_eq!(s.lr_at(1.0, 25), 0.25);
    }

    #[test]
    fn stage_validation() {
        let mut s = stage(StageKind::Pretrain, 1);
        s.freeze = Freeze::FcOnly;
        assert!(matches!(s.validate(), Err(Error::Config { field: "freeze", .. })));
        let s = StageSpec { lr: 0.0, ..stage(StageKind::Pretrain, 1) };
        assert!(matches!(s.validate(), Err(Error::Config { field: "lr", .. })));
        let (a, _) = tiny_data(0);
        assert!(matches!(run_pretrain(&stage(StageKind::Joint, 1), &a), Err(Error::Config { field: "kind", .. })));
    }

    #[test]
    fn pretrain_log_is_reproducible() {
        let (a, _) = tiny_data(3);
        let s = stage(StageKind::Pretrain, 5);
        let r1 = run_pretrain(&s, &a).unwrap();
        let r2 = run_pretrain(&s, &a).unwrap();
        assert_eq!(r1.log.records.len(), 5);
        assert_eq!(r1.log.to_csv(), r2.log.to_csv());
        assert_eq!(r1.checkpoint.params, r2.checkpoint.params);
        assert!(r1.log.to_csv().starts_with(LOG_HEADER));
    }

    #[test]
    fn finetune_respects_freeze_and_arch() {
        let (a, b) = tiny_data(4);
        let pre = run_pretrain(&stage(StageKind::Pretrain, 3), &a).unwrap();
        let mut ft = stage(StageKind::Finetune, 3);
        ft.freeze = Freeze::FcOnly;
        let out = run_finetune(&ft, &pre.checkpoint, &b).unwrap();
        assert_eq!(out.checkpoint.params.extractor.conv, pre.checkpoint.params.extractor.conv);
        assert_ne!(out.checkpoint.params.extractor.fc, pre.checkpoint.params.extractor.fc);
        let mut wrong = ft.clone();
        wrong.arch.fc_dims = vec![8, 8, 7];
        assert!(matches!(
            run_finetune(&wrong, &pre.checkpoint, &b),
            Err(Error::ArchMismatch { .. })
        ));
    }

    #[test]
    fn joint_runs_and_logs_all_terms() {
        let (a, b) = tiny_data(5);
        let pre = run_pretrain(&stage(StageKind::Pretrain, 2), &a).unwrap();
        let out = run_joint(&stage(StageKind::Joint, 4), &pre.checkpoint, &a, &b).unwrap();
        assert_eq!(out.log.records.len(), 4);
        for r in &out.log.records {
            assert!(r.l1 > 0.0 && r.l2 > 0.0 && r.lc >= 0.0);
            assert!((r.l_joint - (r.l1 + r.l2 + 0.01 * r.lc)).abs() < 1e-12);
        }
        assert_eq!(out.checkpoint.meta.datasets, vec![String::from("synth-a"), String::from("synth-b")]);
    }

    #[test]
    fn divergence_reports_last_good_iteration() {
        let (a, _) = tiny_data(6);
        let mut s = stage(StageKind::Pretrain, 50);
        s.lr = 1e300;
        match run_pretrain(&s, &a) {
            Err(Error::NonFinite { iteration, last_good, .. }) => assert_eq!(last_good + 1, iteration),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
