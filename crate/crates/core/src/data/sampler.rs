use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Dataset, Normalizer};
use crate::error::Result;
use crate::losses::pair_label;
use crate::rng::{self, SeededRng};
use crate::tensor::Tensor;

/// Draws mini-batches of dataset indices without replacement, reshuffling
/// whenever the dataset is exhausted. A batch that straddles the end of an
/// epoch takes the remainder and continues in the fresh permutation.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    rng: SeededRng,
}

impl EpochSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    pub fn next_batch(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// One pair of the K×K cross product: rows `a` of the first batch and `b`
/// of the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub l_i: usize,
    pub l_j: usize,
    pub y: u8,
}

/// Two mini-batches of size K, one from each dataset, and all K² pairs
/// between them.
#[derive(Debug, Clone)]
pub struct PairBatch {
    /// `[K, C, H, W]` inputs from the first dataset.
    pub x_i: Tensor,
    pub x_j: Tensor,
    pub labels_i: Vec<usize>,
    pub labels_j: Vec<usize>,
    /// Dataset indices the batches were drawn from.
    pub indices_i: Vec<usize>,
    pub indices_j: Vec<usize>,
    pub pairs: Vec<Pair>,
}

impl PairBatch {
    pub fn k(&self) -> usize {
        self.labels_i.len()
    }

    /// `(a, b, y)` triples in the form the contrastive loss consumes.
    pub fn triples(&self) -> Vec<(usize, usize, u8)> {
        self.pairs.iter().map(|p| (p.a, p.b, p.y)).collect()
    }

    fn check(&self) {
        debug_assert_eq!(self.pairs.len(), self.k() * self.k());
        debug_assert!(self.pairs.iter().all(|p| p.y == pair_label(p.l_i, p.l_j)));
    }
}

fn cross_pairs(labels_i: &[usize], labels_j: &[usize]) -> Vec<Pair> {
    let mut pairs = Vec::with_capacity(labels_i.len() * labels_j.len());
    for (a, &l_i) in labels_i.iter().enumerate() {
        for (b, &l_j) in labels_j.iter().enumerate() {
            pairs.push(Pair {
                a,
                b,
                l_i,
                l_j,
                y: pair_label(l_i, l_j),
            });
        }
    }
    pairs
}

/// Builds a [`PairBatch`] from two index batches of equal size.
pub fn sample_pair_batches(
    ds_i: &Dataset,
    ds_j: &Dataset,
    indices_i: Vec<usize>,
    indices_j: Vec<usize>,
    norms: (Option<&Normalizer>, Option<&Normalizer>),
) -> Result<PairBatch> {
    let (x_i, labels_i) = ds_i.batch(&indices_i, norms.0)?;
    let (x_j, labels_j) = ds_j.batch(&indices_j, norms.1)?;
    let pairs = cross_pairs(&labels_i, &labels_j);
    let batch = PairBatch {
        x_i,
        x_j,
        labels_i,
        labels_j,
        indices_i,
        indices_j,
        pairs,
    };
    batch.check();
    Ok(batch)
}

/// Owns one epoch sampler per dataset and yields one [`PairBatch`] per call.
#[derive(Debug, Clone)]
pub struct PairSampler {
    first: EpochSampler,
    second: EpochSampler,
    k: usize,
}

impl PairSampler {
    pub fn new(len_i: usize, len_j: usize, k: usize, seed: u64) -> Self {
        Self {
            first: EpochSampler::new(len_i, rng::derive_seed(seed, rng::TAG_SAMPLER_A)),
            second: EpochSampler::new(len_j, rng::derive_seed(seed, rng::TAG_SAMPLER_B)),
            k,
        }
    }

    pub fn next(
        &mut self,
        ds_i: &Dataset,
        ds_j: &Dataset,
        norms: (Option<&Normalizer>, Option<&Normalizer>),
    ) -> Result<PairBatch> {
        let a = self.first.next_batch(self.k);
        let b = self.second.next_batch(self.k);
        sample_pair_batches(ds_i, ds_j, a, b, norms)
    }
}
