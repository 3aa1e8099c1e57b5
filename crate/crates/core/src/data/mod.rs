//! Datasets, the synthetic two-domain generator, k-fold splitting and the
//! mini-batch and cross-dataset pair samplers.

mod image;
mod sampler;
mod split;
mod synth;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

pub use image::{resize_bilinear, Normalizer};
pub use sampler::{sample_pair_batches, EpochSampler, Pair, PairBatch, PairSampler};
pub use split::{kfold_split, repeated_kfold, Fold};
pub use synth::{synth_audio, synth_audio_waveforms, synth_generate, SynthAudioSpec, SynthSpec, SYNTH_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Audio,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "visual" => Some(Modality::Visual),
            "audio" => Some(Modality::Audio),
            _ => None,
        }
    }
}

/// One network input with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[C, H, W]`, values in `[0, 1]` for images and raw log-Mel features
    /// for audio segments.
    pub input: Tensor,
    pub label: usize,
    /// Samples sharing a group come from the same source item (the segments
    /// of one utterance). Splits never separate a group and audio evaluation
    /// votes over it.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub modality: Modality,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(id: impl Into<String>, modality: Modality, samples: Vec<Sample>) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::data(None, "dataset is empty"))?;
        let shape = first.input.shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::data(Some(0), format!("sample input must be [C, H, W], got {shape:?}")));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.label >= NUM_CLASSES {
                return Err(Error::data(Some(i), format!("label {} out of range for {NUM_CLASSES} classes", s.label)));
            }
            if s.input.shape() != shape.as_slice() {
                return Err(Error::data(
                    Some(i),
                    format!("input shape {:?} differs from the first sample's {shape:?}", s.input.shape()),
                ));
            }
            if !s.input.is_finite() {
                return Err(Error::data(Some(i), "non-finite input value"));
            }
        }
        Ok(Self {
            id: id.into(),
            modality,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn input_shape(&self) -> &[usize] {
        self.samples[0].input.shape()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, id: impl Into<String>, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::data(Some(i), format!("index beyond dataset of {}", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(id, self.modality, samples)
    }

    /// Stacks the selected inputs into an `[N, C, H, W]` batch, normalized
    /// when a normalizer is given.
    pub fn batch(&self, indices: &[usize], norm: Option<&Normalizer>) -> Result<(Tensor, Vec<usize>)> {
        let inputs: Vec<&Tensor> = indices.iter().map(|&i| &self.samples[i].input).collect();
        let mut x = Tensor::stack(&inputs)?;
        if let Some(n) = norm {
            n.apply_batch(&mut x)?;
        }
        Ok((x, indices.iter().map(|&i| self.samples[i].label).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(label: usize) -> Sample {
        Sample {
            input: Tensor::zeros([3, 4, 4]),
            label,
            group: label,
        }
    }

    #[test]
    fn validation() {
        assert!(matches!(Dataset::new("d", Modality::Visual, Vec::new()), Err(Error::Data { index: None, .. })));
        let bad = alloc::vec![sample(0), sample(6)];
        assert!(matches!(Dataset::new("d", Modality::Visual, bad), Err(Error::Data { index: Some(1), .. })));
        let mut mixed = alloc::vec![sample(0), sample(1)];
        mixed[1].input = Tensor::zeros([3, 4, 5]);
        assert!(Dataset::new("d", Modality::Visual, mixed).is_err());
    }

    #[test]
    fn subset_and_batch() {
        let ds = Dataset::new("d", Modality::Visual, (0..6).map(sample).collect()).unwrap();
        assert_eq!(ds.class_counts(), [1; 6]);
        let sub = ds.subset("s", &[5, 2]).unwrap();
        assert_eq!(sub.labels(), alloc::vec![5, 2]);
        let (x, y) = ds.batch(&[1, 3], None).unwrap();
        assert_eq!(x.shape(), &[2, 3, 4, 4]);
        assert_eq!(y, alloc::vec![1, 3]);
        assert!(ds.subset("s", &[9]).is_err());
    }
}
