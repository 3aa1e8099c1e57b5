//! Accuracy, weighted and unweighted average recall, confusion matrices,
//! cross-corpus tables and repeated k-fold summaries.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::codec::Checkpoint;
use crate::data::{Dataset, Modality};
use crate::error::{Error, Result};
use crate::network::{classify, forward_features, Head};
use crate::numerics::Mode;
use crate::rng;
use crate::tensor::Tensor;
use crate::{EMOTIONS, NUM_CLASSES};

/// Classification metrics over one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `confusion[true][predicted]` counts.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub total: u64,
    pub accuracy: f64,
    /// Recall weighted by class prior, which is pooled accuracy.
    pub war: f64,
    /// Mean recall over the classes present in the data.
    pub uar: f64,
    /// Recall per class; 0 for classes with no samples.
    pub per_class_recall: [f64; NUM_CLASSES],
}

impl Metrics {
    pub fn from_predictions(labels: &[usize], predictions: &[usize]) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::dim(
                "metrics",
                format!("{} labels but {} predictions", labels.len(), predictions.len()),
            ));
        }
        if labels.is_empty() {
            return Err(Error::data(None, "cannot compute metrics over zero samples"));
        }
        let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (i, (&l, &p)) in labels.iter().zip(predictions).enumerate() {
            if l >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(Error::data(Some(i), format!("class index out of range: label {l}, prediction {p}")));
            }
            confusion[l][p] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn from_confusion(confusion: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Result<Self> {
        let counts: Vec<u64> = confusion.iter().map(|row| row.iter().sum()).collect();
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::data(None, "cannot compute metrics over zero samples"));
        }
        let trace: u64 = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        let accuracy = trace as f64 / total as f64;

        let mut per_class_recall = [0.0; NUM_CLASSES];
        let mut uar_sum = 0.0;
        let mut present = 0usize;
        // Σ (n_c/N)·(k_c/n_c) is summed as an exact integer fraction: each
        // term reduces to k_c/N, so only one rounding happens at the end.
        let mut war_numerator = 0u64;
        for c in 0..NUM_CLASSES {
            let n_c = counts[c];
            if n_c == 0 {
                continue;
            }
            let k_c = confusion[c][c];
            per_class_recall[c] = k_c as f64 / n_c as f64;
            uar_sum += per_class_recall[c];
            present += 1;
            war_numerator += k_c;
        }
        let war = war_numerator as f64 / total as f64;
        if war.to_bits() != accuracy.to_bits() {
            return Err(Error::Contract(format!("weighted recall {war} differs from accuracy {accuracy}")));
        }
        Ok(Self {
            confusion,
            total,
            accuracy,
            war,
            uar: uar_sum / present as f64,
            per_class_recall,
        })
    }

    pub fn class_counts(&self) -> [u64; NUM_CLASSES] {
        let mut out = [0; NUM_CLASSES];
        for (c, row) in self.confusion.iter().enumerate() {
            out[c] = row.iter().sum();
        }
        out
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.confusion[c][c]).sum()
    }

    /// Confusion matrix as CSV, rows are true classes.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in EMOTIONS {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (c, row) in self.confusion.iter().enumerate() {
            out.push_str(EMOTIONS[c]);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Header of [`metrics_csv`].
pub fn metrics_header() -> String {
    let mut h = String::from("name,total,accuracy,war,uar");
    for name in EMOTIONS {
        let _ = write!(h, ",recall_{name}");
    }
    h
}

/// One CSV row per named metrics record.
pub fn metrics_csv(rows: &[(&str, &Metrics)]) -> String {
    let mut out = metrics_header();
    out.push('\n');
    for (name, m) in rows {
        let _ = write!(out, "{name},{},{},{},{}", m.total, m.accuracy, m.war, m.uar);
        for r in m.per_class_recall {
            let _ = write!(out, ",{r}");
        }
        out.push('\n');
    }
    out
}

/// Eval-mode class probabilities `[N, 6]` of `head` for every sample.
pub fn predict(ck: &Checkpoint, ds: &Dataset, head: Head) -> Result<Tensor> {
    const CHUNK: usize = 32;
    let arch = &ck.params.arch;
    let want = [arch.in_channels, arch.input_size, arch.input_size];
    if ds.input_shape() != want {
        return Err(Error::ArchMismatch {
            field: "input_shape",
            found: format!("{want:?}"),
            expected: format!("{:?}", ds.input_shape()),
        });
    }
    if ck.normalizer.channels() != arch.in_channels {
        return Err(Error::ArchMismatch {
            field: "normalizer_channels",
            found: format!("{}", ck.normalizer.channels()),
            expected: format!("{}", arch.in_channels),
        });
    }
    let indices: Vec<usize> = (0..ds.len()).collect();
    // Eval mode draws nothing from the generator.
    let mut r = rng::seeded(0);
    let mut data = Vec::with_capacity(ds.len() * NUM_CLASSES);
    for chunk in indices.chunks(CHUNK) {
        let (x, _) = ds.batch(chunk, Some(&ck.normalizer))?;
        let f = forward_features(&x, &ck.params, Mode::Eval, &mut r)?;
        data.extend_from_slice(classify(&f, head, &ck.params)?.data());
    }
    Tensor::new([ds.len(), NUM_CLASSES], data)
}

/// Majority vote over segment predictions. A tie goes to the tied class with
/// the highest mean probability, then to the lowest class index.
pub fn vote(probabilities: &[&[f64]]) -> usize {
    let mut votes = [0usize; NUM_CLASSES];
    let mut mass = [0.0; NUM_CLASSES];
    for p in probabilities {
        votes[argmax(p)] += 1;
        for (m, v) in mass.iter_mut().zip(p.iter()) {
            *m += v;
        }
    }
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if votes[c] > votes[best] || (votes[c] == votes[best] && mass[c] > mass[best]) {
            best = c;
        }
    }
    best
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// `(labels, predictions)` at the unit the metrics count: samples for visual
/// data, utterances (by majority vote over their segments) for audio.
pub fn aggregate(ds: &Dataset, probabilities: &Tensor) -> Result<(Vec<usize>, Vec<usize>)> {
    probabilities.expect_shape("aggregate", "probabilities", &[ds.len(), NUM_CLASSES])?;
    match ds.modality {
        Modality::Visual => Ok((ds.labels(), probabilities.argmax_rows())),
        Modality::Audio => {
            let mut utterances: BTreeMap<usize, (usize, Vec<&[f64]>)> = BTreeMap::new();
            for (i, s) in ds.samples().iter().enumerate() {
                let entry = utterances.entry(s.group).or_insert((s.label, Vec::new()));
                if entry.0 != s.label {
                    return Err(Error::data(
                        Some(i),
                        format!("utterance {} mixes labels {} and {}", s.group, entry.0, s.label),
                    ));
                }
                entry.1.push(probabilities.row(i));
            }
            Ok(utterances.values().map(|(label, rows)| (*label, vote(rows))).unzip())
        }
    }
}

/// Evaluates `head` of a checkpoint on a dataset in eval mode.
pub fn evaluate(ck: &Checkpoint, ds: &Dataset, head: Head) -> Result<Metrics> {
    let p = predict(ck, ds, head)?;
    let (labels, preds) = aggregate(ds, &p)?;
    Metrics::from_predictions(&labels, &preds)
}

/// Models × datasets accuracy matrix with per-model averages.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorpusTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `cells[model][dataset]`.
    pub cells: Vec<Vec<Metrics>>,
}

impl CrossCorpusTable {
    pub fn from_cells(models: Vec<String>, datasets: Vec<String>, cells: Vec<Vec<Metrics>>) -> Result<Self> {
        if cells.len() != models.len() || cells.iter().any(|r| r.len() != datasets.len()) {
            return Err(Error::dim(
                "cross_corpus_table",
                format!("expected {}×{} cells", models.len(), datasets.len()),
            ));
        }
        Ok(Self { models, datasets, cells })
    }

    /// Unweighted mean of a model's per-dataset accuracies.
    pub fn row_average(&self, model: usize) -> f64 {
        let row = &self.cells[model];
        row.iter().map(|m| m.accuracy).sum::<f64>() / row.len() as f64
    }

    /// Unweighted mean accuracy of every model on one dataset.
    pub fn column_average(&self, dataset: usize) -> f64 {
        self.cells.iter().map(|r| r[dataset].accuracy).sum::<f64>() / self.cells.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for d in &self.datasets {
            let _ = write!(out, ",{d}");
        }
        out.push_str(",avg\n");
        for (i, m) in self.models.iter().enumerate() {
            out.push_str(m);
            for cell in &self.cells[i] {
                let _ = write!(out, ",{}", cell.accuracy);
            }
            let _ = writeln!(out, ",{}", self.row_average(i));
        }
        out
    }

    /// Aligned plain-text rendering, accuracies to two decimals.
    pub fn to_text(&self) -> String {
        let first = self.models.iter().map(|m| m.len()).chain([5]).max().unwrap_or(5);
        let widths: Vec<usize> = self.datasets.iter().map(|d| d.len().max(4)).collect();
        let mut out = String::new();
        let _ = write!(out, "{:<first$}", "Model");
        for (d, w) in self.datasets.iter().zip(&widths) {
            let _ = write!(out, " | {d:>w$}");
        }
        out.push_str(" | Avg.\n");
        let rule = first + widths.iter().map(|w| w + 3).sum::<usize>() + 7;
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for (i, m) in self.models.iter().enumerate() {
            let _ = write!(out, "{m:<first$}");
            for (cell, w) in self.cells[i].iter().zip(&widths) {
                let _ = write!(out, " | {:>w$.2}", cell.accuracy);
            }
            let _ = writeln!(out, " | {:.2}", self.row_average(i));
        }
        out
    }
}

/// Evaluates every model on every dataset; each dataset names the head
/// that scores it.
pub fn cross_corpus_table(models: &[(&str, &Checkpoint)], datasets: &[(&str, &Dataset, Head)]) -> Result<CrossCorpusTable> {
    let cells = models
        .iter()
        .map(|(_, ck)| datasets.iter().map(|(_, ds, head)| evaluate(ck, ds, *head)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    CrossCorpusTable::from_cells(
        models.iter().map(|(n, _)| String::from(*n)).collect(),
        datasets.iter().map(|(n, _, _)| String::from(*n)).collect(),
        cells,
    )
}

/// Mean and unbiased sample variance of repeated-run accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl RunSummary {
    pub fn new(accuracies: Vec<f64>) -> Result<Self> {
        if accuracies.is_empty() {
            return Err(Error::data(None, "no runs to summarise"));
        }
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let variance = if accuracies.len() > 1 {
            accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(Self {
            accuracies,
            mean,
            variance,
        })
    }
}
