use jdcl_core::audio::{segment, segment_count};
use jdcl_core::data::{kfold_split, sample_pair_batches, synth_generate, Dataset, Modality, Sample, SynthSpec};
use jdcl_core::eval::Metrics;
use jdcl_core::train::{run_joint, run_pretrain, StageKind, StageSpec};
use jdcl_core::{Tensor, NUM_CLASSES};
use proptest::prelude::*;

fn grouped(labels: &[usize], per_group: &[usize]) -> Dataset {
    let mut samples = Vec::new();
    for (g, (&label, &n)) in labels.iter().zip(per_group).enumerate() {
        for _ in 0..n {
            samples.push(Sample {
                input: Tensor::full([1, 2, 2], samples.len() as f64),
                label,
                group: g,
            });
        }
    }
    Dataset::new("p", Modality::Audio, samples).unwrap()
}

proptest! {
    #[test]
    fn segment_count_matches_cut(t in 1usize..400, length in 1usize..80, overlap_frac in 0.0f64..0.95) {
        let overlap = ((length as f64) * overlap_frac) as usize;
        prop_assume!(overlap < length);
        let expected = if t < length { 0 } else { (t - length) / (length - overlap) + 1 };
        prop_assert_eq!(segment_count(t, length, overlap), expected);
        match segment(&Tensor::zeros([1, t, 1]), length, overlap, 0) {
            Ok(segs) => prop_assert_eq!(segs.len(), expected),
            Err(_) => prop_assert_eq!(expected, 0),
        }
    }

    #[test]
    fn kfold_partitions_groups(
        groups in prop::collection::vec((0..NUM_CLASSES, 1usize..4), 5..40),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let (labels, sizes): (Vec<usize>, Vec<usize>) = groups.into_iter().unzip();
        let ds = grouped(&labels, &sizes);
        let folds = kfold_split(&ds, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0usize; ds.len()];
        let mut group_counts = Vec::new();
        for fold in &folds {
            let mut gs: Vec<usize> = fold.iter().map(|&i| ds.samples()[i].group).collect();
            gs.dedup();
            group_counts.push(gs.len());
            for &i in fold {
                seen[i] += 1;
            }
            for g in &gs {
                let whole = ds.samples().iter().filter(|s| s.group == *g).count();
                prop_assert_eq!(fold.iter().filter(|&&i| ds.samples()[i].group == *g).count(), whole);
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let (lo, hi) = (group_counts.iter().min().unwrap(), group_counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "{:?}", group_counts);
    }

    #[test]
    fn pair_batch_is_complete_and_labelled(
        li in prop::collection::vec(0..NUM_CLASSES, 1..10),
        lj in prop::collection::vec(0..NUM_CLASSES, 1..10),
        k in 1usize..9,
        pick in prop::collection::vec(any::<prop::sample::Index>(), 16),
    ) {
        let (di, dj) = (grouped(&li, &vec![1; li.len()]), grouped(&lj, &vec![1; lj.len()]));
        let ii: Vec<usize> = pick[..k].iter().map(|p| p.index(li.len())).collect();
        let jj: Vec<usize> = pick[8..8 + k].iter().map(|p| p.index(lj.len())).collect();
        let batch = sample_pair_batches(&di, &dj, ii.clone(), jj.clone(), (None, None)).unwrap();
        prop_assert_eq!(batch.pairs.len(), k * k);
        prop_assert_eq!(batch.k(), k);
        let mut seen = vec![false; k * k];
        for p in &batch.pairs {
            prop_assert_eq!((p.l_i, p.l_j), (li[ii[p.a]], lj[jj[p.b]]));
            prop_assert_eq!(p.y, u8::from(p.l_i == p.l_j));
            prop_assert!(!seen[p.a * k + p.b]);
            seen[p.a * k + p.b] = true;
        }
    }

    #[test]
    fn metrics_are_consistent(pairs in prop::collection::vec((0..NUM_CLASSES, 0..NUM_CLASSES), 1..200)) {
        let (labels, preds): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = Metrics::from_predictions(&labels, &preds).unwrap();
        let correct = labels.iter().zip(&preds).filter(|(a, b)| a == b).count() as u64;
        prop_assert_eq!(m.trace(), correct);
        prop_assert_eq!(m.total, labels.len() as u64);
        prop_assert_eq!(m.accuracy.to_bits(), (correct as f64 / labels.len() as f64).to_bits());
        prop_assert_eq!(m.war.to_bits(), m.accuracy.to_bits());
        prop_assert!((0.0..=1.0).contains(&m.uar));
    }
}

/// With the matching weight at zero the margin must not influence training.
#[test]
fn zero_matching_weight_ignores_margin() {
    let spec = SynthSpec {
        per_class: 3,
        ..SynthSpec::default()
    };
    let (a, b) = synth_generate(&spec, 4).unwrap();
    let mut pre = StageSpec::new("pre", StageKind::Pretrain);
    pre.iterations = 5;
    let ck = run_pretrain(&pre, &a).unwrap().checkpoint;
    let run = |margin: f64| {
        let mut joint = StageSpec::new("joint", StageKind::Joint);
        joint.iterations = 20;
        joint.lr = 1e-2;
        joint.weights.matching = 0.0;
        joint.margin = margin;
        run_joint(&joint, &ck, &a, &b).unwrap()
    };
    let (near, far) = (run(0.5), run(50.0));
    assert_eq!(near.checkpoint.params.extractor, far.checkpoint.params.extractor);
    assert_eq!(near.checkpoint.params.class1, far.checkpoint.params.class1);
    assert_eq!(near.checkpoint.params.class2, far.checkpoint.params.class2);
    let l = |o: &jdcl_core::train::StageOutput| o.log.records.iter().map(|r| (r.l1, r.l2)).collect::<Vec<_>>();
    assert_eq!(l(&near), l(&far));
}
