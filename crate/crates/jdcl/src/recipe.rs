//! The five-stage transfer recipe: pretrain on visual A, fine-tune the
//! fully-connected layers on visual B, continue through two audio datasets
//! with every layer trainable, then train jointly on visual A and B.
//!
//! The learning rates are the desk-scale settings; at the network's
//! full-scale rates the stages would need far more iterations.

use std::fmt::Write as _;

/// Dataset declarations and stages of the recipe. `sources` gives the source
/// line of `visual_a`, `visual_b`, `audio_b` and `audio_c` in that order.
pub fn recipe(header: &str, sources: [&str; 4], seed: u64) -> String {
    let mut s = String::from(header);
    for (name, src) in ["visual_a", "visual_b", "audio_b", "audio_c"].iter().zip(sources) {
        let _ = write!(s, "\n[[dataset]]\nname = \"{name}\"\n{src}\n");
    }
    for base in ["visual_a", "visual_b"] {
        for part in ["train", "test"] {
            let _ = write!(
                s,
                "\n[[dataset]]\nname = \"{base}_{part}\"\nsplit = {{ of = \"{base}\", folds = 5, fold = 0, part = \"{part}\", seed = {seed} }}\n"
            );
        }
    }
    let stages: [(&str, &str, &str, &str, &str, f64, usize); 5] = [
        ("pretrain_visual_a", "pretrain", "[\"visual_a_train\"]", "fresh", "all_trainable", 1e-2, 1500),
        ("finetune_visual_b", "finetune", "[\"visual_b_train\"]", "stage:pretrain_visual_a", "fc_only", 1e-2, 1000),
        ("finetune_audio_b", "finetune", "[\"audio_b\"]", "stage:finetune_visual_b", "all_trainable", 1e-2, 1000),
        ("finetune_audio_c", "finetune", "[\"audio_c\"]", "stage:finetune_audio_b", "all_trainable", 1e-2, 1000),
        ("joint_visual_ab", "joint", "[\"visual_a_train\", \"visual_b_train\"]", "stage:finetune_audio_c", "all_trainable", 1e-3, 1000),
    ];
    for (name, kind, datasets, init, freeze, lr, iterations) in stages {
        let _ = write!(
            s,
            "\n[[stage]]\nname = \"{name}\"\nkind = \"{kind}\"\ndatasets = {datasets}\ninit = \"{init}\"\nfreeze = \"{freeze}\"\nlr = {lr:e}\niterations = {iterations}\nbatch = 2\nseed = {seed}\n"
        );
        if kind == "joint" {
            s.push_str("lambda1 = 1.0\nlambda2 = 1.0\nlambda3 = 0.01\nmargin = 1.0\n");
        }
    }
    s.push_str(
        "\n[report]\nmodels = [\"pretrain_visual_a\", \"finetune_visual_b\", \"joint_visual_ab\"]\ndatasets = [\"visual_a_test\", \"visual_b_test\"]\n",
    );
    s
}

/// The recipe over the manifests `jdcl synth` writes next to it.
pub fn manifest_recipe(seed: u64) -> String {
    recipe(
        "# Five-stage transfer recipe over the synthetic datasets in this directory.\n",
        [
            "manifest = \"visual_a/manifest.csv\"",
            "manifest = \"visual_b/manifest.csv\"",
            "manifest = \"audio_b/manifest.csv\"",
            "manifest = \"audio_c/manifest.csv\"",
        ],
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use jdcl_core::train::{Freeze, StageKind};

    #[test]
    fn recipe_declares_the_five_stages() {
        let text = recipe(
            "",
            [
                "synth = { modality = \"visual\", domain = \"a\" }",
                "synth = { modality = \"visual\", domain = \"b\" }",
                "synth = { modality = \"audio\" }",
                "synth = { modality = \"audio\", shift = 0.5, seed = 1 }",
            ],
            3,
        );
        let cfg = Config::parse(&text, std::path::Path::new(".")).unwrap();
        let stages = cfg.validate().unwrap();
        let kinds: Vec<_> = stages.iter().map(|s| s.spec.kind).collect();
        assert_eq!(
            kinds,
            [StageKind::Pretrain, StageKind::Finetune, StageKind::Finetune, StageKind::Finetune, StageKind::Joint]
        );
        assert_eq!(stages[1].spec.freeze, Freeze::FcOnly);
        assert_eq!(stages[2].spec.freeze, Freeze::AllTrainable);
        assert_eq!(stages[4].spec.weights.matching, 0.01);
        assert!(stages.iter().all(|s| s.spec.seed == 3 && s.spec.batch == 2));
    }
}
