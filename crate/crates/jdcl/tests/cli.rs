use std::path::Path;
use std::process::Command;

use jdcl::error::{EXIT_DATA, EXIT_OK, EXIT_USAGE};

const STAGES: [&str; 5] = [
    "pretrain_visual_a",
    "finetune_visual_b",
    "finetune_audio_b",
    "finetune_audio_c",
    "joint_visual_ab",
];

fn jdcl(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["jdcl"];
    argv.extend_from_slice(args);
    let code = jdcl::cli::run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn status(out: &str) -> &str {
    out.lines().last().unwrap_or_default()
}

fn synth(dir: &Path) {
    let (code, out) = jdcl(&["synth", "-o", dir.to_str().unwrap(), "--per-class", "5", "--audio-per-class", "1"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("dataset=audio_c modality=audio items=6"), "{out}");
}

fn short_pipeline(recipe: &Path, out_dir: &Path) -> String {
    let (code, out) = jdcl(&[
        "pipeline",
        "-c",
        recipe.to_str().unwrap(),
        "-o",
        out_dir.to_str().unwrap(),
        "--set",
        "stage.*.iterations=5",
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    out
}

#[test]
fn synth_then_pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let recipe = data.join("recipe.toml");
    let (first, second) = (tmp.path().join("run1"), tmp.path().join("run2"));
    let out = short_pipeline(&recipe, &first);
    short_pipeline(&recipe, &second);

    assert!(status(&out).starts_with("status=ok command=pipeline stages=5"), "{out}");
    for (i, name) in STAGES.iter().enumerate() {
        assert!(out.contains(&format!("stage={} name={name}", i + 1)), "{out}");
        for file in [format!("{name}.ckpt"), format!("{name}.log.csv")] {
            let a = std::fs::read(first.join(&file)).unwrap();
            assert_eq!(a, std::fs::read(second.join(&file)).unwrap(), "{file} differs between runs");
        }
    }
    for file in ["cross_corpus.csv", "cross_corpus.txt", "metrics.csv", "stages.csv"] {
        assert_eq!(std::fs::read(first.join(file)).unwrap(), std::fs::read(second.join(file)).unwrap(), "{file}");
    }
    let table = std::fs::read_to_string(first.join("cross_corpus.csv")).unwrap();
    assert_eq!(table.lines().count(), 4, "{table}");
    assert!(table.lines().nth(3).unwrap().starts_with("joint_visual_ab"), "{table}");

    let (code, eval) = jdcl(&[
        "eval",
        "--checkpoint",
        first.join("joint_visual_ab.ckpt").to_str().unwrap(),
        "--manifest",
        data.join("visual_b/manifest.csv").to_str().unwrap(),
        "-o",
        tmp.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{eval}");
    assert!(tmp.path().join("eval/confusion_h1.csv").exists());
}

#[test]
fn stage_commands_resume_from_disk_and_report_failing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let recipe = data.join("recipe.toml");
    let run = tmp.path().join("run");
    let args = |cmd: &'static str, stage: &'static str| {
        vec![
            cmd.to_string(),
            "-c".into(),
            recipe.to_str().unwrap().into(),
            "-o".into(),
            run.to_str().unwrap().into(),
            "--set".into(),
            "stage.*.iterations=3".into(),
            "--stage".into(),
            stage.into(),
        ]
    };
    let call = |v: Vec<String>| {
        let mut out = Vec::new();
        let code = jdcl::cli::run(std::iter::once("jdcl".to_string()).chain(v), &mut out);
        (code, String::from_utf8(out).unwrap())
    };

    let (code, out) = call(args("finetune", "finetune_visual_b"));
    assert_eq!(code, EXIT_DATA, "{out}");
    assert!(status(&out).contains("stage 2 (`finetune_visual_b`)"), "{out}");

    let (code, out) = call(args("pretrain", "pretrain_visual_a"));
    assert_eq!(code, EXIT_OK, "{out}");
    let (code, out) = call(args("finetune", "finetune_visual_b"));
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(run.join("finetune_visual_b.ckpt").exists());

    let (code, out) = call(args("joint-train", "pretrain_visual_a"));
    assert_eq!(code, EXIT_USAGE, "{out}");
}

#[test]
fn manifest_errors_name_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let manifest = data.join("visual_a/manifest.csv");
    let text = std::fs::read_to_string(&manifest).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[2] = lines[2].replace(lines[2].rsplit(',').next().unwrap(), "bored");
    lines[4] = "missing.png,happiness".into();
    std::fs::write(&manifest, lines.join("\n")).unwrap();

    let features = |m: &Path| jdcl(&["features", "--manifest", m.to_str().unwrap(), "-o", tmp.path().join("f").to_str().unwrap()]);
    let (code, out) = features(&manifest);
    assert_eq!(code, EXIT_DATA, "{out}");
    assert!(status(&out).contains("row 3: unknown label `bored`"), "{out}");

    lines[2] = text.lines().nth(2).unwrap().into();
    std::fs::write(&manifest, lines.join("\n")).unwrap();
    let (code, out) = features(&manifest);
    assert_eq!(code, EXIT_DATA, "{out}");
    assert!(status(&out).contains("row 5: missing file"), "{out}");

    std::fs::write(&manifest, "file,emotion\na.png,happy\n").unwrap();
    let (code, out) = features(&manifest);
    assert_eq!(code, EXIT_DATA, "{out}");
    assert!(status(&out).contains("row 1: expected header"), "{out}");
}

#[test]
fn features_writes_dataset_and_segment_caches() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let out_dir = tmp.path().join("features");
    let (code, out) = jdcl(&[
        "features",
        "--manifest",
        data.join("audio_b/manifest.csv").to_str().unwrap(),
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let ds = jdcl::files::load_dataset(&out_dir.join("audio_b.jds")).unwrap();
    let cached: usize = std::fs::read_dir(out_dir.join("segments"))
        .unwrap()
        .map(|e| jdcl::files::load_dataset(&e.unwrap().path()).unwrap().len())
        .sum();
    assert_eq!(cached, ds.len());
    assert_eq!(ds.samples()[0].input.shape(), &[3, 64, 64]);
}

#[test]
fn usage_and_config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let recipe = data.join("recipe.toml");
    for args in [
        vec!["frobnicate"],
        vec!["pipeline"],
        vec!["pipeline", "-c", recipe.to_str().unwrap(), "--set", "stage.nope.lr=0.1"],
        vec!["pipeline", "-c", recipe.to_str().unwrap(), "--set", "stage.*.freeze=sideways"],
        vec!["gradcheck", "--seeds", "0"],
    ] {
        let (code, out) = jdcl(&args);
        assert_eq!(code, EXIT_USAGE, "{args:?}: {out}");
        assert!(status(&out).starts_with("status=error"), "{args:?}: {out}");
    }
}

#[test]
fn binary_runs_gradcheck_and_reports_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_jdcl");
    let ok = Command::new(bin)
        .args(["gradcheck", "--seeds", "2", "-o"])
        .arg(tmp.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(ok.status.code(), Some(EXIT_OK), "{stdout}");
    assert!(stdout.contains("check=contrastive"), "{stdout}");
    assert!(!stdout.contains("result=fail"), "{stdout}");
    assert!(tmp.path().join("gradcheck.csv").exists());

    let missing = Command::new(bin)
        .args(["eval", "--checkpoint", "nope.ckpt", "--dataset-file", "nope.jds", "-o"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.ckpt"));
}
