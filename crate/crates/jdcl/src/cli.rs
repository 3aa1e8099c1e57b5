//! Command-line interface.
//!
//! Every command prints progress lines followed by one final machine-readable
//! status line (`status=ok ...` or `status=error code=N kind=... message="..."`)
//! and exits with 0 on success, 1 on usage errors, 2 on data errors and 3 on
//! numerical aborts.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use jdcl_core::codec::Checkpoint;
use jdcl_core::data::{synth_audio_waveforms, synth_generate, Dataset, SynthAudioSpec, SynthSpec};
use jdcl_core::eval::{evaluate, metrics_csv, Metrics};
use jdcl_core::network::Head;
use jdcl_core::suite::run_suite;
use jdcl_core::train::StageKind;

use crate::config::Config;
use crate::error::{Error, Result, EXIT_OK, EXIT_USAGE};
use crate::files::{atomic_write, load_checkpoint, load_dataset, save_dataset};
use crate::manifest::{self, load_manifest};
use crate::media::{save_png, tensor_to_rgb8, write_wav};
use crate::pipeline::{stages_csv, Runner, StageReport};
use crate::recipe;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "JDCL_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "jdcl", version, about = "Joint cross-domain transfer learning for emotion recognition")]
pub struct Cli {
    /// Output directory (default: the config's `output_dir`, else
    /// `$JDCL_OUTPUT_ROOT/<name>` with root `runs`).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the config's pretrain stages.
    Pretrain(StageArgs),
    /// Run the config's fine-tune stages.
    Finetune(StageArgs),
    /// Run the config's joint stages.
    JointTrain(StageArgs),
    /// Run every stage in order, then the cross-corpus report.
    Pipeline(ConfigArgs),
    /// Decode a manifest into a dataset file and per-utterance segment caches.
    Features(FeaturesArgs),
    /// Write synthetic manifest-backed datasets and a matching recipe.
    Synth(SynthArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override a scalar config field, e.g. `stage.pretrain.lr=0.01` or
    /// `stage.*.iterations=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run only the named stages (default: all stages of the command's kind).
    #[arg(long)]
    pub stage: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long, short)]
    pub manifest: PathBuf,
    /// Dataset name (default: the manifest's directory name).
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value_t = 64)]
    pub input_size: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = SynthSpec::default().per_class)]
    pub per_class: usize,
    #[arg(long, default_value_t = SynthSpec::default().shift)]
    pub shift: f64,
    #[arg(long, default_value_t = SynthSpec::default().noise)]
    pub noise: f64,
    /// Utterances per class in each audio dataset; 0 skips audio.
    #[arg(long, default_value_t = SynthAudioSpec::default().per_class)]
    pub audio_per_class: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, conflicts_with = "dataset_file", required_unless_present = "dataset_file")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub dataset_file: Option<PathBuf>,
    /// Dataset name used to pick a joint model's head.
    #[arg(long)]
    pub name: Option<String>,
    /// `1`, `2`, `both`, or `auto` (the head trained on this dataset, else 1).
    #[arg(long, default_value = "auto")]
    pub head: String,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = jdcl_core::suite::DEFAULT_SEEDS)]
    pub seeds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Pretrain(_) => "pretrain",
            Command::Finetune(_) => "finetune",
            Command::JointTrain(_) => "joint-train",
            Command::Pipeline(_) => "pipeline",
            Command::Features(_) => "features",
            Command::Synth(_) => "synth",
            Command::Eval(_) => "eval",
            Command::Gradcheck(_) => "gradcheck",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Progress and the status line go to `out`, errors also to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            if code != EXIT_OK {
                let _ = writeln!(out, "{}", status_error("none", &Error::Usage(first_line(&e.to_string()))));
            }
            return code;
        }
    };
    let name = cli.command.name();
    match execute(&cli, out) {
        Ok(summary) => {
            let _ = writeln!(out, "status=ok command={name}{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            let _ = writeln!(out, "{}", status_error(name, &e));
            e.exit_code()
        }
    }
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string()
}

fn status_error(command: &str, e: &Error) -> String {
    let msg = e.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("status=error command={command} code={} kind={} message=\"{msg}\"", e.exit_code(), e.kind())
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

fn output_dir(cli: &Cli, cfg: Option<&Config>, leaf: &str) -> PathBuf {
    if let Some(o) = &cli.output {
        return o.clone();
    }
    if let Some(d) = cfg.and_then(|c| c.output_dir.as_ref().map(|d| c.resolve(d))) {
        return d;
    }
    output_root().join(leaf)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<String> {
    match &cli.command {
        Command::Pretrain(a) => train(cli, a, StageKind::Pretrain, out),
        Command::Finetune(a) => train(cli, a, StageKind::Finetune, out),
        Command::JointTrain(a) => train(cli, a, StageKind::Joint, out),
        Command::Pipeline(a) => pipeline(cli, a, out),
        Command::Features(a) => features(cli, a, out),
        Command::Synth(a) => synth(cli, a, out),
        Command::Eval(a) => eval(cli, a, out),
        Command::Gradcheck(a) => gradcheck(cli, a, out),
    }
}

fn print_stage(out: &mut dyn Write, r: &StageReport) -> Result<()> {
    let (loss, acc) = r
        .final_metrics
        .map(|m| (format!("{:.6}", m.train_loss), format!("{:.4}", m.train_accuracy)))
        .unwrap_or_else(|| ("nan".into(), "nan".into()));
    writeln!(
        out,
        "stage={} name={} kind={} final_train_loss={loss} final_train_accuracy={acc} checkpoint={}",
        r.index,
        r.name,
        r.kind.name(),
        r.checkpoint.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn train(cli: &Cli, a: &StageArgs, kind: StageKind, out: &mut dyn Write) -> Result<String> {
    let cfg = Config::load(&a.config.config, &a.config.overrides)?;
    let stages = cfg.validate()?;
    for s in &a.stage {
        if !stages.iter().any(|st| &st.spec.name == s && st.spec.kind == kind) {
            return Err(Error::Usage(format!("config has no {} stage named `{s}`", kind.name())));
        }
    }
    let selected: Vec<(usize, _)> = stages
        .iter()
        .enumerate()
        .filter(|(_, s)| s.spec.kind == kind && (a.stage.is_empty() || a.stage.contains(&s.spec.name)))
        .collect();
    if selected.is_empty() {
        return Err(Error::Usage(format!("config has no {} stage", kind.name())));
    }
    let dir = output_dir(cli, Some(&cfg), &stem(&a.config.config));
    let mut runner = Runner::new(&cfg, &dir)?;
    for (i, stage) in selected {
        let r = runner.run_stage(i + 1, stage)?;
        print_stage(out, &r)?;
    }
    Ok(format!(" output={}", dir.display()))
}

fn pipeline(cli: &Cli, a: &ConfigArgs, out: &mut dyn Write) -> Result<String> {
    let cfg = Config::load(&a.config, &a.overrides)?;
    let stages = cfg.validate()?;
    let dir = output_dir(cli, Some(&cfg), &stem(&a.config));
    let mut runner = Runner::new(&cfg, &dir)?;
    let mut reports = Vec::new();
    for (i, stage) in stages.iter().enumerate() {
        let r = runner.run_stage(i + 1, stage)?;
        print_stage(out, &r)?;
        reports.push(r);
    }
    atomic_write(&dir.join("stages.csv"), stages_csv(&reports).as_bytes())?;
    if let Some(report) = runner.report(&stages)? {
        write!(out, "{}", report.table.to_text()).map_err(|e| Error::io("<stdout>", e))?;
    }
    for (name, s) in &runner.datasets.skipped {
        writeln!(out, "skipped dataset={name} row={} reason=\"{}\"", s.row, s.reason).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(format!(" stages={} output={}", reports.len(), dir.display()))
}

fn features(cli: &Cli, a: &FeaturesArgs, out: &mut dyn Write) -> Result<String> {
    let name = a.name.clone().unwrap_or_else(|| {
        a.manifest
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| stem(&a.manifest))
    });
    let loaded = load_manifest(&a.manifest, &name, a.input_size)?;
    let dir = output_dir(cli, None, &format!("features-{name}"));
    let ds = &loaded.dataset;
    save_dataset(&dir.join(format!("{name}.jds")), ds)?;
    let mut index = String::from("path,label,group,samples\n");
    for (group, e) in loaded.entries.iter().enumerate() {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples()[i].group == group).collect();
        if members.is_empty() {
            continue;
        }
        if ds.modality == jdcl_core::data::Modality::Audio {
            let utt = ds.subset(stem(&e.path), &members)?;
            save_dataset(&dir.join("segments").join(format!("{:05}_{}.jds", group, stem(&e.path))), &utt)?;
        }
        index.push_str(&format!(
            "{},{},{group},{}\n",
            e.path.display(),
            jdcl_core::EMOTIONS[e.label],
            members.len()
        ));
    }
    atomic_write(&dir.join("features.csv"), index.as_bytes())?;
    for s in &loaded.skipped {
        writeln!(out, "skipped row={} path={} reason=\"{}\"", s.row, s.path.display(), s.reason)
            .map_err(|e| Error::io("<stdout>", e))?;
    }
    writeln!(
        out,
        "dataset={name} modality={} items={} samples={} skipped={}",
        ds.modality.name(),
        loaded.entries.len() - loaded.skipped.len(),
        ds.len(),
        loaded.skipped.len()
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    Ok(format!(" output={}", dir.display()))
}

fn write_visual(dir: &Path, ds: &Dataset) -> Result<usize> {
    let mut rows = Vec::new();
    for (i, s) in ds.samples().iter().enumerate() {
        let file = format!("{i:04}_{}.png", jdcl_core::EMOTIONS[s.label]);
        save_png(&dir.join(&file), &tensor_to_rgb8(&s.input)?)?;
        rows.push((file, s.label));
    }
    atomic_write(&dir.join("manifest.csv"), manifest::render(&rows)?.as_bytes())?;
    Ok(rows.len())
}

fn write_audio(dir: &Path, spec: &SynthAudioSpec, seed: u64) -> Result<usize> {
    let mut rows = Vec::new();
    for (i, (wave, label)) in synth_audio_waveforms(spec, seed)?.iter().enumerate() {
        let file = format!("{i:04}_{}.wav", jdcl_core::EMOTIONS[*label]);
        write_wav(&dir.join(&file), wave)?;
        rows.push((file, *label));
    }
    atomic_write(&dir.join("manifest.csv"), manifest::render(&rows)?.as_bytes())?;
    Ok(rows.len())
}

fn synth(cli: &Cli, a: &SynthArgs, out: &mut dyn Write) -> Result<String> {
    let dir = output_dir(cli, None, &format!("synth-{}", a.seed));
    let spec = SynthSpec {
        per_class: a.per_class,
        shift: a.shift,
        noise: a.noise,
    };
    let (va, vb) = synth_generate(&spec, a.seed)?;
    let mut sets = vec![
        ("visual_a", "visual", write_visual(&dir.join("visual_a"), &va)?),
        ("visual_b", "visual", write_visual(&dir.join("visual_b"), &vb)?),
    ];
    if a.audio_per_class > 0 {
        for (name, shift, seed) in [("audio_b", 0.0, a.seed), ("audio_c", a.shift, a.seed.wrapping_add(1))] {
            let spec = SynthAudioSpec {
                per_class: a.audio_per_class,
                shift,
                ..SynthAudioSpec::default()
            };
            sets.push((name, "audio", write_audio(&dir.join(name), &spec, seed)?));
        }
    }
    let recipe_path = dir.join("recipe.toml");
    if a.audio_per_class > 0 {
        atomic_write(&recipe_path, recipe::manifest_recipe(a.seed).as_bytes())?;
    }
    for (name, modality, n) in &sets {
        writeln!(
            out,
            "dataset={name} modality={modality} items={n} manifest={}",
            dir.join(name).join("manifest.csv").display()
        )
        .map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(format!(" output={}", dir.display()))
}

fn parse_heads(raw: &str, ck: &Checkpoint, name: &str) -> Result<Vec<Head>> {
    match raw {
        "1" => Ok(vec![Head::One]),
        "2" => Ok(vec![Head::Two]),
        "both" => Ok(vec![Head::One, Head::Two]),
        "auto" => {
            let pos = ck.meta.datasets.iter().position(|d| d == name);
            Ok(vec![if ck.meta.kind == StageKind::Joint && pos == Some(1) { Head::Two } else { Head::One }])
        }
        other => Err(Error::Usage(format!("--head must be 1, 2, both or auto, got `{other}`"))),
    }
}

fn eval(cli: &Cli, a: &EvalArgs, out: &mut dyn Write) -> Result<String> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let (ds, default_name) = match (&a.manifest, &a.dataset_file) {
        (Some(m), _) => {
            let name = m
                .parent()
                .and_then(|p| p.file_name())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| stem(m));
            let loaded = load_manifest(m, a.name.as_deref().unwrap_or(&name), ck.params.arch.input_size)?;
            (loaded.dataset, name)
        }
        (None, Some(f)) => {
            let ds = load_dataset(f)?;
            let id = ds.id.clone();
            (ds, id)
        }
        (None, None) => return Err(Error::Usage("give --manifest or --dataset-file".into())),
    };
    let name = a.name.clone().unwrap_or(default_name);
    let heads = parse_heads(&a.head, &ck, &name)?;
    let dir = output_dir(cli, None, &format!("eval-{}", stem(&a.checkpoint)));
    let mut rows: Vec<(String, Metrics)> = Vec::new();
    for h in heads {
        let m = evaluate(&ck, &ds, h)?;
        writeln!(
            out,
            "dataset={name} head={} total={} accuracy={:.4} war={:.4} uar={:.4}",
            h.index(),
            m.total,
            m.accuracy,
            m.war,
            m.uar
        )
        .map_err(|e| Error::io("<stdout>", e))?;
        atomic_write(&dir.join(format!("confusion_h{}.csv", h.index())), m.confusion_csv().as_bytes())?;
        rows.push((format!("{name}/h{}", h.index()), m));
    }
    let refs: Vec<(&str, &Metrics)> = rows.iter().map(|(n, m)| (n.as_str(), m)).collect();
    atomic_write(&dir.join("metrics.csv"), metrics_csv(&refs).as_bytes())?;
    Ok(format!(" output={}", dir.display()))
}

fn gradcheck(cli: &Cli, a: &GradcheckArgs, out: &mut dyn Write) -> Result<String> {
    if a.seeds == 0 {
        return Err(Error::Usage("--seeds must be positive".into()));
    }
    let results = run_suite(a.seeds, a.seed)?;
    let mut csv = String::from("check,max_rel_error,tolerance,seeds,passed\n");
    let mut failed = Vec::new();
    for r in &results {
        writeln!(
            out,
            "check={} max_rel_error={:.3e} tolerance={:.0e} seeds={} result={}",
            r.name,
            r.max_rel_error,
            r.tolerance,
            r.seeds,
            if r.passed() { "pass" } else { "fail" }
        )
        .map_err(|e| Error::io("<stdout>", e))?;
        csv.push_str(&format!("{},{:e},{:e},{},{}\n", r.name, r.max_rel_error, r.tolerance, r.seeds, r.passed()));
        if !r.passed() {
            failed.push(r.name);
        }
    }
    let dir = output_dir(cli, None, "gradcheck");
    atomic_write(&dir.join("gradcheck.csv"), csv.as_bytes())?;
    if !failed.is_empty() {
        return Err(Error::Numerical(format!("gradient checks over tolerance: {}", failed.join(", "))));
    }
    Ok(format!(" checks={} output={}", results.len(), dir.display()))
}
