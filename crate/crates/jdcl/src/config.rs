//! TOML experiment configuration.
//!
//! A config declares datasets (`[[dataset]]`), training stages (`[[stage]]`,
//! fields named after [`StageSpec`]), an optional `[arch]` override and an
//! optional `[report]` cross-corpus table. Relative paths resolve against
//! the config file's directory. Command-line overrides (`key=value`) patch
//! scalar fields before anything is validated.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use jdcl_core::data::{SynthAudioSpec, SynthSpec};
use jdcl_core::losses::LossWeights;
use jdcl_core::network::{ArchConfig, Head};
use jdcl_core::train::{Freeze, Schedule, StageKind, StageSpec};
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub arch: ArchSection,
    #[serde(default, rename = "dataset")]
    pub datasets: Vec<DatasetSection>,
    #[serde(default, rename = "stage")]
    pub stages: Vec<StageSection>,
    pub report: Option<ReportSection>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    /// `desk` (default) or `full`; the remaining fields override it.
    pub preset: Option<String>,
    pub input_size: Option<usize>,
    pub in_channels: Option<usize>,
    pub conv_filters: Option<Vec<usize>>,
    pub fc_dims: Option<Vec<usize>>,
    pub gn_groups: Option<usize>,
    pub gn_eps: Option<f64>,
    pub lrelu_slope: Option<f64>,
    pub dropout_rate: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    pub manifest: Option<PathBuf>,
    /// A dataset container written by `jdcl features` or the codec.
    pub file: Option<PathBuf>,
    pub synth: Option<SynthSection>,
    pub split: Option<SplitSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    /// `visual` or `audio`.
    pub modality: String,
    /// Visual only: `a` (reference style) or `b` (shifted style).
    pub domain: Option<String>,
    pub per_class: Option<usize>,
    pub shift: Option<f64>,
    pub noise: Option<f64>,
    pub duration_ms: Option<u32>,
    #[serde(default)]
    pub seed: u64,
}

/// One side of a stratified k-fold split of another dataset.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub of: String,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub fold: usize,
    /// `train` or `test`.
    pub part: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub name: String,
    pub kind: String,
    pub datasets: Vec<String>,
    /// `fresh`, `stage:<name>` or a checkpoint path.
    #[serde(default = "default_init")]
    pub init: String,
    pub freeze: Option<String>,
    pub lr: Option<f64>,
    pub iterations: Option<usize>,
    pub batch: Option<usize>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub margin: Option<f64>,
    pub seed: Option<u64>,
    pub head: Option<u8>,
    pub learnable_projection: Option<bool>,
    pub decay_every: Option<usize>,
    pub decay_factor: Option<f64>,
}

fn default_init() -> String {
    "fresh".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// Evaluate both heads instead of the one matching each dataset's role.
    #[serde(default)]
    pub both_heads: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Fresh,
    Stage(String),
    Path(PathBuf),
}

#[derive(Debug, Clone)]
pub enum DatasetSource {
    Manifest(PathBuf),
    File(PathBuf),
    SynthVisual { spec: SynthSpec, shifted: bool, seed: u64 },
    SynthAudio { spec: SynthAudioSpec, seed: u64 },
    Split(SplitSection),
}

/// A validated stage: the core spec plus what the runner needs to feed it.
#[derive(Debug, Clone)]
pub struct Stage {
    pub spec: StageSpec,
    pub datasets: Vec<String>,
    pub init: Init,
}

impl Config {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut root: toml::Value = toml::from_str(&text).map_err(|e| Error::config(path, e))?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let mut cfg = Config::deserialize(root).map_err(|e| Error::config(path, e))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Config> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::config("<inline>", e))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn arch(&self) -> Result<ArchConfig> {
        let a = &self.arch;
        let mut arch = match a.preset.as_deref() {
            None | Some("desk") => ArchConfig::desk(),
            Some("full") => ArchConfig::full(),
            Some(other) => return Err(Error::config("arch.preset", format!("unknown preset `{other}`"))),
        };
        if let Some(v) = a.input_size {
            arch.input_size = v;
        }
        if let Some(v) = a.in_channels {
            arch.in_channels = v;
        }
        if let Some(v) = &a.conv_filters {
            arch.conv_filters = v.clone();
        }
        if let Some(v) = &a.fc_dims {
            arch.fc_dims = v.clone();
        }
        if a.gn_groups.is_some() {
            arch.gn_groups = a.gn_groups;
        }
        if let Some(v) = a.gn_eps {
            arch.gn_eps = v;
        }
        if let Some(v) = a.lrelu_slope {
            arch.lrelu_slope = v;
        }
        if let Some(v) = a.dropout_rate {
            arch.dropout_rate = v;
        }
        arch.validate()?;
        Ok(arch)
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetSection> {
        self.datasets.iter().find(|d| d.name == name)
    }

    /// Follows split links back to the dataset a split was cut from.
    pub fn root_dataset<'a>(&'a self, name: &'a str) -> &'a str {
        let mut cur = name;
        while let Some(s) = self.dataset(cur).and_then(|d| d.split.as_ref()) {
            cur = &s.of;
        }
        cur
    }

    pub fn source(&self, d: &DatasetSection) -> Result<DatasetSource> {
        let field = |reason: String| Error::config(format!("dataset `{}`", d.name), reason);
        let given = [d.manifest.is_some(), d.file.is_some(), d.synth.is_some(), d.split.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(field("give exactly one of `manifest`, `file`, `synth`, `split`".into()));
        }
        if let Some(m) = &d.manifest {
            return Ok(DatasetSource::Manifest(self.resolve(m)));
        }
        if let Some(f) = &d.file {
            return Ok(DatasetSource::File(self.resolve(f)));
        }
        if let Some(s) = &d.split {
            if s.part != "train" && s.part != "test" {
                return Err(field(format!("split part must be `train` or `test`, got `{}`", s.part)));
            }
            return Ok(DatasetSource::Split(s.clone()));
        }
        let s = d.synth.as_ref().expect("one source is set");
        match s.modality.as_str() {
            "visual" => {
                let defaults = SynthSpec::default();
                let shifted = match s.domain.as_deref() {
                    None | Some("a") => false,
                    Some("b") => true,
                    Some(other) => return Err(field(format!("synth domain must be `a` or `b`, got `{other}`"))),
                };
                if s.duration_ms.is_some() {
                    return Err(field("`duration_ms` only applies to audio".into()));
                }
                Ok(DatasetSource::SynthVisual {
                    spec: SynthSpec {
                        per_class: s.per_class.unwrap_or(defaults.per_class),
                        shift: s.shift.unwrap_or(defaults.shift),
                        noise: s.noise.unwrap_or(defaults.noise),
                    },
                    shifted,
                    seed: s.seed,
                })
            }
            "audio" => {
                if s.domain.is_some() {
                    return Err(field("`domain` only applies to visual data; use `shift`".into()));
                }
                let defaults = SynthAudioSpec::default();
                Ok(DatasetSource::SynthAudio {
                    spec: SynthAudioSpec {
                        per_class: s.per_class.unwrap_or(defaults.per_class),
                        duration_ms: s.duration_ms.unwrap_or(defaults.duration_ms),
                        noise: s.noise.unwrap_or(defaults.noise),
                        shift: s.shift.unwrap_or(defaults.shift),
                    },
                    seed: s.seed,
                })
            }
            other => Err(field(format!("synth modality must be `visual` or `audio`, got `{other}`"))),
        }
    }

    /// Checks every cross-reference and builds the stage list. Stage errors
    /// carry the stage's 1-based index.
    pub fn validate(&self) -> Result<Vec<Stage>> {
        let mut seen = HashSet::new();
        for d in &self.datasets {
            if d.name.is_empty() || !seen.insert(d.name.as_str()) {
                return Err(Error::config("dataset", format!("dataset names must be unique and non-empty: `{}`", d.name)));
            }
            self.source(d)?;
            if let Some(s) = &d.split {
                // Only earlier datasets may be split, which rules out cycles.
                let earlier = self.datasets.iter().take_while(|x| x.name != d.name).any(|x| x.name == s.of);
                if !earlier {
                    return Err(Error::config(
                        format!("dataset `{}`", d.name),
                        format!("split source `{}` must be a dataset declared earlier", s.of),
                    ));
                }
            }
        }
        let arch = self.arch()?;
        let mut names: Vec<&str> = Vec::new();
        let mut stages = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            let wrap = |e: Error| Error::Stage {
                index: i + 1,
                name: s.name.clone(),
                source: Box::new(e),
            };
            if s.name.is_empty() || names.contains(&s.name.as_str()) {
                return Err(wrap(Error::config("stage.name", "stage names must be unique and non-empty")));
            }
            let stage = self.build_stage(s, &arch, &names).map_err(wrap)?;
            names.push(&s.name);
            stages.push(stage);
        }
        if let Some(r) = &self.report {
            for m in &r.models {
                if !names.contains(&m.as_str()) {
                    return Err(Error::config("report.models", format!("unknown stage `{m}`")));
                }
            }
            for d in &r.datasets {
                if self.dataset(d).is_none() {
                    return Err(Error::config("report.datasets", format!("unknown dataset `{d}`")));
                }
            }
        }
        Ok(stages)
    }

    fn build_stage(&self, s: &StageSection, arch: &ArchConfig, earlier: &[&str]) -> Result<Stage> {
        let kind = StageKind::parse(&s.kind)
            .ok_or_else(|| Error::config("stage.kind", format!("expected pretrain, finetune or joint, got `{}`", s.kind)))?;
        let wanted = if kind == StageKind::Joint { 2 } else { 1 };
        if s.datasets.len() != wanted {
            return Err(Error::config(
                "stage.datasets",
                format!("a {} stage takes {wanted} dataset(s), got {}", kind.name(), s.datasets.len()),
            ));
        }
        for d in &s.datasets {
            if self.dataset(d).is_none() {
                return Err(Error::config("stage.datasets", format!("unknown dataset `{d}`")));
            }
        }
        let init = parse_init(&s.init, |p| self.resolve(p));
        match (&init, kind) {
            (Init::Fresh, StageKind::Pretrain) => {}
            (Init::Fresh, _) => {
                return Err(Error::config("stage.init", format!("a {} stage needs a checkpoint to start from", kind.name())))
            }
            (_, StageKind::Pretrain) => return Err(Error::config("stage.init", "a pretrain stage starts fresh")),
            (Init::Stage(name), _) if !earlier.contains(&name.as_str()) => {
                return Err(Error::config("stage.init", format!("`{name}` is not an earlier stage")))
            }
            (Init::Path(p), _) if !p.is_file() => {
                return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found")))
            }
            _ => {}
        }
        let mut spec = StageSpec::new(s.name.clone(), kind);
        spec.arch = arch.clone();
        if let Some(f) = &s.freeze {
            spec.freeze = Freeze::parse(f)
                .ok_or_else(|| Error::config("stage.freeze", format!("expected all_trainable or fc_only, got `{f}`")))?;
        }
        let d = LossWeights::default();
        spec.weights = LossWeights {
            class1: s.lambda1.unwrap_or(d.class1),
            class2: s.lambda2.unwrap_or(d.class2),
            matching: s.lambda3.unwrap_or(d.matching),
        };
        spec.lr = s.lr.unwrap_or(spec.lr);
        spec.iterations = s.iterations.unwrap_or(spec.iterations);
        spec.batch = s.batch.unwrap_or(spec.batch);
        spec.margin = s.margin.unwrap_or(spec.margin);
        spec.seed = s.seed.unwrap_or(spec.seed);
        spec.learnable_projection = s.learnable_projection.unwrap_or(spec.learnable_projection);
        if let Some(h) = s.head {
            spec.head = Head::from_index(h)?;
        }
        spec.schedule = match (s.decay_every, s.decay_factor) {
            (None, None) => Schedule::Constant,
            (Some(every), Some(factor)) => Schedule::StepDecay { every, factor },
            _ => return Err(Error::config("stage.decay_every", "decay_every and decay_factor go together")),
        };
        spec.validate()?;
        Ok(Stage {
            spec,
            datasets: s.datasets.clone(),
            init,
        })
    }
}

pub fn parse_init(raw: &str, resolve: impl Fn(&Path) -> PathBuf) -> Init {
    if raw == "fresh" {
        Init::Fresh
    } else if let Some(name) = raw.strip_prefix("stage:") {
        Init::Stage(name.to_string())
    } else {
        Init::Path(resolve(Path::new(raw)))
    }
}

/// Applies one `key=value` override.
///
/// Keys are dotted paths. Inside the `stage` and `dataset` arrays the next
/// segment selects an entry by name, or every entry with `*`, so
/// `stage.pretrain.lr=0.01` and `stage.*.iterations=50` both work. Only
/// scalar fields can be set; the value is read as a TOML scalar and falls
/// back to a plain string.
pub fn apply_override(root: &mut toml::Value, raw: &str) -> Result<()> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("--set {raw}: expected key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Usage(format!("--set {raw}: empty key segment")));
    }
    set_path(root, &path, &parse_scalar(value.trim())).map_err(|msg| Error::Usage(format!("--set {raw}: {msg}")))
}

fn set_path(node: &mut toml::Value, path: &[&str], value: &toml::Value) -> std::result::Result<(), String> {
    let table = node.as_table_mut().ok_or("target is not a table")?;
    let (seg, rest) = (path[0], &path[1..]);
    if rest.is_empty() {
        if table.get(seg).is_some_and(|old| old.is_table() || old.is_array()) {
            return Err(format!("`{seg}` is not a scalar field"));
        }
        table.insert(seg.to_string(), value.clone());
        return Ok(());
    }
    match table.get_mut(seg) {
        Some(toml::Value::Array(items)) if seg == "stage" || seg == "dataset" => {
            let (sel, field) = (rest[0], &rest[1..]);
            if field.is_empty() {
                return Err(format!("`{seg}.{sel}` needs a field name"));
            }
            let mut matched = 0;
            for item in items.iter_mut() {
                if sel == "*" || item.get("name").and_then(|n| n.as_str()) == Some(sel) {
                    set_path(item, field, value)?;
                    matched += 1;
                }
            }
            if matched == 0 {
                return Err(format!("no {seg} named `{sel}`"));
            }
            Ok(())
        }
        Some(v) => set_path(v, rest, value),
        None => set_path(table.entry(seg).or_insert(toml::Value::Table(Default::default())), rest, value),
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => match t.remove("v") {
            Some(v) if !v.is_table() && !v.is_array() => v,
            _ => toml::Value::String(raw.to_string()),
        },
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[[dataset]]
name = "a"
synth = { modality = "visual", domain = "a", per_class = 4 }

[[dataset]]
name = "a_train"
split = { of = "a", part = "train" }

[[stage]]
name = "pre"
kind = "pretrain"
datasets = ["a_train"]
lr = 0.01

[[stage]]
name = "ft"
kind = "finetune"
datasets = ["a"]
init = "stage:pre"
freeze = "fc_only"
"#;

    fn with(overrides: &[&str]) -> Result<Config> {
        let mut root: toml::Value = toml::from_str(BASE).unwrap();
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let mut cfg = Config::deserialize(root).unwrap();
        cfg.base_dir = PathBuf::from(".");
        Ok(cfg)
    }

    #[test]
    fn stages_take_defaults_and_explicit_fields() {
        let stages = with(&[]).unwrap().validate().unwrap();
        assert_eq!(stages.len(), 2);
        assert_eq!(stages[0].spec.lr, 0.01);
        assert_eq!(stages[0].spec.iterations, 2000);
        assert_eq!(stages[1].spec.freeze, Freeze::FcOnly);
        assert_eq!(stages[1].init, Init::Stage("pre".into()));
    }

    #[test]
    fn overrides_patch_named_and_wildcard_stages() {
        let stages = with(&["stage.ft.lr=0.5", "stage.*.iterations=7", "stage.pre.seed=9"])
            .unwrap()
            .validate()
            .unwrap();
        assert_eq!(stages[1].spec.lr, 0.5);
        assert_eq!(stages[0].spec.lr, 0.01);
        assert!(stages.iter().all(|s| s.spec.iterations == 7));
        assert_eq!(stages[0].spec.seed, 9);
        let cfg = with(&["output_dir=runs/x", "dataset.a.synth.seed=3"]).unwrap();
        assert_eq!(cfg.output_dir, Some(PathBuf::from("runs/x")));
        assert_eq!(cfg.datasets[0].synth.as_ref().unwrap().seed, 3);
    }

    #[test]
    fn overrides_reject_non_scalars_and_unknown_entries() {
        assert!(matches!(with(&["stage.pre.datasets=x"]), Err(Error::Usage(_))));
        assert!(matches!(with(&["stage.nope.lr=1"]), Err(Error::Usage(_))));
        assert!(matches!(with(&["lr"]), Err(Error::Usage(_))));
    }

    #[test]
    fn invalid_stages_report_their_index() {
        let err = with(&["stage.ft.init=stage:later"]).unwrap().validate().unwrap_err();
        assert!(matches!(err, Error::Stage { index: 2, .. }), "{err}");
        let err = with(&["stage.ft.init=missing.ckpt"]).unwrap().validate().unwrap_err();
        assert!(matches!(err, Error::Stage { index: 2, .. }), "{err}");
        let err = with(&["stage.pre.kind=joint"]).unwrap().validate().unwrap_err();
        assert!(matches!(err, Error::Stage { index: 1, .. }), "{err}");
        let err = with(&["stage.pre.lr=-1"]).unwrap().validate().unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_USAGE);
    }

    #[test]
    fn split_roots_resolve() {
        let cfg = with(&[]).unwrap();
        assert_eq!(cfg.root_dataset("a_train"), "a");
        assert_eq!(cfg.root_dataset("a"), "a");
    }
}
