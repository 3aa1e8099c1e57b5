//! Runs configured stages in order, threading checkpoints from one stage to
//! the next, and renders the cross-corpus report.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use jdcl_core::codec::Checkpoint;
use jdcl_core::data::{kfold_split, synth_audio, synth_generate, Dataset, Fold};
use jdcl_core::eval::{evaluate, metrics_csv, CrossCorpusTable, Metrics};
use jdcl_core::network::Head;
use jdcl_core::train::{run_finetune, run_joint, run_pretrain, FinalMetrics, StageKind};

use crate::config::{Config, DatasetSource, Init, Stage};
use crate::error::{Error, Result};
use crate::files::{atomic_write, load_checkpoint, load_dataset, save_checkpoint};
use crate::manifest::{load_manifest, Skipped};

/// Lazily materialized datasets of one config, each built at most once.
pub struct Datasets<'a> {
    cfg: &'a Config,
    input_size: usize,
    cache: HashMap<String, Rc<Dataset>>,
    /// Utterances dropped while loading audio manifests, by dataset name.
    pub skipped: Vec<(String, Skipped)>,
}

impl<'a> Datasets<'a> {
    pub fn new(cfg: &'a Config) -> Result<Self> {
        Ok(Self {
            cfg,
            input_size: cfg.arch()?.input_size,
            cache: HashMap::new(),
            skipped: Vec::new(),
        })
    }

    pub fn get(&mut self, name: &str) -> Result<Rc<Dataset>> {
        if let Some(d) = self.cache.get(name) {
            return Ok(d.clone());
        }
        let section = self
            .cfg
            .dataset(name)
            .ok_or_else(|| Error::config("dataset", format!("unknown dataset `{name}`")))?;
        let ds = match self.cfg.source(section)? {
            DatasetSource::Manifest(path) => {
                let loaded = load_manifest(&path, name, self.input_size)?;
                self.skipped.extend(loaded.skipped.into_iter().map(|s| (name.to_string(), s)));
                loaded.dataset
            }
            DatasetSource::File(path) => {
                let mut ds = load_dataset(&path)?;
                ds.id = name.to_string();
                ds
            }
            DatasetSource::SynthVisual { spec, shifted, seed } => {
                let (a, b) = synth_generate(&spec, seed)?;
                let mut ds = if shifted { b } else { a };
                ds.id = name.to_string();
                ds
            }
            DatasetSource::SynthAudio { spec, seed } => synth_audio(&spec, name, seed)?,
            DatasetSource::Split(s) => {
                let parent = self.get(&s.of)?;
                let fold = Fold::select(&kfold_split(&parent, s.folds, s.seed)?, s.fold)?;
                let part = if s.part == "train" { &fold.train } else { &fold.test };
                parent.subset(name, part)?
            }
        };
        let ds = Rc::new(ds);
        self.cache.insert(name.to_string(), ds.clone());
        Ok(ds)
    }
}

#[derive(Debug, Clone)]
pub struct StageReport {
    /// 1-based position in the config.
    pub index: usize,
    pub name: String,
    pub kind: StageKind,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub final_metrics: Option<FinalMetrics>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub table: CrossCorpusTable,
    pub files: Vec<PathBuf>,
}

pub fn checkpoint_path(out: &Path, stage: &str) -> PathBuf {
    out.join(format!("{stage}.ckpt"))
}

pub fn log_path(out: &Path, stage: &str) -> PathBuf {
    out.join(format!("{stage}.log.csv"))
}

/// Stage runner with the checkpoints produced so far.
pub struct Runner<'a> {
    cfg: &'a Config,
    out: PathBuf,
    pub datasets: Datasets<'a>,
    checkpoints: HashMap<String, Rc<Checkpoint>>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a Config, out: &Path) -> Result<Self> {
        Ok(Self {
            cfg,
            out: out.to_path_buf(),
            datasets: Datasets::new(cfg)?,
            checkpoints: HashMap::new(),
        })
    }

    /// Checkpoint of a stage: from this run if it ran, else from disk.
    pub fn checkpoint(&mut self, stage: &str) -> Result<Rc<Checkpoint>> {
        if let Some(ck) = self.checkpoints.get(stage) {
            return Ok(ck.clone());
        }
        let path = checkpoint_path(&self.out, stage);
        if !path.is_file() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("no checkpoint from stage `{stage}`")),
            ));
        }
        let ck = Rc::new(load_checkpoint(&path)?);
        self.checkpoints.insert(stage.to_string(), ck.clone());
        Ok(ck)
    }

    /// Runs one stage and writes its checkpoint and log. Errors carry the
    /// stage's 1-based `index`.
    pub fn run_stage(&mut self, index: usize, stage: &Stage) -> Result<StageReport> {
        self.run_stage_inner(index, stage).map_err(|e| Error::Stage {
            index,
            name: stage.spec.name.clone(),
            source: Box::new(e),
        })
    }

    fn run_stage_inner(&mut self, index: usize, stage: &Stage) -> Result<StageReport> {
        let init = match &stage.init {
            Init::Fresh => None,
            Init::Stage(name) => Some(self.checkpoint(name)?),
            Init::Path(p) => Some(Rc::new(load_checkpoint(p)?)),
        };
        let data: Vec<Rc<Dataset>> = stage
            .datasets
            .iter()
            .map(|d| self.datasets.get(d))
            .collect::<Result<_>>()?;
        let spec = &stage.spec;
        let output = match (spec.kind, init) {
            (StageKind::Pretrain, None) => run_pretrain(spec, &data[0])?,
            (StageKind::Finetune, Some(ck)) => run_finetune(spec, &ck, &data[0])?,
            (StageKind::Joint, Some(ck)) => run_joint(spec, &ck, &data[0], &data[1])?,
            _ => return Err(Error::config("stage.init", "initialization does not fit the stage kind")),
        };
        let ck_path = checkpoint_path(&self.out, &spec.name);
        let log = log_path(&self.out, &spec.name);
        save_checkpoint(&ck_path, &output.checkpoint)?;
        atomic_write(&log, output.log.to_csv().as_bytes())?;
        let report = StageReport {
            index,
            name: spec.name.clone(),
            kind: spec.kind,
            checkpoint: ck_path,
            log,
            final_metrics: output.log.final_metrics,
        };
        self.checkpoints.insert(spec.name.clone(), Rc::new(output.checkpoint));
        Ok(report)
    }

    /// Head a model should be scored with on a dataset: for a joint model,
    /// the head trained on the dataset's source; otherwise the stage's head.
    pub fn role_head(&self, stage: &Stage, dataset: &str) -> Head {
        if stage.spec.kind != StageKind::Joint {
            return stage.spec.head;
        }
        let root = self.cfg.root_dataset(dataset);
        match stage.datasets.iter().position(|d| self.cfg.root_dataset(d) == root) {
            Some(1) => Head::Two,
            _ => Head::One,
        }
    }

    /// Evaluates the configured models on the configured datasets and writes
    /// the table (CSV and aligned text) plus per-cell metrics and confusions.
    pub fn report(&mut self, stages: &[Stage]) -> Result<Option<Report>> {
        let Some(r) = self.cfg.report.clone() else {
            return Ok(None);
        };
        let mut columns: Vec<(String, String, Option<Head>)> = Vec::new();
        for d in &r.datasets {
            if r.both_heads {
                columns.push((format!("{d}/h1"), d.clone(), Some(Head::One)));
                columns.push((format!("{d}/h2"), d.clone(), Some(Head::Two)));
            } else {
                columns.push((d.clone(), d.clone(), None));
            }
        }
        let mut cells = Vec::new();
        let mut rows: Vec<(String, Metrics)> = Vec::new();
        let mut files = Vec::new();
        for m in &r.models {
            let stage = stages
                .iter()
                .find(|s| &s.spec.name == m)
                .ok_or_else(|| Error::config("report.models", format!("unknown stage `{m}`")))?;
            let ck = self.checkpoint(m)?;
            let mut row = Vec::new();
            for (label, d, head) in &columns {
                let head = head.unwrap_or_else(|| self.role_head(stage, d));
                let ds = self.datasets.get(d)?;
                let metrics = evaluate(&ck, &ds, head)?;
                let cell = format!("{m}@{label}");
                let conf = self.out.join("confusion").join(format!("{}.csv", cell.replace('/', "_")));
                atomic_write(&conf, metrics.confusion_csv().as_bytes())?;
                files.push(conf);
                rows.push((format!("{cell}/h{}", head.index()), metrics.clone()));
                row.push(metrics);
            }
            cells.push(row);
        }
        let table = CrossCorpusTable::from_cells(r.models.clone(), columns.into_iter().map(|c| c.0).collect(), cells)?;
        let refs: Vec<(&str, &Metrics)> = rows.iter().map(|(n, m)| (n.as_str(), m)).collect();
        for (name, body) in [
            ("cross_corpus.csv", table.to_csv()),
            ("cross_corpus.txt", table.to_text()),
            ("metrics.csv", metrics_csv(&refs)),
        ] {
            let p = self.out.join(name);
            atomic_write(&p, body.as_bytes())?;
            files.push(p);
        }
        Ok(Some(Report { table, files }))
    }
}

/// One line per stage, as printed by the CLI and kept in `stages.csv`.
pub fn stages_csv(reports: &[StageReport]) -> String {
    let mut s = String::from("index,name,kind,final_train_loss,final_train_accuracy\n");
    for r in reports {
        let (loss, acc) = r
            .final_metrics
            .map(|m| (m.train_loss.to_string(), m.train_accuracy.to_string()))
            .unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{loss},{acc}", r.index, r.name, r.kind.name());
    }
    s
}
