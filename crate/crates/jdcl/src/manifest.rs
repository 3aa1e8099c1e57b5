//! CSV manifests: a `path,label` header followed by one row per image or
//! utterance. Paths are relative to the manifest's directory and labels are
//! emotion names.

use std::path::{Path, PathBuf};

use jdcl_core::audio::extract_segments;
use jdcl_core::data::{Dataset, Modality, Sample};
use jdcl_core::{Error as CoreError, EMOTIONS};

use crate::error::{Error, ManifestError, Result};
use crate::media::{load_image, media_kind, read_wav, MediaKind};

/// One manifest row after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// 1-based line number, header included.
    pub row: usize,
    pub path: PathBuf,
    pub label: usize,
}

/// An utterance left out of an audio dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub row: usize,
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub entries: Vec<Entry>,
    pub skipped: Vec<Skipped>,
}

pub fn label_index(name: &str) -> Option<usize> {
    EMOTIONS.iter().position(|e| e.eq_ignore_ascii_case(name.trim()))
}

fn manifest_err(path: &Path, row: Option<usize>, kind: ManifestError) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        row,
        kind,
    }
}

/// Parses and validates a manifest without decoding any media.
pub fn read_entries(path: &Path) -> Result<(Vec<Entry>, MediaKind)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.is_empty() {
        return Err(manifest_err(path, None, ManifestError::Empty));
    }
    if header.len() != 2 || &header[0] != "path" || &header[1] != "label" {
        let found = header.iter().collect::<Vec<_>>().join(",");
        return Err(manifest_err(path, Some(1), ManifestError::BadHeader(found)));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    let mut kind = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record.position().map_or(entries.len() + 2, |p| p.line() as usize);
        let file = base.join(&record[0]);
        let label = label_index(&record[1])
            .ok_or_else(|| manifest_err(path, Some(row), ManifestError::UnknownLabel(record[1].to_string())))?;
        let this = media_kind(&file).ok_or_else(|| {
            let ext = file.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default();
            manifest_err(path, Some(row), ManifestError::UnsupportedExtension(ext))
        })?;
        if *kind.get_or_insert(this) != this {
            return Err(manifest_err(path, Some(row), ManifestError::MixedModality));
        }
        if !file.is_file() {
            return Err(manifest_err(path, Some(row), ManifestError::MissingFile(file)));
        }
        entries.push(Entry { row, path: file, label });
    }
    match kind {
        Some(k) => Ok((entries, k)),
        None => Err(manifest_err(path, None, ManifestError::Empty)),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => manifest_err(path, row, ManifestError::Malformed(format!("{other:?}"))),
    }
}

/// Loads every row into a dataset named `id`.
///
/// Images become one sample each. Utterances become one sample per log-Mel
/// segment, grouped by utterance; utterances too short for a single segment
/// are skipped and reported rather than failing the load.
pub fn load_manifest(path: &Path, id: &str, input_size: usize) -> Result<Loaded> {
    let (entries, kind) = read_entries(path)?;
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    let modality = match kind {
        MediaKind::Image => {
            for (i, e) in entries.iter().enumerate() {
                samples.push(Sample {
                    input: load_image(&e.path, input_size).map_err(|err| with_row(path, e.row, err))?,
                    label: e.label,
                    group: i,
                });
            }
            Modality::Visual
        }
        MediaKind::Audio => {
            for (u, e) in entries.iter().enumerate() {
                let wave = read_wav(&e.path).map_err(|err| with_row(path, e.row, err))?;
                match extract_segments(&wave, u) {
                    Ok(segs) => samples.extend(segs.into_iter().map(|s| Sample {
                        input: s.to_input(),
                        label: e.label,
                        group: u,
                    })),
                    Err(err @ CoreError::TooShort { .. }) => skipped.push(Skipped {
                        row: e.row,
                        path: e.path.clone(),
                        reason: err.to_string(),
                    }),
                    Err(err) => return Err(with_row(path, e.row, err.into())),
                }
            }
            Modality::Audio
        }
    };
    if samples.is_empty() {
        return Err(manifest_err(path, None, ManifestError::Empty));
    }
    let dataset = Dataset::new(id, modality, samples)?;
    Ok(Loaded {
        dataset,
        entries,
        skipped,
    })
}

fn with_row(manifest: &Path, row: usize, err: Error) -> Error {
    manifest_err(manifest, Some(row), ManifestError::Unreadable(err.to_string()))
}

/// Renders a manifest for files already relative to its directory.
pub fn render(rows: &[(String, usize)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["path", "label"]).map_err(|e| Error::Usage(e.to_string()))?;
    for (p, label) in rows {
        w.write_record([p.as_str(), EMOTIONS[*label]]).map_err(|e| Error::Usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
