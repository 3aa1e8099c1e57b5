//! Filesystem plumbing: atomic writes and the binary container files.

use std::fs;
use std::io::Write;
use std::path::Path;

use jdcl_core::codec::{decode_checkpoint, decode_dataset, encode_checkpoint, encode_dataset, Checkpoint};
use jdcl_core::data::Dataset;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file, syncs it and renames it over
/// `path`, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    atomic_write(path, &encode_checkpoint(ck)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read(path)?).map_err(|e| Error::decode(path, e))
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    atomic_write(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&read(path)?).map_err(|e| Error::decode(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.bin");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("x.bin")]);
    }
}
