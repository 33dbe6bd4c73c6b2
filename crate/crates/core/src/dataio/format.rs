//! Directory layout: `manifest.json`, `samples.bin` (little-endian f32,
//! C-order) and `labels.bin` (little-endian u32).

use std::fs;
use std::path::Path;

use super::dataset::{LabeledDataset, Manifest, DTYPE};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.bin";
pub const LABELS_FILE: &str = "labels.bin";

pub fn save_dataset(dataset: &LabeledDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = serde_json::to_vec_pretty(&dataset.manifest())?;
    write(&dir.join(MANIFEST_FILE), &manifest)?;

    let mut samples = Vec::with_capacity(dataset.samples().len() * 4);
    for v in dataset.samples() {
        samples.extend_from_slice(&v.to_le_bytes());
    }
    write(&dir.join(SAMPLES_FILE), &samples)?;

    let mut labels = Vec::with_capacity(dataset.len() * 4);
    for &l in dataset.labels() {
        let l = u32::try_from(l).map_err(|_| Error::Format(format!("label {l} exceeds u32")))?;
        labels.extend_from_slice(&l.to_le_bytes());
    }
    write(&dir.join(LABELS_FILE), &labels)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::Format(format!("missing dataset file {}", path.display()))
        }
        _ => Error::io(path, e),
    })
}

fn check_len(file: &str, bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{file}: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_slice(&read(&dir.join(MANIFEST_FILE))?)
        .map_err(|e| Error::Format(format!("{MANIFEST_FILE}: {e}")))?;
    if manifest.dtype != DTYPE {
        return Err(Error::Format(format!(
            "unsupported dtype '{}', expected '{DTYPE}'",
            manifest.dtype
        )));
    }
    let [n, c, h, w] = manifest.shape;
    let count = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(h))
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Format(format!("shape {:?} overflows", manifest.shape)))?;

    let raw = read(&dir.join(SAMPLES_FILE))?;
    check_len(SAMPLES_FILE, &raw, count * 4)?;
    let samples = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let raw = read(&dir.join(LABELS_FILE))?;
    check_len(LABELS_FILE, &raw, n * 4)?;
    let labels = raw
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .collect();

    LabeledDataset::new(
        manifest.name,
        manifest.shape,
        samples,
        labels,
        manifest.num_classes,
        manifest.splits,
    )
    .map_err(|e| match e {
        Error::Precondition(msg) => Error::Format(format!("{}: {msg}", dir.display())),
        other => other,
    })
}
