use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::snet::{decode_state, encode_state};
use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::supernet::SupernetState;

pub const INDEX_FILE: &str = "index.json";
pub const STATES_DIR: &str = "states";
pub const ZOO_ENV: &str = "OTNAS_ZOO";
const LOCK_FILE: &str = ".lock";
const LOCK_ATTEMPTS: u32 = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryMetadata {
    pub epochs_trained: usize,
    pub seed: u64,
    pub created_unix: u64,
    pub final_val_accuracy: f64,
}

impl EntryMetadata {
    /// Metadata stamped with the current time.
    pub fn now(epochs_trained: usize, seed: u64, final_val_accuracy: f64) -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        EntryMetadata {
            epochs_trained,
            seed,
            created_unix,
            final_val_accuracy,
        }
    }
}

/// One pretrained supernet in the zoo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZooEntry {
    pub dataset_name: String,
    pub dataset_fingerprint: String,
    pub search_space_fingerprint: String,
    /// Relative to the zoo root.
    pub state_path: PathBuf,
    pub metadata: EntryMetadata,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    entries: Vec<ZooEntry>,
}

/// The zoo: `<root>/index.json` plus `<root>/states/<name>.snet`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZooIndex {
    root: PathBuf,
    entries: Vec<ZooEntry>,
}

fn validate_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "zoo entry name {name:?} must be non-empty, use [A-Za-z0-9_.-] and not start with '.'"
        )))
    }
}

/// Write to a sibling temp file, then rename over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK_FILE);
        for _ in 0..LOCK_ATTEMPTS {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(LockGuard(path)),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        Err(Error::Conflict(format!(
            "zoo lock {} is held by another writer",
            path.display()
        )))
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn read_index(root: &Path) -> Result<Vec<ZooEntry>> {
    let path = root.join(INDEX_FILE);
    match fs::read(&path) {
        Ok(bytes) => {
            let file: IndexFile = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Corruption(format!("{}: {e}", path.display())))?;
            Ok(file.entries)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(Error::io(path, e)),
    }
}

impl ZooIndex {
    /// Open (or start) a zoo at `root`. The directory is created on first save.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let entries = read_index(&root)?;
        Ok(ZooIndex { root, entries })
    }

    /// `$OTNAS_ZOO` when set, otherwise `fallback`.
    pub fn default_root(fallback: impl Into<PathBuf>) -> PathBuf {
        std::env::var_os(ZOO_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| fallback.into())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ZooEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ZooEntry> {
        self.entries.iter().find(|e| e.dataset_name == name)
    }

    /// Entries whose dataset name differs from `name`.
    pub fn list_excluding(&self, name: &str) -> Vec<&ZooEntry> {
        self.entries.iter().filter(|e| e.dataset_name != name).collect()
    }

    /// Persist `state` as the entry for `dataset`. Fails with a conflict if
    /// the name is already present.
    pub fn save_entry(
        &mut self,
        dataset: &LabeledDataset,
        state: &SupernetState,
        metadata: EntryMetadata,
    ) -> Result<ZooEntry> {
        let name = dataset.name();
        validate_name(name)?;
        if !state.is_finite() {
            return Err(Error::Numerical(format!("state for {name} has non-finite values")));
        }
        let states_dir = self.root.join(STATES_DIR);
        fs::create_dir_all(&states_dir).map_err(|e| Error::io(&states_dir, e))?;
        let _lock = LockGuard::acquire(&self.root)?;
        self.entries = read_index(&self.root)?;
        if self.get(name).is_some() {
            return Err(Error::Conflict(format!("zoo already has an entry for {name}")));
        }
        let rel = Path::new(STATES_DIR).join(format!("{name}.snet"));
        write_atomic(&self.root.join(&rel), &encode_state(state))?;
        let entry = ZooEntry {
            dataset_name: name.to_string(),
            dataset_fingerprint: dataset.fingerprint(),
            search_space_fingerprint: state.config.fingerprint(),
            state_path: rel,
            metadata,
        };
        self.entries.push(entry.clone());
        let file = IndexFile { entries: self.entries.clone() };
        let json = serde_json::to_vec_pretty(&file)?;
        write_atomic(&self.root.join(INDEX_FILE), &json)?;
        Ok(entry)
    }

    /// Load and verify the state stored for `name`.
    pub fn load_entry(&self, name: &str) -> Result<SupernetState> {
        let entry = self
            .get(name)
            .ok_or_else(|| Error::NotFound(format!("no zoo entry named {name}")))?;
        let path = self.root.join(&entry.state_path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let state = decode_state(&bytes)
            .map_err(|e| Error::Corruption(format!("{}: {e}", path.display())))?;
        let fp = state.config.fingerprint();
        if fp != entry.search_space_fingerprint {
            return Err(Error::Corruption(format!(
                "{}: search-space fingerprint {fp} does not match index {}",
                path.display(),
                entry.search_space_fingerprint
            )));
        }
        Ok(state)
    }
}
