//! On-disk layout of a built corpus: index files, payload stores, manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use asksci_core::index::{FlatIndex, IndexError, IndexManifest};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Index {
        path: PathBuf,
        #[source]
        source: IndexError,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: duplicate id `{id}`")]
    DuplicateId { path: PathBuf, id: String },
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// The index codec error, if this is one.
    pub fn index_error(&self) -> Option<&IndexError> {
        match self {
            Self::Index { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, creating
/// parent directories as needed.
fn write_file(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    fs::write(tmp, bytes).map_err(|e| StoreError::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| StoreError::io(path, e))
}

pub fn save_index(index: &FlatIndex, path: &Path) -> Result<IndexManifest, StoreError> {
    let (bytes, manifest) = index.encode();
    write_file(path, &bytes)?;
    Ok(manifest)
}

pub fn load_index(path: &Path) -> Result<(FlatIndex, IndexManifest), StoreError> {
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    FlatIndex::decode(&bytes).map_err(|source| StoreError::Index {
        path: path.to_path_buf(),
        source,
    })
}

/// Payloads keyed by entry id. Iteration (and file order) is by ascending id.
pub type PayloadStore<T> = BTreeMap<String, T>;

#[derive(Serialize, Deserialize)]
struct PayloadLine<T> {
    id: String,
    #[serde(flatten)]
    payload: T,
}

/// Writes one `{"id": ..., <payload fields>}` object per line.
pub fn save_payloads<T: Serialize + Clone>(store: &PayloadStore<T>, path: &Path) -> Result<(), StoreError> {
    let mut out = Vec::new();
    for (id, payload) in store {
        let line = PayloadLine {
            id: id.clone(),
            payload: payload.clone(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?;
        out.push(b'\n');
    }
    write_file(path, &out)
}

pub fn load_payloads<T: DeserializeOwned>(path: &Path) -> Result<PayloadStore<T>, StoreError> {
    let f = fs::File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut store = PayloadStore::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PayloadLine<T> = serde_json::from_str(&line).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            line: n + 1,
            source,
        })?;
        if store.contains_key(&parsed.id) {
            return Err(StoreError::DuplicateId {
                path: path.to_path_buf(),
                id: parsed.id,
            });
        }
        store.insert(parsed.id, parsed.payload);
    }
    Ok(store)
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), StoreError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })
}

/// File names of a built corpus inside one data directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub answer_index: PathBuf,
    pub answer_payload: PathBuf,
    pub answer_manifest: PathBuf,
    pub exam_index: PathBuf,
    pub exam_payload: PathBuf,
    pub exam_manifest: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            answer_index: dir.join("answers.idx"),
            answer_payload: dir.join("answers.payload.jsonl"),
            answer_manifest: dir.join("answers.manifest.json"),
            exam_index: dir.join("exams.idx"),
            exam_payload: dir.join("exams.payload.jsonl"),
            exam_manifest: dir.join("exams.manifest.json"),
        }
    }

    pub fn all(&self) -> [&Path; 6] {
        [
            &self.answer_index,
            &self.answer_payload,
            &self.answer_manifest,
            &self.exam_index,
            &self.exam_payload,
            &self.exam_manifest,
        ]
    }
}
