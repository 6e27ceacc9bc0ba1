use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::hash::{hash_bytes, ContentHash};
use super::manifest::Manifest;
use super::{EvidenceError, EvidenceId};

const KEY_LOCK_STRIPES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub manifest: Manifest,
    /// Locator relative to the store root, derived from the content hash.
    pub storage_path: String,
    pub size_bytes: u64,
}

enum Backend {
    Memory(RwLock<HashMap<String, Arc<Vec<u8>>>>),
    Dir(PathBuf),
}

/// Content-addressed media store with a manifest index keyed by evidence id.
///
/// Reads run concurrently; writes to the same content key are serialized
/// through a striped lock.
pub struct ObjectStore {
    backend: Backend,
    index: RwLock<BTreeMap<EvidenceId, EvidenceRecord>>,
    key_locks: Vec<Mutex<()>>,
}

impl std::fmt::Debug for ObjectStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.backend {
            Backend::Memory(_) => "memory".to_string(),
            Backend::Dir(p) => p.display().to_string(),
        };
        f.debug_struct("ObjectStore")
            .field("backend", &kind)
            .field("records", &self.index.read().len())
            .finish()
    }
}

pub fn storage_locator(hash: &ContentHash) -> String {
    let hex = hash.to_hex();
    format!("objects/{}/{}", &hex[..2], hex)
}

impl ObjectStore {
    pub fn in_memory() -> Self {
        Self::with_backend(Backend::Memory(RwLock::new(HashMap::new())))
    }

    /// Opens (or creates) a store rooted at `root` and loads its index.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, EvidenceError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("objects"))?;
        fs::create_dir_all(root.join("records"))?;
        let store = Self::with_backend(Backend::Dir(root.clone()));
        {
            let mut index = store.index.write();
            let mut entries: Vec<_> = fs::read_dir(root.join("records"))?.collect::<Result<_, _>>()?;
            entries.sort_by_key(|e| e.file_name());
            for entry in entries {
                let path = entry.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let record: EvidenceRecord = serde_json::from_slice(&fs::read(&path)?)?;
                index.insert(record.manifest.evidence_id.clone(), record);
            }
        }
        Ok(store)
    }

    fn with_backend(backend: Backend) -> Self {
        Self {
            backend,
            index: RwLock::new(BTreeMap::new()),
            key_locks: (0..KEY_LOCK_STRIPES).map(|_| Mutex::new(())).collect(),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Dir(p) => Some(p),
            Backend::Memory(_) => None,
        }
    }

    /// Persists `media` under its content key and indexes `manifest`.
    ///
    /// Storing the same evidence twice returns the original record; identical
    /// media under different evidence ids shares one stored object.
    pub fn store_evidence(&self, media: &[u8], manifest: &Manifest) -> Result<EvidenceRecord, EvidenceError> {
        let actual = hash_bytes(media);
        if actual != manifest.content_hash {
            return Err(EvidenceError::Integrity {
                expected: manifest.content_hash,
                actual,
            });
        }
        if let Some(existing) = self.index.read().get(&manifest.evidence_id) {
            return if existing.manifest == *manifest {
                Ok(existing.clone())
            } else {
                Err(EvidenceError::Conflict(manifest.evidence_id.clone()))
            };
        }

        let locator = storage_locator(&actual);
        {
            let _guard = self.key_locks[actual.digest[0] as usize % KEY_LOCK_STRIPES].lock();
            self.put_object(&locator, media)?;
        }
        let record = EvidenceRecord {
            manifest: manifest.clone(),
            storage_path: locator,
            size_bytes: media.len() as u64,
        };

        let mut index = self.index.write();
        if let Some(existing) = index.get(&manifest.evidence_id) {
            // lost a race with another writer for the same id
            return if existing.manifest == *manifest {
                Ok(existing.clone())
            } else {
                Err(EvidenceError::Conflict(manifest.evidence_id.clone()))
            };
        }
        if let Backend::Dir(root) = &self.backend {
            let path = root.join("records").join(format!("{}.json", manifest.evidence_id));
            write_atomic(&path, &serde_json::to_vec_pretty(&record)?)?;
        }
        index.insert(manifest.evidence_id.clone(), record.clone());
        Ok(record)
    }

    /// Returns the media and its manifest after checking the bytes still hash
    /// to the recorded digest.
    pub fn retrieve_evidence(&self, evidence_id: &EvidenceId) -> Result<(Vec<u8>, Manifest), EvidenceError> {
        let record = self
            .record(evidence_id)
            .ok_or_else(|| EvidenceError::NotFound(evidence_id.clone()))?;
        let media = self.get_object(&record.storage_path)?;
        let actual = hash_bytes(&media);
        if actual != record.manifest.content_hash {
            return Err(EvidenceError::Tampered {
                evidence_id: evidence_id.clone(),
                expected: record.manifest.content_hash,
                actual,
            });
        }
        Ok((media, record.manifest))
    }

    /// Raw stored bytes with no integrity check, for independent verification.
    pub fn read_media(&self, evidence_id: &EvidenceId) -> Result<Vec<u8>, EvidenceError> {
        let record = self
            .record(evidence_id)
            .ok_or_else(|| EvidenceError::NotFound(evidence_id.clone()))?;
        self.get_object(&record.storage_path)
    }

    pub fn record(&self, evidence_id: &EvidenceId) -> Option<EvidenceRecord> {
        self.index.read().get(evidence_id).cloned()
    }

    pub fn evidence_ids(&self) -> Vec<EvidenceId> {
        self.index.read().keys().cloned().collect()
    }

    /// Number of distinct stored objects (not manifests).
    pub fn object_count(&self) -> usize {
        match &self.backend {
            Backend::Memory(m) => m.read().len(),
            Backend::Dir(root) => fs::read_dir(root.join("objects"))
                .into_iter()
                .flatten()
                .flatten()
                .filter_map(|shard| fs::read_dir(shard.path()).ok())
                .map(|files| files.count())
                .sum(),
        }
    }

    /// Overwrites a stored object in place, bypassing every check. Exists to
    /// simulate storage corruption in tests and drills.
    pub fn overwrite_object_unchecked(&self, locator: &str, bytes: &[u8]) -> Result<(), EvidenceError> {
        match &self.backend {
            Backend::Memory(m) => {
                m.write().insert(locator.to_owned(), Arc::new(bytes.to_vec()));
            }
            Backend::Dir(root) => fs::write(root.join(locator), bytes)?,
        }
        Ok(())
    }

    fn put_object(&self, locator: &str, media: &[u8]) -> Result<(), EvidenceError> {
        match &self.backend {
            Backend::Memory(m) => {
                m.write()
                    .entry(locator.to_owned())
                    .or_insert_with(|| Arc::new(media.to_vec()));
            }
            Backend::Dir(root) => {
                let path = root.join(locator);
                if !path.exists() {
                    fs::create_dir_all(path.parent().expect("locator has a shard dir"))?;
                    write_atomic(&path, media)?;
                }
            }
        }
        Ok(())
    }

    fn get_object(&self, locator: &str) -> Result<Vec<u8>, EvidenceError> {
        match &self.backend {
            Backend::Memory(m) => m
                .read()
                .get(locator)
                .map(|b| b.as_ref().clone())
                .ok_or_else(|| EvidenceError::MissingObject(locator.to_owned())),
            Backend::Dir(root) => fs::read(root.join(locator)).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => EvidenceError::MissingObject(locator.to_owned()),
                _ => e.into(),
            }),
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
