//! Permissioned metadata ledger: full manifests, adjuster annotations and
//! settlement documents, all append-only.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::journal::RecordFile;
use super::LedgerError;
use crate::evidence::{EvidenceId, Manifest};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub key: String,
    pub value: String,
    pub written_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateRecord {
    pub evidence_id: EvidenceId,
    pub manifest: Manifest,
    pub annotations: Vec<Annotation>,
    pub written_at: Timestamp,
}

/// Any other immutable document kept privately, e.g. a settlement transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateDocument {
    pub doc_id: String,
    pub kind: String,
    pub body: serde_json::Value,
    pub written_at: Timestamp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Entry {
    Put(PrivateRecord),
    Annotate { evidence_id: EvidenceId, annotation: Annotation },
    Document(PrivateDocument),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
struct PrivateState {
    records: BTreeMap<EvidenceId, PrivateRecord>,
    documents: BTreeMap<String, PrivateDocument>,
}

#[derive(Debug, Default)]
pub struct PrivateLedger {
    state: PrivateState,
    journal: Option<RecordFile>,
}

impl PrivateLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let (journal, records) = RecordFile::open(path.as_ref())?;
        let mut ledger = Self::in_memory();
        for (n, raw) in records.iter().enumerate() {
            let entry: Entry = serde_json::from_slice(raw)
                .map_err(|e| LedgerError::Corrupt(format!("private record {n}: {e}")))?;
            ledger.apply(entry)?;
        }
        ledger.journal = Some(journal);
        Ok(ledger)
    }

    pub fn detached_clone(&self) -> Self {
        Self {
            state: self.state.clone(),
            journal: None,
        }
    }

    /// Inserts a record, or appends its unseen annotations to an existing one.
    /// The stored manifest can never change.
    pub fn private_put(&mut self, record: PrivateRecord) -> Result<(), LedgerError> {
        match self.state.records.get(&record.evidence_id) {
            Some(existing) if existing.manifest != record.manifest => {
                Err(LedgerError::Immutable(format!("manifest of {} cannot be rewritten", record.evidence_id)))
            }
            Some(existing) => {
                let fresh: Vec<_> = record
                    .annotations
                    .into_iter()
                    .filter(|a| !existing.annotations.contains(a))
                    .collect();
                for annotation in fresh {
                    self.commit(Entry::Annotate {
                        evidence_id: record.evidence_id.clone(),
                        annotation,
                    })?;
                }
                Ok(())
            }
            None => self.commit(Entry::Put(record)),
        }
    }

    pub fn annotate(&mut self, evidence_id: &EvidenceId, annotation: Annotation) -> Result<(), LedgerError> {
        if !self.state.records.contains_key(evidence_id) {
            return Err(LedgerError::NotFound(format!("no private record for {evidence_id}")));
        }
        self.commit(Entry::Annotate {
            evidence_id: evidence_id.clone(),
            annotation,
        })
    }

    pub fn private_get(&self, evidence_id: &EvidenceId) -> Result<&PrivateRecord, LedgerError> {
        self.state
            .records
            .get(evidence_id)
            .ok_or_else(|| LedgerError::NotFound(format!("no private record for {evidence_id}")))
    }

    /// Writes a document once; rewriting it with different content fails.
    pub fn put_document(&mut self, doc: PrivateDocument) -> Result<(), LedgerError> {
        match self.state.documents.get(&doc.doc_id) {
            Some(existing) if *existing == doc => Ok(()),
            Some(_) => Err(LedgerError::Immutable(format!("document {} cannot be rewritten", doc.doc_id))),
            None => self.commit(Entry::Document(doc)),
        }
    }

    pub fn document(&self, doc_id: &str) -> Option<&PrivateDocument> {
        self.state.documents.get(doc_id)
    }

    pub fn len(&self) -> usize {
        self.state.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.records.is_empty()
    }

    /// Deterministic JSON dump of the whole ledger state.
    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(&self.state).expect("private state serializes")
    }

    /// Replaces a stored manifest without any checks, as a compromised
    /// database administrator could. Used by tamper drills.
    pub fn overwrite_manifest_unchecked(&mut self, evidence_id: &EvidenceId, manifest: Manifest) -> bool {
        match self.state.records.get_mut(evidence_id) {
            Some(rec) => {
                rec.manifest = manifest;
                true
            }
            None => false,
        }
    }

    fn commit(&mut self, entry: Entry) -> Result<(), LedgerError> {
        if let Some(j) = &mut self.journal {
            j.append(&serde_json::to_vec(&entry)?)?;
        }
        self.apply(entry)
    }

    fn apply(&mut self, entry: Entry) -> Result<(), LedgerError> {
        match entry {
            Entry::Put(rec) => {
                self.state.records.insert(rec.evidence_id.clone(), rec);
            }
            Entry::Annotate { evidence_id, annotation } => {
                let rec = self
                    .state
                    .records
                    .get_mut(&evidence_id)
                    .ok_or_else(|| LedgerError::Corrupt(format!("annotation for unknown {evidence_id}")))?;
                rec.annotations.push(annotation);
            }
            Entry::Document(doc) => {
                self.state.documents.insert(doc.doc_id.clone(), doc);
            }
        }
        Ok(())
    }
}
