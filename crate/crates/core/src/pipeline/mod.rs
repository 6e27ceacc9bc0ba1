//! Capture ingestion: an at-least-once queue of capture events and an
//! idempotent consumer that hashes, signs, stores and dual-writes each one.
//!
//! Every effect of processing an event is keyed by its `event_id`, so a
//! redelivered or retried event converges on the same object, manifest,
//! private record and anchor as a single clean delivery.

mod faults;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use faults::{FaultPlan, Stage};

use crate::evidence::manifest::b64;
use crate::evidence::{
    hash_bytes, manifest_for_hash, CaptureMetadata, DeviceKey, EvidenceError, EvidenceId, GeoPoint, MediaKind,
    ObjectStore,
};
use crate::ledger::journal::RecordFile;
use crate::ledger::{Annotation, AnchorRecord, DualLedger, LedgerError, PrivateRecord};
use crate::par::Parallelism;
use crate::time::{Clock, Timestamp};
use faults::FaultInjector;

pub const QUEUE_FILE: &str = "queue.log";

/// Where the capture's bytes live until the pipeline picks them up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum MediaLocator {
    File(PathBuf),
    Inline(#[serde(with = "b64")] Vec<u8>),
}

impl MediaLocator {
    fn read(&self) -> std::io::Result<Vec<u8>> {
        match self {
            MediaLocator::File(p) => std::fs::read(p),
            MediaLocator::Inline(bytes) => Ok(bytes.clone()),
        }
    }

    fn check_readable(&self) -> std::io::Result<()> {
        match self {
            MediaLocator::File(p) => std::fs::File::open(p).map(drop),
            MediaLocator::Inline(_) => Ok(()),
        }
    }

    fn describe(&self) -> String {
        match self {
            MediaLocator::File(p) => p.display().to_string(),
            MediaLocator::Inline(b) => format!("<inline {} bytes>", b.len()),
        }
    }
}

/// Metadata reported by the capturing vehicle. `witness` marks footage
/// from a neighbouring vehicle rather than one involved in the incident.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCapture {
    pub device_id: String,
    pub captured_at: Timestamp,
    #[serde(default)]
    pub location: Option<GeoPoint>,
    pub media_kind: MediaKind,
    #[serde(default)]
    pub witness: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureEvent {
    pub event_id: String,
    pub media: MediaLocator,
    pub meta: RawCapture,
    pub enqueued_at: Timestamp,
    pub delivery_attempts: u32,
}

impl CaptureEvent {
    pub fn new(event_id: impl Into<String>, media: MediaLocator, meta: RawCapture, enqueued_at: Timestamp) -> Self {
        Self {
            event_id: event_id.into(),
            media,
            meta,
            enqueued_at,
            delivery_attempts: 0,
        }
    }

    /// Evidence id minted for this event.
    pub fn evidence_id(&self) -> Result<EvidenceId, EvidenceError> {
        evidence_id_for(&self.event_id)
    }
}

pub fn evidence_id_for(event_id: &str) -> Result<EvidenceId, EvidenceError> {
    EvidenceId::new(format!("ev-{event_id}"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub depth: usize,
    pub in_flight: usize,
    /// Unique event ids fully processed.
    pub processed_count: usize,
    pub duplicate_count: usize,
    /// Events parked in the dead-letter set.
    pub failed_count: usize,
    pub retry_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub event_id: String,
    pub sequence: u64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ProcessOutcome {
    NewlyProcessed { event_id: String, evidence_id: EvidenceId },
    Duplicate { event_id: String },
    Failed { event_id: String, attempts: u32, error: String, dead_lettered: bool },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Retries after the first delivery attempt before dead-lettering.
    pub max_retries: u32,
    /// Master seed the per-device signing keys derive from.
    #[serde(with = "hex_seed")]
    pub key_seed: Vec<u8>,
    pub faults: FaultPlan,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_retries: 3,
            key_seed: b"tamperproof-devices".to_vec(),
            faults: FaultPlan::none(),
        }
    }
}

mod hex_seed {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("media {locator} unreadable: {source}")]
    Unreadable {
        locator: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("injected fault at {0}")]
    Injected(Stage),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("queue journal: {0}")]
    Journal(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum JournalEntry {
    Enqueue { seq: u64, event: CaptureEvent },
    Attempt { seq: u64 },
    Done { seq: u64, event_id: String, duplicate: bool },
    Requeue { seq: u64 },
    Dead { seq: u64 },
}

#[derive(Debug, Default)]
struct QueueState {
    next_seq: u64,
    // ready deliveries in arrival order; a retried delivery keeps its slot
    ready: BTreeMap<u64, CaptureEvent>,
    in_flight: BTreeMap<u64, CaptureEvent>,
    busy_devices: BTreeSet<String>,
    done: BTreeSet<String>,
    dead: BTreeMap<String, CaptureEvent>,
    duplicates: usize,
    retries: usize,
    journal: Option<RecordFile>,
}

impl QueueState {
    fn log(&mut self, entry: &JournalEntry) -> Result<(), PipelineError> {
        if let Some(j) = &mut self.journal {
            let bytes = serde_json::to_vec(entry).map_err(|e| PipelineError::Journal(e.to_string()))?;
            j.append(&bytes).map_err(|e| PipelineError::Journal(e.to_string()))?;
        }
        Ok(())
    }

    fn replay(&mut self, entry: JournalEntry) {
        match entry {
            JournalEntry::Enqueue { seq, event } => {
                self.ready.insert(seq, event);
                self.next_seq = self.next_seq.max(seq + 1);
            }
            JournalEntry::Attempt { seq } => {
                if let Some(e) = self.ready.get_mut(&seq) {
                    e.delivery_attempts += 1;
                }
            }
            JournalEntry::Done { seq, event_id, duplicate } => {
                self.ready.remove(&seq);
                self.dead.remove(&event_id);
                if duplicate {
                    self.duplicates += 1;
                }
                self.done.insert(event_id);
            }
            JournalEntry::Requeue { .. } => self.retries += 1,
            JournalEntry::Dead { seq } => {
                if let Some(e) = self.ready.remove(&seq) {
                    self.dead.insert(e.event_id.clone(), e);
                }
            }
        }
    }

    fn stats(&self) -> QueueStats {
        QueueStats {
            depth: self.ready.len(),
            in_flight: self.in_flight.len(),
            processed_count: self.done.len(),
            duplicate_count: self.duplicates,
            failed_count: self.dead.len(),
            retry_count: self.retries,
        }
    }
}

/// The ingestion queue plus its consumer. Safe to share between workers.
pub struct Pipeline {
    store: Arc<ObjectStore>,
    ledger: Arc<DualLedger>,
    clock: Arc<dyn Clock>,
    max_retries: u32,
    key_seed: Vec<u8>,
    faults: FaultInjector,
    queue: Mutex<QueueState>,
    idle: Condvar,
}

impl Pipeline {
    pub fn new(store: Arc<ObjectStore>, ledger: Arc<DualLedger>, clock: Arc<dyn Clock>, config: PipelineConfig) -> Self {
        Self {
            store,
            ledger,
            clock,
            max_retries: config.max_retries,
            key_seed: config.key_seed,
            faults: FaultInjector::new(config.faults),
            queue: Mutex::new(QueueState::default()),
            idle: Condvar::new(),
        }
    }

    /// Like [`Pipeline::new`] but with the queue journaled to `path`.
    /// Deliveries that were in flight when the previous process stopped
    /// are delivered again.
    pub fn with_journal(
        store: Arc<ObjectStore>,
        ledger: Arc<DualLedger>,
        clock: Arc<dyn Clock>,
        config: PipelineConfig,
        path: impl AsRef<Path>,
    ) -> Result<Self, PipelineError> {
        let pipeline = Self::new(store, ledger, clock, config);
        let (file, records) = RecordFile::open(path.as_ref()).map_err(|e| PipelineError::Journal(e.to_string()))?;
        {
            let mut q = pipeline.queue.lock();
            for rec in records {
                let entry: JournalEntry =
                    serde_json::from_slice(&rec).map_err(|e| PipelineError::Journal(e.to_string()))?;
                q.replay(entry);
            }
            q.journal = Some(file);
        }
        Ok(pipeline)
    }

    pub fn store(&self) -> &Arc<ObjectStore> {
        &self.store
    }

    pub fn ledger(&self) -> &Arc<DualLedger> {
        &self.ledger
    }

    /// Builds an event stamped with the pipeline clock.
    pub fn stamp(&self, event_id: impl Into<String>, media: MediaLocator, meta: RawCapture) -> CaptureEvent {
        CaptureEvent::new(event_id, media, meta, self.clock.now())
    }

    /// Queues a delivery of `event`. Delivering the same event again is
    /// allowed; the consumer will report it as a duplicate.
    pub fn enqueue_capture(&self, mut event: CaptureEvent) -> Result<Ack, PipelineError> {
        event.evidence_id().map_err(|e| PipelineError::InvalidEvent(e.to_string()))?;
        if event.meta.device_id.is_empty() {
            return Err(PipelineError::InvalidEvent("device_id is empty".into()));
        }
        event.media.check_readable().map_err(|source| PipelineError::Unreadable {
            locator: event.media.describe(),
            source,
        })?;
        event.delivery_attempts = 0;
        let mut q = self.queue.lock();
        let seq = q.next_seq;
        q.log(&JournalEntry::Enqueue { seq, event: event.clone() })?;
        q.next_seq += 1;
        let ack = Ack {
            event_id: event.event_id.clone(),
            sequence: seq,
            depth: q.ready.len() + 1,
        };
        q.ready.insert(seq, event);
        Ok(ack)
    }

    pub fn stats(&self) -> QueueStats {
        self.queue.lock().stats()
    }

    pub fn dead_letters(&self) -> Vec<CaptureEvent> {
        self.queue.lock().dead.values().cloned().collect()
    }

    pub fn is_processed(&self, event_id: &str) -> bool {
        self.queue.lock().done.contains(event_id)
    }

    // Takes the oldest delivery whose device has nothing in flight.
    fn dequeue(&self) -> Result<Option<(u64, CaptureEvent)>, PipelineError> {
        let mut q = self.queue.lock();
        let Some(seq) = q
            .ready
            .iter()
            .find(|(_, e)| !q.busy_devices.contains(&e.meta.device_id))
            .map(|(s, _)| *s)
        else {
            return Ok(None);
        };
        q.log(&JournalEntry::Attempt { seq })?;
        let mut event = q.ready.remove(&seq).expect("seq just found");
        event.delivery_attempts += 1;
        q.busy_devices.insert(event.meta.device_id.clone());
        q.in_flight.insert(seq, event.clone());
        Ok(Some((seq, event)))
    }

    /// Processes the next dispatchable delivery, or returns `None` when no
    /// delivery can start right now.
    pub fn process_next(&self) -> Result<Option<ProcessOutcome>, PipelineError> {
        let Some((seq, event)) = self.dequeue()? else {
            return Ok(None);
        };
        let already = self.queue.lock().done.contains(&event.event_id);
        let result = if already { Ok(None) } else { self.apply(&event).map(Some) };

        let mut q = self.queue.lock();
        q.in_flight.remove(&seq);
        q.busy_devices.remove(&event.meta.device_id);
        let outcome = match result {
            Ok(evidence) => {
                q.log(&JournalEntry::Done {
                    seq,
                    event_id: event.event_id.clone(),
                    duplicate: evidence.is_none(),
                })?;
                q.dead.remove(&event.event_id);
                q.done.insert(event.event_id.clone());
                match evidence {
                    Some(evidence_id) => ProcessOutcome::NewlyProcessed {
                        event_id: event.event_id,
                        evidence_id,
                    },
                    None => {
                        q.duplicates += 1;
                        ProcessOutcome::Duplicate { event_id: event.event_id }
                    }
                }
            }
            Err(err) => {
                let dead_lettered = event.delivery_attempts > self.max_retries;
                if dead_lettered {
                    q.log(&JournalEntry::Dead { seq })?;
                    q.dead.insert(event.event_id.clone(), event.clone());
                } else {
                    q.log(&JournalEntry::Requeue { seq })?;
                    q.retries += 1;
                    q.ready.insert(seq, event.clone());
                }
                ProcessOutcome::Failed {
                    event_id: event.event_id,
                    attempts: event.delivery_attempts,
                    error: err.to_string(),
                    dead_lettered,
                }
            }
        };
        drop(q);
        self.idle.notify_all();
        Ok(Some(outcome))
    }

    fn fault(&self, stage: Stage, event: &CaptureEvent) -> Result<(), PipelineError> {
        if self.faults.trips(stage, &event.event_id, event.delivery_attempts) {
            Err(PipelineError::Injected(stage))
        } else {
            Ok(())
        }
    }

    // One idempotent unit: every write converges on the same state when
    // repeated, so a failure part-way through is repaired by the retry.
    fn apply(&self, event: &CaptureEvent) -> Result<EvidenceId, PipelineError> {
        let evidence_id = event.evidence_id()?;

        self.fault(Stage::Read, event)?;
        let media = event.media.read().map_err(|source| PipelineError::Unreadable {
            locator: event.media.describe(),
            source,
        })?;

        self.fault(Stage::Hash, event)?;
        let content_hash = hash_bytes(&media);
        let key = DeviceKey::derive(&self.key_seed, &event.meta.device_id);
        let meta = CaptureMetadata {
            evidence_id: evidence_id.clone(),
            captured_at: event.meta.captured_at,
            location: event.meta.location,
            device_id: event.meta.device_id.clone(),
            media_kind: event.meta.media_kind,
        };
        let manifest = manifest_for_hash(content_hash, meta, &key)?;

        self.fault(Stage::Store, event)?;
        self.store.store_evidence(&media, &manifest)?;

        self.fault(Stage::PrivateWrite, event)?;
        let mut annotations = vec![Annotation {
            key: "event_id".into(),
            value: event.event_id.clone(),
            written_at: event.enqueued_at,
        }];
        if event.meta.witness {
            annotations.push(Annotation {
                key: "witness".into(),
                value: "true".into(),
                written_at: event.enqueued_at,
            });
        }
        let anchor = AnchorRecord {
            evidence_id: evidence_id.clone(),
            content_hash,
            manifest_hash: manifest.manifest_hash(),
            submitted_at: event.enqueued_at,
        };
        self.ledger.private_mut().private_put(PrivateRecord {
            evidence_id: evidence_id.clone(),
            manifest,
            annotations,
            written_at: event.enqueued_at,
        })?;

        self.fault(Stage::PublicWrite, event)?;
        self.ledger.chain_mut().append_anchor(anchor)?;
        Ok(evidence_id)
    }

    /// Processes deliveries until the queue is empty.
    pub fn drain(&self) -> Result<QueueStats, PipelineError> {
        while self.process_next()?.is_some() {}
        Ok(self.stats())
    }

    /// Drains with `workers` concurrent consumers.
    pub fn drain_with(&self, parallelism: Parallelism, workers: usize) -> Result<QueueStats, PipelineError> {
        let first_error: Mutex<Option<PipelineError>> = Mutex::new(None);
        parallelism.run_workers(workers.max(1), |_| loop {
            if first_error.lock().is_some() {
                return;
            }
            match self.process_next() {
                Ok(Some(_)) => {}
                Ok(None) => {
                    let mut q = self.queue.lock();
                    if q.ready.is_empty() && q.in_flight.is_empty() {
                        return;
                    }
                    // everything ready belongs to a busy device
                    if q.in_flight.is_empty() {
                        continue;
                    }
                    self.idle.wait(&mut q);
                }
                Err(e) => {
                    first_error.lock().get_or_insert(e);
                    self.idle.notify_all();
                    return;
                }
            }
        });
        match first_error.into_inner() {
            Some(e) => Err(e),
            None => Ok(self.stats()),
        }
    }
}
