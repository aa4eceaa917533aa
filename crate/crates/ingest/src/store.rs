//! Append-only event store.
//!
//! File layout: a sequence of records, each
//! `u32 LE payload length | i64 LE receivedAt | u64 LE sourceAddrHash | payload`
//! where the payload is the canonical JSON of one event. A record cut short
//! by a crash is truncated away when the file is opened.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use perfpower_core::ClickEvent;
use serde::Serialize;

const HEADER_LEN: usize = 4 + 8 + 8;
const MAX_RECORD: u32 = 1 << 20;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt record at byte {offset}: {message}")]
    Corrupt { offset: u64, message: String },
    #[error("store unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StoredEvent {
    #[serde(flatten)]
    pub event: ClickEvent,
    pub received_at: i64,
    #[serde(skip)]
    pub source_addr_hash: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insert {
    Stored { received_at: i64 },
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StoreStats {
    pub count: usize,
    pub last_write_ms: Option<i64>,
}

/// Storage backend of the service. Writes must be durable (at least handed
/// to the OS) before `insert` returns.
pub trait EventStore: Send + Sync {
    /// Stores `event` unless its id is already present. `now_ms` is the
    /// receive time; implementations keep `receivedAt` non-decreasing.
    fn insert(&self, event: &ClickEvent, source_addr_hash: u64, now_ms: i64) -> Result<Insert, StoreError>;
    /// Events with `since <= receivedAt < until`, ordered by `receivedAt`.
    fn range(&self, since: i64, until: i64) -> Result<Vec<Arc<StoredEvent>>, StoreError>;
    fn stats(&self) -> Result<StoreStats, StoreError>;
    fn sync(&self) -> Result<(), StoreError>;
}

struct Writer {
    file: File,
    ids: HashSet<String>,
    last_received: i64,
    last_sync: Instant,
    dirty: bool,
}

pub struct FileStore {
    path: PathBuf,
    fsync_interval: Duration,
    writer: Mutex<Writer>,
    records: RwLock<Vec<Arc<StoredEvent>>>,
}

fn encode(record: &StoredEvent) -> Vec<u8> {
    let payload = record.event.to_json_line();
    let mut buf = Vec::with_capacity(HEADER_LEN + payload.len());
    buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    buf.extend_from_slice(&record.received_at.to_le_bytes());
    buf.extend_from_slice(&record.source_addr_hash.to_le_bytes());
    buf.extend_from_slice(payload.as_bytes());
    buf
}

/// Reads as many whole records as possible. Returns them with the byte
/// offset just past the last whole record.
fn decode_all(reader: &mut impl Read) -> Result<(Vec<StoredEvent>, u64), StoreError> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    let mut header = [0u8; HEADER_LEN];
    loop {
        match read_full(reader, &mut header)? {
            0 => break,
            n if n < HEADER_LEN => break,
            _ => {}
        }
        let len = u32::from_le_bytes(header[0..4].try_into().unwrap());
        if len > MAX_RECORD {
            return Err(StoreError::Corrupt {
                offset,
                message: format!("record length {len} too large"),
            });
        }
        let received_at = i64::from_le_bytes(header[4..12].try_into().unwrap());
        let source_addr_hash = u64::from_le_bytes(header[12..20].try_into().unwrap());
        let mut payload = vec![0u8; len as usize];
        if read_full(reader, &mut payload)? < payload.len() {
            break;
        }
        let event: ClickEvent = serde_json::from_slice(&payload).map_err(|e| StoreError::Corrupt {
            offset,
            message: e.to_string(),
        })?;
        out.push(StoredEvent {
            event,
            received_at,
            source_addr_hash,
        });
        offset += (HEADER_LEN + payload.len()) as u64;
    }
    Ok((out, offset))
}

fn read_full(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl FileStore {
    /// Opens or creates the store at `path`, replaying existing records.
    pub fn open(path: impl AsRef<Path>, fsync_interval: Duration) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let (records, good_len) = decode_all(&mut BufReader::new(&mut file))?;
        if file.metadata()?.len() > good_len {
            tracing::warn!(path = %path.display(), good_len, "truncating torn record at end of store");
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;

        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            if !ids.insert(r.event.event_id.clone()) {
                return Err(StoreError::Corrupt {
                    offset: 0,
                    message: format!("event id {} stored twice", r.event.event_id),
                });
            }
        }
        let last_received = records.last().map_or(i64::MIN, |r| r.received_at);
        Ok(FileStore {
            path,
            fsync_interval,
            writer: Mutex::new(Writer {
                file,
                ids,
                last_received,
                last_sync: Instant::now(),
                dirty: false,
            }),
            records: RwLock::new(records.into_iter().map(Arc::new).collect()),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn lock_writer(&self) -> Result<std::sync::MutexGuard<'_, Writer>, StoreError> {
        self.writer
            .lock()
            .map_err(|_| StoreError::Unavailable("writer lock poisoned".into()))
    }
}

impl EventStore for FileStore {
    fn insert(&self, event: &ClickEvent, source_addr_hash: u64, now_ms: i64) -> Result<Insert, StoreError> {
        let mut w = self.lock_writer()?;
        if w.ids.contains(&event.event_id) {
            return Ok(Insert::Duplicate);
        }
        let received_at = now_ms.max(w.last_received);
        let record = StoredEvent {
            event: event.clone(),
            received_at,
            source_addr_hash,
        };
        w.file.write_all(&encode(&record))?;
        w.dirty = true;
        if w.last_sync.elapsed() >= self.fsync_interval {
            w.file.sync_data()?;
            w.last_sync = Instant::now();
            w.dirty = false;
        }
        w.ids.insert(event.event_id.clone());
        w.last_received = received_at;
        // published while the writer lock is held, so readers see records in
        // file order
        self.records
            .write()
            .map_err(|_| StoreError::Unavailable("index lock poisoned".into()))?
            .push(Arc::new(record));
        Ok(Insert::Stored { received_at })
    }

    fn range(&self, since: i64, until: i64) -> Result<Vec<Arc<StoredEvent>>, StoreError> {
        let records = self
            .records
            .read()
            .map_err(|_| StoreError::Unavailable("index lock poisoned".into()))?;
        let lo = records.partition_point(|r| r.received_at < since);
        let hi = records.partition_point(|r| r.received_at < until).max(lo);
        Ok(records[lo..hi].to_vec())
    }

    fn stats(&self) -> Result<StoreStats, StoreError> {
        let records = self
            .records
            .read()
            .map_err(|_| StoreError::Unavailable("index lock poisoned".into()))?;
        Ok(StoreStats {
            count: records.len(),
            last_write_ms: records.last().map(|r| r.received_at),
        })
    }

    fn sync(&self) -> Result<(), StoreError> {
        let mut w = self.lock_writer()?;
        if w.dirty {
            w.file.sync_data()?;
            w.dirty = false;
        }
        w.last_sync = Instant::now();
        Ok(())
    }
}
