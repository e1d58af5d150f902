//! Append-only event log with periodic snapshots.
//!
//! On disk a store directory holds `events.jsonl` (one [`StoredEvent`] per
//! line) and `snapshot.json` (a [`ServiceState`] written via a temporary file
//! and an atomic rename). Opening a store loads the snapshot and replays the
//! events recorded after it.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::state::{ServiceState, StoredEvent};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

pub enum EventStore {
    /// Keeps the log in memory; used by tests and throwaway instances.
    Memory(Vec<StoredEvent>),
    File(FileStore),
}

impl EventStore {
    pub fn memory() -> Self {
        EventStore::Memory(Vec::new())
    }

    pub fn append(&mut self, ev: &StoredEvent) -> io::Result<()> {
        match self {
            EventStore::Memory(log) => {
                log.push(ev.clone());
                Ok(())
            }
            EventStore::File(f) => f.append(ev),
        }
    }

    /// Called after every applied event; snapshots every N events.
    pub fn after_apply(&mut self, state: &ServiceState) -> io::Result<()> {
        match self {
            EventStore::Memory(_) => Ok(()),
            EventStore::File(f) => {
                f.since_snapshot += 1;
                if f.snapshot_every > 0 && f.since_snapshot >= f.snapshot_every {
                    f.write_snapshot(state)?;
                }
                Ok(())
            }
        }
    }

    /// Forces buffered data and a fresh snapshot to disk.
    pub fn flush(&mut self, state: &ServiceState) -> io::Result<()> {
        match self {
            EventStore::Memory(_) => Ok(()),
            EventStore::File(f) => {
                f.file.sync_data()?;
                f.write_snapshot(state)
            }
        }
    }

    /// The in-memory log, if this is a memory store.
    pub fn memory_log(&self) -> Option<&[StoredEvent]> {
        match self {
            EventStore::Memory(log) => Some(log),
            EventStore::File(_) => None,
        }
    }
}

pub struct FileStore {
    dir: PathBuf,
    file: File,
    /// fsync after every append
    durable: bool,
    snapshot_every: u64,
    since_snapshot: u64,
}

impl FileStore {
    /// Opens (or creates) the store in `dir` and rebuilds the state.
    ///
    /// A trailing line without a newline that fails to parse is a torn write
    /// from a crash; it is cut off. Any other unreadable line, or a sequence
    /// number that does not increase, is reported as `InvalidData`.
    pub fn open(dir: &Path, snapshot_every: u64, durable: bool) -> io::Result<(FileStore, ServiceState)> {
        fs::create_dir_all(dir)?;
        let mut state = match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => serde_json::from_slice::<ServiceState>(&bytes)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("snapshot: {e}")))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => ServiceState::default(),
            Err(e) => return Err(e),
        };

        let path = dir.join(EVENTS_FILE);
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        let events = read_log(&mut file, &path)?;
        let mut last = 0u64;
        for ev in events {
            if ev.seq <= last {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("event log sequence is not increasing at seq {}", ev.seq),
                ));
            }
            last = ev.seq;
            if ev.seq > state.last_seq {
                state.apply(&ev);
            }
        }
        if last < state.last_seq {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("snapshot is at seq {} but the log ends at {last}", state.last_seq),
            ));
        }
        file.seek(SeekFrom::End(0))?;
        let store = FileStore { dir: dir.to_path_buf(), file, durable, snapshot_every, since_snapshot: 0 };
        Ok((store, state))
    }

    fn append(&mut self, ev: &StoredEvent) -> io::Result<()> {
        let mut line = serde_json::to_vec(ev).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        if self.durable {
            self.file.sync_data()?;
        }
        Ok(())
    }

    fn write_snapshot(&mut self, state: &ServiceState) -> io::Result<()> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let bytes = serde_json::to_vec(state).map_err(io::Error::other)?;
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        self.since_snapshot = 0;
        Ok(())
    }
}

/// Reads every complete event from the log, truncating a torn final line.
fn read_log(file: &mut File, path: &Path) -> io::Result<Vec<StoredEvent>> {
    file.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&*file);
    let mut events = Vec::new();
    let mut offset = 0u64;
    let mut line_no = 0usize;
    let mut buf = Vec::new();
    let mut torn_at = None;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with(b"\n");
        let text = String::from_utf8_lossy(&buf);
        if text.trim().is_empty() {
            offset += n as u64;
            continue;
        }
        match serde_json::from_str::<StoredEvent>(text.trim_end()) {
            Ok(ev) if complete => events.push(ev),
            Ok(_) | Err(_) if !complete => {
                torn_at = Some(offset);
                break;
            }
            Ok(_) => unreachable!(),
            Err(e) => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}: line {line_no}: {e}", path.display()),
                ))
            }
        }
        offset += n as u64;
    }
    drop(reader);
    if let Some(at) = torn_at {
        log::warn!("discarding a torn trailing record in {} at byte {at}", path.display());
        file.set_len(at)?;
    }
    Ok(events)
}
