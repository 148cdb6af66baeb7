//! Append-only JSONL event logs, one file per session.
//!
//! Each append writes whole lines in a single call, so a crash leaves at
//! most one partial trailing line; replay drops it and yields the prefix.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use copilot_core::pipeline::{EventSink, PipelineError, SessionEvent, SessionState};
use copilot_core::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {reason}")]
    Corrupt { path: String, line: usize, reason: String },
    #[error("invalid session id {0:?}")]
    BadSessionId(String),
}

/// Session ids become file names, so only `[A-Za-z0-9_-]` is accepted.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, Clone)]
pub struct JsonlEventLog {
    dir: PathBuf,
}

impl JsonlEventLog {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, PersistError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| PersistError::Io { path: dir.display().to_string(), source })?;
        Ok(Self { dir })
    }

    pub fn path_for(&self, session_id: &str) -> Result<PathBuf, PersistError> {
        if !valid_session_id(session_id) {
            return Err(PersistError::BadSessionId(session_id.to_string()));
        }
        Ok(self.dir.join(format!("{session_id}.jsonl")))
    }

    pub fn append_events<F: Scalar>(&self, session_id: &str, events: &[SessionEvent<F>]) -> Result<(), PersistError> {
        let path = self.path_for(session_id)?;
        let io = |source| PersistError::Io { path: path.display().to_string(), source };
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).expect("events serialize");
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        f.write_all(&buf).map_err(io)?;
        f.sync_data().map_err(io)
    }

    /// Every session in the directory, sorted by id.
    pub fn load_all<F: Scalar>(&self) -> Result<Vec<SessionState<F>>, PersistError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|source| PersistError::Io { path: self.dir.display().to_string(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for p in paths {
            if let Some(state) = replay_file(&p)? {
                out.push(state);
            }
        }
        Ok(out)
    }
}

impl<F: Scalar> EventSink<F> for JsonlEventLog {
    fn append(&self, session_id: &str, events: &[SessionEvent<F>]) -> Result<(), PipelineError> {
        self.append_events(session_id, events).map_err(|e| PipelineError::Persistence(e.to_string()))
    }
}

/// Parses a log; an unparseable final line is treated as a torn write.
pub fn read_events<F: Scalar>(path: &Path) -> Result<Vec<SessionEvent<F>>, PersistError> {
    let io = |source| PersistError::Io { path: path.display().to_string(), source };
    // Bytes, not lines of text: a torn write may split a UTF-8 sequence.
    let mut reader = BufReader::new(File::open(path).map_err(io)?);
    let mut lines = Vec::new();
    loop {
        let mut line = Vec::new();
        if reader.read_until(b'\n', &mut line).map_err(io)? == 0 {
            break;
        }
        lines.push(line);
    }
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim_ascii().is_empty() {
            continue;
        }
        match serde_json::from_slice(line) {
            Ok(e) => events.push(e),
            Err(_) if i + 1 == lines.len() => {
                log::warn!("{}: dropping torn final line", path.display());
            }
            Err(e) => {
                return Err(PersistError::Corrupt { path: path.display().to_string(), line: i + 1, reason: e.to_string() });
            }
        }
    }
    Ok(events)
}

pub fn replay_file<F: Scalar>(path: &Path) -> Result<Option<SessionState<F>>, PersistError> {
    let events = read_events::<F>(path)?;
    SessionState::replay(&events).map_err(|e| PersistError::Corrupt { path: path.display().to_string(), line: 0, reason: e.to_string() })
}
