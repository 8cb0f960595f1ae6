//! Newline-delimited JSON record files.
//!
//! Every line is one complete record. Writers append whole lines and flush
//! after each, so an interrupted run leaves at most one truncated trailing
//! line, which readers skip.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::Transcript;
use crate::materials::OptionId;
use crate::protocol::TrialSpec;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, RecordError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    /// Free-choice trial stopped on a neutral choice.
    Invalid,
    Failed,
}

/// One executed trial as persisted by the runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: TrialSpec,
    pub status: TrialStatus,
    pub transcript: Transcript,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_option: Option<OptionId>,
}

impl RunRecord {
    pub fn new(
        spec: TrialSpec,
        status: TrialStatus,
        transcript: Transcript,
        error: Option<String>,
        chosen_option: Option<OptionId>,
    ) -> Self {
        RunRecord {
            spec,
            status,
            transcript,
            error,
            chosen_option,
        }
    }

    pub fn trial_id(&self) -> &str {
        &self.spec.trial_id
    }

    /// The record without wall-clock data, for reproducibility checks.
    pub fn content(&self) -> RunRecord {
        let mut r = self.clone();
        r.transcript.timestamps_ms.clear();
        r
    }

    /// Hex SHA-256 of the timestamp-free serialization.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(&self.content()).expect("records serialize");
        crate::materials::sha256_hex(&json)
    }
}

/// Appends serialized values, one line each, flushing after every line.
pub struct JsonlWriter {
    path: PathBuf,
    file: File,
}

impl JsonlWriter {
    pub fn append(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| io_err(dir, source))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| io_err(path, source))?;
        Ok(JsonlWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn create(path: &Path) -> Result<Self> {
        if path.exists() {
            std::fs::remove_file(path).map_err(|source| io_err(path, source))?;
        }
        Self::append(path)
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let mut line = serde_json::to_vec(value).expect("records serialize");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|()| self.file.flush())
            .map_err(|source| io_err(&self.path, source))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> RecordError {
    RecordError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads every line of a JSONL file. A malformed final line without a
/// trailing newline is treated as an interrupted write and skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read(path).map_err(|source| io_err(path, source))?;
    let complete = text.last().is_none_or(|&b| b == b'\n');
    let lines: Vec<&[u8]> = text.split(|&b| b == b'\n').collect();
    let last = lines.len() - 1;
    let mut out = Vec::new();
    for (i, line) in lines.into_iter().enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice(line) {
            Ok(v) => out.push(v),
            Err(_) if i == last && !complete => {
                tracing::warn!(path = %path.display(), line = i + 1, "skipping truncated final record");
            }
            Err(source) => {
                return Err(RecordError::Json {
                    path: path.to_path_buf(),
                    line: i + 1,
                    source,
                })
            }
        }
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    read_jsonl(path)
}

/// Keeps the last record written for each trial.
pub fn latest_by_trial(records: Vec<RunRecord>) -> HashMap<String, RunRecord> {
    let mut map = HashMap::new();
    for r in records {
        map.insert(r.spec.trial_id.clone(), r);
    }
    map
}
