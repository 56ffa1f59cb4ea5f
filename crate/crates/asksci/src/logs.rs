//! Append-only JSON-lines logs for questions and votes.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use asksci_core::domain::{Timestamp, VoteRecord};
use asksci_core::metrics::QuestionEvent;
use chrono::{DateTime, TimeZone, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One line of `questions.log`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionLogRecord {
    pub question_id: String,
    pub ts: DateTime<Utc>,
    pub client_id: String,
    pub question: String,
    pub answered: bool,
    pub answer_ids: Vec<String>,
    pub answer_scores: Vec<f64>,
    pub related_ids: Vec<String>,
    pub related_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

impl QuestionLogRecord {
    pub fn to_event(&self) -> QuestionEvent {
        QuestionEvent {
            question_id: self.question_id.clone(),
            timestamp: to_timestamp(self.ts),
            client_id: self.client_id.clone(),
            answer_count: self.answer_ids.len(),
            country: self.country.clone(),
        }
    }
}

/// One line of `votes.log`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteLogRecord {
    pub ts: DateTime<Utc>,
    pub question_id: String,
    pub position: u8,
    pub helpful: bool,
    pub client_id: String,
}

impl VoteLogRecord {
    pub fn from_vote(vote: &VoteRecord) -> Self {
        Self {
            ts: from_timestamp(vote.timestamp),
            question_id: vote.question_id.clone(),
            position: vote.position,
            helpful: vote.helpful,
            client_id: vote.client_id.clone(),
        }
    }

    pub fn to_vote(&self) -> VoteRecord {
        VoteRecord {
            question_id: self.question_id.clone(),
            position: self.position,
            helpful: self.helpful,
            timestamp: to_timestamp(self.ts),
            client_id: self.client_id.clone(),
        }
    }
}

pub fn to_timestamp(ts: DateTime<Utc>) -> Timestamp {
    Timestamp::from_millis(ts.timestamp_millis())
}

pub fn from_timestamp(ts: Timestamp) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ts.as_millis())
        .single()
        .unwrap_or(DateTime::<Utc>::MIN_UTC)
}

/// Current time truncated to whole milliseconds, the log resolution.
pub fn now_millis() -> DateTime<Utc> {
    from_timestamp(to_timestamp(Utc::now()))
}

/// A single-writer JSON-lines appender. Each record is written with one
/// `write_all` under the lock, so concurrent appends never interleave.
#[derive(Debug)]
pub struct JsonlLog<T> {
    path: PathBuf,
    file: Mutex<File>,
    _record: PhantomData<fn(&T)>,
}

impl<T: Serialize> JsonlLog<T> {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|source| LogError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LogError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
            _record: PhantomData,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &T) -> Result<(), LogError> {
        let mut line = serde_json::to_vec(record).map_err(|source| LogError::Malformed {
            path: self.path.clone(),
            line: 0,
            source,
        })?;
        line.push(b'\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(&line).map_err(|source| LogError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

/// Reads every record of a JSON-lines log. A missing file reads as empty.
pub fn read_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(LogError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            source,
        })?);
    }
    Ok(out)
}

/// The question log plus an in-memory map of answers returned per question,
/// used to validate votes.
#[derive(Debug)]
pub struct QuestionLog {
    log: JsonlLog<QuestionLogRecord>,
    answers: RwLock<HashMap<String, usize>>,
}

impl QuestionLog {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let answers = read_log::<QuestionLogRecord>(path)?
            .into_iter()
            .map(|r| (r.question_id, r.answer_ids.len()))
            .collect();
        Ok(Self {
            log: JsonlLog::open(path)?,
            answers: RwLock::new(answers),
        })
    }

    pub fn path(&self) -> &Path {
        self.log.path()
    }

    pub fn append(&self, record: &QuestionLogRecord) -> Result<(), LogError> {
        self.log.append(record)?;
        self.answers
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(record.question_id.clone(), record.answer_ids.len());
        Ok(())
    }

    /// Number of answers returned for a logged question.
    pub fn answer_count(&self, question_id: &str) -> Option<usize> {
        self.answers
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(question_id)
            .copied()
    }
}
