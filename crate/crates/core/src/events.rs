//! Append-only run log.
//!
//! One JSON object per line, each carrying a contiguous `seq` starting at 0.
//! Fields whose names end in `_ms`, and `wall_seconds`, hold wall-clock
//! timing; [`determinism_digest`] strips them, along with the
//! `max_parallel` setting, so that two runs of the same study compare equal
//! regardless of scheduling.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bandit::ArmStats;
use crate::config::StudyConfig;
use crate::executor::MetricsRecord;
use crate::graph::{NodeKind, NodeStatus};
use crate::model::{ArmId, CandidateId, CandidateSpec};
use crate::workspace::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    StudyStart {
        config: Box<StudyConfig>,
        config_digest: String,
        baseline_score: f64,
        baseline_source: String,
        prior_weights: BTreeMap<ArmId, f64>,
        /// Number of enumerated candidates.
        candidate_pool: usize,
    },
    RoundStart {
        round: u32,
        beta: f64,
        arm: ArmId,
        k: usize,
        total_trials: u64,
    },
    ArmExhausted {
        round: u32,
        arm: ArmId,
    },
    Generation {
        round: u32,
        arm: ArmId,
        candidates: Vec<CandidateSpec>,
        /// Knowledge entries retrieved for the arm, best first.
        retrieved: Vec<String>,
    },
    BudgetDrop {
        round: u32,
        dropped: Vec<CandidateId>,
        remaining_budget: u64,
    },
    Node {
        round: u32,
        node_id: String,
        kind: NodeKind,
        status: NodeStatus,
        start_ms: u64,
        end_ms: u64,
    },
    Execution {
        round: u32,
        candidate_id: CandidateId,
        workspace_id: Option<String>,
        metrics: MetricsRecord,
        start_ms: u64,
        end_ms: u64,
    },
    Reward {
        round: u32,
        candidate_id: CandidateId,
        arm: ArmId,
        reward: f64,
        cost: f64,
    },
    BanditUpdate {
        round: u32,
        arm: ArmId,
        stats: ArmStats,
        total_trials: u64,
    },
    RoundEnd {
        round: u32,
        arm: ArmId,
        /// Successful candidates by |f(C) - f(x)| descending.
        ranking: Vec<(CandidateId, f64)>,
        successes: u64,
        failures: u64,
        attempts_so_far: u64,
    },
    StudyEnd {
        rounds_completed: u32,
        attempts: u64,
        stop_reason: String,
        report_digest: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot write run log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: not a valid log record: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("sequence gap: expected seq {expected}, found {found}")]
    Gap { expected: u64, found: u64 },
    #[error("log is truncated: {0}")]
    Truncated(&'static str),
}

/// Event sink used by the orchestrator. Lines are kept in memory and, when
/// backed by a file, written and flushed as they are appended.
#[derive(Debug, Default)]
pub struct EventLog {
    lines: Vec<LogLine>,
    file: Option<(PathBuf, File)>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self, LogError> {
        let io_err = |source| LogError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(io_err)?;
        Ok(Self {
            lines: Vec::new(),
            file: Some((path.to_path_buf(), file)),
        })
    }

    pub fn append(&mut self, event: Event) -> Result<(), LogError> {
        let line = LogLine {
            seq: self.lines.len() as u64,
            event,
        };
        if let Some((path, file)) = &mut self.file {
            let mut text = serde_json::to_string(&line).expect("event serializes");
            text.push('\n');
            file.write_all(text.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| LogError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        self.lines.push(line);
        Ok(())
    }

    pub fn lines(&self) -> &[LogLine] {
        &self.lines
    }

    pub fn into_lines(self) -> Vec<LogLine> {
        self.lines
    }
}

/// Parses a log, checking that `seq` is contiguous from 0.
pub fn parse_log(text: &str) -> Result<Vec<LogLine>, LogError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: LogLine = serde_json::from_str(raw).map_err(|e| LogError::Corrupt {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let expected = out.len() as u64;
        if line.seq != expected {
            return Err(LogError::Gap {
                expected,
                found: line.seq,
            });
        }
        out.push(line);
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<LogLine>, LogError> {
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.push_str(&line);
        text.push('\n');
    }
    parse_log(&text)
}

fn is_timing_key(k: &str) -> bool {
    k.ends_with("_ms") || k == "wall_seconds"
}

fn is_volatile_key(k: &str) -> bool {
    is_timing_key(k) || k == "max_parallel"
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !is_volatile_key(k));
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// Digest of the log with timing fields and `max_parallel` removed.
pub fn determinism_digest(lines: &[LogLine]) -> String {
    let mut text = String::new();
    for l in lines {
        let mut v = serde_json::to_value(l).expect("event serializes");
        strip_timing(&mut v);
        // serde_json maps are ordered, so this is key-sorted and lossless
        text.push_str(&v.to_string());
        text.push('\n');
    }
    sha256_hex(text.as_bytes())
}
