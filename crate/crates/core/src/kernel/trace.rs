//! NDJSON trace format.
//!
//! One JSON object per line, tagged by `record`: a `header`, then for every
//! tick its `msg` records in bus order followed by one `state` record, then a
//! single `end`. Keys appear in struct declaration order and maps are sorted,
//! so equal runs give equal bytes. The digest is the SHA-256 of the bytes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bus::{Payload, PayloadKind, Phase};
use crate::scenario::RunManifest;
use crate::world::{ActorState, Control};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDecl {
    pub topic: String,
    pub payload: PayloadKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub manifest: RunManifest,
    /// Configuration of the registered channels, opaque to the kernel.
    pub channels: serde_json::Value,
    pub topics: Vec<TopicDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsgRecord {
    pub tick: u64,
    pub phase: Phase,
    pub publisher: String,
    pub topic: String,
    pub payload: Arc<Payload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedCommand {
    pub channel_id: String,
    /// Tick the command was issued at.
    pub issued: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub tick: u64,
    pub time: f64,
    /// Winning command, `None` when coasting.
    pub applied: Option<AppliedCommand>,
    pub control: Control,
    /// Ego state after this tick's step.
    pub ego: ActorState,
    /// Actors clamped back inside the world bounds this tick.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contained: Vec<String>,
    /// Indices into the scenario's fault list.
    pub active_faults: Vec<usize>,
    /// Distance from the ego to the nearest other body in this tick's scene.
    pub clearance: Option<f64>,
    pub collision: bool,
    pub goal_reached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    MaxTime,
    Goal,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub ticks: u64,
    pub reason: EndReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Msg(MsgRecord),
    State(StateRecord),
    End(EndRecord),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace has no header")]
    MissingHeader,
    #[error("trace is truncated after tick {last_tick:?}")]
    Truncated { last_tick: Option<u64> },
}

/// A serialized trace held in memory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceLog {
    bytes: Vec<u8>,
}

impl TraceLog {
    pub fn new() -> Self {
        TraceLog::default()
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        TraceLog { bytes }
    }

    pub fn push(&mut self, rec: &TraceRecord) {
        serde_json::to_writer(&mut self.bytes, rec).expect("trace records serialize");
        self.bytes.push(b'\n');
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn digest(&self) -> String {
        digest(&self.bytes)
    }

    pub fn records(&self) -> Result<Vec<TraceRecord>, TraceError> {
        parse_records(&self.bytes)
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses every line. Does not check that the trace is complete.
pub fn parse_records(bytes: &[u8]) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let rec = serde_json::from_slice(line).map_err(|e| TraceError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// A parsed trace split into its parts.
#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub header: TraceHeader,
    pub messages: Vec<MsgRecord>,
    pub states: Vec<StateRecord>,
    pub end: EndRecord,
}

impl ParsedTrace {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TraceError> {
        let mut header = None;
        let mut messages = Vec::new();
        let mut states: Vec<StateRecord> = Vec::new();
        let mut end = None;
        for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let rec = serde_json::from_slice(line).map_err(|e| {
                if i == 0 || header.is_none() {
                    TraceError::Malformed {
                        line: i + 1,
                        message: e.to_string(),
                    }
                } else {
                    TraceError::Truncated {
                        last_tick: states.last().map(|s| s.tick),
                    }
                }
            })?;
            match rec {
                TraceRecord::Header(h) => header = Some(h),
                TraceRecord::Msg(m) => messages.push(m),
                TraceRecord::State(s) => states.push(s),
                TraceRecord::End(e) => end = Some(e),
            }
        }
        let header = header.ok_or(TraceError::MissingHeader)?;
        let end = end.ok_or(TraceError::Truncated {
            last_tick: states.last().map(|s| s.tick),
        })?;
        Ok(ParsedTrace {
            header,
            messages,
            states,
            end,
        })
    }
}
