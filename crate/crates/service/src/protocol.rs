//! JSON messages exchanged on `/ws`, one per WebSocket text frame.
//!
//! Server to client:
//!
//! ```json
//! {"type":"snapshot","proto_version":1,"seq":12,"t":2.4,"step":24,"finished":false,
//!  "basestation":"base","robots":[...],"casualties":[...],"links":[...],"plugins":[...]}
//! {"type":"ack","proto_version":1,"command_id":"c7","status":"accepted","step":31}
//! {"type":"ack","proto_version":1,"command_id":"c8","status":"rejected","reason":"not_in_position"}
//! ```
//!
//! Client to server:
//!
//! ```json
//! {"type":"command","command_id":"c7","kind":"dispatch","robot":"ugv1","casualty":3}
//! {"type":"command","command_id":"c8","kind":"trigger","robot":"ugv1"}
//! {"type":"command","command_id":"c9","kind":"toggle_plugin","plugin":"lwir","enabled":false}
//! ```
//!
//! `proto_version` may be sent by the client; anything other than 1 is
//! rejected. Every snapshot is complete, so a client needs only the latest.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use triage_core::sim::{Command, Snapshot};

pub const PROTO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub proto_version: u32,
    /// Counts snapshots published by this gateway, from 0.
    pub seq: u64,
    #[serde(flatten)]
    pub snapshot: Snapshot,
}

impl SnapshotMessage {
    pub fn new(seq: u64, snapshot: Snapshot) -> SnapshotMessage {
        SnapshotMessage { kind: "snapshot".into(), proto_version: PROTO_VERSION, seq, snapshot }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    #[serde(rename = "type")]
    pub kind: String,
    pub proto_version: u32,
    pub command_id: Option<String>,
    pub status: AckStatus,
    /// Why a command was rejected: a simulation reason such as
    /// `not_in_position`, or one of `malformed`, `duplicate_command_id`,
    /// `unsupported_proto_version`, `finished`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    /// Step boundary at which an accepted command enters the simulation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub step: Option<u64>,
}

impl Ack {
    pub fn accepted(command_id: String, step: u64) -> Ack {
        Ack {
            kind: "ack".into(),
            proto_version: PROTO_VERSION,
            command_id: Some(command_id),
            status: AckStatus::Accepted,
            reason: None,
            step: Some(step),
        }
    }

    pub fn rejected(command_id: Option<String>, reason: &str) -> Ack {
        Ack {
            kind: "ack".into(),
            proto_version: PROTO_VERSION,
            command_id,
            status: AckStatus::Rejected,
            reason: Some(reason.to_string()),
            step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub command_id: String,
    #[serde(flatten)]
    pub command: Command,
}

/// Parses a client frame. On failure returns the command id, if one could
/// be read, and the rejection reason.
pub fn parse_client_message(text: &str) -> Result<CommandMessage, (Option<String>, &'static str)> {
    let v: Value = serde_json::from_str(text).map_err(|_| (None, "malformed"))?;
    let id = v.get("command_id").and_then(Value::as_str).map(str::to_string);
    let Value::Object(mut obj) = v else { return Err((None, "malformed")) };
    if obj.remove("type") != Some(Value::String("command".into())) {
        return Err((id, "malformed"));
    }
    match obj.remove("proto_version") {
        None => {}
        Some(p) if p.as_u64() == Some(PROTO_VERSION as u64) => {}
        Some(_) => return Err((id, "unsupported_proto_version")),
    }
    if id.as_deref().is_none_or(str::is_empty) {
        return Err((id, "malformed"));
    }
    serde_json::from_value(Value::Object(obj)).map_err(|_| (id, "malformed"))
}
