//! Console wire messages. Each WebSocket text frame carries exactly one JSON
//! object tagged by `type`. Client frames carry an `id` that the reply echoes
//! as `ref`.

use serde::{Deserialize, Serialize};

use crate::bt::{NodeStatus, TreeView};
use crate::guidance::{FormationSpec, FormationTarget};
use crate::intent::{IntentCommand, IntentError};
use crate::metrics::EpisodeMetrics;
use crate::sonar::{SonarConfig, SonarScan, VisibilityReport};
use crate::world::{LeaderMode, Pose2D, VehicleState, Waypoint, WorldConfig};

pub type ClientId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlAction {
    Pause,
    Resume,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ClientMessage {
    Teleop {
        surge_cmd: f64,
        yaw_rate_cmd: f64,
    },
    SetMode {
        mode: LeaderMode,
    },
    NlCommand {
        text: String,
    },
    /// `forced: null` clears the override.
    BtOverride {
        node: u32,
        #[serde(default)]
        forced: Option<NodeStatus>,
    },
    SetFormation {
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default)]
        offset: Option<f64>,
    },
    Control {
        action: ControlAction,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientFrame {
    pub id: u64,
    #[serde(flatten)]
    pub msg: ClientMessage,
}

impl ClientFrame {
    pub fn new(id: u64, msg: ClientMessage) -> Self {
        Self { id, msg }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    BadFrame,
    WrongMode,
    NotController,
    NoSuchNode,
    NoMission,
    InvalidArgument,
    MissionError,
    UnknownVerb,
    UnknownRegion,
    MissingArgument,
    LlmUnavailable,
    SchemaViolation,
}

impl From<IntentError> for ErrorCode {
    fn from(e: IntentError) -> Self {
        match e {
            IntentError::UnknownVerb => ErrorCode::UnknownVerb,
            IntentError::UnknownRegion => ErrorCode::UnknownRegion,
            IntentError::MissingArgument => ErrorCode::MissingArgument,
            IntentError::LlmUnavailable => ErrorCode::LlmUnavailable,
            IntentError::SchemaViolation => ErrorCode::SchemaViolation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissionState {
    Running,
    Held,
    Complete,
    Aborted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionView {
    pub name: String,
    pub state: MissionState,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastKnown {
    pub pose: Pose2D,
    /// Seconds since the pose was sent.
    pub age: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Session clock; strictly increasing across resets.
    pub time: f64,
    pub episode: u32,
    pub episode_time: f64,
    pub tick: u64,
    pub paused: bool,
    pub leader: VehicleState,
    pub leader_mode: LeaderMode,
    pub follower: VehicleState,
    pub last_known: Option<LastKnown>,
    pub target: FormationTarget,
    pub formation: FormationSpec,
    pub sonar: SonarScan,
    pub poi: VisibilityReport,
    pub mission: Option<MissionView>,
    pub bt: Option<TreeView>,
    pub metrics: Option<EpisodeMetrics>,
    pub collided: bool,
}

/// Sent once on connect so the console can draw the static scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Welcome {
    pub client: ClientId,
    pub scene: String,
    pub world: WorldConfig,
    pub sonar: SonarConfig,
    pub snapshot_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    Welcome(Welcome),
    Snapshot(Box<Snapshot>),
    Ack {
        #[serde(rename = "ref")]
        reference: u64,
        ok: bool,
        /// The parsed command, for NlCommand frames.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        command: Option<IntentCommand>,
    },
    Err {
        /// Absent only when a malformed frame had no readable id.
        #[serde(rename = "ref")]
        reference: Option<u64>,
        code: ErrorCode,
        detail: String,
    },
    Summary {
        text: String,
    },
}

impl ServerMessage {
    pub fn ack(reference: u64) -> Self {
        ServerMessage::Ack {
            reference,
            ok: true,
            command: None,
        }
    }

    pub fn err(reference: Option<u64>, code: ErrorCode, detail: impl Into<String>) -> Self {
        ServerMessage::Err {
            reference,
            code,
            detail: detail.into(),
        }
    }

    /// The client frame id this message answers, if it is a reply.
    pub fn reference(&self) -> Option<u64> {
        match self {
            ServerMessage::Ack { reference, .. } => Some(*reference),
            ServerMessage::Err { reference, .. } => *reference,
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

/// Parses one client frame. On failure returns the frame id when one could be
/// read, so the error can still reference it.
pub fn parse_frame(text: &str) -> Result<ClientFrame, (Option<u64>, String)> {
    match serde_json::from_str::<ClientFrame>(text) {
        Ok(f) => Ok(f),
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(text)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_u64()));
            Err((id, e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn teleop_frame_shape() {
        let f = parse_frame(r#"{"id":7,"type":"Teleop","surge_cmd":1.0,"yaw_rate_cmd":-0.5}"#).unwrap();
        assert_eq!(
            f,
            ClientFrame::new(
                7,
                ClientMessage::Teleop {
                    surge_cmd: 1.0,
                    yaw_rate_cmd: -0.5
                }
            )
        );
        let back: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(back["type"], "Teleop");
        assert_eq!(back["id"], 7);
    }

    #[test]
    fn override_clear_and_optional_fields() {
        let f = parse_frame(r#"{"id":1,"type":"BtOverride","node":3}"#).unwrap();
        assert_eq!(f.msg, ClientMessage::BtOverride { node: 3, forced: None });
        let f = parse_frame(r#"{"id":2,"type":"SetFormation","radius":4}"#).unwrap();
        assert_eq!(
            f.msg,
            ClientMessage::SetFormation {
                radius: Some(4.0),
                offset: None
            }
        );
        let f = parse_frame(r#"{"id":3,"type":"SetMode","mode":"Manual"}"#).unwrap();
        assert_eq!(f.msg, ClientMessage::SetMode { mode: LeaderMode::Manual });
    }

    #[test]
    fn bad_frames_keep_id_when_readable() {
        assert_eq!(parse_frame(r#"{"id":9,"type":"Dance"}"#).unwrap_err().0, Some(9));
        assert_eq!(parse_frame("not json").unwrap_err().0, None);
        assert_eq!(parse_frame(r#"{"type":"Teleop","surge_cmd":1,"yaw_rate_cmd":0}"#).unwrap_err().0, None);
    }

    #[test]
    fn reply_shapes() {
        let v: serde_json::Value = serde_json::from_str(&ServerMessage::ack(4).to_json()).unwrap();
        assert_eq!(v, serde_json::json!({"type": "Ack", "ref": 4, "ok": true}));
        let e = ServerMessage::err(Some(5), ErrorCode::WrongMode, "leader is Autonomous");
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["type"], "Err");
        assert_eq!(v["code"], "WrongMode");
        assert_eq!(v["ref"], 5);
        let back: ServerMessage = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(back, e);
    }
}
