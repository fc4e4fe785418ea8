//! Natural-language command layer.
//!
//! [`parse_grammar`] is the authority of record. The optional LLM client can
//! only ever yield commands that pass the same schema validation, and falls
//! back to the grammar on any failure.

mod feedback;
mod grammar;
mod ground;
mod llm;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::world::Region;

pub use feedback::{numbers_in, summarize_feedback, template_summary, EventLog, LoggedEvent};
pub use grammar::parse_grammar;
pub use ground::{command_to_mission, MissionDirective};
pub use llm::{
    extract_reply_object, llm_parse, parse, LlmConfig, Transport, TransportError, UreqTransport,
    COMMAND_SCHEMA, PREAMBLE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Inspect,
    GoTo,
    Report,
    Abort,
    Hold,
    SetFormation,
}

pub const PARAM_RADIUS: &str = "radius";
pub const PARAM_OFFSET: &str = "offset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentCommand {
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec2>,
    /// `radius` in meters, `offset` in radians.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl IntentCommand {
    pub fn new(action: Action) -> Self {
        Self {
            action,
            region: None,
            point: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = Some(region);
        self
    }

    pub fn with_point(mut self, point: Vec2) -> Self {
        self.point = Some(point);
        self
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn radius(&self) -> Option<f64> {
        self.params.get(PARAM_RADIUS).copied()
    }

    pub fn offset(&self) -> Option<f64> {
        self.params.get(PARAM_OFFSET).copied()
    }

    /// Checks the per-action shape rules.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(p) = self.point {
            if !p.is_finite() {
                return Err("point must be finite".into());
            }
        }
        for (k, v) in &self.params {
            if k != PARAM_RADIUS && k != PARAM_OFFSET {
                return Err(format!("unknown parameter `{k}`"));
            }
            if !v.is_finite() {
                return Err(format!("parameter `{k}` must be finite"));
            }
        }
        let has_target = self.region.is_some() || self.point.is_some();
        match self.action {
            Action::Inspect | Action::Report | Action::GoTo if !has_target => {
                Err(format!("{:?} needs a region or a point", self.action))
            }
            Action::Abort | Action::Hold if has_target || !self.params.is_empty() => {
                Err(format!("{:?} takes no arguments", self.action))
            }
            Action::SetFormation => {
                if self.region.is_some() || self.point.is_some() {
                    return Err("SetFormation takes only radius/offset".into());
                }
                if self.params.is_empty() {
                    return Err("SetFormation needs radius and/or offset".into());
                }
                match self.radius() {
                    Some(r) if r <= 0.0 => Err("radius must be > 0".into()),
                    _ => Ok(()),
                }
            }
            Action::Inspect | Action::Report | Action::GoTo if !self.params.is_empty() => {
                Err(format!("{:?} takes no radius/offset", self.action))
            }
            _ => Ok(()),
        }
    }

    /// Canonical one-line JSON form used by the golden corpus and the CLI.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("command serializes")
    }
}

impl fmt::Display for IntentCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.action)?;
        let mut args = Vec::new();
        if let Some(r) = self.region {
            args.push(format!("region={r:?}"));
        }
        if let Some(p) = self.point {
            args.push(format!("point=({}, {})", p.x, p.y));
        }
        for (k, v) in &self.params {
            args.push(format!("{k}={v}"));
        }
        if !args.is_empty() {
            write!(f, "({})", args.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Grammar,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntentError {
    UnknownVerb,
    UnknownRegion,
    MissingArgument,
    LlmUnavailable,
    SchemaViolation,
}

impl fmt::Display for IntentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParseResult {
    Command {
        command: IntentCommand,
        source: Source,
        /// Set when an LLM attempt failed and the grammar answered instead.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Error {
        error: IntentError,
        detail: String,
    },
}

impl ParseResult {
    pub fn command(&self) -> Option<&IntentCommand> {
        match self {
            ParseResult::Command { command, .. } => Some(command),
            ParseResult::Error { .. } => None,
        }
    }

    pub fn error(&self) -> Option<IntentError> {
        match self {
            ParseResult::Error { error, .. } => Some(*error),
            ParseResult::Command { .. } => None,
        }
    }

    pub fn source(&self) -> Option<Source> {
        match self {
            ParseResult::Command { source, .. } => Some(*source),
            ParseResult::Error { .. } => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("parse result serializes")
    }

    fn err(error: IntentError, detail: impl Into<String>) -> Self {
        ParseResult::Error {
            error,
            detail: detail.into(),
        }
    }
}
