//! Episode records: one JSON object per line, a header, then step and reset
//! lines, then a footer. Replay re-simulates from the header using the logged
//! commands and compares every logged state by its serialized form.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::{ChannelConfig, ChannelState, PoseMessage};
use crate::metrics::{EpisodeMetrics, StepSample};
use crate::scene::Scene;
use crate::world::{step_world, ControlInput, LeaderMode, WorldState};

pub const RECORD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub schema: u32,
    pub seed: u64,
    pub policy: String,
    /// Scene with session overrides applied.
    pub scene: Scene,
    pub channel: ChannelConfig,
    pub channel_seed: u64,
    pub d_viol: f64,
    pub initial: WorldState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub tick: u64,
    pub time: f64,
    /// Mode in force while this step was integrated.
    pub leader_mode: LeaderMode,
    pub leader_cmd: ControlInput,
    pub follower_cmd: ControlInput,
    pub delivered: Option<PoseMessage>,
    pub state: WorldState,
    pub sample: StepSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetRecord {
    pub episode: u32,
    pub channel_seed: u64,
    pub state: WorldState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FooterRecord {
    pub steps: u64,
    /// Metrics of the last episode; absent when it has no steps.
    pub metrics: Option<EpisodeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RecordLine {
    Header(RecordHeader),
    Step(StepRecord),
    Reset(ResetRecord),
    Footer(FooterRecord),
}

pub struct Recorder<W: Write> {
    out: W,
}

impl<W: Write> Recorder<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, line: &RecordLine) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read record: {0}")]
    Io(#[from] std::io::Error),
    #[error("record schema {found:?} is not supported (expected {RECORD_SCHEMA})")]
    SchemaMismatch { found: Option<u64> },
    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayResult {
    Exact,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    /// World tick of the first step whose logged state differs.
    pub step: u64,
    /// 1-based line number in the record.
    pub line: usize,
    pub field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub result: ReplayResult,
    /// Step lines verified before stopping.
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.result == ReplayResult::Exact
    }
}

fn same<T: Serialize>(a: &T, b: &T) -> bool {
    serde_json::to_string(a).ok() == serde_json::to_string(b).ok()
}

fn corrupt(line: usize, reason: impl Into<String>) -> ReplayError {
    ReplayError::CorruptRecord {
        line,
        reason: reason.into(),
    }
}

fn start_channel(cfg: &ChannelConfig, seed: u64, state: &WorldState) -> (ChannelState, Option<PoseMessage>) {
    let mut ch = ChannelState::new(seed);
    ch.broadcast(cfg, state.time, state.leader.pose);
    let d = ch.deliver(cfg, state.time);
    (ch, d)
}

pub fn replay(path: impl AsRef<Path>) -> Result<ReplayReport, ReplayError> {
    let file = std::fs::File::open(path)?;
    replay_reader(BufReader::new(file))
}

pub fn replay_reader(reader: impl BufRead) -> Result<ReplayReport, ReplayError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (n, first) = lines.next().ok_or_else(|| corrupt(1, "empty record"))?;
    let first = first?;
    let raw: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| corrupt(n, e.to_string()))?;
    if raw.get("kind").and_then(|k| k.as_str()) != Some("header") {
        return Err(corrupt(n, "first line is not a header"));
    }
    let schema = raw.get("schema").and_then(|s| s.as_u64());
    if schema != Some(RECORD_SCHEMA as u64) {
        return Err(ReplayError::SchemaMismatch { found: schema });
    }
    let RecordLine::Header(header) =
        serde_json::from_value(raw).map_err(|e| corrupt(n, e.to_string()))?
    else {
        return Err(corrupt(n, "first line is not a header"));
    };
    let world = &header.scene.world;
    let mut state = header.initial.clone();
    let (mut channel, _) = start_channel(&header.channel, header.channel_seed, &state);
    let mut steps = 0u64;
    let diverged = |step: u64, line: usize, field: &str, steps: u64| ReplayReport {
        result: ReplayResult::Diverged,
        steps,
        divergence: Some(Divergence {
            step,
            line,
            field: field.to_string(),
        }),
    };

    let mut last = n;
    for (n, line) in lines {
        last = n;
        let line = line?;
        let rec: RecordLine = serde_json::from_str(&line).map_err(|e| corrupt(n, e.to_string()))?;
        match rec {
            RecordLine::Header(_) => return Err(corrupt(n, "second header")),
            RecordLine::Footer(_) => {
                return Ok(ReplayReport {
                    result: ReplayResult::Exact,
                    steps,
                    divergence: None,
                })
            }
            RecordLine::Reset(r) => {
                let init = header.scene.initial_state();
                if !same(&init, &r.state) {
                    return Ok(diverged(0, n, "state", steps));
                }
                state = init;
                channel = start_channel(&header.channel, r.channel_seed, &state).0;
            }
            RecordLine::Step(s) => {
                let mut before = state.clone();
                before.leader_mode = s.leader_mode;
                let next = step_world(&before, world, s.leader_cmd, s.follower_cmd);
                channel.broadcast(&header.channel, next.time, next.leader.pose);
                let delivered = channel.deliver(&header.channel, next.time);
                if !same(&next, &s.state) {
                    return Ok(diverged(s.tick, n, "state", steps));
                }
                if !same(&delivered, &s.delivered) {
                    return Ok(diverged(s.tick, n, "delivered", steps));
                }
                state = next;
                steps += 1;
            }
        }
    }
    Err(corrupt(last, "missing footer (truncated record)"))
}
