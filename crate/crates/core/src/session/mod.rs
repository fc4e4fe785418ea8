//! Supervisor session: one owner of all mutable simulation state, fed with
//! client frames between steps. Network transport lives in the CLI; this module
//! is synchronous and deterministic for a given config and frame sequence.

mod config;
mod leader;
pub mod protocol;
pub mod record;

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

pub use config::{PolicySource, ScriptedCommand, SessionConfig};
pub use leader::LeaderBindings;
pub use protocol::{
    parse_frame, ClientFrame, ClientId, ClientMessage, ControlAction, ErrorCode, LastKnown,
    MissionState, MissionView, ServerMessage, Snapshot, Welcome,
};
pub use record::{
    replay, replay_reader, Divergence, FooterRecord, Recorder, RecordHeader, RecordLine,
    ReplayError, ReplayReport, ReplayResult, ResetRecord, StepRecord, RECORD_SCHEMA,
};

use crate::bt::{BehaviorTree, Blackboard, BtError, MissionParams, MissionRegistry, NodeStatus, Value, ABORT_KEY};
use crate::comms::ChannelState;
use crate::guidance::{ControllerGains, FormationSpec, FormationTarget};
use crate::intent::{
    command_to_mission, parse, summarize_feedback, EventLog, IntentCommand,
    MissionDirective, ParseResult, Transport, UreqTransport,
};
use crate::metrics::{EpisodeMetrics, MetricsAccumulator, StepSample};
use crate::rl::{
    encode_observation, episode_seed, obs_index, AgentView, Controller,
    ObsContext, Perception, DEFAULT_D_CAP,
};
use crate::scene::{Scene, SceneError};
use crate::sonar::{poi_visible, scan};
use crate::world::{min_clearance, step_world, ControlInput, LeaderMode, Waypoint, WorldState};

/// Client id used for scripted commands.
pub const SCRIPT_CLIENT: ClientId = 0;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("cannot load policy: {0}")]
    Policy(#[from] crate::rl::nn::NnError),
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("record: {0}")]
    Record(#[from] std::io::Error),
}

/// A message the transport should deliver.
#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    To(ClientId, ServerMessage),
    All(ServerMessage),
}

struct Mission {
    name: String,
    tree: BehaviorTree,
    bb: Blackboard,
    state: MissionState,
    waypoints: Vec<Waypoint>,
}

type Reply = Result<Option<IntentCommand>, (ErrorCode, String)>;

pub struct Session {
    config: SessionConfig,
    scene: Scene,
    formation: FormationSpec,
    gains: ControllerGains,
    registry: MissionRegistry,
    controller: Box<dyn Controller + Send>,
    policy_name: String,
    transport: Option<Box<dyn Transport + Send>>,
    recorder: Option<Recorder<Box<dyn Write + Send>>>,

    state: WorldState,
    channel: ChannelState,
    channel_seed: u64,
    perception: Perception,
    metrics: MetricsAccumulator,
    events: EventLog,
    mission: Option<Mission>,
    timers: BTreeMap<u32, f64>,
    next_leader_cmd: ControlInput,
    teleop: Option<(ControlInput, f64)>,

    controller_client: Option<ClientId>,
    next_client: ClientId,
    paused: bool,
    held: bool,
    session_steps: u64,
    episode: u32,
    script_cursor: usize,
    outbox: Vec<Outgoing>,
}

impl Session {
    /// Loads the scene and policy named by `config` and opens the record file.
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        let scene = config.base_scene()?;
        let record = config.record.clone();
        let mut session = Self::with_scene(scene, config)?;
        if let Some(path) = record {
            let file = std::fs::File::create(path)?;
            session.record_to(Box::new(std::io::BufWriter::new(file)))?;
        }
        Ok(session)
    }

    /// Uses `scene` instead of `config.scene`; `config.record` is ignored.
    pub fn with_scene(scene: Scene, config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let scene = config.apply_overrides(scene)?;
        let controller = config.policy.controller(config.seed)?;
        let transport: Option<Box<dyn Transport + Send>> = if config.llm.enabled {
            Some(Box::new(UreqTransport))
        } else {
            None
        };
        let state = scene.initial_state();
        let mut session = Self {
            formation: scene.formation,
            gains: ControllerGains::default(),
            registry: MissionRegistry::default(),
            controller,
            policy_name: config.policy.to_string(),
            transport,
            recorder: None,
            channel: ChannelState::new(0),
            channel_seed: 0,
            perception: Perception {
                obs: [0.0; crate::rl::OBS_DIM],
                target: FormationTarget {
                    position: state.follower.position(),
                    heading: state.follower.pose.heading,
                },
            },
            metrics: MetricsAccumulator::new(config.d_viol),
            events: EventLog::default(),
            mission: None,
            timers: BTreeMap::new(),
            next_leader_cmd: ControlInput::ZERO,
            teleop: None,
            controller_client: None,
            next_client: SCRIPT_CLIENT + 1,
            paused: false,
            held: false,
            session_steps: 0,
            episode: 0,
            script_cursor: 0,
            outbox: Vec::new(),
            state,
            scene,
            config,
        };
        session.start_episode();
        Ok(session)
    }

    /// Replaces the LLM transport (tests and alternative clients).
    pub fn set_transport(&mut self, transport: Option<Box<dyn Transport + Send>>) {
        self.transport = transport;
    }

    /// Starts recording; writes the header for the current episode start.
    pub fn record_to(&mut self, out: Box<dyn Write + Send>) -> Result<(), SessionError> {
        let mut rec = Recorder::new(out);
        rec.write(&RecordLine::Header(RecordHeader {
            schema: RECORD_SCHEMA,
            seed: self.config.seed,
            policy: self.policy_name.clone(),
            scene: self.scene.clone(),
            channel: self.scene.channel,
            channel_seed: self.channel_seed,
            d_viol: self.config.d_viol,
            initial: self.state.clone(),
        }))?;
        self.recorder = Some(rec);
        Ok(())
    }

    fn start_episode(&mut self) {
        let seed = episode_seed(self.config.seed, self.episode as u64);
        self.state = self.scene.initial_state();
        self.channel_seed = self.scene.channel.seed ^ seed;
        self.channel = ChannelState::new(self.channel_seed);
        let cfg = self.scene.channel;
        self.channel.broadcast(&cfg, 0.0, self.state.leader.pose);
        self.channel.deliver(&cfg, 0.0);
        self.perception = encode_observation(&self.state, &self.channel, &self.ctx(), None);
        self.metrics = MetricsAccumulator::new(self.config.d_viol);
        self.mission = None;
        self.timers.clear();
        self.next_leader_cmd = ControlInput::ZERO;
        self.teleop = None;
        self.held = false;
        self.controller.begin_episode(seed);
    }

    fn ctx(&self) -> ObsContext<'_> {
        ObsContext {
            world: &self.scene.world,
            sonar: &self.scene.sonar,
            formation: &self.formation,
            d_cap: DEFAULT_D_CAP,
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn formation(&self) -> FormationSpec {
        self.formation
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    /// Session clock in seconds; keeps counting across resets.
    pub fn time(&self) -> f64 {
        self.session_steps as f64 * self.scene.world.dt
    }

    pub fn metrics(&self) -> Option<EpisodeMetrics> {
        self.metrics.finalize().ok()
    }

    pub fn mission_state(&self) -> Option<MissionState> {
        self.mission.as_ref().map(|m| m.state)
    }

    pub fn tree(&self) -> Option<&BehaviorTree> {
        self.mission.as_ref().map(|m| &m.tree)
    }

    pub fn controller_client(&self) -> Option<ClientId> {
        self.controller_client
    }

    pub fn connect(&mut self) -> (ClientId, ServerMessage) {
        let id = self.next_client;
        self.next_client += 1;
        let welcome = Welcome {
            client: id,
            scene: self.scene.name.clone(),
            world: self.scene.world.clone(),
            sonar: self.scene.sonar,
            snapshot_every: self.config.snapshot_every,
        };
        (id, ServerMessage::Welcome(welcome))
    }

    /// Releases the controller role if `client` held it.
    pub fn disconnect(&mut self, client: ClientId) {
        if self.controller_client == Some(client) {
            self.controller_client = None;
            self.teleop = None;
        }
    }

    pub fn drain_outbox(&mut self) -> Vec<Outgoing> {
        std::mem::take(&mut self.outbox)
    }

    /// Handles one raw frame and returns its Ack or Err.
    pub fn handle_text(&mut self, client: ClientId, text: &str) -> ServerMessage {
        match parse_frame(text) {
            Ok(frame) => self.handle(client, frame),
            Err((id, why)) => ServerMessage::err(id, ErrorCode::BadFrame, why),
        }
    }

    pub fn handle(&mut self, client: ClientId, frame: ClientFrame) -> ServerMessage {
        match self.apply(client, frame.msg) {
            Ok(command) => ServerMessage::Ack {
                reference: frame.id,
                ok: true,
                command,
            },
            Err((code, detail)) => ServerMessage::err(Some(frame.id), code, detail),
        }
    }

    fn claim_controller(&mut self, client: ClientId) -> Result<(), (ErrorCode, String)> {
        match self.controller_client {
            Some(c) if c != client => Err((
                ErrorCode::NotController,
                format!("client {c} holds the controller role"),
            )),
            _ => {
                self.controller_client = Some(client);
                Ok(())
            }
        }
    }

    fn apply(&mut self, client: ClientId, msg: ClientMessage) -> Reply {
        let now = self.time();
        match msg {
            ClientMessage::Teleop {
                surge_cmd,
                yaw_rate_cmd,
            } => {
                if self.state.leader_mode != LeaderMode::Manual {
                    return Err((ErrorCode::WrongMode, "leader is Autonomous; send SetMode Manual first".into()));
                }
                self.claim_controller(client)?;
                if !(surge_cmd.is_finite() && yaw_rate_cmd.is_finite()) {
                    return Err((ErrorCode::InvalidArgument, "teleop commands must be finite".into()));
                }
                self.teleop = Some((ControlInput::new(surge_cmd, yaw_rate_cmd), now));
                Ok(None)
            }
            ClientMessage::SetMode { mode } => {
                self.claim_controller(client)?;
                if self.state.leader_mode != mode {
                    self.state.leader_mode = mode;
                    self.teleop = None;
                    self.events.push(now, format!("leader switched to {mode:?}"));
                }
                Ok(None)
            }
            ClientMessage::NlCommand { text } => self.nl_command(&text),
            ClientMessage::BtOverride { node, forced } => {
                let mission = self
                    .mission
                    .as_mut()
                    .ok_or((ErrorCode::NoMission, "no mission is loaded".to_string()))?;
                mission.tree.override_node(node, forced).map_err(|e| match e {
                    BtError::NoSuchNode(_) => (ErrorCode::NoSuchNode, e.to_string()),
                    other => (ErrorCode::InvalidArgument, other.to_string()),
                })?;
                Ok(None)
            }
            ClientMessage::SetFormation { radius, offset } => {
                self.set_formation(radius, offset)?;
                Ok(None)
            }
            ClientMessage::Control { action } => {
                match action {
                    ControlAction::Pause => self.paused = true,
                    ControlAction::Resume => {
                        self.paused = false;
                        self.held = false;
                        if let Some(m) = self.mission.as_mut().filter(|m| m.state == MissionState::Held) {
                            m.state = MissionState::Running;
                        }
                    }
                    ControlAction::Reset => self.reset()?,
                }
                Ok(None)
            }
        }
    }

    fn set_formation(&mut self, radius: Option<f64>, offset: Option<f64>) -> Result<(), (ErrorCode, String)> {
        if radius.is_none() && offset.is_none() {
            return Err((ErrorCode::InvalidArgument, "SetFormation needs radius and/or offset".into()));
        }
        let spec = FormationSpec::new(
            radius.unwrap_or(self.formation.radius),
            offset.unwrap_or(self.formation.offset),
        )
        .map_err(|e| (ErrorCode::InvalidArgument, e.to_string()))?;
        self.formation = spec;
        self.events.push(
            self.time(),
            format!("formation set to radius {} m, offset {} rad", spec.radius, spec.offset),
        );
        Ok(())
    }

    fn reset(&mut self) -> Result<(), (ErrorCode, String)> {
        self.episode += 1;
        self.start_episode();
        self.events.push(self.time(), format!("episode {} started", self.episode));
        let line = RecordLine::Reset(ResetRecord {
            episode: self.episode,
            channel_seed: self.channel_seed,
            state: self.state.clone(),
        });
        self.write_record(&line)
            .map_err(|e| (ErrorCode::InvalidArgument, format!("record: {e}")))
    }

    fn write_record(&mut self, line: &RecordLine) -> std::io::Result<()> {
        match self.recorder.as_mut() {
            Some(r) => r.write(line),
            None => Ok(()),
        }
    }

    fn nl_command(&mut self, text: &str) -> Reply {
        let transport = self
            .transport
            .as_deref_mut()
            .map(|t| t as &mut dyn Transport);
        let result = parse(text, &self.config.llm, transport);
        let command = match result {
            ParseResult::Command { command, .. } => command,
            ParseResult::Error { error, detail } => return Err((error.into(), detail)),
        };
        let directive = command_to_mission(&command, &self.scene.world)
            .map_err(|e| (ErrorCode::MissionError, e.to_string()))?;
        let now = self.time();
        match directive {
            MissionDirective::Start {
                template,
                waypoints,
            } => {
                let mut bb = Blackboard::new();
                let params = MissionParams {
                    waypoints: waypoints.clone(),
                };
                let tree = self
                    .registry
                    .instantiate(&template, &params, &mut bb)
                    .map_err(|e| (ErrorCode::MissionError, e.to_string()))?;
                self.events.push(
                    now,
                    format!("mission {template} started with {} waypoints", waypoints.len()),
                );
                self.mission = Some(Mission {
                    name: template,
                    tree,
                    bb,
                    state: MissionState::Running,
                    waypoints,
                });
                self.timers.clear();
                self.held = false;
                self.next_leader_cmd = ControlInput::ZERO;
            }
            MissionDirective::Abort => {
                let mission = self
                    .mission
                    .as_mut()
                    .filter(|m| matches!(m.state, MissionState::Running | MissionState::Held))
                    .ok_or((ErrorCode::NoMission, "no active mission to abort".to_string()))?;
                mission.bb.set(ABORT_KEY, Value::Bool(true));
                mission.state = MissionState::Running;
                self.held = false;
                self.events.push(now, "abort requested");
            }
            MissionDirective::Hold => {
                self.held = true;
                self.next_leader_cmd = ControlInput::ZERO;
                if let Some(m) = self.mission.as_mut().filter(|m| m.state == MissionState::Running) {
                    m.state = MissionState::Held;
                }
                self.events.push(now, "hold");
            }
            MissionDirective::Report { .. } => {
                let text = self.summary();
                self.outbox.push(Outgoing::All(ServerMessage::Summary { text }));
            }
            MissionDirective::SetFormation { radius, offset } => self.set_formation(radius, offset)?,
        }
        Ok(Some(command))
    }

    /// Operator summary of the running episode.
    pub fn summary(&mut self) -> String {
        match self.metrics.finalize() {
            Ok(m) => {
                let transport = self
                    .transport
                    .as_deref_mut()
                    .map(|t| t as &mut dyn Transport);
                summarize_feedback(&m, &self.events, &self.config.llm, transport)
            }
            Err(_) => "No steps simulated yet.".to_string(),
        }
    }

    fn run_script(&mut self) {
        let now = self.time();
        while let Some(cmd) = self.config.script.get(self.script_cursor) {
            if cmd.time > now + 1e-9 {
                break;
            }
            let text = cmd.text.clone();
            let id = self.script_cursor as u64;
            self.script_cursor += 1;
            let frame = ClientFrame::new(id, ClientMessage::NlCommand { text: text.clone() });
            if let ServerMessage::Err { code, detail, .. } = self.handle(SCRIPT_CLIENT, frame) {
                self.events.push(now, format!("script command {text:?} rejected: {code:?} {detail}"));
            }
        }
    }

    fn leader_command(&self) -> ControlInput {
        match self.state.leader_mode {
            LeaderMode::Manual => match self.teleop {
                Some((cmd, at)) if self.time() - at <= self.config.teleop_timeout + 1e-9 => cmd,
                _ => ControlInput::ZERO,
            },
            LeaderMode::Autonomous if self.held => ControlInput::ZERO,
            LeaderMode::Autonomous => self.next_leader_cmd,
        }
    }

    fn tick_mission(&mut self) {
        if self.held {
            return;
        }
        let Some(mission) = self.mission.as_mut() else {
            return;
        };
        if mission.state != MissionState::Running {
            return;
        }
        let mut bindings = LeaderBindings {
            leader: &self.state.leader,
            mode: self.state.leader_mode,
            world: &self.scene.world,
            sonar: &self.scene.sonar,
            gains: &self.gains,
            retreat: self.scene.retreat_point(),
            dwell: self.config.inspect_dwell,
            timers: &mut self.timers,
            command: ControlInput::ZERO,
            reported: false,
        };
        let result = mission.tree.tick(&mut mission.bb, &mut bindings);
        let command = bindings.command;
        let reported = bindings.reported;
        self.next_leader_cmd = command;
        let now = self.state.time;
        let finished = match result {
            Ok(NodeStatus::Running) => None,
            Ok(NodeStatus::Success) => {
                if mission.bb.flag(ABORT_KEY).unwrap_or(false) {
                    Some(MissionState::Aborted)
                } else {
                    Some(MissionState::Complete)
                }
            }
            Ok(NodeStatus::Failure) => Some(MissionState::Failed),
            Err(e) => {
                self.events.push(now, format!("mission error: {e}"));
                Some(MissionState::Failed)
            }
        };
        if let Some(state) = finished {
            mission.state = state;
            self.next_leader_cmd = ControlInput::ZERO;
            self.events.push(now, format!("mission {} {state:?}", mission.name));
        }
        if reported || finished.is_some() {
            let text = self.summary();
            self.outbox.push(Outgoing::All(ServerMessage::Summary { text }));
        }
    }

    /// Advances one step unless paused. Returns a snapshot when one is due.
    pub fn step(&mut self) -> Result<Option<Snapshot>, SessionError> {
        if self.paused {
            return Ok(None);
        }
        self.run_script();
        if self.paused {
            return Ok(None);
        }
        self.session_steps += 1;
        if !self.state.collided {
            self.advance_world()?;
        }
        if self.session_steps % self.config.snapshot_every == 0 {
            Ok(Some(self.snapshot()))
        } else {
            Ok(None)
        }
    }

    fn advance_world(&mut self) -> Result<(), SessionError> {
        let leader_cmd = self.leader_command();
        let follower_cmd = {
            let view = AgentView {
                obs: &self.perception.obs,
                follower: &self.state.follower,
                target: &self.perception.target,
                world: &self.scene.world,
            };
            self.controller.act(&view)
        };
        let mode = self.state.leader_mode;
        let next = step_world(&self.state, &self.scene.world, leader_cmd, follower_cmd);
        let cfg = self.scene.channel;
        self.channel.broadcast(&cfg, next.time, next.leader.pose);
        let delivered = self.channel.deliver(&cfg, next.time);
        let became_collided = next.collided && !self.state.collided;
        self.state = next;
        self.perception = encode_observation(
            &self.state,
            &self.channel,
            &self.ctx(),
            Some(self.perception.target),
        );
        let sample = StepSample {
            time: self.state.time,
            poi_visible: self.perception.obs[obs_index::VISIBLE] > 0.5,
            formation_deviation: self
                .state
                .follower
                .position()
                .distance(self.perception.target.position),
            min_clearance: min_clearance(&self.state, &self.scene.world),
            collided: self.state.collided,
        };
        self.metrics.accumulate(&sample);
        if became_collided {
            self.events.push(self.state.time, "collision");
        }
        self.tick_mission();
        let line = RecordLine::Step(StepRecord {
            tick: self.state.tick,
            time: self.state.time,
            leader_mode: mode,
            leader_cmd,
            follower_cmd,
            delivered,
            state: self.state.clone(),
            sample,
        });
        self.write_record(&line)?;
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        let last_known = self
            .channel
            .last_known(self.state.time)
            .map(|(pose, age)| LastKnown { pose, age });
        Snapshot {
            time: self.time(),
            episode: self.episode,
            episode_time: self.state.time,
            tick: self.state.tick,
            paused: self.paused,
            leader: self.state.leader,
            leader_mode: self.state.leader_mode,
            follower: self.state.follower,
            last_known,
            target: self.perception.target,
            formation: self.formation,
            sonar: scan(&self.state.follower, &self.scene.world, &self.scene.sonar),
            poi: poi_visible(&self.state.follower, &self.scene.world, &self.scene.sonar),
            mission: self.mission.as_ref().map(|m| MissionView {
                name: m.name.clone(),
                state: m.state,
                waypoints: m.waypoints.clone(),
            }),
            bt: self.mission.as_ref().map(|m| m.tree.snapshot()),
            metrics: self.metrics.finalize().ok(),
            collided: self.state.collided,
        }
    }

    /// Writes the footer and flushes the record.
    pub fn finish(&mut self) -> Result<Option<EpisodeMetrics>, SessionError> {
        let metrics = self.metrics.finalize().ok();
        let steps = self.session_steps;
        if let Some(mut rec) = self.recorder.take() {
            rec.write(&RecordLine::Footer(FooterRecord { steps, metrics }))?;
            rec.flush()?;
        }
        Ok(metrics)
    }
}

/// Result of a headless run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeadlessOutcome {
    pub steps: u64,
    pub snapshots: u64,
    pub metrics: Option<EpisodeMetrics>,
    pub mission: Option<MissionState>,
    pub summaries: Vec<String>,
}

/// Runs a session without clients for `config.max_steps` steps (or until a
/// collision), as fast as possible.
pub fn run_headless(config: SessionConfig) -> Result<HeadlessOutcome, SessionError> {
    let mut session = Session::new(config)?;
    drive_headless(&mut session)
}

pub fn drive_headless(session: &mut Session) -> Result<HeadlessOutcome, SessionError> {
    let mut snapshots = 0;
    let mut summaries = Vec::new();
    let mut steps = 0;
    while steps < session.config.max_steps && !session.state.collided {
        if session.step()?.is_some() {
            snapshots += 1;
        }
        steps += 1;
        for out in session.drain_outbox() {
            if let Outgoing::All(ServerMessage::Summary { text }) | Outgoing::To(_, ServerMessage::Summary { text }) = out {
                summaries.push(text);
            }
        }
    }
    let metrics = session.finish()?;
    Ok(HeadlessOutcome {
        steps,
        snapshots,
        metrics,
        mission: session.mission_state(),
        summaries,
    })
}
