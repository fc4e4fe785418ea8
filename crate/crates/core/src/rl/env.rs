use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RlError;
use crate::comms::{ChannelConfig, ChannelState};
use crate::geometry::Vec2;
use crate::guidance::{
    baseline_controller, formation_target, pursue_point, ControllerGains, FormationSpec,
    FormationTarget,
};
use crate::metrics::StepSample;
use crate::scene::{PatrolSpec, Scene};
use crate::sonar::{poi_visible, SonarConfig};
use crate::world::{
    distance_to_boundary, min_clearance, step_world, ControlInput, Pose2D, VehicleState,
    WorldConfig, WorldState,
};

pub const OBS_DIM: usize = 9;
pub const N_ACTIONS: usize = 9;
pub const DEFAULT_HOLD_RADIUS: f64 = 3.0;
pub const DEFAULT_D_CAP: f64 = 10.0;

/// Target offset (body, 2), PoI bearing and range, last-known leader offset
/// (body, 2), capped boundary distance, own surge, PoI-visible flag.
pub type Observation = [f64; OBS_DIM];

pub mod obs_index {
    pub const TARGET_X: usize = 0;
    pub const TARGET_Y: usize = 1;
    pub const POI_BEARING: usize = 2;
    pub const POI_RANGE: usize = 3;
    pub const LEADER_X: usize = 4;
    pub const LEADER_Y: usize = 5;
    pub const BOUNDARY: usize = 6;
    pub const SURGE: usize = 7;
    pub const VISIBLE: usize = 8;
}

/// `{0, v/2, v} × {−ω, 0, +ω}`; index `i` is surge level `i / 3`, yaw level `i % 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSet {
    pub v_max: f64,
    pub omega_max: f64,
}

impl ActionSet {
    pub fn for_world(world: &WorldConfig) -> Self {
        Self {
            v_max: world.v_max,
            omega_max: world.omega_max,
        }
    }

    pub fn control(&self, index: usize) -> ControlInput {
        assert!(index < N_ACTIONS, "action index {index} out of range");
        let surge = [0.0, 0.5 * self.v_max, self.v_max][index / 3];
        let yaw = [-self.omega_max, 0.0, self.omega_max][index % 3];
        ControlInput::new(surge, yaw)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ObsContext<'a> {
    pub world: &'a WorldConfig,
    pub sonar: &'a SonarConfig,
    pub formation: &'a FormationSpec,
    pub d_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perception {
    pub obs: Observation,
    pub target: FormationTarget,
}

/// Builds the follower's observation from its own state, its sonar and the
/// channel. The leader's true pose is never read.
pub fn encode_observation(
    state: &WorldState,
    channel: &ChannelState,
    ctx: &ObsContext<'_>,
    previous_target: Option<FormationTarget>,
) -> Perception {
    let f = &state.follower;
    let p = f.position();
    let known = channel.last_known(state.time);
    let target = known
        .and_then(|(pose, _)| formation_target(&pose, ctx.world.poi, ctx.formation).ok())
        .or(previous_target)
        .unwrap_or(FormationTarget {
            position: p,
            heading: f.pose.heading,
        });
    let to_target = f.pose.to_body(target.position);
    let vis = poi_visible(f, ctx.world, ctx.sonar);
    let leader = known.map_or(Vec2::ZERO, |(pose, _)| f.pose.to_body(pose.position()));
    let boundary = distance_to_boundary(p, ctx.world).min(ctx.d_cap);
    Perception {
        obs: [
            to_target.x,
            to_target.y,
            vis.bearing,
            vis.range,
            leader.x,
            leader.y,
            boundary,
            f.surge,
            if vis.visible { 1.0 } else { 0.0 },
        ],
        target,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub w_form: f64,
    pub w_vis: f64,
    pub w_prox: f64,
    pub d_safe: f64,
    pub collision_penalty: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_form: 0.5,
            w_vis: 1.0,
            w_prox: 1.0,
            d_safe: 2.0,
            collision_penalty: 50.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self, d_col: f64) -> Result<(), String> {
        let w = [self.w_form, self.w_vis, self.w_prox];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err("reward weights must be finite and >= 0".into());
        }
        if !(self.d_safe > d_col) {
            return Err(format!("d_safe ({}) must exceed d_col ({d_col})", self.d_safe));
        }
        if !(self.collision_penalty > 0.0) {
            return Err("collision_penalty must be > 0".into());
        }
        Ok(())
    }
}

/// Per-step reward from formation distance, PoI visibility, proximity and
/// collision; never positive.
pub fn reward_terms(d_form: f64, visible: bool, d_min: f64, collided: bool, w: &RewardWeights) -> f64 {
    let prox = ((w.d_safe - d_min) / w.d_safe).max(0.0);
    let mut r = -w.w_form * d_form - w.w_vis * (1.0 - f64::from(u8::from(visible))) - w.w_prox * prox;
    if collided {
        r -= w.collision_penalty;
    }
    r
}

pub fn reward(state: &WorldState, world: &WorldConfig, obs: &Observation, w: &RewardWeights) -> f64 {
    let d_form = Vec2::new(obs[obs_index::TARGET_X], obs[obs_index::TARGET_Y]).norm();
    reward_terms(
        d_form,
        obs[obs_index::VISIBLE] > 0.5,
        min_clearance(state, world),
        state.collided,
        w,
    )
}

/// Seeded stand-in for the operator: shuttles between jittered endpoints and
/// dwells at each.
#[derive(Debug, Clone)]
pub struct Patrol {
    spec: PatrolSpec,
    a: Vec2,
    b: Vec2,
    toward_b: bool,
    dwell_left: f64,
    gains: ControllerGains,
}

impl Patrol {
    pub fn new(spec: PatrolSpec, rng: &mut impl Rng) -> Self {
        let mut jitter = |p: Vec2| {
            if spec.jitter > 0.0 {
                p + Vec2::new(
                    rng.gen_range(-spec.jitter..=spec.jitter),
                    rng.gen_range(-spec.jitter..=spec.jitter),
                )
            } else {
                p
            }
        };
        let a = jitter(spec.a);
        let b = jitter(spec.b);
        Self {
            spec,
            a,
            b,
            toward_b: false,
            dwell_left: 0.0,
            gains: ControllerGains::default(),
        }
    }

    pub fn goal(&self) -> Vec2 {
        if self.toward_b {
            self.b
        } else {
            self.a
        }
    }

    pub fn command(&mut self, leader: &VehicleState, world: &WorldConfig) -> ControlInput {
        if self.dwell_left > 0.0 {
            self.dwell_left -= world.dt;
            return ControlInput::ZERO;
        }
        if leader.position().distance(self.goal()) <= self.gains.arrive_tol {
            self.toward_b = !self.toward_b;
            self.dwell_left = self.spec.dwell;
            return ControlInput::ZERO;
        }
        pursue_point(leader, self.goal(), self.spec.speed, world, &self.gains)
    }
}

/// What a follower controller may look at.
#[derive(Debug, Clone, Copy)]
pub struct AgentView<'a> {
    pub obs: &'a Observation,
    pub follower: &'a VehicleState,
    pub target: &'a FormationTarget,
    pub world: &'a WorldConfig,
}

pub trait Controller {
    fn act(&mut self, view: &AgentView<'_>) -> ControlInput;
    /// Called before every episode with that episode's seed.
    fn begin_episode(&mut self, _seed: u64) {}
    fn name(&self) -> &str;
}

#[derive(Debug, Clone)]
pub struct BaselineController {
    pub gains: ControllerGains,
    /// Once arrived, the follower keeps station facing the PoI until the
    /// target drifts farther than this.
    pub hold_radius: f64,
    holding: bool,
}

impl Default for BaselineController {
    fn default() -> Self {
        Self::new(ControllerGains::default(), DEFAULT_HOLD_RADIUS)
    }
}

impl BaselineController {
    pub fn new(gains: ControllerGains, hold_radius: f64) -> Self {
        Self {
            gains,
            hold_radius,
            holding: false,
        }
    }
}

impl Controller for BaselineController {
    fn act(&mut self, view: &AgentView<'_>) -> ControlInput {
        let dist = view.follower.position().distance(view.target.position);
        let tol = if self.holding {
            self.gains.arrive_tol.max(self.hold_radius)
        } else {
            self.gains.arrive_tol
        };
        self.holding = dist <= tol;
        let gains = ControllerGains {
            arrive_tol: tol,
            ..self.gains
        };
        let mut target = *view.target;
        if self.holding {
            target.heading = (view.world.poi - view.follower.position()).angle();
        }
        baseline_controller(view.follower, &target, view.world, &gains)
    }

    fn begin_episode(&mut self, _seed: u64) {
        self.holding = false;
    }

    fn name(&self) -> &str {
        "baseline"
    }
}

/// Uniform over the discrete action set, reseeded per episode.
#[derive(Debug, Clone)]
pub struct RandomController {
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for RandomController {
    fn act(&mut self, view: &AgentView<'_>) -> ControlInput {
        ActionSet::for_world(view.world).control(self.rng.gen_range(0..N_ACTIONS))
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_5A11);
    }

    fn name(&self) -> &str {
        "random"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub max_steps: usize,
    pub weights: RewardWeights,
    pub d_cap: f64,
    pub channel: ChannelConfig,
    pub d_viol: f64,
}

impl EnvConfig {
    pub fn for_scene(scene: &Scene, max_steps: usize) -> Self {
        Self {
            max_steps,
            weights: RewardWeights::default(),
            d_cap: DEFAULT_D_CAP,
            channel: scene.channel,
            d_viol: crate::metrics::DEFAULT_D_VIOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub sample: StepSample,
    pub target: FormationTarget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// True only when the episode ended by collision (time-outs bootstrap).
    pub terminal: bool,
    pub info: StepInfo,
}

/// Follower training/evaluation episode with a patrolling leader.
#[derive(Debug, Clone)]
pub struct Env {
    scene: Scene,
    config: EnvConfig,
    state: WorldState,
    channel: ChannelState,
    patrol: Patrol,
    perception: Perception,
    steps: usize,
    done: bool,
}

/// Per-episode seed derived from a run seed, independent of evaluation order.
pub fn episode_seed(run_seed: u64, episode: u64) -> u64 {
    let mut z = run_seed ^ episode.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Env {
    pub fn new(scene: Scene, config: EnvConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = scene.initial_state();
        let patrol = Patrol::new(scene.patrol, &mut rng);
        let mut env = Self {
            channel: ChannelState::new(config.channel.seed),
            perception: Perception {
                obs: [0.0; OBS_DIM],
                target: FormationTarget {
                    position: state.follower.position(),
                    heading: state.follower.pose.heading,
                },
            },
            scene,
            config,
            state,
            patrol,
            steps: 0,
            done: true,
        };
        env.reset(0);
        env
    }

    fn ctx(&self) -> ObsContext<'_> {
        ObsContext {
            world: &self.scene.world,
            sonar: &self.scene.sonar,
            formation: &self.scene.formation,
            d_cap: self.config.d_cap,
        }
    }

    fn spawn_follower(&self, rng: &mut ChaCha8Rng, leader: &Pose2D) -> Pose2D {
        let world = &self.scene.world;
        let slot = formation_target(leader, world.poi, &self.scene.formation)
            .map(|t| t.position)
            .unwrap_or(leader.position());
        let r = self.scene.spawn.radius;
        let ok = |p: Vec2| {
            world.bounds.contains(p)
                && !world.inside_hull(p)
                && distance_to_boundary(p, world) >= self.config.weights.d_safe
                && p.distance(leader.position()) >= self.config.weights.d_safe
        };
        for _ in 0..100 {
            let rho = r * rng.gen::<f64>().sqrt();
            let phi = rng.gen_range(-PI..PI);
            let heading = rng.gen_range(-PI..PI);
            let p = slot + Vec2::from_angle(phi) * rho;
            if ok(p) {
                return Pose2D::new(p.x, p.y, heading);
            }
        }
        Pose2D::new(slot.x, slot.y, rng.gen_range(-PI..PI))
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.patrol = Patrol::new(self.scene.patrol, &mut rng);
        let leader = self.scene.leader.pose();
        let follower = self.spawn_follower(&mut rng, &leader);
        self.state = WorldState::new(VehicleState::at(leader), VehicleState::at(follower));
        self.channel = ChannelState::new(self.config.channel.seed ^ rng.gen::<u64>());
        self.channel.broadcast(&self.config.channel, 0.0, leader);
        self.channel.deliver(&self.config.channel, 0.0);
        self.perception = encode_observation(&self.state, &self.channel, &self.ctx(), None);
        self.steps = 0;
        self.done = false;
        self.perception.obs
    }

    pub fn step(&mut self, action: usize) -> Result<Transition, RlError> {
        if action >= N_ACTIONS {
            return Err(RlError::InvalidAction(action));
        }
        let cmd = ActionSet::for_world(&self.scene.world).control(action);
        self.step_control(cmd)
    }

    pub fn step_control(&mut self, follower_cmd: ControlInput) -> Result<Transition, RlError> {
        if self.done {
            return Err(RlError::EpisodeFinished);
        }
        let world = &self.scene.world;
        let leader_cmd = self.patrol.command(&self.state.leader, world);
        self.state = step_world(&self.state, world, leader_cmd, follower_cmd);
        let t = self.state.time;
        self.channel.broadcast(&self.config.channel, t, self.state.leader.pose);
        self.channel.deliver(&self.config.channel, t);
        self.perception = encode_observation(
            &self.state,
            &self.channel,
            &self.ctx(),
            Some(self.perception.target),
        );
        self.steps += 1;
        let obs = self.perception.obs;
        let r = reward(&self.state, &self.scene.world, &obs, &self.config.weights);
        let collided = self.state.collided;
        self.done = collided || self.steps >= self.config.max_steps;
        let sample = StepSample {
            time: t,
            poi_visible: obs[obs_index::VISIBLE] > 0.5,
            formation_deviation: self.state.follower.position().distance(self.perception.target.position),
            min_clearance: min_clearance(&self.state, &self.scene.world),
            collided,
        };
        Ok(Transition {
            obs,
            reward: r,
            done: self.done,
            terminal: collided,
            info: StepInfo {
                sample,
                target: self.perception.target,
            },
        })
    }

    pub fn view(&self) -> AgentView<'_> {
        AgentView {
            obs: &self.perception.obs,
            follower: &self.state.follower,
            target: &self.perception.target,
            world: &self.scene.world,
        }
    }

    pub fn observation(&self) -> &Observation {
        &self.perception.obs
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut WorldState {
        &mut self.state
    }

    pub fn channel(&self) -> &ChannelState {
        &self.channel
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}
