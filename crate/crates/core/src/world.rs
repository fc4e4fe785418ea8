//! Planar world: hull, obstacles, PoI, unicycle kinematics and the fixed-step
//! world transition.
//!
//! Everything here is a pure function of its arguments. `step_world` with the
//! same inputs produces bit-identical outputs, which the episode recorder and
//! replay verifier rely on.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    closest_point_on_segment, normalize_angle, point_in_polygon, polygon_is_simple, signed_area2,
    Vec2,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("no hull edge is labeled {0}")]
    NoSuchRegion(Region),
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Radians in (−π, π].
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Expresses a world-frame point in this pose's body frame.
    pub fn to_body(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotated(-self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    /// Forward speed, m/s, in [0, v_max].
    pub surge: f64,
    pub yaw_rate: f64,
}

impl VehicleState {
    pub fn at(pose: Pose2D) -> Self {
        Self {
            pose,
            surge: 0.0,
            yaw_rate: 0.0,
        }
    }

    pub fn position(&self) -> Vec2 {
        self.pose.position()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub surge_cmd: f64,
    pub yaw_rate_cmd: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        surge_cmd: 0.0,
        yaw_rate_cmd: 0.0,
    };

    pub fn new(surge_cmd: f64, yaw_rate_cmd: f64) -> Self {
        Self {
            surge_cmd,
            yaw_rate_cmd,
        }
    }

    /// Clamps into [0, v_max] × [−ω_max, ω_max]. Non-finite commands become zero.
    pub fn clamped(self, v_max: f64, omega_max: f64) -> Self {
        let fin = |v: f64| if v.is_finite() { v } else { 0.0 };
        Self {
            surge_cmd: fin(self.surge_cmd).clamp(0.0, v_max),
            yaw_rate_cmd: fin(self.yaw_rate_cmd).clamp(-omega_max, omega_max),
        }
    }
}

/// Label carried by each hull edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HullSide {
    Port,
    Starboard,
    Bow,
    Stern,
}

/// A named part of the hull as requested by an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Port,
    Starboard,
    Bow,
    Stern,
    WholeHull,
}

impl Region {
    pub fn matches(self, side: HullSide) -> bool {
        match self {
            Region::WholeHull => true,
            Region::Port => side == HullSide::Port,
            Region::Starboard => side == HullSide::Starboard,
            Region::Bow => side == HullSide::Bow,
            Region::Stern => side == HullSide::Stern,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Port => "port",
            Region::Starboard => "starboard",
            Region::Bow => "bow",
            Region::Stern => "stern",
            Region::WholeHull => "whole hull",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Hull polygon vertices; edge `i` runs from vertex `i` to vertex `i + 1` (wrapping).
    #[serde(default)]
    pub hull: Vec<Vec2>,
    /// One label per hull edge.
    #[serde(default)]
    pub edge_labels: Vec<HullSide>,
    #[serde(default)]
    pub obstacles: Vec<Circle>,
    pub poi: Vec2,
    pub bounds: Bounds,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::v_max")]
    pub v_max: f64,
    #[serde(default = "defaults::omega_max")]
    pub omega_max: f64,
    #[serde(default = "defaults::standoff")]
    pub standoff: f64,
    #[serde(default = "defaults::waypoint_spacing")]
    pub waypoint_spacing: f64,
    /// Collision distance.
    #[serde(default = "defaults::d_col")]
    pub d_col: f64,
}

mod defaults {
    use super::WorldConfig;

    pub fn dt() -> f64 {
        WorldConfig::DEFAULT_DT
    }
    pub fn v_max() -> f64 {
        WorldConfig::DEFAULT_V_MAX
    }
    pub fn omega_max() -> f64 {
        WorldConfig::DEFAULT_OMEGA_MAX
    }
    pub fn standoff() -> f64 {
        WorldConfig::DEFAULT_STANDOFF
    }
    pub fn waypoint_spacing() -> f64 {
        WorldConfig::DEFAULT_WAYPOINT_SPACING
    }
    pub fn d_col() -> f64 {
        WorldConfig::DEFAULT_D_COL
    }
}

impl WorldConfig {
    pub const DEFAULT_DT: f64 = 0.1;
    pub const DEFAULT_V_MAX: f64 = 1.0;
    pub const DEFAULT_OMEGA_MAX: f64 = 1.0;
    pub const DEFAULT_STANDOFF: f64 = 3.0;
    pub const DEFAULT_WAYPOINT_SPACING: f64 = 5.0;
    pub const DEFAULT_D_COL: f64 = 0.5;

    /// A config with default limits around the given hull.
    pub fn with_hull(hull: Vec<Vec2>, edge_labels: Vec<HullSide>, poi: Vec2, bounds: Bounds) -> Self {
        Self {
            hull,
            edge_labels,
            obstacles: Vec::new(),
            poi,
            bounds,
            dt: Self::DEFAULT_DT,
            v_max: Self::DEFAULT_V_MAX,
            omega_max: Self::DEFAULT_OMEGA_MAX,
            standoff: Self::DEFAULT_STANDOFF,
            waypoint_spacing: Self::DEFAULT_WAYPOINT_SPACING,
            d_col: Self::DEFAULT_D_COL,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.v_max > 0.0) || !(self.omega_max > 0.0) {
            return bad("v_max and omega_max must be > 0".into());
        }
        if !(self.d_col > 0.0) {
            return bad("d_col must be > 0".into());
        }
        if !(self.waypoint_spacing > 0.0) || !(self.standoff >= 0.0) {
            return bad("waypoint_spacing must be > 0 and standoff >= 0".into());
        }
        if !self.hull.is_empty() {
            if !polygon_is_simple(&self.hull) {
                return bad("hull polygon is not simple".into());
            }
            if self.edge_labels.len() != self.hull.len() {
                return bad(format!(
                    "hull has {} edges but {} edge labels",
                    self.hull.len(),
                    self.edge_labels.len()
                ));
            }
            let d = self.hull_boundary_distance(self.poi);
            if d > self.standoff + 1e-9 {
                return bad(format!(
                    "PoI is {d:.3} m from the hull, farther than standoff {}",
                    self.standoff
                ));
            }
        }
        if self.obstacles.iter().any(|c| !(c.radius >= 0.0)) {
            return bad("obstacle radius must be >= 0".into());
        }
        if !(self.bounds.min.x < self.bounds.max.x && self.bounds.min.y < self.bounds.max.y) {
            return bad("bounds are empty".into());
        }
        Ok(())
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.hull.len();
        (0..n).map(move |i| (self.hull[i], self.hull[(i + 1) % n]))
    }

    /// Outward unit normal of hull edge `i`.
    pub fn outward_normal(&self, i: usize) -> Vec2 {
        let n = self.hull.len();
        let d = self.hull[(i + 1) % n] - self.hull[i];
        let ccw = signed_area2(&self.hull) > 0.0;
        let normal = if ccw {
            Vec2::new(d.y, -d.x)
        } else {
            Vec2::new(-d.y, d.x)
        };
        normal.normalized().unwrap_or(Vec2::ZERO)
    }

    pub fn inside_hull(&self, p: Vec2) -> bool {
        self.hull.len() >= 3 && point_in_polygon(p, &self.hull)
    }

    fn hull_boundary_distance(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| p.distance(closest_point_on_segment(p, a, b)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Translates every geometric element by `t`.
    pub fn translated(&self, t: Vec2) -> Self {
        let mut c = self.clone();
        c.hull.iter_mut().for_each(|v| *v = *v + t);
        c.obstacles.iter_mut().for_each(|o| o.center = o.center + t);
        c.poi = c.poi + t;
        c.bounds.min = c.bounds.min + t;
        c.bounds.max = c.bounds.max + t;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeaderMode {
    Autonomous,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// Completed steps; `time == tick · dt`.
    pub tick: u64,
    pub time: f64,
    pub leader: VehicleState,
    pub follower: VehicleState,
    pub leader_mode: LeaderMode,
    pub collided: bool,
}

impl WorldState {
    pub fn new(leader: VehicleState, follower: VehicleState) -> Self {
        Self {
            tick: 0,
            time: 0.0,
            leader,
            follower,
            leader_mode: LeaderMode::Autonomous,
            collided: false,
        }
    }

    pub fn translated(&self, t: Vec2) -> Self {
        let mut s = self.clone();
        s.leader.pose.x += t.x;
        s.leader.pose.y += t.y;
        s.follower.pose.x += t.x;
        s.follower.pose.y += t.y;
        s
    }
}

/// Semi-implicit unicycle step: heading first, then position along the new heading.
pub fn step_vehicle(
    state: &VehicleState,
    input: ControlInput,
    dt: f64,
    v_max: f64,
    omega_max: f64,
) -> VehicleState {
    let input = input.clamped(v_max, omega_max);
    let heading = normalize_angle(state.pose.heading + input.yaw_rate_cmd * dt);
    let (s, c) = heading.sin_cos();
    VehicleState {
        pose: Pose2D {
            x: state.pose.x + input.surge_cmd * c * dt,
            y: state.pose.y + input.surge_cmd * s * dt,
            heading,
        },
        surge: input.surge_cmd,
        yaw_rate: input.yaw_rate_cmd,
    }
}

/// Closest point on any hull edge or obstacle circle, with its distance.
/// Points inside an obstacle report distance 0 and themselves as the nearest point.
pub fn nearest_boundary_point(p: Vec2, config: &WorldConfig) -> Option<(Vec2, f64)> {
    let mut best: Option<(Vec2, f64)> = None;
    let mut consider = |q: Vec2, d: f64| {
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((q, d));
        }
    };
    for (a, b) in config.edges() {
        let q = closest_point_on_segment(p, a, b);
        consider(q, p.distance(q));
    }
    for c in &config.obstacles {
        let rel = p - c.center;
        let dist = rel.norm();
        if dist <= c.radius {
            consider(p, 0.0);
        } else {
            let q = c.center + rel * (c.radius / dist);
            consider(q, dist - c.radius);
        }
    }
    best
}

/// Minimum distance to the hull boundary and all obstacle circles; infinite for an empty scene.
pub fn distance_to_boundary(p: Vec2, config: &WorldConfig) -> f64 {
    nearest_boundary_point(p, config).map_or(f64::INFINITY, |(_, d)| d)
}

/// Follower clearance to boundaries and the leader (uncapped).
pub fn min_clearance(state: &WorldState, config: &WorldConfig) -> f64 {
    let f = state.follower.position();
    distance_to_boundary(f, config).min(f.distance(state.leader.position()))
}

pub fn check_collision(state: &WorldState, config: &WorldConfig, d_col: f64) -> bool {
    let f = state.follower.position();
    distance_to_boundary(f, config) < d_col
        || f.distance(state.leader.position()) < d_col
        || !config.bounds.contains(f)
}

/// Advances both vehicles by one `dt`. A collided world is returned unchanged.
pub fn step_world(
    world: &WorldState,
    config: &WorldConfig,
    leader_cmd: ControlInput,
    follower_cmd: ControlInput,
) -> WorldState {
    if world.collided {
        return world.clone();
    }
    let leader = step_vehicle(&world.leader, leader_cmd, config.dt, config.v_max, config.omega_max);
    let follower = step_vehicle(
        &world.follower,
        follower_cmd,
        config.dt,
        config.v_max,
        config.omega_max,
    );
    let tick = world.tick + 1;
    let mut next = WorldState {
        tick,
        time: tick as f64 * config.dt,
        leader,
        follower,
        leader_mode: world.leader_mode,
        collided: false,
    };
    next.collided = check_collision(&next, config, config.d_col);
    next
}

/// A standoff point along the hull with the heading that faces the hull.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vec2,
    pub heading: f64,
}

impl Waypoint {
    /// The hull point this waypoint looks at, `standoff` ahead along its heading.
    pub fn hull_point(&self, standoff: f64) -> Vec2 {
        self.position + Vec2::from_angle(self.heading) * standoff
    }
}

/// Standoff waypoints along every hull edge matching `region`, in polygon order.
pub fn region_waypoints(config: &WorldConfig, region: Region) -> Result<Vec<Waypoint>, WorldError> {
    let mut out = Vec::new();
    for (i, (a, b)) in config.edges().enumerate() {
        let Some(label) = config.edge_labels.get(i) else {
            continue;
        };
        if !region.matches(*label) {
            continue;
        }
        let normal = config.outward_normal(i);
        let heading = normalize_angle((-normal).angle());
        let len = a.distance(b);
        let segments = ((len / config.waypoint_spacing).ceil() as usize).max(1);
        for k in 0..=segments {
            let t = k as f64 / segments as f64;
            out.push(Waypoint {
                position: a + (b - a) * t + normal * config.standoff,
                heading,
            });
        }
    }
    if out.is_empty() {
        return Err(WorldError::NoSuchRegion(region));
    }
    Ok(out)
}
