//! PoI-centred formation geometry and the scripted pursuit controller used as
//! the follower baseline, the leader's waypoint driver and the training patrol.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, point_in_polygon, point_segment_distance, segments_intersect, Vec2};
use crate::world::{nearest_boundary_point, ControlInput, Pose2D, VehicleState, WorldConfig};

/// Leader closer than this to the PoI has no usable bearing.
pub const DEGENERATE_EPS: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("leader is within {DEGENERATE_EPS} m of the PoI; formation bearing undefined")]
    DegenerateGeometry,
    #[error("invalid formation spec: {0}")]
    InvalidSpec(String),
}

/// Follower slot on a circle around the PoI, rotated `offset` from the leader's bearing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormationSpec {
    pub radius: f64,
    pub offset: f64,
}

impl Default for FormationSpec {
    fn default() -> Self {
        Self {
            radius: 6.0,
            offset: PI / 3.0,
        }
    }
}

impl FormationSpec {
    pub fn new(radius: f64, offset: f64) -> Result<Self, GuidanceError> {
        let spec = Self {
            radius,
            offset: normalize_angle(offset),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GuidanceError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(GuidanceError::InvalidSpec(format!(
                "radius must be > 0, got {}",
                self.radius
            )));
        }
        if !(self.offset > -PI && self.offset <= PI) {
            return Err(GuidanceError::InvalidSpec(format!(
                "offset must be in (-π, π], got {}",
                self.offset
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationTarget {
    pub position: Vec2,
    /// Faces the PoI.
    pub heading: f64,
}

impl FormationTarget {
    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.position.x, self.position.y, self.heading)
    }
}

pub fn formation_target(
    leader_pose: &Pose2D,
    poi: Vec2,
    spec: &FormationSpec,
) -> Result<FormationTarget, GuidanceError> {
    let rel = leader_pose.position() - poi;
    if rel.norm() <= DEGENERATE_EPS {
        return Err(GuidanceError::DegenerateGeometry);
    }
    let angle = rel.angle() + spec.offset;
    let position = poi + Vec2::from_angle(angle) * spec.radius;
    Ok(FormationTarget {
        position,
        heading: (poi - position).angle(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// Surge per meter of distance, 1/s.
    pub k_surge: f64,
    /// Yaw rate per radian of heading error, 1/s.
    pub k_yaw: f64,
    /// Within this distance the controller stops and aligns to the target heading.
    pub arrive_tol: f64,
    /// Boundaries closer than this bend the desired heading away.
    pub d_safe: f64,
    /// Largest heading bias (rad) applied at zero clearance.
    pub repulse_gain: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_surge: 0.5,
            k_yaw: 2.0,
            arrive_tol: 0.5,
            d_safe: 2.0,
            repulse_gain: 1.2,
        }
    }
}

/// Proportional pursuit of `target.position` with boundary repulsion; at the
/// target it turns in place to `target.heading`.
pub fn baseline_controller(
    follower: &VehicleState,
    target: &FormationTarget,
    world: &WorldConfig,
    gains: &ControllerGains,
) -> ControlInput {
    let pose = follower.pose;
    let p = pose.position();
    let to_target = target.position - p;
    let dist = to_target.norm();

    if dist <= gains.arrive_tol {
        let err = normalize_angle(target.heading - pose.heading);
        return ControlInput::new(0.0, gains.k_yaw * err).clamped(world.v_max, world.omega_max);
    }

    let mut desired = to_target.angle();
    let nearest = nearest_boundary_point(p, world);

    if let Some((q, d)) = nearest {
        if d < gains.d_safe {
            let away = if d > 0.0 { (p - q).angle() } else { desired + PI };
            let err = normalize_angle(away - desired);
            // Only push when the desired heading points toward the boundary.
            if err.abs() < PI / 2.0 || d < 0.5 * gains.d_safe {
                let weight = (gains.d_safe - d) / gains.d_safe;
                let bias = (gains.repulse_gain * weight).min(err.abs()) * err.signum();
                desired = normalize_angle(desired + bias);
            }
        }
    }

    let inner = 0.5 * gains.d_safe;
    let inward = nearest.filter(|(_, d)| *d > 0.0 && *d < inner).map(|(q, d)| ((q - p).angle(), d));

    // Close to a boundary, slide along it rather than into it.
    if let Some((toward, _)) = inward {
        let err = normalize_angle(desired - toward);
        if err.abs() < PI / 2.0 {
            let side = if err.abs() < PI / 8.0 {
                normalize_angle(pose.heading - toward)
            } else {
                err
            };
            desired = normalize_angle(toward + FRAC_PI_2.copysign(side));
        }
    }

    let heading_err = normalize_angle(desired - pose.heading);
    let mut surge = (gains.k_surge * dist).min(world.v_max) * heading_err.cos().max(0.0);

    // Closing speed toward the boundary vanishes at the collision distance.
    if let Some((toward, d)) = inward {
        let closing = normalize_angle(toward - pose.heading).cos();
        if closing > 0.0 {
            let allowed = world.v_max * ((d - world.d_col) / (inner - world.d_col).max(1e-9)).clamp(0.0, 1.0);
            surge = surge.min(allowed / closing);
        }
    }
    ControlInput::new(surge, gains.k_yaw * heading_err).clamped(world.v_max, world.omega_max)
}

/// Drives toward a point (not a pose) at up to `speed`.
pub fn pursue_point(
    vehicle: &VehicleState,
    point: Vec2,
    speed: f64,
    world: &WorldConfig,
    gains: &ControllerGains,
) -> ControlInput {
    let target = FormationTarget {
        position: point,
        heading: vehicle.pose.heading,
    };
    let mut cmd = baseline_controller(vehicle, &target, world, gains);
    cmd.surge_cmd = cmd.surge_cmd.min(speed);
    cmd
}

fn hull_distance(p: Vec2, world: &WorldConfig) -> f64 {
    if world.inside_hull(p) {
        return 0.0;
    }
    world
        .edges()
        .map(|(a, b)| point_segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

fn leg_distance(a: Vec2, b: Vec2, world: &WorldConfig) -> f64 {
    if world.inside_hull(a) || world.inside_hull(b) {
        return 0.0;
    }
    world
        .edges()
        .map(|(c, d)| {
            if segments_intersect(a, b, c, d) {
                0.0
            } else {
                point_segment_distance(a, c, d)
                    .min(point_segment_distance(b, c, d))
                    .min(point_segment_distance(c, a, b))
                    .min(point_segment_distance(d, a, b))
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Hull corners pushed out along their bisectors until both adjacent edges
/// are `world.standoff` away.
pub fn standoff_corners(world: &WorldConfig) -> Vec<Vec2> {
    let n = world.hull.len();
    if n < 3 {
        return Vec::new();
    }
    (0..n)
        .filter_map(|i| {
            let (prev, next) = (world.outward_normal((i + n - 1) % n), world.outward_normal(i));
            let bisector = (prev + next).normalized()?;
            let scale = (1.0 / bisector.dot(next).max(1e-3)).min(3.0);
            let c = world.hull[i] + bisector * (world.standoff * scale);
            (!point_in_polygon(c, &world.hull)).then_some(c)
        })
        .collect()
}

/// First point on the shortest route from `from` to `to` that keeps
/// `clearance` from the hull, travelling through [`standoff_corners`].
/// Legs that start or end closer than `clearance` only need to avoid
/// getting closer still. Returns `to` when the direct leg is clear or no
/// route exists.
pub fn next_via_point(from: Vec2, to: Vec2, world: &WorldConfig, clearance: f64) -> Vec2 {
    if world.hull.len() < 3 {
        return to;
    }
    let mut nodes = vec![from];
    nodes.extend(standoff_corners(world));
    nodes.push(to);
    let margin: Vec<f64> = nodes
        .iter()
        .map(|p| hull_distance(*p, world).min(clearance) - 1e-9)
        .collect();
    let goal = nodes.len() - 1;
    let clear = |i: usize, j: usize| leg_distance(nodes[i], nodes[j], world) >= margin[i].min(margin[j]);
    if clear(0, goal) {
        return to;
    }

    // Dijkstra backwards from the goal so the answer is the start's successor.
    let mut dist = vec![f64::INFINITY; nodes.len()];
    let mut next = vec![None; nodes.len()];
    let mut done = vec![false; nodes.len()];
    dist[goal] = 0.0;
    while let Some(u) = (0..nodes.len())
        .filter(|&i| !done[i] && dist[i].is_finite())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
    {
        done[u] = true;
        if u == 0 {
            break;
        }
        for v in 0..nodes.len() {
            if done[v] || !clear(u, v) {
                continue;
            }
            let d = dist[u] + nodes[u].distance(nodes[v]);
            if d < dist[v] {
                dist[v] = d;
                next[v] = Some(u);
            }
        }
    }
    next[0].map_or(to, |i| nodes[i])
}
