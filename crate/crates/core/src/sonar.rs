//! Forward-looking multibeam sonar: per-beam ray casts against the scene and a
//! geometric PoI visibility predicate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{
    normalize_angle, ray_circle_intersection, ray_segment_intersection, segment_circle_params,
    segment_segment_params, Vec2,
};
use crate::world::{Pose2D, VehicleState, WorldConfig};

/// Intersections closer than this to the PoI never occlude it.
pub const POI_ENDPOINT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SonarConfig {
    /// Full angular width, radians, in (0, 2π].
    pub fov: f64,
    pub n_beams: usize,
    pub max_range: f64,
}

impl Default for SonarConfig {
    fn default() -> Self {
        Self {
            fov: 2.0 * PI / 3.0,
            n_beams: 64,
            max_range: 20.0,
        }
    }
}

impl SonarConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fov > 0.0 && self.fov <= 2.0 * PI) {
            return Err(format!("sonar fov must be in (0, 2π], got {}", self.fov));
        }
        if self.n_beams < 2 {
            return Err(format!("sonar needs at least 2 beams, got {}", self.n_beams));
        }
        if !(self.max_range > 0.0) {
            return Err("sonar max_range must be > 0".into());
        }
        Ok(())
    }

    /// Body-frame beam bearings, evenly spaced over [−fov/2, +fov/2].
    pub fn bearings(&self) -> Vec<f64> {
        let n = self.n_beams;
        let half = self.fov / 2.0;
        (0..n)
            .map(|i| -half + self.fov * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SonarScan {
    pub ranges: Vec<f64>,
    pub bearings: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Visibility {
    Visible,
    OutOfFov,
    OutOfRange,
    Occluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub visible: bool,
    /// Body-frame bearing to the PoI.
    pub bearing: f64,
    pub range: f64,
    pub reason: Visibility,
}

/// Distance along a world-frame bearing to the first hull edge or obstacle, capped at `max_range`.
pub fn ray_cast(origin: &Pose2D, bearing_world: f64, config: &SonarConfig, world: &WorldConfig) -> f64 {
    let o = origin.position();
    let dir = Vec2::from_angle(bearing_world);
    let hull_hits = world
        .edges()
        .filter_map(|(a, b)| ray_segment_intersection(o, dir, a, b));
    let circle_hits = world
        .obstacles
        .iter()
        .filter_map(|c| ray_circle_intersection(o, dir, c.center, c.radius));
    hull_hits
        .chain(circle_hits)
        .fold(config.max_range, f64::min)
}

pub fn scan(vehicle: &VehicleState, world: &WorldConfig, config: &SonarConfig) -> SonarScan {
    let bearings = config.bearings();
    let ranges = bearings
        .iter()
        .map(|b| ray_cast(&vehicle.pose, vehicle.pose.heading + b, config, world))
        .collect();
    SonarScan { ranges, bearings }
}

/// Checks FoV, then range, then line-of-sight occlusion.
pub fn poi_visible(vehicle: &VehicleState, world: &WorldConfig, config: &SonarConfig) -> VisibilityReport {
    target_visible(&vehicle.pose, world.poi, world, config)
}

/// Same predicate as [`poi_visible`] for an arbitrary hull point.
pub fn target_visible(
    pose: &Pose2D,
    target: Vec2,
    world: &WorldConfig,
    config: &SonarConfig,
) -> VisibilityReport {
    let p = pose.position();
    let rel = target - p;
    let range = rel.norm();
    let bearing = if range > 0.0 {
        normalize_angle(rel.angle() - pose.heading)
    } else {
        0.0
    };
    let report = |reason: Visibility| VisibilityReport {
        visible: reason == Visibility::Visible,
        bearing,
        range,
        reason,
    };
    if bearing.abs() > config.fov / 2.0 {
        return report(Visibility::OutOfFov);
    }
    if range > config.max_range {
        return report(Visibility::OutOfRange);
    }
    if line_of_sight_blocked(p, target, world) {
        return report(Visibility::Occluded);
    }
    report(Visibility::Visible)
}

/// True when the segment `from`–`to` touches a hull edge or obstacle anywhere
/// farther than [`POI_ENDPOINT_TOLERANCE`] from `to`.
pub fn line_of_sight_blocked(from: Vec2, to: Vec2, world: &WorldConfig) -> bool {
    let len = from.distance(to);
    if len <= POI_ENDPOINT_TOLERANCE {
        return false;
    }
    // Parameter beyond which a hit lies within the endpoint tolerance of `to`.
    let t_max = 1.0 - POI_ENDPOINT_TOLERANCE / len;
    let blocks = |t: f64| t < t_max;
    world
        .edges()
        .flat_map(|(a, b)| segment_segment_params(from, to, a, b))
        .any(blocks)
        || world
            .obstacles
            .iter()
            .flat_map(|c| {
                let mut ts = segment_circle_params(from, to, c.center, c.radius);
                // A segment starting inside an obstacle is blocked from the start.
                if from.distance(c.center) < c.radius {
                    ts.push(0.0);
                }
                ts
            })
            .any(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Bounds, Circle, HullSide};

    fn wall_scene() -> WorldConfig {
        // A long thin hull whose left face is the wall x = 2.
        WorldConfig::with_hull(
            vec![
                Vec2::new(2.0, -50.0),
                Vec2::new(3.0, -50.0),
                Vec2::new(3.0, 50.0),
                Vec2::new(2.0, 50.0),
            ],
            vec![HullSide::Port; 4],
            Vec2::new(2.0, 0.0),
            Bounds {
                min: Vec2::new(-60.0, -60.0),
                max: Vec2::new(60.0, 60.0),
            },
        )
    }

    fn empty_scene() -> WorldConfig {
        WorldConfig::with_hull(
            Vec::new(),
            Vec::new(),
            Vec2::new(5.0, 0.0),
            Bounds {
                min: Vec2::new(-60.0, -60.0),
                max: Vec2::new(60.0, 60.0),
            },
        )
    }

    #[test]
    fn ray_cast_examples() {
        let scene = wall_scene();
        let cfg = SonarConfig {
            max_range: 10.0,
            ..Default::default()
        };
        let origin = Pose2D::new(0.0, 0.0, 0.0);
        assert_eq!(ray_cast(&origin, 0.0, &cfg, &scene), 2.0);
        assert_eq!(ray_cast(&origin, PI, &cfg, &scene), 10.0);
    }

    #[test]
    fn scan_examples() {
        let v = VehicleState::at(Pose2D::new(0.0, 0.0, 0.0));
        let s = scan(&v, &empty_scene(), &SonarConfig::default());
        assert_eq!(s.ranges.len(), 64);
        assert!(s.ranges.iter().all(|&r| r == 20.0));

        let narrow = SonarConfig {
            fov: 1e-9,
            n_beams: 3,
            max_range: 10.0,
        };
        let s = scan(&v, &wall_scene(), &narrow);
        assert!((s.ranges[1] - 2.0).abs() < 1e-12);
        assert_eq!(s.bearings[1], 0.0);
    }

    #[test]
    fn visibility_examples() {
        let scene = empty_scene();
        let cfg = SonarConfig::default();
        let ahead = VehicleState::at(Pose2D::new(-5.0, 0.0, 0.0));
        let r = poi_visible(&ahead, &scene, &cfg);
        assert_eq!(r.reason, Visibility::Visible);
        assert!(r.visible);
        assert_eq!(r.range, 10.0);

        let behind = VehicleState::at(Pose2D::new(-5.0, 0.0, PI));
        assert_eq!(poi_visible(&behind, &scene, &cfg).reason, Visibility::OutOfFov);

        let far = VehicleState::at(Pose2D::new(-25.0, 0.0, 0.0));
        assert_eq!(poi_visible(&far, &scene, &cfg).reason, Visibility::OutOfRange);
    }

    #[test]
    fn poi_on_hull_is_not_self_occluded() {
        let scene = wall_scene();
        let v = VehicleState::at(Pose2D::new(-4.0, 1.0, 0.0));
        assert_eq!(poi_visible(&v, &scene, &SonarConfig::default()).reason, Visibility::Visible);
    }

    #[test]
    fn obstacle_occludes() {
        let mut scene = empty_scene();
        scene.obstacles.push(Circle {
            center: Vec2::new(0.0, 0.0),
            radius: 1.0,
        });
        let v = VehicleState::at(Pose2D::new(-5.0, 0.0, 0.0));
        assert_eq!(poi_visible(&v, &scene, &SonarConfig::default()).reason, Visibility::Occluded);
        let v = VehicleState::at(Pose2D::new(-5.0, 3.0, -0.3));
        assert_eq!(poi_visible(&v, &scene, &SonarConfig::default()).reason, Visibility::Visible);
    }
}
