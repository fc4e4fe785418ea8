use serde::{Deserialize, Serialize};

use super::{Action, IntentCommand};
use crate::bt::MissionParams;
use crate::geometry::{closest_point_on_segment, normalize_angle, Vec2};
use crate::world::{region_waypoints, Region, Waypoint, WorldConfig, WorldError};

/// What the session should do with a validated command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "directive")]
pub enum MissionDirective {
    Start {
        template: String,
        waypoints: Vec<Waypoint>,
    },
    Abort,
    Hold,
    Report {
        region: Option<Region>,
        point: Option<Vec2>,
    },
    SetFormation {
        radius: Option<f64>,
        offset: Option<f64>,
    },
}

impl MissionDirective {
    pub fn mission_params(&self) -> Option<(&str, MissionParams)> {
        match self {
            MissionDirective::Start {
                template,
                waypoints,
            } => Some((
                template,
                MissionParams {
                    waypoints: waypoints.clone(),
                },
            )),
            _ => None,
        }
    }
}

/// A waypoint at `p` facing the nearest hull point (the PoI without a hull).
fn waypoint_at(p: Vec2, world: &WorldConfig) -> Waypoint {
    let look_at = world
        .edges()
        .map(|(a, b)| closest_point_on_segment(p, a, b))
        .min_by(|x, y| x.distance(p).total_cmp(&y.distance(p)))
        .unwrap_or(world.poi);
    let d = look_at - p;
    let heading = if d.norm() > 1e-9 { normalize_angle(d.angle()) } else { 0.0 };
    Waypoint { position: p, heading }
}

fn middle(mut wps: Vec<Waypoint>) -> Waypoint {
    let i = wps.len() / 2;
    wps.swap_remove(i)
}

pub fn command_to_mission(cmd: &IntentCommand, world: &WorldConfig) -> Result<MissionDirective, WorldError> {
    Ok(match cmd.action {
        Action::Inspect => {
            let waypoints = match (cmd.region, cmd.point) {
                (Some(r), _) => region_waypoints(world, r)?,
                (None, Some(p)) => vec![waypoint_at(p, world)],
                (None, None) => {
                    return Err(WorldError::InvalidConfig("Inspect without region or point".into()))
                }
            };
            MissionDirective::Start {
                template: "hull_inspection".into(),
                waypoints,
            }
        }
        Action::GoTo => {
            let wp = match (cmd.region, cmd.point) {
                (_, Some(p)) => waypoint_at(p, world),
                (Some(r), None) => middle(region_waypoints(world, r)?),
                (None, None) => {
                    return Err(WorldError::InvalidConfig("GoTo without region or point".into()))
                }
            };
            MissionDirective::Start {
                template: "goto".into(),
                waypoints: vec![wp],
            }
        }
        Action::Abort => MissionDirective::Abort,
        Action::Hold => MissionDirective::Hold,
        Action::Report => MissionDirective::Report {
            region: cmd.region,
            point: cmd.point,
        },
        Action::SetFormation => MissionDirective::SetFormation {
            radius: cmd.radius(),
            offset: cmd.offset(),
        },
    })
}
