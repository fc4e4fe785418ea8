//! Scene files: versioned TOML documents describing the hull, obstacles, PoI,
//! limits, the scripted leader patrol and the default link/formation/sonar
//! parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::ChannelConfig;
use crate::geometry::Vec2;
use crate::guidance::{formation_target, FormationSpec};
use crate::sonar::SonarConfig;
use crate::world::{distance_to_boundary, Pose2D, VehicleState, WorldConfig, WorldState};

pub const SCENE_SCHEMA: u32 = 1;

const STANDARD_SCENE: &str = include_str!("../scenes/standard.toml");

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scene: {0}")]
    Parse(String),
    #[error("unsupported scene schema {found} (expected {SCENE_SCHEMA})")]
    SchemaMismatch { found: u32 },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub position: Vec2,
    #[serde(default)]
    pub heading: f64,
}

impl StartPose {
    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.position.x, self.position.y, self.heading)
    }
}

/// Back-and-forth leader patrol between two (jittered) points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatrolSpec {
    pub a: Vec2,
    pub b: Vec2,
    /// Each endpoint is perturbed by up to this much per axis, per episode.
    #[serde(default)]
    pub jitter: f64,
    pub speed: f64,
    /// Seconds spent stationary at each endpoint.
    #[serde(default)]
    pub dwell: f64,
}

/// Follower start randomization around its initial formation target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnSpec {
    pub radius: f64,
}

impl Default for SpawnSpec {
    fn default() -> Self {
        Self { radius: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub world: WorldConfig,
    pub leader: StartPose,
    /// Follower start for sessions; defaults to the leader's formation slot.
    #[serde(default)]
    pub follower: Option<StartPose>,
    pub patrol: PatrolSpec,
    #[serde(default)]
    pub spawn: SpawnSpec,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub formation: FormationSpec,
    #[serde(default)]
    pub sonar: SonarConfig,
    /// Where the leader withdraws to on abort; defaults to its start.
    #[serde(default)]
    pub retreat: Option<Vec2>,
}

impl Scene {
    pub fn standard() -> Scene {
        Scene::from_toml_str(STANDARD_SCENE).expect("bundled standard scene is valid")
    }

    pub fn standard_toml() -> &'static str {
        STANDARD_SCENE
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scene::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Scene, SceneError> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
        let schema = raw
            .get("schema")
            .and_then(|v| v.as_integer())
            .ok_or_else(|| SceneError::Parse("missing integer `schema` field".into()))?;
        if schema != SCENE_SCHEMA as i64 {
            return Err(SceneError::SchemaMismatch {
                found: schema.max(0) as u32,
            });
        }
        let scene: Scene = raw
            .try_into()
            .map_err(|e: toml::de::Error| SceneError::Parse(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let invalid = |m: String| SceneError::Invalid(m);
        self.world.validate().map_err(|e| invalid(e.to_string()))?;
        self.channel.validate(self.world.dt).map_err(invalid)?;
        self.formation.validate().map_err(|e| invalid(e.to_string()))?;
        self.sonar.validate().map_err(invalid)?;
        if !(self.patrol.speed > 0.0) || self.patrol.jitter < 0.0 || self.patrol.dwell < 0.0 {
            return Err(invalid("patrol speed must be > 0; jitter and dwell >= 0".into()));
        }
        if !(self.spawn.radius >= 0.0) {
            return Err(invalid("spawn radius must be >= 0".into()));
        }
        for (what, p) in [
            ("leader start", self.leader.position),
            ("patrol.a", self.patrol.a),
            ("patrol.b", self.patrol.b),
        ] {
            if !self.world.bounds.contains(p) || self.world.inside_hull(p) {
                return Err(invalid(format!("{what} lies outside the navigable area")));
            }
        }
        Ok(())
    }

    pub fn retreat_point(&self) -> Vec2 {
        self.retreat.unwrap_or(self.leader.position)
    }

    /// Session start: leader at its start pose, follower at the configured
    /// start or, failing that, on its formation slot facing the PoI.
    pub fn initial_state(&self) -> WorldState {
        let leader = VehicleState::at(self.leader.pose());
        let follower_pose = match self.follower {
            Some(f) => f.pose(),
            None => match formation_target(&leader.pose, self.world.poi, &self.formation) {
                Ok(t) => t.pose(),
                Err(_) => self.leader.pose(),
            },
        };
        WorldState::new(leader, VehicleState::at(follower_pose))
    }

    /// Clearance of a point from hull and obstacles.
    pub fn clearance(&self, p: Vec2) -> f64 {
        distance_to_boundary(p, &self.world)
    }
}
