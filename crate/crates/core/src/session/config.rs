use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::comms::ChannelConfig;
use crate::guidance::FormationSpec;
use crate::intent::LlmConfig;
use crate::metrics::DEFAULT_D_VIOL;
use crate::rl::{BaselineController, Controller, Policy, RandomController, TrainConfig};
use crate::scene::Scene;
use crate::sonar::SonarConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum PolicySource {
    Baseline,
    Random,
    Weights(PathBuf),
}

impl FromStr for PolicySource {
    type Err = std::convert::Infallible;

    /// `baseline`, `random`, or a path to a weights file.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "baseline" => PolicySource::Baseline,
            "random" => PolicySource::Random,
            path => PolicySource::Weights(PathBuf::from(path)),
        })
    }
}

impl fmt::Display for PolicySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySource::Baseline => f.write_str("baseline"),
            PolicySource::Random => f.write_str("random"),
            PolicySource::Weights(p) => write!(f, "{}", p.display()),
        }
    }
}

impl From<String> for PolicySource {
    fn from(s: String) -> Self {
        let Ok(p) = s.parse();
        p
    }
}

impl From<PolicySource> for String {
    fn from(p: PolicySource) -> Self {
        p.to_string()
    }
}

impl PolicySource {
    pub fn controller(&self, seed: u64) -> Result<Box<dyn Controller + Send>, SessionError> {
        Ok(match self {
            PolicySource::Baseline => Box::new(BaselineController::default()),
            PolicySource::Random => Box::new(RandomController::new(seed)),
            PolicySource::Weights(path) => Box::new(Policy::load(path)?),
        })
    }
}

/// An operator command injected at a fixed session time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCommand {
    pub time: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Scene file; the bundled standard scene when absent.
    pub scene: Option<PathBuf>,
    /// Overrides for the scene's defaults.
    pub channel: Option<ChannelConfig>,
    pub formation: Option<FormationSpec>,
    pub sonar: Option<SonarConfig>,
    pub policy: PolicySource,
    /// 1.0 runs at wall-clock speed, 0 as fast as possible.
    pub realtime_factor: f64,
    pub listen: String,
    pub record: Option<PathBuf>,
    pub seed: u64,
    pub snapshot_every: u64,
    /// Seconds after which the last Teleop command is dropped.
    pub teleop_timeout: f64,
    /// Seconds an inspection segment must stay in the leader's sonar footprint.
    pub inspect_dwell: f64,
    /// Headless runs stop after this many steps; also the evaluation episode length.
    pub max_steps: u64,
    /// Evaluation episodes.
    pub episodes: u64,
    /// Training hyperparameters.
    pub train: TrainConfig,
    /// Where training writes the weights file.
    pub weights_out: PathBuf,
    /// Training log (JSON lines); next to the weights file when absent.
    pub train_log: Option<PathBuf>,
    pub d_viol: f64,
    pub llm: LlmConfig,
    pub script: Vec<ScriptedCommand>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            scene: None,
            channel: None,
            formation: None,
            sonar: None,
            policy: PolicySource::Baseline,
            realtime_factor: 1.0,
            listen: "127.0.0.1:8765".into(),
            record: None,
            seed: 0,
            snapshot_every: 2,
            teleop_timeout: 1.0,
            inspect_dwell: 5.0,
            max_steps: 600,
            episodes: 20,
            train: TrainConfig::default(),
            weights_out: PathBuf::from("policy.bin"),
            train_log: None,
            d_viol: DEFAULT_D_VIOL,
            llm: LlmConfig::default(),
            script: Vec::new(),
        }
    }
}

impl SessionConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SessionError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SessionError> {
        let cfg: SessionConfig =
            toml::from_str(text).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configured scene file, or the standard scene.
    pub fn base_scene(&self) -> Result<Scene, SessionError> {
        Ok(match &self.scene {
            Some(path) => Scene::load(path)?,
            None => Scene::standard(),
        })
    }

    pub fn apply_overrides(&self, mut scene: Scene) -> Result<Scene, SessionError> {
        if let Some(c) = self.channel {
            scene.channel = c;
        }
        if let Some(f) = self.formation {
            scene.formation = f;
        }
        if let Some(s) = self.sonar {
            scene.sonar = s;
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn resolve_scene(&self) -> Result<Scene, SessionError> {
        self.apply_overrides(self.base_scene()?)
    }

    pub fn train_log_path(&self) -> PathBuf {
        self.train_log.clone().unwrap_or_else(|| {
            let mut p = self.weights_out.clone().into_os_string();
            p.push(".log.jsonl");
            PathBuf::from(p)
        })
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::InvalidConfig(m.to_string()));
        if !(self.realtime_factor >= 0.0 && self.realtime_factor.is_finite()) {
            return bad("realtime_factor must be >= 0");
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be >= 1");
        }
        if !(self.teleop_timeout > 0.0) {
            return bad("teleop_timeout must be > 0");
        }
        if !(self.inspect_dwell >= 0.0) {
            return bad("inspect_dwell must be >= 0");
        }
        if !(self.d_viol >= 0.0) {
            return bad("d_viol must be >= 0");
        }
        if self.max_steps == 0 || self.episodes == 0 {
            return bad("max_steps and episodes must be >= 1");
        }
        self.train
            .validate()
            .map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        if self.script.iter().any(|c| !(c.time >= 0.0)) {
            return bad("script times must be >= 0");
        }
        Ok(())
    }
}
