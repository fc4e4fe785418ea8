//! Follower learning: observation and reward, a gym-style environment with a
//! patrolling leader, an in-repo Q-network, DQN-style training and evaluation.

mod env;
mod eval;
pub mod nn;
mod policy;
mod train;

use thiserror::Error;

pub use env::{
    encode_observation, episode_seed, obs_index, reward, reward_terms, ActionSet, AgentView,
    BaselineController, Controller, Env, EnvConfig, ObsContext, Observation, Patrol, Perception,
    RandomController, RewardWeights, StepInfo, Transition, DEFAULT_D_CAP, DEFAULT_HOLD_RADIUS, N_ACTIONS, OBS_DIM,
};
pub use eval::{evaluate, run_episode, EpisodeResult, Evaluation};
pub use policy::{argmax, features, Policy, INPUT_SCALE};
pub use train::{train, EpisodeLog, TrainConfig, TrainLog};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("action index {0} out of range")]
    InvalidAction(usize),
    #[error("Q-values diverged in episode {episode} (mean |Q| = {mean_abs_q})")]
    DivergenceDetected {
        episode: usize,
        mean_abs_q: f64,
        log: TrainLog,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("evaluation needs at least one episode")]
    NoEpisodes,
    #[error("weights: {0}")]
    Weights(#[from] nn::NnError),
}

#[cfg(test)]
mod tests;
