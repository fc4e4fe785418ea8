use serde::{Deserialize, Serialize};

use super::env::{episode_seed, Controller, Env, EnvConfig};
use super::RlError;
use crate::metrics::{AggregateMetrics, EpisodeMetrics, MetricsAccumulator};
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: u64,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
    #[serde(rename = "return")]
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub controller: String,
    pub aggregate: AggregateMetrics,
    pub episodes: Vec<EpisodeResult>,
}

/// Runs one episode to completion and returns its metrics and return.
pub fn run_episode(
    controller: &mut dyn Controller,
    env: &mut Env,
    seed: u64,
) -> Result<(EpisodeMetrics, f64), RlError> {
    controller.begin_episode(seed);
    env.reset(seed);
    let mut acc = MetricsAccumulator::new(env.config().d_viol);
    let mut ret = 0.0;
    loop {
        let cmd = controller.act(&env.view());
        let tr = env.step_control(cmd)?;
        acc.accumulate(&tr.info.sample);
        ret += tr.reward;
        if tr.done {
            break;
        }
    }
    Ok((acc.finalize().map_err(|_| RlError::NoEpisodes)?, ret))
}

/// Episodes with seeded randomized starts; results are ordered by episode index.
pub fn evaluate(
    controller: &mut dyn Controller,
    scene: &Scene,
    config: EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<Evaluation, RlError> {
    if n_episodes == 0 {
        return Err(RlError::NoEpisodes);
    }
    let mut env = Env::new(scene.clone(), config);
    let mut episodes = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes as u64 {
        let s = episode_seed(seed, i);
        let (metrics, ret) = run_episode(controller, &mut env, s)?;
        episodes.push(EpisodeResult {
            episode: i,
            seed: s,
            metrics,
            ret,
        });
    }
    let pairs: Vec<(EpisodeMetrics, f64)> = episodes.iter().map(|e| (e.metrics.clone(), e.ret)).collect();
    Ok(Evaluation {
        controller: controller.name().to_string(),
        aggregate: AggregateMetrics::from_episodes(&pairs),
        episodes,
    })
}
