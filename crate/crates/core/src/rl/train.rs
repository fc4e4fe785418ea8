use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{Env, EnvConfig, Observation, RewardWeights, N_ACTIONS, OBS_DIM};
use super::nn::{clip_grad_norm, Adam, Mlp};
use super::policy::{argmax, features, Policy};
use super::RlError;
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub max_steps_per_episode: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync: u64,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Updates start once the buffer holds this many transitions.
    pub learning_starts: usize,
    pub grad_clip: f64,
    /// Training aborts when the batch mean |Q| exceeds this.
    pub divergence_bound: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 400,
            max_steps_per_episode: 600,
            gamma: 0.99,
            learning_rate: 1e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 20_000,
            replay_capacity: 50_000,
            batch_size: 64,
            target_sync: 500,
            hidden: vec![64, 64],
            seed: 0,
            learning_starts: 1_000,
            grad_clip: 10.0,
            divergence_bound: 1e5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in (0, 1)");
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon values must be in [0, 1]");
            }
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be > 0");
        }
        if self.max_steps_per_episode == 0 || self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("max_steps, batch_size must be >= 1 and replay_capacity >= batch_size");
        }
        if self.target_sync == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("target_sync >= 1 and non-empty, non-zero hidden layers required");
        }
        if !(self.grad_clip > 0.0 && self.divergence_bound > 0.0) {
            return bad("grad_clip and divergence_bound must be > 0");
        }
        Ok(())
    }

    /// Linear decay from start to end over `epsilon_decay_steps`, then constant.
    pub fn epsilon(&self, step: u64) -> f64 {
        if self.epsilon_decay_steps == 0 || step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let f = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![OBS_DIM];
        s.extend(&self.hidden);
        s.push(N_ACTIONS);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub epsilon: f64,
    /// Mean TD loss over the episode's updates; absent before learning starts.
    pub loss: Option<f64>,
    pub steps: usize,
    pub collided: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainLog {
    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        for e in &self.episodes {
            writeln!(out, "{}", serde_json::to_string(e).expect("log serializes"))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    /// Mean return of the last `n` episodes (all if fewer).
    pub fn tail_mean_return(&self, n: usize) -> Option<f64> {
        let tail = &self.episodes[self.episodes.len().saturating_sub(n)..];
        (!tail.is_empty()).then(|| tail.iter().map(|e| e.ret).sum::<f64>() / tail.len() as f64)
    }
}

#[derive(Debug, Clone, Copy)]
struct Experience {
    obs: Observation,
    action: usize,
    reward: f64,
    next: Observation,
    terminal: bool,
}

struct Replay {
    buf: Vec<Experience>,
    cap: usize,
    head: usize,
}

impl Replay {
    fn new(cap: usize) -> Self {
        Self {
            buf: Vec::with_capacity(cap.min(1 << 20)),
            cap,
            head: 0,
        }
    }

    fn push(&mut self, e: Experience) {
        if self.buf.len() < self.cap {
            self.buf.push(e);
        } else {
            self.buf[self.head] = e;
        }
        self.head = (self.head + 1) % self.cap;
    }

    fn len(&self) -> usize {
        self.buf.len()
    }
}

/// Q-learning with uniform experience replay and a periodically synced
/// target network. The leader follows the scene's seeded patrol.
pub fn train(
    config: &TrainConfig,
    scene: &Scene,
    weights: &RewardWeights,
) -> Result<(Policy, TrainLog), RlError> {
    config.validate()?;
    weights
        .validate(scene.world.d_col)
        .map_err(RlError::InvalidConfig)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Mlp::new(&config.sizes(), &mut rng);
    net.quantize();
    let mut log = TrainLog::default();
    if config.episodes == 0 {
        return Ok((Policy::new(net)?, log));
    }

    let mut target = net.clone();
    let mut grads = net.zeros_like();
    let mut adam = Adam::new(&net, config.learning_rate);
    let mut replay = Replay::new(config.replay_capacity);
    let mut env_cfg = EnvConfig::for_scene(scene, config.max_steps_per_episode);
    env_cfg.weights = *weights;
    let mut env = Env::new(scene.clone(), env_cfg);

    let mut step: u64 = 0;
    let mut batch_x = Vec::with_capacity(config.batch_size);
    let mut batch_a = Vec::with_capacity(config.batch_size);
    let mut batch_y = Vec::with_capacity(config.batch_size);

    for episode in 0..config.episodes {
        let mut obs = env.reset(rng.gen());
        let mut ret = 0.0;
        let mut loss_sum = 0.0;
        let mut updates = 0usize;
        let mut collided = false;
        let eps_at_start = config.epsilon(step);
        loop {
            let eps = config.epsilon(step);
            let action = if rng.gen::<f64>() < eps {
                rng.gen_range(0..N_ACTIONS)
            } else {
                argmax(&net.forward(&features(&obs)))
            };
            let tr = env.step(action)?;
            ret += tr.reward;
            collided |= tr.terminal;
            replay.push(Experience {
                obs,
                action,
                reward: tr.reward,
                next: tr.obs,
                terminal: tr.terminal,
            });
            obs = tr.obs;
            step += 1;

            if replay.len() >= config.learning_starts.max(config.batch_size) {
                batch_x.clear();
                batch_a.clear();
                batch_y.clear();
                let mut abs_q = 0.0;
                for _ in 0..config.batch_size {
                    let e = replay.buf[rng.gen_range(0..replay.len())];
                    let mut y = e.reward;
                    if !e.terminal {
                        let next_q = target.forward(&features(&e.next));
                        y += config.gamma * next_q[argmax(&next_q)];
                    }
                    let x = features(&e.obs);
                    abs_q += net.forward(&x)[e.action].abs();
                    batch_x.push(x);
                    batch_a.push(e.action);
                    batch_y.push(y);
                }
                let mean_abs_q = abs_q / config.batch_size as f64;
                if !mean_abs_q.is_finite() || mean_abs_q > config.divergence_bound {
                    return Err(RlError::DivergenceDetected {
                        episode,
                        mean_abs_q,
                        log,
                    });
                }
                loss_sum += net.td_loss_grad(&batch_x, &batch_a, &batch_y, &mut grads);
                clip_grad_norm(&mut grads, config.grad_clip);
                adam.step(&mut net, &grads);
                updates += 1;
            }
            if step % config.target_sync == 0 {
                target.clone_from(&net);
            }
            if tr.done {
                break;
            }
        }
        log.episodes.push(EpisodeLog {
            episode,
            ret,
            epsilon: eps_at_start,
            loss: (updates > 0).then(|| loss_sum / updates as f64),
            steps: env.steps(),
            collided,
        });
    }
    net.quantize();
    Ok((Policy::new(net)?, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> TrainConfig {
        TrainConfig {
            episodes: 3,
            max_steps_per_episode: 50,
            learning_starts: 64,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_episodes_returns_initial_policy() {
        let cfg = TrainConfig {
            episodes: 0,
            ..TrainConfig::default()
        };
        let (p, log) = train(&cfg, &Scene::standard(), &RewardWeights::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut init = Mlp::new(&cfg.sizes(), &mut rng);
        init.quantize();
        assert_eq!(p.net, init);
        assert!(log.episodes.is_empty());
    }

    #[test]
    fn same_seed_same_log() {
        let s = Scene::standard();
        let w = RewardWeights::default();
        let (p1, l1) = train(&quick(), &s, &w).unwrap();
        let (p2, l2) = train(&quick(), &s, &w).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
        assert_eq!(l1.episodes.len(), 3);
    }

    #[test]
    fn epsilon_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(10_000) - 0.525).abs() < 1e-12);
        assert_eq!(c.epsilon(20_000), 0.05);
        assert_eq!(c.epsilon(1_000_000), 0.05);
    }

    #[test]
    fn divergence_is_detected() {
        let cfg = TrainConfig {
            divergence_bound: 1e-9,
            ..quick()
        };
        assert!(matches!(
            train(&cfg, &Scene::standard(), &RewardWeights::default()),
            Err(RlError::DivergenceDetected { .. })
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = TrainConfig {
            gamma: 1.0,
            ..quick()
        };
        assert!(matches!(
            train(&cfg, &Scene::standard(), &RewardWeights::default()),
            Err(RlError::InvalidConfig(_))
        ));
    }
}
