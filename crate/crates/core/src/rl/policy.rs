use std::path::Path;

use rand::Rng;

use super::env::{ActionSet, AgentView, Controller, Observation, N_ACTIONS, OBS_DIM};
use super::nn::{Mlp, NnError};
use crate::world::ControlInput;

/// Fixed input scaling applied before the network; not stored in the weights file.
pub const INPUT_SCALE: Observation = [
    0.1,
    0.1,
    1.0 / std::f64::consts::PI,
    0.05,
    0.05,
    0.05,
    0.1,
    1.0,
    1.0,
];

pub fn features(obs: &Observation) -> Vec<f64> {
    obs.iter().zip(INPUT_SCALE).map(|(o, s)| o * s).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: Mlp,
    /// Greedy policies ignore the exploration rate.
    pub greedy: bool,
}

impl Policy {
    pub fn new(net: Mlp) -> Result<Self, NnError> {
        let sizes = net.sizes();
        if sizes.first() != Some(&OBS_DIM) || sizes.last() != Some(&N_ACTIONS) {
            return Err(NnError::ShapeMismatch {
                expected: vec![OBS_DIM, N_ACTIONS],
                found: sizes,
            });
        }
        Ok(Self { net, greedy: true })
    }

    pub fn q_values(&self, obs: &Observation) -> Vec<f64> {
        self.net.forward(&features(obs))
    }

    pub fn act(&self, obs: &Observation) -> usize {
        argmax(&self.q_values(obs))
    }

    pub fn act_epsilon(&self, obs: &Observation, epsilon: f64, rng: &mut impl Rng) -> usize {
        if !self.greedy && rng.gen::<f64>() < epsilon {
            rng.gen_range(0..N_ACTIONS)
        } else {
            self.act(obs)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        self.net.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Policy::new(Mlp::load(path)?)
    }
}

impl Controller for Policy {
    fn act(&mut self, view: &AgentView<'_>) -> ControlInput {
        ActionSet::for_world(view.world).control(Policy::act(self, view.obs))
    }

    fn name(&self) -> &str {
        "policy"
    }
}
