//! Leader → follower pose broadcast over a lossy, delayed link.
//!
//! The leader offers its pose once per period; each offer survives with
//! probability `1 − drop_prob` (one draw from the seeded generator per
//! boundary) and is released `latency` seconds later. The follower only ever
//! sees the newest released message and holds it until a newer one arrives.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::world::Pose2D;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub period: f64,
    pub latency: f64,
    pub drop_prob: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            period: 0.5,
            latency: 0.2,
            drop_prob: 0.1,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    /// Lossless, zero-latency relay every step.
    pub fn perfect(dt: f64) -> Self {
        Self {
            period: dt,
            latency: 0.0,
            drop_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self, dt: f64) -> Result<(), String> {
        if !(self.period > 0.0) {
            return Err(format!("channel period must be > 0, got {}", self.period));
        }
        let ratio = self.period / dt;
        if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
            return Err(format!(
                "channel period {} is not an integer multiple of dt {dt}",
                self.period
            ));
        }
        if !(self.latency >= 0.0) {
            return Err(format!("channel latency must be >= 0, got {}", self.latency));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(format!("drop_prob must be in [0, 1], got {}", self.drop_prob));
        }
        Ok(())
    }

    pub fn is_boundary(&self, time: f64) -> bool {
        let k = (time / self.period).round();
        k >= 0.0 && (time - k * self.period).abs() <= TIME_EPS * time.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMessage {
    pub seq: u64,
    pub sent_at: f64,
    pub pose: Pose2D,
}

#[derive(Debug, Clone)]
pub struct ChannelState {
    in_flight: VecDeque<PoseMessage>,
    last_delivered: Option<PoseMessage>,
    next_seq: u64,
    rng: ChaCha8Rng,
}

impl ChannelState {
    pub fn new(seed: u64) -> Self {
        Self {
            in_flight: VecDeque::new(),
            last_delivered: None,
            next_seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &PoseMessage> {
        self.in_flight.iter()
    }

    pub fn last_delivered(&self) -> Option<&PoseMessage> {
        self.last_delivered.as_ref()
    }

    /// Offers the leader pose; only period boundaries draw from the generator.
    pub fn broadcast(&mut self, config: &ChannelConfig, time: f64, pose: Pose2D) {
        if !config.is_boundary(time) {
            return;
        }
        let draw: f64 = self.rng.gen();
        if draw < config.drop_prob {
            return;
        }
        self.in_flight.push_back(PoseMessage {
            seq: self.next_seq,
            sent_at: time,
            pose,
        });
        self.next_seq += 1;
    }

    /// Releases every message due by `time` and returns the newest, if it is newer
    /// than anything delivered before.
    pub fn deliver(&mut self, config: &ChannelConfig, time: f64) -> Option<PoseMessage> {
        let mut newest: Option<PoseMessage> = None;
        self.in_flight.retain(|m| {
            let due = m.sent_at + config.latency <= time + TIME_EPS;
            if due && newest.map_or(true, |n| m.seq > n.seq) {
                newest = Some(*m);
            }
            !due
        });
        let newest = newest?;
        if self.last_delivered.is_some_and(|l| newest.seq <= l.seq) {
            return None;
        }
        self.last_delivered = Some(newest);
        Some(newest)
    }

    /// Zero-order hold: the last delivered pose and its age.
    pub fn last_known(&self, time: f64) -> Option<(Pose2D, f64)> {
        self.last_delivered.map(|m| (m.pose, time - m.sent_at))
    }
}
