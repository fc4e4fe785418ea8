//! Coordination-quality metrics: PoI visibility fraction, mean formation
//! deviation and edge-triggered near-collision events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_D_VIOL: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("episode has no samples")]
    EmptyEpisode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSample {
    pub time: f64,
    pub poi_visible: bool,
    pub formation_deviation: f64,
    pub min_clearance: f64,
    pub collided: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub visibility_fraction: f64,
    pub mean_formation_deviation: f64,
    pub safety_violations: u64,
    pub collided: bool,
    pub steps: u64,
}

/// Running sums for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    pub d_viol: f64,
    pub steps: u64,
    pub visible_steps: u64,
    pub deviation_sum: f64,
    pub violations: u64,
    pub in_violation: bool,
    pub collided: bool,
}

impl MetricsAccumulator {
    pub fn new(d_viol: f64) -> Self {
        Self {
            d_viol,
            steps: 0,
            visible_steps: 0,
            deviation_sum: 0.0,
            violations: 0,
            in_violation: false,
            collided: false,
        }
    }

    pub fn accumulate(&mut self, sample: &StepSample) {
        self.steps += 1;
        if sample.poi_visible {
            self.visible_steps += 1;
        }
        self.deviation_sum += sample.formation_deviation;
        let inside = sample.min_clearance < self.d_viol;
        if inside && !self.in_violation {
            self.violations += 1;
        }
        self.in_violation = inside;
        self.collided |= sample.collided;
    }

    pub fn finalize(&self) -> Result<EpisodeMetrics, MetricsError> {
        if self.steps == 0 {
            return Err(MetricsError::EmptyEpisode);
        }
        Ok(EpisodeMetrics {
            visibility_fraction: self.visible_steps as f64 / self.steps as f64,
            mean_formation_deviation: self.deviation_sum / self.steps as f64,
            safety_violations: self.violations,
            collided: self.collided,
            steps: self.steps,
        })
    }

    /// Combines with the accumulator of the episode's continuation. `next`
    /// must have been started with this accumulator's zone state carried over.
    pub fn merge(&self, next: &MetricsAccumulator) -> MetricsAccumulator {
        MetricsAccumulator {
            d_viol: self.d_viol,
            steps: self.steps + next.steps,
            visible_steps: self.visible_steps + next.visible_steps,
            deviation_sum: self.deviation_sum + next.deviation_sum,
            violations: self.violations + next.violations,
            in_violation: next.in_violation,
            collided: self.collided || next.collided,
        }
    }

    /// Fresh accumulator continuing this one's violation-zone state.
    pub fn continuation(&self) -> MetricsAccumulator {
        MetricsAccumulator {
            in_violation: self.in_violation,
            ..MetricsAccumulator::new(self.d_viol)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat {
                mean: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        Stat {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Multi-episode summary produced by evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub episodes: usize,
    pub visibility_fraction: Stat,
    pub mean_formation_deviation: Stat,
    pub safety_violations: Stat,
    pub collisions: usize,
    pub mean_return: f64,
}

impl AggregateMetrics {
    /// Reduces per-episode results in episode-index order.
    pub fn from_episodes(episodes: &[(EpisodeMetrics, f64)]) -> Self {
        let vis: Vec<f64> = episodes.iter().map(|(m, _)| m.visibility_fraction).collect();
        let dev: Vec<f64> = episodes.iter().map(|(m, _)| m.mean_formation_deviation).collect();
        let viol: Vec<f64> = episodes.iter().map(|(m, _)| m.safety_violations as f64).collect();
        let returns: Vec<f64> = episodes.iter().map(|(_, r)| *r).collect();
        Self {
            episodes: episodes.len(),
            visibility_fraction: Stat::of(&vis),
            mean_formation_deviation: Stat::of(&dev),
            safety_violations: Stat::of(&viol),
            collisions: episodes.iter().filter(|(m, _)| m.collided).count(),
            mean_return: Stat::of(&returns).mean,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(visible: bool, dev: f64, clearance: f64) -> StepSample {
        StepSample {
            time: 0.0,
            poi_visible: visible,
            formation_deviation: dev,
            min_clearance: clearance,
            collided: false,
        }
    }

    #[test]
    fn consecutive_violations_count_once() {
        let mut acc = MetricsAccumulator::new(2.0);
        for _ in 0..3 {
            acc.accumulate(&sample(true, 0.0, 1.0));
        }
        assert_eq!(acc.finalize().unwrap().safety_violations, 1);
    }

    #[test]
    fn alternating_clearance_counts_entries() {
        let mut acc = MetricsAccumulator::new(2.0);
        for c in [3.0, 1.0, 3.0, 1.0] {
            acc.accumulate(&sample(true, 0.0, c));
        }
        assert_eq!(acc.finalize().unwrap().safety_violations, 2);
    }

    #[test]
    fn all_visible() {
        let mut acc = MetricsAccumulator::new(1.0);
        for _ in 0..7 {
            acc.accumulate(&sample(true, 0.5, 5.0));
        }
        assert_eq!(acc.visible_steps, acc.steps);
        assert_eq!(acc.finalize().unwrap().visibility_fraction, 1.0);
    }

    #[test]
    fn single_clear_sample() {
        let mut acc = MetricsAccumulator::new(1.0);
        acc.accumulate(&sample(true, 0.25, 5.0));
        assert_eq!(
            acc.finalize().unwrap(),
            EpisodeMetrics {
                visibility_fraction: 1.0,
                mean_formation_deviation: 0.25,
                safety_violations: 0,
                collided: false,
                steps: 1,
            }
        );
    }

    #[test]
    fn empty_episode_errors() {
        assert_eq!(
            MetricsAccumulator::new(1.0).finalize(),
            Err(MetricsError::EmptyEpisode)
        );
    }

    #[test]
    fn collision_is_sticky() {
        let mut acc = MetricsAccumulator::new(1.0);
        let mut s = sample(false, 1.0, 0.1);
        s.collided = true;
        acc.accumulate(&s);
        acc.accumulate(&sample(false, 1.0, 0.1));
        assert!(acc.finalize().unwrap().collided);
    }
}
