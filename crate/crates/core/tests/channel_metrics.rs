mod support;

use hullwatch::comms::{ChannelConfig, ChannelState, PoseMessage};
use hullwatch::metrics::{MetricsAccumulator, StepSample};
use hullwatch::world::Pose2D;
use proptest::prelude::*;
use support::*;

#[test]
fn drop_rate_matches_configuration() {
    let f = delivered_fraction(0.3, 10_000, 42);
    assert!((0.68..=0.72).contains(&f), "delivered fraction {f}");
}

#[test]
fn latency_schedule_matches_hand_simulation() {
    assert_eq!(latency_schedule(30), EXPECTED_LATENCY_SCHEDULE.to_vec());
}

fn trace(cfg: &ChannelConfig, seed: u64, steps: usize) -> Vec<Option<PoseMessage>> {
    let mut ch = ChannelState::new(seed);
    (0..steps)
        .map(|k| {
            let t = k as f64 * 0.1;
            ch.broadcast(cfg, t, Pose2D::new(t.sin(), t.cos(), 0.0));
            ch.deliver(cfg, t)
        })
        .collect()
}

fn arb_channel() -> impl Strategy<Value = ChannelConfig> {
    (1u32..20, 0.0..3.0f64, 0.0..=1.0f64, any::<u64>()).prop_map(|(k, latency, drop_prob, seed)| ChannelConfig {
        period: k as f64 * 0.1,
        latency,
        drop_prob,
        seed,
    })
}

fn sample(visible: bool, deviation: f64, clearance: f64) -> StepSample {
    StepSample {
        time: 0.0,
        poi_visible: visible,
        formation_deviation: deviation,
        min_clearance: clearance,
        collided: false,
    }
}

#[test]
fn four_step_fixture() {
    let mut acc = MetricsAccumulator::new(1.0);
    for v in [true, true, false, true] {
        acc.accumulate(&sample(v, 1.0, 5.0));
    }
    let m = acc.finalize().unwrap();
    assert_eq!(m.visibility_fraction, 0.75);
    assert_eq!(m.mean_formation_deviation, 1.0);

    let mut acc = MetricsAccumulator::new(2.0);
    for c in [3.0, 1.0, 3.0, 1.0] {
        acc.accumulate(&sample(true, 0.0, c));
    }
    assert_eq!(acc.finalize().unwrap().safety_violations, 2);
}

fn arb_samples() -> impl Strategy<Value = Vec<StepSample>> {
    prop::collection::vec((any::<bool>(), 0.0..10.0f64, 0.0..4.0f64), 1..60)
        .prop_map(|v| v.into_iter().map(|(a, b, c)| sample(a, b, c)).collect())
}

fn run(samples: &[StepSample], acc: &mut MetricsAccumulator) {
    samples.iter().for_each(|s| acc.accumulate(s));
}

proptest! {
    #[test]
    fn delivered_seq_never_decreases(cfg in arb_channel()) {
        let mut last = None;
        for m in trace(&cfg, cfg.seed, 300).into_iter().flatten() {
            prop_assert!(last.is_none_or(|l| m.seq > l));
            last = Some(m.seq);
        }
    }

    #[test]
    fn same_seed_same_trace(cfg in arb_channel()) {
        prop_assert_eq!(trace(&cfg, cfg.seed, 300), trace(&cfg, cfg.seed, 300));
    }

    #[test]
    fn lossless_instant_channel_relays_each_period(k in 1u32..20) {
        let cfg = ChannelConfig { period: k as f64 * 0.1, latency: 0.0, drop_prob: 0.0, seed: 0 };
        let mut ch = ChannelState::new(9);
        for step in 0..200u32 {
            let t = step as f64 * 0.1;
            let pose = Pose2D::new(t, -t, 0.5);
            ch.broadcast(&cfg, t, pose);
            let got = ch.deliver(&cfg, t);
            if step % k == 0 {
                prop_assert_eq!(got.map(|m| m.pose), Some(pose));
            } else {
                prop_assert!(got.is_none());
            }
        }
    }

    #[test]
    fn visibility_and_deviation_are_permutation_invariant(samples in arb_samples(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = samples.clone();
        shuffled.shuffle(&mut rng(seed));
        let (mut a, mut b) = (MetricsAccumulator::new(1.0), MetricsAccumulator::new(1.0));
        run(&samples, &mut a);
        run(&shuffled, &mut b);
        let (a, b) = (a.finalize().unwrap(), b.finalize().unwrap());
        prop_assert_eq!(a.visibility_fraction, b.visibility_fraction);
        prop_assert!((a.mean_formation_deviation - b.mean_formation_deviation).abs() <= 1e-12);
    }

    #[test]
    fn split_episodes_recombine(samples in arb_samples(), cut in 0usize..60) {
        let cut = cut.min(samples.len());
        let mut whole = MetricsAccumulator::new(1.0);
        run(&samples, &mut whole);
        let mut head = MetricsAccumulator::new(1.0);
        run(&samples[..cut], &mut head);
        let mut tail = head.continuation();
        run(&samples[cut..], &mut tail);
        let merged = head.merge(&tail);
        prop_assert_eq!(merged.steps, whole.steps);
        prop_assert_eq!(merged.visible_steps, whole.visible_steps);
        prop_assert_eq!(merged.violations, whole.violations);
        prop_assert!((merged.deviation_sum - whole.deviation_sum).abs() <= 1e-9);
    }
}
