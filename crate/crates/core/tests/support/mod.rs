//! Independent oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls the crate's own geometry helpers.

#![allow(dead_code)]

pub mod bt;

use std::f64::consts::PI;

use hullwatch::comms::{ChannelConfig, ChannelState};
use hullwatch::guidance::{formation_target, FormationSpec, DEGENERATE_EPS};
use hullwatch::rl::nn::Mlp;
use hullwatch::world::{Bounds, Circle, HullSide, Pose2D, WorldConfig};
use hullwatch::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const BOUNDS: Bounds = Bounds {
    min: Vec2 { x: -50.0, y: -30.0 },
    max: Vec2 { x: 50.0, y: 30.0 },
};

/// Star-shaped hull (5 to 9 vertices) with up to three obstacles clear of it.
pub fn random_scene(rng: &mut impl Rng) -> WorldConfig {
    let c = Vec2::new(rng.gen_range(-25.0..25.0), rng.gen_range(-12.0..12.0));
    let n = rng.gen_range(5..=9);
    let mut angles: Vec<f64> = (0..n)
        .map(|i| (i as f64 + rng.gen_range(0.1..0.9)) * 2.0 * PI / n as f64)
        .collect();
    angles.sort_by(f64::total_cmp);
    let r_max = 10.0;
    let hull: Vec<Vec2> = angles
        .iter()
        .map(|&a| c + Vec2::new(a.cos(), a.sin()) * rng.gen_range(3.0..r_max))
        .collect();
    let labels = [HullSide::Bow, HullSide::Starboard, HullSide::Stern, HullSide::Port];
    let edge_labels = (0..n).map(|i| labels[i % 4]).collect();
    let poi = (hull[0] + hull[1]) * 0.5;
    let mut world = WorldConfig::with_hull(hull, edge_labels, poi, BOUNDS);
    for _ in 0..rng.gen_range(0..=3) {
        let radius = rng.gen_range(0.5..2.5);
        for _ in 0..100 {
            let center = Vec2::new(rng.gen_range(-45.0..45.0), rng.gen_range(-25.0..25.0));
            let d = ((center.x - c.x).powi(2) + (center.y - c.y).powi(2)).sqrt();
            if d > r_max + radius + 0.5 {
                world.obstacles.push(Circle { center, radius });
                break;
            }
        }
    }
    world.validate().expect("generated scene is valid");
    world
}

/// Winding-number containment.
pub fn inside_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let mut winding = 0i32;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        if a.y <= p.y {
            if b.y > p.y && side > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && side < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

fn inside_circle(p: Vec2, c: &Circle) -> bool {
    (p.x - c.center.x).powi(2) + (p.y - c.center.y).powi(2) < c.radius * c.radius
}

pub fn in_any_obstacle(p: Vec2, world: &WorldConfig) -> bool {
    world.obstacles.iter().any(|c| inside_circle(p, c))
}

/// Random point inside the bounds and outside every obstacle.
pub fn random_free_point(rng: &mut impl Rng, world: &WorldConfig) -> Vec2 {
    loop {
        let p = Vec2::new(rng.gen_range(-49.0..49.0), rng.gen_range(-29.0..29.0));
        if !in_any_obstacle(p, world) && !world.obstacles.iter().any(|c| dist(p, c.center) < c.radius + 0.05) {
            return p;
        }
    }
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// `n` points spread over hull edges and obstacle circles in proportion to length.
pub fn sample_boundary(world: &WorldConfig, n: usize) -> Vec<Vec2> {
    let k = world.hull.len();
    let edges: Vec<(Vec2, Vec2)> = (0..k).map(|i| (world.hull[i], world.hull[(i + 1) % k])).collect();
    let total: f64 = edges.iter().map(|(a, b)| dist(*a, *b)).sum::<f64>()
        + world.obstacles.iter().map(|c| 2.0 * PI * c.radius).sum::<f64>();
    let mut out = Vec::with_capacity(n + k + world.obstacles.len());
    for (a, b) in &edges {
        let m = ((dist(*a, *b) / total) * n as f64).ceil() as usize;
        for j in 0..=m {
            let t = j as f64 / m as f64;
            out.push(Vec2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t));
        }
    }
    for c in &world.obstacles {
        let m = ((2.0 * PI * c.radius / total) * n as f64).ceil().max(1.0) as usize;
        for j in 0..m {
            let t = 2.0 * PI * j as f64 / m as f64;
            out.push(Vec2::new(c.center.x + c.radius * t.cos(), c.center.y + c.radius * t.sin()));
        }
    }
    out
}

pub fn dense_distance(p: Vec2, samples: &[Vec2]) -> f64 {
    samples
        .iter()
        .map(|q| (p.x - q.x).powi(2) + (p.y - q.y).powi(2))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

fn region(p: Vec2, world: &WorldConfig) -> (bool, u32) {
    let hull = world.hull.len() >= 3 && inside_polygon(p, &world.hull);
    let mut mask = 0u32;
    for (i, c) in world.obstacles.iter().enumerate() {
        if inside_circle(p, c) {
            mask |= 1 << i;
        }
    }
    (hull, mask)
}

/// March along the ray in `step` increments until the containment state
/// changes; `max_range` when it never does.
pub fn march_ray(world: &WorldConfig, origin: Vec2, bearing: f64, max_range: f64, step: f64) -> f64 {
    let dir = Vec2::new(bearing.cos(), bearing.sin());
    let start = region(origin, world);
    let n = (max_range / step).ceil() as usize;
    for i in 1..=n {
        let s = (i as f64 * step).min(max_range);
        if region(origin + dir * s, world) != start {
            return s;
        }
    }
    max_range
}

/// Worst errors over `n` random (leader, PoI, spec, γ): position error of the
/// rotated target and radius error.
pub fn formation_equivariance(n: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let (mut worst_rot, mut worst_radius) = (0.0f64, 0.0f64);
    let mut done = 0;
    while done < n {
        let poi = Vec2::new(rng.gen_range(-40.0..40.0), rng.gen_range(-25.0..25.0));
        let leader = Pose2D::new(rng.gen_range(-50.0..50.0), rng.gen_range(-30.0..30.0), rng.gen_range(-PI..PI));
        if dist(leader.position(), poi) <= 2.0 * DEGENERATE_EPS {
            continue;
        }
        let spec = FormationSpec::new(rng.gen_range(0.5..20.0), rng.gen_range(-PI..PI)).unwrap();
        let gamma = rng.gen_range(-PI..PI);
        let rot = |p: Vec2| {
            let (s, c) = gamma.sin_cos();
            let d = Vec2::new(p.x - poi.x, p.y - poi.y);
            Vec2::new(poi.x + c * d.x - s * d.y, poi.y + s * d.x + c * d.y)
        };
        let lp = rot(leader.position());
        let rotated = Pose2D::new(lp.x, lp.y, leader.heading + gamma);
        let t0 = formation_target(&leader, poi, &spec).unwrap();
        let t1 = formation_target(&rotated, poi, &spec).unwrap();
        worst_rot = worst_rot.max(dist(t1.position, rot(t0.position)));
        worst_radius = worst_radius
            .max((dist(t0.position, poi) - spec.radius).abs())
            .max((dist(t1.position, poi) - spec.radius).abs());
        done += 1;
    }
    (worst_rot, worst_radius)
}

/// Fraction of `n` consecutive boundaries whose message is delivered.
pub fn delivered_fraction(drop_prob: f64, n: usize, seed: u64) -> f64 {
    let cfg = ChannelConfig {
        period: 0.1,
        latency: 0.0,
        drop_prob,
        seed,
    };
    let mut ch = ChannelState::new(seed);
    let mut delivered = 0usize;
    for k in 0..n {
        let t = k as f64 * cfg.period;
        ch.broadcast(&cfg, t, Pose2D::new(k as f64, 0.0, 0.0));
        if ch.deliver(&cfg, t).is_some() {
            delivered += 1;
        }
    }
    delivered as f64 / n as f64
}

/// (step index, seq, sent_at) of each delivery with period 1 s, latency 0.5 s,
/// dt 0.1 s, no drops, time computed as tick·dt like the simulator.
pub fn latency_schedule(steps: usize) -> Vec<(usize, u64, f64)> {
    let cfg = ChannelConfig {
        period: 1.0,
        latency: 0.5,
        drop_prob: 0.0,
        seed: 0,
    };
    let mut ch = ChannelState::new(0);
    let mut out = Vec::new();
    for k in 0..steps {
        let t = k as f64 * 0.1;
        ch.broadcast(&cfg, t, Pose2D::new(t, 0.0, 0.0));
        if let Some(m) = ch.deliver(&cfg, t) {
            out.push((k, m.seq, m.sent_at));
        }
    }
    out
}

/// Hand-simulated queue for [`latency_schedule`] over 30 steps: offers at
/// 0, 1, 2 s become due at 0.5, 1.5, 2.5 s, i.e. steps 5, 15, 25.
pub const EXPECTED_LATENCY_SCHEDULE: [(usize, u64, f64); 3] = [(5, 0, 0.0), (15, 1, 1.0), (25, 2, 2.0)];

/// Relative error ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖) of the TD
/// loss gradient for one random network and batch, with central differences.
pub fn gradient_check(seed: u64, sizes: &[usize], batch: usize, h: f64) -> f64 {
    let mut rng = rng(seed);
    let mut net = Mlp::new(sizes, &mut rng);
    let mut params = net.params();
    for p in params.iter_mut() {
        *p += rng.gen_range(-0.05..0.05);
    }
    net.set_params(&params);
    let inputs: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..sizes[0]).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let out = *sizes.last().unwrap();
    let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..out)).collect();
    let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-5.0..5.0)).collect();

    let mut grads = net.zeros_like();
    net.td_loss_grad(&inputs, &actions, &targets, &mut grads);
    let analytic = grads.params();

    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + h;
        probe.set_params(&params);
        let up = probe.td_loss(&inputs, &actions, &targets);
        params[i] = orig - h;
        probe.set_params(&params);
        let down = probe.td_loss(&inputs, &actions, &targets);
        params[i] = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    let diff = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm(&analytic).max(norm(&numeric))
}

/// Baseline follower, perfect comms, standard scene, 20 episodes from seed 1.
pub fn baseline_competence() -> hullwatch::rl::Evaluation {
    use hullwatch::rl::{evaluate, BaselineController, EnvConfig};
    use hullwatch::scene::Scene;
    let scene = Scene::standard();
    let mut cfg = EnvConfig::for_scene(&scene, 600);
    cfg.channel = ChannelConfig::perfect(scene.world.dt);
    evaluate(&mut BaselineController::default(), &scene, cfg, 20, 1).unwrap()
}
