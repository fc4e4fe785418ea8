//! Small dense ReLU network with hand-written backprop.
//!
//! Arithmetic is f64; the weight file stores little-endian f32.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"HWQN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a weights file (bad magic)")]
    BadMagic,
    #[error("unsupported weights format version {0}")]
    UnsupportedVersion(u32),
    #[error("weights file truncated")]
    Truncated,
    #[error("layer shapes {found:?} do not match {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("unexpected bytes after the last layer")]
    TrailingBytes,
    #[error("weights contain non-finite values")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `[outputs][inputs]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
            let mut s = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                s += wi * xi;
            }
            out.push(s);
        }
    }
}

/// Fully connected network, ReLU on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Same shapes as the network; holds gradients or optimizer moments.
pub type Grads = Mlp;

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|s| {
                let mut d = Dense::zeros(s[0], s[1]);
                let bound = (6.0 / s[0] as f64).sqrt();
                for w in &mut d.w {
                    *w = rng.gen_range(-bound..bound);
                }
                d
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Activations of every layer for one input, the input itself first.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(acts.last().unwrap(), &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Mean squared error between output `actions[k]` of input `k` and
    /// `targets[k]`, with gradients accumulated into `grads` (overwritten).
    pub fn td_loss_grad(
        &self,
        inputs: &[Vec<f64>],
        actions: &[usize],
        targets: &[f64],
        grads: &mut Grads,
    ) -> f64 {
        for l in &mut grads.layers {
            l.w.iter_mut().for_each(|v| *v = 0.0);
            l.b.iter_mut().for_each(|v| *v = 0.0);
        }
        let n = inputs.len() as f64;
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for ((x, &a), &y) in inputs.iter().zip(actions).zip(targets) {
            let acts = self.trace(x);
            let q = acts[last + 1][a];
            let err = q - y;
            loss += err * err / n;

            let out_dim = self.layers[last].outputs;
            let mut delta = vec![0.0; out_dim];
            delta[a] = 2.0 * err / n;
            for li in (0..=last).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let g = &mut grads.layers[li];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    g.b[o] += d;
                    let row = &mut g.w[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                if li == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.w[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // ReLU derivative: the stored activation is zero exactly where the unit is off.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        loss
    }

    pub fn td_loss(&self, inputs: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> f64 {
        let n = inputs.len() as f64;
        inputs
            .iter()
            .zip(actions)
            .zip(targets)
            .map(|((x, &a), &y)| {
                let e = self.forward(x)[a] - y;
                e * e / n
            })
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.param_count());
        let mut it = values.iter();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|v| *v = *it.next().unwrap());
        }
    }

    pub fn norm(&self) -> f64 {
        self.params().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|v| *v *= k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    /// Rounds every parameter to the nearest f32.
    pub fn quantize(&mut self) {
        for l in &mut self.layers {
            l.w.iter_mut()
                .chain(l.b.iter_mut())
                .for_each(|v| *v = *v as f32 as f64);
        }
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<(), NnError> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            out.write_all(&(l.inputs as u32).to_le_bytes())?;
            out.write_all(&(l.outputs as u32).to_le_bytes())?;
        }
        for l in &self.layers {
            for v in l.w.iter().chain(&l.b) {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl Read) -> Result<Mlp, NnError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut cur = bytes.as_slice();
        let mut take = |n: usize| -> Result<&[u8], NnError> {
            if cur.len() < n {
                return Err(NnError::Truncated);
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(NnError::BadMagic);
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != FORMAT_VERSION {
            return Err(NnError::UnsupportedVersion(version));
        }
        let n_layers = u32_at(take(4)?) as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(NnError::Truncated);
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let inputs = u32_at(take(4)?) as usize;
            let outputs = u32_at(take(4)?) as usize;
            if inputs == 0 || outputs == 0 || inputs > 1 << 16 || outputs > 1 << 16 {
                return Err(NnError::Truncated);
            }
            layers.push(Dense::zeros(inputs, outputs));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(NnError::Truncated);
            }
        }
        for l in &mut layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = f32::from_le_bytes(take(4)?.try_into().unwrap()) as f64;
            }
        }
        if !cur.is_empty() {
            return Err(NnError::TrailingBytes);
        }
        let net = Mlp { layers };
        if !net.is_finite() {
            return Err(NnError::NonFinite);
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Mlp, NnError> {
        let mut f = std::fs::File::open(path)?;
        Mlp::read_from(&mut f)
    }
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: net.zeros_like(),
            v: net.zeros_like(),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((l, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            let params = l.w.iter_mut().chain(l.b.iter_mut());
            let gs = g.w.iter().chain(&g.b);
            let ms = m.w.iter_mut().chain(m.b.iter_mut());
            let vs = v.w.iter_mut().chain(v.b.iter_mut());
            for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Mlp {
        Mlp::new(&[3, 5, 4], &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn forward_matches_hand_computation() {
        let mut n = Mlp {
            layers: vec![Dense::zeros(2, 2), Dense::zeros(2, 1)],
        };
        n.layers[0].w = vec![1.0, -1.0, 0.5, 0.5];
        n.layers[0].b = vec![0.0, -3.0];
        n.layers[1].w = vec![2.0, 1.0];
        n.layers[1].b = vec![0.25];
        // h = relu([1-2, 0.5+1-3]) = [0, 0]; with x = (3, 1): h = relu([2, -1]) = [2, 0]
        assert_eq!(n.forward(&[1.0, 2.0]), vec![0.25]);
        assert_eq!(n.forward(&[3.0, 1.0]), vec![4.25]);
    }

    #[test]
    fn file_round_trip_is_f32_exact() {
        let mut n = net();
        n.quantize();
        let mut buf = Vec::new();
        n.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        let back = Mlp::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, n);
    }

    #[test]
    fn corrupt_files_rejected() {
        let mut buf = Vec::new();
        net().write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Mlp::read_from(&mut bad.as_slice()), Err(NnError::BadMagic)));
        let short = &buf[..buf.len() - 2];
        assert!(matches!(Mlp::read_from(&mut &short[..]), Err(NnError::Truncated)));
        let mut ver = buf.clone();
        ver[4] = 9;
        assert!(matches!(
            Mlp::read_from(&mut ver.as_slice()),
            Err(NnError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = net();
        let before = clip_grad_norm(&mut g, 0.5);
        assert!(before > 0.5);
        assert!((g.norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adam_reduces_loss() {
        let mut n = net();
        let xs = vec![vec![0.1, 0.2, 0.3], vec![-0.5, 0.4, 1.0]];
        let acts = [1, 3];
        let ys = [1.0, -2.0];
        let mut opt = Adam::new(&n, 1e-2);
        let mut g = n.zeros_like();
        let first = n.td_loss(&xs, &acts, &ys);
        for _ in 0..300 {
            n.td_loss_grad(&xs, &acts, &ys, &mut g);
            opt.step(&mut n, &g);
        }
        assert!(n.td_loss(&xs, &acts, &ys) < first * 1e-3);
    }
}
