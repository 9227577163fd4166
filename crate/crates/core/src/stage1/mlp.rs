//! One-hidden-layer perceptron with softplus units, trained by Adam on squared error.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const ACTIVATION: &str = "softplus";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden: 500, learning_rate: 1e-3, batch_size: 64, max_epochs: 2000, patience: 100, clip_norm: 0.01, seed: 0 }
    }
}

/// Parameters laid out as one flat vector: w1 (hidden x inputs), b1, w2, b2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Mlp {
    pub fn new(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut params = vec![0.0; hidden * inputs + hidden + hidden + 1];
        let s1 = (2.0 / inputs.max(1) as f64).sqrt();
        let s2 = (1.0 / hidden as f64).sqrt();
        for p in &mut params[..hidden * inputs] {
            *p = rng.gen_range(-s1..s1);
        }
        let w2 = hidden * inputs + hidden;
        for p in &mut params[w2..w2 + hidden] {
            *p = rng.gen_range(-s2..s2);
        }
        Self { inputs, hidden, params }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        (b1, b1 + self.hidden, b1 + 2 * self.hidden)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut out = p[b2];
        for h in 0..self.hidden {
            let row = &p[h * self.inputs..(h + 1) * self.inputs];
            let z = p[b1 + h] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            out += p[w2 + h] * softplus(z);
        }
        out
    }

    /// Mean of ½(ŷ − y)² over the batch and its gradient.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let n = xs.len() as f64;
        let mut z = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let mut out = p[b2];
            for h in 0..self.hidden {
                let row = &p[h * self.inputs..(h + 1) * self.inputs];
                z[h] = p[b1 + h] + row.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
                out += p[w2 + h] * softplus(z[h]);
            }
            let e = out - y;
            loss += 0.5 * e * e;
            let de = e / n;
            grad[b2] += de;
            for h in 0..self.hidden {
                grad[w2 + h] += de * softplus(z[h]);
                let dz = de * p[w2 + h] * sigmoid(z[h]);
                grad[b1 + h] += dz;
                for (g, xi) in grad[h * self.inputs..(h + 1) * self.inputs].iter_mut().zip(x.iter()) {
                    *g += dz * xi;
                }
            }
        }
        loss / n
    }

    pub fn mse(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        xs.iter().zip(ys).map(|(x, y)| (self.predict(x) - y).powi(2)).sum::<f64>() / ys.len().max(1) as f64
    }
}

pub struct MlpFit {
    pub model: Mlp,
    pub epochs: usize,
    pub val_loss: f64,
    pub history: Vec<f64>,
}

/// Trains with early stopping; returns the best-validation weights.
/// `None` when the loss becomes non-finite.
pub fn fit(x: &[Vec<f64>], y: &[f64], val: Option<(&[Vec<f64>], &[f64])>, params: &MlpParams) -> Option<MlpFit> {
    let d = x.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut net = Mlp::new(d, params.hidden, &mut rng);
    let np = net.params.len();
    let (mut m, mut v, mut grad) = (vec![0.0; np], vec![0.0; np], vec![0.0; np]);
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut t = 0i32;
    let (vx, vy) = val.unwrap_or((x, y));
    let mut best = (net.clone(), net.mse(vx, vy), 0usize);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut epochs = 0;
    for epoch in 1..=params.max_epochs {
        epochs = epoch;
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size.max(1)) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| x[i].as_slice()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
            let loss = net.loss_and_grad(&xs, &ys, &mut grad);
            if !loss.is_finite() {
                return None;
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > params.clip_norm {
                let s = params.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            t += 1;
            let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
            for i in 0..np {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                net.params[i] -= params.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        let vl = net.mse(vx, vy);
        if !vl.is_finite() {
            return None;
        }
        history.push(vl);
        if vl < best.1 {
            best = (net.clone(), vl, epoch);
        } else if epoch - best.2 >= params.patience {
            break;
        }
    }
    Some(MlpFit { model: best.0, epochs, val_loss: best.1, history })
}
