//! Optional nonlinear encoder: a small variational autoencoder over
//! downsampled features (tanh hidden layers, Gaussian latent, sigmoid
//! decoder trained on binary cross-entropy plus the standard normal KL
//! term), optimized with hand-rolled Adam. The deterministic mean path is
//! used for encoding after training.

use crate::rng::RngStream;

const HIDDEN1: usize = 32;
const HIDDEN2: usize = 16;
const BATCH: usize = 64;
const LEARNING_RATE: f64 = 1e-3;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn new(in_dim: usize, out_dim: usize, rng: &mut RngStream) -> Dense {
        let scale = (2.0 / (in_dim + out_dim) as f64).sqrt();
        let weights =
            (0..in_dim * out_dim).map(|_| (rng.next_f64() * 2.0 - 1.0) * scale).collect();
        Dense { in_dim, out_dim, weights, bias: vec![0.0; out_dim] }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (o, w_row) in out.iter_mut().zip(self.weights.chunks(self.in_dim)) {
            for (w, xi) in w_row.iter().zip(x) {
                *o += w * xi;
            }
        }
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, x: &[f64], grad_out: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        for (o, g) in grad_out.iter().enumerate() {
            gb[o] += g;
            let row = o * self.in_dim;
            for i in 0..self.in_dim {
                gw[row + i] += g * x[i];
                grad_in[i] += self.weights[row + i] * g;
            }
        }
        grad_in
    }
}

fn tanh_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Encoder half of the trained autoencoder; the decoder is dropped after
/// training.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoder {
    pub l1: Dense,
    pub l2: Dense,
    pub mu: Dense,
}

impl MlpEncoder {
    pub fn latent_dim(&self) -> usize {
        self.mu.out_dim
    }

    pub fn encode(&self, features: &[f64]) -> Vec<f64> {
        let h1 = tanh_vec(&self.l1.forward(features));
        let h2 = tanh_vec(&self.l2.forward(&h1));
        self.mu.forward(&h2)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(dim: usize) -> Adam {
        Adam { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grads[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= LEARNING_RATE * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// Trains the autoencoder on feature rows in `[0,1]` and keeps the encoder.
pub fn train_mlp_encoder(
    rows: &[Vec<f64>],
    z: usize,
    epochs: u32,
    rng: &mut RngStream,
) -> MlpEncoder {
    let dim = rows[0].len();
    let mut l1 = Dense::new(dim, HIDDEN1, rng);
    let mut l2 = Dense::new(HIDDEN1, HIDDEN2, rng);
    let mut mu = Dense::new(HIDDEN2, z, rng);
    let mut logvar = Dense::new(HIDDEN2, z, rng);
    let mut d1 = Dense::new(z, HIDDEN2, rng);
    let mut d2 = Dense::new(HIDDEN2, HIDDEN1, rng);
    let mut out = Dense::new(HIDDEN1, dim, rng);

    // One flat Adam state per layer, weights then bias.
    let mut opts: Vec<Adam> = [&l1, &l2, &mu, &logvar, &d1, &d2, &out]
        .iter()
        .map(|l| Adam::new(l.weights.len() + l.bias.len()))
        .collect();

    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _epoch in 0..epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(BATCH) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads: Vec<(Vec<f64>, Vec<f64>)> =
                [&l1, &l2, &mu, &logvar, &d1, &d2, &out]
                    .iter()
                    .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                    .collect();

            for &ri in batch {
                let x = &rows[ri];
                // Forward.
                let a1 = l1.forward(x);
                let h1 = tanh_vec(&a1);
                let a2 = l2.forward(&h1);
                let h2 = tanh_vec(&a2);
                let zmu = mu.forward(&h2);
                let zlv = logvar.forward(&h2);
                let noise: Vec<f64> = (0..z).map(|_| gaussian(rng)).collect();
                let zs: Vec<f64> = (0..z)
                    .map(|k| zmu[k] + (0.5 * zlv[k]).exp() * noise[k])
                    .collect();
                let a3 = d1.forward(&zs);
                let g1 = tanh_vec(&a3);
                let a4 = d2.forward(&g1);
                let g2 = tanh_vec(&a4);
                let logits = out.forward(&g2);
                let recon: Vec<f64> = logits.iter().map(|&v| sigmoid(v)).collect();

                // Backward: BCE on the reconstruction plus KL to N(0, 1).
                let grad_logits: Vec<f64> =
                    recon.iter().zip(x).map(|(&p, &t)| (p - t) * scale).collect();
                let g = &mut grads[6];
                let grad_g2 = out.backward(&g2, &grad_logits, &mut g.0, &mut g.1);
                let grad_a4: Vec<f64> =
                    grad_g2.iter().zip(&g2).map(|(g, h)| g * (1.0 - h * h)).collect();
                let g = &mut grads[5];
                let grad_g1 = d2.backward(&g1, &grad_a4, &mut g.0, &mut g.1);
                let grad_a3: Vec<f64> =
                    grad_g1.iter().zip(&g1).map(|(g, h)| g * (1.0 - h * h)).collect();
                let g = &mut grads[4];
                let grad_zs = d1.backward(&zs, &grad_a3, &mut g.0, &mut g.1);

                let grad_mu: Vec<f64> =
                    (0..z).map(|k| grad_zs[k] + zmu[k] * scale).collect();
                let grad_lv: Vec<f64> = (0..z)
                    .map(|k| {
                        let sig = (0.5 * zlv[k]).exp();
                        grad_zs[k] * noise[k] * 0.5 * sig + 0.5 * (sig * sig - 1.0) * scale
                    })
                    .collect();

                let g = &mut grads[2];
                let back_mu = mu.backward(&h2, &grad_mu, &mut g.0, &mut g.1);
                let g = &mut grads[3];
                let back_lv = logvar.backward(&h2, &grad_lv, &mut g.0, &mut g.1);
                let grad_h2: Vec<f64> =
                    back_mu.iter().zip(&back_lv).map(|(a, b)| a + b).collect();
                let grad_a2: Vec<f64> =
                    grad_h2.iter().zip(&h2).map(|(g, h)| g * (1.0 - h * h)).collect();
                let g = &mut grads[1];
                let grad_h1 = l2.backward(&h1, &grad_a2, &mut g.0, &mut g.1);
                let grad_a1: Vec<f64> =
                    grad_h1.iter().zip(&h1).map(|(g, h)| g * (1.0 - h * h)).collect();
                let g = &mut grads[0];
                l1.backward(x, &grad_a1, &mut g.0, &mut g.1);
            }

            for (layer, (opt, (gw, gb))) in [
                &mut l1, &mut l2, &mut mu, &mut logvar, &mut d1, &mut d2, &mut out,
            ]
            .into_iter()
            .zip(opts.iter_mut().zip(grads.into_iter()))
            {
                let mut flat_p: Vec<f64> =
                    layer.weights.iter().chain(layer.bias.iter()).cloned().collect();
                let flat_g: Vec<f64> = gw.into_iter().chain(gb).collect();
                opt.step(&mut flat_p, &flat_g);
                let (w, b) = flat_p.split_at(layer.weights.len());
                layer.weights.copy_from_slice(w);
                layer.bias.copy_from_slice(b);
            }
        }
    }

    MlpEncoder { l1, l2, mu }
}

fn gaussian(rng: &mut RngStream) -> f64 {
    // Box-Muller; u is kept away from zero.
    let u = rng.next_f64().max(1e-12);
    let v = rng.next_f64();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_produces_finite_deterministic_encoder() {
        let mut rng = RngStream::from_seed(8);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| (0..10).map(|j| ((i * j) % 7) as f64 / 7.0).collect())
            .collect();
        let enc = train_mlp_encoder(&rows, 2, 3, &mut rng.split("train"));
        let enc2 = train_mlp_encoder(&rows, 2, 3, &mut rng.split("train"));
        assert_eq!(enc, enc2);
        for row in &rows {
            let z = enc.encode(row);
            assert_eq!(z.len(), 2);
            assert!(z.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn reconstruction_improves_over_training() {
        let mut rng = RngStream::from_seed(4);
        // Two clusters of inputs.
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let base = if i % 2 == 0 { 0.15 } else { 0.85 };
                (0..8).map(|_| base).collect()
            })
            .collect();
        let short = train_mlp_encoder(&rows, 1, 1, &mut rng.split("a"));
        let long = train_mlp_encoder(&rows, 1, 30, &mut rng.split("a"));
        // The long-trained encoder separates the clusters more.
        let sep = |e: &MlpEncoder| (e.encode(&rows[0])[0] - e.encode(&rows[1])[0]).abs();
        assert!(sep(&long) >= sep(&short));
    }
}
