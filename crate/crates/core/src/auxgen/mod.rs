//! Randomly generated auxiliary reward functions.
//!
//! Observations are downsampled to a 5x5 intensity grid by average pooling.
//! An encoder maps the 25 downsampled features to a Z-dimensional latent
//! vector, min-max normalized over the exploration buffer; an auxiliary
//! reward is the dot product of a functional drawn uniformly from `(0,1)^Z`
//! with that normalized latent. Three encoders share the interface: the
//! identity passthrough (for the random-projection condition), the required
//! linear principal-direction encoder, and an optional small variational
//! autoencoder.

mod pca;
mod vae;

pub use vae::{Dense, MlpEncoder};

use std::fmt;
use std::sync::Arc;

use crate::ca::{CellColor, CellKind};
use crate::env::{Curriculum, GenError, Observation, ACTIONS, OBS_SIDE};
use crate::rng::RngStream;

/// Downsampled feature length: 5x5 pooled blocks.
pub const FEATURE_DIM: usize = 25;
const POOL: usize = 5;

pub type FeatureVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// Raw downsampled features; latent dimension is [`FEATURE_DIM`].
    Identity,
    /// Projection onto the top-Z principal directions of the buffer.
    LinearWhitened,
    /// Small nonlinear variational encoder.
    Mlp,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Identity => "identity",
            EncoderKind::LinearWhitened => "linear",
            EncoderKind::Mlp => "mlp",
        }
    }

    pub fn from_name(name: &str) -> Option<EncoderKind> {
        Some(match name {
            "identity" => EncoderKind::Identity,
            "linear" => EncoderKind::LinearWhitened,
            "mlp" => EncoderKind::Mlp,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderError {
    EmptyBuffer,
    LatentTooLarge { z: usize, dim: usize },
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for EncoderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderError::EmptyBuffer => write!(f, "encoder training buffer is empty"),
            EncoderError::LatentTooLarge { z, dim } => {
                write!(f, "latent dimension {z} exceeds feature dimension {dim}")
            }
            EncoderError::DimensionMismatch { expected, got } => {
                write!(f, "feature length {got}, expected {expected}")
            }
        }
    }
}

impl std::error::Error for EncoderError {}

/// Fixed intensity per cell; only distinctness across kinds matters.
fn intensity(kind: CellKind, color: CellColor) -> f64 {
    match kind {
        CellKind::Empty => 0.0,
        CellKind::Wall => 0.25,
        CellKind::Crate => 0.3,
        CellKind::Tree => 0.5,
        CellKind::Spawner => 0.6,
        CellKind::Goal => 0.7,
        CellKind::Life => match color {
            CellColor::Green => 0.85,
            CellColor::Red => 0.9,
            CellColor::Yellow => 0.95,
            _ => 0.8,
        },
    }
}

/// Average-pools the 25x25 observation into 25 intensities in `[0,1]`.
pub fn downsample(obs: &Observation) -> FeatureVector {
    let mut features = vec![0.0f64; FEATURE_DIM];
    for wy in 0..OBS_SIDE {
        for wx in 0..OBS_SIDE {
            let c = obs.get(wx, wy);
            features[(wy / POOL) * POOL + wx / POOL] += intensity(c.cell.kind, c.cell.color);
        }
    }
    let block = (POOL * POOL) as f64;
    for f in features.iter_mut() {
        *f /= block;
    }
    features
}

/// A fixed random linear functional over a feature space, drawn once per
/// experiment from the given seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjection {
    weights: Vec<f64>,
}

impl RandomProjection {
    pub fn draw(dim: usize, seed: u64) -> RandomProjection {
        let mut rng = RngStream::from_seed(seed).split("projection");
        RandomProjection { weights: (0..dim).map(|_| open_unit(&mut rng)).collect() }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply(&self, features: &[f64]) -> Result<f64, EncoderError> {
        if features.len() != self.weights.len() {
            return Err(EncoderError::DimensionMismatch {
                expected: self.weights.len(),
                got: features.len(),
            });
        }
        Ok(self.weights.iter().zip(features).map(|(w, x)| w * x).sum())
    }
}

/// Uniform draw from the open interval (0, 1).
fn open_unit(rng: &mut RngStream) -> f64 {
    loop {
        let x = rng.next_f64();
        if x > 0.0 {
            return x;
        }
    }
}

/// Linear encoder: projection onto principal directions with min-max output
/// normalization fitted on the training buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    pub mean: Vec<f64>,
    /// `z` rows of length [`FEATURE_DIM`].
    pub basis: Vec<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Latent dimensions padded with arbitrary orthonormal directions
    /// because the buffer covariance had lower rank.
    pub degenerate_dims: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Identity { dim: usize },
    Linear(LinearEncoder),
    Mlp { net: MlpEncoder, lo: Vec<f64>, hi: Vec<f64> },
}

impl Encoder {
    pub fn identity(dim: usize) -> Encoder {
        Encoder::Identity { dim }
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Identity { .. } => EncoderKind::Identity,
            Encoder::Linear(_) => EncoderKind::LinearWhitened,
            Encoder::Mlp { .. } => EncoderKind::Mlp,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Encoder::Identity { dim } => *dim,
            Encoder::Linear(l) => l.basis.len(),
            Encoder::Mlp { net, .. } => net.latent_dim(),
        }
    }

    pub fn degenerate_dims(&self) -> usize {
        match self {
            Encoder::Linear(l) => l.degenerate_dims,
            _ => 0,
        }
    }

    /// Latent vector before normalization.
    pub fn encode_raw(&self, features: &[f64]) -> Result<Vec<f64>, EncoderError> {
        match self {
            Encoder::Identity { dim } => {
                if features.len() != *dim {
                    return Err(EncoderError::DimensionMismatch {
                        expected: *dim,
                        got: features.len(),
                    });
                }
                Ok(features.to_vec())
            }
            Encoder::Linear(l) => {
                if features.len() != l.mean.len() {
                    return Err(EncoderError::DimensionMismatch {
                        expected: l.mean.len(),
                        got: features.len(),
                    });
                }
                let centered: Vec<f64> =
                    features.iter().zip(&l.mean).map(|(x, m)| x - m).collect();
                Ok(l.basis
                    .iter()
                    .map(|row| row.iter().zip(&centered).map(|(b, c)| b * c).sum())
                    .collect())
            }
            Encoder::Mlp { net, .. } => {
                if features.len() != net.l1.in_dim {
                    return Err(EncoderError::DimensionMismatch {
                        expected: net.l1.in_dim,
                        got: features.len(),
                    });
                }
                Ok(net.encode(features))
            }
        }
    }

    /// Min-max normalized latent vector; on the training buffer every
    /// component lies in `[0,1]`. Zero-span dimensions map to 0.5.
    pub fn encode(&self, features: &[f64]) -> Result<Vec<f64>, EncoderError> {
        let raw = self.encode_raw(features)?;
        Ok(match self {
            Encoder::Identity { .. } => raw,
            Encoder::Linear(LinearEncoder { lo, hi, .. }) | Encoder::Mlp { lo, hi, .. } => {
                normalize(&raw, lo, hi)
            }
        })
    }

    /// Downsample-then-encode convenience for observations.
    pub fn encode_obs(&self, obs: &Observation) -> Vec<f64> {
        self.encode(&downsample(obs)).expect("downsampled features match encoder input")
    }
}

fn normalize(raw: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    raw.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&x, (&l, &h))| if h - l > 1e-12 { (x - l) / (h - l) } else { 0.5 })
        .collect()
}

fn fit_bounds(latents: &[Vec<f64>], z: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; z];
    let mut hi = vec![f64::NEG_INFINITY; z];
    for row in latents {
        for k in 0..z {
            lo[k] = lo[k].min(row[k]);
            hi[k] = hi[k].max(row[k]);
        }
    }
    (lo, hi)
}

/// Trains an encoder of the requested kind on an observation buffer.
/// `epochs` only matters for the MLP. Rank-deficient covariance pads the
/// linear basis with an orthonormal completion, recorded in
/// `degenerate_dims`.
pub fn train_encoder(
    buffer: &[Observation],
    z: usize,
    kind: EncoderKind,
    epochs: u32,
    rng: &mut RngStream,
) -> Result<Encoder, EncoderError> {
    if kind == EncoderKind::Identity {
        return Ok(Encoder::identity(FEATURE_DIM));
    }
    if buffer.is_empty() {
        return Err(EncoderError::EmptyBuffer);
    }
    if z == 0 || z > FEATURE_DIM {
        return Err(EncoderError::LatentTooLarge { z, dim: FEATURE_DIM });
    }
    let rows: Vec<FeatureVector> = buffer.iter().map(downsample).collect();

    let encoder = match kind {
        EncoderKind::LinearWhitened => {
            let mean = pca::column_means(&rows);
            let cov = pca::covariance(&rows, &mean);
            let (values, vectors) = pca::symmetric_eigen(&cov);
            let scale = values[0].abs().max(1.0);
            let degenerate_dims =
                values.iter().take(z).filter(|&&v| v <= 1e-12 * scale).count();
            let basis: Vec<Vec<f64>> = vectors.into_iter().take(z).collect();
            let mut enc = Encoder::Linear(LinearEncoder {
                mean,
                basis,
                lo: vec![0.0; z],
                hi: vec![0.0; z],
                degenerate_dims,
            });
            let latents: Vec<Vec<f64>> =
                rows.iter().map(|r| enc.encode_raw(r).unwrap()).collect();
            let (lo, hi) = fit_bounds(&latents, z);
            if let Encoder::Linear(l) = &mut enc {
                l.lo = lo;
                l.hi = hi;
            }
            enc
        }
        EncoderKind::Mlp => {
            let net = vae::train_mlp_encoder(&rows, z, epochs, rng);
            let latents: Vec<Vec<f64>> = rows.iter().map(|r| net.encode(r)).collect();
            let (lo, hi) = fit_bounds(&latents, z);
            Encoder::Mlp { net, lo, hi }
        }
        EncoderKind::Identity => unreachable!(),
    };
    Ok(encoder)
}

/// An auxiliary reward function: a random functional composed with the
/// normalized encoder output.
#[derive(Debug, Clone)]
pub struct AuxRewardFn {
    pub encoder: Arc<Encoder>,
    pub phi: Vec<f64>,
}

impl AuxRewardFn {
    pub fn new(encoder: Arc<Encoder>, phi: Vec<f64>) -> Result<AuxRewardFn, EncoderError> {
        if phi.len() != encoder.latent_dim() {
            return Err(EncoderError::DimensionMismatch {
                expected: encoder.latent_dim(),
                got: phi.len(),
            });
        }
        Ok(AuxRewardFn { encoder, phi })
    }

    /// Draws the functional uniformly from `(0,1)^Z`.
    pub fn draw(encoder: Arc<Encoder>, rng: &mut RngStream) -> AuxRewardFn {
        let phi = (0..encoder.latent_dim()).map(|_| open_unit(rng)).collect();
        AuxRewardFn { encoder, phi }
    }

    pub fn reward(&self, obs: &Observation) -> f64 {
        let latent = self.encoder.encode_obs(obs);
        self.phi.iter().zip(&latent).map(|(p, l)| p * l).sum()
    }
}

/// Collects observations by acting uniformly at random:
/// `total_steps / n_env` per environment, episodes resetting on termination.
pub fn collect_exploration_buffer(
    curriculum: &Curriculum,
    total_steps: u64,
    rng: &mut RngStream,
) -> Result<Vec<Observation>, GenError> {
    let n = curriculum.n_env() as u64;
    assert!(total_steps >= n, "buffer needs at least one step per environment");
    let per_env = total_steps / n;
    let mut buffer = Vec::with_capacity((per_env * n) as usize);
    for i in 0..n {
        let mut resets = 0u64;
        let mut state = curriculum.env_for_episode(i)?;
        for _ in 0..per_env {
            let action = ACTIONS[rng.range(9) as usize];
            let (next, _, done) = state.apply_action(action).expect("episode not finished");
            buffer.push(next.observe());
            if done {
                resets += 1;
                state = curriculum.env_for_episode(i + n * resets)?;
            } else {
                state = next;
            }
        }
    }
    Ok(buffer)
}
