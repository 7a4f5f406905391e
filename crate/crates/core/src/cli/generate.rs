use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::grassmann::{complement_basis, exp_basis, random_subspace, random_tangent, Subspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftKind {
    Stationary,
    /// The signal subspace turns at a constant rate along one geodesic.
    Rotation,
    /// The class means translate inside a fixed signal subspace.
    MeanShift,
    /// Rotation plus an independent random subspace perturbation per batch.
    NoisyRotation,
}

impl FromStr for DriftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(Self::Stationary),
            "rotation" => Ok(Self::Rotation),
            "mean-shift" => Ok(Self::MeanShift),
            "noisy-rotation" => Ok(Self::NoisyRotation),
            _ => Err(Error::InvalidConfig(format!("unknown drift kind '{s}'"))),
        }
    }
}

impl fmt::Display for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stationary => "stationary",
            Self::Rotation => "rotation",
            Self::MeanShift => "mean-shift",
            Self::NoisyRotation => "noisy-rotation",
        })
    }
}

/// Parameters of a synthetic drifting stream.
///
/// A sample of class `y` at step `τ` is `S_τ·(o + μ_y + z) + ε` where `S_τ`
/// is an orthonormal d×r basis of the signal subspace, `o` a common offset,
/// `μ_y` the class mean, `z ~ N(0, spread²·I_r)` and `ε ~ N(0, σ²·I_d)`.
/// The source is drawn at `τ = 0` and target batch `b` at `τ = b`.
///
/// Class means sit at `±class_separation` on successive latent axes (class
/// `2i` on `+e_i`, class `2i+1` on `-e_i`) when `c <= 2r`, and evenly on a
/// circle in the first two axes otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub seed: u64,
    pub dim: usize,
    pub n_classes: usize,
    pub n_batches: usize,
    pub batch_size: usize,
    pub source_size: usize,
    pub kind: DriftKind,
    /// Radians of subspace distance per batch (rotation kinds) or latent
    /// units of class-mean translation per batch (mean shift).
    pub drift_rate: f64,
    /// Per-batch subspace perturbation in radians (noisy rotation).
    pub noise: f64,
    pub signal_rank: usize,
    pub class_separation: f64,
    /// Length of the common offset `o`, along the first (class) latent axis.
    pub offset: f64,
    pub spread: f64,
    pub ambient_noise: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 30,
            n_classes: 2,
            n_batches: 100,
            batch_size: 20,
            source_size: 200,
            kind: DriftKind::Rotation,
            drift_rate: 0.01,
            noise: 0.0,
            signal_rank: 5,
            class_separation: 2.0,
            offset: 12.0,
            spread: 1.0,
            ambient_noise: 0.05,
        }
    }
}

impl DriftParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadParameter(m.to_string()));
        if self.n_classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.dim == 0 || self.n_batches == 0 || self.batch_size == 0 {
            return bad("dim, n_batches and batch_size must be positive");
        }
        if self.source_size < self.n_classes {
            return bad("source_size must cover every class");
        }
        if self.signal_rank < 2 || 2 * self.signal_rank > self.dim {
            return bad("signal_rank must be in [2, dim/2]");
        }
        let reals = [
            self.drift_rate,
            self.noise,
            self.class_separation,
            self.offset,
            self.spread,
            self.ambient_noise,
        ];
        if reals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("real-valued parameters must be finite and non-negative");
        }
        if self.class_separation == 0.0 {
            return bad("class_separation must be positive");
        }
        Ok(())
    }
}

/// True signal subspaces behind a generated stream.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub source: Subspace,
    /// One per target batch, without the per-batch perturbation of the noisy
    /// kind.
    pub subspaces: Vec<Subspace>,
}

/// Draws a stream from [`DriftParams`]; deterministic per seed.
pub fn generate_drift_stream(params: &DriftParams) -> Result<(Dataset, GroundTruth)> {
    params.validate()?;
    let (d, r, c) = (params.dim, params.signal_rank, params.n_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let s0 = random_subspace(&mut rng, d, r)?;
    // Unit-norm geodesic direction with equal principal speeds.
    let gauss = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let complement = complement_basis(s0.basis());
    let w = (&complement * (complement.transpose() * gauss)).qr().q();
    let direction = w / (r as f64).sqrt();

    let class_means: Vec<DVector<f64>> = (0..c)
        .map(|j| {
            let mut m = DVector::zeros(r);
            if c <= 2 * r {
                m[j / 2] = if j % 2 == 0 { 1.0 } else { -1.0 } * params.class_separation;
            } else {
                let angle = 2.0 * std::f64::consts::PI * j as f64 / c as f64;
                m[0] = params.class_separation * angle.cos();
                m[1] = params.class_separation * angle.sin();
            }
            m
        })
        .collect();
    let mut offset = DVector::zeros(r);
    offset[0] = params.offset;

    let rotates = matches!(params.kind, DriftKind::Rotation | DriftKind::NoisyRotation);
    let basis_at = |tau: f64| -> DMatrix<f64> {
        if rotates && params.drift_rate > 0.0 && tau > 0.0 {
            exp_basis(s0.basis(), &(&direction * (tau * params.drift_rate)))
        } else {
            s0.basis().clone()
        }
    };

    let sample = |rng: &mut ChaCha8Rng, basis: &DMatrix<f64>, shift: f64, n: usize, labels: &[usize]| {
        let mut x = DMatrix::zeros(n, d);
        for i in 0..n {
            let mut latent = &offset + &class_means[labels[i]];
            latent[0] += shift;
            for v in latent.iter_mut() {
                *v += params.spread * rng.sample::<f64, _>(StandardNormal);
            }
            let mut row = basis * latent;
            for v in row.iter_mut() {
                *v += params.ambient_noise * rng.sample::<f64, _>(StandardNormal);
            }
            x.set_row(i, &row.transpose());
        }
        x
    };

    let source_y: Vec<usize> = (0..params.source_size).map(|i| i % c).collect();
    let source_x = sample(&mut rng, s0.basis(), 0.0, params.source_size, &source_y);

    let n_target = params.n_batches * params.batch_size;
    let mut target_x = DMatrix::zeros(n_target, d);
    let mut target_y = Vec::with_capacity(n_target);
    let mut truths = Vec::with_capacity(params.n_batches);
    for b in 1..=params.n_batches {
        let tau = b as f64;
        let truth = basis_at(tau);
        let basis = if params.kind == DriftKind::NoisyRotation && params.noise > 0.0 {
            let current = Subspace::from_raw(truth.clone());
            let delta = random_tangent(&mut rng, &current, params.noise);
            exp_basis(&truth, &delta)
        } else {
            truth.clone()
        };
        let shift = if params.kind == DriftKind::MeanShift {
            tau * params.drift_rate
        } else {
            0.0
        };
        let labels: Vec<usize> = (0..params.batch_size).map(|_| rng.random_range(0..c)).collect();
        let x = sample(&mut rng, &basis, shift, params.batch_size, &labels);
        target_x.rows_mut((b - 1) * params.batch_size, params.batch_size).copy_from(&x);
        target_y.extend(labels);
        truths.push(Subspace::from_raw(truth));
    }

    Ok((
        Dataset {
            source_x,
            source_y,
            target_x,
            target_y,
            n_classes: c,
        },
        GroundTruth {
            source: s0,
            subspaces: truths,
        },
    ))
}
