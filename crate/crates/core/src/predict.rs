//! Next-subspace prediction by continuing the geodesic through the last two
//! mean subspaces, and compensation of a noisy observation against it.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grassmann::{
    complement_basis, exp_map, geodesic, principal_decomposition, PrincipalDecomposition, Subspace, CUT_LOCUS_TOL,
};

/// Largest per-direction step angle used for extrapolation.
pub const MAX_STEP_ANGLE: f64 = FRAC_PI_4;

/// Default blend between observation (0) and prediction (1).
pub const DEFAULT_BLEND: f64 = 0.5;

/// Velocity of the geodesic from the previous to the current mean,
/// expressed in the complement coordinates of the previous mean:
/// `A = U2[:, ..k]·Θ·U1ᵀ`, (d-k)×k.
#[derive(Debug, Clone)]
pub struct VelocityMatrix {
    pub a: DMatrix<f64>,
    pub source_decomposition: PrincipalDecomposition,
    base: Subspace,
    complement: DMatrix<f64>,
}

impl VelocityMatrix {
    /// The subspace the velocity is attached to (the previous mean).
    pub fn base(&self) -> &Subspace {
        &self.base
    }

    /// Ambient tangent `-R·A` at the base, with every angle clamped to
    /// `max_angle`. The flag reports whether any clamping happened.
    pub fn tangent(&self, max_angle: f64) -> (DMatrix<f64>, bool) {
        let dec = &self.source_decomposition;
        let k = dec.theta.len();
        let mut clamped = false;
        let mut scaled = dec.u2.columns(0, k).clone_owned();
        for i in 0..k {
            let th = if dec.theta[i] > max_angle {
                clamped = true;
                max_angle
            } else {
                dec.theta[i]
            };
            scaled.column_mut(i).scale_mut(th);
        }
        (-(&self.complement * scaled * dec.u1.transpose()), clamped)
    }
}

/// Velocity matrix of the flow from `p_mean_prev` to `p_mean_cur`.
pub fn velocity_matrix(p_mean_prev: &Subspace, p_mean_cur: &Subspace) -> Result<VelocityMatrix> {
    let dec = principal_decomposition(p_mean_prev, p_mean_cur)?;
    let k = dec.theta.len();
    if dec.theta[k - 1] >= FRAC_PI_2 - CUT_LOCUS_TOL {
        return Err(Error::CutLocus { angle: dec.theta[k - 1] });
    }
    let mut a = dec.u2.columns(0, k).clone_owned();
    for i in 0..k {
        a.column_mut(i).scale_mut(dec.theta[i]);
    }
    let a = a * dec.u1.transpose();
    Ok(VelocityMatrix {
        a,
        source_decomposition: dec,
        base: p_mean_prev.clone(),
        complement: complement_basis(p_mean_prev.basis()),
    })
}

/// Predicted subspace plus whether the step angles had to be clamped.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub subspace: Subspace,
    pub clamped: bool,
}

/// Continues the geodesic from `p_mean_prev` through `p_mean_cur` by one more
/// equal arc, i.e. the point at `t = 2`. Angles above [`MAX_STEP_ANGLE`] are
/// clamped first.
pub fn extrapolate(p_mean_prev: &Subspace, p_mean_cur: &Subspace) -> Result<Prediction> {
    let velocity = velocity_matrix(p_mean_prev, p_mean_cur)?;
    let (delta, clamped) = velocity.tangent(MAX_STEP_ANGLE);
    let subspace = exp_map(velocity.base(), &(delta * 2.0))?;
    Ok(Prediction { subspace, clamped })
}

/// [`extrapolate`], logging a warning when clamping was needed.
pub fn predict_next(p_mean_prev: &Subspace, p_mean_cur: &Subspace) -> Result<Subspace> {
    let prediction = extrapolate(p_mean_prev, p_mean_cur)?;
    if prediction.clamped {
        log::warn!("prediction step angle clamped to {MAX_STEP_ANGLE:.4} rad");
    }
    Ok(prediction.subspace)
}

/// Point at `t = blend` on the geodesic from the observation to the
/// prediction.
pub fn compensate(p_predicted: &Subspace, p_observed: &Subspace, blend: f64) -> Result<Subspace> {
    if !(0.0..=1.0).contains(&blend) {
        return Err(Error::BlendOutOfRange(blend));
    }
    if blend == 0.0 {
        return Ok(p_observed.clone());
    }
    Ok(geodesic(p_observed, p_predicted)?.point(blend))
}
