//! Domain-alignment transforms built from the geodesic flow between the
//! source subspace and a (mean) target subspace.
//!
//! With `Φ(t) = P_S·U3·cos(tΘ) - R_S·U4·sin(tΘ)` the geodesic from the source
//! to the target, the transform is
//!
//! ```text
//! G = [P_S·U3  R_S·U4] · [[Λ1, Λ2], [Λ2, Λ3]] · [P_S·U3  R_S·U4]ᵀ
//! λ1 = 1 + sin(2θ)/(2θ),  λ2 = (cos(2θ) - 1)/(2θ),  λ3 = 1 - sin(2θ)/(2θ)
//! ```
//!
//! which equals `2·∫₀¹ Φ(t)Φ(t)ᵀ dt`. The factor 2 is kept: it is a global
//! positive scale and the pipeline always maps source and target through the
//! same transform, so nearest-mean decisions are unaffected.
//!
//! The cumulative transform replaces the λ's by their average over a family
//! of geodesics whose angles move linearly from `θ(0)` (source vs previous
//! mean) to `θ(1)` (source vs current mean), using the second-order small
//! angle forms of the λ's.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grassmann::{geodesic, GeodesicFlow, Subspace};

const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-8;
// Below this angle the closed-form λ's lose digits to cancellation.
const SMALL_ANGLE: f64 = 1e-4;

/// Symmetric positive semidefinite d×d alignment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix {
    g: DMatrix<f64>,
}

impl TransformMatrix {
    /// Validates squareness, symmetry (1e-9) and the PSD bound (-1e-8).
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::dims("TransformMatrix", "square matrix", format!("{:?}", g.shape())));
        }
        let asym = (&g - g.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::BadParameter(format!(
                "transform is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let t = Self { g };
        let min = t.spectrum().min();
        if min < -PSD_TOL {
            return Err(Error::BadParameter(format!(
                "transform is not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(t)
    }

    pub(crate) fn from_matrix_unchecked(g: DMatrix<f64>) -> Self {
        Self { g }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            g: DMatrix::identity(d, d),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.g
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// Eigenvalues, unordered.
    pub fn spectrum(&self) -> DVector<f64> {
        self.g.clone().symmetric_eigenvalues()
    }
}

/// Three diagonals of a 2×2 block matrix `[[D1, D2], [D2, D3]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonals {
    pub first: DVector<f64>,
    pub cross: DVector<f64>,
    pub last: DVector<f64>,
}

fn check_angle(theta: f64) -> Result<()> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::AngleOutOfRange { angle: theta });
    }
    Ok(())
}

/// Λ1, Λ2, Λ3 diagonals of the closed-form transform.
///
/// Note the middle term is `(cos 2θ - 1)/(2θ)`, i.e. `2·∫₀¹ -cos(tθ)·sin(tθ) dt`.
pub fn lambda_blocks(theta: &DVector<f64>) -> Result<BlockDiagonals> {
    for &t in theta.iter() {
        check_angle(t)?;
    }
    let lambda = |t: f64| -> (f64, f64, f64) {
        if t < SMALL_ANGLE {
            let t2 = t * t;
            let t4 = t2 * t2;
            (
                2.0 - 2.0 / 3.0 * t2 + 2.0 / 15.0 * t4,
                -t + t2 * t / 3.0,
                2.0 / 3.0 * t2 - 2.0 / 15.0 * t4,
            )
        } else {
            let sinc = (2.0 * t).sin() / (2.0 * t);
            (1.0 + sinc, ((2.0 * t).cos() - 1.0) / (2.0 * t), 1.0 - sinc)
        }
    };
    let values: Vec<(f64, f64, f64)> = theta.iter().map(|&t| lambda(t)).collect();
    Ok(BlockDiagonals {
        first: DVector::from_iterator(values.len(), values.iter().map(|v| v.0)),
        cross: DVector::from_iterator(values.len(), values.iter().map(|v| v.1)),
        last: DVector::from_iterator(values.len(), values.iter().map(|v| v.2)),
    })
}

/// Δ1, Δ2, Δ3 diagonals of the cumulative transform: the β-average of the
/// small-angle λ's along `θ(β) = θ0 + (θ1 - θ0)·β`.
pub fn delta_blocks(theta0: &DVector<f64>, theta1: &DVector<f64>) -> Result<BlockDiagonals> {
    if theta0.len() != theta1.len() {
        return Err(Error::LengthMismatch {
            left: theta0.len(),
            right: theta1.len(),
        });
    }
    for (&a, &b) in theta0.iter().zip(theta1.iter()) {
        check_angle(a)?;
        check_angle(b)?;
    }
    let quad = theta0.zip_map(theta1, |a, b| b * b + b * a + a * a);
    Ok(BlockDiagonals {
        first: quad.map(|q| 2.0 - 2.0 / 9.0 * q),
        cross: theta0.zip_map(theta1, |a, b| -0.5 * (b + a)),
        last: quad.map(|q| 2.0 / 9.0 * q),
    })
}

/// `[A B]·[[D1, D2], [D2, D3]]·[A B]ᵀ` with `A = P_S·U3`, `B = R_S·U4[:, ..k]`.
fn assemble(flow: &GeodesicFlow, blocks: &BlockDiagonals) -> TransformMatrix {
    let a = flow.start().basis() * flow.u1();
    let b = -flow.direction();
    let mut left_a = a.clone();
    let mut left_b = a.clone();
    for i in 0..a.ncols() {
        let (ac, bc) = (a.column(i), b.column(i));
        left_a.set_column(i, &(ac * blocks.first[i] + bc * blocks.cross[i]));
        left_b.set_column(i, &(ac * blocks.cross[i] + bc * blocks.last[i]));
    }
    let g = left_a * a.transpose() + left_b * b.transpose();
    let g = (&g + g.transpose()) * 0.5;
    TransformMatrix::from_matrix_unchecked(g)
}

/// Closed-form geodesic-flow transform from the source subspace to a target
/// subspace.
pub fn gfk_transform(p_source: &Subspace, p_target: &Subspace) -> Result<TransformMatrix> {
    let flow = geodesic(p_source, p_target)?;
    let blocks = lambda_blocks(flow.theta())?;
    Ok(assemble(&flow, &blocks))
}

/// Composite Simpson weights on [0, 1] for an odd node count >= 3.
pub fn simpson_weights(nodes: usize) -> Result<Vec<f64>> {
    if nodes < 3 || nodes % 2 == 0 {
        return Err(Error::BadNodeCount(nodes));
    }
    let h = 1.0 / (nodes - 1) as f64;
    Ok((0..nodes)
        .map(|i| {
            let w = if i == 0 || i == nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect())
}

/// Simpson approximation of `2·∫₀¹ Φ(t)Φ(t)ᵀ dt` using projectors onto the
/// intermediate subspaces. Converges to [`gfk_transform`].
pub fn quadrature_transform(p_source: &Subspace, p_target: &Subspace, nodes: usize) -> Result<TransformMatrix> {
    let weights = simpson_weights(nodes)?;
    let flow = geodesic(p_source, p_target)?;
    let d = p_source.ambient_dim();
    let mut g = DMatrix::zeros(d, d);
    for (i, w) in weights.iter().enumerate() {
        let t = i as f64 / (nodes - 1) as f64;
        g += flow.point(t).projector() * (2.0 * w);
    }
    Ok(TransformMatrix::from_matrix_unchecked(g))
}

/// Cumulative transform together with a direction-mismatch diagnostic.
#[derive(Debug, Clone)]
pub struct CumulativeTransform {
    pub transform: TransformMatrix,
    /// Largest angle (rad) between matching source principal vectors of the
    /// (source, previous mean) and (source, current mean) pairs. The closed
    /// form reuses the current pair's vectors for both, so large values mean
    /// the approximation is coarse.
    pub direction_mismatch: f64,
}

/// Threshold above which the direction mismatch is reported.
pub const DIRECTION_MISMATCH_WARN: f64 = 0.3;

/// Cumulative transform over the region spanned by the source and two
/// consecutive mean subspaces.
pub fn cumulative_transform(
    p_source: &Subspace,
    p_mean_prev: &Subspace,
    p_mean_cur: &Subspace,
) -> Result<TransformMatrix> {
    Ok(cumulative_transform_diagnosed(p_source, p_mean_prev, p_mean_cur)?.transform)
}

pub fn cumulative_transform_diagnosed(
    p_source: &Subspace,
    p_mean_prev: &Subspace,
    p_mean_cur: &Subspace,
) -> Result<CumulativeTransform> {
    let flow_prev = geodesic(p_source, p_mean_prev)?;
    let flow_cur = geodesic(p_source, p_mean_cur)?;
    let blocks = delta_blocks(flow_prev.theta(), flow_cur.theta())?;
    let transform = assemble(&flow_cur, &blocks);

    let a_prev = p_source.basis() * flow_prev.u1();
    let a_cur = p_source.basis() * flow_cur.u1();
    let direction_mismatch = (0..a_cur.ncols())
        .map(|i| a_prev.column(i).dot(&a_cur.column(i)).abs().min(1.0).acos())
        .fold(0.0, f64::max);
    Ok(CumulativeTransform {
        transform,
        direction_mismatch,
    })
}

/// `X·G` for an N×d batch.
pub fn apply_transform(x: &DMatrix<f64>, g: &TransformMatrix) -> Result<DMatrix<f64>> {
    if x.ncols() != g.dim() {
        return Err(Error::dims("apply_transform", g.dim(), x.ncols()));
    }
    Ok(x * g.matrix())
}
