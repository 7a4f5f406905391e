//! Subspace geometry on the Grassmann manifold G(k, d).
//!
//! A point is a k-dimensional linear subspace of R^d, stored as a d×k matrix
//! with orthonormal columns. Bases are never canonicalized: two [`Subspace`]
//! values describe the same point when their projectors agree, which is
//! checked through [`geodesic_distance`].
//!
//! Geodesics are parameterized as
//!
//! ```text
//! Psi(t) = P1·U1·cos(tΘ) - R1·U2·sin(tΘ)
//! ```
//!
//! where `R1` completes `P1` to an orthogonal matrix and `Θ` holds the
//! principal angles between the endpoints. [`GeodesicFlow`] keeps the thin
//! factors only (`P1·U1` and the d×k block `-R1·U2[:, ..k]`), so evaluating a
//! flow costs O(d·k²) even for large ambient dimensions. The full
//! [`PrincipalDecomposition`] with the (d-k)×(d-k) rotation is available on
//! demand.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Elementwise tolerance on `basisᵀ·basis = I`.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Principal angles this close to π/2 are treated as the cut locus.
pub const CUT_LOCUS_TOL: f64 = 1e-8;
/// Maximum |baseᵀ·Δ| entry accepted by [`exp_map`].
pub const TANGENT_TOL: f64 = 1e-8;
/// Relative singular value threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

// Below this sine a principal direction is numerically undefined and gets
// replaced by an arbitrary orthonormal completion vector.
const DEGENERATE_SINE: f64 = 1e-12;

/// A point on G(k, d), represented by an orthonormal d×k basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Wraps a basis that is already orthonormal.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        check_dims(basis.nrows(), basis.ncols())?;
        let deviation = orthonormality_deviation(&basis);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self { basis })
    }

    /// Orthonormal basis for the column space of a full-rank d×k matrix.
    pub fn orthonormalize(m: &DMatrix<f64>) -> Result<Self> {
        orthonormalize(m)
    }

    /// `span(e_1, ..., e_k)` in R^d.
    pub fn standard(ambient_dim: usize, sub_dim: usize) -> Result<Self> {
        check_dims(ambient_dim, sub_dim)?;
        Ok(Self {
            basis: DMatrix::identity(ambient_dim, sub_dim),
        })
    }

    /// Re-orthonormalizes a matrix whose columns are known to be independent
    /// (typically a basis that picked up roundoff).
    pub(crate) fn from_raw(m: DMatrix<f64>) -> Self {
        debug_assert!(m.nrows() >= 2 * m.ncols());
        let q = m.qr().q();
        Self { basis: q }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    /// d
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// k
    pub fn sub_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthogonal projector `basis·basisᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Geodesic distance to `other` is at most `tol`.
    pub fn approx_eq(&self, other: &Subspace, tol: f64) -> bool {
        geodesic_distance(self, other).is_ok_and(|d| d <= tol)
    }
}

pub(crate) fn check_dims(ambient_dim: usize, sub_dim: usize) -> Result<()> {
    if sub_dim == 0 || 2 * sub_dim > ambient_dim {
        return Err(Error::InvalidSubspaceDim {
            sub_dim,
            ambient_dim,
        });
    }
    Ok(())
}

fn check_same_shape(context: &'static str, a: &Subspace, b: &Subspace) -> Result<()> {
    if a.basis.shape() != b.basis.shape() {
        return Err(Error::dims(
            context,
            format!("{:?}", a.basis.shape()),
            format!("{:?}", b.basis.shape()),
        ));
    }
    Ok(())
}

/// Largest entry of `|mᵀm - I|`.
pub fn orthonormality_deviation(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let k = gram.nrows();
    (gram - DMatrix::<f64>::identity(k, k)).amax()
}

/// Orthonormal basis spanning the columns of `m` (d×k, numerical rank k).
///
/// The basis is taken from the left singular vectors, so it doubles as a
/// rank check: the smallest singular value must exceed `RANK_TOL` times the
/// largest.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<Subspace> {
    let (d, k) = m.shape();
    check_dims(d, k)?;
    let svd = m.clone().svd(true, false);
    let sv = &svd.singular_values;
    let largest = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * largest).count();
    if largest == 0.0 || !largest.is_finite() || rank < k {
        return Err(Error::RankDeficient { rank, expected: k });
    }
    let u = svd.u.expect("left singular vectors requested");
    // Re-run through QR so the basis is orthonormal to working precision
    // regardless of how the SVD accumulated its rotations.
    Ok(Subspace::from_raw(u))
}

/// Householder reflectors that map the columns of `m` onto the leading
/// coordinate axes; returns the full d×d orthogonal factor.
fn householder_q(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, k) = m.shape();
    let mut a = m.clone();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(k);
    for j in 0..k.min(d) {
        let x = a.view((j, j), (d - j, 1)).column(0).clone_owned();
        let norm = x.norm();
        let mut v = x;
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm > 0.0 {
            v /= vnorm;
            let mut block = a.view_mut((j, j), (d - j, k - j));
            let proj = v.transpose() * &block;
            block -= &v * proj * 2.0;
        }
        reflectors.push(v);
    }
    let mut q = DMatrix::<f64>::identity(d, d);
    for (j, v) in reflectors.iter().enumerate().rev() {
        if v.norm() == 0.0 {
            continue;
        }
        let mut block = q.view_mut((j, 0), (d - j, d));
        let proj = v.transpose() * &block;
        block -= v * proj * 2.0;
    }
    q
}

/// Orthonormal basis (d×(d-m)) of the orthogonal complement of the columns
/// of an orthonormal d×m matrix.
pub(crate) fn complement_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, cols) = m.shape();
    let q = householder_q(m);
    let mut r = q.columns(cols, d - cols).clone_owned();
    // Project out the columns of m once more; the reflectors leave O(eps)
    // leakage which we do not want to accumulate in long streams.
    let leak = m.transpose() * &r;
    r -= m * leak;
    r.qr().q()
}

/// Extends the basis P of `s` to a d×d orthogonal matrix `Q = [P R]` with
/// `Qᵀ·P = [I_k; 0]`.
pub fn orthogonal_completion(s: &Subspace) -> DMatrix<f64> {
    let (d, k) = s.basis.shape();
    let r = complement_basis(&s.basis);
    let mut q = DMatrix::<f64>::zeros(d, d);
    q.columns_mut(0, k).copy_from(&s.basis);
    q.columns_mut(k, d - k).copy_from(&r);
    q
}

/// Principal angles between two subspaces, ascending, in [0, π/2].
///
/// Cosines come from the singular values of `P1ᵀP2`, sines from the singular
/// values of `(I - P1P1ᵀ)P2`; each angle is taken from whichever of the two
/// is better conditioned, so small and large angles are both accurate to
/// working precision.
pub fn principal_angles(p1: &Subspace, p2: &Subspace) -> Result<DVector<f64>> {
    check_same_shape("principal_angles", p1, p2)?;
    let cross = p1.basis.transpose() * &p2.basis;
    let residual = &p2.basis - &p1.basis * &cross;
    let mut cosines: Vec<f64> = cross.singular_values().iter().copied().collect();
    let mut sines: Vec<f64> = residual.singular_values().iter().copied().collect();
    cosines.sort_by(|a, b| b.total_cmp(a));
    sines.sort_by(|a, b| a.total_cmp(b));
    let mut theta: Vec<f64> = cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| {
            let (c, s) = (c.clamp(0.0, 1.0), s.clamp(0.0, 1.0));
            if s * s < 0.5 {
                s.asin()
            } else {
                c.acos()
            }
        })
        .collect();
    theta.sort_by(|a, b| a.total_cmp(b));
    Ok(DVector::from_vec(theta))
}

/// Geodesic distance `‖Θ‖₂` in radians.
pub fn geodesic_distance(p1: &Subspace, p2: &Subspace) -> Result<f64> {
    Ok(principal_angles(p1, p2)?.norm())
}

/// Rotations and principal angles relating two subspaces:
///
/// ```text
/// P1ᵀP2 =  U1·Γ·Vᵀ
/// R1ᵀP2 = -U2·Σ·Vᵀ,   Γ = diag(cos θ),  Σ = [diag(sin θ); 0]
/// ```
///
/// with `R1` the complement returned by [`orthogonal_completion`].
#[derive(Debug, Clone)]
pub struct PrincipalDecomposition {
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub theta: DVector<f64>,
}

impl PrincipalDecomposition {
    /// `diag(cos θ)`
    pub fn gamma(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.theta.map(f64::cos))
    }

    /// `[diag(sin θ); 0]`, (d-k)×k
    pub fn sigma(&self) -> DMatrix<f64> {
        let k = self.theta.len();
        let mut s = DMatrix::zeros(self.u2.nrows(), k);
        for i in 0..k {
            s[(i, i)] = self.theta[i].sin();
        }
        s
    }
}

/// Builds a (d-k)×(d-k) orthonormal matrix whose first k columns are the
/// given directions, except that columns flagged as degenerate are replaced
/// by completion vectors.
fn complete_rotation(directions: &DMatrix<f64>, degenerate: &[bool]) -> DMatrix<f64> {
    let (n, k) = directions.shape();
    let good: Vec<usize> = (0..k).filter(|&i| !degenerate[i]).collect();
    let good_cols = DMatrix::from_fn(n, good.len(), |r, c| directions[(r, good[c])]);
    let rest = if good.is_empty() {
        DMatrix::identity(n, n)
    } else {
        complement_basis(&good_cols)
    };
    let mut out = DMatrix::zeros(n, n);
    let mut next = 0;
    for i in 0..k {
        if degenerate[i] {
            out.set_column(i, &rest.column(next));
            next += 1;
        } else {
            out.set_column(i, &directions.column(i));
        }
    }
    for i in k..n {
        out.set_column(i, &rest.column(next));
        next += 1;
    }
    out
}

/// CS-style decomposition of `Qᵀ·P2` where `Q` completes `P1`.
///
/// Works for every pair, including principal angles of π/2.
pub fn principal_decomposition(p1: &Subspace, p2: &Subspace) -> Result<PrincipalDecomposition> {
    check_same_shape("principal_decomposition", p1, p2)?;
    let k = p1.sub_dim();
    let r1 = complement_basis(&p1.basis);
    let cross = p1.basis.transpose() * &p2.basis;
    let svd = cross.svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v requested").transpose();
    let gamma = svd.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| gamma[b].total_cmp(&gamma[a]));
    let u1 = DMatrix::from_fn(k, k, |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(k, k, |r, c| v[(r, order[c])]);

    let w = r1.transpose() * &p2.basis * &v;
    let mut theta = DVector::zeros(k);
    let mut dirs = DMatrix::zeros(w.nrows(), k);
    let mut degenerate = vec![false; k];
    for i in 0..k {
        let s = w.column(i).norm();
        let c = gamma[order[i]].clamp(0.0, 1.0);
        theta[i] = s.atan2(c);
        if s > DEGENERATE_SINE {
            dirs.set_column(i, &(-w.column(i) / s));
        } else {
            degenerate[i] = true;
        }
    }
    let u2 = complete_rotation(&dirs, &degenerate);
    Ok(PrincipalDecomposition { u1, u2, v, theta })
}

/// Geodesic between two subspaces, evaluable at any real `t`.
///
/// `point(0)` spans the start and `point(1)` the target; values outside
/// [0, 1] extrapolate along the same great circle of each principal plane.
#[derive(Debug, Clone)]
pub struct GeodesicFlow {
    start: Subspace,
    u1: DMatrix<f64>,
    // -R1·U2[:, ..k]: unit directions in the complement of the start.
    direction: DMatrix<f64>,
    theta: DVector<f64>,
    v: DMatrix<f64>,
}

/// Geodesic from `p1` (t = 0) to `p2` (t = 1).
///
/// Uses the tangent route `M = (I - P1P1ᵀ)·P2·(P1ᵀP2)⁻¹ = U·tan(Θ)·U1ᵀ`,
/// which keeps small angles accurate and fails cleanly at the cut locus.
pub fn geodesic(p1: &Subspace, p2: &Subspace) -> Result<GeodesicFlow> {
    check_same_shape("geodesic", p1, p2)?;
    let k = p1.sub_dim();
    let cross = p1.basis.transpose() * &p2.basis;
    let residual = &p2.basis - &p1.basis * &cross;
    let mt = cross
        .transpose()
        .lu()
        .solve(&residual.transpose())
        .ok_or(Error::CutLocus { angle: FRAC_PI_2 })?;
    let m = mt.transpose();
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::CutLocus { angle: FRAC_PI_2 });
    }
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let vm = svd.v_t.expect("v requested").transpose();
    let tangents = svd.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| tangents[a].total_cmp(&tangents[b]));
    let theta = DVector::from_fn(k, |i, _| tangents[order[i]].atan());
    let largest = theta[k - 1];
    if largest >= FRAC_PI_2 - CUT_LOCUS_TOL {
        return Err(Error::CutLocus { angle: largest });
    }
    let u1 = DMatrix::from_fn(k, k, |r, c| vm[(r, order[c])]);
    let mut direction = DMatrix::from_fn(p1.ambient_dim(), k, |r, c| u[(r, order[c])]);

    let degenerate: Vec<bool> = (0..k)
        .map(|i| theta[i].sin() <= DEGENERATE_SINE)
        .collect();
    if degenerate.iter().any(|&x| x) {
        let good: Vec<usize> = (0..k).filter(|&i| !degenerate[i]).collect();
        let mut known = DMatrix::zeros(p1.ambient_dim(), k + good.len());
        known.columns_mut(0, k).copy_from(&p1.basis);
        for (j, &i) in good.iter().enumerate() {
            known.set_column(k + j, &direction.column(i));
        }
        let filler = complement_basis(&known);
        let mut next = 0;
        for i in 0..k {
            if degenerate[i] {
                direction.set_column(i, &filler.column(next));
                next += 1;
            }
        }
    }

    let end = evaluate(&p1.basis, &u1, &direction, &theta, 1.0);
    let v = p2.basis.transpose() * end;
    Ok(GeodesicFlow {
        start: p1.clone(),
        u1,
        direction,
        theta,
        v,
    })
}

fn evaluate(
    p1: &DMatrix<f64>,
    u1: &DMatrix<f64>,
    direction: &DMatrix<f64>,
    theta: &DVector<f64>,
    t: f64,
) -> DMatrix<f64> {
    let mut a = p1 * u1;
    let mut b = direction.clone();
    for (i, &th) in theta.iter().enumerate() {
        a.column_mut(i).scale_mut((t * th).cos());
        b.column_mut(i).scale_mut((t * th).sin());
    }
    a + b
}

impl GeodesicFlow {
    pub fn start(&self) -> &Subspace {
        &self.start
    }

    /// Principal angles between the endpoints, ascending.
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// k×k rotation of the start basis onto the principal vectors.
    pub fn u1(&self) -> &DMatrix<f64> {
        &self.u1
    }

    /// Unit principal directions in the complement of the start (d×k),
    /// equal to `-R1·U2[:, ..k]`.
    pub fn direction(&self) -> &DMatrix<f64> {
        &self.direction
    }

    /// k×k rotation with `Psi(1) = target·V`.
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Length of the flow, `‖Θ‖₂`.
    pub fn length(&self) -> f64 {
        self.theta.norm()
    }

    /// Unnormalized `Psi(t)`; orthonormal up to roundoff.
    pub fn point_basis(&self, t: f64) -> DMatrix<f64> {
        evaluate(&self.start.basis, &self.u1, &self.direction, &self.theta, t)
    }

    /// `Psi(t)`, re-orthonormalized. `t` outside [0, 1] extrapolates.
    pub fn point(&self, t: f64) -> Subspace {
        Subspace::from_raw(self.point_basis(t))
    }

    /// Initial velocity at the start basis, i.e. the logarithm map of the
    /// target: `direction·diag(Θ)·U1ᵀ`.
    pub fn tangent(&self) -> DMatrix<f64> {
        let mut scaled = self.direction.clone();
        for (i, &th) in self.theta.iter().enumerate() {
            scaled.column_mut(i).scale_mut(th);
        }
        scaled * self.u1.transpose()
    }

    /// d×(d-k) orthonormal complement `R1` of the start, the same one used
    /// by [`orthogonal_completion`].
    pub fn complement(&self) -> DMatrix<f64> {
        complement_basis(&self.start.basis)
    }

    /// Full decomposition in terms of [`GeodesicFlow::complement`].
    pub fn decomposition(&self) -> PrincipalDecomposition {
        let r1 = self.complement();
        let z = -(r1.transpose() * &self.direction);
        let u2 = complete_rotation(&z, &vec![false; self.theta.len()]);
        PrincipalDecomposition {
            u1: self.u1.clone(),
            u2,
            v: self.v.clone(),
            theta: self.theta.clone(),
        }
    }
}

/// `Psi(t)` of a flow; see [`GeodesicFlow::point`].
pub fn geodesic_point(flow: &GeodesicFlow, t: f64) -> Subspace {
    flow.point(t)
}

/// Riemannian logarithm: the tangent Δ at `base` (with `baseᵀΔ = 0`) whose
/// exponential is `x`. Singular values of Δ are the principal angles.
pub fn log_map(base: &Subspace, x: &Subspace) -> Result<DMatrix<f64>> {
    Ok(geodesic(base, x)?.tangent())
}

/// Riemannian exponential: follows the geodesic from `base` with initial
/// velocity `delta` for unit time.
pub fn exp_map(base: &Subspace, delta: &DMatrix<f64>) -> Result<Subspace> {
    if delta.shape() != base.basis.shape() {
        return Err(Error::dims(
            "exp_map",
            format!("{:?}", base.basis.shape()),
            format!("{:?}", delta.shape()),
        ));
    }
    let residual = (base.basis.transpose() * delta).amax();
    if residual > TANGENT_TOL {
        return Err(Error::NotTangent { residual });
    }
    Ok(Subspace::from_raw(exp_basis(&base.basis, delta)))
}

/// `base·V·cos(Σ)·Vᵀ + U·sin(Σ)·Vᵀ` for the thin SVD `delta = U·Σ·Vᵀ`. The
/// result keeps the column correspondence of `base` (the base frame is
/// transported along the geodesic).
pub(crate) fn exp_basis(base: &DMatrix<f64>, delta: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = delta.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v requested");
    let mut a = base * vt.transpose();
    let mut b = u;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        a.column_mut(i).scale_mut(s.cos());
        b.column_mut(i).scale_mut(s.sin());
    }
    (a + b) * vt
}

/// Uniformly distributed point on G(k, d).
pub fn random_subspace<R: Rng + ?Sized>(rng: &mut R, ambient_dim: usize, sub_dim: usize) -> Result<Subspace> {
    check_dims(ambient_dim, sub_dim)?;
    let m = DMatrix::from_fn(ambient_dim, sub_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&m)
}

/// Random tangent at `base` with Frobenius norm `norm`.
pub fn random_tangent<R: Rng + ?Sized>(rng: &mut R, base: &Subspace, norm: f64) -> DMatrix<f64> {
    let (d, k) = base.basis.shape();
    let g = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let h = &g - &base.basis * (base.basis.transpose() * &g);
    let n = h.norm();
    if n == 0.0 {
        h
    } else {
        h * (norm / n)
    }
}
