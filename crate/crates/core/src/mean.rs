//! Mean subspaces: the incremental geodesic mean (ICMS), the iterative
//! Karcher mean used as its reference, and the incremental average of
//! transformation matrices used as a baseline.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gfk::TransformMatrix;
use crate::grassmann::{exp_map, geodesic, log_map, Subspace};

/// Default stopping tolerance on the Frobenius norm of the mean tangent.
pub const KARCHER_TOL: f64 = 1e-6;
pub const KARCHER_MAX_ITER: usize = 100;

/// Running incremental mean of a stream of subspaces.
#[derive(Debug, Clone)]
pub struct MeanState {
    mean: Subspace,
    prev_mean: Option<Subspace>,
    count: usize,
}

impl MeanState {
    pub fn mean(&self) -> &Subspace {
        &self.mean
    }

    /// Mean before the most recent update; `None` until the second subspace.
    pub fn prev_mean(&self) -> Option<&Subspace> {
        self.prev_mean.as_ref()
    }

    /// Number of subspaces absorbed.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn update(&self, p_new: &Subspace) -> Result<MeanState> {
        icms_update(self, p_new)
    }

    /// Replaces the mean with one computed elsewhere (e.g. a Karcher mean),
    /// keeping the bookkeeping of [`icms_update`].
    pub fn advance_to(&self, mean: Subspace) -> MeanState {
        MeanState {
            mean,
            prev_mean: Some(self.mean.clone()),
            count: self.count + 1,
        }
    }
}

/// Starts the recursion with a single subspace.
pub fn init_mean(p_first: Subspace) -> MeanState {
    MeanState {
        mean: p_first,
        prev_mean: None,
        count: 1,
    }
}

/// One ICMS step: the new mean is the point at `t = 1/n` on the geodesic from
/// the current mean (t = 0) to the incoming subspace (t = 1), so that it
/// splits the arc in the ratio 1 : (n-1).
pub fn icms_update(state: &MeanState, p_new: &Subspace) -> Result<MeanState> {
    let n = state.count + 1;
    let flow = geodesic(&state.mean, p_new)?;
    let mean = flow.point(1.0 / n as f64);
    Ok(MeanState {
        mean,
        prev_mean: Some(state.mean.clone()),
        count: n,
    })
}

/// Result of the Karcher iteration.
#[derive(Debug, Clone)]
pub struct KarcherMean {
    pub mean: Subspace,
    pub iterations: usize,
    /// Frobenius norm of the averaged tangent at `mean`.
    pub residual: f64,
}

/// Karcher (Fréchet) mean by Riemannian gradient descent with unit step,
/// started from the first subspace.
pub fn karcher_mean(subspaces: &[Subspace], tol: f64, max_iter: usize) -> Result<KarcherMean> {
    let first = subspaces.first().ok_or(Error::EmptyList)?;
    karcher_mean_from(first.clone(), subspaces, tol, max_iter)
}

/// Karcher iteration from an explicit starting point.
pub fn karcher_mean_from(
    init: Subspace,
    subspaces: &[Subspace],
    tol: f64,
    max_iter: usize,
) -> Result<KarcherMean> {
    let result = karcher_mean_capped(init, subspaces, tol, max_iter)?;
    if result.residual > 10.0 * tol {
        return Err(Error::NoConvergence {
            iterations: result.iterations,
            residual: result.residual,
        });
    }
    Ok(result)
}

/// Karcher iteration that returns its last iterate when the cap is reached,
/// whatever the residual.
pub fn karcher_mean_capped(
    init: Subspace,
    subspaces: &[Subspace],
    tol: f64,
    max_iter: usize,
) -> Result<KarcherMean> {
    if subspaces.is_empty() {
        return Err(Error::EmptyList);
    }
    let weight = 1.0 / subspaces.len() as f64;
    let mut mu = init;
    let mut iterations = 0;
    loop {
        let step = tangent_sum(&mu, subspaces)? * weight;
        let residual = step.norm();
        if residual < tol || iterations == max_iter {
            return Ok(KarcherMean {
                mean: mu,
                iterations,
                residual,
            });
        }
        mu = exp_map(&mu, &step)?;
        iterations += 1;
    }
}

fn tangent_sum(mean: &Subspace, subspaces: &[Subspace]) -> Result<DMatrix<f64>> {
    let mut sum = DMatrix::zeros(mean.ambient_dim(), mean.sub_dim());
    for p in subspaces {
        sum += log_map(mean, p)?;
    }
    Ok(sum)
}

/// `‖Σ_i log_mean(P_i)‖_F`, the first-order optimality residual of a
/// candidate mean; zero at an exact Karcher mean.
pub fn karcher_residual(mean: &Subspace, subspaces: &[Subspace]) -> Result<f64> {
    Ok(tangent_sum(mean, subspaces)?.norm())
}

/// `(1 - 1/n)·Ḡ_{n-1} + (1/n)·G_n`.
pub fn incremental_average_transform(
    g_prev_avg: &TransformMatrix,
    g_new: &TransformMatrix,
    n: usize,
) -> Result<TransformMatrix> {
    if g_prev_avg.dim() != g_new.dim() {
        return Err(Error::dims(
            "incremental_average_transform",
            g_prev_avg.dim(),
            g_new.dim(),
        ));
    }
    if n == 0 {
        return Err(Error::BadParameter("average count must be >= 1".into()));
    }
    let w = 1.0 / n as f64;
    let g = g_prev_avg.matrix() * (1.0 - w) + g_new.matrix() * w;
    Ok(TransformMatrix::from_matrix_unchecked(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{geodesic_distance, orthonormality_deviation, random_subspace, random_tangent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(angle: f64) -> Subspace {
        Subspace::new(DMatrix::from_column_slice(2, 1, &[angle.cos(), angle.sin()])).unwrap()
    }

    fn cluster(seed: u64, d: usize, k: usize, m: usize, radius: f64) -> Vec<Subspace> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_subspace(&mut rng, d, k).unwrap();
        (0..m)
            .map(|_| {
                let delta = random_tangent(&mut rng, &base, radius);
                exp_map(&base, &delta).unwrap()
            })
            .collect()
    }

    #[test]
    fn init_then_same_subspace() {
        let p = Subspace::standard(6, 2).unwrap();
        let state = init_mean(p.clone());
        assert_eq!(state.count(), 1);
        assert!(state.prev_mean().is_none());
        let next = icms_update(&state, &p).unwrap();
        assert_eq!(next.count(), 2);
        assert!(geodesic_distance(next.mean(), &p).unwrap() < 1e-14);
        assert!(next.prev_mean().is_some());
    }

    #[test]
    fn repeated_identity_updates_do_not_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_subspace(&mut rng, 20, 4).unwrap();
        let mut state = init_mean(p.clone());
        for _ in 0..50 {
            state = state.update(&p).unwrap();
        }
        assert_eq!(state.count(), 51);
        assert!(geodesic_distance(state.mean(), &p).unwrap() < 1e-9);
    }

    #[test]
    fn icms_splits_the_arc() {
        let deg = std::f64::consts::PI / 180.0;
        let state = icms_update(&init_mean(line(10.0 * deg)), &line(10.0 * deg)).unwrap();
        assert_eq!(state.count(), 2);
        let next = icms_update(&state, &line(40.0 * deg)).unwrap();
        assert!(geodesic_distance(next.mean(), &line(20.0 * deg)).unwrap() < 1e-14);
    }

    #[test]
    fn icms_stays_orthonormal_over_long_streams() {
        let subspaces = cluster(17, 12, 3, 64, 0.3);
        let mut state = init_mean(subspaces[0].clone());
        for i in 1..10_000 {
            state = state.update(&subspaces[i % subspaces.len()]).unwrap();
        }
        assert!(orthonormality_deviation(state.mean().basis()) < 1e-10);
    }

    #[test]
    fn icms_tracks_karcher_mean() {
        let subspaces = cluster(4, 30, 5, 20, 0.3);
        let mut state = init_mean(subspaces[0].clone());
        for p in &subspaces[1..] {
            state = state.update(p).unwrap();
        }
        let karcher = karcher_mean(&subspaces, KARCHER_TOL, KARCHER_MAX_ITER).unwrap();
        assert!(geodesic_distance(state.mean(), &karcher.mean).unwrap() < 0.1);
    }

    #[test]
    fn karcher_single_subspace() {
        let p = Subspace::standard(8, 2).unwrap();
        let km = karcher_mean(std::slice::from_ref(&p), KARCHER_TOL, KARCHER_MAX_ITER).unwrap();
        assert!(km.iterations <= 1);
        assert!(geodesic_distance(&km.mean, &p).unwrap() < 1e-14);
    }

    #[test]
    fn karcher_midpoint_on_g12() {
        let km = karcher_mean(&[line(0.1), line(0.3)], KARCHER_TOL, KARCHER_MAX_ITER).unwrap();
        assert!(geodesic_distance(&km.mean, &line(0.2)).unwrap() < 1e-6);
    }

    #[test]
    fn karcher_satisfies_first_order_condition() {
        let subspaces = cluster(9, 12, 3, 10, 0.25);
        let km = karcher_mean(&subspaces, KARCHER_TOL, KARCHER_MAX_ITER).unwrap();
        assert!(karcher_residual(&km.mean, &subspaces).unwrap() < 1e-6 * 10.0);
        // The stopping rule is on the averaged tangent.
        assert!(karcher_residual(&km.mean, &subspaces).unwrap() / (subspaces.len() as f64) < KARCHER_TOL);
    }

    #[test]
    fn karcher_reports_non_convergence() {
        let subspaces = cluster(10, 12, 3, 10, 0.25);
        let err = karcher_mean(&subspaces, 1e-14, 1).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 1, .. }));
        assert!(matches!(karcher_mean(&[], 1e-6, 10), Err(Error::EmptyList)));
    }

    #[test]
    fn residual_examples() {
        let p = line(0.7);
        assert!(karcher_residual(&p, std::slice::from_ref(&p)).unwrap() < 1e-15);
        assert!(karcher_residual(&line(0.2), &[line(0.1), line(0.3)]).unwrap() < 1e-8);
    }

    #[test]
    fn icms_residual_is_small_relative_to_spread() {
        let subspaces = cluster(12, 30, 5, 20, 0.3);
        let mut state = init_mean(subspaces[0].clone());
        for p in &subspaces[1..] {
            state = state.update(p).unwrap();
        }
        let residual = karcher_residual(state.mean(), &subspaces).unwrap();
        let spread: f64 = subspaces
            .iter()
            .map(|p| log_map(state.mean(), p).unwrap().norm())
            .sum();
        assert!(residual <= 0.05 * spread, "{residual} vs {spread}");
    }

    #[test]
    fn incremental_average_examples() {
        let eye = TransformMatrix::identity(4);
        let g = TransformMatrix::from_matrix_unchecked(DMatrix::from_fn(4, 4, |i, j| (i + j) as f64));
        let first = incremental_average_transform(&eye, &g, 1).unwrap();
        assert_eq!(first.matrix(), g.matrix());
        for n in [1, 2, 7] {
            let avg = incremental_average_transform(&eye, &eye, n).unwrap();
            assert!((avg.matrix() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-15);
        }
        assert!(matches!(
            incremental_average_transform(&eye, &TransformMatrix::identity(3), 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn incremental_average_is_arithmetic_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        let mats: Vec<DMatrix<f64>> = (0..5)
            .map(|_| {
                let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
                &a + a.transpose()
            })
            .collect();
        let mut avg = TransformMatrix::from_matrix_unchecked(mats[0].clone());
        for (i, m) in mats.iter().enumerate().skip(1) {
            avg = incremental_average_transform(&avg, &TransformMatrix::from_matrix_unchecked(m.clone()), i + 1)
                .unwrap();
        }
        let direct = mats.iter().fold(DMatrix::zeros(6, 6), |acc, m| acc + m) / 5.0;
        assert!((avg.matrix() - direct).amax() < 1e-12);
    }
}
