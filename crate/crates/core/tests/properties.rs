use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ouda::gfk::gfk_transform;
use ouda::grassmann::{
    exp_map, geodesic, geodesic_distance, log_map, orthonormality_deviation, random_subspace, random_tangent,
    Subspace,
};
use ouda::mean::init_mean;
use ouda::pipeline::{classify, Classifier};
use ouda::predict::compensate;

fn pair(seed: u64, k: usize, d: usize, distance: f64) -> (Subspace, Subspace) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p1 = random_subspace(&mut rng, d, k).unwrap();
    let p2 = exp_map(&p1, &random_tangent(&mut rng, &p1, distance)).unwrap();
    (p1, p2)
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=5).prop_flat_map(|k| (Just(k), (2 * k)..=(2 * k + 10)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn geodesic_hits_endpoints((k, d) in shape(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p1 = random_subspace(&mut rng, d, k).unwrap();
        let p2 = random_subspace(&mut rng, d, k).unwrap();
        let flow = geodesic(&p1, &p2).unwrap();
        prop_assert!(geodesic_distance(&flow.point(0.0), &p1).unwrap() < 1e-8);
        prop_assert!(geodesic_distance(&flow.point(1.0), &p2).unwrap() < 1e-8);
    }

    #[test]
    fn geodesic_moves_at_constant_speed((k, d) in shape(), seed in any::<u64>(), t in 0.0f64..=1.0) {
        let (p1, p2) = pair(seed, k, d, 1.2);
        let flow = geodesic(&p1, &p2).unwrap();
        let total = flow.length();
        let point = flow.point(t);
        prop_assert!((geodesic_distance(&p1, &point).unwrap() - t * total).abs() < 1e-8);
        prop_assert!((geodesic_distance(&point, &p2).unwrap() - (1.0 - t) * total).abs() < 1e-8);
    }

    #[test]
    fn exp_inverts_log((k, d) in shape(), seed in any::<u64>()) {
        let (p1, p2) = pair(seed, k, d, 1.2);
        let delta = log_map(&p1, &p2).unwrap();
        prop_assert!((p1.basis().transpose() * &delta).amax() < 1e-10);
        prop_assert!(exp_map(&p1, &delta).unwrap().approx_eq(&p2, 1e-8));
    }

    #[test]
    fn compensation_is_monotone_in_blend(seed in any::<u64>(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (predicted, observed) = pair(seed, 3, 12, 1.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let d_lo = geodesic_distance(&compensate(&predicted, &observed, lo).unwrap(), &observed).unwrap();
        let d_hi = geodesic_distance(&compensate(&predicted, &observed, hi).unwrap(), &observed).unwrap();
        prop_assert!(d_lo <= d_hi + 1e-9);
        let full = geodesic_distance(&predicted, &observed).unwrap();
        prop_assert!((d_hi - hi * full).abs() < 1e-8);
    }

    #[test]
    fn ncm_ignores_joint_scaling(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centroids = random_subspace(&mut rng, 8, 3).unwrap().into_basis().transpose() * 5.0;
        let x = random_subspace(&mut rng, 20, 8).unwrap().into_basis() * 7.0;
        let plain = classify(&Classifier::from_centroids(centroids.clone()), &x).unwrap();
        let scaled = classify(&Classifier::from_centroids(centroids * scale), &(x * scale)).unwrap();
        prop_assert_eq!(plain, scaled);
    }

    #[test]
    fn gfk_is_symmetric_with_bounded_spectrum((k, d) in shape(), seed in any::<u64>()) {
        let (ps, pt) = pair(seed, k, d, 1.4);
        let g = gfk_transform(&ps, &pt).unwrap();
        let m: &DMatrix<f64> = g.matrix();
        prop_assert!((m - m.transpose()).amax() < 1e-12);
        let eig = m.clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() > -1e-8 && eig.max() < 2.0 + 1e-8);
    }
}

#[test]
fn icms_stays_orthonormal_over_long_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let base = random_subspace(&mut rng, 12, 3).unwrap();
    let mut state = init_mean(base.clone());
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let next = exp_map(&base, &random_tangent(&mut rng, &base, 0.5)).unwrap();
        state = state.update(&next).unwrap();
        worst = worst.max(orthonormality_deviation(state.mean().basis()));
    }
    assert!(worst < 1e-10, "{worst}");
    assert_eq!(state.count(), 10_001);
}
