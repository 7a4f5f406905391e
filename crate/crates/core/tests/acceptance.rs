//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::f64::consts::FRAC_PI_8;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ouda::cli::{compare_means, generate_drift_stream, run_experiment, DriftKind, DriftParams};
use ouda::gfk::{cumulative_transform, gfk_transform};
use ouda::grassmann::{
    exp_map, geodesic, geodesic_distance, log_map, random_subspace, random_tangent, Subspace,
};
use ouda::mean::{init_mean, karcher_mean, karcher_residual, KARCHER_MAX_ITER, KARCHER_TOL};
use ouda::pipeline::{
    average_accuracy, classify, init_pipeline, pca_subspace, train_source_classifier, PipelineConfig, Variant,
};
use ouda::predict::predict_next;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// A point at geodesic distance `radius·u`, `u ~ U(0, 1)`, from `base`.
fn near(rng: &mut ChaCha8Rng, base: &Subspace, radius: f64) -> Subspace {
    let r = radius * rng.random::<f64>();
    exp_map(base, &random_tangent(rng, base, r)).unwrap()
}

fn simpson_weights(nodes: usize) -> Vec<f64> {
    let h = 1.0 / (nodes - 1) as f64;
    (0..nodes)
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
        .collect()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

fn geodesic_endpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for (k, d) in [(1, 2), (3, 12), (5, 30), (10, 100)] {
        for _ in 0..200 {
            let p1 = random_subspace(&mut rng, d, k).unwrap();
            let p2 = random_subspace(&mut rng, d, k).unwrap();
            let flow = geodesic(&p1, &p2).unwrap();
            worst = worst
                .max(geodesic_distance(&flow.point(0.0), &p1).unwrap())
                .max(geodesic_distance(&flow.point(1.0), &p2).unwrap());
        }
    }
    outcome(worst < 1e-8, format!("max endpoint distance {worst:.2e} (< 1e-8)"))
}

fn icms_karcher_closeness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_dist, mut worst_ratio): (f64, f64) = (0.0, 0.0);
    for _ in 0..30 {
        let base = random_subspace(&mut rng, 30, 5).unwrap();
        let subs: Vec<Subspace> = (0..20).map(|_| near(&mut rng, &base, 0.3)).collect();
        let mut state = init_mean(subs[0].clone());
        for s in &subs[1..] {
            state = state.update(s).unwrap();
        }
        let icms = state.mean();
        let karcher = karcher_mean(&subs, KARCHER_TOL, KARCHER_MAX_ITER).unwrap();
        worst_dist = worst_dist.max(geodesic_distance(icms, &karcher.mean).unwrap());
        let spread: f64 = subs.iter().map(|s| log_map(icms, s).unwrap().norm()).sum();
        worst_ratio = worst_ratio.max(karcher_residual(icms, &subs).unwrap() / spread);
    }
    outcome(
        worst_dist <= 0.1 && worst_ratio <= 0.05,
        format!("max d(ICMS, Karcher) {worst_dist:.4} rad (<= 0.1), max residual ratio {worst_ratio:.4} (<= 0.05)"),
    )
}

/// `2∫₀¹ Ψ(t)Ψ(t)ᵀ dt` by composite Simpson over points of the geodesic.
fn flow_quadrature(ps: &Subspace, pt: &Subspace, nodes: usize) -> DMatrix<f64> {
    let flow = geodesic(ps, pt).unwrap();
    let d = ps.ambient_dim();
    let mut g = DMatrix::zeros(d, d);
    for (i, w) in simpson_weights(nodes).into_iter().enumerate() {
        let b = flow.point_basis(i as f64 / (nodes - 1) as f64);
        g += (&b * b.transpose()) * (2.0 * w);
    }
    g
}

fn gfk_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let ps = random_subspace(&mut rng, 15, 3).unwrap();
        let pt = random_subspace(&mut rng, 15, 3).unwrap();
        let closed = gfk_transform(&ps, &pt).unwrap();
        worst = worst.max(max_abs_diff(closed.matrix(), &flow_quadrature(&ps, &pt, 513)));
    }
    outcome(worst <= 1e-8, format!("max-abs closed form vs 513-node quadrature {worst:.2e} (<= 1e-8)"))
}

/// Principal angles (ascending), source principal vectors `a` and unit
/// directions `e` with `target·V = a·cos Θ + e·sin Θ`, from a plain SVD.
fn principal_frame(ps: &Subspace, pt: &Subspace) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let svd = (ps.basis().transpose() * pt.basis()).svd(true, true);
    let u = svd.u.unwrap();
    let v = svd.v_t.unwrap().transpose();
    // nalgebra returns singular values in descending order.
    let a = ps.basis() * &u;
    let y = pt.basis() * &v;
    let k = a.ncols();
    let mut theta = DVector::zeros(k);
    let mut e = DMatrix::zeros(a.nrows(), k);
    for i in 0..k {
        let c = svd.singular_values[i].min(1.0);
        let r = y.column(i) - a.column(i) * c;
        theta[i] = r.norm().atan2(c);
        let s = r.norm();
        e.set_column(i, &(r / s));
    }
    (theta, a, e)
}

/// Double Simpson over (t, β) of `2·Φ(t, β)Φ(t, β)ᵀ` with the angles moving
/// linearly from `theta0` to `theta1`; `exact` picks cos/sin over their
/// second-order expansions.
fn sweep_quadrature(
    theta0: &DVector<f64>,
    theta1: &DVector<f64>,
    a: &DMatrix<f64>,
    e: &DMatrix<f64>,
    nodes: usize,
    exact: bool,
) -> DMatrix<f64> {
    let d = a.nrows();
    let w = simpson_weights(nodes);
    let mut g = DMatrix::zeros(d, d);
    for (ib, wb) in w.iter().enumerate() {
        let beta = ib as f64 / (nodes - 1) as f64;
        for (it, wt) in w.iter().enumerate() {
            let t = it as f64 / (nodes - 1) as f64;
            for i in 0..a.ncols() {
                let x = t * ((1.0 - beta) * theta0[i] + beta * theta1[i]);
                let (cc, cs, ss) = if exact {
                    (x.cos().powi(2), x.cos() * x.sin(), x.sin().powi(2))
                } else {
                    (1.0 - x * x, x, x * x)
                };
                let (ai, ei) = (a.column(i), e.column(i));
                let ae = ai * ei.transpose();
                let block = ai * ai.transpose() * cc + (&ae + ae.transpose()) * cs + ei * ei.transpose() * ss;
                g += block * (2.0 * wb * wt);
            }
        }
    }
    g
}

fn cumulative_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst_small, mut worst_exact): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let ps = random_subspace(&mut rng, 12, 3).unwrap();
        let prev = near(&mut rng, &ps, 0.2);
        let cur = near(&mut rng, &ps, 0.2);
        let closed = cumulative_transform(&ps, &prev, &cur).unwrap();
        let (theta0, _, _) = principal_frame(&ps, &prev);
        let (theta1, a, e) = principal_frame(&ps, &cur);
        let small = sweep_quadrature(&theta0, &theta1, &a, &e, 65, false);
        let exact = sweep_quadrature(&theta0, &theta1, &a, &e, 65, true);
        worst_small = worst_small.max(max_abs_diff(closed.matrix(), &small));
        worst_exact = worst_exact.max((closed.matrix() - &exact).norm() / exact.norm());
    }
    outcome(
        worst_small <= 1e-8 && worst_exact <= 0.02,
        format!(
            "small-angle max-abs {worst_small:.2e} (<= 1e-8), exact relative Frobenius {worst_exact:.2e} (<= 0.02)"
        ),
    )
}

fn prediction_lock() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p1 = random_subspace(&mut rng, 20, 4).unwrap();
        let p2 = near(&mut rng, &p1, FRAC_PI_8);
        let predicted = predict_next(&p1, &p2).unwrap();
        let extrapolated = geodesic(&p1, &p2).unwrap().point(2.0);
        worst = worst.max(geodesic_distance(&predicted, &extrapolated).unwrap());
    }
    outcome(worst <= 1e-6, format!("max d(predict_next, t=2 point) {worst:.2e} (<= 1e-6)"))
}

fn convergence() -> Outcome {
    let params = DriftParams {
        seed: 606,
        kind: DriftKind::Stationary,
        drift_rate: 0.0,
        n_batches: 200,
        batch_size: 20,
        dim: 30,
        signal_rank: 5,
        ..DriftParams::default()
    };
    let (data, _) = generate_drift_stream(&params).unwrap();
    let cfg = PipelineConfig::new(5, 20);
    let report = run_experiment(&data, &serde_json::Value::Null, &cfg, Variant::Icms).unwrap();
    let h = &report.batches;
    assert_eq!(h.len(), 200);
    let avg = |from: usize, to: usize, f: &dyn Fn(usize) -> f64| {
        (from..=to).map(f).sum::<f64>() / (to - from + 1) as f64
    };
    let step = |n: usize| h[n - 1].mean_step;
    let early = avg(10, 30, &step);
    let late = avg(180, 200, &step);
    let dist = |n: usize| h[n - 1].source_distance;
    let level = avg(151, 200, &dist);
    let spread = (151..=200).map(|n| (dist(n) / level - 1.0).abs()).fold(0.0, f64::max);
    outcome(
        late <= early / 5.0 && spread < 0.05,
        format!(
            "mean step {early:.2e} -> {late:.2e} (ratio {:.3}, <= 0.2); final-quartile source distance {level:.4} varies {:.2}% (< 5%)",
            late / early,
            100.0 * spread
        ),
    )
}

fn adaptation_benefit() -> Outcome {
    let params = DriftParams {
        seed: 0,
        kind: DriftKind::NoisyRotation,
        drift_rate: 0.01,
        noise: 0.1,
        n_classes: 2,
        dim: 30,
        n_batches: 150,
        batch_size: 20,
        offset: 16.0,
        ..DriftParams::default()
    };
    let (data, _) = generate_drift_stream(&params).unwrap();
    let cfg = PipelineConfig::new(5, 20);
    let acc = |v: Variant| {
        run_experiment(&data, &serde_json::Value::Null, &cfg, v)
            .unwrap()
            .summary
            .average_accuracy
            .unwrap()
    };
    let source_only = acc(Variant::SourceOnly);
    let fb_pred = acc(Variant::IcmsFbPred);
    let icms = acc(Variant::Icms);
    let pred = acc(Variant::IcmsPred);
    let gain = 100.0 * (fb_pred - source_only);
    outcome(
        gain >= 10.0 && pred > icms,
        format!(
            "icms-fb-pred {:.2}% vs source-only {:.2}% (+{gain:.2} pp, >= 10); icms-pred {:.2}% vs icms {:.2}% (must be higher)",
            100.0 * fb_pred,
            100.0 * source_only,
            100.0 * pred,
            100.0 * icms
        ),
    )
}

fn speed_hierarchy() -> Outcome {
    let params = DriftParams {
        seed: 808,
        kind: DriftKind::Rotation,
        dim: 512,
        signal_rank: 100,
        n_batches: 100,
        batch_size: 128,
        source_size: 1000,
        ..DriftParams::default()
    };
    let (data, _) = generate_drift_stream(&params).unwrap();
    let cfg = PipelineConfig::new(100, 128);
    let table = compare_means(&data, &serde_json::Value::Null, &cfg).unwrap();
    let icms = table.row(Variant::Icms).unwrap();
    let karcher = table.row(Variant::Karcher).unwrap();
    let per_batch_ms = 1e3 * icms.mean_update_seconds / 100.0;
    let ratio = karcher.total_seconds / icms.total_seconds;
    outcome(
        per_batch_ms <= 100.0 && ratio >= 10.0,
        format!(
            "ICMS update {per_batch_ms:.1} ms/batch (<= 100); Karcher {:.1} s vs ICMS {:.1} s total ({ratio:.1}x, >= 10x)",
            karcher.total_seconds, icms.total_seconds
        ),
    )
}

fn variant_reduction() -> Outcome {
    let params = DriftParams {
        seed: 909,
        kind: DriftKind::Rotation,
        drift_rate: 0.05,
        n_batches: 5,
        batch_size: 20,
        ..DriftParams::default()
    };
    let (data, _) = generate_drift_stream(&params).unwrap();
    let k = 5;
    let mut cfg = PipelineConfig::new(k, 20).with_variant(Variant::Icms);
    cfg.adaptive_classifier = false;
    let mut state = init_pipeline(&data.source_x, &data.source_y, cfg.clone()).unwrap();

    // Reference: PCA, ICMS, plain GFK, classify; nothing else.
    let ps = pca_subspace(&data.source_x, k).unwrap();
    let clf = train_source_classifier(&data.source_x, &data.source_y, cfg.classifier_kind, cfg.linear_epochs, cfg.seed)
        .unwrap();
    let mut mean = None;
    let mut worst: f64 = (ps.projector() - state.source_subspace().projector()).amax();
    let mut labels_agree = true;
    for batch in data.batches(20) {
        let p = pca_subspace(&batch.features, k).unwrap();
        let next = match &mean {
            None => init_mean(p),
            Some(m) => ouda::mean::icms_update(m, &p).unwrap(),
        };
        let g = gfk_transform(&ps, next.mean()).unwrap();
        let labels = classify(&clf.mapped(&[g.matrix()]), &(&batch.features * g.matrix())).unwrap();

        let out = state.process_batch(&batch).unwrap();
        let got = state.mean_state().unwrap();
        worst = worst
            .max((got.mean().projector() - next.mean().projector()).amax())
            .max((state.feedback_transform().matrix() - g.matrix()).amax())
            .max((state.classifier().centroids() - clf.centroids()).amax())
            .max((out.record.source_distance - geodesic_distance(&ps, next.mean()).unwrap()).abs());
        labels_agree &= out.labels == labels && got.count() == next.count();
        mean = Some(next);
    }
    outcome(
        worst <= 1e-10 && labels_agree,
        format!("max state deviation {worst:.2e} (<= 1e-10); labels identical: {labels_agree}"),
    )
}

fn metric_arithmetic() -> Outcome {
    let exact = average_accuracy(&[0.5, 1.0, 0.75]).unwrap() == 0.75;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let values: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
    // Neumaier summation.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in &values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    let oracle = (sum + comp) / values.len() as f64;
    let err = (average_accuracy(&values).unwrap() - oracle).abs();
    outcome(
        exact && err <= 1e-12,
        format!("{{0.5, 1.0, 0.75}} -> 0.75 exactly: {exact}; 1000 values off by {err:.2e} (<= 1e-12)"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<f64>); 10] = [
        ("geodesic endpoints", geodesic_endpoints, Some(5.0)),
        ("ICMS-Karcher closeness", icms_karcher_closeness, Some(30.0)),
        ("GFK oracle equivalence", gfk_oracle, Some(10.0)),
        ("cumulative-transform oracle", cumulative_oracle, Some(10.0)),
        ("prediction lock", prediction_lock, Some(5.0)),
        ("convergence behavior", convergence, Some(60.0)),
        ("adaptation benefit", adaptation_benefit, Some(60.0)),
        ("speed hierarchy", speed_hierarchy, None),
        ("variant-reduction trace", variant_reduction, None),
        ("metric arithmetic", metric_arithmetic, None),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        let in_time = budget.is_none_or(|b| secs < b);
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        let limit = budget.map_or(String::new(), |b| format!(", limit {b:.0} s"));
        println!(
            "{} criterion {:>2} {name}: {} [{secs:.2} s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
