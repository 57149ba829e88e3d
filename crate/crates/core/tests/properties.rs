//! Randomized invariant checks across the library: kernel positivity,
//! interpolation and projection identities, power-function laws, greedy
//! center structure, predictor arithmetic, and controller freezing.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;
use vrkhs::{
    build_subspace, curse_comparison, deadzone_eval, farthest_point_order, fill_distance,
    fit_order, interpolate, lyapunov_solve, power2, power_inf, predict_center_count, psd_check,
    restrict_then_extend_check, CenterSet, CenterSource, DeadzoneSpec, FitX, FitY, KernelField,
    Manifold, OperatorKernel, Point, RateMeta, RateRow, RateTable, ScalarKernel, Shape,
};

fn scalar_kernel(id: u8, lengthscale: f64) -> ScalarKernel {
    match id % 5 {
        0 => ScalarKernel::matern(0.5, lengthscale).unwrap(),
        1 => ScalarKernel::matern(1.5, lengthscale).unwrap(),
        2 => ScalarKernel::matern(2.5, lengthscale).unwrap(),
        3 => ScalarKernel::wendland(1.0, lengthscale).unwrap(),
        _ => ScalarKernel::gaussian(lengthscale).unwrap(),
    }
}

/// Admissible weight: identity plus a rank-one bump, always SPD.
fn operator_kernel(id: u8, lengthscale: f64, m: usize, bump: f64, dir: f64) -> OperatorKernel {
    let scalar = scalar_kernel(id, lengthscale);
    let v = DVector::from_fn(m, |i, _| (dir + i as f64).sin());
    // Scale the outer product, not v: entry (i, j) must equal entry (j, i)
    // bit for bit or the constructor's symmetry gate can reject it.
    let weight = DMatrix::identity(m, m) + (&v * v.transpose()) * bump;
    OperatorKernel::separable(scalar, weight).unwrap()
}

/// Thin a raw coordinate list to points no closer than `min_sep`.
fn separated_points(dim: usize, raw: &[[f64; 3]], min_sep: f64) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::new();
    for r in raw {
        let p = Point::from_fn(dim, |i, _| r[i]);
        if pts.iter().all(|q| (&p - q).norm() >= min_sep) {
            pts.push(p);
        }
    }
    pts
}

fn raw_points(count: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(
        [
            -1.5..1.5_f64,
            -1.5..1.5_f64,
            -1.5..1.5_f64,
        ],
        2..count,
    )
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        failure_persistence: Some(Box::new(FileFailurePersistence::WithSource(
            "proptest-regressions",
        ))),
        ..ProptestConfig::default()
    })]

    #[test]
    fn kernel_is_symmetric_and_of_positive_type(
        id in 0u8..5,
        lengthscale in 0.3..1.5_f64,
        m in 1usize..4,
        bump in 0.0..2.0_f64,
        dir in 0.0..3.0_f64,
        raw in raw_points(8),
        dir_seed in 0.0..10.0_f64,
        coeff_seed in -2.0..2.0_f64,
    ) {
        let kernel = operator_kernel(id, lengthscale, m, bump, dir);
        let pts = separated_points(3, &raw, 1e-2);
        prop_assume!(pts.len() >= 2);

        let a = kernel.eval(&pts[0], &pts[1]).unwrap();
        let b = kernel.eval(&pts[1], &pts[0]).unwrap();
        prop_assert_eq!(a.clone(), b.transpose());

        let directions: Vec<DVector<f64>> = (0..pts.len())
            .map(|i| DVector::from_fn(m, |j, _| (dir_seed + (i * m + j) as f64).cos()))
            .collect();
        let coeffs: Vec<f64> = (0..pts.len())
            .map(|i| coeff_seed + (i as f64 * 0.7).sin())
            .collect();
        let quad = psd_check(&kernel, &pts, &directions, &coeffs).unwrap();
        prop_assert!(quad >= -1e-10, "quadratic form {quad}");
    }

    #[test]
    fn grammian_blocks_equal_kernel_evaluations(
        id in 0u8..5,
        lengthscale in 0.3..1.5_f64,
        m in 1usize..3,
        bump in 0.0..2.0_f64,
        raw in raw_points(6),
    ) {
        let kernel = operator_kernel(id, lengthscale, m, bump, 1.0);
        let pts = separated_points(3, &raw, 0.15);
        prop_assume!(pts.len() >= 2);
        let subspace = build_subspace(&kernel, &pts).unwrap();
        let g = subspace.grammian();
        for (i, pi) in pts.iter().enumerate() {
            for (j, pj) in pts.iter().enumerate() {
                let block = kernel.eval(pi, pj).unwrap();
                for a in 0..m {
                    for b in 0..m {
                        prop_assert_eq!(g[(i * m + a, j * m + b)], block[(a, b)]);
                    }
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_center_values(
        id in 0u8..5,
        lengthscale in 0.3..1.5_f64,
        m in 1usize..3,
        raw in raw_points(6),
        value_seed in -2.0..2.0_f64,
    ) {
        let kernel = operator_kernel(id, lengthscale, m, 0.5, 2.0);
        let pts = separated_points(3, &raw, 0.15);
        prop_assume!(pts.len() >= 2);
        let values: Vec<DVector<f64>> = (0..pts.len())
            .map(|i| DVector::from_fn(m, |j, _| value_seed * ((i + j) as f64 * 0.9).cos()))
            .collect();
        // A conditioning refusal is a legitimate outcome for adversarial
        // geometry, not a property violation.
        let Ok(function) = interpolate(&build_subspace(&kernel, &pts).unwrap(), &values)
        else { return Ok(()); };
        let scale = 1.0 + values.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
        for (p, v) in pts.iter().zip(&values) {
            let err = (function.eval(p).unwrap() - v).norm();
            prop_assert!(err <= 1e-6 * scale, "residual {err}");
        }
    }

    #[test]
    fn projection_is_idempotent(
        id in 0u8..5,
        lengthscale in 0.3..1.5_f64,
        m in 1usize..3,
        raw in raw_points(6),
        value_seed in -2.0..2.0_f64,
    ) {
        let kernel = operator_kernel(id, lengthscale, m, 0.5, 2.0);
        let pts = separated_points(3, &raw, 0.15);
        prop_assume!(pts.len() >= 2);
        let subspace = build_subspace(&kernel, &pts).unwrap();
        let values: Vec<DVector<f64>> = (0..pts.len())
            .map(|i| DVector::from_fn(m, |j, _| value_seed * ((2 * i + j) as f64 * 0.6).sin()))
            .collect();
        let Ok(once) = interpolate(&subspace, &values) else { return Ok(()); };
        let revalues: Vec<DVector<f64>> =
            pts.iter().map(|p| once.eval(p).unwrap()).collect();
        let twice = interpolate(&subspace, &revalues).unwrap();
        let scale = 1.0
            + once
                .coefficients()
                .iter()
                .map(|c| c.norm())
                .fold(0.0_f64, f64::max);
        for (c1, c2) in once.coefficients().iter().zip(twice.coefficients()) {
            prop_assert!((c1 - c2).norm() <= 1e-8 * scale);
        }
    }

    #[test]
    fn power_vanishes_at_centers_and_respects_diagonal_bound(
        id in 0u8..5,
        lengthscale in 0.3..1.5_f64,
        m in 1usize..3,
        bump in 0.0..2.0_f64,
        raw in raw_points(6),
        probe in [-1.5..1.5_f64, -1.5..1.5_f64, -1.5..1.5_f64],
    ) {
        let kernel = operator_kernel(id, lengthscale, m, bump, 0.5);
        let pts = separated_points(3, &raw, 0.15);
        prop_assume!(pts.len() >= 2);
        let subspace = build_subspace(&kernel, &pts).unwrap();
        for p in &pts {
            prop_assert!(power2(&subspace, p).unwrap() <= 1e-6);
            prop_assert!(power_inf(&subspace, p).unwrap() <= 1e-6);
        }
        let x = Point::from_column_slice(&probe);
        let p2 = power2(&subspace, &x).unwrap();
        let k_bar = kernel.diagonal_bound();
        prop_assert!(p2 >= 0.0);
        prop_assert!(p2 <= k_bar * (1.0 + 1e-12), "power {p2} above k_bar {k_bar}");
    }

    #[test]
    fn power_is_monotone_under_center_refinement(
        id in 0u8..5,
        lengthscale in 0.3..1.5_f64,
        raw in raw_points(8),
        probe in [-1.5..1.5_f64, -1.5..1.5_f64, -1.5..1.5_f64],
        keep in 2usize..5,
    ) {
        let kernel = operator_kernel(id, lengthscale, 2, 1.0, 1.5);
        let pts = separated_points(3, &raw, 0.15);
        prop_assume!(pts.len() >= 3);
        let keep = keep.min(pts.len() - 1);
        let coarse = build_subspace(&kernel, &pts[..keep]).unwrap();
        let fine = build_subspace(&kernel, &pts).unwrap();
        let x = Point::from_column_slice(&probe);
        let p_coarse = power2(&coarse, &x).unwrap();
        let p_fine = power2(&fine, &x).unwrap();
        prop_assert!(
            p_fine <= p_coarse + 1e-10,
            "refinement raised the power: {p_coarse} -> {p_fine}"
        );
    }

    #[test]
    fn pointwise_error_bound_dominates_actual_error(
        id in 0u8..5,
        lengthscale in 0.4..1.2_f64,
        raw in raw_points(6),
        node_raw in raw_points(4),
        coeff_seed in -1.5..1.5_f64,
        probe in [-1.5..1.5_f64, -1.5..1.5_f64, -1.5..1.5_f64],
    ) {
        let m = 2;
        let kernel = operator_kernel(id, lengthscale, m, 0.8, 0.7);
        let pts = separated_points(3, &raw, 0.2);
        let nodes = separated_points(3, &node_raw, 0.2);
        prop_assume!(pts.len() >= 2 && nodes.len() >= 2);

        let blocks: Vec<DVector<f64>> = (0..nodes.len())
            .map(|i| DVector::from_fn(m, |j, _| coeff_seed * ((i * 2 + j) as f64).cos()))
            .collect();
        let field = KernelField::new(kernel.clone(), nodes.clone(), blocks.clone()).unwrap();
        let subspace = build_subspace(&kernel, &pts).unwrap();
        let Ok(projection) = vrkhs::project_field(&subspace, &field) else { return Ok(()); };

        // <sum K_p a, sum K_q b> expands through kernel evaluations.
        let pair = |ps: &[Point], a: &[DVector<f64>], qs: &[Point], b: &[DVector<f64>]| {
            let mut acc = 0.0;
            for (p, ca) in ps.iter().zip(a) {
                for (q, cb) in qs.iter().zip(b) {
                    acc += (ca.transpose() * kernel.eval(p, q).unwrap() * cb)[(0, 0)];
                }
            }
            acc
        };
        let proj_coeffs = projection.coefficients().to_vec();
        let gg = pair(&nodes, &blocks, &nodes, &blocks);
        let gp = pair(&nodes, &blocks, &pts, &proj_coeffs);
        let pp = pair(&pts, &proj_coeffs, &pts, &proj_coeffs);
        let deficit_norm = (gg - 2.0 * gp + pp).max(0.0).sqrt();

        let x = Point::from_column_slice(&probe);
        let actual = (field.eval(&x).unwrap() - projection.eval(&x).unwrap()).norm();
        let bound = vrkhs::pointwise_error_bound(power2(&subspace, &x).unwrap(), deficit_norm);
        prop_assert!(
            actual <= bound + 1e-8,
            "error {actual} above bound {bound}"
        );
    }

    #[test]
    fn greedy_orders_are_nested_prefixes(
        raw in raw_points(12),
        k in 2usize..6,
    ) {
        let pts = separated_points(2, &raw, 1e-3);
        prop_assume!(pts.len() >= 4);
        let k = k.min(pts.len() - 1);
        let long = farthest_point_order(&pts, pts.len()).unwrap();
        let short = farthest_point_order(&pts, k).unwrap();
        prop_assert_eq!(&long[..k], &short[..]);
    }

    #[test]
    fn fill_distance_never_grows_under_more_centers(
        raw in raw_points(10),
    ) {
        let pts = separated_points(2, &raw, 1e-3);
        prop_assume!(pts.len() >= 3);
        let all = pts.clone();
        let some = CenterSet::new(pts[..pts.len() - 1].to_vec(), CenterSource::Cube).unwrap();
        let more = CenterSet::new(pts, CenterSource::Cube).unwrap();
        let h_some = fill_distance(&some, &all).unwrap();
        let h_more = fill_distance(&more, &all).unwrap();
        prop_assert!(h_more <= h_some + 1e-15);
    }

    #[test]
    fn charts_land_on_their_shapes(
        u in 0.0..1.0_f64,
        v in 0.0..1.0_f64,
        radius in 0.5..2.0_f64,
        minor in 0.1..0.4_f64,
    ) {
        let circle = Manifold::new(Shape::Circle { radius }, 2, 16).unwrap();
        let p = circle.chart(&[u]).unwrap();
        prop_assert!((p.norm() - radius).abs() <= 1e-12);

        let sphere = Manifold::new(Shape::Sphere { radius }, 3, 16).unwrap();
        let p = sphere.chart(&[u, v]).unwrap();
        prop_assert!((p.norm() - radius).abs() <= 1e-12);

        let torus = Manifold::new(
            Shape::Torus { major_radius: radius, minor_radius: minor },
            3,
            16,
        )
        .unwrap();
        let p = torus.chart(&[u, v]).unwrap();
        let ring = (p[0] * p[0] + p[1] * p[1]).sqrt() - radius;
        let tube = (ring * ring + p[2] * p[2]).sqrt();
        prop_assert!((tube - minor).abs() <= 1e-12);
    }

    #[test]
    fn center_count_predictor_is_anchored_and_monotone(
        eps0 in 0.05..1.0_f64,
        n0 in 1.0..100.0_f64,
        shrink in 0.01..1.0_f64,
        ell in 1usize..4,
        s_bar in 0.6..4.0_f64,
    ) {
        let anchored = predict_center_count(eps0, ell, s_bar, (eps0, n0)).unwrap();
        prop_assert!((anchored - n0).abs() <= 1e-12 * n0);

        let eps = eps0 * shrink;
        let n_eps = predict_center_count(eps, ell, s_bar, (eps0, n0)).unwrap();
        prop_assert!(n_eps >= anchored * (1.0 - 1e-12));

        let tighter = predict_center_count(eps * 0.5, ell, s_bar, (eps0, n0)).unwrap();
        prop_assert!(tighter >= n_eps);
    }

    #[test]
    fn curse_ratio_nondecreasing_in_ambient_dimension(
        eps in 0.005..0.2_f64,
        s in 1.0..4.0_f64,
        s_bar in 0.5..3.0_f64,
        ell in 1usize..3,
    ) {
        prop_assume!(s_bar <= s);
        let rows = curse_comparison(eps, s, ell, s_bar, &[ell, ell + 2, ell + 5], (1.0, 1.0))
            .unwrap();
        prop_assert!((rows[0].manifold_centers - rows[2].manifold_centers).abs() == 0.0);
        for w in rows.windows(2) {
            prop_assert!(w[1].ratio >= w[0].ratio * (1.0 - 1e-12));
        }
    }

    #[test]
    fn order_fit_recovers_planted_power_laws(
        slope in 0.5..6.0_f64,
        log_scale in -3.0..3.0_f64,
    ) {
        let scale = 10.0_f64.powf(log_scale);
        let hs = [0.4, 0.2, 0.1, 0.05, 0.025];
        let rows: Vec<RateRow> = hs
            .iter()
            .enumerate()
            .map(|(i, &h)| RateRow {
                n_centers: 10 * (1 << i),
                fill: h,
                sup_err: scale * h.powf(slope),
                sup_power: h.powf(slope * 0.8),
            })
            .collect();
        prop_assume!(rows.iter().all(|r| r.sup_err >= 1e-9));
        let table = RateTable::new(
            rows,
            RateMeta {
                kernel_desc: "planted".into(),
                manifold_desc: "planted".into(),
                target_id: "planted".into(),
                decay_order: None,
                reduced_order: None,
                intrinsic_dim: 1,
                ambient_dim: 2,
            },
        )
        .unwrap();
        let (fit, r2) = fit_order(&table, FitX::Fill, FitY::SupErr).unwrap();
        prop_assert!((fit - slope).abs() <= 1e-9, "fit {fit} vs planted {slope}");
        prop_assert!(r2 >= 1.0 - 1e-9);
    }

    #[test]
    fn deadzone_is_flat_inside_and_quadratic_outside(
        delta in 1e-6..10.0_f64,
        inside in 0.0..1.0_f64,
        excess in 0.0..3.0_f64,
    ) {
        let dz = DeadzoneSpec::new(delta).unwrap();
        let (s, sp) = deadzone_eval(&dz, delta * inside).unwrap();
        prop_assert_eq!(s, 0.0);
        prop_assert_eq!(sp, 0.0);

        let z = delta * (1.0 + excess);
        let (s, sp) = deadzone_eval(&dz, z).unwrap();
        prop_assert!(s >= 0.0 && sp >= 0.0);
        // sigma' = 2 sqrt(sigma) pins the C1 smoothing shape.
        prop_assert!((sp * sp - 4.0 * s).abs() <= 1e-12 * (1.0 + sp * sp));
        prop_assert!(deadzone_eval(&dz, -1e-9).is_err());
    }

    #[test]
    fn lyapunov_solve_returns_spd_solution(
        diag in 0.5..3.0_f64,
        skew in -2.0..2.0_f64,
        mix in -0.9..0.9_f64,
        q_scale in 0.1..10.0_f64,
        probe in [-1.0..1.0_f64, -1.0..1.0_f64, -1.0..1.0_f64],
    ) {
        // Symmetric part -diag*I + mix-coupling stays negative definite,
        // so the matrix is Hurwitz by construction.
        let a = DMatrix::from_row_slice(3, 3, &[
            -diag, skew, mix * 0.3,
            -skew, -diag, mix * 0.2,
            mix * 0.3, mix * 0.2, -diag - 1.0,
        ]);
        let q = DMatrix::identity(3, 3) * q_scale;
        let p = lyapunov_solve(&a, &q).unwrap();
        prop_assert_eq!(p.clone(), p.transpose());
        let x = DVector::from_column_slice(&probe);
        prop_assume!(x.norm() >= 1e-3);
        let quad = (x.transpose() * &p * &x)[(0, 0)];
        prop_assert!(quad > 0.0);
        let residual = (a.transpose() * &p + &p * &a + &q).norm();
        prop_assert!(residual <= 1e-10 * q.norm());
    }

    #[test]
    fn restriction_extension_identities_hold_on_circle(
        us in prop::collection::vec(0.0..1.0_f64, 3..7),
        coeff_seed in -1.5..1.5_f64,
        lengthscale in 0.4..1.2_f64,
    ) {
        let kernel = operator_kernel(2, lengthscale, 2, 0.6, 0.4);
        let manifold = Manifold::new(Shape::Circle { radius: 1.0 }, 2, 64).unwrap();
        let mut centers: Vec<Point> = Vec::new();
        for &u in &us {
            let p = manifold.chart(&[u]).unwrap();
            if centers.iter().all(|q: &Point| (q - &p).norm() >= 0.05) {
                centers.push(p);
            }
        }
        prop_assume!(centers.len() >= 2);
        let coeffs: Vec<DVector<f64>> = (0..centers.len())
            .map(|i| DVector::from_fn(2, |j, _| coeff_seed * ((i + j) as f64 * 1.3).sin()))
            .collect();
        let test_points: Vec<Point> = (0..8)
            .map(|i| manifold.chart(&[i as f64 / 8.0]).unwrap())
            .collect();
        let check = restrict_then_extend_check(
            &kernel, &manifold, &centers, &coeffs, &test_points, 1e-8,
        )
        .unwrap();
        prop_assert_eq!(check.grammian_max_abs_diff, 0.0);
        prop_assert!(check.value_max_deviation <= 1e-8);
        prop_assert!(check.norm_deviation <= 1e-8);
    }

    #[test]
    fn float_display_round_trips_exactly(
        x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
    ) {
        let printed = format!("{x}");
        let back: f64 = printed.parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }
}
