mod common;

use std::f64::consts::PI;

use common::*;
use geomind::cognition::softmax;
use geomind::mind::{learn_update, select_by_scores, token_components, GridSpec};
use geomind::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_field() -> impl Strategy<Value = TokenField> {
    (any::<u64>(), 1usize..6, 0.5f64..2.0, 0.05f64..1.0)
        .prop_map(|(seed, n, h, eps)| random_field(seed, n, 2, h, eps))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_is_symmetric_positive_definite(field in small_field(), x in prop::array::uniform2(-4.0f64..4.0)) {
        let g = metric_at(&MetricSource::conformal(field), &x).unwrap();
        prop_assert!(g.is_symmetric());
        prop_assert!(g.min_eigenvalue() > 0.0);
    }

    #[test]
    fn christoffels_are_lower_symmetric(field in small_field(), x in prop::array::uniform2(-3.0f64..3.0)) {
        let src = MetricSource::conformal(field);
        prop_assert!(christoffel_at(&src, &x).unwrap().lower_asymmetry() <= 1e-9);
        prop_assert!(christoffel_numeric(&src, &x).unwrap().lower_asymmetry() <= 1e-9);
    }

    #[test]
    fn closed_form_matches_finite_differences(field in small_field(), x in prop::array::uniform2(-3.0f64..3.0)) {
        let src = MetricSource::conformal(field);
        let a = christoffel_at(&src, &x).unwrap();
        let b = christoffel_numeric(&src, &x).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((p - q).abs() <= 1e-4, "{p} vs {q}");
        }
    }

    #[test]
    fn sphere_scalar_curvature(theta in 0.2f64..(PI - 0.2), phi in -PI..PI, r in 0.5f64..3.0) {
        let c = curvature_at(&MetricSource::sphere(r), &[theta, phi]).unwrap();
        prop_assert!((c.scalar - 2.0 / (r * r)).abs() <= 1e-3, "{}", c.scalar);
    }

    #[test]
    fn weight_increase_raises_density_and_lowers_lambda(field in small_field(), pick in any::<prop::sample::Index>(), factor in 1.01f64..10.0) {
        let t = &field.tokens()[pick.index(field.len())];
        let heavier = manipulate_feature(&field, &[t.id], factor).unwrap();
        prop_assert!(density_at(&heavier, &t.mean).unwrap() > density_at(&field, &t.mean).unwrap());
        prop_assert!(geomind::manifold::conformal_factor(&heavier, &t.mean).unwrap()
            < geomind::manifold::conformal_factor(&field, &t.mean).unwrap());
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(logits in prop::collection::vec(-50.0f64..50.0, 1..20), shift in -100.0f64..100.0) {
        let w = softmax(&logits);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        for (a, b) in w.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn selection_is_invariant_under_increasing_maps(scores in prop::collection::vec(-10.0f64..0.0, 1..8), theta in -10.0f64..0.0, a in 0.1f64..5.0, b in -5.0f64..5.0) {
        let base = select_by_scores(&scores, theta);
        let map = |s: f64| a * s.exp() + b;
        let mapped: Vec<f64> = scores.iter().map(|s| map(*s)).collect();
        prop_assert_eq!(select_by_scores(&mapped, map(theta)).winner, base.winner);
    }

    #[test]
    fn feature_scale_then_inverse_restores_weights(field in small_field(), s in 0.01f64..100.0) {
        let ids: Vec<u64> = field.tokens().iter().map(|t| t.id).filter(|id| id % 2 == 0).collect();
        let back = manipulate_feature(&manipulate_feature(&field, &ids, s).unwrap(), &ids, 1.0 / s).unwrap();
        for (a, b) in field.tokens().iter().zip(back.tokens()) {
            prop_assert!((a.weight - b.weight).abs() <= 1e-12);
        }
    }

    #[test]
    fn components_never_split_as_threshold_drops(field in small_field(), hi in 1e-6f64..1.0, frac in 0.0f64..1.0) {
        let lo = hi * frac;
        let at_hi = token_components(&field, hi).unwrap().len();
        let at_lo = token_components(&field, lo).unwrap().len();
        prop_assert!(at_lo <= at_hi);
        let grid = |rho| GridSpec { points_per_axis: 3, rho_min: Some(rho), ..GridSpec::default() };
        let src = MetricSource::conformal(field.clone());
        prop_assert!(analyze_field(&field, &src, &grid(lo)).unwrap().components.len()
            <= analyze_field(&field, &src, &grid(hi)).unwrap().components.len());
    }

    #[test]
    fn components_match_brute_force(field in small_field(), rho in 1e-4f64..0.5) {
        prop_assert_eq!(token_components(&field, rho).unwrap().len(), brute_components(&field, rho));
    }

    #[test]
    fn learn_update_keeps_ids(field in small_field(), p in prop::array::uniform2(-3.0f64..3.0), eta in 0.0f64..=1.0) {
        let next = learn_update(&field, &p, eta).unwrap();
        let ids = |f: &TokenField| f.tokens().iter().map(|t| t.id).collect::<Vec<_>>();
        prop_assert_eq!(ids(&next), ids(&field));
    }

    #[test]
    fn geometric_prediction_reproduces_recorded_front(v in prop::array::uniform2(-1.0f64..1.0), k in 1usize..10) {
        let dt = 0.01;
        let src = MetricSource::sphere(1.0);
        let start = GeodesicState::new(vec![1.2, 0.3], v.to_vec());
        let traj = integrate_geodesic(&start, &src, &ZeroForcing, 0.5, dt).unwrap();
        let window = k as f64 * dt;
        let pred = predict_geometric(&traj, window).unwrap();
        let front = &traj.last().unwrap().position;
        let steps = (window / dt).round();
        for (p, f) in pred.iter().zip(front) {
            prop_assert!((p - f).abs() <= steps * dt * dt, "{p} vs {f}");
        }
    }
}

#[test]
fn unforced_metric_speed_is_conserved() {
    let field = random_field(5, 5, 2, 1.0, 0.5);
    let cases = [
        (MetricSource::flat(), GeodesicState::new(vec![0.1, 0.2], vec![0.7, -0.3])),
        (MetricSource::sphere(1.0), GeodesicState::new(vec![1.0, 0.0], vec![0.3, 0.9])),
        (MetricSource::conformal(field), GeodesicState::new(vec![0.3, -0.2], vec![0.5, 0.4])),
    ];
    for (src, start) in cases {
        let traj = integrate_geodesic(&start, &src, &ZeroForcing, 1.0, 1e-3).unwrap();
        assert_eq!(traj.len(), 1001);
        let s0 = start.metric_speed(&src).unwrap();
        for s in &traj.samples {
            assert!((s.metric_speed(&src).unwrap() - s0).abs() <= 1e-4);
        }
    }
}

#[test]
fn rk4_error_shrinks_by_at_least_eight_per_halving() {
    let exact = great_circle_exact(1.0);
    let err = |dt: f64| {
        let t = integrate_geodesic(&great_circle_start(), &MetricSource::sphere(1.0), &ZeroForcing, 1.0, dt).unwrap();
        let p = &t.last().unwrap().position;
        ((p[0] - exact[0]).powi(2) + (p[1] - exact[1]).powi(2)).sqrt()
    };
    let errors: Vec<f64> = [0.2, 0.1, 0.05].into_iter().map(err).collect();
    for w in errors.windows(2) {
        assert!(w[0] / w[1] >= 8.0, "{errors:?}");
    }
}

#[test]
fn geodesics_are_locally_energy_minimal() {
    let field = random_field(11, 5, 2, 1.0, 0.5);
    let cases = [
        (MetricSource::flat(), vec![0.0, 0.0], vec![1.0, 0.5]),
        (MetricSource::sphere(1.0), vec![1.2, 0.1], vec![1.7, 0.9]),
        (MetricSource::conformal(field), vec![-0.5, -0.5], vec![0.8, 0.6]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (src, a, b) in cases {
        let traj = geodesic_between(&a, &b, &src, &ShootingOptions::default()).unwrap();
        let mut points: Vec<Vec<f64>> = traj.samples.iter().map(|s| s.position.clone()).collect();
        *points.last_mut().unwrap() = b.clone();
        let e0 = discrete_energy(&points, &src).unwrap();
        for _ in 0..20 {
            let e = discrete_energy(&perturb(&points, 0.05, &mut rng), &src).unwrap();
            assert!(e0 <= e, "geodesic energy {e0} exceeds perturbed {e}");
        }
    }
}

#[test]
fn flows_are_deterministic_over_a_thousand_steps() {
    let base = random_field(2, 5, 2, 1.0, 0.5);
    let noisy = base
        .tokens()
        .iter()
        .map(|t| t.clone().with_diagonal_covariance(&[0.05, 0.05]))
        .collect();
    let field = TokenField::new(2, 1.0, 0.5, noisy).unwrap();
    let src = MetricSource::conformal(field.clone());
    let mut params = CognitionParams::identity(2);
    params.input_blend = 0.3;
    params.kappa = 0.5;
    let inputs = InputSchedule::repeated(vec![0.5, -0.5], 1000);
    let flow = FlowConfig {
        start: vec![0.0, 0.0],
        velocity: vec![0.1, 0.0],
        steps: 1000,
        dt: 0.01,
    };
    let a = run_thought_flow(&field, &src, &params, &inputs, &flow, 9).unwrap();
    let b = run_thought_flow(&field, &src, &params, &inputs, &flow, 9).unwrap();
    assert_eq!(a, b);
    let c = run_thought_flow(&field, &src, &params, &inputs, &flow, 10).unwrap();
    assert_ne!(a.errors, c.errors);
}

#[test]
fn activations_label_the_nearest_token_at_every_sample() {
    let field = random_field(4, 5, 2, 1.0, 0.5);
    let src = MetricSource::conformal(field.clone());
    let flow = FlowConfig {
        start: vec![1.0, 1.0],
        velocity: vec![0.8, -0.6],
        steps: 300,
        dt: 0.01,
    };
    let out = run_thought_flow(&field, &src, &CognitionParams::identity(2), &InputSchedule::none(), &flow, 0).unwrap();
    let traj = &out.trajectory;
    assert_eq!(traj.activations.len(), traj.len());
    for (s, a) in traj.samples.iter().zip(&traj.activations) {
        assert_eq!(a.time, s.time);
        assert_eq!(a.token_id, brute_nearest(&field, &s.position));
    }
}

#[test]
fn first_two_cycles_apply_no_forcing() {
    let field = random_field(8, 4, 2, 1.0, 0.3);
    let src = MetricSource::conformal(field.clone());
    let mut params = CognitionParams::identity(2);
    params.input_blend = 0.9;
    params.kappa = 5.0;
    let mut state = MindState::new(GeodesicState::new(vec![0.2, 0.1], vec![0.3, 0.0]), params, 1).unwrap();
    state.activate_nearest(&field).unwrap();
    for _ in 0..2 {
        let expected = geodesic_step(&state.front, &src, &ZeroForcing, 0.05).unwrap();
        state = cycle_step(state, &field, &src, Some(&[3.0, -3.0]), 0.05).unwrap();
        assert_eq!(state.front.position, expected.position);
        assert_eq!(state.front.velocity, expected.velocity);
    }
    let unforced = geodesic_step(&state.front, &src, &ZeroForcing, 0.05).unwrap();
    state = cycle_step(state, &field, &src, Some(&[3.0, -3.0]), 0.05).unwrap();
    assert_ne!(state.front.velocity, unforced.velocity);
}

#[test]
fn feature_weighting_bends_geodesic_toward_token() {
    let (field, a, b, id) = bend_setup();
    let v = field.token(id).unwrap().mean.clone();
    let heavy = manipulate_feature(&field, &[id], 10.0).unwrap();
    let lam = geomind::manifold::conformal_factor;
    assert!(lam(&heavy, &v).unwrap() < lam(&field, &v).unwrap());
    let dev = |f: &TokenField| {
        let t = geodesic_between(&a, &b, &MetricSource::conformal(f.clone()), &ShootingOptions::default()).unwrap();
        max_deviation_toward(&t, &a, &b, &v)
    };
    assert!(dev(&heavy) > dev(&field) + 1e-3);
}

#[test]
fn shooting_cannot_cross_a_wide_low_density_gap_quickly() {
    let src = MetricSource::conformal(two_clusters(100.0, 1.0, 0.01));
    let opts = ShootingOptions {
        max_iters: 3,
        ..ShootingOptions::default()
    };
    let err = geodesic_between(&[0.0, 0.0], &[100.0, 0.0], &src, &opts).unwrap_err();
    assert!(matches!(err, GeoError::NoGeodesic { iterations: 3, .. }), "{err:?}");
}
