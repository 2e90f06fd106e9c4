use collisionless::boundary::{oscillation_predicate, ReflectionLaw};
use collisionless::geometry::*;
mod common;

use proptest::prelude::*;

fn domains() -> Vec<Domain> {
    vec![
        Domain::unit_disk(),
        Domain::new(DomainKind::Ellipse { a: 1.5, b: 0.7 }).unwrap(),
        Domain::new(DomainKind::Annulus { inner: 0.35, outer: 1.0 }).unwrap(),
    ]
}

/// Exit point of the ray from an interior point, with a direction leaving there.
fn boundary_config(d: &Domain, x0: Vector, omega: Vector) -> Option<(Vector, Vector)> {
    if !d.contains(x0) {
        return None;
    }
    let t = d.exit_time(x0, omega, Direction::Forward).ok()?;
    let x = project_to_boundary(d, x0 + omega * t).ok()?;
    let n = d.normal(x).ok()?;
    let back = d.exit_time(x, omega, Direction::Backward).ok()?;
    let nf = d.normal(x - omega * back).ok()?;
    (omega.dot(&n) > 0.2 && omega.dot(&nf) < -0.2).then_some((x, n))
}

fn tangent(n: Vector) -> Vector {
    Vector::new2(-n.y(), n.x())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rank_one_matches_dense_determinant(
        d in 2usize..=5,
        c in -3.0f64..3.0,
        a in prop::collection::vec(-2.0f64..2.0, 5),
        u in prop::collection::vec(-2.0f64..2.0, 5),
    ) {
        let (a, u) = (&a[..d], &u[..d]);
        let dense = common::exact_dense_det(c, a, u);
        let closed = det_rank_one_update(c, a, u);
        prop_assert!((dense - closed).abs() <= 1e-12 * dense.abs());
    }

    #[test]
    fn exit_times_land_on_the_boundary(k in 0usize..3, px in -1.5f64..1.5, py in -1.0f64..1.0, th in 0.0f64..std::f64::consts::TAU, s in 0.1f64..5.0) {
        let d = &domains()[k];
        let x = Vector::new2(px, py);
        prop_assume!(d.contains(x));
        let v = Vector::polar(th) * s;
        let t = d.exit_time(x, v, Direction::Forward).unwrap();
        let b = d.exit_time(x, v, Direction::Backward).unwrap();
        prop_assert!(t > 0.0 && b > 0.0);
        prop_assert!(d.distance_to_boundary(x + v * t) <= 1e-9);
        prop_assert!(d.distance_to_boundary(x - v * b) <= 1e-9);
        // the chord is reversible
        let mid = x + v * (0.5 * t);
        let back = d.exit_time(mid, v, Direction::Backward).unwrap();
        prop_assert!((back - b - 0.5 * t).abs() <= 1e-9 * (1.0 + back));
    }

    #[test]
    fn gradients_match_finite_differences(k in 0usize..3, px in -1.4f64..1.4, py in -0.9f64..0.9, th in 0.0f64..std::f64::consts::TAU) {
        let d = &domains()[k];
        let omega = Vector::polar(th);
        let cfg = boundary_config(d, Vector::new2(px, py), omega);
        prop_assume!(cfg.is_some());
        let (x, n) = cfg.unwrap();
        let h = tangent(n);
        let gx = grad_tau_x(d, x, omega, h).unwrap();
        let fx = fd_grad_tau_x(d, x, omega, h, 1e-5).unwrap();
        prop_assert!((gx - fx).abs() <= 1e-5 * (1.0 + gx.abs()), "{gx} vs {fx}");
        let ho = tangent(omega);
        let go = grad_tau_omega(d, x, omega, ho).unwrap();
        let fo = fd_grad_tau_omega(d, x, omega, ho, 1e-5).unwrap();
        prop_assert!((go - fo).abs() <= 1e-5 * (1.0 + go.abs()), "{go} vs {fo}");
    }

    #[test]
    fn reflections_preserve_speed_and_turn_inward(th in 0.0f64..std::f64::consts::TAU, phi in -1.5f64..1.5, s in 0.01f64..10.0) {
        let d = Domain::new(DomainKind::Ellipse { a: 1.5, b: 0.7 }).unwrap();
        let x = project_to_boundary(&d, Vector::new2(1.5 * th.cos(), 0.7 * th.sin())).unwrap();
        let n = d.normal(x).unwrap();
        let v = (n * phi.cos() + tangent(n) * phi.sin()) * s;
        for law in [ReflectionLaw::Specular, ReflectionLaw::BounceBack] {
            let w = law.reflect(&d, x, v).unwrap();
            prop_assert!((w.norm() - s).abs() <= 1e-12 * s);
            prop_assert!(w.dot(&n) < 0.0);
        }
    }

    #[test]
    fn oscillation_predicate_is_the_bound_test(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let r = oscillation_predicate(&[a, b]);
        prop_assert_eq!(r.predicate, r.bound < 1.0);
    }
}

#[test]
fn degenerate_directions_are_small() {
    for eps in [0.05, 0.1, 0.2] {
        let e = degenerate_direction_measure(3, eps, 100_000, 17);
        assert!(e.estimate <= eps * std::f64::consts::PI + 3.0 * e.std_error);
        assert_eq!(degenerate_direction_measure(2, eps, 10_000, 17).estimate, 0.0);
    }
}

#[test]
fn exact_oracle_hand_cases() {
    assert_eq!(common::exact_dense_det(2.0, &[1.0, 0.0], &[0.0, 1.0]), 4.0);
    assert_eq!(common::exact_dense_det(0.0, &[1.0, 2.0], &[3.0, 4.0]), 0.0);
    // zero leading pivot: det [[0, 2], [1, 1]] = -2
    assert_eq!(common::exact_dense_det(-1.0, &[1.0, 1.0], &[1.0, 2.0]), -2.0);
    assert_eq!(common::exact_dense_det(0.5, &[0.25, 0.0, 0.0], &[1.0, 0.0, 0.0]), 0.1875);
}
