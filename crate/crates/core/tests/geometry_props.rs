//! Property tests for the Möbius identities and metric axioms, plus the
//! change-of-variables oracle for the automorphism Jacobian.

use num_complex::Complex64;
use proptest::prelude::*;

use bergmanlab_core::basis::bergman_kernel;
use bergmanlab_core::geometry::*;
use bergmanlab_core::quadrature::{ball_rule, QuadScheme};

#[test]
fn jacobian_change_of_variables_oracle() {
    // int g(phi_z(w)) Jac_phi_z(w) dv(w) = int g dv for a test integrand
    let z = BallPoint::from_real(&[0.35, -0.2]).unwrap();
    let rule = ball_rule(
        2,
        &QuadScheme::Deterministic {
            radial_order: 40,
            angular_order: 48,
        },
    )
    .unwrap();
    let g = |w: &[Complex64]| w[0].norm_sqr() + 0.5 * (w[1].re + 1.5).ln();
    let direct = rule.integrate_real(g);
    let transported = rule.integrate_real(|w| {
        let wp = BallPoint::new(w.to_vec()).unwrap();
        let image = mobius_map(&z, &wp).unwrap();
        g(image.coords()) * mobius_jacobian(&z, &wp).unwrap()
    });
    let rel = (direct - transported).abs() / direct.abs();
    assert!(rel < 1e-6, "change of variables defect {rel}");
}

fn ball_point_strategy(n: usize, max_norm: f64) -> impl Strategy<Value = BallPoint> {
    let coord = -0.67f64..0.67f64;
    proptest::collection::vec((coord.clone(), coord), n).prop_filter_map(
        "inside the ball",
        move |coords| {
            let v: Vec<Complex64> = coords
                .iter()
                .map(|&(re, im)| Complex64::new(re, im))
                .collect();
            if norm_sq(&v).sqrt() <= max_norm {
                BallPoint::new(v).ok()
            } else {
                None
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn involution(a in ball_point_strategy(3, 0.95), w in ball_point_strategy(3, 0.95)) {
        let img = mobius_map(&a, &w).unwrap();
        let back = mobius_map(&a, &img).unwrap();
        for (x, y) in back.coords().iter().zip(w.coords()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn norm_identity(a in ball_point_strategy(3, 0.9), z in ball_point_strategy(3, 0.9)) {
        let img = mobius_map(&a, &z).unwrap();
        let lhs = 1.0 - img.norm_sq();
        let den = (Complex64::new(1.0, 0.0) - inner(z.coords(), a.coords())).norm_sqr();
        let rhs = (1.0 - a.norm_sq()) * (1.0 - z.norm_sq()) / den;
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn metric_axioms_and_invariance(
        a in ball_point_strategy(2, 0.9),
        z in ball_point_strategy(2, 0.9),
        w in ball_point_strategy(2, 0.9),
    ) {
        let rho_zw = pseudo_hyperbolic_distance(&z, &w).unwrap();
        let rho_wz = pseudo_hyperbolic_distance(&w, &z).unwrap();
        prop_assert!((rho_zw - rho_wz).abs() < 1e-12);
        prop_assert!((0.0..1.0).contains(&rho_zw));
        // rho = 0 iff the points coincide
        let same: f64 = z.coords().iter().zip(w.coords())
            .map(|(x, y)| (x - y).norm_sqr()).sum();
        if rho_zw < 1e-12 {
            prop_assert!(same.sqrt() < 1e-10);
        }
        let fz = mobius_map(&a, &z).unwrap();
        let fw = mobius_map(&a, &w).unwrap();
        let rho_inv = pseudo_hyperbolic_distance(&fz, &fw).unwrap();
        prop_assert!((rho_zw - rho_inv).abs() < 1e-11);
        let beta = hyperbolic_distance(&z, &w).unwrap();
        prop_assert!((beta.tanh() - rho_zw).abs() < 1e-12);
    }

    #[test]
    fn kernel_hermitian_symmetry(z in ball_point_strategy(2, 0.9), w in ball_point_strategy(2, 0.9)) {
        let kzw = bergman_kernel(&z, &w).unwrap();
        let kwz = bergman_kernel(&w, &z).unwrap();
        prop_assert!((kzw - kwz.conj()).norm() < 1e-12 * kzw.norm().max(1.0));
    }

    #[test]
    fn ellipsoid_agrees_with_metric(
        z in ball_point_strategy(2, 0.8),
        w in ball_point_strategy(2, 0.93),
    ) {
        let r = 0.9f64;
        let shape = hyperbolic_ball(&z, r).unwrap();
        let q = shape.quadratic_form(w.coords());
        prop_assume!((q - 1.0).abs() > 1e-9);
        let inside = hyperbolic_distance(&w, &z).unwrap() < r;
        prop_assert_eq!(q < 1.0, inside);
    }
}
