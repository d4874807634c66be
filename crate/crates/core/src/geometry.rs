//! Möbius geometry of the unit ball of C^n.
//!
//! The involutive automorphism `phi_a` exchanging 0 and `a`, the
//! pseudo-hyperbolic and hyperbolic metrics it induces, and the ellipsoid
//! description of hyperbolic balls together with their normalized volume.
//! All volumes are taken with respect to the normalized Lebesgue measure
//! `v_n` (the full ball has mass 1).

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Points closer to the sphere than this are rejected: every downstream
/// formula divides by `1 - |z|^2`.
pub const BOUNDARY_GUARD: f64 = 1e-14;

/// A point strictly inside the unit ball of C^n.
#[derive(Clone, Debug, PartialEq)]
pub struct BallPoint {
    coords: Vec<Complex64>,
}

/// Hermitian inner product `<a, b> = sum_i a_i conj(b_i)` (no length check).
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

impl BallPoint {
    pub fn new(coords: Vec<Complex64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("ball point needs n >= 1 coordinates"));
        }
        let n2 = norm_sq(&coords);
        if !n2.is_finite() || n2 >= 1.0 {
            return Err(Error::OutsideBall { norm: n2.sqrt() });
        }
        let norm = n2.sqrt();
        if norm >= 1.0 - BOUNDARY_GUARD {
            return Err(Error::BoundaryGuard {
                norm,
                guard: BOUNDARY_GUARD,
            });
        }
        Ok(Self { coords })
    }

    /// Point with real coordinates, convenient in tests and configs.
    pub fn from_real(coords: &[f64]) -> Result<Self> {
        Self::new(coords.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn origin(n: usize) -> Self {
        Self {
            coords: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.coords)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `<z, w>` with the dimension check.
    pub fn inner(&self, other: &BallPoint) -> Result<Complex64> {
        check_dims(self, other)?;
        Ok(inner(&self.coords, &other.coords))
    }
}

fn check_dims(a: &BallPoint, b: &BallPoint) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

fn mobius_map_coords(a: &BallPoint, w: &BallPoint) -> Result<Vec<Complex64>> {
    check_dims(a, w)?;
    let a_sq = a.norm_sq();
    let s = (1.0 - a_sq).sqrt();
    let denom = Complex64::new(1.0, 0.0) - inner(w.coords(), a.coords());
    // p = <w,a>/<a,a> scales a to give P_a(w); zero when a = 0.
    let p = if a_sq == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        inner(w.coords(), a.coords()) / a_sq
    };
    Ok(a.coords()
        .iter()
        .zip(w.coords())
        .map(|(&ai, &wi)| {
            let proj = p * ai;
            (ai - proj - s * (wi - proj)) / denom
        })
        .collect())
}

/// The automorphism `phi_a(w) = (a - P_a w - sqrt(1-|a|^2) Q_a w) / (1 - <w,a>)`.
///
/// `P_a` projects onto the complex line through `a` and `Q_a = I - P_a`;
/// for `a = 0` the convention `P_0 = 0`, `Q_0 = I` makes `phi_0 = -id`.
/// `phi_a` is an involution with `phi_a(0) = a`.
pub fn mobius_map(a: &BallPoint, w: &BallPoint) -> Result<BallPoint> {
    BallPoint::new(mobius_map_coords(a, w)?)
}

/// `rho(z, w) = |phi_z(w)|`, valued in [0, 1).
///
/// The image norm is taken without the ball guard; near 1 it switches to the
/// cancellation-free identity `1 - rho^2 = (1-|z|^2)(1-|w|^2)/|1-<w,z>|^2`.
pub fn pseudo_hyperbolic_distance(z: &BallPoint, w: &BallPoint) -> Result<f64> {
    let direct = norm_sq(&mobius_map_coords(z, w)?).sqrt();
    if direct < 0.99 {
        return Ok(direct);
    }
    let one_minus_sq = (1.0 - z.norm_sq()) * (1.0 - w.norm_sq())
        / (Complex64::new(1.0, 0.0) - inner(w.coords(), z.coords())).norm_sqr();
    Ok((1.0 - one_minus_sq).max(0.0).sqrt())
}

/// `beta(z, w) = atanh(rho(z, w)) = (1/2) log((1+rho)/(1-rho))`.
pub fn hyperbolic_distance(z: &BallPoint, w: &BallPoint) -> Result<f64> {
    let rho = pseudo_hyperbolic_distance(z, w)?;
    if rho >= 1.0 - 1e-15 {
        return Err(Error::MetricOverflow { rho });
    }
    Ok(rho.atanh())
}

/// Real Jacobian of `phi_z` at `w`: `(1-|z|^2)^(n+1) / |1-<w,z>|^(2(n+1))`.
pub fn mobius_jacobian(z: &BallPoint, w: &BallPoint) -> Result<f64> {
    check_dims(z, w)?;
    let n = z.dim() as i32;
    let denom = Complex64::new(1.0, 0.0) - inner(w.coords(), z.coords());
    Ok((1.0 - z.norm_sq()).powi(n + 1) / denom.norm_sqr().powi(n + 1))
}

/// The hyperbolic ball `D(z, r) = {w : beta(w, z) < r}` as an ellipsoid:
/// center `c = (1-s^2) z / (1-s^2 |z|^2)` with `s = tanh r`, radius `s*rho`
/// along `z` and `s*sqrt(rho)` in the perpendicular directions, where
/// `rho = (1-|z|^2)/(1-s^2 |z|^2)`.
#[derive(Clone, Debug)]
pub struct HyperbolicBallShape {
    center: Vec<Complex64>,
    /// Unit vector along `z`; `None` in the degenerate case `z = 0`.
    axis: Option<Vec<Complex64>>,
    radius_parallel: f64,
    radius_perp: f64,
}

impl HyperbolicBallShape {
    pub fn center(&self) -> &[Complex64] {
        &self.center
    }

    pub fn axis(&self) -> Option<&[Complex64]> {
        self.axis.as_deref()
    }

    pub fn radius_parallel(&self) -> f64 {
        self.radius_parallel
    }

    pub fn radius_perp(&self) -> f64 {
        self.radius_perp
    }

    /// Left-hand side of the defining inequality
    /// `|P w - c|^2 / r_par^2 + |Q w|^2 / r_perp^2  (< 1 inside)`.
    pub fn quadratic_form(&self, w: &[Complex64]) -> f64 {
        match &self.axis {
            Some(axis) => {
                let p = inner(w, axis);
                let c = inner(&self.center, axis);
                let par = (p - c).norm_sqr();
                let perp = norm_sq(w) - p.norm_sqr();
                par / (self.radius_parallel * self.radius_parallel)
                    + perp.max(0.0) / (self.radius_perp * self.radius_perp)
            }
            None => norm_sq(w) / (self.radius_parallel * self.radius_parallel),
        }
    }

    pub fn contains(&self, w: &BallPoint) -> bool {
        self.quadratic_form(w.coords()) < 1.0
    }
}

/// Ellipsoid description of `D(z, r)`.
pub fn hyperbolic_ball(z: &BallPoint, r: f64) -> Result<HyperbolicBallShape> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "hyperbolic ball radius must be positive, got {r}"
        )));
    }
    let s = r.tanh();
    let z_sq = z.norm_sq();
    let denom = 1.0 - s * s * z_sq;
    let rho = (1.0 - z_sq) / denom;
    if z_sq == 0.0 {
        return Ok(HyperbolicBallShape {
            center: vec![Complex64::new(0.0, 0.0); z.dim()],
            axis: None,
            radius_parallel: s,
            radius_perp: s,
        });
    }
    let scale = (1.0 - s * s) / denom;
    let center: Vec<Complex64> = z.coords().iter().map(|&zi| zi * scale).collect();
    let z_norm = z_sq.sqrt();
    let axis: Vec<Complex64> = z.coords().iter().map(|&zi| zi / z_norm).collect();
    Ok(HyperbolicBallShape {
        center,
        axis: Some(axis),
        radius_parallel: s * rho,
        radius_perp: s * rho.sqrt(),
    })
}

/// Normalized volume `v_n(D(z, r)) = s^(2n) rho^(n+1)`.
///
/// The constant is fixed to 1 by the `z = 0` case, where `D(0, r)` is the
/// round ball of radius `s = tanh r` and normalized volume `s^(2n)`.
pub fn hyperbolic_ball_volume(z: &BallPoint, r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "hyperbolic ball radius must be positive, got {r}"
        )));
    }
    let s = r.tanh();
    let n = z.dim() as i32;
    let rho = (1.0 - z.norm_sq()) / (1.0 - s * s * z.norm_sq());
    Ok(s.powi(2 * n) * rho.powi(n + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pt(coords: &[(f64, f64)]) -> BallPoint {
        BallPoint::new(coords.iter().map(|&(re, im)| c(re, im)).collect()).unwrap()
    }

    #[test]
    fn mobius_map_fixes_origin_pair() {
        let a = pt(&[(0.3, 0.1), (-0.2, 0.4)]);
        let zero = BallPoint::origin(2);
        let img = mobius_map(&a, &zero).unwrap();
        for (x, y) in img.coords().iter().zip(a.coords()) {
            assert_abs_diff_eq!(x.re, y.re, epsilon = 1e-15);
            assert_abs_diff_eq!(x.im, y.im, epsilon = 1e-15);
        }
        let back = mobius_map(&a, &a).unwrap();
        assert!(back.norm() < 1e-15);
    }

    #[test]
    fn mobius_map_zero_base_is_negation() {
        let w = pt(&[(0.2, -0.1), (0.0, 0.5)]);
        let img = mobius_map(&BallPoint::origin(2), &w).unwrap();
        for (x, y) in img.coords().iter().zip(w.coords()) {
            assert_abs_diff_eq!(x.re, -y.re, epsilon = 1e-15);
            assert_abs_diff_eq!(x.im, -y.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn involution_and_norm_identity() {
        let a = pt(&[(0.5, 0.2), (-0.3, 0.1), (0.1, -0.4)]);
        let w = pt(&[(-0.1, 0.3), (0.2, 0.2), (-0.5, 0.0)]);
        let img = mobius_map(&a, &w).unwrap();
        let back = mobius_map(&a, &img).unwrap();
        for (x, y) in back.coords().iter().zip(w.coords()) {
            assert!((x - y).norm() < 1e-12);
        }
        // 1 - |phi_a(w)|^2 = (1-|a|^2)(1-|w|^2)/|1-<w,a>|^2
        let lhs = 1.0 - img.norm_sq();
        let den = (Complex64::new(1.0, 0.0) - inner(w.coords(), a.coords())).norm_sqr();
        let rhs = (1.0 - a.norm_sq()) * (1.0 - w.norm_sq()) / den;
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13);
    }

    #[test]
    fn kernel_identity_under_mobius() {
        // 1 - <phi_a(z), phi_a(w)> = (1-|a|^2)(1-<z,w>)/((1-<z,a>)(1-<a,w>))
        let a = pt(&[(0.4, -0.1), (0.2, 0.3), (0.0, 0.2)]);
        let z = pt(&[(0.1, 0.2), (-0.3, 0.1), (0.4, 0.0)]);
        let w = pt(&[(-0.2, -0.2), (0.1, 0.5), (0.2, 0.1)]);
        let fz = mobius_map(&a, &z).unwrap();
        let fw = mobius_map(&a, &w).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let lhs = one - inner(fz.coords(), fw.coords());
        let rhs = (1.0 - a.norm_sq()) * (one - inner(z.coords(), w.coords()))
            / ((one - inner(z.coords(), a.coords())) * (one - inner(a.coords(), w.coords())));
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn pseudo_hyperbolic_basics() {
        let z = pt(&[(0.3, 0.0), (0.0, 0.4)]);
        assert_abs_diff_eq!(pseudo_hyperbolic_distance(&z, &z).unwrap(), 0.0, epsilon = 1e-15);
        let w = pt(&[(0.25, -0.3), (0.1, 0.0)]);
        assert_abs_diff_eq!(
            pseudo_hyperbolic_distance(&BallPoint::origin(2), &w).unwrap(),
            w.norm(),
            epsilon = 1e-15
        );
        // symmetry
        let d1 = pseudo_hyperbolic_distance(&z, &w).unwrap();
        let d2 = pseudo_hyperbolic_distance(&w, &z).unwrap();
        assert_abs_diff_eq!(d1, d2, epsilon = 1e-14);
    }

    #[test]
    fn hyperbolic_distance_matches_atanh() {
        let z = BallPoint::origin(2);
        let w = pt(&[(0.5, 0.0), (0.0, 0.0)]);
        let beta = hyperbolic_distance(&z, &w).unwrap();
        assert_abs_diff_eq!(beta, 0.5f64.atanh(), epsilon = 1e-15);
        assert_abs_diff_eq!(beta.tanh(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(beta, 0.549306144334055, epsilon = 1e-12);
    }

    #[test]
    fn metric_invariance_under_mobius() {
        let a = pt(&[(0.35, 0.1), (-0.2, 0.25)]);
        let z = pt(&[(0.1, -0.3), (0.2, 0.0)]);
        let w = pt(&[(-0.4, 0.1), (0.0, 0.3)]);
        let rho = pseudo_hyperbolic_distance(&z, &w).unwrap();
        let fz = mobius_map(&a, &z).unwrap();
        let fw = mobius_map(&a, &w).unwrap();
        let rho2 = pseudo_hyperbolic_distance(&fz, &fw).unwrap();
        assert_abs_diff_eq!(rho, rho2, epsilon = 1e-13);
        let b1 = hyperbolic_distance(&z, &w).unwrap();
        let b2 = hyperbolic_distance(&fz, &fw).unwrap();
        assert_abs_diff_eq!(b1, b2, epsilon = 1e-12);
    }

    #[test]
    fn jacobian_values() {
        let z = pt(&[(0.3, 0.2), (0.1, -0.1)]);
        let w = pt(&[(0.2, 0.0), (-0.3, 0.3)]);
        assert_abs_diff_eq!(
            mobius_jacobian(&BallPoint::origin(2), &w).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        // at w = z the denominator is (1-|z|^2)^(2(n+1))
        let n = 2i32;
        let jac = mobius_jacobian(&z, &z).unwrap();
        assert_abs_diff_eq!(
            jac,
            (1.0 - z.norm_sq()).powi(-(n + 1)),
            epsilon = 1e-12 * jac
        );
    }

    #[test]
    fn hyperbolic_ball_degenerate_and_reference_case() {
        let b = hyperbolic_ball(&BallPoint::origin(2), 1.0).unwrap();
        let s = 1.0f64.tanh();
        assert_abs_diff_eq!(b.radius_parallel(), s, epsilon = 1e-15);
        assert_abs_diff_eq!(b.radius_perp(), s, epsilon = 1e-15);
        assert!(b.axis().is_none());

        // n = 1, z = 0.5, r = 1
        let z = pt(&[(0.5, 0.0)]);
        let b = hyperbolic_ball(&z, 1.0).unwrap();
        let denom = 1.0 - s * s * 0.25;
        assert_abs_diff_eq!(b.center()[0].re, 0.5 * (1.0 - s * s) / denom, epsilon = 1e-15);
        let rho = 0.75 / denom;
        assert_abs_diff_eq!(b.radius_parallel(), s * rho, epsilon = 1e-15);
    }

    #[test]
    fn ellipsoid_matches_metric_classification() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let z = pt(&[(0.6, 0.1), (-0.2, 0.3)]);
        let r = 0.8;
        let shape = hyperbolic_ball(&z, r).unwrap();
        let mut tested = 0;
        for _ in 0..2000 {
            let coords: Vec<Complex64> = (0..2)
                .map(|_| c(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)))
                .collect();
            if norm_sq(&coords) >= 0.96 {
                continue;
            }
            let w = BallPoint::new(coords).unwrap();
            let q = shape.quadratic_form(w.coords());
            if (q - 1.0).abs() < 1e-9 {
                continue;
            }
            let inside_metric = hyperbolic_distance(&w, &z).unwrap() < r;
            assert_eq!(q < 1.0, inside_metric);
            tested += 1;
        }
        assert!(tested > 1000);
    }

    #[test]
    fn volume_formula_reference_values() {
        let s = 0.9f64.tanh();
        let v0 = hyperbolic_ball_volume(&BallPoint::origin(2), 0.9).unwrap();
        assert_abs_diff_eq!(v0, s.powi(4), epsilon = 1e-15);

        // comparability with (1-|z|^2)^(n+1) at fixed r over boundary shells
        let r = 1.0;
        let mut ratios = Vec::new();
        for k in 4..=10 {
            let t = 1.0 - 2f64.powi(-k);
            let z = pt(&[(t, 0.0), (0.0, 0.0)]);
            let v = hyperbolic_ball_volume(&z, r).unwrap();
            ratios.push(v / (1.0 - z.norm_sq()).powi(3));
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo < 2.0, "ratio bracket too wide: {lo} .. {hi}");
    }

    #[test]
    fn hyperbolic_distance_overflows_near_the_boundary() {
        let t = 1.0 - 2e-14;
        let z = pt(&[(t, 0.0)]);
        let w = pt(&[(-t, 0.0)]);
        assert!(matches!(
            hyperbolic_distance(&z, &w),
            Err(Error::MetricOverflow { .. })
        ));
    }

    #[test]
    fn boundary_guard_rejects() {
        let bad = BallPoint::from_real(&[1.0 - 1e-15, 0.0]);
        assert!(matches!(bad, Err(Error::BoundaryGuard { .. })));
        let outside = BallPoint::from_real(&[1.5, 0.0]);
        assert!(matches!(outside, Err(Error::OutsideBall { .. })));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = pt(&[(0.1, 0.0)]);
        let b = pt(&[(0.1, 0.0), (0.2, 0.0)]);
        assert!(matches!(
            mobius_map(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
