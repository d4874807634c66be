//! Truncated Bergman space of the unit ball of C^n.
//!
//! The monomials `z^alpha` are orthogonal under the normalized volume
//! measure with `||z^alpha||^2 = n! alpha! / (n+|alpha|)!`; dividing by
//! these constants gives the orthonormal basis `e_alpha` used everywhere
//! downstream. The closed form is validated against quadrature before any
//! operator assembly (see the crate tests).

use std::collections::HashMap;

use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::{inner, BallPoint};

/// Hard cap on basis sizes; spectra are computed by dense solvers.
pub const BASIS_CAP: usize = 20_000;

/// Exponent tuple of a monomial in n complex variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Ordered orthonormal monomial basis of total degree <= D.
///
/// Ordering is graded lexicographic (degree first, then lexicographic with
/// the leading coordinate dominant), fixed once so serialized operators are
/// comparable across runs. Indices of degree <= D' always form a prefix.
#[derive(Clone, Debug)]
pub struct MultiIndexBasis {
    n: usize,
    max_degree: u32,
    indices: Vec<MultiIndex>,
    norm_constants: Vec<f64>,
    positions: HashMap<Vec<u32>, usize>,
}

/// Number of multi-indices of degree <= d in n variables: binomial(n+d, n).
pub fn basis_size(n: usize, d: u32) -> usize {
    let mut size = 1usize;
    for k in 1..=n {
        size = size * (d as usize + k) / k;
    }
    size
}

fn compositions_of(degree: u32, n: usize, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if n == 1 {
        prefix.push(degree);
        out.push(MultiIndex::new(prefix.clone()));
        prefix.pop();
        return;
    }
    // descending first coordinate gives lexicographic order within a degree
    for k in (0..=degree).rev() {
        prefix.push(k);
        compositions_of(degree - k, n - 1, prefix, out);
        prefix.pop();
    }
}

/// `||z^alpha||^2 = n! alpha! / (n + |alpha|)!` under normalized volume.
pub fn monomial_norm_sq(n: usize, exponents: &[u32]) -> f64 {
    let total: u32 = exponents.iter().sum();
    let mut ln = ln_gamma(n as f64 + 1.0) - ln_gamma(n as f64 + total as f64 + 1.0);
    for &e in exponents {
        ln += ln_gamma(e as f64 + 1.0);
    }
    ln.exp()
}

/// Builds the graded-lex basis of order D.
pub fn build_basis(n: usize, max_degree: u32) -> Result<MultiIndexBasis> {
    if n == 0 {
        return Err(Error::Empty("basis dimension must be >= 1"));
    }
    let size = basis_size(n, max_degree);
    if size > BASIS_CAP {
        return Err(Error::BasisCap {
            size,
            cap: BASIS_CAP,
        });
    }
    let mut indices = Vec::with_capacity(size);
    let mut prefix = Vec::with_capacity(n);
    for degree in 0..=max_degree {
        compositions_of(degree, n, &mut prefix, &mut indices);
    }
    let norm_constants: Vec<f64> = indices
        .iter()
        .map(|alpha| monomial_norm_sq(n, alpha.exponents()).sqrt())
        .collect();
    let positions = indices
        .iter()
        .enumerate()
        .map(|(i, alpha)| (alpha.exponents().to_vec(), i))
        .collect();
    Ok(MultiIndexBasis {
        n,
        max_degree,
        indices,
        norm_constants,
        positions,
    })
}

impl MultiIndexBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn norm_constant(&self, i: usize) -> f64 {
        self.norm_constants[i]
    }

    pub fn position(&self, exponents: &[u32]) -> Option<usize> {
        self.positions.get(exponents).copied()
    }

    /// Number of basis elements of degree <= d (a prefix of the ordering).
    pub fn degree_prefix_len(&self, d: u32) -> usize {
        basis_size(self.n, d.min(self.max_degree))
    }

    /// Values of every `e_alpha` at `z`, in basis order.
    pub fn eval_orthonormal(&self, z: &[Complex64]) -> Vec<Complex64> {
        // per-coordinate power tables up to D
        let dmax = self.max_degree as usize;
        let mut pows = vec![vec![Complex64::new(1.0, 0.0); dmax + 1]; self.n];
        for j in 0..self.n {
            for k in 1..=dmax {
                pows[j][k] = pows[j][k - 1] * z[j];
            }
        }
        self.indices
            .iter()
            .zip(&self.norm_constants)
            .map(|(alpha, c)| {
                let mut v = Complex64::new(1.0, 0.0);
                for (j, &e) in alpha.exponents().iter().enumerate() {
                    v *= pows[j][e as usize];
                }
                v / c
            })
            .collect()
    }

    /// `sum_alpha coeffs_alpha e_alpha(z)`.
    pub fn evaluate(&self, coeffs: &[Complex64], z: &BallPoint) -> Result<Complex64> {
        if coeffs.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: coeffs.len(),
            });
        }
        if z.dim() != self.n {
            return Err(Error::DimensionMismatch {
                left: z.dim(),
                right: self.n,
            });
        }
        let vals = self.eval_orthonormal(z.coords());
        Ok(coeffs.iter().zip(&vals).map(|(c, v)| c * v).sum())
    }

    /// Coefficients of the degree-truncated kernel `K_z`: `conj(e_alpha(z))`.
    pub fn kernel_coefficients(&self, z: &BallPoint) -> Result<Vec<Complex64>> {
        if z.dim() != self.n {
            return Err(Error::DimensionMismatch {
                left: z.dim(),
                right: self.n,
            });
        }
        Ok(self
            .eval_orthonormal(z.coords())
            .into_iter()
            .map(|v| v.conj())
            .collect())
    }

    /// Degree-truncated kernel `sum_{|alpha|<=D} e_alpha(w) conj(e_alpha(z))`.
    pub fn truncated_kernel(&self, z: &BallPoint, w: &BallPoint) -> Result<Complex64> {
        let coeffs = self.kernel_coefficients(z)?;
        self.evaluate(&coeffs, w)
    }
}

/// Bergman kernel `K_z(w) = (1 - <w, z>)^-(n+1)`.
pub fn bergman_kernel(z: &BallPoint, w: &BallPoint) -> Result<Complex64> {
    if z.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            left: z.dim(),
            right: w.dim(),
        });
    }
    let n = z.dim() as i32;
    let denom = Complex64::new(1.0, 0.0) - inner(w.coords(), z.coords());
    Ok(denom.powi(-(n + 1)))
}

/// Normalized kernel `k_z(w) = K_z(w) (1-|z|^2)^((n+1)/2)`, of unit Bergman norm.
pub fn normalized_kernel(z: &BallPoint, w: &BallPoint) -> Result<Complex64> {
    let n = z.dim() as f64;
    Ok(bergman_kernel(z, w)? * (1.0 - z.norm_sq()).powf(0.5 * (n + 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_basis_layout() {
        let b = build_basis(2, 1).unwrap();
        assert_eq!(b.len(), 3);
        let exps: Vec<&[u32]> = b.indices().iter().map(|a| a.exponents()).collect();
        assert_eq!(exps, vec![&[0, 0][..], &[1, 0][..], &[0, 1][..]]);
        assert_eq!(basis_size(2, 8), 45);
        assert_eq!(basis_size(3, 4), 35);
    }

    #[test]
    fn norm_constants_reference() {
        let b = build_basis(2, 3).unwrap();
        assert_abs_diff_eq!(b.norm_constant(0), 1.0, epsilon = 1e-14);
        let i = b.position(&[1, 0]).unwrap();
        assert_abs_diff_eq!(b.norm_constant(i).powi(2), 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn norm_recurrence() {
        // ||z^(a+e_i)||^2 / ||z^a||^2 = (a_i+1)/(n+|a|+1)
        let n = 3;
        let b = build_basis(n, 5).unwrap();
        for alpha in b.indices() {
            if alpha.degree() >= 5 {
                continue;
            }
            for i in 0..n {
                let mut up = alpha.exponents().to_vec();
                up[i] += 1;
                let num = monomial_norm_sq(n, &up);
                let den = monomial_norm_sq(n, alpha.exponents());
                let expected =
                    (alpha.exponents()[i] as f64 + 1.0) / (n as f64 + alpha.degree() as f64 + 1.0);
                assert_abs_diff_eq!(num / den, expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn basis_cap_enforced() {
        assert!(matches!(
            build_basis(6, 30),
            Err(Error::BasisCap { .. })
        ));
    }

    #[test]
    fn kernel_reference_values() {
        let z = BallPoint::from_real(&[0.4, 0.1]).unwrap();
        let w = BallPoint::from_real(&[0.2, -0.3]).unwrap();
        assert_abs_diff_eq!(
            bergman_kernel(&BallPoint::origin(2), &w).unwrap().re,
            1.0,
            epsilon = 1e-15
        );
        let kzz = bergman_kernel(&z, &z).unwrap();
        assert_abs_diff_eq!(kzz.im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kzz.re, (1.0 - z.norm_sq()).powi(-3), epsilon = 1e-12);
        // Hermitian symmetry
        let kzw = bergman_kernel(&z, &w).unwrap();
        let kwz = bergman_kernel(&w, &z).unwrap();
        assert!((kzw - kwz.conj()).norm() < 1e-15);
    }

    #[test]
    fn normalized_kernel_reference() {
        let z = BallPoint::from_real(&[0.5, 0.2]).unwrap();
        let k = normalized_kernel(&z, &z).unwrap();
        assert_abs_diff_eq!(
            k.norm_sqr(),
            (1.0 - z.norm_sq()).powi(-3),
            epsilon = 1e-10 * k.norm_sqr()
        );
        let w = BallPoint::from_real(&[0.3, -0.2]).unwrap();
        let k0 = normalized_kernel(&BallPoint::origin(2), &w).unwrap();
        assert_abs_diff_eq!(k0.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k0.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn truncated_kernel_converges_monotonically() {
        let z = BallPoint::from_real(&[0.5, 0.3]).unwrap();
        let w = BallPoint::from_real(&[0.4, -0.5]).unwrap();
        let exact = bergman_kernel(&z, &w).unwrap();
        let mut last = f64::INFINITY;
        for d in [2u32, 4, 6, 8, 10] {
            let b = build_basis(2, d).unwrap();
            let err = (b.truncated_kernel(&z, &w).unwrap() - exact).norm();
            assert!(err < last, "kernel truncation error must decrease");
            last = err;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn evaluate_unit_vector_and_reproducing_identity() {
        let b = build_basis(2, 4).unwrap();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); b.len()];
        coeffs[0] = Complex64::new(1.0, 0.0);
        let z = BallPoint::from_real(&[0.3, 0.3]).unwrap();
        let v = b.evaluate(&coeffs, &z).unwrap();
        assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-15);

        // <f, K_z-truncated> = f(z) for deg <= D polynomials; the pairing in
        // the orthonormal coordinates is sum f_alpha e_alpha(z)
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f: Vec<Complex64> = (0..b.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let kz = b.kernel_coefficients(&z).unwrap();
        let pairing: Complex64 = f.iter().zip(&kz).map(|(fa, ka)| fa * ka.conj()).sum();
        let direct = b.evaluate(&f, &z).unwrap();
        assert!((pairing - direct).norm() < 1e-10);
    }

    #[test]
    fn normalized_kernel_has_unit_mass() {
        // int |k_z|^2 dv = 1; the integrand depends on <w,z> only, so the
        // fiber-reduced rule at the radial representative is exact
        let z = BallPoint::from_real(&[0.4, 0.3]).unwrap();
        let radius = z.norm();
        let rule = crate::quadrature::weighted_ball_rule_reduced(2, 0.0, 200, 256).unwrap();
        let scale = (1.0 - z.norm_sq()).powi(3);
        let mass = rule.integrate_real(|w| {
            let denom = (Complex64::new(1.0, 0.0) - radius * w[0].conj()).norm_sqr();
            scale / denom.powi(3)
        });
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn length_mismatch_rejected() {
        let b = build_basis(2, 2).unwrap();
        let z = BallPoint::origin(2);
        let res = b.evaluate(&[Complex64::new(1.0, 0.0)], &z);
        assert!(matches!(res, Err(Error::LengthMismatch { .. })));
    }
}
