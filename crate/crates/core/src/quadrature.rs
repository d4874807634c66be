//! Deterministic quadrature on the complex unit ball and sphere.
//!
//! The ball of C^n is factored per complex coordinate: `z_j = sqrt(t_j) e^(i theta_j)`
//! with `t` on the simplex `{t_j >= 0, sum t_j < 1}`. Equispaced angular grids
//! kill every cross moment `z^a conj(z)^b` with `a != b` exactly (no aliasing
//! up to the grid order), and an iterated Gauss-Jacobi rule on the simplex
//! integrates the surviving diagonal moments exactly. The same factorization
//! gives sphere rules (simplex on `sum s_j = 1`) and radial shell rules.
//!
//! All rules are deterministic given their configuration; the Monte Carlo
//! fallback is driven by a fixed-seed ChaCha stream.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::basis::MultiIndexBasis;
use crate::error::{Error, Result};

/// Hard cap on generated node counts.
const NODE_CAP: usize = 30_000_000;

/// One-dimensional rule: `sum w_i f(x_i)` approximates a weighted integral.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Jacobi rule of order `m` for `int_{-1}^{1} (1-x)^alpha (1+x)^beta f(x) dx`,
/// exact for polynomials of degree <= 2m-1. Golub-Welsch on the symmetric
/// tridiagonal recurrence matrix.
pub fn gauss_jacobi(m: usize, alpha: f64, beta: f64) -> Result<GaussRule> {
    if m == 0 {
        return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
    }
    if alpha <= -1.0 || beta <= -1.0 {
        return Err(Error::InvalidParameter(format!(
            "jacobi exponents must exceed -1, got alpha={alpha}, beta={beta}"
        )));
    }
    let ab = alpha + beta;
    let mut diag = vec![0.0f64; m];
    let mut off = vec![0.0f64; m.saturating_sub(1)];
    for k in 0..m {
        let kf = k as f64;
        diag[k] = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            let d = (2.0 * kf + ab) * (2.0 * kf + ab + 2.0);
            if d == 0.0 {
                0.0
            } else {
                (beta * beta - alpha * alpha) / d
            }
        };
        if k + 1 < m {
            let j = kf + 1.0;
            let num = 4.0 * j * (j + alpha) * (j + beta) * (j + ab);
            let den = (2.0 * j + ab) * (2.0 * j + ab) * ((2.0 * j + ab + 1.0) * (2.0 * j + ab - 1.0));
            off[k] = (num / den).sqrt();
        }
    }
    let mut mat = nalgebra::DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        mat[(k, k)] = diag[k];
        if k + 1 < m {
            mat[(k, k + 1)] = off[k];
            mat[(k + 1, k)] = off[k];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(mat);
    // mu0 = 2^(a+b+1) B(a+1, b+1)
    let mu0 = ((ab + 1.0) * 2f64.ln() + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(ab + 2.0))
    .exp();
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

pub fn gauss_legendre(m: usize) -> Result<GaussRule> {
    gauss_jacobi(m, 0.0, 0.0)
}

/// Rule on `[0,1]` absorbing the weight `(1-u)^alpha`:
/// `sum w_i f(u_i) = int_0^1 (1-u)^alpha f(u) du`.
pub fn gauss_jacobi_unit(m: usize, alpha: f64) -> Result<GaussRule> {
    let base = gauss_jacobi(m, alpha, 0.0)?;
    let scale = 2f64.powf(-alpha - 1.0);
    Ok(GaussRule {
        nodes: base.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights: base.weights.iter().map(|w| w * scale).collect(),
    })
}

/// Plain Gauss-Legendre on an interval [a, b].
pub fn gauss_legendre_on(m: usize, a: f64, b: f64) -> Result<GaussRule> {
    let base = gauss_legendre(m)?;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(GaussRule {
        nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
        weights: base.weights.iter().map(|w| w * half).collect(),
    })
}

/// Nodes and positive weights in C^n (points may lie inside the ball or on
/// the sphere depending on the constructor).
#[derive(Clone, Debug)]
pub struct ComplexRule {
    pub n: usize,
    pub nodes: Vec<Vec<Complex64>>,
    pub weights: Vec<f64>,
}

impl ComplexRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum w_i f(node_i)` for a complex-valued integrand.
    pub fn integrate<F: FnMut(&[Complex64]) -> Complex64>(&self, mut f: F) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (node, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(node);
        }
        acc
    }

    pub fn integrate_real<F: FnMut(&[Complex64]) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for (node, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(node);
        }
        acc
    }

    /// Estimate and sample standard error for equal-weight (Monte Carlo)
    /// rules: `(mean, stderr)` of the weighted sum.
    pub fn integrate_real_with_stderr<F: FnMut(&[Complex64]) -> f64>(
        &self,
        mut f: F,
    ) -> (f64, f64) {
        let n = self.len() as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for (node, &w) in self.nodes.iter().zip(&self.weights) {
            let v = w * f(node) * n;
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Quadrature configuration carried by run configs.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QuadScheme {
    /// Simplex (x) torus rule; `radial_order` Gauss points per simplex
    /// coordinate, `angular_order` equispaced angles per complex coordinate.
    Deterministic {
        radial_order: usize,
        angular_order: usize,
    },
    /// Uniform samples in the ball with a fixed seed.
    MonteCarlo { samples: usize, seed: u64 },
}

impl QuadScheme {
    /// Orders meeting the moment-exactness contract for monomials of
    /// per-factor degree <= `degree`.
    pub fn for_degree(degree: u32) -> Self {
        QuadScheme::Deterministic {
            radial_order: degree as usize + 1,
            angular_order: 2 * degree as usize + 1,
        }
    }
}

fn check_cap(count: usize) -> Result<()> {
    if count > NODE_CAP {
        return Err(Error::InvalidParameter(format!(
            "quadrature would generate {count} nodes (cap {NODE_CAP})"
        )));
    }
    Ok(())
}

/// Odometer over mixed radices.
fn for_each_multi(radices: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; radices.len()];
    loop {
        f(&idx);
        let mut k = radices.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < radices[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Full-ball rule for the normalized volume measure `v_n`.
///
/// Exact (up to rounding) for all mixed moments `z^a conj(z)^b` with
/// per-coordinate degrees `a_j, b_j <= radial_order - 1` and
/// `|a_j - b_j| < angular_order`.
pub fn ball_rule(n: usize, scheme: &QuadScheme) -> Result<ComplexRule> {
    match *scheme {
        QuadScheme::Deterministic {
            radial_order,
            angular_order,
        } => ball_rule_det(n, radial_order, angular_order),
        QuadScheme::MonteCarlo { samples, seed } => Ok(ball_rule_mc(n, samples, seed)),
    }
}

fn ball_rule_det(n: usize, radial_order: usize, angular_order: usize) -> Result<ComplexRule> {
    if n == 0 {
        return Err(Error::Empty("ball dimension must be >= 1"));
    }
    if angular_order == 0 {
        return Err(Error::InvalidParameter("angular order must be >= 1".into()));
    }
    // Simplex factorization: t_1 = u_1, t_j = u_j prod_{i<j}(1-u_i) with
    // Jacobian prod (1-u_j)^(n-j) absorbed into per-factor Jacobi rules.
    let radial: Vec<GaussRule> = (1..=n)
        .map(|j| gauss_jacobi_unit(radial_order, (n - j) as f64))
        .collect::<Result<_>>()?;
    let count = radial_order.pow(n as u32) * angular_order.pow(n as u32);
    check_cap(count)?;
    let n_fact: f64 = (1..=n).map(|k| k as f64).product();
    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    let radices = vec![radial_order; n];
    let mut t = vec![0.0f64; n];
    for_each_multi(&radices, |ridx| {
        let mut carry = 1.0;
        let mut w = n_fact;
        for j in 0..n {
            let u = radial[j].nodes[ridx[j]];
            w *= radial[j].weights[ridx[j]];
            t[j] = carry * u;
            carry *= 1.0 - u;
        }
        let radii: Vec<f64> = t.iter().map(|&tj| tj.sqrt()).collect();
        let ang_radices = vec![angular_order; n];
        let ang_w = w / (angular_order as f64).powi(n as i32);
        for_each_multi(&ang_radices, |aidx| {
            let node: Vec<Complex64> = (0..n)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * (aidx[j] as f64)
                        / (angular_order as f64);
                    Complex64::from_polar(radii[j], th)
                })
                .collect();
            nodes.push(node);
            weights.push(ang_w);
        });
    });
    Ok(ComplexRule { n, nodes, weights })
}

/// Uniform ball samples with weight 1/N each (normalized measure).
pub fn ball_rule_mc(n: usize, samples: usize, seed: u64) -> ComplexRule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(samples);
    for _ in 0..samples {
        nodes.push(sample_ball_point(n, &mut rng));
    }
    let w = 1.0 / samples as f64;
    ComplexRule {
        n,
        nodes,
        weights: vec![w; samples],
    }
}

/// One uniform sample from the ball of C^n: isotropic direction times
/// radius U^(1/2n).
pub fn sample_ball_point(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    loop {
        let gauss: Vec<Complex64> = (0..n)
            .map(|_| {
                Complex64::new(
                    standard_normal(rng),
                    standard_normal(rng),
                )
            })
            .collect();
        let nrm = crate::geometry::norm_sq(&gauss).sqrt();
        if nrm < 1e-12 {
            continue;
        }
        let u: f64 = rng.gen::<f64>();
        let r = u.powf(1.0 / (2.0 * n as f64));
        if r >= 1.0 - crate::geometry::BOUNDARY_GUARD {
            continue;
        }
        return gauss.into_iter().map(|g| g * (r / nrm)).collect();
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; two uniforms per call keeps the stream simple and seedable.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Rule on the unit sphere of C^n for the normalized surface measure sigma.
///
/// `angular_orders[j]` is the angular grid size of coordinate j; an order of 1
/// pins that phase to 0, which is exact for integrands independent of it
/// (used together with unitary invariance to evaluate radial-symbol
/// integrals cheaply).
pub fn sphere_rule(n: usize, radial_order: usize, angular_orders: &[usize]) -> Result<ComplexRule> {
    if n == 0 {
        return Err(Error::Empty("sphere dimension must be >= 1"));
    }
    if angular_orders.len() != n {
        return Err(Error::DimensionMismatch {
            left: angular_orders.len(),
            right: n,
        });
    }
    // s on the (n-1)-simplex {sum_{j<n} s_j <= 1}, s_n = 1 - sum.
    let m = n - 1;
    let radial: Vec<GaussRule> = (1..=m)
        .map(|j| gauss_jacobi_unit(radial_order, (m - j) as f64))
        .collect::<Result<_>>()?;
    let base_count: usize = radial_order.pow(m as u32);
    let ang_count: usize = angular_orders.iter().product();
    check_cap(base_count * ang_count)?;
    let m_fact: f64 = (1..=m).map(|k| k as f64).product();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let radices = vec![radial_order; m];
    let mut s = vec![0.0f64; n];
    for_each_multi(&radices, |ridx| {
        let mut carry = 1.0;
        let mut w = m_fact;
        for j in 0..m {
            let u = radial[j].nodes[ridx[j]];
            w *= radial[j].weights[ridx[j]];
            s[j] = carry * u;
            carry *= 1.0 - u;
        }
        s[m] = carry;
        let radii: Vec<f64> = s.iter().map(|&sj| sj.sqrt()).collect();
        let ang_total: f64 = angular_orders.iter().map(|&a| a as f64).product();
        let ang_w = w / ang_total;
        for_each_multi(angular_orders, |aidx| {
            let node: Vec<Complex64> = (0..n)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * (aidx[j] as f64)
                        / (angular_orders[j] as f64);
                    Complex64::from_polar(radii[j], th)
                })
                .collect();
            nodes.push(node);
            weights.push(ang_w);
        });
    });
    Ok(ComplexRule { n, nodes, weights })
}

/// Sphere rule resolving only the first coordinate's phase.
pub fn sphere_rule_reduced(n: usize, radial_order: usize, angular_order: usize) -> Result<ComplexRule> {
    let mut orders = vec![1usize; n];
    orders[0] = angular_order;
    sphere_rule(n, radial_order, &orders)
}

/// Rule for `(1-|w|^2)^t dv_n` over the full ball, `t > -1`.
///
/// Radial direction: `int_0^1 u^(n-1) (1-u)^t h(u) du` by Gauss-Jacobi with
/// both endpoint factors absorbed, composed with a sphere rule in the
/// direction variable.
pub fn weighted_ball_rule(
    n: usize,
    t_exp: f64,
    radial_order: usize,
    sphere: &ComplexRule,
) -> Result<ComplexRule> {
    if sphere.n != n {
        return Err(Error::DimensionMismatch {
            left: sphere.n,
            right: n,
        });
    }
    let base = gauss_jacobi(radial_order, t_exp, (n - 1) as f64)?;
    // map x in [-1,1] to u in [0,1]: weight (1-x)^t (1+x)^(n-1) -> 2^(t+n) scale
    let scale = 2f64.powf(-(t_exp + n as f64));
    check_cap(radial_order * sphere.len())?;
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(radial_order * sphere.len());
    let mut weights = Vec::with_capacity(radial_order * sphere.len());
    for (x, wx) in base.nodes.iter().zip(&base.weights) {
        let u = 0.5 * (x + 1.0);
        let radius = u.sqrt();
        let w_rad = nf * scale * wx;
        for (zeta, ws) in sphere.nodes.iter().zip(&sphere.weights) {
            nodes.push(zeta.iter().map(|&c| c * radius).collect());
            weights.push(w_rad * ws);
        }
    }
    Ok(ComplexRule { n, nodes, weights })
}

/// Reduced rule for `(1-|w|^2)^t dv_n`, exact for integrands that depend on
/// the first coordinate alone.
///
/// The orthogonal fiber over `w_1` integrates in closed form:
/// `int (1-|w|^2)^t g(w_1) dv_n = C(n,t) int_(B_1) (1-|u|^2)^(t+n-1) g(u) dv_1`
/// with `C(n,t) = n! Gamma(t+1) / Gamma(n+t)`. Nodes sit at `(u, 0, ..., 0)`;
/// weights carry the measure including its `(1-|w|^2)^t` factor.
pub fn weighted_ball_rule_reduced(
    n: usize,
    t_exp: f64,
    radial_order: usize,
    angular_order: usize,
) -> Result<ComplexRule> {
    if n == 0 {
        return Err(Error::Empty("ball dimension must be >= 1"));
    }
    if angular_order == 0 {
        return Err(Error::InvalidParameter("angular order must be >= 1".into()));
    }
    let fiber_exp = t_exp + (n as f64 - 1.0);
    let radial = gauss_jacobi_unit(radial_order, fiber_exp)?;
    let scale = (ln_gamma(n as f64 + 1.0) + ln_gamma(t_exp + 1.0) - ln_gamma(n as f64 + t_exp))
        .exp()
        / angular_order as f64;
    check_cap(radial_order * angular_order)?;
    let mut nodes = Vec::with_capacity(radial_order * angular_order);
    let mut weights = Vec::with_capacity(radial_order * angular_order);
    for (t1, wr) in radial.nodes.iter().zip(&radial.weights) {
        let radius = t1.sqrt();
        for k in 0..angular_order {
            let th = 2.0 * std::f64::consts::PI * k as f64 / angular_order as f64;
            let mut node = vec![Complex64::new(0.0, 0.0); n];
            node[0] = Complex64::from_polar(radius, th);
            nodes.push(node);
            weights.push(scale * wr);
        }
    }
    Ok(ComplexRule { n, nodes, weights })
}

/// Rule for `(1-|w|^2)^t dv_d` over the shell `r_lo <= |w| < r_hi` of B_d.
///
/// Substituting `|w|^2 = r_lo^2 + (r_hi^2 - r_lo^2) u` turns the weight into
/// `(1-u)^t` when `r_hi = 1`, handled by Gauss-Jacobi; for `r_hi < 1` the
/// factor stays smooth and plain Gauss-Legendre in u is used.
pub fn shell_rule(
    d: usize,
    t_exp: f64,
    r_lo: f64,
    r_hi: f64,
    radial_order: usize,
    sphere: &ComplexRule,
) -> Result<ComplexRule> {
    if sphere.n != d {
        return Err(Error::DimensionMismatch {
            left: sphere.n,
            right: d,
        });
    }
    if !(0.0 <= r_lo && r_lo < r_hi && r_hi <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "invalid shell [{r_lo}, {r_hi})"
        )));
    }
    let a = r_lo * r_lo;
    let b = r_hi * r_hi;
    let width = b - a;
    let outer_open = (r_hi - 1.0).abs() < 1e-15;
    let base = if outer_open {
        // 1 - t' = (1-a)(1-u): absorb (1-u)^t exactly
        gauss_jacobi_unit(radial_order, t_exp)?
    } else {
        gauss_legendre_on(radial_order, 0.0, 1.0)?
    };
    check_cap(radial_order * sphere.len())?;
    let df = d as f64;
    let mut nodes = Vec::with_capacity(radial_order * sphere.len());
    let mut weights = Vec::with_capacity(radial_order * sphere.len());
    for (u, wu) in base.nodes.iter().zip(&base.weights) {
        let t_prime = a + width * u;
        let radius = t_prime.sqrt();
        let smooth = if outer_open {
            // weight absorbed (1-t') = (1-a)(1-u); supply the (1-a)^t scale
            (1.0 - a).powf(t_exp) * width
        } else {
            (1.0 - t_prime).powf(t_exp) * width
        };
        let w_rad = df * t_prime.powf(df - 1.0) * smooth * wu;
        for (zeta, ws) in sphere.nodes.iter().zip(&sphere.weights) {
            nodes.push(zeta.iter().map(|&c| c * radius).collect());
            weights.push(w_rad * ws);
        }
    }
    Ok(ComplexRule { n: d, nodes, weights })
}

/// Closed-form monomial moment `int_{B_n} z^a conj(z)^a dv = n! a! / (n+|a|)!`.
pub fn monomial_moment(n: usize, exps: &[u32]) -> f64 {
    let total: u32 = exps.iter().sum();
    let mut ln = ln_gamma(n as f64 + 1.0) - ln_gamma((n as u32 + total) as f64 + 1.0);
    for &e in exps {
        ln += ln_gamma(e as f64 + 1.0);
    }
    ln.exp()
}

/// Checks the moment-exactness contract of a rule against the closed form,
/// for all pairs `a, b` with `|a|, |b| <= degree`. Returns the worst violated
/// moment as an error when it exceeds `tol`.
pub fn validate_moments(rule: &ComplexRule, basis: &MultiIndexBasis, tol: f64) -> Result<f64> {
    let n = rule.n;
    let mut worst = 0.0f64;
    let mut worst_label = String::new();
    for (ia, alpha) in basis.indices().iter().enumerate() {
        for beta in basis.indices().iter().skip(ia) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (node, &w) in rule.nodes.iter().zip(&rule.weights) {
                let mut term = Complex64::new(w, 0.0);
                for (coord, (&ea, &eb)) in node
                    .iter()
                    .zip(alpha.exponents().iter().zip(beta.exponents()))
                {
                    term *= coord.powu(ea);
                    term *= coord.conj().powu(eb);
                }
                acc += term;
            }
            let expected = if alpha == beta {
                monomial_moment(n, alpha.exponents())
            } else {
                0.0
            };
            let err = (acc - Complex64::new(expected, 0.0)).norm();
            if err > worst {
                worst = err;
                worst_label = format!("{:?} x {:?}", alpha.exponents(), beta.exponents());
            }
        }
    }
    if worst > tol {
        return Err(Error::QuadratureExactness {
            violation: worst,
            which: worst_label,
        });
    }
    Ok(worst)
}
