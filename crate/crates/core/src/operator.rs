//! Operator assembly and spectral machinery on the truncated Bergman space
//! and on weighted sample spaces.
//!
//! The weighted sample space of a measure is the finite-dimensional stand-in
//! for L^2(mu): vectors of function values at the support points scaled by
//! square-root weights, so that it carries the plain Euclidean inner product
//! and the restriction matrix R satisfies `R* R = T_mu` in exact arithmetic.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::basis::{basis_size, bergman_kernel, MultiIndexBasis};
use crate::error::{Error, Result};
use crate::geometry::BallPoint;
use crate::measure::MeasureSpec;
use crate::variety::VarietyMeasure;

const HERMITIAN_TOL: f64 = 1e-12;

/// Identifies the space an operator acts on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BasisTag {
    /// Orthonormal monomial basis of the (n, D) truncated Bergman space.
    Bergman { n: usize, degree: u32 },
    /// Weighted sample space with one coordinate per support point.
    Sample { len: usize },
}

impl BasisTag {
    pub fn size(&self) -> usize {
        match *self {
            BasisTag::Bergman { n, degree } => basis_size(n, degree),
            BasisTag::Sample { len } => len,
        }
    }
}

impl std::fmt::Display for BasisTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisTag::Bergman { n, degree } => write!(f, "bergman n={n} degree={degree}"),
            BasisTag::Sample { len } => write!(f, "sample len={len}"),
        }
    }
}

/// A complex matrix tagged with its domain and codomain bases.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<Complex64>,
    pub domain: BasisTag,
    pub codomain: BasisTag,
    pub hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(matrix: DMatrix<Complex64>, domain: BasisTag, codomain: BasisTag) -> Result<Self> {
        if matrix.ncols() != domain.size() || matrix.nrows() != codomain.size() {
            return Err(Error::TagMismatch(format!(
                "matrix is {}x{} but tags demand {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                codomain.size(),
                domain.size()
            )));
        }
        let hermitian = domain == codomain
            && matrix.nrows() == matrix.ncols()
            && hermitian_defect(&matrix) <= HERMITIAN_TOL;
        Ok(Self {
            matrix,
            domain,
            codomain,
            hermitian,
        })
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.domain == self.codomain
    }

    /// `self * rhs`, checking that `rhs` lands in `self`'s domain.
    pub fn compose(&self, rhs: &OperatorMatrix) -> Result<OperatorMatrix> {
        if rhs.codomain != self.domain {
            return Err(Error::TagMismatch(format!(
                "cannot compose: rhs codomain [{}] != lhs domain [{}]",
                rhs.codomain, self.domain
            )));
        }
        OperatorMatrix::new(&self.matrix * &rhs.matrix, rhs.domain.clone(), self.codomain.clone())
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix {
            matrix: self.matrix.adjoint(),
            domain: self.codomain.clone(),
            codomain: self.domain.clone(),
            hermitian: self.hermitian,
        }
    }

    pub fn sub(&self, rhs: &OperatorMatrix) -> Result<OperatorMatrix> {
        if rhs.domain != self.domain || rhs.codomain != self.codomain {
            return Err(Error::TagMismatch("subtraction needs identical tags".into()));
        }
        OperatorMatrix::new(&self.matrix - &rhs.matrix, self.domain.clone(), self.codomain.clone())
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        singular_values(&self.matrix).first().copied().unwrap_or(0.0)
    }

    pub fn identity_like(&self) -> OperatorMatrix {
        OperatorMatrix {
            matrix: DMatrix::identity(self.nrows(), self.ncols()),
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            hermitian: self.is_square(),
        }
    }

    /// Leading principal block on the degree <= `dc` prefix of a Bergman basis.
    ///
    /// Commutators are evaluated on this compression: the top graded slice of
    /// a truncated module is an artifact of the truncation.
    pub fn restrict_to_degree(&self, dc: u32) -> Result<OperatorMatrix> {
        let (n, degree) = match (&self.domain, &self.codomain) {
            (
                BasisTag::Bergman { n, degree },
                BasisTag::Bergman {
                    n: n2,
                    degree: deg2,
                },
            ) if n == n2 && degree == deg2 => (*n, *degree),
            _ => {
                return Err(Error::TagMismatch(
                    "degree restriction needs a square Bergman-tagged operator".into(),
                ))
            }
        };
        if dc > degree {
            return Err(Error::InvalidParameter(format!(
                "restriction degree {dc} exceeds operator degree {degree}"
            )));
        }
        let k = basis_size(n, dc);
        let block = self.matrix.view((0, 0), (k, k)).into_owned();
        OperatorMatrix::new(
            block,
            BasisTag::Bergman { n, degree: dc },
            BasisTag::Bergman { n, degree: dc },
        )
    }
}

fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Eigenvalues (descending) and matching eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    // symmetrize first so the solver sees an exactly Hermitian input
    let h = (m + m.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), m.ncols());
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<Complex64>) -> Vec<f64> {
    let svd = m.clone().svd(false, false);
    let mut vals: Vec<f64> = svd.singular_values.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// Eigen/singular data with gap classification and Schatten partial sums.
#[derive(Clone, Debug)]
pub struct SpectralReport {
    /// Sorted descending; eigenvalues for Hermitian inputs, singular values otherwise.
    pub values: Vec<f64>,
    /// Number of values retained above the kernel split.
    pub gap_location: Option<usize>,
    /// smallest retained / largest discarded.
    pub gap_ratio: Option<f64>,
    pub kernel_dimension: Option<usize>,
    /// (p, sum sigma_k^p) pairs.
    pub schatten_partial_sums: Vec<(f64, f64)>,
    pub degree: Option<u32>,
}

/// Restriction `R: Bergman(n, D) -> L^2(mu)` in weighted sample coordinates:
/// row j, column alpha holds `sqrt(w_j) e_alpha(p_j)`.
pub fn restriction_matrix(basis: &MultiIndexBasis, mu: &MeasureSpec) -> Result<OperatorMatrix> {
    if mu.is_empty() {
        return Err(Error::Empty("restriction needs a nonempty measure"));
    }
    if mu.dim() != basis.n() {
        return Err(Error::DimensionMismatch {
            left: mu.dim(),
            right: basis.n(),
        });
    }
    let support: Vec<(&BallPoint, f64)> = mu.support().collect();
    let mut m = DMatrix::zeros(support.len(), basis.len());
    for (j, (point, w)) in support.iter().enumerate() {
        let sqw = w.sqrt();
        let vals = basis.eval_orthonormal(point.coords());
        for (a, v) in vals.iter().enumerate() {
            m[(j, a)] = sqw * v;
        }
    }
    OperatorMatrix::new(
        m,
        BasisTag::Bergman {
            n: basis.n(),
            degree: basis.max_degree(),
        },
        BasisTag::Sample {
            len: support.len(),
        },
    )
}

/// Output of the spectral split of a PSD operator.
#[derive(Clone, Debug)]
pub struct SpectralProjection {
    /// Projection onto the part of the spectrum above the kernel split.
    pub q: OperatorMatrix,
    /// Complementary projection `P = I - Q` (the numerical kernel).
    pub p: OperatorMatrix,
    pub report: SpectralReport,
}

/// Splits the spectrum of a PSD Hermitian operator at `kernel_tol * lambda_max`
/// and returns the spectral projections. Fails with `NoSpectralGap` when the
/// retained/discarded ratio is below `min_gap_ratio`, which signals that the
/// truncation cannot separate the kernel.
pub fn spectral_projection(
    t: &OperatorMatrix,
    kernel_tol: f64,
    min_gap_ratio: f64,
) -> Result<SpectralProjection> {
    if !t.hermitian {
        return Err(Error::TagMismatch(
            "spectral projection needs a Hermitian operator".into(),
        ));
    }
    let (values, vectors) = hermitian_eigen(&t.matrix);
    let size = values.len();
    let lambda_max = values.first().copied().unwrap_or(0.0).max(0.0);
    let split = kernel_tol * lambda_max;
    let kept = values.iter().take_while(|&&v| v > split).count();
    let gap_ratio = if kept == 0 || kept == size {
        f64::INFINITY
    } else {
        let discarded = values[kept].max(0.0);
        if discarded == 0.0 {
            f64::INFINITY
        } else {
            values[kept - 1] / discarded
        }
    };
    if kept > 0 && kept < size && gap_ratio < min_gap_ratio {
        return Err(Error::NoSpectralGap {
            ratio: gap_ratio,
            required: min_gap_ratio,
        });
    }
    let v_kept = vectors.columns(0, kept).into_owned();
    let q_mat = &v_kept * v_kept.adjoint();
    let degree = match &t.domain {
        BasisTag::Bergman { degree, .. } => Some(*degree),
        _ => None,
    };
    let q = OperatorMatrix::new(q_mat, t.domain.clone(), t.codomain.clone())?;
    let p = OperatorMatrix::new(
        DMatrix::identity(size, size) - &q.matrix,
        t.domain.clone(),
        t.codomain.clone(),
    )?;
    let report = SpectralReport {
        values,
        gap_location: Some(kept),
        gap_ratio: Some(gap_ratio),
        kernel_dimension: Some(size - kept),
        schatten_partial_sums: Vec::new(),
        degree,
    };
    Ok(SpectralProjection { q, p, report })
}

/// Extension operator: the pseudoinverse of `R` restricted to `range Q`.
///
/// Returns `(E, ||E||)`. `R * E` is the orthogonal projection onto the range
/// of the restricted operator and `E * R` acts as the identity on `range Q`.
pub fn extension_operator(
    r: &OperatorMatrix,
    q: &OperatorMatrix,
    pinv_tol: f64,
) -> Result<(OperatorMatrix, f64)> {
    let a = r.compose(q)?;
    let rank_q = q.matrix.trace().re.round() as usize;
    let svd = a.matrix.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].partial_cmp(&svd.singular_values[x]).unwrap());
    let sigma_max = order
        .first()
        .map(|&i| svd.singular_values[i])
        .unwrap_or(0.0);
    let kept: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| svd.singular_values[i] > pinv_tol * sigma_max)
        .collect();
    if kept.len() < rank_q {
        return Err(Error::IllConditionedRestriction {
            rank: kept.len(),
            expected: rank_q,
        });
    }
    let mut e = DMatrix::<Complex64>::zeros(a.ncols(), a.nrows());
    let mut sigma_min = f64::INFINITY;
    for &i in &kept {
        let s = svd.singular_values[i];
        sigma_min = sigma_min.min(s);
        // E += v_i sigma^-1 u_i^H
        let vi = v_t.row(i).adjoint();
        let ui = u.column(i).into_owned();
        let scale = Complex64::new(1.0 / s, 0.0);
        e += (&vi * scale) * ui.adjoint();
    }
    let norm = if sigma_min.is_finite() { 1.0 / sigma_min } else { 0.0 };
    let e_op = OperatorMatrix::new(e, r.codomain.clone(), r.domain.clone())?;
    Ok((e_op, norm))
}

/// Matrix of multiplication by `z_i` on the (n, D) basis: a weighted shift
/// with `<z_i e_alpha, e_(alpha+e_i)> = sqrt((alpha_i+1)/(n+|alpha|+1))`.
/// Columns of top degree are truncated to zero.
pub fn multiplier_matrix(i: usize, basis: &MultiIndexBasis) -> Result<OperatorMatrix> {
    if i >= basis.n() {
        return Err(Error::InvalidParameter(format!(
            "coordinate index {i} out of range for n={}",
            basis.n()
        )));
    }
    let size = basis.len();
    let mut m = DMatrix::zeros(size, size);
    for (a, alpha) in basis.indices().iter().enumerate() {
        let mut up = alpha.exponents().to_vec();
        up[i] += 1;
        if let Some(b) = basis.position(&up) {
            let w = ((alpha.exponents()[i] as f64 + 1.0)
                / (basis.n() as f64 + alpha.degree() as f64 + 1.0))
                .sqrt();
            m[(b, a)] = Complex64::new(w, 0.0);
        }
    }
    let tag = BasisTag::Bergman {
        n: basis.n(),
        degree: basis.max_degree(),
    };
    OperatorMatrix::new(m, tag.clone(), tag)
}

/// Compressed multiplier `S_i = Q M_i Q` on the full (n, D) basis.
///
/// Downstream convergence studies restrict commutators of these to the
/// degree <= D-1 block, where every entry of `M_i` is exact.
pub fn compressed_multiplier(
    i: usize,
    q: &OperatorMatrix,
    basis: &MultiIndexBasis,
) -> Result<OperatorMatrix> {
    let m = multiplier_matrix(i, basis)?;
    if q.domain != m.domain {
        return Err(Error::TagMismatch(format!(
            "projection acts on [{}], multiplier on [{}]",
            q.domain, m.domain
        )));
    }
    q.compose(&m)?.compose(q)
}

/// `[A, B] = AB - BA`.
pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    let ab = a.compose(b)?;
    let ba = b.compose(a)?;
    ab.sub(&ba)
}

/// Singular values of `A` and Schatten partial sums for each requested exponent.
pub fn schatten_partial_sums(a: &OperatorMatrix, exponents: &[f64]) -> Result<SpectralReport> {
    for &p in exponents {
        if !(p > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "schatten exponent must be positive, got {p}"
            )));
        }
    }
    let values = singular_values(&a.matrix);
    let sums = exponents
        .iter()
        .map(|&p| (p, values.iter().map(|s| s.powf(p)).sum()))
        .collect();
    let degree = match &a.domain {
        BasisTag::Bergman { degree, .. } => Some(*degree),
        _ => None,
    };
    Ok(SpectralReport {
        values,
        gap_location: None,
        gap_ratio: None,
        kernel_dimension: None,
        schatten_partial_sums: sums,
        degree,
    })
}

/// Schatten-kernel criterion data for the commutator kernel `(w_i - z_i) K_w(z)`.
///
/// `integral` is the double sum of `|z_i - w_i|^p |K_w(z)|^2` against mu x mu
/// over the whole support; `bound_integral` is the majorant
/// `sum (1-|z|^2)^(p/2-d-1)` against the plain `v_d` node weights (without the
/// `(1-|w|^2)^(n-d)` density factor). The majorant stays finite exactly when
/// p > 2d.
pub fn schatten_kernel_integral(
    vm: &VarietyMeasure,
    i: usize,
    p: f64,
) -> Result<(f64, f64)> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "schatten exponent must be positive, got {p}"
        )));
    }
    let mu = vm.measure();
    let support: Vec<(&BallPoint, f64)> = mu.support().collect();
    if support.is_empty() {
        return Err(Error::Empty("schatten kernel integral needs support"));
    }
    if i >= mu.dim() {
        return Err(Error::InvalidParameter(format!(
            "coordinate index {i} out of range for n={}",
            mu.dim()
        )));
    }
    let mut integral = 0.0f64;
    for (z, wz) in &support {
        for (w, ww) in &support {
            let diff = (z.coords()[i] - w.coords()[i]).norm();
            if diff == 0.0 {
                continue;
            }
            let k = bergman_kernel(w, z)?;
            integral += wz * ww * diff.powf(p) * k.norm_sqr();
        }
    }
    let bound = schatten_bound_sum(vm, p)?;
    Ok((integral, bound))
}

/// The majorant alone: `sum (1-|z|^2)^(p/2-d-1)` against the plain `v_d`
/// node weights of the variety measure.
pub fn schatten_bound_sum(vm: &VarietyMeasure, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "schatten exponent must be positive, got {p}"
        )));
    }
    let d = vm.d() as f64;
    let mut bound = 0.0f64;
    for (point, vd_w) in vm.nodes_vd() {
        bound += vd_w * (1.0 - point.norm_sq()).powf(0.5 * p - d - 1.0);
    }
    Ok(bound)
}

/// Kernel used when assembling the sample-space Toeplitz matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelForm {
    /// `(1 - <z, w>)^-(n+1)` evaluated in closed form.
    Closed,
    /// Degree-truncated kernel series; equals `R R*` of the same basis degree.
    TruncatedSeries { degree: u32 },
}

/// `T_mu` transported to the weighted sample space:
/// entries `sqrt(w_j w_k) K_(p_k)(p_j)`.
pub fn sample_toeplitz(mu: &MeasureSpec, kernel: &KernelForm) -> Result<OperatorMatrix> {
    let support: Vec<(&BallPoint, f64)> = mu.support().collect();
    if support.is_empty() {
        return Err(Error::Empty("sample toeplitz needs a nonempty measure"));
    }
    let basis = match kernel {
        KernelForm::Closed => None,
        KernelForm::TruncatedSeries { degree } => {
            Some(crate::basis::build_basis(mu.dim(), *degree)?)
        }
    };
    let m = support.len();
    let mut t = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in 0..m {
            let (pj, wj) = support[j];
            let (pk, wk) = support[k];
            let kernel_val = match &basis {
                None => bergman_kernel(pk, pj)?,
                Some(b) => b.truncated_kernel(pk, pj)?,
            };
            t[(j, k)] = (wj * wk).sqrt() * kernel_val;
        }
    }
    let tag = BasisTag::Sample { len: m };
    OperatorMatrix::new(t, tag.clone(), tag)
}

/// Commutator `[Z_i, T_mu]` on the weighted sample space, where `Z_i` is the
/// diagonal of i-th coordinates. Entrywise this is `(z_j,i - z_k,i) T[j,k]`.
pub fn sample_space_commutator(
    mu: &MeasureSpec,
    i: usize,
    kernel: &KernelForm,
) -> Result<OperatorMatrix> {
    if i >= mu.dim() {
        return Err(Error::InvalidParameter(format!(
            "coordinate index {i} out of range for n={}",
            mu.dim()
        )));
    }
    let t = sample_toeplitz(mu, kernel)?;
    let support: Vec<(&BallPoint, f64)> = mu.support().collect();
    let m = support.len();
    let mut c = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in 0..m {
            let zj = support[j].0.coords()[i];
            let zk = support[k].0.coords()[i];
            c[(j, k)] = (zj - zk) * t.matrix[(j, k)];
        }
    }
    let tag = BasisTag::Sample { len: m };
    OperatorMatrix::new(c, tag.clone(), tag)
}

/// Gram matrix `G_ij = <k_(a_i), k_(a_j)>` of normalized kernels.
pub fn kernel_gram(points: &[BallPoint]) -> Result<DMatrix<Complex64>> {
    let m = points.len();
    if m == 0 {
        return Err(Error::Empty("gram criterion needs at least one point"));
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let dist: f64 = points[i]
                .coords()
                .iter()
                .zip(points[j].coords())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if dist < 1e-12 {
                return Err(Error::CoincidentPoints { i, j });
            }
        }
    }
    let n = points[0].dim() as f64;
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            // <k_a, k_b> = K_a(b) (1-|a|^2)^((n+1)/2) (1-|b|^2)^((n+1)/2)
            let scale = ((1.0 - points[i].norm_sq()) * (1.0 - points[j].norm_sq()))
                .powf(0.5 * (n + 1.0));
            g[(j, i)] = bergman_kernel(&points[i], &points[j])? * scale;
        }
    }
    Ok(g)
}

/// Best nonnegative diagonal D for `G = G D G*` in Frobenius norm.
///
/// Projected gradient with 20 multi-starts, polished by exact per-coordinate
/// minimization; the reported residual is an upper bound for the true
/// minimum, which is the conservative direction for the m >= 2
/// impossibility check.
pub fn gram_criterion(points: &[BallPoint]) -> Result<(f64, Vec<f64>)> {
    let g = kernel_gram(points)?;
    let m = points.len();
    // G D G* = sum_i d_i g_i g_i^H with g_i the i-th column of G.
    let cols: Vec<DVector<Complex64>> = (0..m).map(|i| g.column(i).into_owned()).collect();
    // quadratic model f(d) = ||G||^2 - 2 b.d + d^T H d
    let gg: f64 = g.iter().map(|c| c.norm_sqr()).sum();
    let mut b = vec![0.0f64; m];
    let mut h = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        b[i] = (cols[i].adjoint() * &g * &cols[i])[(0, 0)].re;
        for j in 0..m {
            h[(i, j)] = (cols[i].adjoint() * &cols[j])[(0, 0)].norm_sqr();
        }
    }
    let objective = |d: &[f64]| -> f64 {
        let mut val = gg;
        for i in 0..m {
            val -= 2.0 * b[i] * d[i];
            for j in 0..m {
                val += d[i] * h[(i, j)] * d[j];
            }
        }
        val.max(0.0)
    };
    let lipschitz: f64 = (0..m).map(|i| h.row(i).iter().sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lipschitz.max(1e-300);

    let mut rng = ChaCha8Rng::seed_from_u64(0x6772616d);
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; m], vec![1.0; m], vec![1.0 / m as f64; m]];
    while starts.len() < 20 {
        starts.push((0..m).map(|_| rng.gen_range(0.0..2.0)).collect());
    }

    let mut best_val = f64::INFINITY;
    let mut best_d = vec![0.0; m];
    for start in starts {
        let mut d = start;
        // projected gradient phase
        for _ in 0..50 {
            let mut grad = vec![0.0f64; m];
            for i in 0..m {
                grad[i] = -2.0 * b[i];
                for j in 0..m {
                    grad[i] += 2.0 * h[(i, j)] * d[j];
                }
            }
            for i in 0..m {
                d[i] = (d[i] - step * grad[i]).max(0.0);
            }
        }
        // exact coordinate descent polish
        for _ in 0..500 {
            let mut delta = 0.0f64;
            for i in 0..m {
                if h[(i, i)] <= 0.0 {
                    continue;
                }
                let mut residual = b[i];
                for j in 0..m {
                    if j != i {
                        residual -= h[(i, j)] * d[j];
                    }
                }
                let new = (residual / h[(i, i)]).max(0.0);
                delta = delta.max((new - d[i]).abs());
                d[i] = new;
            }
            if delta < 1e-15 {
                break;
            }
        }
        let val = objective(&d);
        if val < best_val {
            best_val = val;
            best_d = d;
        }
    }
    Ok((best_val.sqrt(), best_d))
}

/// Largest c with `T^3 >= c T`: the square of the smallest retained
/// eigenvalue under the kernel split.
pub fn toeplitz_cubed_bound(
    t: &OperatorMatrix,
    kernel_tol: f64,
    min_gap_ratio: f64,
) -> Result<f64> {
    let proj = spectral_projection(t, kernel_tol, min_gap_ratio)?;
    let kept = proj.report.gap_location.unwrap_or(0);
    if kept == 0 {
        return Err(Error::InvalidParameter(
            "operator is numerically zero; no nonzero eigenvalue".into(),
        ));
    }
    let lambda_min = proj.report.values[kept - 1];
    Ok(lambda_min * lambda_min)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a matrix-market-style text file with the basis tags in header
/// comments. Entries are emitted densely in row-major order.
pub fn write_matrix(path: &Path, op: &OperatorMatrix) -> Result<()> {
    let mut out = String::new();
    out.push_str("%%bergmanlab-matrix 1\n");
    let _ = writeln!(out, "% codomain: {}", op.codomain);
    let _ = writeln!(out, "% domain: {}", op.domain);
    let _ = writeln!(out, "% hermitian: {}", op.hermitian);
    let _ = writeln!(out, "{} {}", op.nrows(), op.ncols());
    for i in 0..op.nrows() {
        for j in 0..op.ncols() {
            let c = op.matrix[(i, j)];
            let _ = writeln!(out, "{} {} {} {}", i + 1, j + 1, fmt_f64(c.re), fmt_f64(c.im));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_tag(s: &str) -> Result<BasisTag> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("bergman") {
        let mut n = None;
        let mut degree = None;
        for part in rest.split_whitespace() {
            if let Some(v) = part.strip_prefix("n=") {
                n = v.parse::<usize>().ok();
            }
            if let Some(v) = part.strip_prefix("degree=") {
                degree = v.parse::<u32>().ok();
            }
        }
        return match (n, degree) {
            (Some(n), Some(degree)) => Ok(BasisTag::Bergman { n, degree }),
            _ => Err(Error::Parse(format!("bad bergman tag: {s}"))),
        };
    }
    if let Some(rest) = s.strip_prefix("sample") {
        for part in rest.split_whitespace() {
            if let Some(v) = part.strip_prefix("len=") {
                if let Ok(len) = v.parse::<usize>() {
                    return Ok(BasisTag::Sample { len });
                }
            }
        }
    }
    Err(Error::Parse(format!("unrecognized basis tag: {s}")))
}

/// Reads a matrix written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<OperatorMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or_default();
    if !magic.starts_with("%%bergmanlab-matrix") {
        return Err(Error::Parse("missing matrix header".into()));
    }
    let mut codomain = None;
    let mut domain = None;
    let mut dims = None;
    let mut entries = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("% codomain:") {
            codomain = Some(parse_tag(rest)?);
            continue;
        }
        if let Some(rest) = line.strip_prefix("% domain:") {
            domain = Some(parse_tag(rest)?);
            continue;
        }
        if line.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if dims.is_none() {
            if parts.len() != 2 {
                return Err(Error::Parse(format!("bad dimension line: {line}")));
            }
            let r = parts[0].parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?;
            let c = parts[1].parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?;
            dims = Some((r, c));
            continue;
        }
        if parts.len() != 4 {
            return Err(Error::Parse(format!("bad entry line: {line}")));
        }
        let i = parts[0].parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?;
        let j = parts[1].parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?;
        let re = parts[2].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
        let im = parts[3].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
        entries.push((i - 1, j - 1, Complex64::new(re, im)));
    }
    let (rows, cols) = dims.ok_or_else(|| Error::Parse("missing dimensions".into()))?;
    let mut m = DMatrix::zeros(rows, cols);
    for (i, j, v) in entries {
        if i >= rows || j >= cols {
            return Err(Error::Parse("entry out of bounds".into()));
        }
        m[(i, j)] = v;
    }
    let domain = domain.ok_or_else(|| Error::Parse("missing domain tag".into()))?;
    let codomain = codomain.ok_or_else(|| Error::Parse("missing codomain tag".into()))?;
    OperatorMatrix::new(m, domain, codomain)
}
