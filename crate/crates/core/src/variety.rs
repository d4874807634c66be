//! Analytic subsets of the ball: affine slices, polynomial graphs and finite
//! point sets, with their induced volume densities and quadrature.
//!
//! Volume convention: `v_d` assigns mass 1 to a full unit d-ball, so a slice
//! of radius r carries total `v_d` mass `r^(2d)`. This is the scaling under
//! which the affine mean-value identity holds with the factor `r^-2`.
//!
//! The induced measure of a d-dimensional variety is
//! `(1-|w|^2)^(n-d) dv_d` on the sampled stratum plus configured point
//! masses `(1-|z_i|^2)^(n+1) delta_(z_i)` standing in for interior singular
//! points.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{hyperbolic_ball, hyperbolic_distance, inner, norm_sq, BallPoint};
use crate::measure::MeasureSpec;
use crate::quadrature::{ball_rule, shell_rule, sphere_rule, ComplexRule, QuadScheme};

/// Polynomial in `dim` complex variables as a multi-index coefficient table.
#[derive(Clone, Debug)]
pub struct Poly {
    dim: usize,
    terms: Vec<(Vec<u32>, Complex64)>,
}

impl Poly {
    pub fn new(dim: usize, terms: Vec<(Vec<u32>, Complex64)>) -> Result<Self> {
        for (exps, _) in &terms {
            if exps.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: exps.len(),
                    right: dim,
                });
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    /// Single monomial `coeff * w^exps`.
    pub fn monomial(dim: usize, exps: Vec<u32>, coeff: Complex64) -> Result<Self> {
        Self::new(dim, vec![(exps, coeff)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Vec<u32>, Complex64)] {
        &self.terms
    }

    pub fn eval(&self, w: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (exps, coeff) in &self.terms {
            let mut term = *coeff;
            for (j, &e) in exps.iter().enumerate() {
                term *= w[j].powu(e);
            }
            acc += term;
        }
        acc
    }

    /// Analytic partial derivative with respect to coordinate `i`.
    pub fn partial(&self, i: usize) -> Poly {
        let terms = self
            .terms
            .iter()
            .filter(|(exps, _)| exps[i] > 0)
            .map(|(exps, coeff)| {
                let mut e = exps.clone();
                let k = e[i];
                e[i] -= 1;
                (e, coeff * k as f64)
            })
            .collect();
        Poly {
            dim: self.dim,
            terms,
        }
    }
}

/// Description of an analytic subset intersected with the ball.
#[derive(Clone, Debug)]
pub enum VarietySpec {
    /// `{basepoint + span of frame} ∩ B_n`; frame vectors are orthonormal.
    AffineSlice {
        basepoint: Vec<Complex64>,
        frame: Vec<Vec<Complex64>>,
    },
    /// Graph `{(w', F_(d+1)(w'), ..., F_n(w'))}` over the unit parameter ball
    /// in the standard coordinates.
    PolynomialGraph {
        n: usize,
        d: usize,
        components: Vec<Poly>,
    },
    /// Zero-dimensional variety.
    FinitePoints { points: Vec<BallPoint> },
}

impl VarietySpec {
    pub fn affine_slice(basepoint: Vec<Complex64>, frame: Vec<Vec<Complex64>>) -> Result<Self> {
        let n = basepoint.len();
        if frame.is_empty() || frame.len() >= n {
            return Err(Error::InvalidParameter(format!(
                "slice dimension must satisfy 1 <= d < n, got d={} n={n}",
                frame.len()
            )));
        }
        for f in &frame {
            if f.len() != n {
                return Err(Error::DimensionMismatch {
                    left: f.len(),
                    right: n,
                });
            }
        }
        for (i, fi) in frame.iter().enumerate() {
            for (j, fj) in frame.iter().enumerate() {
                let ip = inner(fi, fj);
                let expected = if i == j { 1.0 } else { 0.0 };
                if (ip - Complex64::new(expected, 0.0)).norm() > 1e-12 {
                    return Err(Error::InvalidParameter(
                        "slice frame must be orthonormal".into(),
                    ));
                }
            }
        }
        let spec = Self::AffineSlice { basepoint, frame };
        // existence of the parameterization checks nonempty intersection
        spec.slice_chart()?;
        Ok(spec)
    }

    pub fn polynomial_graph(n: usize, d: usize, components: Vec<Poly>) -> Result<Self> {
        if d == 0 || d >= n {
            return Err(Error::InvalidParameter(format!(
                "graph dimension must satisfy 1 <= d < n, got d={d} n={n}"
            )));
        }
        if components.len() != n - d {
            return Err(Error::LengthMismatch {
                expected: n - d,
                got: components.len(),
            });
        }
        for f in &components {
            if f.dim() != d {
                return Err(Error::DimensionMismatch {
                    left: f.dim(),
                    right: d,
                });
            }
        }
        Ok(Self::PolynomialGraph { n, d, components })
    }

    /// Axis-aligned slice through the origin spanned by the first d
    /// coordinates: the model hyperplane example.
    pub fn hyperplane(n: usize, d: usize) -> Result<Self> {
        if d == 0 || d >= n {
            return Err(Error::InvalidParameter(format!(
                "hyperplane dimension must satisfy 1 <= d < n, got d={d} n={n}"
            )));
        }
        let mut frame = Vec::with_capacity(d);
        for k in 0..d {
            let mut f = vec![Complex64::new(0.0, 0.0); n];
            f[k] = Complex64::new(1.0, 0.0);
            frame.push(f);
        }
        Self::affine_slice(vec![Complex64::new(0.0, 0.0); n], frame)
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            VarietySpec::AffineSlice { basepoint, .. } => basepoint.len(),
            VarietySpec::PolynomialGraph { n, .. } => *n,
            VarietySpec::FinitePoints { points } => {
                points.first().map(|p| p.dim()).unwrap_or(0)
            }
        }
    }

    pub fn d(&self) -> usize {
        match self {
            VarietySpec::AffineSlice { frame, .. } => frame.len(),
            VarietySpec::PolynomialGraph { d, .. } => *d,
            VarietySpec::FinitePoints { .. } => 0,
        }
    }

    /// Center (closest point of the slice to the origin) and radius of the
    /// d-ball a slice cuts out of B_n, plus the orthonormal frame.
    pub fn slice_chart(&self) -> Result<SliceChart> {
        let (basepoint, frame) = match self {
            VarietySpec::AffineSlice { basepoint, frame } => (basepoint, frame),
            _ => {
                return Err(Error::InvalidParameter(
                    "slice chart requires an affine slice".into(),
                ))
            }
        };
        // project the origin onto the affine subspace
        let mut center = basepoint.clone();
        for f in frame {
            let coeff = inner(basepoint, f);
            for (c, fc) in center.iter_mut().zip(f) {
                *c -= coeff * fc;
            }
        }
        let c_sq = norm_sq(&center);
        if c_sq >= 1.0 - 1e-14 {
            return Err(Error::InvalidParameter(
                "slice does not meet the open ball".into(),
            ));
        }
        Ok(SliceChart {
            center,
            radius: (1.0 - c_sq).sqrt(),
            frame: frame.clone(),
        })
    }

    /// Ambient point over a parameter value (slices and graphs).
    pub fn embed(&self, param: &[Complex64]) -> Result<Vec<Complex64>> {
        match self {
            VarietySpec::AffineSlice { .. } => {
                let chart = self.slice_chart()?;
                Ok(chart.embed(param))
            }
            VarietySpec::PolynomialGraph { n, d, components } => {
                if param.len() != *d {
                    return Err(Error::DimensionMismatch {
                        left: param.len(),
                        right: *d,
                    });
                }
                let mut w = Vec::with_capacity(*n);
                w.extend_from_slice(param);
                for f in components {
                    w.push(f.eval(param));
                }
                Ok(w)
            }
            VarietySpec::FinitePoints { .. } => Err(Error::InvalidParameter(
                "finite point sets have no parameterization".into(),
            )),
        }
    }

    /// Graph residual of an ambient point (0 for points on the variety).
    pub fn graph_residual(&self, w: &[Complex64]) -> Result<f64> {
        match self {
            VarietySpec::AffineSlice { .. } => {
                let chart = self.slice_chart()?;
                let param = chart.param_of(w);
                let back = chart.embed(&param);
                Ok(w.iter()
                    .zip(&back)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt())
            }
            VarietySpec::PolynomialGraph { n, d, components } => {
                if w.len() != *n {
                    return Err(Error::DimensionMismatch {
                        left: w.len(),
                        right: *n,
                    });
                }
                let param = &w[..*d];
                let mut acc = 0.0;
                for (j, f) in components.iter().enumerate() {
                    acc += (w[*d + j] - f.eval(param)).norm_sqr();
                }
                Ok(acc.sqrt())
            }
            VarietySpec::FinitePoints { .. } => Err(Error::InvalidParameter(
                "finite point sets have no graph equation".into(),
            )),
        }
    }
}

/// Isometric parameterization of an affine slice: `w(x) = center + radius * frame x`.
#[derive(Clone, Debug)]
pub struct SliceChart {
    pub center: Vec<Complex64>,
    pub radius: f64,
    pub frame: Vec<Vec<Complex64>>,
}

impl SliceChart {
    pub fn d(&self) -> usize {
        self.frame.len()
    }

    /// Ambient point of a parameter `x` in the unit d-ball.
    pub fn embed(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut w = self.center.clone();
        for (k, f) in self.frame.iter().enumerate() {
            for (wc, fc) in w.iter_mut().zip(f) {
                *wc += self.radius * x[k] * fc;
            }
        }
        w
    }

    /// Parameter of an ambient point (orthogonal coordinates on the slice).
    pub fn param_of(&self, w: &[Complex64]) -> Vec<Complex64> {
        let diff: Vec<Complex64> = w
            .iter()
            .zip(&self.center)
            .map(|(a, b)| a - b)
            .collect();
        self.frame
            .iter()
            .map(|f| inner(&diff, f) / self.radius)
            .collect()
    }
}

/// Kähler-induced volume density of a parameterized variety.
///
/// For a polynomial graph this is `det(I_d + J_F(w')^H J_F(w'))`, the ratio
/// of induced Riemannian 2d-volume to parameter Lebesgue measure; affine
/// slices are isometric, so the density is 1.
pub fn volume_density(v: &VarietySpec, param: &[Complex64]) -> Result<f64> {
    match v {
        VarietySpec::AffineSlice { .. } => Ok(1.0),
        VarietySpec::PolynomialGraph { d, components, .. } => {
            if param.len() != *d {
                return Err(Error::DimensionMismatch {
                    left: param.len(),
                    right: *d,
                });
            }
            let jac = graph_jacobian(components, *d, param);
            let identity = DMatrix::<Complex64>::identity(*d, *d);
            let m = identity + jac.adjoint() * &jac;
            let det = m.determinant();
            if !det.re.is_finite() {
                return Err(Error::InvalidParameter(
                    "non-finite Jacobian entries in volume density".into(),
                ));
            }
            Ok(det.re)
        }
        VarietySpec::FinitePoints { .. } => Err(Error::InvalidParameter(
            "finite point sets carry no volume density".into(),
        )),
    }
}

fn graph_jacobian(components: &[Poly], d: usize, param: &[Complex64]) -> DMatrix<Complex64> {
    let rows = components.len();
    let mut jac = DMatrix::zeros(rows, d);
    for (j, f) in components.iter().enumerate() {
        for k in 0..d {
            jac[(j, k)] = f.partial(k).eval(param);
        }
    }
    jac
}

/// The induced measure of a variety: quadrature nodes with their plain `v_d`
/// weights retained alongside the full `(1-|w|^2)^(n-d)`-weighted measure.
#[derive(Clone, Debug)]
pub struct VarietyMeasure {
    measure: MeasureSpec,
    nodes_vd: Vec<f64>,
    d: usize,
    inner_cutoff: f64,
    atom_points: Vec<BallPoint>,
    dropped_mass: f64,
}

impl VarietyMeasure {
    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn inner_cutoff(&self) -> f64 {
        self.inner_cutoff
    }

    pub fn atom_points(&self) -> &[BallPoint] {
        &self.atom_points
    }

    /// `v_d` mass dropped because graph nodes left the closed ball.
    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    /// Nodes with their plain `v_d` weights (no density exponent).
    pub fn nodes_vd(&self) -> impl Iterator<Item = (&BallPoint, f64)> {
        self.measure
            .nodes()
            .iter()
            .zip(&self.nodes_vd)
            .map(|((p, _), &vd)| (p, vd))
    }

    pub fn total_vd_mass(&self) -> f64 {
        self.nodes_vd.iter().sum()
    }
}

/// Builds the measure `(1-|w|^2)^(n-d) dv_d` restricted to
/// `s <= |w| < outer` plus the configured singular-point atoms with weights
/// `(1-|z_i|^2)^(n+1)`.
///
/// Graph nodes that land outside the closed ball (or past `outer`) are
/// dropped and their `v_d` mass is accumulated in `dropped_mass`.
pub fn variety_quadrature(
    v: &VarietySpec,
    s: f64,
    outer: f64,
    scheme: &QuadScheme,
    singular_points: &[BallPoint],
) -> Result<VarietyMeasure> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!(
            "inner cutoff must lie in [0,1), got {s}"
        )));
    }
    if !(s < outer && outer <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "outer cutoff must lie in ({s}, 1], got {outer}"
        )));
    }
    let n = v.ambient_dim();
    let atoms: Vec<(BallPoint, f64)> = match v {
        VarietySpec::FinitePoints { points } => points
            .iter()
            .chain(singular_points)
            .map(|p| {
                let w = (1.0 - p.norm_sq()).powi(n as i32 + 1);
                (p.clone(), w)
            })
            .collect(),
        _ => singular_points
            .iter()
            .map(|p| {
                let w = (1.0 - p.norm_sq()).powi(n as i32 + 1);
                (p.clone(), w)
            })
            .collect(),
    };

    if let VarietySpec::FinitePoints { .. } = v {
        let measure = MeasureSpec::new(atoms.clone(), Vec::new())?;
        return Ok(VarietyMeasure {
            measure,
            nodes_vd: Vec::new(),
            d: 0,
            inner_cutoff: s,
            atom_points: atoms.into_iter().map(|(p, _)| p).collect(),
            dropped_mass: 0.0,
        });
    }

    let d = v.d();
    let exponent = (n - d) as i32;
    let mut nodes = Vec::new();
    let mut nodes_vd = Vec::new();
    let mut dropped = 0.0f64;

    match v {
        VarietySpec::AffineSlice { .. } => {
            let chart = v.slice_chart()?;
            let c_sq = norm_sq(&chart.center);
            let r = chart.radius;
            // ambient |w|^2 = |center|^2 + r^2 |x|^2: cutoffs become a
            // parameter annulus
            let x_lo = ((s * s - c_sq).max(0.0) / (r * r)).sqrt().min(1.0);
            let x_hi = ((outer * outer - c_sq).max(0.0) / (r * r)).sqrt().min(1.0);
            if x_lo >= x_hi {
                return Err(Error::Empty("cutoffs leave no slice nodes"));
            }
            let rule = param_rule(d, x_lo, x_hi, scheme)?;
            let scale = r.powi(2 * d as i32);
            for (x, &q) in rule.nodes.iter().zip(&rule.weights) {
                let w = chart.embed(x);
                let w_sq = norm_sq(&w);
                if w_sq >= 1.0 - 1e-10 {
                    dropped += q * scale;
                    continue;
                }
                let point = BallPoint::new(w)?;
                let vd = q * scale;
                let weight = vd * (1.0 - w_sq).powi(exponent);
                nodes.push((point, weight));
                nodes_vd.push(vd);
            }
        }
        VarietySpec::PolynomialGraph { .. } => {
            let rule = param_rule(d, 0.0, 1.0, scheme)?;
            for (x, &q) in rule.nodes.iter().zip(&rule.weights) {
                let density = volume_density(v, x)?;
                let vd = q * density;
                let w = v.embed(x)?;
                let w_sq = norm_sq(&w);
                let radius = w_sq.sqrt();
                if w_sq >= 1.0 - 1e-10 || radius >= outer {
                    dropped += vd;
                    continue;
                }
                if radius < s {
                    continue;
                }
                let point = BallPoint::new(w)?;
                let weight = vd * (1.0 - w_sq).powi(exponent);
                nodes.push((point, weight));
                nodes_vd.push(vd);
            }
        }
        VarietySpec::FinitePoints { .. } => unreachable!(),
    }

    if nodes.is_empty() && atoms.is_empty() {
        return Err(Error::Empty("variety quadrature produced no support"));
    }
    let measure = MeasureSpec::new(atoms, nodes)?;
    Ok(VarietyMeasure {
        measure,
        nodes_vd,
        d,
        inner_cutoff: s,
        atom_points: singular_points.to_vec(),
        dropped_mass: dropped,
    })
}

fn param_rule(d: usize, x_lo: f64, x_hi: f64, scheme: &QuadScheme) -> Result<ComplexRule> {
    match *scheme {
        QuadScheme::Deterministic {
            radial_order,
            angular_order,
        } => {
            if x_lo == 0.0 && (x_hi - 1.0).abs() < 1e-15 {
                ball_rule(
                    d,
                    &QuadScheme::Deterministic {
                        radial_order,
                        angular_order,
                    },
                )
            } else {
                let sphere = sphere_rule(d, radial_order, &vec![angular_order; d])?;
                shell_rule(d, 0.0, x_lo, x_hi, radial_order, &sphere)
            }
        }
        QuadScheme::MonteCarlo { samples, seed } => {
            let full = crate::quadrature::ball_rule_mc(d, samples, seed);
            if x_lo == 0.0 && (x_hi - 1.0).abs() < 1e-15 {
                return Ok(full);
            }
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            for (node, w) in full.nodes.into_iter().zip(full.weights) {
                let r = norm_sq(&node).sqrt();
                if r >= x_lo && r < x_hi {
                    nodes.push(node);
                    weights.push(w);
                }
            }
            Ok(ComplexRule { n: d, nodes, weights })
        }
    }
}

/// Gram-Schmidt frame adapted to `z`: seeded with `z`, then standard basis
/// vectors chosen by largest residual (ties broken by index order).
pub fn adapted_frame(z: &[Complex64]) -> Result<DMatrix<Complex64>> {
    let n = z.len();
    let z_norm = norm_sq(z).sqrt();
    if z_norm < 1e-13 {
        return Err(Error::InvalidParameter(
            "adapted frame needs a nonzero base point".into(),
        ));
    }
    let mut built: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    built.push(DVector::from_column_slice(z).scale(1.0 / z_norm));
    let mut used = vec![false; n];
    while built.len() < n {
        // residual of each unused standard basis vector against the span
        let mut best: Option<(usize, f64, DVector<Complex64>)> = None;
        for (i, used_i) in used.iter().enumerate().take(n) {
            if *used_i {
                continue;
            }
            let mut e = DVector::<Complex64>::zeros(n);
            e[i] = Complex64::new(1.0, 0.0);
            for u in &built {
                let coeff = (u.adjoint() * &e)[(0, 0)];
                e -= u * coeff;
            }
            let res = e.norm();
            let better = match &best {
                None => true,
                Some((_, best_res, _)) => res > *best_res + 1e-15,
            };
            if better {
                best = Some((i, res, e));
            }
        }
        let (i, res, e) = best.expect("candidates remain");
        if res < 1e-10 {
            return Err(Error::InvalidParameter(
                "adapted frame degenerated; basis residuals vanished".into(),
            ));
        }
        used[i] = true;
        built.push(e.scale(1.0 / res));
    }
    let mut frame = DMatrix::zeros(n, n);
    for (k, u) in built.iter().enumerate() {
        frame.set_column(k, u);
    }
    Ok(frame)
}

/// Default flattening neighborhood radius `0.2 (1 - |z|)`.
pub fn default_flatten_delta(z: &BallPoint) -> f64 {
    0.2 * (1.0 - z.norm())
}

/// Tangent-flattening map `p_z(w)`: the point of the affine tangent plane at
/// `z` sharing the first d coordinates with `w` in the frame adapted to `z`.
///
/// In adapted coordinates where the variety is a graph with `F(z') = 0`, this
/// is `(w', dF(z')(w' - z'))`; it satisfies `p_z(w) - w ⊥ z` and
/// `|p_z(w) - w| = O(|w' - z'|^2)`.
pub fn tangent_flatten(
    v: &VarietySpec,
    z: &BallPoint,
    w: &BallPoint,
    delta: f64,
) -> Result<BallPoint> {
    let (n, d, components) = match v {
        VarietySpec::PolynomialGraph { n, d, components } => (*n, *d, components),
        VarietySpec::AffineSlice { .. } => {
            // slices are already flat
            v.slice_chart()?;
            return Ok(w.clone());
        }
        VarietySpec::FinitePoints { .. } => {
            return Err(Error::InvalidParameter(
                "tangent flattening needs a positive-dimensional variety".into(),
            ))
        }
    };
    for point in [z, w] {
        let residual = v.graph_residual(point.coords())?;
        if residual > 1e-10 {
            return Err(Error::NotOnVariety { residual });
        }
    }
    let z_param = &z.coords()[..d];
    let w_param = &w.coords()[..d];
    let dist: f64 = z_param
        .iter()
        .zip(w_param)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if dist > delta {
        return Err(Error::OutsideNeighborhood {
            dist,
            allowed: delta,
        });
    }
    // tangent directions at z in ambient coordinates
    let jac = graph_jacobian(components, d, z_param);
    let mut tangent = DMatrix::<Complex64>::zeros(n, d);
    for k in 0..d {
        tangent[(k, k)] = Complex64::new(1.0, 0.0);
        for j in 0..(n - d) {
            tangent[(d + j, k)] = jac[(j, k)];
        }
    }
    let frame = adapted_frame(z.coords())?;
    let u_d = frame.columns(0, d).into_owned();
    // solve (U_d^H A) c = U_d^H (w - z)
    let lhs = u_d.adjoint() * &tangent;
    let diff = DVector::from_iterator(
        n,
        w.coords().iter().zip(z.coords()).map(|(a, b)| a - b),
    );
    let rhs = u_d.adjoint() * diff;
    let c = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter(
            "tangent system is singular; transversality of the adapted chart failed".into(),
        ))?;
    let moved = &tangent * c;
    let coords: Vec<Complex64> = z
        .coords()
        .iter()
        .zip(moved.iter())
        .map(|(zc, mc)| zc + mc)
        .collect();
    BallPoint::new(coords)
}

/// Worst flattening defects over samples of `D(z, R) ∩ V`.
#[derive(Clone, Debug)]
pub struct FlatteningDefects {
    /// `max |(1-|p_z(w)|^2)/(1-|w|^2) - 1|`
    pub ratio_defect: f64,
    /// `max beta(p_z(w), w)`
    pub metric_defect: f64,
    /// samples whose image left the open ball
    pub escaped: usize,
    pub samples: usize,
}

/// Samples the trace of `D(z, R)` on the variety and measures how far the
/// tangent flattening is from an isometry there.
pub fn flattening_defects(
    v: &VarietySpec,
    z: &BallPoint,
    r: f64,
    rings: usize,
    per_ring: usize,
    seed: u64,
) -> Result<FlatteningDefects> {
    if let VarietySpec::AffineSlice { .. } = v {
        return Ok(FlatteningDefects {
            ratio_defect: 0.0,
            metric_defect: 0.0,
            escaped: 0,
            samples: 0,
        });
    }
    let d = v.d();
    if d == 0 {
        return Err(Error::InvalidParameter(
            "flattening defects need a positive-dimensional variety".into(),
        ));
    }
    let shape = hyperbolic_ball(z, r)?;
    let reach = shape.radius_parallel().max(shape.radius_perp());
    let z_param = z.coords()[..d].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratio_defect = 0.0f64;
    let mut metric_defect = 0.0f64;
    let mut escaped = 0usize;
    let mut samples = 0usize;
    for ring in 1..=rings {
        let radius = reach * ring as f64 / rings as f64;
        for k in 0..per_ring {
            let dir: Vec<Complex64> = if d == 1 {
                let th = 2.0 * std::f64::consts::PI * k as f64 / per_ring as f64;
                vec![Complex64::from_polar(1.0, th)]
            } else {
                let mut g: Vec<Complex64> = (0..d)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                let nrm = norm_sq(&g).sqrt().max(1e-12);
                for c in &mut g {
                    *c /= nrm;
                }
                g
            };
            let param: Vec<Complex64> = z_param
                .iter()
                .zip(&dir)
                .map(|(zp, dp)| zp + radius * dp)
                .collect();
            let ambient = v.embed(&param)?;
            if norm_sq(&ambient) >= 1.0 - 1e-12 {
                continue;
            }
            let w = BallPoint::new(ambient)?;
            match hyperbolic_distance(&w, z) {
                Ok(beta) if beta < r => {}
                _ => continue,
            }
            samples += 1;
            match tangent_flatten(v, z, &w, f64::INFINITY) {
                Ok(p) => {
                    let ratio = (1.0 - p.norm_sq()) / (1.0 - w.norm_sq());
                    ratio_defect = ratio_defect.max((ratio - 1.0).abs());
                    metric_defect = metric_defect.max(hyperbolic_distance(&p, &w)?);
                }
                Err(Error::OutsideBall { .. }) | Err(Error::BoundaryGuard { .. }) => {
                    escaped += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    if samples == 0 {
        return Err(Error::Empty("no samples landed in the hyperbolic ball"));
    }
    Ok(FlatteningDefects {
        ratio_defect,
        metric_defect,
        escaped,
        samples,
    })
}

/// Log-log slope of `|p_z(w) - w|` against the parameter offset along a fixed
/// direction; quadratic contact gives a slope near 2.
pub fn flattening_order_slope(
    v: &VarietySpec,
    z: &BallPoint,
    direction: &[Complex64],
    offsets: &[f64],
) -> Result<f64> {
    let d = v.d();
    if direction.len() != d {
        return Err(Error::DimensionMismatch {
            left: direction.len(),
            right: d,
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let z_param = z.coords()[..d].to_vec();
    for &h in offsets {
        let param: Vec<Complex64> = z_param
            .iter()
            .zip(direction)
            .map(|(zp, dp)| zp + h * dp)
            .collect();
        let w = BallPoint::new(v.embed(&param)?)?;
        let p = tangent_flatten(v, z, &w, f64::INFINITY)?;
        let dist: f64 = p
            .coords()
            .iter()
            .zip(w.coords())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if dist > 0.0 {
            xs.push(h.ln());
            ys.push(dist.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::Empty("not enough nonzero defects for a slope fit"));
    }
    Ok(linear_slope(&xs, &ys))
}

pub(crate) fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Both sides of the affine mean-value identity
/// `integral_(slice ∩ D(z,R)) f(w) (1-|w|^2)^(n-d) / (1-<z,w>)^(n+1) dv(w)
///  = r^-2 C_R f(z)`,
/// with `C_R = integral_(D_d(0,R)) (1-|w|^2)^(n-d) dnu(w)` and `r` the slice
/// radius. The domain `slice ∩ D(z,R)` is the hyperbolic ball of the slice
/// chart, an ellipsoid integrated exactly by an affinely mapped ball rule.
pub fn affine_mean_value_check(
    v: &VarietySpec,
    f: &Poly,
    z: &BallPoint,
    r_hyp: f64,
    order: usize,
) -> Result<(Complex64, Complex64)> {
    let chart = v.slice_chart()?;
    let n = v.ambient_dim();
    let d = chart.d();
    if f.dim() != n {
        return Err(Error::DimensionMismatch {
            left: f.dim(),
            right: n,
        });
    }
    // z must lie on the slice
    let xi = chart.param_of(z.coords());
    let back = chart.embed(&xi);
    let residual: f64 = z
        .coords()
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if residual > 1e-10 {
        return Err(Error::NotOnVariety { residual });
    }
    let exponent = (n - d) as i32;
    let rule = ball_rule(
        d,
        &QuadScheme::Deterministic {
            radial_order: order,
            angular_order: 2 * order + 1,
        },
    )?;

    // hyperbolic ball of the slice chart around xi
    let xi_point = BallPoint::new(xi.clone())?;
    let shape = hyperbolic_ball(&xi_point, r_hyp)?;
    let a = shape.radius_parallel();
    let b = shape.radius_perp();
    let jac = a * a * b.powi(2 * (d as i32 - 1));
    let one = Complex64::new(1.0, 0.0);
    let mut lhs = Complex64::new(0.0, 0.0);
    for (y, &q) in rule.nodes.iter().zip(&rule.weights) {
        // affine image of the unit ball: center + a <y,e>e + b (y - <y,e>e)
        let x: Vec<Complex64> = match shape.axis() {
            Some(axis) => {
                let along = inner(y, axis);
                shape
                    .center()
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| c + a * along * axis[i] + b * (y[i] - along * axis[i]))
                    .collect()
            }
            None => shape
                .center()
                .iter()
                .zip(y)
                .map(|(&c, &yi)| c + a * yi)
                .collect(),
        };
        let w = chart.embed(&x);
        let w_sq = norm_sq(&w);
        let kernel = (one - inner(z.coords(), &w)).powi(-(n as i32 + 1));
        lhs += q * f.eval(&w) * (1.0 - w_sq).powi(exponent) * kernel;
    }
    lhs *= jac * chart.radius.powi(2 * d as i32);

    // C_R over the centered hyperbolic ball (round of radius tanh R)
    let s_r = r_hyp.tanh();
    let mut c_r = 0.0f64;
    for (y, &q) in rule.nodes.iter().zip(&rule.weights) {
        let y_sq = norm_sq(y);
        c_r += q * (1.0 - s_r * s_r * y_sq).powi(exponent);
    }
    c_r *= s_r.powi(2 * d as i32);

    let rhs = f.eval(z.coords()) * (c_r / (chart.radius * chart.radius));
    Ok((lhs, rhs))
}
