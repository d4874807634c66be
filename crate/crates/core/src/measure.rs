//! Finite positive measures on the ball and Carleson-measure diagnostics.
//!
//! A measure is stored as point atoms plus weighted quadrature nodes for an
//! absolutely continuous part. The four equivalent Carleson conditions are
//! exercised through computable surrogates: the Berezin-transform sup over a
//! grid, hyperbolic-ball mass ratios, and the norm of the Toeplitz matrix at
//! truncation. Sups over grids are lower bounds of the true sups and are
//! reported together with the grid that produced them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::MultiIndexBasis;
use crate::error::{Error, Result};
use crate::geometry::{hyperbolic_ball, hyperbolic_ball_volume, inner, BallPoint};
use crate::operator::{BasisTag, OperatorMatrix};
use crate::quadrature::{shell_rule, sphere_rule_reduced, ComplexRule};

/// A finite positive measure: atoms plus quadrature nodes.
#[derive(Clone, Debug)]
pub struct MeasureSpec {
    atoms: Vec<(BallPoint, f64)>,
    nodes: Vec<(BallPoint, f64)>,
    total_mass: f64,
}

impl MeasureSpec {
    pub fn new(atoms: Vec<(BallPoint, f64)>, nodes: Vec<(BallPoint, f64)>) -> Result<Self> {
        if atoms.is_empty() && nodes.is_empty() {
            return Err(Error::Empty("measure needs at least one atom or node"));
        }
        let dim = atoms
            .first()
            .map(|(p, _)| p.dim())
            .or_else(|| nodes.first().map(|(p, _)| p.dim()))
            .unwrap();
        for (p, w) in atoms.iter().chain(&nodes) {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: p.dim(),
                    right: dim,
                });
            }
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "measure weights must be positive and finite, got {w}"
                )));
            }
        }
        let total_mass = atoms.iter().chain(&nodes).map(|(_, w)| w).sum();
        Ok(Self {
            atoms,
            nodes,
            total_mass,
        })
    }

    pub fn from_rule(rule: &ComplexRule) -> Result<Self> {
        let nodes = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(coords, &w)| Ok((BallPoint::new(coords.clone())?, w)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(Vec::new(), nodes)
    }

    pub fn dim(&self) -> usize {
        self.atoms
            .first()
            .map(|(p, _)| p.dim())
            .or_else(|| self.nodes.first().map(|(p, _)| p.dim()))
            .unwrap_or(0)
    }

    pub fn atoms(&self) -> &[(BallPoint, f64)] {
        &self.atoms
    }

    pub fn nodes(&self) -> &[(BallPoint, f64)] {
        &self.nodes
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty() && self.nodes.is_empty()
    }

    pub fn support_len(&self) -> usize {
        self.atoms.len() + self.nodes.len()
    }

    /// Atoms first, then nodes; the order is part of the sample-space layout.
    pub fn support(&self) -> impl Iterator<Item = (&BallPoint, f64)> {
        self.atoms
            .iter()
            .chain(&self.nodes)
            .map(|(p, w)| (p, *w))
    }

    /// Same support with every weight scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Self::new(
            self.atoms
                .iter()
                .map(|(p, w)| (p.clone(), w * factor))
                .collect(),
            self.nodes
                .iter()
                .map(|(p, w)| (p.clone(), w * factor))
                .collect(),
        )
    }

    /// Scaled to unit total mass.
    pub fn normalized(&self) -> Result<Self> {
        self.scaled(1.0 / self.total_mass)
    }
}

/// One record of the measure interchange format (one JSON object per line).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureRecord {
    /// "atom" or "node"
    pub r#type: String,
    /// [re, im] pairs
    pub coords: Vec<[f64; 2]>,
    pub weight: f64,
}

impl MeasureSpec {
    pub fn to_records(&self) -> Vec<MeasureRecord> {
        let rec = |kind: &str, p: &BallPoint, w: f64| MeasureRecord {
            r#type: kind.to_string(),
            coords: p.coords().iter().map(|c| [c.re, c.im]).collect(),
            weight: w,
        };
        self.atoms
            .iter()
            .map(|(p, w)| rec("atom", p, *w))
            .chain(self.nodes.iter().map(|(p, w)| rec("node", p, *w)))
            .collect()
    }

    pub fn from_records(records: &[MeasureRecord]) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut nodes = Vec::new();
        for r in records {
            let point = BallPoint::new(
                r.coords
                    .iter()
                    .map(|&[re, im]| Complex64::new(re, im))
                    .collect(),
            )?;
            match r.r#type.as_str() {
                "atom" => atoms.push((point, r.weight)),
                "node" => nodes.push((point, r.weight)),
                other => {
                    return Err(Error::Parse(format!(
                        "measure record type must be atom|node, got {other}"
                    )))
                }
            }
        }
        Self::new(atoms, nodes)
    }

    /// Writes one JSON record per line.
    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::new();
        for r in self.to_records() {
            out.push_str(&serde_json::to_string(&r).map_err(|e| Error::Parse(e.to_string()))?);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<MeasureRecord>(l).map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_records(&records)
    }
}

/// Carleson diagnostics gathered for one measure.
#[derive(Clone, Debug)]
pub struct CarlesonReport {
    pub berezin_sup: f64,
    pub ratio_sup: f64,
    pub grid_description: String,
    pub toeplitz_norm: f64,
}

/// Runs the computable Carleson conditions against one grid: the Berezin sup
/// (condition 1), the hyperbolic-ball mass ratio at radius `r` (condition 3)
/// and the largest Toeplitz eigenvalue at the basis truncation (condition 4).
/// Grid sups are lower bounds of the true sups; the grid is recorded.
pub fn carleson_report(
    mu: &MeasureSpec,
    grid: &[BallPoint],
    r: f64,
    basis: &MultiIndexBasis,
    grid_description: &str,
) -> Result<CarlesonReport> {
    let berezin = berezin_sup(mu, grid)?;
    let ratio = ball_ratio_sup(mu, r, grid)?;
    let t = toeplitz_from_measure(mu, basis)?;
    let (eigs, _) = crate::operator::hermitian_eigen(&t.matrix);
    Ok(CarlesonReport {
        berezin_sup: berezin,
        ratio_sup: ratio,
        grid_description: grid_description.to_string(),
        toeplitz_norm: eigs.first().copied().unwrap_or(0.0).max(0.0),
    })
}

/// `max_z integral |k_z|^2 dmu` over the grid: the Berezin-transform sup,
/// condition (1) of the Carleson equivalences.
pub fn berezin_sup(mu: &MeasureSpec, grid: &[BallPoint]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Empty("berezin sup needs a nonempty grid"));
    }
    let n = mu.dim() as i32;
    let values: Vec<f64> = grid
        .par_iter()
        .map(|z| {
            let scale = (1.0 - z.norm_sq()).powi(n + 1);
            let mut acc = 0.0;
            for (w, weight) in mu.support() {
                let denom = (Complex64::new(1.0, 0.0) - inner(w.coords(), z.coords())).norm_sqr();
                acc += weight * scale / denom.powi(n + 1);
            }
            acc
        })
        .collect();
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// `max_z mu(D(z, r)) / v_n(D(z, r))` over the grid, membership tested with
/// the ellipsoid description; condition (3) at grid resolution.
pub fn ball_ratio_sup(mu: &MeasureSpec, r: f64, grid: &[BallPoint]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Empty("ball ratio sup needs a nonempty grid"));
    }
    let values: Vec<f64> = grid
        .par_iter()
        .map(|z| -> Result<f64> {
            let shape = hyperbolic_ball(z, r)?;
            let volume = hyperbolic_ball_volume(z, r)?;
            let mut mass = 0.0;
            for (w, weight) in mu.support() {
                if shape.quadratic_form(w.coords()) < 1.0 {
                    mass += weight;
                }
            }
            Ok(mass / volume)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// Toeplitz matrix of the measure on the given basis:
/// `(T_mu)_(alpha beta) = integral e_beta conj(e_alpha) dmu`.
///
/// Assembled entrywise by direct summation over the support; the identity
/// `R* R = T_mu` against [`crate::operator::restriction_matrix`] is a
/// nontrivial cross-check because the two routes round differently.
pub fn toeplitz_from_measure(mu: &MeasureSpec, basis: &MultiIndexBasis) -> Result<OperatorMatrix> {
    if mu.is_empty() {
        return Err(Error::Empty("toeplitz needs a nonempty measure"));
    }
    if mu.dim() != basis.n() {
        return Err(Error::DimensionMismatch {
            left: mu.dim(),
            right: basis.n(),
        });
    }
    let size = basis.len();
    // stream the support in fixed-size chunks: bounded memory for large node
    // sets, and a summation order independent of the thread count
    const CHUNK: usize = 2048;
    let support: Vec<(&BallPoint, f64)> = mu.support().collect();
    let mut rows: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); size]; size];
    for chunk in support.chunks(CHUNK) {
        let vals: Vec<(Vec<Complex64>, f64)> = chunk
            .iter()
            .map(|(p, w)| (basis.eval_orthonormal(p.coords()), *w))
            .collect();
        rows.par_iter_mut().enumerate().for_each(|(a, row)| {
            for (v, w) in &vals {
                let ea_conj = v[a].conj() * *w;
                // upper triangle only; mirrored below by Hermitian symmetry
                for b in a..size {
                    row[b] += ea_conj * v[b];
                }
            }
        });
    }
    let mut t = DMatrix::zeros(size, size);
    for a in 0..size {
        t[(a, a)] = Complex64::new(rows[a][a].re, 0.0);
        for b in (a + 1)..size {
            t[(a, b)] = rows[a][b];
            t[(b, a)] = rows[a][b].conj();
        }
    }
    let tag = BasisTag::Bergman {
        n: basis.n(),
        degree: basis.max_degree(),
    };
    OperatorMatrix::new(t, tag.clone(), tag)
}

/// Value of a kernel integral together with a double-precision health flag.
#[derive(Clone, Copy, Debug)]
pub struct KernelValue {
    pub value: f64,
    /// Set when the expected magnitude `(1-|z|^2)^-c` strains f64.
    pub precision_warning: bool,
}

/// `I_c(z) = integral_S |1 - <z, zeta>|^-(n+c) dsigma(zeta)`.
///
/// sigma is unitarily invariant, so the value depends on |z| alone; the
/// integrand is evaluated at the radial representative `|z| e_1`, for which
/// a phase-reduced sphere rule is exact.
pub fn eval_i_c(z: &BallPoint, c: f64, sphere: &ComplexRule) -> Result<KernelValue> {
    if sphere.n != z.dim() {
        return Err(Error::DimensionMismatch {
            left: sphere.n,
            right: z.dim(),
        });
    }
    let n = z.dim() as f64;
    let t = z.norm();
    let expo = -0.5 * (n + c);
    let value = sphere.integrate_real(|zeta| {
        let denom = (Complex64::new(1.0, 0.0) - t * zeta[0].conj()).norm_sqr();
        denom.powf(expo)
    });
    let scale = (1.0 - t * t).powf(-c.max(0.0));
    Ok(KernelValue {
        value,
        precision_warning: scale > 1e12,
    })
}

/// `J_(c,t)(z) = integral_B (1-|w|^2)^t |1 - <z, w>|^-(n+1+t+c) dv(w)`.
///
/// The rule must represent the weighted measure `(1-|w|^2)^t dv`
/// (see [`crate::quadrature::weighted_ball_rule`]); the `(1-|w|^2)^t` factor
/// is inside its weights.
pub fn eval_j_ct(z: &BallPoint, c: f64, t: f64, weighted_rule: &ComplexRule) -> Result<KernelValue> {
    if weighted_rule.n != z.dim() {
        return Err(Error::DimensionMismatch {
            left: weighted_rule.n,
            right: z.dim(),
        });
    }
    if t <= -1.0 {
        return Err(Error::InvalidParameter(format!(
            "J_(c,t) needs t > -1, got {t}"
        )));
    }
    let n = z.dim() as f64;
    let radius = z.norm();
    let expo = -0.5 * (n + 1.0 + t + c);
    let value = weighted_rule.integrate_real(|w| {
        let denom = (Complex64::new(1.0, 0.0) - radius * w[0].conj()).norm_sqr();
        denom.powf(expo)
    });
    let scale = (1.0 - radius * radius).powf(-c.max(0.0));
    Ok(KernelValue {
        value,
        precision_warning: scale > 1e12,
    })
}

/// `sup_z integral_(r<|w|<1) (1-|w|^2)^t |1-<z,w>|^-(d+1) dv_d(w)` over the grid.
///
/// The annulus is unitarily invariant, so each grid point is evaluated at its
/// radial representative with a phase-reduced shell rule.
pub fn tail_kernel_mass(
    t: f64,
    r: f64,
    grid: &[BallPoint],
    radial_order: usize,
    angular_order: usize,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Empty("tail kernel mass needs a grid"));
    }
    if !(0.0 < r && r < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "annulus inner radius must lie in (0,1), got {r}"
        )));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tail mass needs t > 0, got {t}"
        )));
    }
    let d = grid[0].dim();
    let sphere = sphere_rule_reduced(d, radial_order.clamp(2, 64), angular_order)?;
    let rule = shell_rule(d, t, r, 1.0, radial_order, &sphere)?;
    let expo = -0.5 * (d as f64 + 1.0);
    let mut sup = 0.0f64;
    for z in grid {
        if z.dim() != d {
            return Err(Error::DimensionMismatch {
                left: z.dim(),
                right: d,
            });
        }
        let radius = z.norm();
        let val = rule.integrate_real(|w| {
            let denom = (Complex64::new(1.0, 0.0) - radius * w[0].conj()).norm_sqr();
            denom.powf(expo)
        });
        sup = sup.max(val);
    }
    Ok(sup)
}

/// Off-diagonal kernel mass of a variety measure:
/// `integral_(M \ D(z, excl)) (1-|z|^2)^((n-d)/2) (1-|w|^2)^((n-d)/2)
///  |1-<z,w>|^-(n+1) dv_d(w)`,
/// computed over the measure's nodes outside the hyperbolic ball.
pub fn offdiag_kernel_mass(
    vm: &crate::variety::VarietyMeasure,
    z: &BallPoint,
    exclusion_r: f64,
) -> Result<f64> {
    if exclusion_r < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "exclusion radius must be nonnegative, got {exclusion_r}"
        )));
    }
    let n = z.dim() as f64;
    let d = vm.d() as f64;
    let half = 0.5 * (n - d);
    let shape = if exclusion_r > 0.0 {
        Some(hyperbolic_ball(z, exclusion_r)?)
    } else {
        None
    };
    let z_factor = (1.0 - z.norm_sq()).powf(half);
    let mut acc = 0.0;
    for (w, vd_w) in vm.nodes_vd() {
        if let Some(shape) = &shape {
            if shape.quadratic_form(w.coords()) < 1.0 {
                continue;
            }
        }
        let denom = (Complex64::new(1.0, 0.0) - inner(z.coords(), w.coords())).norm_sqr();
        acc += vd_w * z_factor * (1.0 - w.norm_sq()).powf(half)
            / denom.powf(0.5 * (n + 1.0));
    }
    Ok(acc)
}

/// Radial shells `1 - 2^-k` along a fixed direction, the standard grid for
/// boundary-approach scans.
pub fn shell_grid(direction: &[Complex64], ks: &[u32]) -> Result<Vec<BallPoint>> {
    let norm = crate::geometry::norm_sq(direction).sqrt();
    if norm == 0.0 {
        return Err(Error::Empty("shell grid needs a nonzero direction"));
    }
    ks.iter()
        .map(|&k| {
            let radius = 1.0 - 2f64.powi(-(k as i32));
            BallPoint::new(direction.iter().map(|&c| c * (radius / norm)).collect())
        })
        .collect()
}
