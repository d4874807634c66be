//! Run configuration: a single schema-versioned JSON document describing one
//! experiment, its quadrature and grids, and the tolerances its verdicts are
//! judged against.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use bergmanlab_core::geometry::BallPoint;
use bergmanlab_core::quadrature::QuadScheme;
use bergmanlab_core::variety::{Poly, VarietySpec};

use crate::RunError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_seed() -> u64 {
    7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory for report.json and per-table CSV files.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Present only for `bergmanlab sweep`.
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// One of "degree", "inner-cutoff", "outer-cutoff", "seed".
    pub variable: String,
    pub values: Vec<f64>,
    /// Trend verdicts evaluated between consecutive sweep rows.
    #[serde(default)]
    pub trends: Vec<TrendConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendConfig {
    pub table: String,
    pub column: String,
    /// "monotone-decreasing" | "monotone-increasing" | "drift-below"
    pub kind: String,
    #[serde(default)]
    pub tolerance: f64,
}

/// Complex scalar as a `[re, im]` pair in JSON.
pub type C = [f64; 2];

pub fn to_complex(c: &C) -> Complex64 {
    Complex64::new(c[0], c[1])
}

pub fn to_point(coords: &[C]) -> Result<BallPoint, RunError> {
    BallPoint::new(coords.iter().map(to_complex).collect()).map_err(RunError::from)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub radial_order: usize,
    pub angular_order: usize,
}

impl QuadratureConfig {
    pub fn scheme(&self) -> QuadScheme {
        QuadScheme::Deterministic {
            radial_order: self.radial_order,
            angular_order: self.angular_order,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTermConfig {
    pub exponents: Vec<u32>,
    pub coeff: C,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum VarietyConfig {
    /// Axis-aligned slice through the origin spanned by the first d coordinates.
    Hyperplane { n: usize, d: usize },
    AffineSlice {
        basepoint: Vec<C>,
        frame: Vec<Vec<C>>,
    },
    PolynomialGraph {
        n: usize,
        d: usize,
        components: Vec<Vec<PolyTermConfig>>,
    },
    FinitePoints { points: Vec<Vec<C>> },
}

impl VarietyConfig {
    pub fn build(&self) -> Result<VarietySpec, RunError> {
        match self {
            VarietyConfig::Hyperplane { n, d } => Ok(VarietySpec::hyperplane(*n, *d)?),
            VarietyConfig::AffineSlice { basepoint, frame } => {
                Ok(VarietySpec::affine_slice(
                    basepoint.iter().map(to_complex).collect(),
                    frame
                        .iter()
                        .map(|f| f.iter().map(to_complex).collect())
                        .collect(),
                )?)
            }
            VarietyConfig::PolynomialGraph { n, d, components } => {
                let comps = components
                    .iter()
                    .map(|terms| {
                        Poly::new(
                            *d,
                            terms
                                .iter()
                                .map(|t| (t.exponents.clone(), to_complex(&t.coeff)))
                                .collect(),
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(VarietySpec::polynomial_graph(*n, *d, comps)?)
            }
            VarietyConfig::FinitePoints { points } => {
                let pts = points
                    .iter()
                    .map(|p| to_point(p))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(VarietySpec::FinitePoints { points: pts })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    /// Residuals of the automorphism identities on random triples.
    GeometryIdentities {
        n: usize,
        #[serde(default = "d1000")]
        samples: usize,
        #[serde(default = "d095")]
        max_norm: f64,
        #[serde(default = "d1em10")]
        tolerance: f64,
    },
    /// Hyperbolic-ball geometry: membership agreement and Monte-Carlo volume.
    BallGeometry {
        n: usize,
        #[serde(default = "d09")]
        center_norm: f64,
        #[serde(default = "done")]
        radius: f64,
        #[serde(default = "d10k")]
        membership_samples: usize,
        #[serde(default = "d1m")]
        volume_samples: usize,
        #[serde(default = "d001")]
        volume_rel_tol: f64,
    },
    /// Carleson diagnostics of a variety measure over boundary shells.
    Carleson {
        variety: VarietyConfig,
        quadrature: QuadratureConfig,
        #[serde(default = "dshells")]
        shell_ks: Vec<u32>,
        #[serde(default = "done")]
        ball_radius: f64,
        #[serde(default = "done")]
        tail_t: f64,
        #[serde(default = "dtail")]
        tail_radii: Vec<f64>,
        #[serde(default = "dtwo")]
        growth_limit: f64,
    },
    /// I_c and J_(c,t) boundary asymptotics over a shell grid.
    KernelAsymptotics {
        n: usize,
        #[serde(default = "dshellgrid")]
        shell_grid: Vec<f64>,
        #[serde(default = "d320")]
        radial_order: usize,
        #[serde(default = "d768")]
        angular_order: usize,
        #[serde(default = "d01")]
        drift_tol: f64,
        #[serde(default = "d10")]
        bounded_limit: f64,
    },
    /// T_rho against the exact monomial-pattern projection.
    HyperplaneIdentity {
        n: usize,
        d: usize,
        degree: u32,
        #[serde(default = "d1em6")]
        tolerance: f64,
    },
    /// G = G D G* feasibility: single-point exactness and the m = 2 floor.
    GramCriterion {
        #[serde(default)]
        points: Vec<Vec<C>>,
        #[serde(default)]
        floor: Option<f64>,
        #[serde(default = "d005")]
        floor_rel_tol: f64,
        #[serde(default = "d1em10")]
        single_tolerance: f64,
        #[serde(default = "d100")]
        single_samples: usize,
    },
    /// Spectrum of T_mu: gap ratio, kernel split, T^3 >= cT constant.
    Spectrum {
        n: usize,
        d: usize,
        degree: u32,
        #[serde(default)]
        variety: Option<VarietyConfig>,
        #[serde(default = "d1em6")]
        kernel_tol: f64,
        #[serde(default = "d1e4")]
        min_gap_ratio: f64,
        #[serde(default = "dtrue")]
        expect_projection: bool,
        #[serde(default = "d1em6")]
        projection_tol: f64,
        #[serde(default = "d09")]
        c_star_min: f64,
        #[serde(default = "done")]
        c_star_max: f64,
    },
    /// Tangent-flattening defects along a boundary-approaching sequence.
    Flattening {
        variety: VarietyConfig,
        #[serde(default = "dflatshells")]
        shells: Vec<f64>,
        #[serde(default = "done")]
        ball_radius: f64,
        #[serde(default = "d4")]
        rings: usize,
        #[serde(default = "d12")]
        per_ring: usize,
        #[serde(default = "dslopeoffsets")]
        slope_offsets: Vec<f64>,
        #[serde(default = "dsloperange")]
        slope_range: [f64; 2],
    },
    /// Affine mean-value identity and its r^-2 scaling.
    MeanValue {
        n: usize,
        d: usize,
        #[serde(default = "done")]
        ball_radius: f64,
        #[serde(default = "d40")]
        order: usize,
        #[serde(default = "d1em6")]
        rel_tol: f64,
        #[serde(default = "d1em4")]
        scaling_rel_tol: f64,
    },
    /// Schatten partial sums of the compressed-shift commutator across degrees.
    Commutators {
        n: usize,
        d: usize,
        degrees: Vec<u32>,
        #[serde(default = "dthree")]
        exponent: f64,
        #[serde(default = "d001")]
        drift_tol: f64,
        #[serde(default = "d1em8")]
        oracle_tol: f64,
    },
    /// Commutator-kernel majorant under boundary-shell refinement.
    SchattenKernel {
        n: usize,
        d: usize,
        #[serde(default = "dcutoffs")]
        cutoff_ks: Vec<u32>,
        #[serde(default = "dthree")]
        p_finite: f64,
        #[serde(default = "dtwo")]
        p_critical: f64,
        #[serde(default = "d300")]
        radial_order: usize,
        #[serde(default = "d17")]
        angular_order: usize,
        #[serde(default = "d002")]
        drift_tol: f64,
        #[serde(default = "d095")]
        r_squared_min: f64,
    },
    /// Restriction/extension identities and the extension-norm drift in D.
    ExtensionNorms {
        n: usize,
        d: usize,
        degrees: Vec<u32>,
        #[serde(default = "d005")]
        drift_tol: f64,
        #[serde(default = "d1em10")]
        adjoint_identity_tol: f64,
        #[serde(default = "d1em8")]
        idempotent_tol: f64,
        #[serde(default = "d1em6")]
        kernel_tol: f64,
        #[serde(default = "d1e4")]
        min_gap_ratio: f64,
    },
}

// serde default helpers
fn d1000() -> usize { 1000 }
fn d10k() -> usize { 10_000 }
fn d1m() -> usize { 1_000_000 }
fn d100() -> usize { 100 }
fn d320() -> usize { 320 }
fn d768() -> usize { 768 }
fn d300() -> usize { 300 }
fn d40() -> usize { 40 }
fn d17() -> usize { 17 }
fn d4() -> usize { 4 }
fn d12() -> usize { 12 }
fn d095() -> f64 { 0.95 }
fn d09() -> f64 { 0.9 }
fn done() -> f64 { 1.0 }
fn dtwo() -> f64 { 2.0 }
fn dthree() -> f64 { 3.0 }
fn d10() -> f64 { 10.0 }
fn d01() -> f64 { 0.1 }
fn d001() -> f64 { 0.01 }
fn d002() -> f64 { 0.02 }
fn d005() -> f64 { 0.05 }
fn d1em4() -> f64 { 1e-4 }
fn d1em6() -> f64 { 1e-6 }
fn d1em8() -> f64 { 1e-8 }
fn d1em10() -> f64 { 1e-10 }
fn d1e4() -> f64 { 1e4 }
fn dtrue() -> bool { true }
fn dshells() -> Vec<u32> { (1..=10).collect() }
fn dtail() -> Vec<f64> { vec![0.9, 0.95, 0.99] }
fn dcutoffs() -> Vec<u32> { (4..=12).collect() }
fn dflatshells() -> Vec<f64> { vec![0.5, 0.8, 0.95] }
fn dslopeoffsets() -> Vec<f64> { vec![0.08, 0.04, 0.02, 0.01, 0.005] }
fn dsloperange() -> [f64; 2] { [1.9, 2.1] }
fn dshellgrid() -> Vec<f64> {
    vec![
        0.9, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.965, 0.97, 0.975, 0.98, 0.985, 0.99,
    ]
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("cannot parse {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn experiment_name(&self) -> &'static str {
        match self.experiment {
            ExperimentConfig::GeometryIdentities { .. } => "geometry-identities",
            ExperimentConfig::BallGeometry { .. } => "ball-geometry",
            ExperimentConfig::Carleson { .. } => "carleson",
            ExperimentConfig::KernelAsymptotics { .. } => "kernel-asymptotics",
            ExperimentConfig::HyperplaneIdentity { .. } => "hyperplane-identity",
            ExperimentConfig::GramCriterion { .. } => "gram-criterion",
            ExperimentConfig::Spectrum { .. } => "spectrum",
            ExperimentConfig::Flattening { .. } => "flattening",
            ExperimentConfig::MeanValue { .. } => "mean-value",
            ExperimentConfig::Commutators { .. } => "commutators",
            ExperimentConfig::SchattenKernel { .. } => "schatten-kernel",
            ExperimentConfig::ExtensionNorms { .. } => "extension-norms",
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(RunError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(RunError::Config("sweep values must be nonempty".into()));
            }
            if !sweep.values.windows(2).all(|w| w[0] < w[1]) {
                return Err(RunError::Config(
                    "sweep values must be strictly increasing".into(),
                ));
            }
            match sweep.variable.as_str() {
                "degree" | "inner-cutoff" | "outer-cutoff" | "seed" => {}
                other => {
                    return Err(RunError::Config(format!(
                        "unknown sweep variable '{other}'"
                    )))
                }
            }
            for trend in &sweep.trends {
                match trend.kind.as_str() {
                    "monotone-decreasing" | "monotone-increasing" => {}
                    "drift-below" => {
                        if !(trend.tolerance > 0.0) {
                            return Err(RunError::Config(
                                "drift-below trends need a positive tolerance".into(),
                            ));
                        }
                    }
                    other => {
                        return Err(RunError::Config(format!("unknown trend kind '{other}'")))
                    }
                }
            }
        }
        let check_nd = |n: usize, d: usize| -> Result<(), RunError> {
            if d >= n || n == 0 {
                return Err(RunError::Config(format!(
                    "dimensions must satisfy 0 <= d < n, got d={d} n={n}"
                )));
            }
            Ok(())
        };
        let check_pos = |name: &str, value: f64| -> Result<(), RunError> {
            if !(value > 0.0) {
                return Err(RunError::Config(format!("{name} must be positive, got {value}")));
            }
            Ok(())
        };
        match &self.experiment {
            ExperimentConfig::GeometryIdentities { n, samples, max_norm, tolerance } => {
                if *n == 0 || *samples == 0 {
                    return Err(RunError::Config("n and samples must be positive".into()));
                }
                if !(0.0 < *max_norm && *max_norm < 1.0) {
                    return Err(RunError::Config("max_norm must lie in (0,1)".into()));
                }
                check_pos("tolerance", *tolerance)?;
            }
            ExperimentConfig::BallGeometry { n, center_norm, radius, volume_rel_tol, .. } => {
                if *n == 0 {
                    return Err(RunError::Config("n must be positive".into()));
                }
                if !(0.0..1.0).contains(center_norm) {
                    return Err(RunError::Config("center_norm must lie in [0,1)".into()));
                }
                check_pos("radius", *radius)?;
                check_pos("volume_rel_tol", *volume_rel_tol)?;
            }
            ExperimentConfig::Carleson { variety, quadrature, shell_ks, ball_radius, tail_t, tail_radii, growth_limit } => {
                variety.build()?;
                if quadrature.radial_order == 0 || quadrature.angular_order == 0 {
                    return Err(RunError::Config("quadrature orders must be positive".into()));
                }
                if shell_ks.is_empty() || tail_radii.is_empty() {
                    return Err(RunError::Config("shell_ks and tail_radii must be nonempty".into()));
                }
                if !tail_radii.windows(2).all(|w| w[0] < w[1]) {
                    return Err(RunError::Config("tail_radii must be strictly increasing".into()));
                }
                check_pos("ball_radius", *ball_radius)?;
                check_pos("tail_t", *tail_t)?;
                check_pos("growth_limit", *growth_limit)?;
            }
            ExperimentConfig::KernelAsymptotics { n, shell_grid, drift_tol, bounded_limit, radial_order, angular_order } => {
                if *n == 0 || *radial_order == 0 || *angular_order == 0 {
                    return Err(RunError::Config("orders and n must be positive".into()));
                }
                if shell_grid.len() < 2 || !shell_grid.windows(2).all(|w| w[0] < w[1]) {
                    return Err(RunError::Config("shell_grid must be increasing with >= 2 points".into()));
                }
                if !(shell_grid.iter().all(|t| (0.0..1.0).contains(t))) {
                    return Err(RunError::Config("shell_grid values must lie in [0,1)".into()));
                }
                check_pos("drift_tol", *drift_tol)?;
                check_pos("bounded_limit", *bounded_limit)?;
            }
            ExperimentConfig::HyperplaneIdentity { n, d, tolerance, .. } => {
                check_nd(*n, *d)?;
                if *d == 0 {
                    return Err(RunError::Config("hyperplane needs d >= 1".into()));
                }
                check_pos("tolerance", *tolerance)?;
            }
            ExperimentConfig::GramCriterion { points, floor_rel_tol, single_tolerance, .. } => {
                for p in points {
                    to_point(p)?;
                }
                check_pos("floor_rel_tol", *floor_rel_tol)?;
                check_pos("single_tolerance", *single_tolerance)?;
            }
            ExperimentConfig::Spectrum { n, d, variety, kernel_tol, min_gap_ratio, projection_tol, c_star_min, c_star_max, .. } => {
                check_nd(*n, *d)?;
                if let Some(v) = variety {
                    v.build()?;
                }
                check_pos("kernel_tol", *kernel_tol)?;
                check_pos("min_gap_ratio", *min_gap_ratio)?;
                check_pos("projection_tol", *projection_tol)?;
                if !(c_star_min <= c_star_max) {
                    return Err(RunError::Config("c_star range is empty".into()));
                }
            }
            ExperimentConfig::Flattening { variety, shells, ball_radius, rings, per_ring, slope_offsets, slope_range } => {
                variety.build()?;
                if shells.len() < 2 || !shells.windows(2).all(|w| w[0] < w[1]) {
                    return Err(RunError::Config("shells must be increasing with >= 2 entries".into()));
                }
                check_pos("ball_radius", *ball_radius)?;
                if *rings == 0 || *per_ring == 0 {
                    return Err(RunError::Config("rings and per_ring must be positive".into()));
                }
                if slope_offsets.len() < 2 {
                    return Err(RunError::Config("slope_offsets needs >= 2 entries".into()));
                }
                if !(slope_range[0] < slope_range[1]) {
                    return Err(RunError::Config("slope_range is empty".into()));
                }
            }
            ExperimentConfig::MeanValue { n, d, ball_radius, order, rel_tol, scaling_rel_tol } => {
                check_nd(*n, *d)?;
                if *d == 0 {
                    return Err(RunError::Config("mean value needs d >= 1".into()));
                }
                check_pos("ball_radius", *ball_radius)?;
                if *order == 0 {
                    return Err(RunError::Config("order must be positive".into()));
                }
                check_pos("rel_tol", *rel_tol)?;
                check_pos("scaling_rel_tol", *scaling_rel_tol)?;
            }
            ExperimentConfig::Commutators { n, d, degrees, exponent, drift_tol, oracle_tol } => {
                check_nd(*n, *d)?;
                if degrees.len() < 2 || !degrees.windows(2).all(|w| w[0] < w[1]) {
                    return Err(RunError::Config("degrees must be strictly increasing with >= 2 entries".into()));
                }
                check_pos("exponent", *exponent)?;
                check_pos("drift_tol", *drift_tol)?;
                check_pos("oracle_tol", *oracle_tol)?;
            }
            ExperimentConfig::SchattenKernel { n, d, cutoff_ks, p_finite, p_critical, radial_order, angular_order, drift_tol, r_squared_min } => {
                check_nd(*n, *d)?;
                if cutoff_ks.len() < 3 || !cutoff_ks.windows(2).all(|w| w[0] < w[1]) {
                    return Err(RunError::Config("cutoff_ks must be strictly increasing with >= 3 entries".into()));
                }
                check_pos("p_finite", *p_finite)?;
                check_pos("p_critical", *p_critical)?;
                if *radial_order == 0 || *angular_order == 0 {
                    return Err(RunError::Config("orders must be positive".into()));
                }
                check_pos("drift_tol", *drift_tol)?;
                check_pos("r_squared_min", *r_squared_min)?;
            }
            ExperimentConfig::ExtensionNorms { n, d, degrees, drift_tol, adjoint_identity_tol, idempotent_tol, kernel_tol, min_gap_ratio } => {
                check_nd(*n, *d)?;
                if degrees.len() < 2 || !degrees.windows(2).all(|w| w[0] < w[1]) {
                    return Err(RunError::Config("degrees must be strictly increasing with >= 2 entries".into()));
                }
                check_pos("drift_tol", *drift_tol)?;
                check_pos("adjoint_identity_tol", *adjoint_identity_tol)?;
                check_pos("idempotent_tol", *idempotent_tol)?;
                check_pos("kernel_tol", *kernel_tol)?;
                check_pos("min_gap_ratio", *min_gap_ratio)?;
            }
        }
        Ok(())
    }
}
