//! Identities tying restriction, Toeplitz, projection and extension together,
//! checked against independently assembled routes.

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use bergmanlab_core::basis::build_basis;
use bergmanlab_core::error::Error;
use bergmanlab_core::geometry::BallPoint;
use bergmanlab_core::measure::{toeplitz_from_measure, MeasureSpec};
use bergmanlab_core::operator::*;
use bergmanlab_core::quadrature::QuadScheme;
use bergmanlab_core::variety::{variety_quadrature, VarietySpec};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_measure(seed: u64, count: usize) -> MeasureSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..count)
        .map(|_| {
            let p = BallPoint::new(vec![
                c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
                c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
            ])
            .unwrap();
            (p, rng.gen_range(0.1..1.0))
        })
        .collect();
    MeasureSpec::new(Vec::new(), nodes).unwrap()
}

#[test]
fn restriction_adjoint_identity() {
    // R*R and the entrywise Toeplitz assembly agree to rounding
    let basis = build_basis(2, 5).unwrap();
    let mu = random_measure(1, 40);
    let r = restriction_matrix(&basis, &mu).unwrap();
    let t = toeplitz_from_measure(&mu, &basis).unwrap();
    let rr = r.adjoint().compose(&r).unwrap();
    let diff = rr.sub(&t).unwrap().max_abs();
    assert!(diff < 1e-10, "R*R vs T_mu defect {diff}");
}

#[test]
fn restriction_of_origin_atom_is_first_row() {
    let basis = build_basis(2, 4).unwrap();
    let mu = MeasureSpec::new(vec![(BallPoint::origin(2), 1.0)], Vec::new()).unwrap();
    let r = restriction_matrix(&basis, &mu).unwrap();
    assert_eq!(r.nrows(), 1);
    assert_abs_diff_eq!(r.matrix[(0, 0)].re, 1.0, epsilon = 1e-14);
    for j in 1..r.ncols() {
        assert!(r.matrix[(0, j)].norm() < 1e-15);
    }
}

#[test]
fn restriction_norm_matches_sampled_values() {
    let basis = build_basis(2, 4).unwrap();
    let mu = random_measure(2, 15);
    let r = restriction_matrix(&basis, &mu).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f: Vec<Complex64> = (0..basis.len())
        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let fv = DVector::from_column_slice(&f);
    let rf = &r.matrix * fv;
    let got: f64 = rf.iter().map(|x| x.norm_sqr()).sum();
    let expected: f64 = mu
        .support()
        .map(|(p, w)| w * basis.evaluate(&f, p).unwrap().norm_sqr())
        .sum();
    assert_abs_diff_eq!(got, expected, epsilon = 1e-10 * expected);
}

#[test]
fn spectral_projection_identity_and_rank_one() {
    let basis = build_basis(2, 3).unwrap();
    let size = basis.len();
    let tag = BasisTag::Bergman { n: 2, degree: 3 };
    let eye = OperatorMatrix::new(DMatrix::identity(size, size), tag.clone(), tag).unwrap();
    let proj = spectral_projection(&eye, 1e-6, 10.0).unwrap();
    assert!(proj.q.sub(&eye).unwrap().max_abs() < 1e-12);
    assert!(proj.p.max_abs() < 1e-12);
    assert_eq!(proj.report.kernel_dimension, Some(0));

    // a single kernel atom gives a rank-1 projector after normalization
    let a = BallPoint::from_real(&[0.4, 0.1]).unwrap();
    let weight = (1.0 - a.norm_sq()).powi(3);
    let mu = MeasureSpec::new(vec![(a, weight)], Vec::new()).unwrap();
    let t = toeplitz_from_measure(&mu, &build_basis(2, 6).unwrap()).unwrap();
    let proj = spectral_projection(&t, 1e-6, 10.0).unwrap();
    assert_eq!(proj.report.gap_location, Some(1));
    assert_eq!(proj.report.kernel_dimension, Some(t.nrows() - 1));
    // Q^2 = Q, Q* = Q, P + Q = I
    let q2 = proj.q.compose(&proj.q).unwrap();
    assert!(q2.sub(&proj.q).unwrap().max_abs() < 1e-10);
    assert!(proj.q.adjoint().sub(&proj.q).unwrap().max_abs() < 1e-12);
    let sum = OperatorMatrix::new(
        &proj.p.matrix + &proj.q.matrix,
        proj.q.domain.clone(),
        proj.q.codomain.clone(),
    )
    .unwrap();
    assert!(sum.sub(&proj.q.identity_like()).unwrap().max_abs() < 1e-12);
    // T vanishes on range(P)
    let tp = t.compose(&proj.p).unwrap();
    assert!(tp.operator_norm() <= 1e-6 * proj.report.values[0] * (1.0 + 1e-6));
}

#[test]
fn spectral_projection_detects_missing_gap() {
    let tag = BasisTag::Sample { len: 3 };
    let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[
        c(1.0, 0.0),
        c(2e-6, 0.0),
        c(0.5e-6, 0.0),
    ]));
    let t = OperatorMatrix::new(m, tag.clone(), tag).unwrap();
    match spectral_projection(&t, 1e-6, 10.0) {
        Err(Error::NoSpectralGap { ratio, .. }) => assert!(ratio < 10.0),
        other => panic!("expected NoSpectralGap, got {other:?}"),
    }
}

#[test]
fn extension_operator_rank_one_algebra() {
    let basis = build_basis(2, 5).unwrap();
    let a = BallPoint::from_real(&[0.3, 0.2]).unwrap();
    let mu = MeasureSpec::new(vec![(a, 0.7)], Vec::new()).unwrap();
    let t = toeplitz_from_measure(&mu, &basis).unwrap();
    let r = restriction_matrix(&basis, &mu).unwrap();
    let proj = spectral_projection(&t, 1e-6, 10.0).unwrap();
    let (e, norm) = extension_operator(&r, &proj.q, 1e-6).unwrap();
    // R E = identity on the 1-dimensional sample space
    let re = r.compose(&e).unwrap();
    assert_abs_diff_eq!(re.matrix[(0, 0)].re, 1.0, epsilon = 1e-10);
    assert!(norm > 0.0);
    // E R f = f for f in range Q
    let f = proj.q.matrix.column(0).into_owned();
    let er = e.compose(&r).unwrap();
    let diff = (&er.matrix * &f) - &f;
    assert!(diff.iter().map(|x| x.norm()).fold(0.0, f64::max) < 1e-9);
}

#[test]
fn extension_operator_detects_rank_collapse() {
    // quotient of the hyperplane has dimension D+1 = 7, but the measure sees
    // only 3 points: the restricted pseudoinverse must refuse
    let basis = build_basis(2, 6).unwrap();
    let v = VarietySpec::hyperplane(2, 1).unwrap();
    let vm = variety_quadrature(&v, 0.0, 1.0, &QuadScheme::for_degree(7), &[]).unwrap();
    let t = toeplitz_from_measure(vm.measure(), &basis).unwrap();
    let proj = spectral_projection(&t, 1e-6, 1e3).unwrap();
    let small = MeasureSpec::new(
        Vec::new(),
        vec![
            (BallPoint::from_real(&[0.1, 0.0]).unwrap(), 0.3),
            (BallPoint::from_real(&[0.4, 0.0]).unwrap(), 0.3),
            (BallPoint::from_real(&[0.7, 0.0]).unwrap(), 0.3),
        ],
    )
    .unwrap();
    let r_small = restriction_matrix(&basis, &small).unwrap();
    match extension_operator(&r_small, &proj.q, 1e-8) {
        Err(Error::IllConditionedRestriction { rank, expected }) => {
            assert!(rank < expected);
        }
        other => panic!("expected IllConditionedRestriction, got {other:?}"),
    }
}

#[test]
fn multiplier_weights_match_norm_recurrence() {
    let basis = build_basis(2, 5).unwrap();
    let tag = BasisTag::Bergman { n: 2, degree: 5 };
    let eye = OperatorMatrix::new(
        DMatrix::identity(basis.len(), basis.len()),
        tag.clone(),
        tag,
    )
    .unwrap();
    let s = compressed_multiplier(0, &eye, &basis).unwrap();
    for (a, alpha) in basis.indices().iter().enumerate() {
        let mut up = alpha.exponents().to_vec();
        up[0] += 1;
        if let Some(b) = basis.position(&up) {
            let expected = ((alpha.exponents()[0] as f64 + 1.0)
                / (2.0 + alpha.degree() as f64 + 1.0))
                .sqrt();
            assert_abs_diff_eq!(s.matrix[(b, a)].re, expected, epsilon = 1e-13);
        }
    }
}

#[test]
fn compressed_multiplier_applied_to_constants() {
    // S_i e_0 = coefficients of Q z_i
    let basis = build_basis(2, 4).unwrap();
    let v = VarietySpec::hyperplane(2, 1).unwrap();
    let vm = variety_quadrature(&v, 0.0, 1.0, &QuadScheme::for_degree(5), &[]).unwrap();
    let t = toeplitz_from_measure(vm.measure(), &basis).unwrap();
    let proj = spectral_projection(&t, 1e-6, 1e3).unwrap();
    let s = compressed_multiplier(0, &proj.q, &basis).unwrap();
    let mut e0 = DVector::<Complex64>::zeros(basis.len());
    e0[0] = c(1.0, 0.0);
    let got = &s.matrix * e0;
    let m = multiplier_matrix(0, &basis).unwrap();
    let mut z1 = DVector::<Complex64>::zeros(basis.len());
    z1[0] = c(1.0, 0.0);
    let expected = &proj.q.matrix * (&m.matrix * z1);
    let diff = (got - expected).iter().map(|x| x.norm()).fold(0.0, f64::max);
    assert!(diff < 1e-10);
}

#[test]
fn commutator_of_anything_with_itself_vanishes() {
    let basis = build_basis(2, 3).unwrap();
    let m = multiplier_matrix(0, &basis).unwrap();
    let comm = commutator(&m, &m).unwrap();
    assert!(comm.max_abs() < 1e-15);
}

#[test]
fn bergman_shift_commutator_oracle_n1() {
    // n = 1, Q = I: [S*, S] restricted below the top slice is diagonal with
    // entries w_k^2 - w_(k-1)^2, w_k^2 = (k+1)/(k+2)
    let d_max = 9u32;
    let basis = build_basis(1, d_max).unwrap();
    let tag = BasisTag::Bergman { n: 1, degree: d_max };
    let eye = OperatorMatrix::new(
        DMatrix::identity(basis.len(), basis.len()),
        tag.clone(),
        tag,
    )
    .unwrap();
    let s = compressed_multiplier(0, &eye, &basis).unwrap();
    let comm = commutator(&s.adjoint(), &s).unwrap();
    let small = comm.restrict_to_degree(d_max - 1).unwrap();
    let w_sq = |k: i64| -> f64 {
        if k < 0 {
            0.0
        } else {
            (k as f64 + 1.0) / (k as f64 + 2.0)
        }
    };
    for k in 0..small.nrows() {
        let expected = w_sq(k as i64) - w_sq(k as i64 - 1);
        assert!(expected > 0.0);
        assert_abs_diff_eq!(small.matrix[(k, k)].re, expected, epsilon = 1e-13);
        for j in 0..small.ncols() {
            if j != k {
                assert!(small.matrix[(k, j)].norm() < 1e-14);
            }
        }
    }
    // [A, A*] is Hermitian for any A
    assert!(commutator(&s, &s.adjoint()).unwrap().hermitian);
}

#[test]
fn schatten_sums_reference_values() {
    // rank-1 with singular value 2
    let tag = BasisTag::Sample { len: 3 };
    let mut m = DMatrix::<Complex64>::zeros(3, 3);
    m[(0, 1)] = c(2.0, 0.0);
    let a = OperatorMatrix::new(m, tag.clone(), tag.clone()).unwrap();
    let report = schatten_partial_sums(&a, &[1.0, 3.0]).unwrap();
    assert_abs_diff_eq!(report.schatten_partial_sums[0].1, 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(report.schatten_partial_sums[1].1, 8.0, epsilon = 1e-12);

    // diagonal sigma_k = 1/k^2 at p = 1 approaches pi^2/6
    let n = 400;
    let diag: Vec<Complex64> = (1..=n).map(|k| c(1.0 / (k as f64 * k as f64), 0.0)).collect();
    let m = DMatrix::from_diagonal(&DVector::from_column_slice(&diag));
    let tag = BasisTag::Sample { len: n };
    let a = OperatorMatrix::new(m, tag.clone(), tag).unwrap();
    let report = schatten_partial_sums(&a, &[1.0]).unwrap();
    let partial = report.schatten_partial_sums[0].1;
    let target = std::f64::consts::PI * std::f64::consts::PI / 6.0;
    // tail of sum 1/k^2 beyond n is < 1/n
    assert!((target - partial) < 1.0 / n as f64 + 1e-12);
    assert!(partial < target);
}

#[test]
fn sample_toeplitz_routes_agree() {
    let basis_degree = 14u32;
    let mu = random_measure(7, 12);
    // truncated-series route equals R R* exactly
    let basis = build_basis(2, basis_degree).unwrap();
    let r = restriction_matrix(&basis, &mu).unwrap();
    let rr = r.compose(&r.adjoint()).unwrap();
    let t_series = sample_toeplitz(&mu, &KernelForm::TruncatedSeries { degree: basis_degree }).unwrap();
    assert!(t_series.sub(&rr).unwrap().max_abs() < 1e-11);

    // closed form differs by the kernel tail sum_(k>D) binom(k+n,n) x^k
    let t_closed = sample_toeplitz(&mu, &KernelForm::Closed).unwrap();
    let mut x_max = 0.0f64;
    let mut w_max = 0.0f64;
    for (p, w) in mu.support() {
        w_max = w_max.max(w);
        for (q, _) in mu.support() {
            let ip = bergmanlab_core::geometry::inner(p.coords(), q.coords()).norm();
            x_max = x_max.max(ip);
        }
    }
    let mut tail = 0.0f64;
    let mut binom = 1.0f64;
    for k in 0..=basis_degree as i64 + 200 {
        // binom(k+2, 2) for n = 2
        binom = ((k + 1) * (k + 2)) as f64 / 2.0;
        if k > basis_degree as i64 {
            tail += binom * x_max.powi(k as i32);
        }
    }
    let _ = binom;
    let bound = w_max * tail + 1e-12;
    let diff = t_closed.sub(&t_series).unwrap().max_abs();
    assert!(
        diff <= bound,
        "closed-form vs series {diff} exceeded the tail bound {bound}"
    );
}

#[test]
fn schatten_kernel_integral_of_single_atom_vanishes() {
    let v = VarietySpec::FinitePoints {
        points: vec![BallPoint::from_real(&[0.4, 0.1]).unwrap()],
    };
    let vm = variety_quadrature(&v, 0.0, 1.0, &QuadScheme::for_degree(2), &[]).unwrap();
    for p in [1.0, 3.0, 5.0] {
        let (integral, bound) = schatten_kernel_integral(&vm, 0, p).unwrap();
        assert_eq!(integral, 0.0, "z = w only, the kernel difference vanishes");
        assert_eq!(bound, 0.0, "no quadrature nodes, no majorant mass");
    }
}

#[test]
fn sample_commutator_of_single_atom_vanishes() {
    let mu = MeasureSpec::new(
        vec![(BallPoint::from_real(&[0.3, 0.1]).unwrap(), 0.8)],
        Vec::new(),
    )
    .unwrap();
    let comm = sample_space_commutator(&mu, 0, &KernelForm::Closed).unwrap();
    assert!(comm.max_abs() < 1e-15);
}

#[test]
fn gram_criterion_single_point_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = loop {
            let candidate = vec![
                c(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)),
                c(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)),
            ];
            if bergmanlab_core::geometry::norm_sq(&candidate) < 0.81 {
                break BallPoint::new(candidate).unwrap();
            }
        };
        let (residual, diag) = gram_criterion(&[p]).unwrap();
        assert!(residual < 1e-10, "m = 1 residual {residual}");
        assert_abs_diff_eq!(diag[0], 1.0, epsilon = 1e-8);
    }
}

#[test]
fn gram_criterion_two_points_has_positive_floor() {
    let points = vec![
        BallPoint::origin(2),
        BallPoint::from_real(&[0.5, 0.0]).unwrap(),
    ];
    let (residual, _) = gram_criterion(&points).unwrap();
    // convex NNLS: the optimizer reaches the global interior optimum
    assert_abs_diff_eq!(residual, 0.2757317949994988, epsilon = 1e-6);
}

#[test]
fn gram_criterion_rejects_coincident_points() {
    let p = BallPoint::from_real(&[0.2, 0.2]).unwrap();
    assert!(matches!(
        gram_criterion(&[p.clone(), p]),
        Err(Error::CoincidentPoints { .. })
    ));
}

#[test]
fn cubed_bound_reference_values() {
    let tag = BasisTag::Sample { len: 3 };
    let proj = DMatrix::from_diagonal(&DVector::from_column_slice(&[
        c(1.0, 0.0),
        c(1.0, 0.0),
        c(0.0, 0.0),
    ]));
    let t = OperatorMatrix::new(proj, tag.clone(), tag.clone()).unwrap();
    assert_abs_diff_eq!(toeplitz_cubed_bound(&t, 1e-6, 10.0).unwrap(), 1.0, epsilon = 1e-12);

    let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[
        c(0.0, 0.0),
        c(0.5, 0.0),
        c(1.0, 0.0),
    ]));
    let t = OperatorMatrix::new(d, tag.clone(), tag).unwrap();
    assert_abs_diff_eq!(toeplitz_cubed_bound(&t, 1e-6, 10.0).unwrap(), 0.25, epsilon = 1e-12);
}

#[test]
fn cubed_bound_dominates_atomic_toeplitz() {
    // purely atomic measure: T^3 - c T is PSD with c from the spectrum
    let basis = build_basis(2, 6).unwrap();
    let atoms = vec![
        (BallPoint::from_real(&[0.2, 0.1]).unwrap(), 0.4),
        (BallPoint::from_real(&[-0.3, 0.4]).unwrap(), 0.7),
        (BallPoint::from_real(&[0.5, -0.2]).unwrap(), 0.2),
    ];
    let mu = MeasureSpec::new(atoms, Vec::new()).unwrap();
    let t = toeplitz_from_measure(&mu, &basis).unwrap();
    let c_star = toeplitz_cubed_bound(&t, 1e-6, 10.0).unwrap();
    let t3 = t.compose(&t).unwrap().compose(&t).unwrap();
    let gap = OperatorMatrix::new(
        &t3.matrix - &t.matrix * c(c_star, 0.0),
        t.domain.clone(),
        t.codomain.clone(),
    )
    .unwrap();
    let (eigs, _) = hermitian_eigen(&gap.matrix);
    let min = eigs.last().copied().unwrap();
    assert!(min > -1e-10, "T^3 - c T should be PSD, min eig {min}");
}

#[test]
fn matrix_file_roundtrip() {
    let basis = build_basis(2, 3).unwrap();
    let mu = random_measure(4, 6);
    let r = restriction_matrix(&basis, &mu).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.mtx");
    write_matrix(&path, &r).unwrap();
    let back = read_matrix(&path).unwrap();
    assert_eq!(back.domain, r.domain);
    assert_eq!(back.codomain, r.codomain);
    assert!(back.sub(&r).unwrap().max_abs() < 1e-15);
}

#[test]
fn tag_mismatch_is_rejected() {
    let basis = build_basis(2, 3).unwrap();
    let mu = random_measure(5, 6);
    let r = restriction_matrix(&basis, &mu).unwrap();
    // R R is not composable (bergman -> sample twice)
    assert!(matches!(r.compose(&r), Err(Error::TagMismatch(_))));
}
