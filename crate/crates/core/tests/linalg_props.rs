use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twohop_ia::channel::complex_normal;
use twohop_ia::linalg::{self, CMatrix, CVector, LinalgError};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn to_na(m: &CMatrix) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    CMatrix::from_row_major(n, n, (0..n * n).map(|_| complex_normal(rng)).collect()).unwrap()
}

fn arb_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), n * n)
        .prop_map(move |v| CMatrix::from_row_major(n, n, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap())
}

fn arb_square() -> impl Strategy<Value = CMatrix> {
    (1usize..=4).prop_flat_map(arb_matrix)
}

proptest! {
    #[test]
    fn det_matches_nalgebra(m in arb_square()) {
        let ours = linalg::det(&m).unwrap();
        let theirs = to_na(&m).determinant();
        prop_assert!((ours - theirs).norm() <= 1e-9 * (1.0 + theirs.norm()));
    }

    #[test]
    fn singular_values_match_nalgebra(m in arb_square()) {
        let mut ours = linalg::singular_values(&m).unwrap();
        let mut theirs: Vec<f64> = to_na(&m).singular_values().iter().copied().collect();
        ours.sort_by(|a, b| b.total_cmp(a));
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + theirs[0]));
        }
    }

    #[test]
    fn condition_is_scale_invariant(m in arb_square(), re in 0.1f64..10.0, im in -10.0f64..10.0) {
        let k = linalg::condition_number(&m).unwrap();
        prop_assume!(k < 1e6);
        let scaled = linalg::condition_number(&m.scale(c(re, im))).unwrap();
        prop_assert!((scaled - k).abs() <= 1e-10 * k);
    }

    #[test]
    fn logdet_matches_log_abs_det(m in arb_square()) {
        let pd = m.matmul(&m.conj_transpose()).add(&CMatrix::identity(m.rows()));
        let ld = linalg::logdet_hermitian_psd(&pd).unwrap();
        let reference = linalg::det(&pd).unwrap().norm().ln();
        prop_assert!((ld - reference).abs() <= 1e-9 * (1.0 + reference.abs()));
    }

    #[test]
    fn cholesky_reconstructs(m in arb_square()) {
        let pd = m.matmul(&m.conj_transpose()).add(&CMatrix::identity(m.rows()));
        let l = linalg::cholesky(&pd).unwrap();
        let back = l.matmul(&l.conj_transpose());
        prop_assert!(back.add(&pd.scale(c(-1.0, 0.0))).max_abs() <= 1e-10 * pd.max_abs());
    }
}

#[test]
fn reference_examples() {
    assert_eq!(linalg::det(&CMatrix::identity(2)).unwrap(), c(1.0, 0.0));
    assert_eq!(linalg::det(&CMatrix::from_real_rows(&[[1.0, 2.0], [3.0, 4.0]])).unwrap(), c(-2.0, 0.0));
    let equal_rows = CMatrix::from_rows(&[[c(1.0, 2.0), c(0.5, -1.0), c(3.0, 0.0)]; 3]);
    assert_eq!(linalg::det(&equal_rows).unwrap().norm(), 0.0);

    let rhs = CVector::new(vec![c(7.0, 0.0), c(0.0, -3.0)]);
    assert_eq!(linalg::solve(&CMatrix::identity(2), &rhs).unwrap(), rhs);
    let x = linalg::solve(&CMatrix::from_real_rows(&[[1.0, 2.0], [3.0, 4.0]]), &CVector::from_real(&[1.0, 1.0])).unwrap();
    assert!(x.sub(&CVector::from_real(&[-1.0, 1.0])).norm() < 1e-14);
    assert!(matches!(
        linalg::solve(&CMatrix::from_real_rows(&[[1.0, 1.0], [1.0, 1.0]]), &rhs),
        Err(LinalgError::Singular { .. })
    ));

    assert_eq!(linalg::condition_number(&CMatrix::identity(3)).unwrap(), 1.0);
    let d = CMatrix::diag(&[c(10.0, 0.0), c(1.0, 0.0)]);
    assert!((linalg::condition_number(&d).unwrap() - 10.0).abs() < 1e-12);
    assert!(linalg::condition_number(&CMatrix::from_real_rows(&[[1.0, 1.0], [1.0, 1.0]])).unwrap().is_infinite());

    assert_eq!(linalg::logdet_hermitian_psd(&CMatrix::identity(4)).unwrap(), 0.0);
    let two = CMatrix::diag(&[c(2.0, 0.0), c(2.0, 0.0)]);
    assert!((linalg::logdet_hermitian_psd(&two).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-14);
    let m = CMatrix::from_real_rows(&[[2.0, 1.0], [1.0, 2.0]]);
    assert!((linalg::logdet_hermitian_psd(&m).unwrap() - 3f64.ln()).abs() < 1e-14);
}

#[test]
fn solve_residual_on_well_conditioned_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 10_000 {
        let n = if checked % 2 == 0 { 2 } else { 4 };
        let m = random(&mut rng, n);
        if linalg::condition_number(&m).unwrap() >= 1e6 {
            continue;
        }
        let rhs = CVector::new((0..n).map(|_| complex_normal(&mut rng)).collect());
        let x = linalg::solve(&m, &rhs).unwrap();
        let r = m.mul_vec(&x).sub(&rhs).norm();
        assert!(r <= 1e-8 * rhs.norm(), "residual {r}");
        assert!(r <= 1e-10 * (m.norm() * x.norm() + rhs.norm()));
        checked += 1;
    }
}

#[test]
fn det_is_multiplicative() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let a = random(&mut rng, 2);
        let b = random(&mut rng, 2);
        let lhs = linalg::det(&a.matmul(&b)).unwrap();
        let rhs = linalg::det(&a).unwrap() * linalg::det(&b).unwrap();
        assert!((lhs - rhs).norm() <= 1e-9 * rhs.norm().max(1e-300) + 1e-15);
    }
}

#[test]
fn dimension_and_definiteness_errors() {
    let rect = CMatrix::zeros(2, 3);
    assert!(matches!(linalg::det(&rect), Err(LinalgError::Dimension(_))));
    assert!(matches!(linalg::det(&CMatrix::identity(5)), Err(LinalgError::TooLarge(_))));
    let non_hermitian = CMatrix::from_real_rows(&[[2.0, 1.0], [0.0, 2.0]]);
    assert!(matches!(linalg::logdet_hermitian_psd(&non_hermitian), Err(LinalgError::Definiteness(_))));
    assert!(matches!(linalg::cholesky(&CMatrix::zeros(2, 2)), Err(LinalgError::Definiteness(_))));
}
