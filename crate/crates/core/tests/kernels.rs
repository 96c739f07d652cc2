use approx::assert_relative_eq;
use mfgsim_core::kernels::{min_eigenvalue, riccati_rhs, solve_dare, solve_stein, spectral_norm};
use mfgsim_core::Matrix;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn matrix(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(lo..hi, n * n).prop_map(move |v| Matrix::from_row_slice(n, n, &v))
}

fn spd(n: usize) -> impl Strategy<Value = Matrix> {
    matrix(n, -1.0, 1.0).prop_map(move |l| &l * l.transpose() + Matrix::identity(n, n) * 0.1)
}

/// Rescales `m` to spectral norm `target`.
fn with_norm(m: Matrix, target: f64) -> Matrix {
    let s = m.clone().svd(false, false).singular_values.max();
    if s == 0.0 {
        m
    } else {
        m * (target / s)
    }
}

fn series(hc: &Matrix, q: &Matrix, l: &Matrix, terms: usize) -> Matrix {
    let mut acc = Matrix::zeros(q.nrows(), q.ncols());
    let mut term = q.clone();
    for _ in 0..terms {
        acc += &term;
        term = hc * term * l;
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dare_solution_is_a_symmetric_psd_fixed_point(
        (a, q) in (1usize..4).prop_flat_map(|n| (matrix(n, -1.2, 1.2), spd(n)))
    ) {
        let n = a.nrows();
        let b = Matrix::identity(n, n);
        let r = Matrix::identity(n, n);
        let (k, rep) = solve_dare(&a, &b, &q, &r, 1e-10, 100_000).unwrap();
        prop_assert!(rep.converged);
        prop_assert!((&k - k.transpose()).norm() == 0.0);
        prop_assert!(min_eigenvalue(&k) >= -1e-12);
        let rhs = riccati_rhs(&a, &b, &q, &r, &k).unwrap();
        prop_assert!((rhs - &k).norm() <= 1e-8);
    }

    #[test]
    fn dare_is_monotone_in_state_weight(a in matrix(2, -1.0, 1.0), q in spd(2), extra in spd(2)) {
        let b = Matrix::identity(2, 2);
        let r = Matrix::identity(2, 2);
        let (k1, _) = solve_dare(&a, &b, &q, &r, 1e-12, 100_000).unwrap();
        let (k2, _) = solve_dare(&a, &b, &(&q + &extra), &r, 1e-12, 100_000).unwrap();
        prop_assert!(min_eigenvalue(&(k2 - k1)) >= -1e-9);
    }

    #[test]
    fn stein_matches_truncated_series(
        n in 1usize..5,
        h in matrix(4, -1.0, 1.0),
        l in matrix(4, -1.0, 1.0),
        q in spd(4),
        hn in 0.05f64..0.9,
        ln in 0.05f64..1.0,
    ) {
        let hc = with_norm(h.view((0, 0), (n, n)).into_owned(), hn);
        let l = with_norm(l.view((0, 0), (n, n)).into_owned(), ln);
        let q = q.view((0, 0), (n, n)).into_owned();
        let m = solve_stein(&hc, &q, &l, 1e-13, 100_000).unwrap();
        let s = series(&hc, &q, &l, 400);
        prop_assert!((m - s).norm() <= 1e-8);
    }

    #[test]
    fn spectral_norm_matches_eigen_oracle(n in 1usize..5, m in matrix(4, -3.0, 3.0)) {
        let m = m.view((0, 0), (n, n)).into_owned();
        let oracle = SymmetricEigen::new(m.transpose() * &m).eigenvalues.max().max(0.0).sqrt();
        let got = spectral_norm(&m);
        prop_assert!((got - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }
}

#[test]
fn spectral_norm_of_rank_one_and_diagonal() {
    assert_relative_eq!(spectral_norm(&Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])), 2.0, epsilon = 1e-12);
    assert_relative_eq!(spectral_norm(&Matrix::from_diagonal_element(3, 3, -0.7)), 0.7, epsilon = 1e-12);
}
