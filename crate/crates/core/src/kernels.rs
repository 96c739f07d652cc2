//! Numeric primitives used by the equilibrium solver.
//!
//! All solvers here are plain fixed-point iterations. They are cheap at the
//! dimensions this crate targets (a handful of states per agent) and their
//! iterates have a direct interpretation, which makes the convergence
//! diagnostics easy to read.

use crate::{Error, Matrix, Result, Vector};

/// Outcome of an iterative solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Frobenius norm of `F(x) - x` at the returned iterate.
    pub residual: f64,
    pub converged: bool,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Extra iterations spent, once within tolerance, driving the residual
/// towards a floating-point fixed point.
pub(crate) const POLISH_ITER: usize = 64;

/// Continues a converged fixed-point iteration while the residual keeps
/// shrinking and returns the best iterate found.
pub(crate) fn polish<F>(mut x: Matrix, mut residual: f64, mut step: F) -> Result<(Matrix, f64)>
where
    F: FnMut(&Matrix) -> Result<Matrix>,
{
    for _ in 0..POLISH_ITER {
        if residual == 0.0 {
            break;
        }
        let next = step(&x)?;
        let after = step(&next)?;
        let r = (&after - &next).norm();
        if r >= residual {
            break;
        }
        x = next;
        residual = r;
    }
    Ok((x, residual))
}

/// Right-hand side of the discrete algebraic Riccati equation
/// `A'KA - A'KB (R + B'KB)^-1 B'KA + Q`.
pub fn riccati_rhs(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, k: &Matrix) -> Result<Matrix> {
    let bt_k = b.transpose() * k;
    let s = r + &bt_k * b;
    let chol = s.cholesky().ok_or(Error::Singular("R + B'KB"))?;
    let pi = chol.solve(&(&bt_k * a));
    let at_k = a.transpose() * k;
    Ok(&at_k * a - &at_k * b * pi + q)
}

/// Solves `K = A'KA - A'KBΠ + Q`, `Π = (R + B'KB)^-1 B'KA` by value
/// iteration from `K = Q`.
///
/// The returned `K` satisfies `‖RHS(K) - K‖_F <= tol` when the report says
/// converged; non-convergence is an error carrying the last residual.
pub fn solve_dare(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    tol: f64,
    max_iter: usize,
) -> Result<(Matrix, SolveReport)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols())
    {
        return Err(Error::Dimension(format!(
            "DARE operands A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let mut k = q.clone();
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let next = riccati_rhs(a, b, q, r, &k)?;
        residual = (&next - &k).norm();
        if residual <= tol {
            let (k, residual) = polish(k, residual, |k| riccati_rhs(a, b, q, r, k).map(|n| symmetrize(&n)))?;
            return Ok((
                k,
                SolveReport {
                    iterations: it,
                    residual,
                    converged: true,
                },
            ));
        }
        if !residual.is_finite() {
            break;
        }
        k = symmetrize(&next);
    }
    Err(Error::NotConverged {
        what: "Riccati iteration",
        iterations: max_iter,
        residual,
    })
}

/// Solves `M = Q + Hc·M·L` by the geometric-series iteration
/// `M⁰ = Q, Mⁿ⁺¹ = Q + Hc·Mⁿ·L`.
///
/// With `Hc = H'` the solution is `Σ_{j>=0} (H')^j Q L^j`. Requires
/// `‖Hc‖·‖L‖ < 1`; ten consecutive residual increases are reported as
/// divergence.
pub fn solve_stein(hc: &Matrix, q: &Matrix, l: &Matrix, tol: f64, max_iter: usize) -> Result<Matrix> {
    solve_stein_with_report(hc, q, l, tol, max_iter).map(|(m, _)| m)
}

pub fn solve_stein_with_report(
    hc: &Matrix,
    q: &Matrix,
    l: &Matrix,
    tol: f64,
    max_iter: usize,
) -> Result<(Matrix, SolveReport)> {
    let n = q.nrows();
    if hc.shape() != (n, n) || q.ncols() != n || l.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Stein operands Hc {:?}, Q {:?}, L {:?}",
            hc.shape(),
            q.shape(),
            l.shape()
        )));
    }
    let mut m = q.clone();
    let mut last = f64::INFINITY;
    let mut growing = 0usize;
    for it in 0..=max_iter {
        let next = q + hc * &m * l;
        let residual = (&next - &m).norm();
        if residual <= tol {
            let (m, residual) = polish(m, residual, |m| Ok(q + hc * m * l))?;
            return Ok((
                m,
                SolveReport {
                    iterations: it,
                    residual,
                    converged: true,
                },
            ));
        }
        if residual > last {
            growing += 1;
        } else {
            growing = 0;
        }
        if growing >= 10 || !residual.is_finite() {
            return Err(Error::Diverged {
                what: "Stein iteration",
                iterations: it,
                residual,
            });
        }
        last = residual;
        m = next;
    }
    Err(Error::NotConverged {
        what: "Stein iteration",
        iterations: max_iter,
        residual: last,
    })
}

/// Largest singular value, by power iteration on `MᵀM`.
///
/// The first start vector is the normalized all-ones vector; the canonical
/// basis vectors are tried as well so that a start orthogonal to the
/// dominant direction cannot hide it. Results are deterministic.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = m.transpose() * m;
    let n = g.nrows();
    if g.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    let ones = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    best = best.max(rayleigh_power(&g, ones));
    if n > 1 {
        for i in 0..n {
            let mut e = Vector::zeros(n);
            e[i] = 1.0;
            best = best.max(rayleigh_power(&g, e));
        }
    }
    best.max(0.0).sqrt()
}

const POWER_MAX_ITER: usize = 20_000;

fn rayleigh_power(g: &Matrix, mut v: Vector) -> f64 {
    let mut lambda = 0.0;
    let mut w = Vector::zeros(v.len());
    for _ in 0..POWER_MAX_ITER {
        w.gemv(1.0, g, &v, 0.0);
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v.copy_from(&w);
        v /= norm;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// `M^k` by repeated squaring.
pub fn matrix_power(m: &Matrix, mut k: u32) -> Matrix {
    let mut base = m.clone();
    let mut acc = Matrix::identity(m.nrows(), m.ncols());
    while k > 0 {
        if k & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        k >>= 1;
    }
    acc
}

/// Symmetric square root of a symmetric PSD matrix (negative eigenvalues
/// from rounding are clamped to zero).
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let eig = symmetrize(m).symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn dare_with_zero_dynamics_returns_q() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::from_row_slice(2, 1, &[1.0, 0.3]);
        let q = Matrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]);
        let r = s(0.7);
        let (k, rep) = solve_dare(&a, &b, &q, &r, 1e-12, 10).unwrap();
        assert_eq!(k, q);
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn dare_scalar_matches_quadratic_root() {
        // K² + 0.65K − 0.1 = 0
        let expected = (-0.65 + (0.65f64 * 0.65 + 0.4).sqrt()) / 2.0;
        let (k, rep) = solve_dare(&s(0.5), &s(1.0), &s(0.1), &s(1.0), 1e-12, 1000).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], expected, epsilon = 1e-10);
        assert_abs_diff_eq!(k[(0, 0)], 0.128459, epsilon = 1e-6);
        assert!(rep.residual <= 1e-12);
    }

    #[test]
    fn dare_block_diagonal_decouples() {
        let a = Matrix::identity(2, 2) * 0.5;
        let b = Matrix::identity(2, 2);
        let q = Matrix::identity(2, 2) * 0.1;
        let r = Matrix::identity(2, 2);
        let (k, _) = solve_dare(&a, &b, &q, &r, 1e-12, 1000).unwrap();
        let (ks, _) = solve_dare(&s(0.5), &s(1.0), &s(0.1), &s(1.0), 1e-12, 1000).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], ks[(0, 0)], epsilon = 1e-12);
        assert_abs_diff_eq!(k[(1, 1)], ks[(0, 0)], epsilon = 1e-12);
        assert_eq!(k[(0, 1)], 0.0);
    }

    #[test]
    fn dare_reports_non_convergence() {
        let err = solve_dare(&s(0.5), &s(1.0), &s(0.1), &s(1.0), 1e-15, 2).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }));
    }

    #[test]
    fn dare_rejects_mismatched_shapes() {
        let err = solve_dare(&s(0.5), &Matrix::zeros(2, 1), &s(0.1), &s(1.0), 1e-10, 10).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn stein_trivial_cases() {
        let q = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let h = Matrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.2]);
        assert_eq!(solve_stein(&h, &q, &Matrix::zeros(2, 2), 1e-12, 10).unwrap(), q);
        assert_eq!(solve_stein(&Matrix::zeros(2, 2), &q, &h, 1e-12, 10).unwrap(), q);
    }

    #[test]
    fn stein_scalar_geometric_series() {
        let (h, l, q) = (0.443080, 0.5, 0.1);
        let m = solve_stein(&s(h), &s(q), &s(l), 1e-14, 1000).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], q / (1.0 - h * l), epsilon = 1e-12);
    }

    #[test]
    fn stein_detects_divergence() {
        let err = solve_stein(&s(1.5), &s(1.0), &s(1.0), 1e-12, 1000).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn spectral_norm_examples() {
        assert_abs_diff_eq!(spectral_norm(&Matrix::identity(3, 3)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spectral_norm(&s(-0.443080)), 0.443080, epsilon = 1e-15);
        let m = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 0.0]);
        assert_abs_diff_eq!(spectral_norm(&m), 5.0, epsilon = 1e-12);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn spectral_norm_start_orthogonal_to_top_direction() {
        // MᵀM = [[2,-1],[-1,2]] has the all-ones vector as its *small* eigenvector.
        let g = Matrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let m = psd_sqrt(&g);
        assert_abs_diff_eq!(spectral_norm(&m), 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn matrix_power_matches_repeated_product() {
        let m = Matrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let p = matrix_power(&m, 5);
        let q = &m * &m * &m * &m * &m;
        assert_abs_diff_eq!((p - q).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(matrix_power(&m, 0), Matrix::identity(2, 2));
    }
}
