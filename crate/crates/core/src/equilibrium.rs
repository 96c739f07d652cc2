//! Mean-field equilibrium.
//!
//! For each type the tracking controller is `U = -ΠY - Γg⁺` with `K` the
//! Riccati solution, `Γ = (R + B'KB)⁻¹B'`, `Π = ΓKA` and closed-loop matrix
//! `H = A - BΠ`. The equilibrium mean field evolves linearly,
//! `X̄*_{k+1} = L*·X̄*_k`, where `L*` is the fixed point of
//!
//! ```text
//! T̄(L) = Σ_φ P(φ) [H + BΓ·M̃_L·L],   M̃_L = Q + H'·M̃_L·L
//! ```
//!
//! and the feed-forward term is `g_k = -M̃(φ)·X̄*_k` with `M̃` solved
//! against `L*`. The fixed point is unique when
//! `Ξ(φ) = ‖H(φ)‖ + ζ < 1` for every type, with
//! `ζ = Σ_φ ‖Q‖‖BΓ‖ / (1 - ‖H‖)² · P(φ)`.

use serde::{Deserialize, Serialize};

use crate::config::{canonical_json, MatrixDoc};
use crate::kernels::{solve_dare, solve_stein, spectral_norm, SolveReport};
use crate::model::{check_structural_assumptions, AgentTypeParams, SolverParams, TypeDistribution};
use crate::{Error, Matrix, Result, Vector};

/// Feedback part of the per-type gains.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackGains {
    pub k: Matrix,
    pub gamma: Matrix,
    pub pi: Matrix,
    pub h: Matrix,
    pub report: SolveReport,
}

/// Full per-type gains, including the feed-forward matrix `M̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeGains {
    pub k: Matrix,
    pub gamma: Matrix,
    pub pi: Matrix,
    pub h: Matrix,
    pub mtilde: Matrix,
}

impl TypeGains {
    pub fn from_feedback(f: &FeedbackGains, mtilde: Matrix) -> Self {
        Self {
            k: f.k.clone(),
            gamma: f.gamma.clone(),
            pi: f.pi.clone(),
            h: f.h.clone(),
            mtilde,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionDiagnostics {
    pub zeta: f64,
    pub xi_per_type: Vec<f64>,
    pub pass: bool,
}

impl ContractionDiagnostics {
    pub fn max_xi(&self) -> f64 {
        self.xi_per_type.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumSolution {
    pub gains: Vec<TypeGains>,
    pub lstar: Matrix,
    pub xbar0: Vector,
    pub diagnostics: ContractionDiagnostics,
    pub report: SolveReport,
    /// False when the solve was forced past a failed contraction check.
    pub guaranteed: bool,
}

/// Riccati solution and derived feedback gains for one type.
pub fn compute_gains(t: &AgentTypeParams, tol: f64, max_iter: usize) -> Result<FeedbackGains> {
    let (k, report) = solve_dare(&t.a, &t.b, &t.q, &t.r, tol, max_iter)?;
    let s = &t.r + t.b.transpose() * &k * &t.b;
    let gamma = s
        .cholesky()
        .ok_or(Error::Singular("R + B'KB"))?
        .solve(&t.b.transpose());
    let pi = &gamma * &k * &t.a;
    let h = &t.a - &t.b * &pi;
    Ok(FeedbackGains {
        k,
        gamma,
        pi,
        h,
        report,
    })
}

/// `‖K - (A'KA - A'KBΠ + Q)‖_F` for a solved type.
pub fn riccati_residual(t: &AgentTypeParams, g: &FeedbackGains) -> f64 {
    let rhs = t.a.transpose() * &g.k * &t.a - t.a.transpose() * &g.k * &t.b * &g.pi + &t.q;
    (&g.k - rhs).norm()
}

pub fn contraction_diagnostics(gains: &[FeedbackGains], d: &TypeDistribution) -> ContractionDiagnostics {
    let h_norms: Vec<f64> = gains.iter().map(|g| spectral_norm(&g.h)).collect();
    let zeta = d
        .iter()
        .zip(gains)
        .zip(&h_norms)
        .map(|(((t, p), g), &hn)| {
            let q_norm = spectral_norm(&t.q);
            if q_norm == 0.0 || p == 0.0 {
                return 0.0;
            }
            if hn >= 1.0 {
                return f64::INFINITY;
            }
            q_norm * spectral_norm(&(&t.b * &g.gamma)) / ((1.0 - hn) * (1.0 - hn)) * p
        })
        .sum::<f64>();
    let xi_per_type: Vec<f64> = h_norms.iter().map(|hn| hn + zeta).collect();
    let pass = xi_per_type.iter().all(|&xi| xi < 1.0);
    ContractionDiagnostics {
        zeta,
        xi_per_type,
        pass,
    }
}

fn inner_tol(tol: f64) -> f64 {
    tol * 1e-2
}

/// Feed-forward matrix `M̃_L` solving `M̃ = Q + H'·M̃·L`.
pub fn feedforward_matrix(t: &AgentTypeParams, g: &FeedbackGains, l: &Matrix, tol: f64, max_iter: usize) -> Result<Matrix> {
    solve_stein(&g.h.transpose(), &t.q, l, tol, max_iter)
}

/// One application of the mean-field law operator `T̄`.
pub fn tbar_apply(
    l: &Matrix,
    gains: &[FeedbackGains],
    d: &TypeDistribution,
    tol: f64,
    max_iter: usize,
) -> Result<Matrix> {
    let n = d.state_dim();
    if l.shape() != (n, n) || gains.len() != d.len() {
        return Err(Error::Dimension(format!(
            "L is {:?} with {} gain sets for {} types of dimension {n}",
            l.shape(),
            gains.len(),
            d.len()
        )));
    }
    let mut out = Matrix::zeros(n, n);
    for ((t, p), g) in d.iter().zip(gains) {
        let m = feedforward_matrix(t, g, l, inner_tol(tol), max_iter)?;
        out += (&g.h + &t.b * &g.gamma * m * l) * p;
    }
    Ok(out)
}

/// Fixed-point iteration for `L*` from `L⁰ = Σ_φ H(φ)P(φ)`.
///
/// Refuses to run when the contraction check fails unless `force` is set.
pub fn solve_mf_law(
    gains: &[FeedbackGains],
    d: &TypeDistribution,
    tol: f64,
    max_iter: usize,
    force: bool,
) -> Result<(Matrix, SolveReport)> {
    let diag = contraction_diagnostics(gains, d);
    if !diag.pass && !force {
        return Err(Error::ContractionViolated { xi: diag.max_xi() });
    }
    let n = d.state_dim();
    let mut l = d
        .iter()
        .zip(gains)
        .fold(Matrix::zeros(n, n), |acc, ((_, p), g)| acc + &g.h * p);
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let next = tbar_apply(&l, gains, d, tol, max_iter)?;
        residual = (&next - &l).norm();
        if residual <= tol {
            let (l, residual) = crate::kernels::polish(l, residual, |l| tbar_apply(l, gains, d, tol, max_iter))?;
            return Ok((
                l,
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
        l = next;
    }
    Err(Error::NotConverged {
        what: "mean-field law iteration",
        iterations: max_iter,
        residual,
    })
}

/// Full equilibrium: structural checks, gains, contraction diagnostics,
/// `L*`, and the feed-forward matrices.
pub fn solve_equilibrium(d: &TypeDistribution, solver: &SolverParams, force: bool) -> Result<EquilibriumSolution> {
    for (i, t) in d.types().iter().enumerate() {
        check_structural_assumptions(t).into_result(i)?;
    }
    let feedback = d
        .types()
        .iter()
        .map(|t| compute_gains(t, solver.tol, solver.max_iter))
        .collect::<Result<Vec<_>>>()?;
    let diagnostics = contraction_diagnostics(&feedback, d);
    let (lstar, report) = solve_mf_law(&feedback, d, solver.tol, solver.max_iter, force)?;
    let gains = d
        .iter()
        .zip(&feedback)
        .map(|((t, _), f)| {
            let m = feedforward_matrix(t, f, &lstar, inner_tol(solver.tol), solver.max_iter)?;
            Ok(TypeGains::from_feedback(f, m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumSolution {
        gains,
        lstar,
        xbar0: d.mean_initial_state(),
        guaranteed: diagnostics.pass,
        diagnostics,
        report,
    })
}

/// `X̄*_0 .. X̄*_T`, computed recursively.
pub fn mf_trajectory(sol: &EquilibriumSolution, horizon: usize) -> Vec<Vector> {
    let mut out = Vec::with_capacity(horizon + 1);
    let mut x = sol.xbar0.clone();
    for _ in 0..horizon {
        let next = &sol.lstar * &x;
        out.push(std::mem::replace(&mut x, next));
    }
    out.push(x);
    out
}

/// `g_0 .. g_T` for one type: `g_k = -M̃·X̄*_k`.
pub fn feedforward(sol: &EquilibriumSolution, type_index: usize, horizon: usize) -> Vec<Vector> {
    let m = &sol.gains[type_index].mtilde;
    mf_trajectory(sol, horizon).iter().map(|x| -(m * x)).collect()
}

/// `U = -Π·Y - Γ·g_next`.
pub fn control_policy(gains: &TypeGains, y: &Vector, g_next: &Vector) -> Vector {
    -(&gains.pi * y) - &gains.gamma * g_next
}

/// Largest recursion residual `‖g_k - H'g_{k+1} + Q·X̄*_k‖` over `k < T`.
pub fn g_recursion_residual(sol: &EquilibriumSolution, d: &TypeDistribution, type_index: usize, horizon: usize) -> f64 {
    let g = feedforward(sol, type_index, horizon);
    let xbar = mf_trajectory(sol, horizon);
    let h_t = sol.gains[type_index].h.transpose();
    let q = &d.types()[type_index].q;
    (0..horizon)
        .map(|k| (&g[k] - &h_t * &g[k + 1] + q * &xbar[k]).norm())
        .fold(0.0, f64::max)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsDoc {
    #[serde(rename = "K")]
    k: MatrixDoc,
    #[serde(rename = "Gamma")]
    gamma: MatrixDoc,
    #[serde(rename = "Pi")]
    pi: MatrixDoc,
    #[serde(rename = "H")]
    h: MatrixDoc,
    #[serde(rename = "Mtilde")]
    mtilde: MatrixDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnosticsDoc {
    zeta: f64,
    xi_per_type: Vec<f64>,
    pass: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportDoc {
    iterations: usize,
    residual: f64,
    converged: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionDoc {
    gains: Vec<GainsDoc>,
    #[serde(rename = "Lstar")]
    lstar: MatrixDoc,
    xbar0: Vec<f64>,
    diagnostics: DiagnosticsDoc,
    report: ReportDoc,
    guaranteed: bool,
}

impl EquilibriumSolution {
    /// Canonical text form (same conventions as config documents).
    pub fn to_canonical(&self) -> String {
        let doc = SolutionDoc {
            gains: self
                .gains
                .iter()
                .map(|g| GainsDoc {
                    k: MatrixDoc::from_matrix(&g.k),
                    gamma: MatrixDoc::from_matrix(&g.gamma),
                    pi: MatrixDoc::from_matrix(&g.pi),
                    h: MatrixDoc::from_matrix(&g.h),
                    mtilde: MatrixDoc::from_matrix(&g.mtilde),
                })
                .collect(),
            lstar: MatrixDoc::from_matrix(&self.lstar),
            xbar0: self.xbar0.iter().copied().collect(),
            diagnostics: DiagnosticsDoc {
                zeta: self.diagnostics.zeta,
                xi_per_type: self.diagnostics.xi_per_type.clone(),
                pass: self.diagnostics.pass,
            },
            report: ReportDoc {
                iterations: self.report.iterations,
                residual: self.report.residual,
                converged: self.report.converged,
            },
            guaranteed: self.guaranteed,
        };
        canonical_json(&serde_json::to_value(doc).expect("plain data"))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: SolutionDoc = serde_json::from_str(text)?;
        let gains = doc
            .gains
            .iter()
            .map(|g| {
                Ok(TypeGains {
                    k: g.k.to_matrix("K")?,
                    gamma: g.gamma.to_matrix("Gamma")?,
                    pi: g.pi.to_matrix("Pi")?,
                    h: g.h.to_matrix("H")?,
                    mtilde: g.mtilde.to_matrix("Mtilde")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gains,
            lstar: doc.lstar.to_matrix("Lstar")?,
            xbar0: Vector::from_vec(doc.xbar0),
            diagnostics: ContractionDiagnostics {
                zeta: doc.diagnostics.zeta,
                xi_per_type: doc.diagnostics.xi_per_type,
                pass: doc.diagnostics.pass,
            },
            report: SolveReport {
                iterations: doc.report.iterations,
                residual: doc.report.residual,
                converged: doc.report.converged,
            },
            guaranteed: doc.guaranteed,
        })
    }

    /// Checks that this solution fits a type distribution.
    pub fn check_compatible(&self, d: &TypeDistribution) -> Result<()> {
        let (n, m) = (d.state_dim(), d.input_dim());
        let ok = self.gains.len() == d.len()
            && self.lstar.shape() == (n, n)
            && self.xbar0.len() == n
            && self.gains.iter().all(|g| {
                g.k.shape() == (n, n)
                    && g.gamma.shape() == (m, n)
                    && g.pi.shape() == (m, n)
                    && g.h.shape() == (n, n)
                    && g.mtilde.shape() == (n, n)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "equilibrium ({} types, L* {:?}) does not match config ({} types, n={n}, m={m})",
                self.gains.len(),
                self.lstar.shape(),
                d.len()
            )))
        }
    }
}

/// Largest contraction ratio observed for `T̄` on a pair of laws, useful for
/// diagnostics: `‖T̄(L₂) - T̄(L₁)‖ / ‖L₂ - L₁‖`.
pub fn tbar_lipschitz_ratio(
    l1: &Matrix,
    l2: &Matrix,
    gains: &[FeedbackGains],
    d: &TypeDistribution,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let t1 = tbar_apply(l1, gains, d, tol, max_iter)?;
    let t2 = tbar_apply(l2, gains, d, tol, max_iter)?;
    Ok(spectral_norm(&(t2 - t1)) / spectral_norm(&(l2 - l1)))
}
