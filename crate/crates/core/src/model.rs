//! Static game data: agent types, their distribution, noise, scheduler and
//! simulation parameters.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::kernels::{min_eigenvalue, psd_sqrt};
use crate::rng::{substream, StreamKind};
use crate::{Error, Matrix, Result, Vector};

/// Dynamics and cost of one agent type: `X⁺ = AX + BU + W`, stage cost
/// `‖X - X̄‖²_Q + ‖U‖²_R`, initial mean `nu0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentTypeParams {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub nu0: Vector,
}

impl AgentTypeParams {
    pub fn new(a: Matrix, b: Matrix, q: Matrix, r: Matrix, nu0: Vector) -> Self {
        Self { a, b, q, r, nu0 }
    }

    /// Scalar type, convenient for fixtures.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64, nu0: f64) -> Self {
        let s = |v| Matrix::from_element(1, 1, v);
        Self::new(s(a), s(b), s(q), s(r), Vector::from_element(1, nu0))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Shape, symmetry and definiteness checks (not the structural rank tests).
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::Dimension("state and input dimensions must be positive".into()));
        }
        check_shape("A", &self.a, n, n)?;
        check_shape("B", &self.b, n, m)?;
        check_shape("Q", &self.q, n, n)?;
        check_shape("R", &self.r, m, m)?;
        if self.nu0.len() != n {
            return Err(Error::Dimension(format!("nu0 has length {}, expected {n}", self.nu0.len())));
        }
        for (name, mat) in [("A", &self.a), ("B", &self.b), ("Q", &self.q), ("R", &self.r)] {
            check_finite(name, mat.iter())?;
        }
        check_finite("nu0", self.nu0.iter())?;
        check_symmetric("Q", &self.q)?;
        check_symmetric("R", &self.r)?;
        if min_eigenvalue(&self.q) < -psd_slack(&self.q) {
            return Err(Error::Invalid("Q must be positive semidefinite".into()));
        }
        if min_eigenvalue(&self.r) <= 0.0 {
            return Err(Error::Invalid("R must be positive definite".into()));
        }
        Ok(())
    }
}

/// Rank diagnostics for controllability of `(A, B)` and observability of
/// `(A, Q^{1/2})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructuralDiagnostics {
    pub state_dim: usize,
    pub controllability_rank: usize,
    pub observability_rank: usize,
}

impl StructuralDiagnostics {
    pub fn controllable(&self) -> bool {
        self.controllability_rank == self.state_dim
    }

    pub fn observable(&self) -> bool {
        self.observability_rank == self.state_dim
    }

    pub fn pass(&self) -> bool {
        self.controllable() && self.observable()
    }

    /// Converts a failing diagnostic into an error naming the failed test.
    pub fn into_result(self, type_index: usize) -> Result<()> {
        let n = self.state_dim;
        if !self.controllable() {
            return Err(Error::Structural {
                type_index,
                detail: format!(
                    "(A, B) is not controllable (controllability matrix rank {} < {n})",
                    self.controllability_rank
                ),
            });
        }
        if !self.observable() {
            return Err(Error::Structural {
                type_index,
                detail: format!(
                    "(A, Q^1/2) is not observable (observability matrix rank {} < {n})",
                    self.observability_rank
                ),
            });
        }
        Ok(())
    }
}

pub fn check_structural_assumptions(t: &AgentTypeParams) -> StructuralDiagnostics {
    let n = t.state_dim();
    let m = t.input_dim();

    let mut ctrb = Matrix::zeros(n, n * m);
    let mut block = t.b.clone();
    for i in 0..n {
        ctrb.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = &t.a * block;
    }

    let c = psd_sqrt(&t.q);
    let mut obsv = Matrix::zeros(n * n, n);
    let mut block = c;
    for i in 0..n {
        obsv.view_mut((i * n, 0), (n, n)).copy_from(&block);
        block *= &t.a;
    }

    StructuralDiagnostics {
        state_dim: n,
        controllability_rank: numeric_rank(&ctrb),
        observability_rank: numeric_rank(&obsv),
    }
}

fn numeric_rank(m: &Matrix) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    let tol = max * f64::EPSILON * (m.nrows().max(m.ncols()) as f64) * 10.0;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Finite set of types with their probability masses.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeDistribution {
    types: Vec<AgentTypeParams>,
    mass: Vec<f64>,
}

impl TypeDistribution {
    pub fn new(types: Vec<AgentTypeParams>, mass: Vec<f64>) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::Invalid("at least one agent type is required".into()));
        }
        if types.len() != mass.len() {
            return Err(Error::Dimension(format!(
                "{} types but {} masses",
                types.len(),
                mass.len()
            )));
        }
        if mass.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid("masses must lie in [0, 1]".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("masses must sum to 1 (sum = {total})")));
        }
        for (i, t) in types.iter().enumerate() {
            t.validate().map_err(|e| match e {
                Error::Dimension(s) => Error::Dimension(format!("type {i}: {s}")),
                Error::Invalid(s) => Error::Invalid(format!("type {i}: {s}")),
                other => other,
            })?;
        }
        let (n, m) = (types[0].state_dim(), types[0].input_dim());
        for (i, t) in types.iter().enumerate().skip(1) {
            if t.state_dim() != n || t.input_dim() != m {
                return Err(Error::Dimension(format!(
                    "type {i} has (n, m) = ({}, {}), type 0 has ({n}, {m})",
                    t.state_dim(),
                    t.input_dim()
                )));
            }
        }
        Ok(Self { types, mass })
    }

    pub fn single(t: AgentTypeParams) -> Result<Self> {
        Self::new(vec![t], vec![1.0])
    }

    pub fn types(&self) -> &[AgentTypeParams] {
        &self.types
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.types[0].state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.types[0].input_dim()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AgentTypeParams, f64)> {
        self.types.iter().zip(self.mass.iter().copied())
    }

    /// `Σ_φ ν_{φ,0} P(φ)`.
    pub fn mean_initial_state(&self) -> Vector {
        self.iter()
            .fold(Vector::zeros(self.state_dim()), |acc, (t, p)| acc + &t.nu0 * p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    /// Initial-state covariance.
    pub sigma_x: Matrix,
    /// Process-noise covariance.
    pub sigma_w: Matrix,
    /// Channel-noise covariance.
    pub sigma_v: Matrix,
}

impl NoiseModel {
    /// With `allow_zero`, covariances only need to be PSD (noiseless oracle runs).
    pub fn validate(&self, n: usize, allow_zero: bool) -> Result<()> {
        for (name, m) in [
            ("sigma_x", &self.sigma_x),
            ("sigma_w", &self.sigma_w),
            ("sigma_v", &self.sigma_v),
        ] {
            check_shape(name, m, n, n)?;
            check_finite(name, m.iter())?;
            check_symmetric(name, m)?;
            let min = min_eigenvalue(m);
            if allow_zero {
                if min < -psd_slack(m) {
                    return Err(Error::Invalid(format!(
                        "{name}: covariance must be positive semidefinite"
                    )));
                }
            } else if min <= 0.0 {
                return Err(Error::Invalid(format!(
                    "{name}: covariance must be positive definite \
                     (set options.allow_noiseless_channel for oracle runs)"
                )));
            }
        }
        Ok(())
    }
}

/// Innovation threshold rule `δ'Sδ >= alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchedulerParams {
    pub s: Matrix,
    pub alpha: f64,
}

impl SchedulerParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        check_shape("S", &self.s, n, n)?;
        check_finite("S", self.s.iter())?;
        check_symmetric("S", &self.s)?;
        if min_eigenvalue(&self.s) <= 0.0 {
            return Err(Error::Invalid("S must be positive definite".into()));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::Invalid(format!("alpha must be >= 0 (got {})", self.alpha)));
        }
        Ok(())
    }
}

/// Decoder prior at `k = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DecoderInit {
    /// `Ŷ₀ = ν₀`, `P₀ = Σ_x`.
    #[default]
    PriorMean,
    /// `Ŷ₀ = 0`, `P₀ = Σ_x + ν₀ν₀ᵀ`.
    Zero,
}

impl DecoderInit {
    pub fn as_str(self) -> &'static str {
        match self {
            DecoderInit::PriorMean => "prior_mean",
            DecoderInit::Zero => "zero",
        }
    }
}

impl std::str::FromStr for DecoderInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior_mean" => Ok(DecoderInit::PriorMean),
            "zero" => Ok(DecoderInit::Zero),
            other => Err(Error::Schema(format!(
                "decoder_init must be \"prior_mean\" or \"zero\", got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimParams {
    /// Population size N.
    pub agents: usize,
    /// Horizon T.
    pub horizon: usize,
    pub seed: u64,
    pub runs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol: crate::kernels::DEFAULT_TOL,
            max_iter: crate::kernels::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Options {
    pub allow_noiseless_channel: bool,
    pub decoder_init: DecoderInit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameConfig {
    pub distribution: TypeDistribution,
    pub noise: NoiseModel,
    pub scheduler: SchedulerParams,
    pub sim: SimParams,
    pub solver: SolverParams,
    pub options: Options,
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.distribution.state_dim();
        self.noise.validate(n, self.options.allow_noiseless_channel)?;
        self.scheduler.validate(n)?;
        if self.sim.agents == 0 {
            return Err(Error::Invalid("sim.N must be positive".into()));
        }
        if self.sim.horizon == 0 {
            return Err(Error::Invalid("sim.T must be positive".into()));
        }
        if self.sim.runs == 0 {
            return Err(Error::Invalid("sim.runs must be positive".into()));
        }
        if self.solver.tol.is_nan() || self.solver.tol <= 0.0 || !self.solver.tol.is_finite() {
            return Err(Error::Invalid("solver.tol must be positive".into()));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::Invalid("solver.max_iter must be positive".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.distribution.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.distribution.input_dim()
    }

    /// The scalar reference game: one type with `A=0.5, B=1, Q=0.1, R=1`,
    /// `ν₀=1`, `Σ_x=0.25, Σ_w=0.01, Σ_v=0.04`, `S=1, α=2`, `N=100, T=500`.
    pub fn model_a() -> Self {
        let s = |v| Matrix::from_element(1, 1, v);
        Self {
            distribution: TypeDistribution::single(AgentTypeParams::scalar(0.5, 1.0, 0.1, 1.0, 1.0))
                .expect("valid fixture"),
            noise: NoiseModel {
                sigma_x: s(0.25),
                sigma_w: s(0.01),
                sigma_v: s(0.04),
            },
            scheduler: SchedulerParams {
                s: s(1.0),
                alpha: 2.0,
            },
            sim: SimParams {
                agents: 100,
                horizon: 500,
                seed: 1,
                runs: 1,
            },
            solver: SolverParams::default(),
            options: Options::default(),
        }
    }
}

/// Assigns a type to each of `n_agents` agents by i.i.d. draws from `d`.
///
/// Returns the assignment and the empirical masses `P_N`. Deterministic in
/// `seed`; a single-type distribution consumes no randomness.
pub fn sample_types(n_agents: usize, d: &TypeDistribution, seed: u64) -> (Vec<usize>, Vec<f64>) {
    let assignment: Vec<usize> = if d.len() == 1 {
        vec![0; n_agents]
    } else {
        let mut rng = substream(seed, 0, StreamKind::TypeAssignment);
        let dist = WeightedIndex::new(d.mass()).expect("validated masses");
        (0..n_agents).map(|_| dist.sample(&mut rng)).collect()
    };
    let mut counts = vec![0usize; d.len()];
    for &i in &assignment {
        counts[i] += 1;
    }
    let empirical = counts
        .iter()
        .map(|&c| if n_agents == 0 { 0.0 } else { c as f64 / n_agents as f64 })
        .collect();
    (assignment, empirical)
}

fn check_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_finite<'a>(name: &str, mut it: impl Iterator<Item = &'a f64>) -> Result<()> {
    if it.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} has non-finite entries")))
    }
}

fn check_symmetric(name: &str, m: &Matrix) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Invalid(format!("{name} must be symmetric")));
    }
    Ok(())
}

fn psd_slack(m: &Matrix) -> f64 {
    1e-12 * m.amax().max(1.0)
}
