//! Per-agent closed loop: plant, link and controller.

use rand_chacha::ChaCha8Rng;

use crate::equilibrium::{EquilibriumSolution, TypeGains};
use crate::link::{decoder_gain, GaussianNoise};
use crate::model::{AgentTypeParams, DecoderInit, GameConfig, SchedulerParams};
use crate::rng::{substream, StreamKind};
use crate::sim::PolicySpec;
use crate::{Matrix, Vector};

/// Everything an agent of a given type needs, precomputed once per run.
pub(crate) struct TypeContext<'a> {
    pub typ: &'a AgentTypeParams,
    pub gains: &'a TypeGains,
    /// `g_0 .. g_T`.
    pub feedforward: Vec<Vector>,
}

pub(crate) struct SharedContext<'a> {
    pub types: Vec<TypeContext<'a>>,
    pub lstar: &'a Matrix,
    pub scheduler: &'a SchedulerParams,
    pub sigma_x: &'a Matrix,
    pub sigma_w: &'a Matrix,
    pub sigma_v: &'a Matrix,
    pub x0_noise: GaussianNoise,
    pub w_noise: GaussianNoise,
    pub v_noise: GaussianNoise,
    pub decoder_init: DecoderInit,
    pub horizon: usize,
    /// Negative-control hook: feeds `B·U_{k-1}` into the scheduler input.
    pub tamper_scheduler: bool,
}

impl<'a> SharedContext<'a> {
    pub fn new(cfg: &'a GameConfig, sol: &'a EquilibriumSolution) -> Self {
        let horizon = cfg.sim.horizon;
        let types = cfg
            .distribution
            .types()
            .iter()
            .zip(&sol.gains)
            .enumerate()
            .map(|(i, (typ, gains))| TypeContext {
                typ,
                gains,
                feedforward: crate::equilibrium::feedforward(sol, i, horizon),
            })
            .collect();
        Self {
            types,
            lstar: &sol.lstar,
            scheduler: &cfg.scheduler,
            sigma_x: &cfg.noise.sigma_x,
            sigma_w: &cfg.noise.sigma_w,
            sigma_v: &cfg.noise.sigma_v,
            x0_noise: GaussianNoise::new(&cfg.noise.sigma_x),
            w_noise: GaussianNoise::new(&cfg.noise.sigma_w),
            v_noise: GaussianNoise::new(&cfg.noise.sigma_v),
            decoder_init: cfg.options.decoder_init,
            horizon,
            tamper_scheduler: false,
        }
    }
}

/// Sum over the other agents of their decoder outputs, per step
/// (row-major `T × n`), plus the population size. Used by the clairvoyant
/// deviation policy.
pub(crate) struct PeerOutputs<'a> {
    pub y_sum: &'a [f64],
    pub agents: usize,
}

/// Recorded trajectory of one agent over `k = 0..T-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentPath {
    pub type_index: usize,
    /// Row-major `T × n`.
    pub x: Vec<f64>,
    /// Row-major `T × n`.
    pub y: Vec<f64>,
    /// Row-major `T × m`.
    pub u: Vec<f64>,
    pub gamma: Vec<bool>,
    /// `ē_k` row-major `T × n`.
    pub err: Vec<f64>,
}

pub(crate) fn simulate_agent(
    ctx: &SharedContext<'_>,
    type_index: usize,
    seed: u64,
    agent_id: u64,
    policy: PolicySpec,
    peers: Option<&PeerOutputs<'_>>,
) -> AgentPath {
    let tc = &ctx.types[type_index];
    let (a, b) = (&tc.typ.a, &tc.typ.b);
    let n = a.nrows();
    let m = b.ncols();
    let horizon = ctx.horizon;

    let mut rng_x0: ChaCha8Rng = substream(seed, agent_id, StreamKind::InitialState);
    let mut rng_w: ChaCha8Rng = substream(seed, agent_id, StreamKind::Process);
    let mut rng_v: ChaCha8Rng = substream(seed, agent_id, StreamKind::Channel);

    let mut path = AgentPath {
        type_index,
        x: Vec::with_capacity(horizon * n),
        y: Vec::with_capacity(horizon * n),
        u: Vec::with_capacity(horizon * m),
        gamma: Vec::with_capacity(horizon),
        err: Vec::with_capacity(horizon * n),
    };

    let mut scratch = Vector::zeros(n);
    // ē_{k-1}, W_{k-1}, Y_{k-1}, U_{k-1}
    let mut err = Vector::zeros(n);
    let mut w = Vector::zeros(n);
    let mut y = Vector::zeros(n);
    let mut u = Vector::zeros(m);
    let mut yhat = Vector::zeros(n);
    let mut delta = Vector::zeros(n);
    let mut x = Vector::zeros(n);
    let mut p = Matrix::zeros(n, n);
    let mut sched_in = Vector::zeros(n);
    let mut g_next = Vector::zeros(n);
    let mut mean_hat = Vector::zeros(n);

    for k in 0..horizon {
        if k == 0 {
            let nu0 = &tc.typ.nu0;
            let mut x0 = nu0.clone();
            ctx.x0_noise.add_sample(&mut rng_x0, &mut x0, &mut scratch);
            match ctx.decoder_init {
                DecoderInit::PriorMean => {
                    yhat.copy_from(nu0);
                    p.copy_from(ctx.sigma_x);
                }
                DecoderInit::Zero => {
                    yhat.fill(0.0);
                    p = ctx.sigma_x + nu0 * nu0.transpose();
                }
            }
            delta.copy_from(&x0);
            delta -= &yhat;
        } else {
            yhat.gemv(1.0, a, &y, 0.0);
            yhat.gemv(1.0, b, &u, 1.0);
            p = crate::link::propagate_covariance(&p, a, ctx.sigma_w);
            delta.copy_from(&w);
            delta.gemv(1.0, a, &err, 1.0);
        }

        sched_in.copy_from(&delta);
        if ctx.tamper_scheduler && k > 0 {
            sched_in.gemv(1.0, b, &u, 1.0);
        }
        let gamma = crate::link::schedule(&sched_in, ctx.scheduler, k);

        if gamma {
            // c = δ (identity encoder), d = c + v
            let mut d = delta.clone();
            ctx.v_noise.add_sample(&mut rng_v, &mut d, &mut scratch);
            let gain = decoder_gain(&p, ctx.sigma_v);
            let correction = &gain * &d;
            y.copy_from(&yhat);
            y += &correction;
            err.copy_from(&delta);
            err -= &correction;
            p = crate::kernels::symmetrize(&((Matrix::identity(n, n) - gain) * &p));
        } else {
            y.copy_from(&yhat);
            err.copy_from(&delta);
        }
        x.copy_from(&y);
        x += &err;

        let gains = tc.gains;
        match policy {
            PolicySpec::Equilibrium | PolicySpec::ScaledGain(_) => {
                let theta = match policy {
                    PolicySpec::ScaledGain(t) => t,
                    _ => 1.0,
                };
                u.gemv(-theta, &gains.pi, &y, 0.0);
                u.gemv(-1.0, &gains.gamma, &tc.feedforward[k + 1], 1.0);
            }
            PolicySpec::ZeroControl => u.fill(0.0),
            PolicySpec::EmpiricalMeanTracking => {
                mean_hat.copy_from(&y);
                let count = match peers {
                    Some(pe) => {
                        for (i, v) in mean_hat.iter_mut().enumerate() {
                            *v += pe.y_sum[k * n + i];
                        }
                        pe.agents
                    }
                    None => 1,
                };
                mean_hat /= count as f64;
                // g_{k+1} = -M̃·L*·m̂_k
                scratch.gemv(1.0, ctx.lstar, &mean_hat, 0.0);
                g_next.gemv(-1.0, &gains.mtilde, &scratch, 0.0);
                u.gemv(-1.0, &gains.pi, &y, 0.0);
                u.gemv(-1.0, &gains.gamma, &g_next, 1.0);
            }
        }

        path.x.extend(x.iter());
        path.y.extend(y.iter());
        path.u.extend(u.iter());
        path.err.extend(err.iter());
        path.gamma.push(gamma);

        w.fill(0.0);
        ctx.w_noise.add_sample(&mut rng_w, &mut w, &mut scratch);
    }
    path
}
