//! One agent's communication link: innovation-threshold scheduler,
//! predictive encoder, additive Gaussian channel and decoder.
//!
//! Within a step the order is fixed: propagate the error covariance,
//! predict, form the innovation `δ = X - Ŷ`, schedule, and on a
//! transmission encode, transmit and decode. Between transmissions the
//! decoder output is the open-loop prediction `Ŷ = A·Y⁻ + B·U⁻`.
//!
//! The decoder is a linear MMSE update with gain `G = P(P + Σ_v)⁻¹`. Its
//! covariance recursion does not involve the control, and neither does the
//! innovation (`δ_k = A·ē_{k-1} + W_{k-1}`), so the decoding error
//! `ē = X - Y` and the transmission pattern are the same under any control
//! sequence. The simulator exploits this by carrying `ē` explicitly.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernels::{min_eigenvalue, psd_sqrt, symmetrize};
use crate::model::SchedulerParams;
use crate::{Matrix, Vector};

/// Decoder-side memory of one link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkState {
    /// Last decoder output `Y_{k-1}`.
    pub y_prev: Vector,
    /// Last control `U_{k-1}`.
    pub u_prev: Vector,
    /// Error covariance of the current estimate.
    pub p: Matrix,
    pub k: usize,
}

/// What happened on the link at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub gamma: bool,
    /// Channel input, present only on transmissions.
    pub c: Option<Vector>,
    /// Channel output, present only on transmissions.
    pub d: Option<Vector>,
    pub y: Vector,
    /// `ē = X - Y`.
    pub err: Vector,
}

/// Open-loop prediction `A·Y_{k-1} + B·U_{k-1}`.
pub fn predict(ls: &LinkState, a: &Matrix, b: &Matrix) -> Vector {
    a * &ls.y_prev + b * &ls.u_prev
}

/// `γ_k = 1` iff `k = 0` or `δ'Sδ >= α`.
pub fn schedule(delta: &Vector, sp: &SchedulerParams, k: usize) -> bool {
    k == 0 || delta.dot(&(&sp.s * delta)) >= sp.alpha
}

/// `δ = X - Ŷ`.
pub fn innovation(x: &Vector, yhat: &Vector) -> Vector {
    x - yhat
}

/// Maps an innovation to a channel input.
pub trait Encoder {
    fn encode(&self, innovation: &Vector) -> Vector;
}

/// `c = δ`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityEncoder;

impl Encoder for IdentityEncoder {
    fn encode(&self, innovation: &Vector) -> Vector {
        innovation.clone()
    }
}

/// Predictive encoding with the identity map: `c = X - Ŷ`.
pub fn encode(x: &Vector, yhat: &Vector) -> Vector {
    IdentityEncoder.encode(&innovation(x, yhat))
}

/// Zero-mean Gaussian sampler `F·z`, `z ~ N(0, I)`, with `F Fᵀ = Σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianNoise {
    factor: Matrix,
}

impl GaussianNoise {
    /// Accepts PSD covariances; singular ones use the symmetric square root.
    pub fn new(cov: &Matrix) -> Self {
        let factor = match symmetrize(cov).cholesky() {
            Some(c) => c.l(),
            None => psd_sqrt(cov),
        };
        Self { factor }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.factor * z
    }

    /// Adds a draw to `out` in place.
    pub fn add_sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vector, scratch: &mut Vector) {
        for z in scratch.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        out.gemv(1.0, &self.factor, scratch, 1.0);
    }
}

/// `d = c + v`, `v ~ N(0, Σ_v)`.
pub fn channel_transmit<R: Rng + ?Sized>(c: &Vector, noise: &GaussianNoise, rng: &mut R) -> Vector {
    c + noise.sample(rng)
}

/// `G = P(P + Σ_v)⁻¹`; when `P + Σ_v` is singular (noiseless channel) the
/// pseudo-inverse is used, so `G` is the projector onto the range of `P`.
pub fn decoder_gain(p: &Matrix, sigma_v: &Matrix) -> Matrix {
    let s = symmetrize(&(p + sigma_v));
    match s.clone().cholesky() {
        Some(c) => c.solve(p).transpose(),
        None => {
            let scale = s.amax().max(f64::MIN_POSITIVE);
            let pinv = s
                .pseudo_inverse(scale * 1e-12)
                .unwrap_or_else(|_| Matrix::zeros(p.nrows(), p.ncols()));
            p * pinv
        }
    }
}

/// Decoder update. Without a transmission `Y = Ŷ` and `P` is unchanged;
/// with one, `Y = Ŷ + G·d` and `P ← (I - G)P`.
pub fn decode(p: &Matrix, yhat: &Vector, gamma: bool, d: Option<&Vector>, sigma_v: &Matrix) -> (Vector, Matrix) {
    match (gamma, d) {
        (true, Some(d)) => {
            let g = decoder_gain(p, sigma_v);
            let y = yhat + &g * d;
            let n = p.nrows();
            let p_post = symmetrize(&((Matrix::identity(n, n) - g) * p));
            (y, p_post)
        }
        _ => (yhat.clone(), p.clone()),
    }
}

/// `P' = A·P·Aᵀ + Σ_w`.
pub fn propagate_covariance(p: &Matrix, a: &Matrix, sigma_w: &Matrix) -> Matrix {
    symmetrize(&(a * p * a.transpose() + sigma_w))
}

/// True when `P` is symmetric and its smallest eigenvalue is at least `-tol`.
pub fn is_psd(p: &Matrix, tol: f64) -> bool {
    (p - p.transpose()).amax() <= tol && min_eigenvalue(p) >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn state(y: f64, u: f64) -> LinkState {
        LinkState {
            y_prev: v(&[y]),
            u_prev: v(&[u]),
            p: s(0.0),
            k: 1,
        }
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&state(0.0, 0.0), &s(0.5), &s(1.0))[0], 0.0);
        assert_abs_diff_eq!(predict(&state(1.0, -0.056920), &s(0.5), &s(1.0))[0], 0.443080, epsilon = 1e-15);
        let ls = LinkState {
            y_prev: v(&[1.0, -2.0]),
            u_prev: v(&[3.0]),
            p: Matrix::zeros(2, 2),
            k: 3,
        };
        assert_eq!(predict(&ls, &Matrix::identity(2, 2), &Matrix::zeros(2, 1)), ls.y_prev);
    }

    #[test]
    fn schedule_examples() {
        let sp = SchedulerParams { s: s(1.0), alpha: 2.0 };
        assert!(!schedule(&v(&[0.0]), &sp, 5));
        assert!(schedule(&v(&[0.0]), &sp, 0));
        assert!(schedule(&v(&[1.5]), &sp, 5));
        let always = SchedulerParams { s: s(1.0), alpha: 0.0 };
        assert!(schedule(&v(&[0.0]), &always, 9));
        assert!(schedule(&v(&[-3.0]), &always, 9));
    }

    #[test]
    fn encode_examples() {
        assert_abs_diff_eq!(encode(&v(&[1.2]), &v(&[1.0]))[0], 0.2, epsilon = 1e-15);
        assert_eq!(encode(&v(&[0.7]), &v(&[0.7]))[0], 0.0);
        assert_eq!(encode(&v(&[1.0, -1.0]), &v(&[0.0, 0.0])), v(&[1.0, -1.0]));
    }

    #[test]
    fn noiseless_channel_is_identity() {
        let noise = GaussianNoise::new(&s(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = v(&[0.3]);
        assert_eq!(channel_transmit(&c, &noise, &mut rng), c);
    }

    #[test]
    fn channel_is_deterministic_per_seed() {
        let noise = GaussianNoise::new(&s(0.04));
        let c = v(&[0.3]);
        let a = channel_transmit(&c, &noise, &mut ChaCha8Rng::seed_from_u64(9));
        let b = channel_transmit(&c, &noise, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn channel_noise_moments() {
        let cov = Matrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let noise = GaussianNoise::new(&cov);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let c = v(&[1.0, -2.0]);
        let n = 100_000;
        let mut mean = Vector::zeros(2);
        let mut second = Matrix::zeros(2, 2);
        for _ in 0..n {
            let e = channel_transmit(&c, &noise, &mut rng) - &c;
            mean += &e;
            second += &e * e.transpose();
        }
        mean /= n as f64;
        let emp = second / n as f64 - &mean * mean.transpose();
        for i in 0..2 {
            assert!(mean[i].abs() <= 3.0 * cov[(i, i)].sqrt() / (n as f64).sqrt(), "{mean}");
        }
        for (e, c) in emp.iter().zip(cov.iter()) {
            assert!((e - c).abs() <= 0.05 * c, "{emp} vs {cov}");
        }
    }

    #[test]
    fn decode_without_transmission_holds_prediction() {
        let (y, p) = decode(&s(0.3), &v(&[0.7]), false, None, &s(0.04));
        assert_eq!(y[0], 0.7);
        assert_eq!(p[(0, 0)], 0.3);
    }

    #[test]
    fn decode_over_perfect_channel_recovers_state() {
        let x = v(&[1.3]);
        let yhat = v(&[1.0]);
        let d = encode(&x, &yhat);
        let (y, p) = decode(&s(0.25), &yhat, true, Some(&d), &s(0.0));
        assert_abs_diff_eq!(y[0], x[0], epsilon = 1e-15);
        assert_abs_diff_eq!(p[(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn noiseless_gain_projects_onto_range_of_p() {
        let p = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let g = decoder_gain(&p, &Matrix::zeros(2, 2));
        assert_abs_diff_eq!(g[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(1, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(decoder_gain(&Matrix::zeros(2, 2), &Matrix::zeros(2, 2)).norm(), 0.0);
    }

    #[test]
    fn initial_gain_model_a() {
        let g = decoder_gain(&s(0.25), &s(0.04));
        assert_abs_diff_eq!(g[(0, 0)], 0.25 / 0.29, epsilon = 1e-15);
        assert_abs_diff_eq!(g[(0, 0)], 0.862069, epsilon = 1e-6);
    }

    #[test]
    fn propagate_examples() {
        assert_abs_diff_eq!(propagate_covariance(&s(0.25), &s(0.5), &s(0.01))[(0, 0)], 0.0725, epsilon = 1e-15);
        assert_eq!(propagate_covariance(&s(0.25), &s(0.0), &s(0.01))[(0, 0)], 0.01);
        let p = Matrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        assert_eq!(propagate_covariance(&p, &Matrix::identity(2, 2), &Matrix::zeros(2, 2)), p);
    }

    #[test]
    fn covariance_stays_psd_through_updates() {
        let a = Matrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.7]);
        let sw = Matrix::from_row_slice(2, 2, &[0.01, 0.002, 0.002, 0.02]);
        let sv = Matrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.01]);
        let mut p = Matrix::identity(2, 2) * 0.25;
        for k in 0..200 {
            p = propagate_covariance(&p, &a, &sw);
            assert!(is_psd(&p, 1e-12));
            let (_, post) = decode(&p, &Vector::zeros(2), k % 3 == 0, Some(&Vector::zeros(2)), &sv);
            p = post;
            assert!(is_psd(&p, 1e-12));
        }
    }
}
