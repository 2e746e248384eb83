//! Trajectory simulation for θ_{n+1} = θ_n − α(A_{n+1}θ_n − b_{n+1}) and the
//! exact oracles the simulations are checked against.
//!
//! Monte Carlo entry points run one [`Stream`] per trajectory (stream id = the
//! trajectory index) on the current rayon pool and reduce in index order, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Vector};
use crate::noise::LsaModel;
use crate::rng::Stream;
use crate::stats::{self, stable_sum};

/// Default accuracy target for the stationary burn-in.
pub const DEFAULT_STATIONARY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("stepsize {0} must be positive and finite")]
    InvalidStepsize(f64),
    #[error("non-finite iterate at step {step}")]
    NonFinite { step: u64 },
    #[error("initial point has dimension {found}, model has {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("moment order {0} must be at least 2")]
    InvalidOrder(f64),
    #[error("need at least 2 trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error("tolerance {0} must lie in (0, 1)")]
    InvalidTolerance(f64),
    #[error("stepsize {alpha} outside (0, alpha_inf = {alpha_inf}]")]
    StepsizeOutOfRange { alpha: f64, alpha_inf: f64 },
    #[error("second-moment operator has spectral radius {0} >= 1; the chain has no stationary second moment")]
    NoStationaryMoment(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Estimate of (E X)^{1/r} from samples of X, with delta-method SE.
    fn root_of_mean(samples: &[f64], r: f64, seed: u64) -> Result<Self> {
        let (m, se) = stats::mean_and_se(samples)?;
        let (value, std_err) = if m > 0.0 {
            let value = m.powf(1.0 / r);
            (value, value / (r * m) * se)
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            value,
            std_err,
            n_samples: samples.len(),
            seed,
        })
    }
}

/// θ_n − θ* split into the transient term and the three fluctuation terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDecomposition {
    /// Γ_{1:n}(θ₀ − θ*).
    pub gamma_term: Vector,
    pub j0: Vector,
    pub j1: Vector,
    pub h1: Vector,
    pub theta_err: Vector,
}

impl TrajectoryDecomposition {
    /// ∥θ_n − θ* − (Γθ̃₀ + J⁰ + J¹ + H¹)∥ / (1 + ∥θ_n − θ*∥).
    /// Relative residual of θ_n − θ* = Γ-term + J⁰ + J¹ + H¹, scaled by the
    /// term sizes so cancellation between large terms is not flagged.
    pub fn identity_residual(&self) -> f64 {
        let sum = &self.gamma_term + &self.j0 + &self.j1 + &self.h1;
        // Max-abs norms: Euclidean norms square the entries and overflow
        // first on blown-up trajectories.
        let scale =
            1.0 + self.theta_err.amax() + self.gamma_term.amax() + self.j0.amax() + self.j1.amax() + self.h1.amax();
        (&self.theta_err - sum).amax() / scale
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(EngineError::InvalidStepsize(alpha))
    }
}

fn check_dim(model: &LsaModel, v: &Vector) -> Result<()> {
    if v.len() != model.dim {
        return Err(EngineError::Dimension {
            expected: model.dim,
            found: v.len(),
        });
    }
    Ok(())
}

fn is_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Reusable buffers for allocation-free stepping.
struct Stepper<'a> {
    model: &'a LsaModel,
    alpha: f64,
    a: Matrix,
    b: Vector,
    scratch: Vector,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a LsaModel, alpha: f64) -> Self {
        let (a, b) = model.buffers();
        Self {
            model,
            alpha,
            a,
            b,
            scratch: Vector::zeros(model.dim),
        }
    }

    fn draw(&mut self, rng: &mut Stream) {
        self.model.sample_into(rng, &mut self.a, &mut self.b);
    }

    /// θ ← θ − α(Aθ − b) with the current draw.
    fn apply(&mut self, theta: &mut Vector) {
        self.scratch.gemv(1.0, &self.a, theta, 0.0);
        self.scratch -= &self.b;
        theta.axpy(-self.alpha, &self.scratch, 1.0);
    }
}

/// θ_n after n steps from θ₀.
pub fn run_trajectory(model: &LsaModel, alpha: f64, theta0: &Vector, n: u64, rng: &mut Stream) -> Result<Vector> {
    check_alpha(alpha)?;
    check_dim(model, theta0)?;
    let mut stepper = Stepper::new(model, alpha);
    let mut theta = theta0.clone();
    for step in 1..=n {
        stepper.draw(rng);
        stepper.apply(&mut theta);
        if !is_finite(&theta) {
            return Err(EngineError::NonFinite { step });
        }
    }
    Ok(theta)
}

/// The full path θ₀, …, θ_n.
pub fn run_path(model: &LsaModel, alpha: f64, theta0: &Vector, n: u64, rng: &mut Stream) -> Result<Vec<Vector>> {
    check_alpha(alpha)?;
    check_dim(model, theta0)?;
    let mut stepper = Stepper::new(model, alpha);
    let mut theta = theta0.clone();
    let mut path = Vec::with_capacity(n as usize + 1);
    path.push(theta.clone());
    for step in 1..=n {
        stepper.draw(rng);
        stepper.apply(&mut theta);
        if !is_finite(&theta) {
            return Err(EngineError::NonFinite { step });
        }
        path.push(theta.clone());
    }
    Ok(path)
}

/// Runs the recursion alongside its error decomposition, one (A, b) draw per
/// step shared by all recursions:
///
/// J⁰_{k+1} = (I − αĀ)J⁰_k + αε_{k+1},
/// J¹_{k+1} = (I − αĀ)J¹_k − α(A_{k+1} − Ā)J⁰_k,
/// H¹_{k+1} = (I − αA_{k+1})H¹_k − α(A_{k+1} − Ā)J¹_k.
pub fn run_decomposed(
    model: &LsaModel,
    alpha: f64,
    theta0: &Vector,
    n: u64,
    rng: &mut Stream,
) -> Result<TrajectoryDecomposition> {
    check_alpha(alpha)?;
    check_dim(model, theta0)?;
    let d = model.dim;
    let id = Matrix::identity(d, d);
    let mean_step = &id - &model.abar * alpha;
    let mut stepper = Stepper::new(model, alpha);
    let mut theta = theta0.clone();
    let mut gamma_term = theta0 - &model.theta_star;
    let (mut j0, mut j1, mut h1) = (Vector::zeros(d), Vector::zeros(d), Vector::zeros(d));
    for step in 1..=n {
        stepper.draw(rng);
        let (a, b) = (&stepper.a, &stepper.b);
        let eps = model.eps_noise(a, b);
        let dev = a - &model.abar;
        let step_m = &id - a * alpha;
        let next_h1 = &step_m * &h1 - (&dev * &j1) * alpha;
        let next_j1 = &mean_step * &j1 - (&dev * &j0) * alpha;
        let next_j0 = &mean_step * &j0 + eps * alpha;
        gamma_term = &step_m * &gamma_term;
        (j0, j1, h1) = (next_j0, next_j1, next_h1);
        stepper.apply(&mut theta);
        if [&theta, &gamma_term, &j0, &j1, &h1].into_iter().any(|v| !is_finite(v)) {
            return Err(EngineError::NonFinite { step });
        }
    }
    Ok(TrajectoryDecomposition {
        theta_err: theta - &model.theta_star,
        gamma_term,
        j0,
        j1,
        h1,
    })
}

/// Γ_{1:n} = (I − αA_n)⋯(I − αA_1), accumulated from the left. Blow-up is
/// left visible as non-finite entries.
pub fn product(model: &LsaModel, alpha: f64, n: u64, rng: &mut Stream) -> Matrix {
    let d = model.dim;
    let (mut a, mut b) = model.buffers();
    let mut gamma = Matrix::identity(d, d);
    let mut next = Matrix::zeros(d, d);
    for _ in 0..n {
        model.sample_into(rng, &mut a, &mut b);
        a *= -alpha;
        for i in 0..d {
            a[(i, i)] += 1.0;
        }
        next.gemm(1.0, &a, &gamma, 0.0);
        std::mem::swap(&mut gamma, &mut next);
    }
    gamma
}

/// Maps `f` over trajectories 0..n_traj, each with its own stream, and
/// returns the results in trajectory order. The first error in index order
/// wins, so failures are reproducible too.
pub fn par_trajectories<T, F>(n_traj: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Stream) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..n_traj)
        .into_par_iter()
        .map(|i| f(&mut Stream::new(seed, i as u64)))
        .collect();
    results.into_iter().collect()
}

/// Estimate of E^{1/q} ∥Γ_{1:n}∥^q (spectral norm).
pub fn mc_norm_moment(model: &LsaModel, alpha: f64, n: u64, q: f64, n_traj: usize, seed: u64) -> Result<McEstimate> {
    check_alpha(alpha)?;
    if !(q >= 2.0) {
        return Err(EngineError::InvalidOrder(q));
    }
    if n_traj < 2 {
        return Err(EngineError::TooFewTrajectories(n_traj));
    }
    let samples = par_trajectories(n_traj, seed, |rng| {
        Ok(linalg::op_norm(&product(model, alpha, n, rng)).powf(q))
    })?;
    McEstimate::root_of_mean(&samples, q, seed)
}

/// Cov(J⁰_n) by Σ_{k+1} = (I − αĀ)Σ_k(I − αĀ)⊤ + α²Σ_ε from Σ₀ = 0.
pub fn cov_j0(model: &LsaModel, alpha: f64, n: u64) -> Matrix {
    let d = model.dim;
    let m = Matrix::identity(d, d) - &model.abar * alpha;
    let forcing = model.sigma_eps() * (alpha * alpha);
    let mut sigma = Matrix::zeros(d, d);
    for _ in 0..n {
        sigma = &m * sigma * m.transpose() + &forcing;
    }
    linalg::symmetrize(&sigma)
}

/// T_α = E[(I − αA) ⊗ (I − αA)], so that vec E[MSM⊤] = T_α vec S for M = I − αA
/// independent of S. Exact because every built-in sampler has finite support.
pub fn second_moment_operator(model: &LsaModel, alpha: f64) -> Matrix {
    let d = model.dim;
    let mut t = Matrix::zeros(d * d, d * d);
    for (w, a) in model.a_support() {
        let m = Matrix::identity(d, d) - a * alpha;
        t += m.kronecker(&m) * w;
    }
    t
}

fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(linalg::eigenvalues(m)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// Exact stationary covariance of θ − θ* under the LSA kernel: the fixed point
/// of S = E[(I − αA)S(I − αA)⊤] + α²Σ_ε.
pub fn stationary_covariance(model: &LsaModel, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    let d = model.dim;
    let t = second_moment_operator(model, alpha);
    let radius = spectral_radius(&t)?;
    if radius >= 1.0 {
        return Err(EngineError::NoStationaryMoment(radius));
    }
    let k = Matrix::identity(d * d, d * d) - t;
    let rhs = model.sigma_eps() * (alpha * alpha);
    let x = k
        .lu()
        .solve(&Vector::from_column_slice(rhs.as_slice()))
        .ok_or(LinalgError::Singular {
            equation: "stationary covariance",
        })?;
    Ok(linalg::symmetrize(&Matrix::from_column_slice(d, d, x.as_slice())))
}

/// Exact E∥Γ_{1:n}Δ∥² by iterating S ← E[(I − αA)S(I − αA)⊤] from ΔΔ⊤.
pub fn coupled_second_moment(model: &LsaModel, alpha: f64, n: u64, delta0: &Vector) -> Result<f64> {
    check_dim(model, delta0)?;
    let d = model.dim;
    let support: Vec<(f64, Matrix)> = model
        .a_support()
        .into_iter()
        .map(|(w, a)| (w, Matrix::identity(d, d) - a * alpha))
        .collect();
    let mut s = delta0 * delta0.transpose();
    for _ in 0..n {
        let mut next = Matrix::zeros(d, d);
        for (w, m) in &support {
            next += m * &s * m.transpose() * *w;
        }
        s = next;
    }
    Ok(s.trace())
}

/// Burn-in length ⌈2 log(tol/√(κ_Q d)) / log(1 − aα/2)⌉ for stationary sampling.
///
/// The geometric W2 rate behind this budget is guaranteed for α < α_{2,∞}.
/// Between α_{2,∞} and α∞ the same budget is used, but only after checking
/// that the exact second-moment operator is a strict contraction in spectral
/// radius, so a stationary law with finite variance exists.
pub fn burn_in_steps(model: &LsaModel, alpha: f64, tol: f64) -> Result<u64> {
    check_alpha(alpha)?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(EngineError::InvalidTolerance(tol));
    }
    let profile = model.profile()?;
    if alpha > profile.alpha_inf {
        return Err(EngineError::StepsizeOutOfRange {
            alpha,
            alpha_inf: profile.alpha_inf,
        });
    }
    if alpha >= profile.alpha_p_inf(2.0) {
        let radius = spectral_radius(&second_moment_operator(model, alpha))?;
        if radius >= 1.0 {
            return Err(EngineError::NoStationaryMoment(radius));
        }
    }
    let scale = (profile.kappa_q * model.dim as f64).sqrt();
    let steps = 2.0 * (tol / scale).ln() / (1.0 - profile.a * alpha / 2.0).ln();
    Ok(steps.ceil().max(0.0) as u64)
}

/// One approximately stationary draw: forward simulation from θ* through the
/// burn-in of [`burn_in_steps`].
pub fn sample_stationary(model: &LsaModel, alpha: f64, rng: &mut Stream, tol: f64) -> Result<Vector> {
    let n = burn_in_steps(model, alpha, tol)?;
    run_trajectory(model, alpha, &model.theta_star, n, rng)
}

/// `n_samples` independent stationary draws, one stream each.
pub fn stationary_samples(model: &LsaModel, alpha: f64, n_samples: usize, seed: u64, tol: f64) -> Result<Vec<Vector>> {
    let n = burn_in_steps(model, alpha, tol)?;
    par_trajectories(n_samples, seed, |rng| {
        run_trajectory(model, alpha, &model.theta_star, n, rng)
    })
}

/// Estimate of E^{1/2}∥θ_n − θ′_n∥² for two chains driven by identical draws.
pub fn coupled_w2(
    model: &LsaModel,
    alpha: f64,
    theta0_a: &Vector,
    theta0_b: &Vector,
    n: u64,
    n_traj: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_alpha(alpha)?;
    check_dim(model, theta0_a)?;
    check_dim(model, theta0_b)?;
    if n_traj < 2 {
        return Err(EngineError::TooFewTrajectories(n_traj));
    }
    let samples = par_trajectories(n_traj, seed, |rng| {
        let mut stepper = Stepper::new(model, alpha);
        let (mut x, mut y) = (theta0_a.clone(), theta0_b.clone());
        for step in 1..=n {
            stepper.draw(rng);
            stepper.apply(&mut x);
            stepper.apply(&mut y);
            if !is_finite(&x) || !is_finite(&y) {
                return Err(EngineError::NonFinite { step });
            }
        }
        Ok((x - y).norm_squared())
    })?;
    McEstimate::root_of_mean(&samples, 2.0, seed)
}

fn log_add_exp(x: f64, y: f64) -> f64 {
    let hi = x.max(y);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((x - hi).exp() + (y - hi).exp()).ln()
}

/// log E|θ_n|^p for the biased Rademacher model started at θ₀ = 1:
/// n · log{q(1−α)^p + (1−q)(1+α)^p}.
pub fn rademacher_log_moment(q_a: f64, alpha: f64, p: f64, n: u64) -> f64 {
    let down = q_a.ln() + p * (1.0 - alpha).ln();
    let up = (1.0 - q_a).ln() + p * (1.0 + alpha).ln();
    n as f64 * log_add_exp(down, up)
}

/// E|θ_n|^p for the biased Rademacher model started at θ₀ = 1.
pub fn rademacher_exact_moment(q_a: f64, alpha: f64, p: f64, n: u64) -> f64 {
    if p == 0.0 || n == 0 {
        return 1.0;
    }
    rademacher_log_moment(q_a, alpha, p, n).exp()
}

/// P(N ≤ k) for N ~ Binomial(n, q), summed exactly in log space.
pub fn binomial_cdf(k: i64, n: u64, q: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    if k as u64 >= n {
        return 1.0;
    }
    let (lq, lp) = (q.ln(), (1.0 - q).ln());
    let ln_n = ln_factorial(n);
    let logs: Vec<f64> = (0..=k as u64)
        .map(|j| ln_n - ln_factorial(j) - ln_factorial(n - j) + j as f64 * lq + (n - j) as f64 * lp)
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum = stable_sum(logs.iter().map(|l| (l - top).exp()));
    (top.exp() * sum).min(1.0)
}

/// Exact P(θ_n ≥ t) for the biased Rademacher model started at θ₀ = 1.
///
/// θ_n = (1−α)^{N}(1+α)^{n−N} with N ~ Binomial(n, q) counting +1 draws, so
/// θ_n ≥ t iff N ≤ k* = ⌊(n log(1+α) − log t)/log((1+α)/(1−α))⌋. The floor
/// is taken with a 1e-9 slack so thresholds equal to an attainable value are
/// counted as attained despite rounding in the logarithms.
pub fn rademacher_exact_tail(q_a: f64, alpha: f64, n: u64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let l = ((1.0 + alpha) / (1.0 - alpha)).ln();
    let x = (n as f64 * (1.0 + alpha).ln() - t.ln()) / l;
    let k = (x + 1e-9).floor().clamp(-1.0, n as f64) as i64;
    binomial_cdf(k, n, q_a)
}
