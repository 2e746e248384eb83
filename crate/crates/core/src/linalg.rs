//! Dense real linear algebra for the spectral geometry of the mean matrix Ā.
//!
//! Matrices are plain `nalgebra` dense matrices. The Lyapunov, covariance and
//! Riccati equations are all solved through their vectorized (Kronecker) linear
//! systems. That costs O(d⁶) and is meant for desk-scale problems (d ≤ 32);
//! nothing here tries to be clever about structure.

use nalgebra::{DMatrix, DVector, Schur};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Margin by which every eigenvalue of Ā must clear the imaginary axis.
pub const TAU_EIG: f64 = 1e-9;

/// Eigenvalues below this fraction of λ_max disqualify a matrix as SPD.
pub const SPD_REL_FLOOR: f64 = 1e-12;

/// Relative residual accepted from the vectorized solvers.
pub const SOLVER_REL_TOL: f64 = 1e-10;

const SYMMETRY_REL_TOL: f64 = 1e-10;
const SCHUR_MAX_ITER: usize = 10_000;
const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix has no entries")]
    Empty,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Schur iteration did not converge")]
    NoConvergence,
    #[error("mean matrix is not Hurwitz: smallest real part of an eigenvalue is {min_re:.6e} (margin {TAU_EIG:e})")]
    NotHurwitz { min_re: f64 },
    #[error("vectorized {equation} system is singular or numerically defective")]
    Singular { equation: &'static str },
    #[error("{equation} residual {residual:.3e} exceeds {tolerance:.3e}")]
    Residual {
        equation: &'static str,
        residual: f64,
        tolerance: f64,
    },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (eigenvalues in [{min_eig:.3e}, {max_eig:.3e}])")]
    NotPositiveDefinite { min_eig: f64, max_eig: f64 },
    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveSemiDefinite { min_eig: f64 },
    #[error("invalid Schatten order {0}; need p >= 1 or p = inf")]
    InvalidOrder(f64),
    #[error("stepsize {alpha} outside (0, {alpha_inf}]")]
    StepsizeOutOfRange { alpha: f64, alpha_inf: f64 },
    #[error("noise bound {0} must be finite and nonnegative")]
    InvalidNoiseBound(f64),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Checks that `m` is a non-empty, square, finite matrix and returns its size.
pub fn validate_square(m: &Matrix) -> Result<usize> {
    if m.is_empty() {
        return Err(LinalgError::Empty);
    }
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(LinalgError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(m.nrows())
}

fn check_dim(m: &Matrix, d: usize) -> Result<()> {
    if m.nrows() != d {
        return Err(LinalgError::DimensionMismatch {
            expected: d,
            found: m.nrows(),
        });
    }
    Ok(())
}

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// (X + X⊤)/2.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asymmetry = (m - m.transpose()).amax();
    if asymmetry > SYMMETRY_REL_TOL * scale {
        return Err(LinalgError::NotSymmetric { asymmetry });
    }
    Ok(())
}

fn check_psd(m: &Matrix) -> Result<()> {
    check_symmetric(m)?;
    let eig = symmetrize(m).symmetric_eigenvalues();
    let max = eig.max().max(0.0);
    let min = eig.min();
    if min < -SPD_REL_FLOOR * max.max(1.0) {
        return Err(LinalgError::NotPositiveSemiDefinite { min_eig: min });
    }
    Ok(())
}

/// Eigenvalues of a general real square matrix (real part, imaginary part).
pub fn eigenvalues(m: &Matrix) -> Result<Vec<(f64, f64)>> {
    validate_square(m)?;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(LinalgError::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
}

/// Whether every eigenvalue of `abar` has real part above [`TAU_EIG`].
pub fn hurwitz_check(abar: &Matrix) -> Result<bool> {
    Ok(min_real_eigenvalue(abar)? > TAU_EIG)
}

fn min_real_eigenvalue(abar: &Matrix) -> Result<f64> {
    Ok(eigenvalues(abar)?
        .into_iter()
        .map(|(re, _)| re)
        .fold(f64::INFINITY, f64::min))
}

fn require_hurwitz(abar: &Matrix) -> Result<usize> {
    let d = validate_square(abar)?;
    let min_re = min_real_eigenvalue(abar)?;
    if min_re <= TAU_EIG {
        return Err(LinalgError::NotHurwitz { min_re });
    }
    Ok(d)
}

fn vec_of(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

fn unvec(v: &Vector, d: usize) -> Matrix {
    Matrix::from_column_slice(d, d, v.as_slice())
}

/// Solves `K vec(X) = vec(rhs)` with full pivoting plus a couple of rounds of
/// iterative refinement, then checks `residual(X)` against the relative tolerance.
fn solve_vectorized(
    equation: &'static str,
    k: &Matrix,
    rhs: &Matrix,
    residual: impl Fn(&Matrix) -> Matrix,
) -> Result<Matrix> {
    let d = rhs.nrows();
    let b = vec_of(rhs);
    let lu = k.clone().full_piv_lu();
    let mut x = lu.solve(&b).ok_or(LinalgError::Singular { equation })?;
    for _ in 0..REFINEMENT_STEPS {
        let r = &b - k * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::Singular { equation });
    }
    let sol = symmetrize(&unvec(&x, d));
    let res = op_norm(&residual(&sol));
    let tolerance = SOLVER_REL_TOL * (1.0 + op_norm(&sol));
    if !(res <= tolerance) {
        return Err(LinalgError::Residual {
            equation,
            residual: res,
            tolerance,
        });
    }
    Ok(sol)
}

/// Residual Ā⊤Q + QĀ − I.
pub fn lyapunov_residual(abar: &Matrix, q: &Matrix) -> Matrix {
    let d = abar.nrows();
    abar.transpose() * q + q * abar - Matrix::identity(d, d)
}

/// Residual ĀΣ + ΣĀ⊤ − Σ_ε.
pub fn sigma_residual(abar: &Matrix, sigma: &Matrix, sigma_eps: &Matrix) -> Matrix {
    abar * sigma + sigma * abar.transpose() - sigma_eps
}

/// Residual ĀΣ + ΣĀ⊤ − αĀΣĀ⊤ − Σ_ε.
pub fn ricatti_residual(abar: &Matrix, sigma: &Matrix, sigma_eps: &Matrix, alpha: f64) -> Matrix {
    abar * sigma + sigma * abar.transpose() - abar * sigma * abar.transpose() * alpha - sigma_eps
}

/// Solves Ā⊤Q + QĀ = I for symmetric positive-definite Q.
pub fn solve_lyapunov(abar: &Matrix) -> Result<Matrix> {
    let d = require_hurwitz(abar)?;
    let id = Matrix::identity(d, d);
    let at = abar.transpose();
    let k = id.kronecker(&at) + at.kronecker(&id);
    let q = solve_vectorized("Lyapunov", &k, &id, |q| lyapunov_residual(abar, q))?;
    let eig = q.symmetric_eigenvalues();
    let (min_eig, max_eig) = (eig.min(), eig.max());
    if !(min_eig > SPD_REL_FLOOR * max_eig) {
        return Err(LinalgError::NotPositiveDefinite { min_eig, max_eig });
    }
    Ok(q)
}

/// Solves ĀΣ + ΣĀ⊤ = Σ_ε, the limiting covariance equation.
pub fn solve_sigma(abar: &Matrix, sigma_eps: &Matrix) -> Result<Matrix> {
    let d = require_hurwitz(abar)?;
    validate_square(sigma_eps)?;
    check_dim(sigma_eps, d)?;
    check_psd(sigma_eps)?;
    let id = Matrix::identity(d, d);
    let k = id.kronecker(abar) + abar.kronecker(&id);
    solve_vectorized("covariance", &k, sigma_eps, |s| sigma_residual(abar, s, sigma_eps))
}

/// Solves ĀΣ^α + Σ^αĀ⊤ − αĀΣ^αĀ⊤ = Σ_ε for α ∈ (0, α∞].
pub fn solve_ricatti(abar: &Matrix, sigma_eps: &Matrix, alpha: f64) -> Result<Matrix> {
    let d = require_hurwitz(abar)?;
    validate_square(sigma_eps)?;
    check_dim(sigma_eps, d)?;
    check_psd(sigma_eps)?;
    let alpha_inf = alpha_inf_of(abar, &solve_lyapunov(abar)?)?;
    if !(alpha > 0.0 && alpha <= alpha_inf) {
        return Err(LinalgError::StepsizeOutOfRange { alpha, alpha_inf });
    }
    let id = Matrix::identity(d, d);
    let k = id.kronecker(abar) + abar.kronecker(&id) - abar.kronecker(abar) * alpha;
    solve_vectorized("Riccati", &k, sigma_eps, |s| {
        ricatti_residual(abar, s, sigma_eps, alpha)
    })
}

/// Schatten p-norm: the ℓ_p norm of the singular values. `p = f64::INFINITY`
/// gives the spectral norm.
pub fn schatten_norm(m: &Matrix, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(LinalgError::InvalidOrder(p));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let sv = m.singular_values();
    let top = sv.max();
    if p.is_infinite() || top == 0.0 {
        return Ok(top);
    }
    // Scaling by the top singular value keeps large p from overflowing.
    let sum: f64 = sv.iter().map(|s| (s / top).powf(p)).sum();
    Ok(top * sum.powf(1.0 / p))
}

/// The Q-weighted geometry: ∥x∥_Q = √(x⊤Qx) and the induced operator norm
/// ∥M∥_Q = ∥Q^{1/2} M Q^{-1/2}∥.
#[derive(Debug, Clone)]
pub struct WeightedNorm {
    q: Matrix,
    sqrt: Matrix,
    inv_sqrt: Matrix,
    min_eig: f64,
    max_eig: f64,
}

impl WeightedNorm {
    pub fn new(q: &Matrix) -> Result<Self> {
        validate_square(q)?;
        check_symmetric(q)?;
        let q = symmetrize(q);
        let eig = q.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.max();
        let min_eig = eig.eigenvalues.min();
        if !(max_eig > 0.0 && min_eig > SPD_REL_FLOOR * max_eig) {
            return Err(LinalgError::NotPositiveDefinite { min_eig, max_eig });
        }
        let v = &eig.eigenvectors;
        let root = Matrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let inv_root = Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        Ok(Self {
            sqrt: v * root * v.transpose(),
            inv_sqrt: v * inv_root * v.transpose(),
            q,
            min_eig,
            max_eig,
        })
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// λ_max(Q) / λ_min(Q).
    pub fn condition_number(&self) -> f64 {
        self.max_eig / self.min_eig
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eig
    }

    pub fn vector(&self, x: &Vector) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok((&self.sqrt * x).norm())
    }

    pub fn matrix(&self, m: &Matrix) -> Result<f64> {
        validate_square(m)?;
        check_dim(m, self.dim())?;
        Ok(op_norm(&(&self.sqrt * m * &self.inv_sqrt)))
    }
}

/// √(x⊤Qx).
pub fn weighted_vector_norm(x: &Vector, q: &Matrix) -> Result<f64> {
    WeightedNorm::new(q)?.vector(x)
}

/// max over ∥x∥_Q = 1 of ∥Mx∥_Q.
pub fn weighted_matrix_norm(m: &Matrix, q: &Matrix) -> Result<f64> {
    WeightedNorm::new(q)?.matrix(m)
}

fn alpha_inf_of(abar: &Matrix, q: &Matrix) -> Result<f64> {
    let w = WeightedNorm::new(q)?;
    let abar_q = w.matrix(abar)?;
    Ok(0.5 / (abar_q * abar_q * w.max_eigenvalue()))
}

/// Stepsize thresholds and weighted geometry derived from Ā and the noise bounds.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    pub dim: usize,
    pub abar: Matrix,
    pub norm: WeightedNorm,
    /// a = ∥Q∥⁻¹/2.
    pub a: f64,
    /// α∞ = ∥Ā∥_Q⁻² ∥Q∥⁻¹ / 2.
    pub alpha_inf: f64,
    pub kappa_q: f64,
    /// Almost-sure bound on ∥A₁∥.
    pub c_a: f64,
    /// b_Q = 2√κ_Q C_A.
    pub b_q: f64,
    /// b_Q′ = 2√κ_Q C_A′ for sub-Gaussian A.
    pub b_q_prime: Option<f64>,
}

impl SpectralProfile {
    pub fn q(&self) -> &Matrix {
        self.norm.q()
    }

    /// α_{p,∞} = α∞ ∧ a/(2 b_Q² (p−1)).
    pub fn alpha_p_inf(&self, p: f64) -> f64 {
        let second = self.a / (2.0 * self.b_q * self.b_q * (p - 1.0));
        if second.is_nan() {
            return self.alpha_inf;
        }
        self.alpha_inf.min(second)
    }

    /// ∥I − αĀ∥_Q², which the contraction contract bounds by 1 − aα.
    pub fn contraction_sq(&self, alpha: f64) -> f64 {
        let d = self.dim;
        let m = Matrix::identity(d, d) - &self.abar * alpha;
        let n = op_norm(&(&self.norm.sqrt * m * &self.norm.inv_sqrt));
        n * n
    }
}

/// Builds the spectral profile of Ā with noise bound `c_a` (and optionally the
/// sub-Gaussian bound `c_a_prime`).
pub fn spectral_profile(abar: &Matrix, c_a: f64, c_a_prime: Option<f64>) -> Result<SpectralProfile> {
    for c in std::iter::once(c_a).chain(c_a_prime) {
        if !(c.is_finite() && c >= 0.0) {
            return Err(LinalgError::InvalidNoiseBound(c));
        }
    }
    let q = solve_lyapunov(abar)?;
    let norm = WeightedNorm::new(&q)?;
    let q_norm = norm.max_eigenvalue();
    let abar_q = norm.matrix(abar)?;
    let kappa_q = norm.condition_number();
    let root_kappa = kappa_q.sqrt();
    Ok(SpectralProfile {
        dim: abar.nrows(),
        abar: abar.clone(),
        a: 0.5 / q_norm,
        alpha_inf: 0.5 / (abar_q * abar_q * q_norm),
        kappa_q,
        c_a,
        b_q: 2.0 * root_kappa * c_a,
        b_q_prime: c_a_prime.map(|c| 2.0 * root_kappa * c),
        norm,
    })
}

/// α_{p,∞} = min(α∞, a/(2 b_Q² (p−1))).
pub fn alpha_p_inf(profile: &SpectralProfile, p: f64) -> f64 {
    profile.alpha_p_inf(p)
}
