//! Problem instances (A_n, b_n) for the LSA recursion and their samplers.
//!
//! Every built-in sampler has a finitely supported A, which is what makes the
//! exact second-moment oracles in [`crate::engine`] possible. The two
//! Rademacher models are deliberately flagged as violating the noise assumption: they are
//! the instances on which high moments of the iterates blow up.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, SpectralProfile, Vector, WeightedNorm};
use crate::rng::Stream;

const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITER: usize = 1_000_000;
const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("q_a = {0} must lie in (1/2, 1)")]
    InvalidBias(f64),
    #[error("{name} = {value} must be finite and nonnegative")]
    InvalidScale { name: &'static str, value: f64 },
    #[error("discount factor {0} must lie in [0, 1)")]
    InvalidDiscount(f64),
    #[error("{what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("row {row} of the transition matrix is not a probability vector")]
    NotStochastic { row: usize },
    #[error("transition matrix is reducible; the stationary law is not unique")]
    Reducible,
    #[error("power iteration for the stationary law did not converge in {0} steps")]
    StationaryNotConverged(usize),
    #[error("mean matrix is singular, so θ* is undefined")]
    SingularMean,
    #[error("contractive data: {0}")]
    InvalidContractive(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Serializable description of a model, as found in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerSpec {
    BiasedRademacher1d {
        q_a: f64,
    },
    RademacherGaussian1d {
        q_a: f64,
        sigma: f64,
    },
    BoundedFactor {
        abar: Vec<Vec<f64>>,
        bbar: Vec<f64>,
        perturbation: Vec<Vec<f64>>,
        eta: f64,
        sigma: f64,
    },
    TdZeroMrp {
        transition: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        features: Vec<Vec<f64>>,
        gamma: f64,
    },
}

/// Data for the almost-sure contraction regime: ∥I − αA₁∥_Q̃ < 1 − ãα for
/// α ∈ (0, α̃∞].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractiveSpec {
    pub q_tilde: Vec<Vec<f64>>,
    pub a_tilde: f64,
    pub alpha_tilde_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub sampler: SamplerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contractive: Option<ContractiveSpec>,
}

#[derive(Debug, Clone)]
pub struct Contractive {
    pub norm: WeightedNorm,
    pub a_tilde: f64,
    pub alpha_tilde_inf: f64,
}

impl Contractive {
    pub fn kappa(&self) -> f64 {
        self.norm.condition_number()
    }
}

#[derive(Debug, Clone)]
struct TdChain {
    features: Matrix,
    rewards: Vec<f64>,
    gamma: f64,
    transition: Matrix,
    stationary: Vec<f64>,
    stationary_cdf: Vec<f64>,
    transition_cdf: Vec<Vec<f64>>,
}

impl TdChain {
    fn phi(&self, x: usize) -> Vector {
        self.features.row(x).transpose()
    }

    fn a_of(&self, x: usize, y: usize) -> Matrix {
        let px = self.phi(x);
        let diff = &px - self.phi(y) * self.gamma;
        px * diff.transpose()
    }

    fn b_of(&self, x: usize) -> Vector {
        self.phi(x) * self.rewards[x]
    }

    /// (weight, x, x′) over pairs of positive probability.
    fn pairs(&self) -> impl Iterator<Item = (f64, usize, usize)> + '_ {
        let n = self.rewards.len();
        (0..n).flat_map(move |x| {
            (0..n).filter_map(move |y| {
                let w = self.stationary[x] * self.transition[(x, y)];
                (w > 0.0).then_some((w, x, y))
            })
        })
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    BiasedRademacher { q_a: f64 },
    RademacherGaussian { q_a: f64, sigma: f64 },
    BoundedFactor { m: Matrix, eta: f64, sigma: f64 },
    Td(Box<TdChain>),
}

/// A validated LSA problem instance with its derived constants.
#[derive(Debug, Clone)]
pub struct LsaModel {
    pub dim: usize,
    pub abar: Matrix,
    pub bbar: Vector,
    pub theta_star: Vector,
    /// Almost-sure bound on ∥A₁∥.
    pub c_a: f64,
    /// Sub-Gaussian parameter of u⊤(b₁ − b̄), uniformly over unit u.
    pub sigma_b: f64,
    pub contractive: Option<Contractive>,
    /// False for the Rademacher models, whose high moments grow.
    pub noise_assumption_holds: bool,
    sampler: Sampler,
    profile: Option<SpectralProfile>,
}

fn matrix_from_rows(what: &'static str, rows: &[Vec<f64>], cols: Option<usize>) -> Result<Matrix> {
    let n = rows.len();
    let width = cols.unwrap_or(n);
    if n == 0 {
        return Err(ModelError::Shape {
            what,
            expected: 1,
            found: 0,
        });
    }
    for r in rows {
        if r.len() != width {
            return Err(ModelError::Shape {
                what,
                expected: width,
                found: r.len(),
            });
        }
    }
    let m = Matrix::from_fn(n, width, |i, j| rows[i][j]);
    if let Some((i, j)) = (0..n)
        .flat_map(|i| (0..width).map(move |j| (i, j)))
        .find(|&(i, j)| !m[(i, j)].is_finite())
    {
        return Err(LinalgError::NonFinite { row: i, col: j }.into());
    }
    Ok(m)
}

fn check_scale(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidScale { name, value })
    }
}

fn check_bias(q_a: f64) -> Result<()> {
    if q_a > 0.5 && q_a < 1.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidBias(q_a))
    }
}

fn cdf_of(weights: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .into_iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn is_irreducible(p: &Matrix) -> bool {
    let n = p.nrows();
    let reach_all = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                let w = if forward { p[(x, y)] } else { p[(y, x)] };
                if w > 0.0 && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach_all(true) && reach_all(false)
}

/// Stationary law of an irreducible stochastic matrix by power iteration on
/// the lazy chain (I + P)/2, which shares its stationary law and is aperiodic.
fn stationary_law(p: &Matrix) -> Result<Vec<f64>> {
    if !is_irreducible(p) {
        return Err(ModelError::Reducible);
    }
    let n = p.nrows();
    let mut mu = vec![1.0 / n as f64; n];
    for _ in 0..STATIONARY_MAX_ITER {
        let next: Vec<f64> = (0..n)
            .map(|y| 0.5 * mu[y] + 0.5 * (0..n).map(|x| mu[x] * p[(x, y)]).sum::<f64>())
            .collect();
        let change: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        if change <= STATIONARY_TOL {
            let total: f64 = mu.iter().sum();
            return Ok(mu.into_iter().map(|m| m / total).collect());
        }
    }
    Err(ModelError::StationaryNotConverged(STATIONARY_MAX_ITER))
}

impl LsaModel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let model = match &spec.sampler {
            SamplerSpec::BiasedRademacher1d { q_a } => Self::biased_rademacher(*q_a)?,
            SamplerSpec::RademacherGaussian1d { q_a, sigma } => Self::rademacher_gaussian(*q_a, *sigma)?,
            SamplerSpec::BoundedFactor {
                abar,
                bbar,
                perturbation,
                eta,
                sigma,
            } => {
                let abar = matrix_from_rows("abar", abar, None)?;
                let m = matrix_from_rows("perturbation", perturbation, None)?;
                Self::bounded_factor(abar, Vector::from_vec(bbar.clone()), m, *eta, *sigma)?
            }
            SamplerSpec::TdZeroMrp {
                transition,
                rewards,
                features,
                gamma,
            } => {
                let p = matrix_from_rows("transition", transition, None)?;
                let width = features.first().map_or(0, Vec::len);
                let phi = matrix_from_rows("features", features, Some(width))?;
                Self::td_zero(p, rewards.clone(), phi, *gamma)?
            }
        };
        match &spec.contractive {
            None => Ok(model),
            Some(c) => {
                let q = matrix_from_rows("q_tilde", &c.q_tilde, None)?;
                model.with_contractive(q, c.a_tilde, c.alpha_tilde_inf)
            }
        }
    }

    /// A = ±1 with P(+1) = q_a and b = 0.
    pub fn biased_rademacher(q_a: f64) -> Result<Self> {
        check_bias(q_a)?;
        Self::rademacher_like(Sampler::BiasedRademacher { q_a }, q_a, 0.0)
    }

    /// A = ±1 with P(+1) = q_a and b ~ N(0, σ²) independent of A.
    pub fn rademacher_gaussian(q_a: f64, sigma: f64) -> Result<Self> {
        check_bias(q_a)?;
        check_scale("sigma", sigma)?;
        Self::rademacher_like(Sampler::RademacherGaussian { q_a, sigma }, q_a, sigma)
    }

    fn rademacher_like(sampler: Sampler, q_a: f64, sigma_b: f64) -> Result<Self> {
        let abar = Matrix::from_element(1, 1, 2.0 * q_a - 1.0);
        Self::assemble(sampler, abar, Vector::zeros(1), 1.0, sigma_b, false)
    }

    /// A = Ā + ηζM with ζ Rademacher(1/2), b = b̄ + σg with g standard normal.
    /// η = σ = 0 gives the deterministic model A ≡ Ā, b ≡ b̄.
    pub fn bounded_factor(abar: Matrix, bbar: Vector, m: Matrix, eta: f64, sigma: f64) -> Result<Self> {
        let d = linalg::validate_square(&abar)?;
        linalg::validate_square(&m)?;
        if m.nrows() != d {
            return Err(ModelError::Shape {
                what: "perturbation",
                expected: d,
                found: m.nrows(),
            });
        }
        if bbar.len() != d {
            return Err(ModelError::Shape {
                what: "bbar",
                expected: d,
                found: bbar.len(),
            });
        }
        if bbar.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidScale {
                name: "bbar",
                value: f64::NAN,
            });
        }
        check_scale("eta", eta)?;
        check_scale("sigma", sigma)?;
        let c_a = linalg::op_norm(&abar) + eta * linalg::op_norm(&m);
        let compliant = linalg::hurwitz_check(&abar)?;
        Self::assemble(
            Sampler::BoundedFactor { m, eta, sigma },
            abar,
            bbar,
            c_a,
            sigma,
            compliant,
        )
    }

    /// TD(0) with linear features on a finite Markov reward process, states
    /// drawn i.i.d. from the stationary law.
    pub fn td_zero(transition: Matrix, rewards: Vec<f64>, features: Matrix, gamma: f64) -> Result<Self> {
        let n = linalg::validate_square(&transition)?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(ModelError::InvalidDiscount(gamma));
        }
        if rewards.len() != n {
            return Err(ModelError::Shape {
                what: "rewards",
                expected: n,
                found: rewards.len(),
            });
        }
        if features.nrows() != n || features.ncols() == 0 {
            return Err(ModelError::Shape {
                what: "feature rows",
                expected: n,
                found: features.nrows(),
            });
        }
        if rewards.iter().chain(features.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidScale {
                name: "rewards/features",
                value: f64::NAN,
            });
        }
        for row in 0..n {
            let r = transition.row(row);
            if r.iter().any(|&p| p < 0.0) || (r.sum() - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ModelError::NotStochastic { row });
            }
        }
        let stationary = stationary_law(&transition)?;
        let mut chain = TdChain {
            stationary_cdf: cdf_of(stationary.iter().copied()),
            transition_cdf: (0..n).map(|x| cdf_of(transition.row(x).iter().copied())).collect(),
            features,
            rewards,
            gamma,
            transition,
            stationary,
        };
        chain.stationary_cdf[n - 1] = 1.0;
        for cdf in &mut chain.transition_cdf {
            cdf[n - 1] = 1.0;
        }
        let d = chain.features.ncols();
        let mut abar = Matrix::zeros(d, d);
        let mut bbar = Vector::zeros(d);
        let mut c_a: f64 = 0.0;
        for (w, x, y) in chain.pairs() {
            let a = chain.a_of(x, y);
            c_a = c_a.max(linalg::op_norm(&a));
            abar += a * w;
        }
        for x in 0..n {
            bbar += chain.b_of(x) * chain.stationary[x];
        }
        let sigma_b = (0..n)
            .filter(|&x| chain.stationary[x] > 0.0)
            .map(|x| (chain.b_of(x) - &bbar).norm())
            .fold(0.0, f64::max);
        let compliant = linalg::hurwitz_check(&abar)?;
        Self::assemble(Sampler::Td(Box::new(chain)), abar, bbar, c_a, sigma_b, compliant)
    }

    fn assemble(
        sampler: Sampler,
        abar: Matrix,
        bbar: Vector,
        c_a: f64,
        sigma_b: f64,
        noise_assumption_holds: bool,
    ) -> Result<Self> {
        let theta_star = abar.clone().lu().solve(&bbar).ok_or(ModelError::SingularMean)?;
        if theta_star.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::SingularMean);
        }
        let profile = if linalg::hurwitz_check(&abar)? {
            Some(linalg::spectral_profile(&abar, c_a, None)?)
        } else {
            None
        };
        Ok(Self {
            dim: abar.nrows(),
            abar,
            bbar,
            theta_star,
            c_a,
            sigma_b,
            contractive: None,
            noise_assumption_holds,
            sampler,
            profile,
        })
    }

    /// Attaches almost-sure contraction data, checked on the support of A over
    /// a grid of stepsizes in (0, α̃∞].
    pub fn with_contractive(mut self, q_tilde: Matrix, a_tilde: f64, alpha_tilde_inf: f64) -> Result<Self> {
        if !(a_tilde > 0.0 && a_tilde.is_finite()) || !(alpha_tilde_inf > 0.0 && alpha_tilde_inf.is_finite()) {
            return Err(ModelError::InvalidContractive(format!(
                "a_tilde = {a_tilde} and alpha_tilde_inf = {alpha_tilde_inf} must be positive"
            )));
        }
        let norm = WeightedNorm::new(&q_tilde)?;
        if norm.dim() != self.dim {
            return Err(ModelError::Shape {
                what: "q_tilde",
                expected: self.dim,
                found: norm.dim(),
            });
        }
        let id = Matrix::identity(self.dim, self.dim);
        for k in 1..=64 {
            let alpha = alpha_tilde_inf * k as f64 / 64.0;
            for (_, a) in self.a_support() {
                let lhs = norm.matrix(&(&id - a * alpha))?;
                if !(lhs < 1.0 - a_tilde * alpha) {
                    return Err(ModelError::InvalidContractive(format!(
                        "||I - alpha A||_Q~ = {lhs} >= 1 - a_tilde alpha at alpha = {alpha}"
                    )));
                }
            }
        }
        self.contractive = Some(Contractive {
            norm,
            a_tilde,
            alpha_tilde_inf,
        });
        Ok(self)
    }

    /// Spectral profile of Ā with C_A = c_a, when Ā is Hurwitz.
    pub fn profile(&self) -> std::result::Result<&SpectralProfile, LinalgError> {
        self.profile.as_ref().ok_or_else(|| LinalgError::NotHurwitz {
            min_re: linalg::eigenvalues(&self.abar)
                .map(|e| e.into_iter().map(|z| z.0).fold(f64::INFINITY, f64::min))
                .unwrap_or(f64::NAN),
        })
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.sampler, Sampler::BoundedFactor { eta, sigma, .. } if eta == 0.0 && sigma == 0.0)
    }

    /// Bias q_a of the Rademacher models.
    pub fn rademacher_bias(&self) -> Option<f64> {
        match self.sampler {
            Sampler::BiasedRademacher { q_a } | Sampler::RademacherGaussian { q_a, .. } => Some(q_a),
            _ => None,
        }
    }

    /// Buffers of the right shape for [`LsaModel::sample_into`].
    pub fn buffers(&self) -> (Matrix, Vector) {
        (Matrix::zeros(self.dim, self.dim), Vector::zeros(self.dim))
    }

    /// Writes one draw (A, b) into preallocated buffers. Each variant consumes
    /// a fixed number of uniforms per draw.
    pub fn sample_into(&self, rng: &mut Stream, a: &mut Matrix, b: &mut Vector) {
        match &self.sampler {
            Sampler::BiasedRademacher { q_a } => {
                a[(0, 0)] = rng.sign(*q_a);
                b[0] = 0.0;
            }
            Sampler::RademacherGaussian { q_a, sigma } => {
                a[(0, 0)] = rng.sign(*q_a);
                b[0] = sigma * rng.normal();
            }
            Sampler::BoundedFactor { m, eta, sigma } => {
                let zeta = rng.sign(0.5);
                a.copy_from(&self.abar);
                let c = eta * zeta;
                a.zip_apply(m, |x, y| *x += c * y);
                for i in 0..self.dim {
                    b[i] = self.bbar[i] + sigma * rng.normal();
                }
            }
            Sampler::Td(chain) => {
                let x = rng.categorical(&chain.stationary_cdf);
                let y = rng.categorical(&chain.transition_cdf[x]);
                a.copy_from(&chain.a_of(x, y));
                b.copy_from(&chain.b_of(x));
            }
        }
    }

    pub fn sample_pair(&self, rng: &mut Stream) -> (Matrix, Vector) {
        let (mut a, mut b) = self.buffers();
        self.sample_into(rng, &mut a, &mut b);
        (a, b)
    }

    /// ε = (b − b̄) − (A − Ā)θ*.
    pub fn eps_noise(&self, a: &Matrix, b: &Vector) -> Vector {
        (b - &self.bbar) - (a - &self.abar) * &self.theta_star
    }

    /// The law of A as (probability, value) pairs.
    pub fn a_support(&self) -> Vec<(f64, Matrix)> {
        let scalar = |v: f64| Matrix::from_element(1, 1, v);
        match &self.sampler {
            Sampler::BiasedRademacher { q_a } | Sampler::RademacherGaussian { q_a, .. } => {
                vec![(*q_a, scalar(1.0)), (1.0 - q_a, scalar(-1.0))]
            }
            Sampler::BoundedFactor { m, eta, .. } => {
                if *eta == 0.0 {
                    vec![(1.0, self.abar.clone())]
                } else {
                    vec![(0.5, &self.abar + m * *eta), (0.5, &self.abar - m * *eta)]
                }
            }
            Sampler::Td(chain) => chain.pairs().map(|(w, x, y)| (w, chain.a_of(x, y))).collect(),
        }
    }

    /// Σ_ε = E[εε⊤] in closed form.
    pub fn sigma_eps(&self) -> Matrix {
        let d = self.dim;
        match &self.sampler {
            Sampler::BiasedRademacher { .. } => Matrix::zeros(1, 1),
            Sampler::RademacherGaussian { q_a, sigma } => {
                // Var(A) θ*² vanishes since b̄ = 0, but keep the general form.
                let var_a = 1.0 - (2.0 * q_a - 1.0).powi(2);
                Matrix::from_element(1, 1, sigma * sigma + var_a * self.theta_star[0].powi(2))
            }
            Sampler::BoundedFactor { m, eta, sigma } => {
                let mt = m * &self.theta_star;
                Matrix::identity(d, d) * (sigma * sigma) + &mt * mt.transpose() * (eta * eta)
            }
            Sampler::Td(chain) => {
                let mut acc = Matrix::zeros(d, d);
                for (w, x, y) in chain.pairs() {
                    let e = self.eps_noise(&chain.a_of(x, y), &chain.b_of(x));
                    acc += &e * e.transpose() * w;
                }
                linalg::symmetrize(&acc)
            }
        }
    }

    /// Monte Carlo estimate of Σ_ε with entrywise standard errors, for
    /// cross-checking [`LsaModel::sigma_eps`].
    pub fn sigma_eps_mc(&self, n: usize, seed: u64) -> (Matrix, Matrix) {
        let d = self.dim;
        let mut rng = Stream::new(seed, 0);
        let (mut a, mut b) = self.buffers();
        let mut sum = Matrix::zeros(d, d);
        let mut sum_sq = Matrix::zeros(d, d);
        for _ in 0..n {
            self.sample_into(&mut rng, &mut a, &mut b);
            let e = self.eps_noise(&a, &b);
            let outer = &e * e.transpose();
            sum_sq += outer.component_mul(&outer);
            sum += outer;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sum_sq / nf - mean.component_mul(&mean)) * (nf / (nf - 1.0));
        let se = var.map(|v| (v.max(0.0) / nf).sqrt());
        (mean, se)
    }

    /// C_ε = √(2σ_b² + 8 C_A² ∥θ*∥²).
    pub fn eps_subgauss_const(&self) -> f64 {
        eps_subgauss_const(self.sigma_b, self.c_a, self.theta_star.norm())
    }
}

/// C_ε = √(2σ_b² + 8 C_A² ∥θ*∥²).
pub fn eps_subgauss_const(sigma_b: f64, c_a: f64, theta_star_norm: f64) -> f64 {
    (2.0 * sigma_b * sigma_b + 8.0 * c_a * c_a * theta_star_norm * theta_star_norm).sqrt()
}
