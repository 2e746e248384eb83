//! Closed-form bounds for matrix products, the LSA error terms and the
//! Rademacher counterexample.
//!
//! Evaluators work in log space where a bound is a product of powers and
//! exponentiate once at the end. Stepsizes outside a bound's range are hard
//! errors: the bounds say nothing there.

use std::f64::consts::{E, SQRT_2};

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, SpectralProfile, Vector};
use crate::noise::LsaModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("delta = {delta} outside {window}")]
    InvalidDelta { delta: f64, window: String },
    #[error("stepsize {alpha} violates {threshold_name} = {threshold}")]
    StepsizeOutOfRange {
        alpha: f64,
        threshold_name: &'static str,
        threshold: f64,
    },
    #[error("base of the product bound is {base} <= 0 at alpha = {alpha}; alpha_p_inf = {alpha_p_inf}")]
    NegativeBase { alpha: f64, base: f64, alpha_p_inf: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("the contractive variant needs contraction data")]
    MissingContractive,
    #[error("the sub-Gaussian variant needs b_Q'")]
    MissingSubGaussian,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, BoundError>;

/// One evaluated bound together with everything that went into it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub inputs: Vec<(String, f64)>,
    pub constants: Vec<(String, f64)>,
    pub value: f64,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn constant(&self, key: &str) -> Option<f64> {
        self.constants.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Flat key-value view: `input.*`, `const.*` and `value`.
    pub fn to_flat(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .inputs
            .iter()
            .map(|(k, v)| (format!("input.{k}"), *v))
            .chain(self.constants.iter().map(|(k, v)| (format!("const.{k}"), *v)))
            .collect();
        out.push(("value".to_owned(), self.value));
        out
    }
}

fn invalid(msg: impl Into<String>) -> BoundError {
    BoundError::InvalidArgument(msg.into())
}

fn check_delta(delta: f64, hi: f64, hi_inclusive: bool) -> Result<()> {
    let ok = delta > 0.0 && if hi_inclusive { delta <= hi } else { delta < hi };
    if ok {
        Ok(())
    } else {
        let close = if hi_inclusive { ']' } else { ')' };
        Err(BoundError::InvalidDelta {
            delta,
            window: format!("(0, {hi}{close}"),
        })
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be positive and finite")))
    }
}

fn check_nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be nonnegative and finite")))
    }
}

/// D₁ = 60√3·e^{4/3}.
pub fn d1() -> f64 {
    60.0 * 3f64.sqrt() * (4.0f64 / 3.0).exp()
}

/// D₂ = 540√3·e^{1/3}·√κ_Q·C_ε.
pub fn d2(kappa_q: f64, c_eps: f64) -> f64 {
    540.0 * 3f64.sqrt() * (1.0f64 / 3.0).exp() * kappa_q.sqrt() * c_eps
}

/// D₃ = 72√2·C_A·κ_Q·C_ε·a⁻¹·(1 − a·α_ref)⁻¹.
///
/// The stated constant takes α_ref = α∞. Since a·α∞ ≤ 1, with equality
/// whenever Ā is a multiple of the identity (every 1-D model), callers may pass
/// the working stepsize instead; see [`d3_reference_stepsize`].
pub fn d3(c_a: f64, kappa_q: f64, c_eps: f64, a: f64, alpha_ref: f64) -> Result<f64> {
    let gap = 1.0 - a * alpha_ref;
    if !(gap > 0.0) {
        return Err(invalid(format!("1 - a*alpha_ref = {gap} must be positive")));
    }
    Ok(72.0 * SQRT_2 * c_a * kappa_q * c_eps / (a * gap))
}

/// Stepsize at which D₃'s factor (1 − aα)⁻¹ is evaluated: α∞ unless
/// 1 − aα∞ is within 1e-9 of zero, in which case the working stepsize α is used.
/// The moment bound on J¹ only needs the factor at the α actually run, and
/// (1 − aα)⁻¹ ≤ (1 − aα∞)⁻¹, so both choices are valid upper bounds.
pub fn d3_reference_stepsize(profile: &SpectralProfile, alpha: f64) -> f64 {
    if 1.0 - profile.a * profile.alpha_inf > 1e-9 {
        profile.alpha_inf
    } else {
        alpha
    }
}

/// D₄ = 4·C_A·√κ_Q·d^{1/p₀}·D₃/a.
pub fn d4(c_a: f64, kappa_q: f64, dim: usize, p0: f64, d3: f64, a: f64) -> f64 {
    4.0 * c_a * kappa_q.sqrt() * (dim as f64).powf(1.0 / p0) * d3 / a
}

/// D₅ = 2·√κ_Q̃·C_A·D₃/ã.
pub fn d5(kappa_tilde: f64, c_a: f64, d3: f64, a_tilde: f64) -> f64 {
    2.0 * kappa_tilde.sqrt() * c_a * d3 / a_tilde
}

/// Moment bound on E^{1/q}∥Γ_{1:n}∥^q:
/// √κ_Q·d^{1/p}·(1 − aα + (p−1)b_Q²α²)^{n/2}, or with q(p−1)(b_Q′)² in place of
/// (p−1)b_Q² for sub-Gaussian A.
pub fn product_moment_bound(
    profile: &SpectralProfile,
    p: f64,
    q: f64,
    alpha: f64,
    n: u64,
    subgaussian_a: bool,
) -> Result<f64> {
    if !(q >= 2.0 && q <= p && p.is_finite()) {
        return Err(invalid(format!("need 2 <= q <= p < inf, got p = {p}, q = {q}")));
    }
    if !(alpha >= 0.0 && alpha <= profile.alpha_inf) {
        return Err(BoundError::StepsizeOutOfRange {
            alpha,
            threshold_name: "alpha_inf",
            threshold: profile.alpha_inf,
        });
    }
    let coef = if subgaussian_a {
        let b = profile.b_q_prime.ok_or(BoundError::MissingSubGaussian)?;
        q * (p - 1.0) * b * b
    } else {
        (p - 1.0) * profile.b_q * profile.b_q
    };
    let base = 1.0 - profile.a * alpha + coef * alpha * alpha;
    if !(base > 0.0) {
        return Err(BoundError::NegativeBase {
            alpha,
            base,
            alpha_p_inf: profile.alpha_p_inf(p),
        });
    }
    let log = 0.5 * profile.kappa_q.ln() + (profile.dim as f64).ln() / p + 0.5 * n as f64 * base.ln();
    Ok(log.exp())
}

/// High-probability product bound: with probability 1 − δ,
/// ∥Γ_{1:n}∥ ≤ √κ_Q·exp(−(aαn − α²b_Q²n)/2 + b_Qα√(2n log(d/δ))).
pub fn product_hp_bound(profile: &SpectralProfile, alpha: f64, n: u64, delta: f64) -> Result<f64> {
    check_delta(delta, 1.0, true)?;
    check_nonnegative("alpha", alpha)?;
    let (a, b, nf) = (profile.a, profile.b_q, n as f64);
    let log_d = (profile.dim as f64 / delta).ln();
    let log = 0.5 * profile.kappa_q.ln() - (a * alpha * nf - alpha * alpha * b * b * nf) / 2.0
        + b * alpha * (2.0 * nf * log_d).sqrt();
    Ok(log.exp())
}

/// Moments-to-concentration: if E^{1/p}|X|^p ≤ C^{1/p} exp(−A + Bp) for
/// p ∈ [p₀, p₁], then with probability 1 − δ,
/// |X| ≤ exp(−A + B·p₀ + 2√(B log(C/δ)) + log(C/δ)/p₁).
pub fn moments_to_hp(a: f64, b: f64, c: f64, p0: f64, p1: f64, delta: f64) -> Result<f64> {
    check_delta(delta, 1.0, true)?;
    check_positive("B", b)?;
    if !(c >= 1.0 && c.is_finite()) {
        return Err(invalid(format!("C = {c} must be >= 1")));
    }
    if !(p0 >= 1.0 && p0 <= p1) {
        return Err(invalid(format!("need 1 <= p0 <= p1, got {p0}, {p1}")));
    }
    let l = (c / delta).ln();
    let tail = if p1.is_infinite() { 0.0 } else { l / p1 };
    Ok((-a + b * p0 + 2.0 * (b * l).sqrt() + tail).exp())
}

fn require_below(alpha: f64, threshold_name: &'static str, threshold: f64) -> Result<()> {
    if alpha > 0.0 && alpha < threshold {
        Ok(())
    } else {
        Err(BoundError::StepsizeOutOfRange {
            alpha,
            threshold_name,
            threshold,
        })
    }
}

/// Transient term: with probability 1 − δ,
/// ∥Γ_{1:n}(θ₀ − θ*)∥ ≤ √κ_Q·d^{1/p₀}·(1 − aα/4)ⁿ·∥θ₀ − θ*∥·δ^{−1/p₀}.
pub fn transient_hp_bound(
    profile: &SpectralProfile,
    p0: f64,
    alpha: f64,
    n: u64,
    theta0_err_norm: f64,
    delta: f64,
) -> Result<f64> {
    if !(p0 >= 2.0 && p0.is_finite()) {
        return Err(invalid(format!("p0 = {p0} must be >= 2")));
    }
    require_below(alpha, "alpha_p0_inf", profile.alpha_p_inf(p0))?;
    check_delta(delta, 1.0, true)?;
    check_nonnegative("||theta0 - theta*||", theta0_err_norm)?;
    if theta0_err_norm == 0.0 {
        return Ok(0.0);
    }
    let log = 0.5 * profile.kappa_q.ln()
        + (profile.dim as f64).ln() / p0
        + n as f64 * (1.0 - profile.a * alpha / 4.0).ln()
        + theta0_err_norm.ln()
        - delta.ln() / p0;
    Ok(log.exp())
}

fn log_term(rate: f64, alpha: f64) -> f64 {
    (1.0 + (1.0 / (rate * alpha)).ln()).sqrt()
}

/// Leading fluctuation term J⁰: with probability 1 − δ,
/// |u⊤J⁰_n| ≤ D₁√(var_term·log(2/δ)) + α√(1 + log(1/(aα)))·D₂·log^{3/2}(2/δ),
/// where var_term = u⊤Σ^α_n u.
pub fn j0_hp_bound(var_term: f64, profile: &SpectralProfile, alpha: f64, delta: f64, c_eps: f64) -> Result<f64> {
    check_delta(delta, 1.0, false)?;
    check_nonnegative("var_term", var_term)?;
    check_nonnegative("c_eps", c_eps)?;
    if !(alpha >= 0.0 && alpha <= profile.alpha_inf) {
        return Err(BoundError::StepsizeOutOfRange {
            alpha,
            threshold_name: "alpha_inf",
            threshold: profile.alpha_inf,
        });
    }
    let l2 = (2.0 / delta).ln();
    let first = d1() * (var_term * l2).sqrt();
    let second = if alpha == 0.0 {
        0.0
    } else {
        alpha * log_term(profile.a, alpha) * d2(profile.kappa_q, c_eps) * l2.powf(1.5)
    };
    Ok(first + second)
}

/// Which high-probability theorem to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Bounded i.i.d. noise: polynomial in 1/δ.
    Iid,
    /// Almost-sure contraction ∥I − αA∥_Q̃ < 1 − ãα: exponential in log(1/δ).
    Contractive,
}

/// Scalars of the almost-sure contraction regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractiveData {
    pub kappa_tilde: f64,
    pub a_tilde: f64,
    pub alpha_tilde_inf: f64,
}

impl ContractiveData {
    pub fn of(model: &LsaModel) -> Option<Self> {
        model.contractive.as_ref().map(|c| Self {
            kappa_tilde: c.kappa(),
            a_tilde: c.a_tilde,
            alpha_tilde_inf: c.alpha_tilde_inf,
        })
    }
}

/// Props. 7 and 8: (bound on |u⊤J¹_n|, bound on |u⊤H¹_n|), each holding with
/// probability 1 − δ. The i.i.d. regime gives (e·D₃·α·log²(1/δ),
/// D₄·α·p₀²·δ^{−1/p₀}); the contractive regime replaces the second by
/// e·D₅·α·log²(1/δ).
pub fn j1_h1_bounds(
    profile: &SpectralProfile,
    p0: f64,
    alpha: f64,
    delta: f64,
    c_eps: f64,
    regime: Regime,
    contractive: Option<&ContractiveData>,
) -> Result<(f64, f64)> {
    check_delta(delta, 0.5, false)?;
    check_nonnegative("alpha", alpha)?;
    check_nonnegative("c_eps", c_eps)?;
    if !(p0 >= 2.0 && p0.is_finite()) {
        return Err(invalid(format!("p0 = {p0} must be >= 2")));
    }
    let d3v = d3(
        profile.c_a,
        profile.kappa_q,
        c_eps,
        profile.a,
        d3_reference_stepsize(profile, alpha),
    )?;
    let l1 = (1.0 / delta).ln();
    let j1 = E * d3v * alpha * l1 * l1;
    let h1 = match regime {
        Regime::Iid => {
            let d4v = d4(profile.c_a, profile.kappa_q, profile.dim, p0, d3v, profile.a);
            d4v * alpha * p0 * p0 * delta.powf(-1.0 / p0)
        }
        Regime::Contractive => {
            let c = contractive.ok_or(BoundError::MissingContractive)?;
            E * d5(c.kappa_tilde, profile.c_a, d3v, c.a_tilde) * alpha * l1 * l1
        }
    };
    Ok((j1, h1))
}

/// Arguments of [`composite_hp_bound`].
#[derive(Debug, Clone)]
pub struct CompositeQuery {
    pub p0: f64,
    pub alpha: f64,
    pub n: u64,
    pub theta0: Vector,
    /// Direction u; normalized before use.
    pub u: Vector,
    pub delta: f64,
    pub regime: Regime,
}

/// Composite bound: with probability at least 1 − 4δ,
///
/// |u⊤(θ_n − θ*)| < α^{1/2}[D₁√(u⊤Σ^αu·log(2/δ)) + α^{1/2}q(α,δ)] + α^{1/2}·decayⁿ·Δ(α,δ).
///
/// The report also carries the four per-term bounds (transient, J⁰, J¹, H¹),
/// whose sum equals the assembled value up to rounding.
pub fn composite_hp_bound(profile: &SpectralProfile, model: &LsaModel, query: &CompositeQuery) -> Result<BoundReport> {
    let CompositeQuery {
        p0,
        alpha,
        n,
        delta,
        regime,
        ..
    } = *query;
    check_delta(delta, 0.25, false)?;
    if !(p0 >= 2.0 && p0.is_finite()) {
        return Err(invalid(format!("p0 = {p0} must be >= 2")));
    }
    if query.theta0.len() != model.dim || query.u.len() != model.dim {
        return Err(invalid("theta0 and u must match the model dimension"));
    }
    let u_norm = query.u.norm();
    check_positive("||u||", u_norm)?;
    let u = &query.u / u_norm;
    let contractive = ContractiveData::of(model);
    match regime {
        Regime::Iid => require_below(alpha, "alpha_p0_inf", profile.alpha_p_inf(p0))?,
        Regime::Contractive => {
            let c = contractive.as_ref().ok_or(BoundError::MissingContractive)?;
            require_below(alpha, "alpha_inf", profile.alpha_inf)?;
            require_below(alpha, "alpha_tilde_inf", c.alpha_tilde_inf)?;
        }
    }

    let dim = profile.dim as f64;
    let kappa = profile.kappa_q;
    let a = profile.a;
    let c_eps = model.eps_subgauss_const();
    let sigma_eps = model.sigma_eps();
    let sigma_eps_norm = linalg::op_norm(&sigma_eps);
    let sigma_alpha = linalg::solve_ricatti(&model.abar, &sigma_eps, alpha)?;
    let var = (u.transpose() * &sigma_alpha * &u)[(0, 0)].max(0.0);
    let theta_err = (&query.theta0 - &model.theta_star).norm();

    let d1v = d1();
    let d2v = d2(kappa, c_eps);
    let alpha_ref = d3_reference_stepsize(profile, alpha);
    let d3v = d3(profile.c_a, kappa, c_eps, a, alpha_ref)?;
    let l1 = (1.0 / delta).ln();
    let l2 = (2.0 / delta).ln();
    let sa = alpha.sqrt();
    let main = d1v * (var * l2).sqrt();

    let mut constants = vec![
        ("D1".to_owned(), d1v),
        ("D2".to_owned(), d2v),
        ("D3".to_owned(), d3v),
        ("D3_alpha_ref".to_owned(), alpha_ref),
        ("C_eps".to_owned(), c_eps),
        ("C_A".to_owned(), profile.c_a),
        ("a".to_owned(), a),
        ("alpha_inf".to_owned(), profile.alpha_inf),
        ("kappa_Q".to_owned(), kappa),
        ("sigma_eps_norm".to_owned(), sigma_eps_norm),
        ("u_sigma_alpha_u".to_owned(), var),
    ];

    let (value, parts) = match regime {
        Regime::Iid => {
            let d4v = d4(profile.c_a, kappa, profile.dim, p0, d3v, a);
            let decay = (1.0 - a * alpha / 4.0).powf(n as f64);
            let j1_term = E * d3v * l1 * l1;
            let j0_tail = log_term(a, alpha) * d2v * l2.powf(1.5);
            let h1_term = d4v * p0 * p0 * delta.powf(-1.0 / p0);
            let q = j1_term + j0_tail + h1_term;
            let gap = d1v * (kappa * sigma_eps_norm * l2 / a).sqrt();
            let init = kappa.sqrt() * dim.powf(1.0 / p0) * theta_err / sa * delta.powf(-1.0 / p0);
            let big_delta = gap + init;
            let value = sa * (main + sa * q) + sa * decay * big_delta;

            let transient = transient_hp_bound(profile, p0, alpha, n, theta_err, delta)?;
            let j0 = j0_hp_bound(alpha * var, profile, alpha, delta, c_eps)? + sa * decay * gap;
            let (j1, h1) = j1_h1_bounds(profile, p0, alpha, delta, c_eps, Regime::Iid, None)?;
            constants.extend([
                ("D4".to_owned(), d4v),
                ("q1".to_owned(), q),
                ("Delta1".to_owned(), big_delta),
                ("decay_n".to_owned(), decay),
                ("alpha_p0_inf".to_owned(), profile.alpha_p_inf(p0)),
            ]);
            (value, [transient, j0, j1, h1])
        }
        Regime::Contractive => {
            let c = contractive.expect("checked above");
            let d5v = d5(c.kappa_tilde, profile.c_a, d3v, c.a_tilde);
            let decay = (1.0 - alpha * c.a_tilde).powf(n as f64 / 2.0);
            let j0_tail = log_term(c.a_tilde, alpha) * d2v * l2.powf(1.5);
            let q = E * (d3v + d5v) * l1 * l1 + j0_tail;
            let gap = d1v * (c.kappa_tilde * sigma_eps_norm * l2 / c.a_tilde).sqrt();
            let init = c.kappa_tilde.sqrt() * theta_err / sa;
            let big_delta = gap + init;
            let value = sa * (main + sa * q) + sa * decay * big_delta;

            let transient = decay * c.kappa_tilde.sqrt() * theta_err;
            let j0 = sa * main + alpha * j0_tail + sa * decay * gap;
            let (j1, h1) = j1_h1_bounds(profile, p0, alpha, delta, c_eps, Regime::Contractive, Some(&c))?;
            constants.extend([
                ("D5".to_owned(), d5v),
                ("q2".to_owned(), q),
                ("Delta2".to_owned(), big_delta),
                ("decay_n".to_owned(), decay),
                ("kappa_Q_tilde".to_owned(), c.kappa_tilde),
                ("a_tilde".to_owned(), c.a_tilde),
            ]);
            (value, [transient, j0, j1, h1])
        }
    };
    for (name, v) in ["part_transient", "part_j0", "part_j1", "part_h1"]
        .into_iter()
        .zip(parts)
    {
        constants.push((name.to_owned(), v));
    }
    let mut notes = vec!["D1 = 60*sqrt(3)*e^(4/3)".to_owned()];
    if alpha_ref != profile.alpha_inf {
        notes.push("1 - a*alpha_inf vanishes for this model; D3 evaluated at the working stepsize".to_owned());
    }
    Ok(BoundReport {
        name: match regime {
            Regime::Iid => "composite_iid".to_owned(),
            Regime::Contractive => "composite_contractive".to_owned(),
        },
        inputs: vec![
            ("p0".to_owned(), p0),
            ("alpha".to_owned(), alpha),
            ("n".to_owned(), n as f64),
            ("delta".to_owned(), delta),
            ("theta0_err_norm".to_owned(), theta_err),
        ],
        constants,
        value,
        notes,
    })
}

/// Covariance gap: ∥Σ^α − Σ∥_Q ≤ α·a⁻¹·∥ĀΣĀ⊤∥_Q.
pub fn sigma_gap_bound(abar: &Matrix, sigma: &Matrix, profile: &SpectralProfile, alpha: f64) -> Result<f64> {
    check_nonnegative("alpha", alpha)?;
    let inner = profile.norm.matrix(&(abar * sigma * abar.transpose()))?;
    Ok(alpha / profile.a * inner)
}

/// Moment bound for σ-sub-Gaussian variables: E^{…}|X|^p ≤ √2·e·(2/e)^{p/2}·p^{p/2}·σ^p,
/// or with `max_variant` the bound 3^p·σ^p·p^{p/2} used for maxima.
pub fn subgauss_moment_bound(sigma: f64, p: f64, max_variant: bool) -> Result<f64> {
    check_nonnegative("sigma", sigma)?;
    if !(p >= 2.0 && p.is_finite()) {
        return Err(invalid(format!("p = {p} must be >= 2")));
    }
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let log = if max_variant {
        p * 3f64.ln() + p * sigma.ln() + 0.5 * p * p.ln()
    } else {
        0.5 * 2f64.ln() + 1.0 + 0.5 * p * (2.0 / E).ln() + 0.5 * p * p.ln() + p * sigma.ln()
    };
    Ok(log.exp())
}

/// (9·κ_Q·p·C_ε²·(1 + log(1/(aα))))^{p/2}.
pub fn max_term_bound(profile: &SpectralProfile, c_eps: f64, p: f64, alpha: f64) -> Result<f64> {
    require_below(alpha, "alpha_inf", profile.alpha_inf)?;
    max_term_raw(profile.kappa_q, c_eps, p, profile.a * alpha)
}

/// [`max_term_bound`] in terms of κ_Q and the product aα.
pub fn max_term_raw(kappa_q: f64, c_eps: f64, p: f64, a_alpha: f64) -> Result<f64> {
    check_nonnegative("c_eps", c_eps)?;
    check_positive("a*alpha", a_alpha)?;
    if !(p >= 1.0) {
        return Err(invalid(format!("p = {p} must be >= 1")));
    }
    let inner = 9.0 * kappa_q * p * c_eps * c_eps * (1.0 + (1.0 / a_alpha).ln());
    Ok(inner.powf(p / 2.0))
}

/// Constants of the biased Rademacher example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RademacherConstants {
    /// φ_q(α) = q log((1+α)/(1−α)) − log(1+α).
    pub phi: f64,
    /// φ̃_q(α) = φ_q(α) / log((1+α)/(1−α)).
    pub phi_tilde: f64,
    /// Largest ᾱ with φ_q > 0 on (0, ᾱ), capped at the bracket end 1 − 10⁻⁹.
    pub alpha_bar: f64,
    /// p̄ = 1 + 2(2q−1)/(α(1−q)): moments of order p > p̄ blow up.
    pub p_bar: f64,
}

fn check_rademacher(q_a: f64, alpha: f64) -> Result<()> {
    if !(q_a > 0.5 && q_a < 1.0) {
        return Err(invalid(format!("q_a = {q_a} must lie in (1/2, 1)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// φ_q(α) = q log((1+α)/(1−α)) − log(1+α).
pub fn rademacher_phi(q_a: f64, alpha: f64) -> f64 {
    q_a * ((1.0 + alpha) / (1.0 - alpha)).ln() - alpha.ln_1p()
}

const ALPHA_BAR_BRACKET: f64 = 1.0 - 1e-9;

fn alpha_bar(q_a: f64) -> f64 {
    // Scan for the first sign change, then bisect it.
    let steps = 1000;
    let mut lo = 0.0;
    for k in 1..=steps {
        let hi = ALPHA_BAR_BRACKET * k as f64 / steps as f64;
        if rademacher_phi(q_a, hi) <= 0.0 {
            let mut hi = hi;
            for _ in 0..200 {
                if hi - lo <= 1e-12 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if rademacher_phi(q_a, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return lo;
        }
        lo = hi;
    }
    ALPHA_BAR_BRACKET
}

pub fn rademacher_bounds(q_a: f64, alpha: f64) -> Result<RademacherConstants> {
    check_rademacher(q_a, alpha)?;
    let phi = rademacher_phi(q_a, alpha);
    Ok(RademacherConstants {
        phi,
        phi_tilde: phi / ((1.0 + alpha) / (1.0 - alpha)).ln(),
        alpha_bar: alpha_bar(q_a),
        p_bar: 1.0 + 2.0 * (2.0 * q_a - 1.0) / (alpha * (1.0 - q_a)),
    })
}

/// Which side of the Rademacher tail to bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    /// P(θ_n ≥ t) ≤ δ.
    Upper,
    /// P(θ_n ≥ t) ≥ δ.
    Lower,
}

/// Admissible δ window (lower end, upper end) for a threshold side.
pub fn rademacher_delta_window(q_a: f64, alpha: f64, n: u64, side: TailSide) -> Result<(f64, f64)> {
    let c = rademacher_bounds(q_a, alpha)?;
    let nf = n as f64;
    let lo = match side {
        TailSide::Upper => (-2.0 * nf * c.phi_tilde * c.phi_tilde).exp(),
        TailSide::Lower => (-nf * c.phi_tilde * c.phi_tilde / (q_a * (1.0 - q_a)) - 0.5 * nf.ln()).exp(),
    };
    Ok((lo, 1.0))
}

/// Threshold t of the Rademacher tail statements:
///
/// upper: t = exp(−φn + L√(n log(1/δ)/2)),
/// lower: t = exp(−φn + L√(n q(1−q) log(1/δ) + n log(n)/2)),
///
/// with L = log((1+α)/(1−α)). The upper window is δ ∈ [e^{−2nφ̃²}, 1] and the
/// lower one δ ∈ [e^{−nφ̃²/(q(1−q)) − log(n)/2}, 1).
pub fn rademacher_tail_thresholds(q_a: f64, alpha: f64, n: u64, delta: f64, side: TailSide) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    let c = rademacher_bounds(q_a, alpha)?;
    let (lo, hi) = rademacher_delta_window(q_a, alpha, n, side)?;
    let in_window = match side {
        TailSide::Upper => delta >= lo && delta <= hi,
        TailSide::Lower => delta >= lo && delta < hi,
    };
    if !in_window {
        return Err(BoundError::InvalidDelta {
            delta,
            window: format!("[{lo:e}, 1{}", if side == TailSide::Upper { ']' } else { ')' }),
        });
    }
    let nf = n as f64;
    let l = ((1.0 + alpha) / (1.0 - alpha)).ln();
    let log_inv = (1.0 / delta).ln();
    let spread = match side {
        TailSide::Upper => (nf * log_inv / 2.0).sqrt(),
        TailSide::Lower => (nf * q_a * (1.0 - q_a) * log_inv + nf * nf.ln() / 2.0).sqrt(),
    };
    Ok((-c.phi * nf + l * spread).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_profile() -> SpectralProfile {
        linalg::spectral_profile(&Matrix::from_element(1, 1, 1.0), 1.0, Some(1.0)).unwrap()
    }

    #[test]
    fn d1_value() {
        assert_relative_eq!(d1(), 394.249_532_438, max_relative = 1e-9);
    }

    #[test]
    fn product_moment_examples() {
        let p = unit_profile();
        assert_relative_eq!(
            product_moment_bound(&p, 2.0, 2.0, 0.1, 10, false).unwrap(),
            0.94f64.powi(5),
            max_relative = 1e-14
        );
        assert_relative_eq!(product_moment_bound(&p, 2.0, 2.0, 0.1, 0, false).unwrap(), 1.0);
        assert_relative_eq!(product_moment_bound(&p, 3.0, 2.0, 0.0, 1000, false).unwrap(), 1.0);
        // Sub-Gaussian variant with q(p−1)b′² = 2·1·4 = 8.
        assert_relative_eq!(
            product_moment_bound(&p, 2.0, 2.0, 0.1, 10, true).unwrap(),
            (1.0f64 - 0.1 + 0.08).powi(5),
            max_relative = 1e-14
        );
        assert!(product_moment_bound(&p, 2.0, 3.0, 0.1, 10, false).is_err());
        assert!(product_moment_bound(&p, 2.0, 2.0, 1.5, 10, false).is_err());
    }

    #[test]
    fn negative_base_names_threshold() {
        let mut p = unit_profile();
        p.b_q = 0.0;
        p.alpha_inf = 2.0;
        let err = product_moment_bound(&p, 2.0, 2.0, 1.5, 3, false).unwrap_err();
        assert!(matches!(err, BoundError::NegativeBase { .. }));
        assert!(err.to_string().contains("alpha_p_inf"));
    }

    #[test]
    fn product_hp_examples() {
        let p = unit_profile();
        assert_relative_eq!(product_hp_bound(&p, 0.05, 0, 0.3).unwrap(), 1.0);
        // δ = d = 1 kills the log term.
        let v = product_hp_bound(&p, 0.05, 100, 1.0).unwrap();
        assert_relative_eq!(v, (-(0.05 - 0.01) * 100.0 / 2.0f64).exp(), max_relative = 1e-14);
        assert!(product_hp_bound(&p, 0.05, 100, 0.0).is_err());
    }

    #[test]
    fn product_hp_matches_moments_route() {
        let p = unit_profile();
        let (alpha, n, delta) = (0.05, 100u64, 0.01);
        let nf = n as f64;
        let a = (-p.kappa_q.ln() + p.a * alpha * nf + p.b_q.powi(2) * alpha * alpha * nf) / 2.0;
        let b = alpha * alpha * p.b_q.powi(2) * nf / 2.0;
        let via = moments_to_hp(a, b, 1.0, 2.0, f64::INFINITY, delta).unwrap();
        assert_relative_eq!(
            product_hp_bound(&p, alpha, n, delta).unwrap(),
            via,
            max_relative = 1e-12
        );
    }

    #[test]
    fn moments_to_hp_examples() {
        let e4 = moments_to_hp(0.0, 1.0, 1.0, 2.0, f64::INFINITY, (-1.0f64).exp()).unwrap();
        assert_relative_eq!(e4, 4f64.exp(), max_relative = 1e-14);
        let at_c = moments_to_hp(0.5, 1.0, 1.0, 2.0, 5.0, 1.0).unwrap();
        assert_relative_eq!(at_c, (1.5f64).exp(), max_relative = 1e-14);
        let e7 = moments_to_hp(0.0, 1.0, 1.0, 2.0, 4.0, (-4.0f64).exp()).unwrap();
        assert_relative_eq!(e7, 7f64.exp(), max_relative = 1e-14);
        assert!(moments_to_hp(0.0, 1.0, 1.0, 2.0, 4.0, 1.5).is_err());
        assert!(moments_to_hp(0.0, 0.0, 1.0, 2.0, 4.0, 0.5).is_err());
    }

    #[test]
    fn transient_examples() {
        let p = unit_profile();
        assert_relative_eq!(
            transient_hp_bound(&p, 2.0, 0.1, 0, 3.0, 1.0).unwrap(),
            3.0,
            max_relative = 1e-14
        );
        assert_eq!(transient_hp_bound(&p, 2.0, 0.1, 10, 0.0, 0.5).unwrap(), 0.0);
        assert_relative_eq!(
            transient_hp_bound(&p, 2.0, 0.1, 20, 1.0, 0.01).unwrap(),
            0.975f64.powi(20) * 10.0,
            max_relative = 1e-13
        );
        // α_{2,∞} = 0.125 for this profile.
        assert!(matches!(
            transient_hp_bound(&p, 2.0, 0.125, 20, 1.0, 0.01),
            Err(BoundError::StepsizeOutOfRange { .. })
        ));
    }

    #[test]
    fn j0_examples() {
        let p = unit_profile();
        assert_eq!(j0_hp_bound(0.0, &p, 0.0, 0.5, 1.0).unwrap(), 0.0);
        let v = j0_hp_bound(1.0, &p, 0.0, 2.0 / E, 1.0).unwrap();
        assert_relative_eq!(v, d1(), max_relative = 1e-14);
        let small = j0_hp_bound(0.0, &p, 1e-8, 0.5, 1.0).unwrap();
        assert!(small < 1e-3);
    }

    #[test]
    fn d3_example_and_j1_h1() {
        assert_relative_eq!(
            d3(1.0, 1.0, 1.0, 1.0, 0.5).unwrap(),
            72.0 * SQRT_2 * 2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(72.0 * SQRT_2 * 2.0, 203.646_752_982, max_relative = 1e-9);

        let mut p = unit_profile();
        p.alpha_inf = 0.5;
        let (j1, _) = j1_h1_bounds(&p, 2.0, 1.0, 1.0 / E, 1.0, Regime::Iid, None).unwrap();
        assert_relative_eq!(j1, E * 72.0 * SQRT_2 * 2.0, max_relative = 1e-14);
        let (j1, h1) = j1_h1_bounds(&p, 2.0, 0.0, 0.1, 1.0, Regime::Iid, None).unwrap();
        assert_eq!((j1, h1), (0.0, 0.0));
        assert!(matches!(
            j1_h1_bounds(&p, 2.0, 0.1, 0.1, 1.0, Regime::Contractive, None),
            Err(BoundError::MissingContractive)
        ));
        let c = ContractiveData {
            kappa_tilde: 1.0,
            a_tilde: 0.5,
            alpha_tilde_inf: 1.0,
        };
        let (_, h1c) = j1_h1_bounds(&p, 2.0, 0.1, 0.1, 1.0, Regime::Contractive, Some(&c)).unwrap();
        let d3v = d3(1.0, 1.0, 1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(
            h1c,
            E * d5(1.0, 1.0, d3v, 0.5) * 0.1 * 10f64.ln().powi(2),
            max_relative = 1e-14
        );
    }

    #[test]
    fn d3_uses_working_stepsize_when_degenerate() {
        let p = unit_profile();
        assert_eq!(d3_reference_stepsize(&p, 0.05), 0.05);
        let skew = linalg::spectral_profile(&Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]), 3.0, None).unwrap();
        assert_eq!(d3_reference_stepsize(&skew, 0.01), skew.alpha_inf);
    }

    #[test]
    fn sigma_gap_scalar() {
        let (a0, s, alpha) = (2.0, 3.0, 0.1);
        let abar = Matrix::from_element(1, 1, a0);
        let p = linalg::spectral_profile(&abar, a0, None).unwrap();
        let sigma = Matrix::from_element(1, 1, s / (2.0 * a0));
        let bound = sigma_gap_bound(&abar, &sigma, &p, alpha).unwrap();
        // a = a0 in 1-D, so the bound is (α/a0)·a0·s/2.
        assert_relative_eq!(bound, alpha * s / 2.0, max_relative = 1e-14);
        let exact = s / (2.0 * a0 - alpha * a0 * a0) - s / (2.0 * a0);
        assert!(exact <= bound);
        assert_eq!(sigma_gap_bound(&abar, &sigma, &p, 0.0).unwrap(), 0.0);

        let id = Matrix::identity(2, 2);
        let pi = linalg::spectral_profile(&id, 1.0, None).unwrap();
        let sig = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        assert_relative_eq!(
            sigma_gap_bound(&id, &sig, &pi, 0.3).unwrap(),
            0.3 / pi.a * pi.norm.matrix(&sig).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn subgauss_examples() {
        assert_eq!(subgauss_moment_bound(0.0, 4.0, false).unwrap(), 0.0);
        assert_relative_eq!(
            subgauss_moment_bound(1.0, 2.0, false).unwrap(),
            4.0 * SQRT_2,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            subgauss_moment_bound(1.0, 2.0, true).unwrap(),
            18.0,
            max_relative = 1e-14
        );
        assert!(3.0 <= subgauss_moment_bound(1.0, 4.0, false).unwrap());
    }

    #[test]
    fn max_term_examples() {
        assert_relative_eq!(max_term_raw(1.0, 1.0, 2.0, 1.0).unwrap(), 18.0, max_relative = 1e-14);
        assert_eq!(max_term_raw(1.0, 0.0, 2.0, 0.5).unwrap(), 0.0);
        assert_relative_eq!(
            max_term_raw(1.0, 1.0, 2.0, (-1.0f64).exp()).unwrap(),
            36.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn rademacher_constant_examples() {
        let c = rademacher_bounds(0.75, 0.1).unwrap();
        assert_relative_eq!(c.phi, 0.055_192_841_8, max_relative = 1e-9);
        assert_relative_eq!(c.p_bar, 41.0, max_relative = 1e-14);
        let tiny = rademacher_phi(0.75, 1e-7) / 1e-7;
        assert!((tiny - 0.5).abs() < 1e-6);
        // φ_q ≥ (2q − 1)α > 0 on all of (0, 1), so ᾱ_q sits at the bracket end.
        assert_eq!(c.alpha_bar, 1.0 - 1e-9);
    }

    #[test]
    fn upper_threshold_at_unit_delta() {
        let c = rademacher_bounds(0.75, 0.1).unwrap();
        let t = rademacher_tail_thresholds(0.75, 0.1, 50, 1.0, TailSide::Upper).unwrap();
        assert_relative_eq!(t, (-c.phi * 50.0).exp(), max_relative = 1e-14);
        assert!(rademacher_tail_thresholds(0.75, 0.1, 50, 1.0, TailSide::Lower).is_err());
        assert!(rademacher_tail_thresholds(0.75, 0.1, 2, 1e-300, TailSide::Upper).is_err());
    }
}
