//! Constants of the Rosenthal inequality for geometrically ergodic Markov
//! chains: V-geometric ergodicity constants, Wasserstein contraction rates,
//! the cumulant weights B_{u,q}, LSA drift constants and the final moment
//! bound.
//!
//! Everything here is a pure function of its arguments. Factorials and large
//! powers go through log space.

use std::f64::consts::E;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::SpectralProfile;
use crate::stats::stable_sum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RosenthalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("lambda_bar_m = {0} >= 1: drift and small-set level are not admissible")]
    NotAdmissible(f64),
    #[error("rate {name} = {value} outside (0, 1)")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("delta_alpha has no positive root for these constants")]
    NoDeltaRoot,
    #[error("Wasserstein rates not computed; call with_rates first")]
    MissingRates,
    #[error("stepsize {alpha} outside (0, {limit})")]
    StepsizeOutOfRange { alpha: f64, limit: f64 },
    #[error("q = {0} too large for direct evaluation; use the log-space variant")]
    Overflow(u32),
}

pub type Result<T> = std::result::Result<T, RosenthalError>;

fn invalid(msg: impl Into<String>) -> RosenthalError {
    RosenthalError::InvalidArgument(msg.into())
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must lie in (0, 1)")))
    }
}

/// Rates of the α-weighted Wasserstein contraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WassersteinRates {
    pub alpha: f64,
    /// One-step Lipschitz constant ϑ ≥ 1 of the coupling kernel.
    pub vartheta: f64,
    pub delta_alpha: f64,
    pub rho_alpha: f64,
    pub vartheta_alpha: f64,
    pub kappa: f64,
}

/// Drift/small-set inputs and the constants derived from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RosenthalConstants {
    pub lambda: f64,
    pub b: f64,
    pub m: u32,
    pub epsilon: f64,
    pub d_level: f64,
    pub lambda_bar_m: f64,
    pub b_m: f64,
    pub b_bar_m: f64,
    pub d_bar: f64,
    pub rho: f64,
    pub c_m: f64,
    pub rates: Option<WassersteinRates>,
}

impl RosenthalConstants {
    /// Adds the Wasserstein rates at level α; fails if δ_α has no root.
    pub fn with_rates(mut self, alpha: f64, vartheta: f64) -> Result<Self> {
        self.rates = Some(wasserstein_rates(&self, alpha, vartheta)?);
        Ok(self)
    }

    /// Flat key-value view for tabular output.
    pub fn to_flat(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = [
            ("lambda", self.lambda),
            ("b", self.b),
            ("m", self.m as f64),
            ("epsilon", self.epsilon),
            ("d_level", self.d_level),
            ("lambda_bar_m", self.lambda_bar_m),
            ("b_m", self.b_m),
            ("b_bar_m", self.b_bar_m),
            ("d_bar", self.d_bar),
            ("rho", self.rho),
            ("c_m", self.c_m),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        if let Some(r) = &self.rates {
            out.extend(
                [
                    ("alpha", r.alpha),
                    ("vartheta", r.vartheta),
                    ("delta_alpha", r.delta_alpha),
                    ("rho_alpha", r.rho_alpha),
                    ("vartheta_alpha", r.vartheta_alpha),
                    ("kappa", r.kappa),
                ]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v)),
            );
        }
        out
    }
}

/// V-geometric ergodicity constants from a drift condition PV ≤ λV + b
/// (V ≥ 1) and an (m, ε)-small level set {V ≤ d}.
pub fn v_geometric_constants(lambda: f64, b: f64, m: u32, epsilon: f64, d_level: f64) -> Result<RosenthalConstants> {
    unit_open("lambda", lambda)?;
    unit_open("epsilon", epsilon)?;
    if !(b >= 0.0 && b.is_finite()) {
        return Err(invalid(format!("b = {b} must be nonnegative")));
    }
    if !(d_level > 0.0 && d_level.is_finite()) {
        return Err(invalid(format!("d = {d_level} must be positive")));
    }
    if m == 0 {
        return Err(invalid("m must be at least 1"));
    }
    if !(lambda + 2.0 * b / (1.0 + d_level) < 1.0) {
        return Err(RosenthalError::NotAdmissible(lambda + 2.0 * b / (1.0 + d_level)));
    }
    let mf = m as f64;
    let lam_m = lambda.powi(m as i32);
    let b_m = b * (1.0 - lam_m) / (1.0 - lambda);
    let lambda_bar_m = lam_m + 2.0 * b_m / (1.0 + d_level);
    if !(lambda_bar_m < 1.0) {
        return Err(RosenthalError::NotAdmissible(lambda_bar_m));
    }
    let b_bar_m = lam_m * b_m + d_level;
    let log_1me = (1.0 - epsilon).ln();
    let log_rho = log_1me * lambda_bar_m.ln() / (mf * (log_1me + lambda_bar_m.ln() - b_bar_m.ln()));
    let rho = log_rho.exp();
    // With V ≥ 1 the level d is at least 1 in any nonempty small set, which
    // keeps the denominator negative; smaller d can push ρ past 1.
    if !(rho > 0.0 && rho < 1.0) {
        return Err(RosenthalError::RateOutOfRange {
            name: "rho",
            value: rho,
        });
    }
    let c_m = rho.powf(-mf)
        * (lam_m + (1.0 - lam_m) / (1.0 - lambda))
        * (1.0 + b_bar_m / ((1.0 - epsilon) * (1.0 - lambda_bar_m)));
    Ok(RosenthalConstants {
        lambda,
        b,
        m,
        epsilon,
        d_level,
        lambda_bar_m,
        b_m,
        b_bar_m,
        d_bar: (d_level + 1.0) / 2.0,
        rho,
        c_m,
        rates: None,
    })
}

/// LHS − RHS of the δ_α equation
/// (1−ε)^{(1−α)/α}(λ̄_m + b_m + δ)/(1 + δ) = (λ̄_m d̄ + δ)/(d̄ + δ).
pub fn delta_alpha_residual(lambda_bar_m: f64, b_m: f64, d_bar: f64, epsilon: f64, alpha: f64, delta: f64) -> f64 {
    let lhs = (1.0 - epsilon).powf((1.0 - alpha) / alpha) * (lambda_bar_m + b_m + delta) / (1.0 + delta);
    let rhs = (lambda_bar_m * d_bar + delta) / (d_bar + delta);
    lhs - rhs
}

const DELTA_MAX: f64 = 1e12;
const DELTA_TOL: f64 = 1e-12;

/// Positive root δ_α of the δ_α equation, or `None` when no sign change is
/// found on (0, 10¹²] or bisection cannot reach a residual of 10⁻¹².
///
/// The bracket grows by doubling from δ = 1. Neither side is assumed
/// monotone; the first sign change found is bisected.
pub fn delta_alpha_root(lambda_bar_m: f64, b_m: f64, d_bar: f64, epsilon: f64, alpha: f64) -> Result<Option<f64>> {
    unit_open("alpha", alpha)?;
    unit_open("epsilon", epsilon)?;
    if !(lambda_bar_m > 0.0 && b_m >= 0.0 && d_bar > 0.0) {
        return Err(invalid("need lambda_bar_m > 0, b_m >= 0, d_bar > 0"));
    }
    let f = |d: f64| delta_alpha_residual(lambda_bar_m, b_m, d_bar, epsilon, alpha, d);
    let mut lo = 0.0;
    let mut f_lo = f(lo);
    let mut hi = 1.0;
    loop {
        let f_hi = f(hi);
        if f_hi == 0.0 {
            return Ok(Some(hi));
        }
        if f_lo.signum() != f_hi.signum() {
            break;
        }
        if hi >= DELTA_MAX {
            return Ok(None);
        }
        lo = hi;
        f_lo = f_hi;
        hi = (2.0 * hi).min(DELTA_MAX);
    }
    let mut best = (f64::INFINITY, hi);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid.abs() < best.0 {
            best = (f_mid.abs(), mid);
        }
        if f_mid.abs() <= DELTA_TOL && mid > 0.0 {
            return Ok(Some(mid));
        }
        if mid == lo || mid == hi {
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok((best.0 <= DELTA_TOL && best.1 > 0.0).then_some(best.1))
}

/// ρ_α = ((λ̄_m d̄ + δ_α)/(d̄ + δ_α))^{α/m}.
pub fn rho_alpha(lambda_bar_m: f64, d_bar: f64, delta_alpha: f64, alpha: f64, m: u32) -> f64 {
    ((lambda_bar_m * d_bar + delta_alpha) / (d_bar + delta_alpha)).powf(alpha / m as f64)
}

/// (ρ_α, ϑ_α, κ) with ϑ_α = (1 + b/(1−λ) + δ_α)^α / ρ_α^m and κ = ϑ^{m(1−α)}.
pub fn wasserstein_rates(constants: &RosenthalConstants, alpha: f64, vartheta: f64) -> Result<WassersteinRates> {
    if !(vartheta >= 1.0 && vartheta.is_finite()) {
        return Err(invalid(format!("vartheta = {vartheta} must be >= 1")));
    }
    let c = constants;
    let delta_alpha =
        delta_alpha_root(c.lambda_bar_m, c.b_m, c.d_bar, c.epsilon, alpha)?.ok_or(RosenthalError::NoDeltaRoot)?;
    let rho_a = rho_alpha(c.lambda_bar_m, c.d_bar, delta_alpha, alpha, c.m);
    if !(rho_a > 0.0 && rho_a < 1.0) {
        return Err(RosenthalError::RateOutOfRange {
            name: "rho_alpha",
            value: rho_a,
        });
    }
    let mf = c.m as f64;
    let vartheta_alpha = (1.0 + c.b / (1.0 - c.lambda) + delta_alpha).powf(alpha) / rho_a.powf(mf);
    Ok(WassersteinRates {
        alpha,
        vartheta,
        delta_alpha,
        rho_alpha: rho_a,
        vartheta_alpha,
        kappa: vartheta.powf(mf * (1.0 - alpha)),
    })
}

/// Default coupling Lipschitz constant for the LSA kernel under synchronous
/// coupling: ∥I − αA∥ ≤ 1 + α·C_A.
pub fn lsa_coupling_lipschitz(alpha: f64, c_a: f64) -> f64 {
    (1.0 + alpha * c_a).max(1.0)
}

/// Smallest m ≥ 1 with κ_Q(1 − αa/2)^{m/2} ≤ 1 − ε.
pub fn contraction_horizon(profile: &SpectralProfile, alpha: f64, epsilon: f64) -> Result<u32> {
    if !(alpha > 0.0 && alpha < profile.alpha_inf) {
        return Err(RosenthalError::StepsizeOutOfRange {
            alpha,
            limit: profile.alpha_inf,
        });
    }
    unit_open("epsilon", epsilon)?;
    Ok(horizon_raw(profile.kappa_q, profile.a * alpha, epsilon))
}

/// [`contraction_horizon`] in terms of κ_Q and the product αa.
pub fn horizon_raw(kappa_q: f64, alpha_a: f64, epsilon: f64) -> u32 {
    let target = 1.0 - epsilon;
    let factor = 1.0 - alpha_a / 2.0;
    let holds = |m: u32| kappa_q * factor.powf(m as f64 / 2.0) <= target;
    if kappa_q <= target {
        return 1;
    }
    let raw = 2.0 * (target / kappa_q).ln() / factor.ln();
    let mut m = raw.ceil().clamp(1.0, u32::MAX as f64) as u32;
    // The ceiling can land one off when raw sits at an integer.
    while m > 1 && holds(m - 1) {
        m -= 1;
    }
    while !holds(m) {
        m += 1;
    }
    m
}

/// Drift constants (λ_p, b_p) of P^m V ≤ λ_p V + b_p for the LSA chain with
/// V(θ) = ∥θ − θ*∥^{2p}: λ_p = e·d·κ_Q^{2p}(1 − αa/2)^{mp} and
/// b_p = C₀^{2p}·d^{p+1}·p^{2p} with C₀ = 64√3·κ_Q·c_b/a.
pub fn drift_constants(profile: &SpectralProfile, alpha: f64, p: f64, c_b: f64, m: u32) -> Result<(f64, f64)> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p = {p} must be >= 1")));
    }
    if !(c_b >= 0.0 && c_b.is_finite()) {
        return Err(invalid(format!("c_b = {c_b} must be nonnegative")));
    }
    let limit = profile.alpha_p_inf(2.0 * p);
    if !(alpha > 0.0 && alpha < limit) {
        return Err(RosenthalError::StepsizeOutOfRange { alpha, limit });
    }
    Ok(drift_raw(profile.dim, profile.kappa_q, profile.a, alpha, p, c_b, m))
}

/// [`drift_constants`] without the stepsize check.
pub fn drift_raw(dim: usize, kappa_q: f64, a: f64, alpha: f64, p: f64, c_b: f64, m: u32) -> (f64, f64) {
    let d = dim as f64;
    let log_lambda = 1.0 + d.ln() + 2.0 * p * kappa_q.ln() + m as f64 * p * (1.0 - alpha * a / 2.0).ln();
    let b_p = if c_b == 0.0 {
        0.0
    } else {
        let c0 = 64.0 * 3f64.sqrt() * kappa_q * c_b / a;
        (2.0 * p * c0.ln() + (p + 1.0) * d.ln() + 2.0 * p * p.ln()).exp()
    };
    (log_lambda.exp(), b_p)
}

/// All compositions k₁ + … + k_u = total with every k_i ≥ 2, in lexicographic order.
pub fn compositions(u: u32, total: u32) -> Vec<Vec<u32>> {
    fn descend(left: u32, parts: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 0 {
            if left == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        let reserve = 2 * (parts - 1);
        if left < reserve + 2 {
            return;
        }
        for k in 2..=left - reserve {
            prefix.push(k);
            descend(left - k, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    descend(total, u, &mut Vec::with_capacity(u as usize), &mut out);
    out
}

fn ln_factorial(n: u32) -> f64 {
    statrs::function::factorial::ln_factorial(n as u64)
}

fn check_uq(u: u32, q: u32, rho: f64) -> Result<()> {
    if !(u >= 1 && u < q) {
        return Err(invalid(format!("need 1 <= u <= q - 1, got u = {u}, q = {q}")));
    }
    unit_open("rho", rho)
}

/// Largest q for which [`b_uq_exact`] evaluates factorials directly.
pub const B_UQ_EXACT_MAX_Q: u32 = 12;

/// B_{u,q} = (q!/u!)(1/ρ)^u (2/log(1/ρ))^{2q−u} Σ_{k₁+…+k_u=2q, k_i≥2} ∏(k_i!)²,
/// by enumeration of the compositions.
pub fn b_uq_exact(u: u32, q: u32, rho: f64) -> Result<f64> {
    check_uq(u, q, rho)?;
    if q > B_UQ_EXACT_MAX_Q {
        return Err(RosenthalError::Overflow(q));
    }
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let sum = stable_sum(
        compositions(u, 2 * q)
            .iter()
            .map(|c| c.iter().map(|&k| fact(k).powi(2)).product::<f64>()),
    );
    let l = (1.0 / rho).ln();
    Ok(fact(q) / fact(u) * rho.powi(-(u as i32)) * (2.0 / l).powi((2 * q - u) as i32) * sum)
}

/// log B_{u,q} for any q, summing the composition weights by dynamic
/// programming in log space.
pub fn log_b_uq(u: u32, q: u32, rho: f64) -> Result<f64> {
    check_uq(u, q, rho)?;
    let total = (2 * q) as usize;
    // w[s] = log Σ over compositions of s into the parts used so far.
    let mut w = vec![f64::NEG_INFINITY; total + 1];
    w[0] = 0.0;
    for _ in 0..u {
        let mut next = vec![f64::NEG_INFINITY; total + 1];
        for (s, slot) in next.iter_mut().enumerate() {
            let terms: Vec<f64> = (2..=s)
                .filter(|&k| w[s - k].is_finite())
                .map(|k| w[s - k] + 2.0 * ln_factorial(k as u32))
                .collect();
            *slot = log_sum_exp(&terms);
        }
        w = next;
    }
    let l = (1.0 / rho).ln();
    Ok(ln_factorial(q) - ln_factorial(u) - u as f64 * rho.ln() + (2 * q - u) as f64 * (2.0 / l).ln() + w[total])
}

/// log of the upper bound
/// (eq/(q−u))^{q−u}(e(2q−u−1)/(2q−2u))^{2q−2u}((2q−2u+2)!)²(2/log(1/ρ))^{2q}(2log(1/ρ)/ρ)^u.
pub fn log_b_uq_upper(u: u32, q: u32, rho: f64) -> Result<f64> {
    check_uq(u, q, rho)?;
    let (uf, qf) = (u as f64, q as f64);
    let l = (1.0 / rho).ln();
    Ok((qf - uf) * (E * qf / (qf - uf)).ln()
        + (2.0 * qf - 2.0 * uf) * (E * (2.0 * qf - uf - 1.0) / (2.0 * qf - 2.0 * uf)).ln()
        + 2.0 * ln_factorial(2 * q - 2 * u + 2)
        + 2.0 * qf * (2.0 / l).ln()
        + uf * (2.0 * l / rho).ln())
}

pub fn b_uq_upper(u: u32, q: u32, rho: f64) -> Result<f64> {
    log_b_uq_upper(u, q, rho).map(f64::exp)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + stable_sum(terms.iter().map(|t| (t - max).exp())).ln()
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

/// Problem-specific inputs of the Rosenthal bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct RosenthalInputs {
    pub q: u32,
    /// G_{n,q}: sum of squared weighted norms of the centred summands.
    pub g_nq: f64,
    /// M_q: largest weighted norm of a centred summand.
    pub m_q: f64,
    /// π(V^α).
    pub pi_v_alpha: f64,
    /// ξ(V^α) for the initial law ξ.
    pub xi_v_alpha: f64,
    /// Var_π(S_n).
    pub var_pi: f64,
    /// Gaussian 2q-th absolute moment factor.
    pub moment_gq: f64,
}

/// Bound on E_ξ|S_n|^{2q}:
///
/// e·mom·Var^q + e(8κ)^{2q}π(V^α)^{q+1}ϑ_α^q Σ_{u=1}^{q−1} B_{u,q}(ρ_α)G^u M^{2(q−u)}
/// + ϑ_α M^{2q}(2q+1)^{2q}(ξ(V^α) + π(V^α))(1 − ρ_α^{1/2q})^{−2q}.
pub fn rosenthal_bound(inputs: &RosenthalInputs, constants: &RosenthalConstants) -> Result<f64> {
    Ok(rosenthal_terms(inputs, constants)?.iter().sum())
}

/// The three summands of [`rosenthal_bound`], evaluated in log space.
pub fn rosenthal_terms(inputs: &RosenthalInputs, constants: &RosenthalConstants) -> Result<[f64; 3]> {
    let r = constants.rates.as_ref().ok_or(RosenthalError::MissingRates)?;
    let RosenthalInputs {
        q,
        g_nq,
        m_q,
        pi_v_alpha,
        xi_v_alpha,
        var_pi,
        moment_gq,
    } = *inputs;
    if q < 2 {
        return Err(invalid(format!("q = {q} must be >= 2")));
    }
    for (name, v) in [
        ("g_nq", g_nq),
        ("m_q", m_q),
        ("pi_v_alpha", pi_v_alpha),
        ("xi_v_alpha", xi_v_alpha),
        ("var_pi", var_pi),
        ("moment_gq", moment_gq),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(format!("{name} = {v} must be nonnegative and finite")));
        }
    }
    if m_q * m_q > g_nq * (1.0 + 1e-12) {
        return Err(invalid(format!("m_q^2 = {} exceeds g_nq = {g_nq}", m_q * m_q)));
    }
    if !(r.rho_alpha > 0.0 && r.rho_alpha < 1.0) {
        return Err(RosenthalError::RateOutOfRange {
            name: "rho_alpha",
            value: r.rho_alpha,
        });
    }
    let qf = q as f64;
    let (ln_g, ln_m) = (ln_or_neg_inf(g_nq), ln_or_neg_inf(m_q));

    let t1 = 1.0 + ln_or_neg_inf(moment_gq) + qf * ln_or_neg_inf(var_pi);

    let mut inner = Vec::with_capacity(q as usize - 1);
    for u in 1..q {
        let g_pow = if g_nq == 0.0 {
            f64::NEG_INFINITY
        } else {
            u as f64 * ln_g
        };
        inner.push(log_b_uq(u, q, r.rho_alpha)? + g_pow + 2.0 * (q - u) as f64 * ln_m);
    }
    let t2 = 1.0
        + 2.0 * qf * (8.0 * r.kappa).ln()
        + (qf + 1.0) * ln_or_neg_inf(pi_v_alpha)
        + qf * r.vartheta_alpha.ln()
        + log_sum_exp(&inner);

    let t3 = r.vartheta_alpha.ln()
        + 2.0 * qf * ln_m
        + 2.0 * qf * (2.0 * qf + 1.0).ln()
        + ln_or_neg_inf(xi_v_alpha + pi_v_alpha)
        - 2.0 * qf * (-(r.rho_alpha.ln() / (2.0 * qf)).exp_m1()).ln();

    Ok([t1, t2, t3].map(|t| if t.is_nan() { 0.0 } else { t.exp() }))
}

/// |Σ_j α_j ∏_{l>j}(1 − α_l a) − (1/a)(1 − ∏_l(1 − α_l a))| for a stepsize
/// sequence α₀ ≥ α₁ ≥ … (indices from 0). Both sides are evaluated directly.
pub fn geometric_sum_check(stepsizes: &[f64], a: f64) -> f64 {
    let mut tail = 1.0;
    let mut lhs_terms = Vec::with_capacity(stepsizes.len());
    for &s in stepsizes.iter().rev() {
        lhs_terms.push(s * tail);
        tail *= 1.0 - s * a;
    }
    let lhs = stable_sum(lhs_terms);
    let rhs = (1.0 - tail) / a;
    (lhs - rhs).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spectral_profile, Matrix};
    use approx::assert_relative_eq;

    #[test]
    fn one_step_constants() {
        let c = v_geometric_constants(0.5, 0.1, 1, 0.5, 9.0).unwrap();
        assert_relative_eq!(c.b_m, 0.1, max_relative = 1e-15);
        assert_relative_eq!(c.lambda_bar_m, 0.52, max_relative = 1e-15);
        assert_relative_eq!(c.b_bar_m, 9.05, max_relative = 1e-15);
        assert!(c.rho > 0.0 && c.rho < 1.0);
        let l = 0.5f64.ln();
        let expect = (l * 0.52f64.ln() / (l + 0.52f64.ln() - 9.05f64.ln())).exp();
        assert_relative_eq!(c.rho, expect, max_relative = 1e-14);
        assert!(c.c_m > 0.0);
    }

    #[test]
    fn inadmissible_drift_rejected() {
        assert!(matches!(
            v_geometric_constants(0.9, 1.0, 1, 0.5, 9.0),
            Err(RosenthalError::NotAdmissible(_))
        ));
        assert!(v_geometric_constants(0.5, 0.1, 0, 0.5, 9.0).is_err());
    }

    #[test]
    fn rho_alpha_example() {
        let r = rho_alpha(0.52, 5.0, 1.0, 0.5, 2);
        assert_relative_eq!(r, 0.6f64.powf(0.25), max_relative = 1e-14);
        assert_relative_eq!(r, 0.880_111_7, max_relative = 1e-7);
        assert!(rho_alpha(0.52, 5.0, 1e15, 0.5, 2) > 1.0 - 1e-12);
    }

    #[test]
    fn documented_no_root_case() {
        assert_eq!(delta_alpha_root(0.5, 0.2, 2.0, 0.5, 0.5).unwrap(), None);
    }

    #[test]
    fn root_has_small_residual() {
        // f(0) = 0.9^9·1.5 − 0.3 > 0 and f(∞) = 0.9^9 − 1 < 0.
        let d = delta_alpha_root(0.3, 1.2, 1.5, 0.1, 0.1).unwrap().unwrap();
        assert!(delta_alpha_residual(0.3, 1.2, 1.5, 0.1, 0.1, d).abs() <= 1e-12);
        let c = v_geometric_constants(0.5, 0.1, 1, 0.5, 9.0).unwrap();
        assert!(matches!(c.with_rates(0.5, 1.0), Err(RosenthalError::NoDeltaRoot)));
    }

    #[test]
    fn horizon_example_and_edges() {
        assert_eq!(horizon_raw(1.0, 0.5, 0.5), 5);
        assert_eq!(horizon_raw(0.4, 0.5, 0.5), 1);
        let p = spectral_profile(&Matrix::from_element(1, 1, 1.0), 1.0, None).unwrap();
        // κ_Q = 1 and a = 1 for this scalar model.
        let m = contraction_horizon(&p, 0.5, 0.5).unwrap();
        assert_eq!(m, horizon_raw(1.0, 0.5, 0.5));
        assert!(contraction_horizon(&p, 2.0, 0.5).is_err());
    }

    #[test]
    fn drift_example() {
        let (l1, b1) = drift_raw(1, 1.0, 1.0, 0.5, 1.0, 0.0, 10);
        assert_relative_eq!(l1, E * 0.75f64.powi(10), max_relative = 1e-14);
        assert_relative_eq!(l1, 0.153_076_0, max_relative = 1e-6);
        assert_eq!(b1, 0.0);
        let (l2, _) = drift_raw(1, 1.0, 1.0, 0.5, 1.0, 0.0, 11);
        assert!(l2 < l1);
        let (_, b) = drift_raw(2, 1.0, 1.0, 0.1, 1.0, 1.0, 3);
        let c0 = 64.0 * 3f64.sqrt();
        assert_relative_eq!(b, c0 * c0 * 4.0, max_relative = 1e-13);
    }

    #[test]
    fn b_uq_single_composition() {
        let v = b_uq_exact(1, 2, 0.5).unwrap();
        let expect = 2.0 * 2.0 * (2.0 / 2f64.ln()).powi(3) * 576.0;
        assert_relative_eq!(v, expect, max_relative = 1e-14);
        assert_relative_eq!(v, 55_347.254, max_relative = 1e-6);
        assert_relative_eq!(log_b_uq(1, 2, 0.5).unwrap(), v.ln(), max_relative = 1e-13);
    }

    #[test]
    fn compositions_small_cases() {
        assert_eq!(compositions(2, 6), vec![vec![2, 4], vec![3, 3], vec![4, 2]]);
        for c in compositions(4, 10) {
            let mut s = c.clone();
            s.sort_unstable();
            assert!(s == [2, 2, 2, 4] || s == [2, 2, 3, 3]);
        }
        assert!(compositions(3, 5).is_empty());
    }

    #[test]
    fn exact_below_upper_near_one() {
        for &rho in &[0.99, 0.999] {
            for q in 2..=6 {
                for u in 1..q {
                    let e = b_uq_exact(u, q, rho).unwrap();
                    let up = b_uq_upper(u, q, rho).unwrap();
                    assert!(e <= up, "u={u} q={q} rho={rho}");
                }
            }
        }
        assert!(matches!(b_uq_exact(1, 13, 0.5), Err(RosenthalError::Overflow(13))));
        assert!(log_b_uq_upper(11, 12, 0.5).unwrap().is_finite());
    }

    fn rates_at(rho_alpha: f64) -> RosenthalConstants {
        let mut c = v_geometric_constants(0.5, 0.1, 1, 0.5, 9.0).unwrap();
        c.rates = Some(WassersteinRates {
            alpha: 0.5,
            vartheta: 1.0,
            delta_alpha: 1.0,
            rho_alpha,
            vartheta_alpha: 1.0,
            kappa: 1.0,
        });
        c
    }

    #[test]
    fn bound_reduces_to_gaussian_term() {
        let c = rates_at(0.25);
        let inputs = RosenthalInputs {
            q: 3,
            g_nq: 0.0,
            m_q: 0.0,
            pi_v_alpha: 1.0,
            xi_v_alpha: 1.0,
            var_pi: 2.0,
            moment_gq: 15.0,
        };
        assert_relative_eq!(
            rosenthal_bound(&inputs, &c).unwrap(),
            E * 15.0 * 8.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn bound_term_by_term_q2() {
        let c = rates_at(0.25);
        let inputs = RosenthalInputs {
            q: 2,
            g_nq: 1.0,
            m_q: 1.0,
            pi_v_alpha: 1.0,
            xi_v_alpha: 1.0,
            var_pi: 1.0,
            moment_gq: 1.0,
        };
        let t1 = E;
        let t2 = E * 8f64.powi(4) * b_uq_exact(1, 2, 0.25).unwrap();
        let t3 = 5f64.powi(4) * 2.0 * (1.0 - 0.25f64.powf(0.25)).powi(-4);
        assert_relative_eq!(
            rosenthal_bound(&inputs, &c).unwrap(),
            t1 + t2 + t3,
            max_relative = 1e-12
        );
        assert!(matches!(
            rosenthal_bound(&inputs, &v_geometric_constants(0.5, 0.1, 1, 0.5, 9.0).unwrap()),
            Err(RosenthalError::MissingRates)
        ));
    }

    #[test]
    fn geometric_sum_edges() {
        assert!(geometric_sum_check(&[0.3], 2.0) <= 1e-15);
        assert!(geometric_sum_check(&vec![0.01; 1000], 1.0) <= 1e-12);
        assert_eq!(geometric_sum_check(&[], 1.0), 0.0);
    }
}
