//! The experiment runners. Each returns one row per grid point (times the
//! metrics it reports) in grid order, with the pass flag decided in the row.
//!
//! Randomness for Monte Carlo unit `k` (a grid point) flows from the stream
//! family `derive_seed(seed, k)`, one stream per trajectory, so results do not
//! depend on the worker count.

use lsa_core::bounds::{self, CompositeQuery, TailSide};
use lsa_core::engine;
use lsa_core::linalg::{self, Matrix, Vector};
use lsa_core::noise::LsaModel;
use lsa_core::rng::{derive_seed, Stream};
use lsa_core::rosenthal;
use lsa_core::stats;
use rayon::prelude::*;

use crate::config::{ConfigError, Experiment, ExperimentConfig};
use crate::output::{ResultRow, ResultSet, RowBuilder};

/// Residual tolerance of the matrix-equation solvers, relative to 1 + ∥X∥.
pub const SOLVER_TOL: f64 = 1e-10;
/// Slack on the contraction inequality ∥I − αĀ∥_Q² ≤ 1 − aα.
pub const CONTRACTION_SLACK: f64 = 1e-12;
/// Residual tolerance of the δ_α root.
pub const DELTA_ROOT_TOL: f64 = 1e-12;

/// Validates the configuration, then runs the experiment on the current
/// rayon pool.
pub fn run(config: &ExperimentConfig, experiment: Experiment) -> Result<ResultSet, ConfigError> {
    config.validate(experiment)?;
    let model = config.build_model().map_err(|e| ConfigError::Invalid(vec![e]))?;
    let ctx = Ctx { config, model };
    Ok(match experiment {
        Experiment::Lyapunov => ctx.lyapunov(),
        Experiment::Bounds => ctx.bounds(),
        Experiment::Simulate => ctx.simulate(),
        Experiment::Rademacher => ctx.rademacher(),
        Experiment::Clt => ctx.clt(),
        Experiment::Wasserstein => ctx.wasserstein(),
        Experiment::Rosenthal => ctx.rosenthal(),
    })
}

/// [`run`] on a dedicated pool of `workers` threads.
pub fn run_with_workers(
    config: &ExperimentConfig,
    experiment: Experiment,
    workers: usize,
) -> Result<ResultSet, ConfigError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ConfigError::Invalid(vec![format!("cannot build worker pool: {e}")]))?;
    pool.install(|| run(config, experiment))
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    model: Option<LsaModel>,
}

fn rel_residual(res: &Matrix, sol: &Matrix) -> f64 {
    linalg::op_norm(res) / (1.0 + linalg::op_norm(sol))
}

fn within(emp: f64, se: f64, oracle: f64, tol_se: f64) -> bool {
    (emp - oracle).abs() <= tol_se * se + 1e-12 * oracle.abs().max(1e-300)
}

/// Gaussian matrix shifted so every eigenvalue has real part at least 0.1.
fn random_instance(seed: u64, d: usize) -> (Matrix, Matrix) {
    let mut s = Stream::new(seed, 0);
    let g = Matrix::from_fn(d, d, |_, _| s.normal());
    let min_re = linalg::eigenvalues(&g)
        .map(|e| e.iter().map(|x| x.0).fold(f64::INFINITY, f64::min))
        .unwrap_or(0.0);
    let abar = &g + Matrix::identity(d, d) * ((0.1 - min_re).max(0.0) + s.uniform());
    let h = Matrix::from_fn(d, d, |_, _| s.normal());
    (abar, &h * h.transpose())
}

impl Ctx<'_> {
    fn model(&self) -> &LsaModel {
        self.model.as_ref().expect("validated: experiment has a model")
    }

    fn unit_seed(&self, unit: usize) -> u64 {
        derive_seed(self.config.seed, unit as u64)
    }

    fn direction(&self) -> Vector {
        let d = self.model().dim;
        let u = self
            .config
            .u
            .clone()
            .map(Vector::from_vec)
            .unwrap_or_else(|| Vector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 }));
        let norm = u.norm();
        u / norm
    }

    /// Solver residuals, the contraction contract and the Σ^α − Σ gap, on the
    /// configured model or on seeded random Hurwitz instances. With
    /// `alpha_relative`, the α grid holds fractions of each instance's α∞.
    fn lyapunov(&self) -> ResultSet {
        const KEYS: &[&str] = &["instance", "dim", "alpha", "metric"];
        let mut set = ResultSet::new("lyapunov", KEYS);
        if self.config.grid.alpha.is_empty() {
            return set;
        }
        let instances: Vec<(u64, Matrix, Matrix)> = match &self.model {
            Some(m) => vec![(self.config.seed, m.abar.clone(), m.sigma_eps())],
            None => (0..self.config.instances)
                .map(|i| {
                    let seed = self.unit_seed(i);
                    let (abar, se) = random_instance(seed, 1 + i % self.config.max_dim);
                    (seed, abar, se)
                })
                .collect(),
        };
        let per_instance: Vec<Vec<ResultRow>> = instances
            .par_iter()
            .enumerate()
            .map(|(i, (seed, abar, se))| self.lyapunov_instance(i, *seed, abar, se))
            .collect();
        set.rows = per_instance.into_iter().flatten().collect();
        set
    }

    fn lyapunov_instance(&self, index: usize, seed: u64, abar: &Matrix, se: &Matrix) -> Vec<ResultRow> {
        const KEYS: &[&str] = &["instance", "dim", "alpha", "metric"];
        let d = abar.nrows();
        let base = |metric: &str| {
            RowBuilder::new(KEYS, seed)
                .param("instance", index)
                .param("dim", d)
                .param("metric", metric)
        };
        let mut rows = Vec::new();
        let residual_row = |metric: &str, r: Result<f64, String>| match r {
            Ok(v) => base(metric).empirical(v).bound(SOLVER_TOL).pass(v <= SOLVER_TOL),
            Err(e) => base(metric).failed(e),
        };
        let q = linalg::solve_lyapunov(abar).map_err(|e| e.to_string());
        rows.push(residual_row(
            "lyapunov_residual",
            q.as_ref()
                .map(|q| rel_residual(&linalg::lyapunov_residual(abar, q), q))
                .map_err(Clone::clone),
        ));
        let sigma = linalg::solve_sigma(abar, se).map_err(|e| e.to_string());
        rows.push(residual_row(
            "sigma_residual",
            sigma
                .as_ref()
                .map(|s| rel_residual(&linalg::sigma_residual(abar, s, se), s))
                .map_err(Clone::clone),
        ));
        let profile = match linalg::spectral_profile(abar, 1.0, None) {
            Ok(p) => p,
            Err(e) => {
                rows.push(base("profile").failed(e));
                return rows;
            }
        };
        for &a in &self.config.grid.alpha {
            let alpha = if self.config.alpha_relative {
                a * profile.alpha_inf
            } else {
                a
            };
            let row = |metric: &str| base(metric).param("alpha", alpha);
            let sa = linalg::solve_ricatti(abar, se, alpha).map_err(|e| e.to_string());
            rows.push(match &sa {
                Ok(s) => {
                    let v = rel_residual(&linalg::ricatti_residual(abar, s, se, alpha), s);
                    row("ricatti_residual")
                        .empirical(v)
                        .bound(SOLVER_TOL)
                        .pass(v <= SOLVER_TOL)
                }
                Err(e) => row("ricatti_residual").failed(e),
            });
            let c = profile.contraction_sq(alpha);
            let limit = 1.0 - profile.a * alpha;
            rows.push(
                row("contraction")
                    .empirical(c)
                    .bound(limit)
                    .pass(c <= limit + CONTRACTION_SLACK),
            );
            rows.push(match (&sa, &sigma) {
                (Ok(sa), Ok(sigma)) => {
                    let gap = profile.norm.matrix(&(sa - sigma));
                    let bound = bounds::sigma_gap_bound(abar, sigma, &profile, alpha);
                    match (gap, bound) {
                        (Ok(g), Ok(b)) => row("sigma_gap").empirical(g).bound(b).pass(g <= b + SOLVER_TOL),
                        (Err(e), _) => row("sigma_gap").failed(e),
                        (_, Err(e)) => row("sigma_gap").failed(e),
                    }
                }
                _ => row("sigma_gap").failed("solver failed"),
            });
        }
        rows
    }

    /// Empirical (1−δ)-quantiles of |u⊤(θ_n − θ*)| against the composite
    /// high-probability bound; pass iff quantile ≤ bound. The p grid holds p₀.
    fn bounds(&self) -> ResultSet {
        const KEYS: &[&str] = &["alpha", "n", "p0", "delta", "metric"];
        let mut set = ResultSet::new("bounds", KEYS);
        let model = self.model();
        let profile = model.profile().expect("validated").clone();
        let u = self.direction();
        let theta0 = self
            .config
            .theta0
            .clone()
            .map(Vector::from_vec)
            .unwrap_or_else(|| Vector::zeros(model.dim));
        let g = &self.config.grid;
        if g.p.is_empty() || g.delta.is_empty() {
            return set;
        }
        let mut unit = 0;
        for &alpha in &g.alpha {
            for &n in &g.n {
                let seed = self.unit_seed(unit);
                unit += 1;
                let samples = engine::par_trajectories(self.config.n_traj, seed, |rng| {
                    let theta = engine::run_trajectory(model, alpha, &theta0, n, rng)?;
                    Ok(u.dot(&(theta - &model.theta_star)).abs())
                });
                for &p0 in &g.p {
                    for &delta in &g.delta {
                        let row = RowBuilder::new(KEYS, seed)
                            .param("alpha", alpha)
                            .param("n", n)
                            .param("p0", p0)
                            .param("delta", delta)
                            .param("metric", "composite");
                        let query = CompositeQuery {
                            p0,
                            alpha,
                            n,
                            theta0: theta0.clone(),
                            u: u.clone(),
                            delta,
                            regime: self.config.regime,
                        };
                        let report = bounds::composite_hp_bound(&profile, model, &query);
                        set.rows.push(match (&samples, report) {
                            (Err(e), _) => row.failed(e),
                            (_, Err(e)) => row.failed(e),
                            (Ok(s), Ok(r)) => match stats::quantile(s, 1.0 - delta) {
                                Ok(qv) => row.empirical(qv).bound(r.value).pass(qv <= r.value),
                                Err(e) => row.failed(e),
                            },
                        });
                    }
                }
            }
        }
        set
    }

    /// E^{1/q}∥Γ_{1:n}∥^q by Monte Carlo against the exact value (1-D models)
    /// and the product moment bound. Pass iff within tolerance of the oracle
    /// and not above the bound.
    fn simulate(&self) -> ResultSet {
        const KEYS: &[&str] = &["alpha", "n", "q", "metric"];
        let mut set = ResultSet::new("simulate", KEYS);
        let model = self.model();
        let profile = model.profile().ok().cloned();
        let support = (model.dim == 1).then(|| model.a_support());
        let mut unit = 0;
        for &alpha in &self.config.grid.alpha {
            for &n in &self.config.grid.n {
                for &q in &self.config.grid.q {
                    let seed = self.unit_seed(unit);
                    unit += 1;
                    let row = RowBuilder::new(KEYS, seed)
                        .param("alpha", alpha)
                        .param("n", n)
                        .param("q", q)
                        .param("metric", "norm_moment");
                    let oracle = support.as_ref().map(|s| {
                        let base: f64 = s.iter().map(|(w, a)| w * (1.0 - alpha * a[(0, 0)]).abs().powf(q)).sum();
                        base.powf(n as f64 / q)
                    });
                    let bound = profile
                        .as_ref()
                        .and_then(|p| bounds::product_moment_bound(p, q, q, alpha, n, false).ok());
                    set.rows.push(
                        match engine::mc_norm_moment(model, alpha, n, q, self.config.n_traj, seed) {
                            Err(e) => row.failed(e),
                            Ok(mc) => {
                                let ok_oracle =
                                    oracle.map_or(true, |o| within(mc.value, mc.std_err, o, self.config.tolerance_se));
                                let ok_bound = bound.map_or(true, |b| mc.value <= b);
                                let mut row = row.empirical(mc.value).std_err(mc.std_err);
                                if let Some(o) = oracle {
                                    row = row.oracle(o);
                                }
                                if let Some(b) = bound {
                                    row = row.bound(b);
                                }
                                row.pass(ok_oracle && ok_bound)
                            }
                        },
                    );
                }
            }
        }
        set
    }

    /// Exact Binomial tails at the biased Rademacher thresholds, and the
    /// one-step moment base. The q grid holds the bias q_A.
    fn rademacher(&self) -> ResultSet {
        const KEYS: &[&str] = &["q_a", "alpha", "n", "delta", "p", "side", "threshold", "metric"];
        let mut set = ResultSet::new("rademacher", KEYS);
        let g = &self.config.grid;
        let seed = self.config.seed;
        for &q_a in &g.q {
            for &alpha in &g.alpha {
                let base = || RowBuilder::new(KEYS, seed).param("q_a", q_a).param("alpha", alpha);
                for &n in &g.n {
                    for &delta in &g.delta {
                        for side in [TailSide::Upper, TailSide::Lower] {
                            let name = match side {
                                TailSide::Upper => "upper",
                                TailSide::Lower => "lower",
                            };
                            let row = base()
                                .param("n", n)
                                .param("delta", delta)
                                .param("side", name)
                                .param("metric", "tail");
                            set.rows
                                .push(match bounds::rademacher_tail_thresholds(q_a, alpha, n, delta, side) {
                                    Err(e @ bounds::BoundError::InvalidDelta { .. }) => {
                                        row.bound(delta).note(format!("no claim: {e}")).pass(true)
                                    }
                                    Err(e) => row.failed(e),
                                    Ok(t) => {
                                        let tail = engine::rademacher_exact_tail(q_a, alpha, n, t);
                                        let ok = match side {
                                            TailSide::Upper => tail <= delta,
                                            TailSide::Lower => tail >= delta,
                                        };
                                        row.param("threshold", t).oracle(tail).bound(delta).pass(ok)
                                    }
                                });
                        }
                    }
                }
                let p_bar = bounds::rademacher_bounds(q_a, alpha).map(|c| c.p_bar);
                for &p in &g.p {
                    let row = base().param("p", p).param("metric", "moment_base");
                    set.rows.push(match p_bar {
                        Err(ref e) => row.failed(e),
                        Ok(p_bar) => {
                            let b = engine::rademacher_exact_moment(q_a, alpha, p, 1);
                            row.oracle(b)
                                .note(format!("p_bar = {p_bar}"))
                                .pass(p < p_bar || b > 1.0)
                        }
                    });
                }
            }
        }
        set
    }

    /// Stationary variance, its gap to Σ, and normality of α^{-1/2}-rescaled
    /// stationary samples of u⊤(θ − θ*).
    fn clt(&self) -> ResultSet {
        const KEYS: &[&str] = &["alpha", "metric"];
        let mut set = ResultSet::new("clt", KEYS);
        let model = self.model();
        let u = self.direction();
        let proj = |m: &Matrix| (u.transpose() * m * &u)[(0, 0)];
        let sigma_eps = model.sigma_eps();
        let sigma = linalg::solve_sigma(&model.abar, &sigma_eps).map(|s| proj(&s));
        let tol = self.config.tolerance_se;
        for (k, &alpha) in self.config.grid.alpha.iter().enumerate() {
            let seed = self.unit_seed(k);
            let row = |metric: &str| {
                RowBuilder::new(KEYS, seed)
                    .param("alpha", alpha)
                    .param("metric", metric)
            };
            let samples =
                engine::stationary_samples(model, alpha, self.config.n_traj, seed, self.config.stationary_tol);
            let exact = engine::stationary_covariance(model, alpha).map(|c| proj(&c) / alpha);
            let scaled: Result<Vec<f64>, String> = samples
                .map(|s| {
                    s.iter()
                        .map(|t| u.dot(&(t - &model.theta_star)) / alpha.sqrt())
                        .collect()
                })
                .map_err(|e| e.to_string());
            let var = scaled.as_ref().map_err(Clone::clone).and_then(|x| {
                Ok((
                    stats::variance(x).map_err(|e| e.to_string())?,
                    stats::variance_se(x).map_err(|e| e.to_string())?,
                ))
            });
            match (&var, &exact) {
                (Ok((v, se)), Ok(ex)) => set.rows.push(
                    row("variance")
                        .empirical(*v)
                        .std_err(*se)
                        .oracle(*ex)
                        .pass(within(*v, *se, *ex, tol)),
                ),
                (Err(e), _) => set.rows.push(row("variance").failed(e)),
                (_, Err(e)) => set.rows.push(row("variance").failed(e)),
            }
            match (&var, &exact, &sigma) {
                (Ok((v, se)), Ok(ex), Ok(s)) => set.rows.push(
                    row("gap")
                        .empirical(v - s)
                        .std_err(*se)
                        .oracle(ex - s)
                        .note(format!("sigma = {s}"))
                        .pass(within(v - s, *se, ex - s, tol)),
                ),
                _ => set
                    .rows
                    .push(row("gap").failed("variance, exact value or sigma unavailable")),
            }
            let sigma_alpha = linalg::solve_ricatti(&model.abar, &sigma_eps, alpha).map(|s| proj(&s));
            match (&scaled, sigma_alpha) {
                (Ok(x), Ok(sa)) if sa > 0.0 => {
                    let sd = sa.sqrt();
                    let ks = stats::ks_distance(x, |t| stats::normal_cdf(t / sd));
                    set.rows.push(match ks {
                        Ok(ks) => row("ks")
                            .empirical(ks)
                            .bound(self.config.ks_threshold)
                            .pass(ks <= self.config.ks_threshold),
                        Err(e) => row("ks").failed(e),
                    });
                }
                (Err(e), _) => set.rows.push(row("ks").failed(e)),
                (_, Err(e)) => set.rows.push(row("ks").failed(e)),
                _ => set.rows.push(row("ks").failed("degenerate limiting variance")),
            }
        }
        set
    }

    /// Synchronous-coupling distance E^{1/2}∥θ_n − θ′_n∥² against its exact
    /// value and the product moment bound times ∥θ₀ − θ′₀∥.
    fn wasserstein(&self) -> ResultSet {
        const KEYS: &[&str] = &["alpha", "n", "metric"];
        let mut set = ResultSet::new("wasserstein", KEYS);
        let model = self.model();
        let d = model.dim;
        let ones = Vector::from_element(d, 1.0);
        let x0 = self
            .config
            .theta0
            .clone()
            .map(Vector::from_vec)
            .unwrap_or_else(|| &model.theta_star + &ones);
        let y0 = self
            .config
            .theta0_prime
            .clone()
            .map(Vector::from_vec)
            .unwrap_or_else(|| &model.theta_star - &ones);
        let delta0 = &x0 - &y0;
        let profile = model.profile().ok().cloned();
        let mut unit = 0;
        for &alpha in &self.config.grid.alpha {
            for &n in &self.config.grid.n {
                let seed = self.unit_seed(unit);
                unit += 1;
                let row = RowBuilder::new(KEYS, seed)
                    .param("alpha", alpha)
                    .param("n", n)
                    .param("metric", "coupled_w2");
                let oracle = engine::coupled_second_moment(model, alpha, n, &delta0).map(f64::sqrt);
                let bound = profile
                    .as_ref()
                    .and_then(|p| bounds::product_moment_bound(p, 2.0, 2.0, alpha, n, false).ok())
                    .map(|b| b * delta0.norm());
                set.rows.push(
                    match (
                        engine::coupled_w2(model, alpha, &x0, &y0, n, self.config.n_traj, seed),
                        oracle,
                    ) {
                        (Err(e), _) => row.failed(e),
                        (_, Err(e)) => row.failed(e),
                        (Ok(mc), Ok(o)) => {
                            let ok_bound = bound.map_or(true, |b| mc.value <= b);
                            let mut r = row.empirical(mc.value).std_err(mc.std_err).oracle(o);
                            if let Some(b) = bound {
                                r = r.bound(b);
                            }
                            r.pass(within(mc.value, mc.std_err, o, self.config.tolerance_se) && ok_bound)
                        }
                    },
                );
            }
        }
        set
    }

    /// Ergodicity constants, δ_α roots and rates, B_{u,q} against its upper
    /// bound, the moment bound when inputs are given, and LSA contraction
    /// horizon and drift constants when a model and stepsize are given. The α
    /// grid holds the weight exponent in (0, 1).
    fn rosenthal(&self) -> ResultSet {
        const KEYS: &[&str] = &["alpha", "q", "u", "p", "metric"];
        let mut set = ResultSet::new("rosenthal", KEYS);
        let r = self.config.rosenthal.as_ref().expect("validated");
        let seed = self.config.seed;
        let row = |metric: &str| RowBuilder::new(KEYS, seed).param("metric", metric);
        let c = match rosenthal::v_geometric_constants(r.lambda, r.b, r.m, r.epsilon, r.d_level) {
            Ok(c) => c,
            Err(e) => {
                set.rows.push(row("rho").failed(e));
                return set;
            }
        };
        let vartheta = r.vartheta.unwrap_or_else(|| match (r.lsa_alpha, &self.model) {
            (Some(a), Some(model)) => rosenthal::lsa_coupling_lipschitz(a, model.c_a),
            _ => 1.0,
        });
        if !(self.config.grid.alpha.is_empty() && self.config.grid.q.is_empty()) {
            set.rows
                .push(row("rho").empirical(c.rho).pass(c.rho > 0.0 && c.rho < 1.0));
            set.rows.push(row("c_m").empirical(c.c_m).pass(c.c_m > 0.0));
        }
        for &alpha in &self.config.grid.alpha {
            let arow = |metric: &str| row(metric).param("alpha", alpha);
            let root = rosenthal::delta_alpha_root(c.lambda_bar_m, c.b_m, c.d_bar, c.epsilon, alpha);
            let delta = match root {
                Err(e) => {
                    set.rows.push(arow("delta_alpha").failed(e));
                    continue;
                }
                Ok(None) => {
                    set.rows
                        .push(arow("delta_alpha").note("no positive root on (0, 1e12]").pass(true));
                    continue;
                }
                Ok(Some(d)) => d,
            };
            let res = rosenthal::delta_alpha_residual(c.lambda_bar_m, c.b_m, c.d_bar, c.epsilon, alpha, delta).abs();
            set.rows.push(arow("delta_alpha").empirical(delta).pass(delta > 0.0));
            set.rows.push(
                arow("delta_residual")
                    .empirical(res)
                    .bound(DELTA_ROOT_TOL)
                    .pass(res <= DELTA_ROOT_TOL),
            );
            let rates = match rosenthal::wasserstein_rates(&c, alpha, vartheta) {
                Ok(rt) => rt,
                Err(e) => {
                    set.rows.push(arow("rho_alpha").failed(e));
                    continue;
                }
            };
            set.rows.push(
                arow("rho_alpha")
                    .empirical(rates.rho_alpha)
                    .pass(rates.rho_alpha > 0.0 && rates.rho_alpha < 1.0),
            );
            set.rows.push(
                arow("vartheta_alpha")
                    .empirical(rates.vartheta_alpha)
                    .pass(rates.vartheta_alpha.is_finite()),
            );
            set.rows
                .push(arow("kappa").empirical(rates.kappa).pass(rates.kappa >= 1.0));
            let with_rates = rosenthal::RosenthalConstants {
                rates: Some(rates),
                ..c.clone()
            };
            for &qf in &self.config.grid.q {
                let q = qf as u32;
                for u in 1..q {
                    let brow = arow("b_uq").param("q", q).param("u", u);
                    let upper = rosenthal::log_b_uq_upper(u, q, rates.rho_alpha);
                    let exact = rosenthal::log_b_uq(u, q, rates.rho_alpha);
                    set.rows.push(match (exact, upper) {
                        (Ok(e), Ok(up)) => {
                            let direct = rosenthal::b_uq_exact(u, q, rates.rho_alpha).ok();
                            let mut b = brow.bound(up.exp()).note(format!("log exact = {e}, log upper = {up}"));
                            if let Some(v) = direct {
                                b = b.empirical(v);
                            } else {
                                b = b.empirical(e.exp());
                            }
                            b.pass(e <= up)
                        }
                        (Err(e), _) | (_, Err(e)) => brow.failed(e),
                    });
                }
                if let Some(inputs) = r.inputs {
                    let inputs = rosenthal::RosenthalInputs { q, ..inputs };
                    let brow = arow("moment_bound").param("q", q);
                    set.rows.push(match rosenthal::rosenthal_bound(&inputs, &with_rates) {
                        Ok(v) => brow.bound(v).pass(v.is_finite()),
                        Err(e) => brow.failed(e),
                    });
                }
            }
        }
        if let (Some(lsa_alpha), Some(model)) = (r.lsa_alpha, &self.model) {
            if let Ok(p) = model.profile() {
                let hrow = row("horizon");
                set.rows
                    .push(match rosenthal::contraction_horizon(p, lsa_alpha, r.epsilon) {
                        Ok(m) => {
                            let f = 1.0 - lsa_alpha * p.a / 2.0;
                            let holds = |k: u32| p.kappa_q * f.powf(k as f64 / 2.0) <= 1.0 - r.epsilon;
                            let ok = holds(m) && (m == 1 || !holds(m - 1));
                            hrow.empirical(m as f64).pass(ok)
                        }
                        Err(e) => hrow.failed(e),
                    });
                if let Ok(m) = rosenthal::contraction_horizon(p, lsa_alpha, r.epsilon) {
                    for &pp in &self.config.grid.p {
                        let drow = |metric: &str| row(metric).param("p", pp);
                        match rosenthal::drift_constants(p, lsa_alpha, pp, model.sigma_b, m) {
                            Ok((lp, bp)) => {
                                set.rows.push(drow("drift_lambda").empirical(lp).pass(lp.is_finite()));
                                set.rows.push(drow("drift_b").empirical(bp).pass(bp.is_finite()));
                            }
                            Err(e) => set.rows.push(drow("drift_lambda").failed(e)),
                        }
                    }
                }
            }
        }
        set
    }
}
