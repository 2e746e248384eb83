//! Experiment configuration: a single JSON document, validated up front.

use std::path::{Path, PathBuf};

use lsa_core::bounds::Regime;
use lsa_core::noise::{LsaModel, ModelSpec};
use lsa_core::rosenthal::RosenthalInputs;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Lyapunov,
    Bounds,
    Simulate,
    Rademacher,
    Clt,
    Wasserstein,
    Rosenthal,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lyapunov => "lyapunov",
            Self::Bounds => "bounds",
            Self::Simulate => "simulate",
            Self::Rademacher => "rademacher",
            Self::Clt => "clt",
            Self::Wasserstein => "wasserstein",
            Self::Rosenthal => "rosenthal",
        }
    }
}

/// Parameter grids. Each experiment documents which axes it reads.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub n: Vec<u64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub q: Vec<f64>,
}

/// Inputs of the `rosenthal` experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosenthalParams {
    pub lambda: f64,
    pub b: f64,
    pub m: u32,
    pub epsilon: f64,
    pub d_level: f64,
    /// One-step Lipschitz constant of the coupling kernel. Defaults to
    /// 1 + α·C_A for the LSA kernel when a model and `lsa_alpha` are given,
    /// and to 1 otherwise.
    #[serde(default)]
    pub vartheta: Option<f64>,
    /// Problem inputs for the moment bound; `q` is taken from the grid.
    #[serde(default)]
    pub inputs: Option<RosenthalInputs>,
    /// LSA stepsize for contraction-horizon rows (needs a model).
    #[serde(default)]
    pub lsa_alpha: Option<f64>,
}

fn default_n_traj() -> usize {
    1000
}

fn default_tolerance_se() -> f64 {
    4.0
}

fn default_stationary_tol() -> f64 {
    lsa_core::engine::DEFAULT_STATIONARY_TOL
}

fn default_ks_threshold() -> f64 {
    0.02
}

fn default_instances() -> usize {
    100
}

fn default_max_dim() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional here because the command line names the experiment; a
    /// mismatch is a validation error.
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Half-width, in standard errors, of MC-vs-oracle agreement.
    #[serde(default = "default_tolerance_se")]
    pub tolerance_se: f64,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    /// Second initial point for synchronous coupling.
    #[serde(default)]
    pub theta0_prime: Option<Vec<f64>>,
    /// Direction of the scalar projection u⊤(θ_n − θ*); defaults to e₁.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default = "default_regime")]
    pub regime: Regime,
    #[serde(default)]
    pub rosenthal: Option<RosenthalParams>,
    #[serde(default = "default_stationary_tol")]
    pub stationary_tol: f64,
    #[serde(default = "default_ks_threshold")]
    pub ks_threshold: f64,
    /// Number of random Hurwitz instances for `lyapunov` without a model.
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
    /// Read the α grid as fractions of each instance's α∞.
    #[serde(default)]
    pub alpha_relative: bool,
}

fn default_regime() -> Regime {
    Regime::Iid
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// SHA-256 of the canonical JSON form, ignoring fields that cannot change
    /// the results (worker count and output path).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.out = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn build_model(&self) -> Result<Option<LsaModel>, String> {
        self.model
            .as_ref()
            .map(|spec| LsaModel::from_spec(spec).map_err(|e| format!("model: {e}")))
            .transpose()
    }

    /// Checks every grid value against the preconditions of the experiment and
    /// returns all violations at once.
    pub fn validate(&self, experiment: Experiment) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if let Some(e) = self.experiment {
            if e != experiment {
                errs.push(format!(
                    "config names experiment '{}' but '{}' was requested",
                    e.name(),
                    experiment.name()
                ));
            }
        }
        if !(self.tolerance_se > 0.0 && self.tolerance_se.is_finite()) {
            errs.push(format!("tolerance_se = {} must be positive", self.tolerance_se));
        }
        if self.workers == Some(0) {
            errs.push("workers must be at least 1".to_owned());
        }
        let model = match self.build_model() {
            Ok(m) => m,
            Err(e) => {
                errs.push(e);
                None
            }
        };
        for (i, a) in self.grid.alpha.iter().enumerate() {
            if !(*a > 0.0 && a.is_finite()) {
                errs.push(format!("grid.alpha[{i}] = {a} must be positive and finite"));
            }
        }
        let needs_model = matches!(
            experiment,
            Experiment::Bounds | Experiment::Simulate | Experiment::Clt | Experiment::Wasserstein
        );
        if needs_model && self.model.is_none() {
            errs.push(format!("experiment '{}' needs a model", experiment.name()));
        }
        let dim = model.as_ref().map(|m| m.dim);
        let check_vec = |name: &str, v: &Option<Vec<f64>>, errs: &mut Vec<String>| {
            if let (Some(v), Some(d)) = (v, dim) {
                if v.len() != d {
                    errs.push(format!("{name} has length {} but the model has dimension {d}", v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    errs.push(format!("{name} has non-finite entries"));
                }
            }
        };
        check_vec("theta0", &self.theta0, &mut errs);
        check_vec("theta0_prime", &self.theta0_prime, &mut errs);
        check_vec("u", &self.u, &mut errs);
        if let Some(u) = &self.u {
            if u.iter().all(|x| *x == 0.0) {
                errs.push("u must be nonzero".to_owned());
            }
        }
        let profile = model.as_ref().and_then(|m| match m.profile() {
            Ok(p) => Some(p.clone()),
            Err(e) => {
                errs.push(format!("model: {e}"));
                None
            }
        });
        let mc = matches!(
            experiment,
            Experiment::Bounds | Experiment::Simulate | Experiment::Clt | Experiment::Wasserstein
        );
        if mc && self.n_traj < 2 {
            errs.push(format!("n_traj = {} must be at least 2", self.n_traj));
        }

        match experiment {
            Experiment::Lyapunov => {
                if model.is_none() {
                    if !self.alpha_relative {
                        errs.push("lyapunov without a model needs alpha_relative = true".to_owned());
                    }
                    if !(1..=16).contains(&self.max_dim) {
                        errs.push(format!("max_dim = {} must lie in 1..=16", self.max_dim));
                    }
                }
                if self.alpha_relative {
                    for (i, a) in self.grid.alpha.iter().enumerate() {
                        if *a > 1.0 {
                            errs.push(format!("grid.alpha[{i}] = {a} exceeds 1 (fraction of alpha_inf)"));
                        }
                    }
                } else if let Some(p) = &profile {
                    for (i, a) in self.grid.alpha.iter().enumerate() {
                        if *a > p.alpha_inf {
                            errs.push(format!("grid.alpha[{i}] = {a} exceeds alpha_inf = {}", p.alpha_inf));
                        }
                    }
                }
            }
            Experiment::Bounds => {
                for (i, d) in self.grid.delta.iter().enumerate() {
                    if !(*d > 0.0 && *d < 0.25) {
                        errs.push(format!("grid.delta[{i}] = {d} must lie in (0, 1/4)"));
                    }
                }
                for (i, p0) in self.grid.p.iter().enumerate() {
                    if !(*p0 >= 2.0 && p0.is_finite()) {
                        errs.push(format!("grid.p[{i}] = {p0} must be >= 2"));
                    }
                }
                if let (Some(p), Some(m)) = (&profile, &model) {
                    if self.regime == Regime::Contractive && m.contractive.is_none() {
                        errs.push("regime 'contractive' needs contraction data in the model".to_owned());
                    }
                    for (i, a) in self.grid.alpha.iter().enumerate() {
                        match self.regime {
                            Regime::Iid => {
                                for p0 in &self.grid.p {
                                    let limit = p.alpha_p_inf(*p0);
                                    if !(*a < limit) {
                                        errs.push(format!(
                                            "grid.alpha[{i}] = {a} is not below alpha_{{{p0},inf}} = {limit}"
                                        ));
                                    }
                                }
                            }
                            Regime::Contractive => {
                                let tilde = m.contractive.as_ref().map_or(f64::INFINITY, |c| c.alpha_tilde_inf);
                                let limit = p.alpha_inf.min(tilde);
                                if !(*a < limit) {
                                    errs.push(format!("grid.alpha[{i}] = {a} is not below {limit}"));
                                }
                            }
                        }
                    }
                }
            }
            Experiment::Simulate => {
                for (i, q) in self.grid.q.iter().enumerate() {
                    if !(*q >= 2.0 && q.is_finite()) {
                        errs.push(format!("grid.q[{i}] = {q} must be >= 2"));
                    }
                }
            }
            Experiment::Rademacher => {
                for (i, q) in self.grid.q.iter().enumerate() {
                    if !(*q > 0.5 && *q < 1.0) {
                        errs.push(format!("grid.q[{i}] = {q} (bias q_A) must lie in (1/2, 1)"));
                    }
                }
                for (i, a) in self.grid.alpha.iter().enumerate() {
                    if !(*a < 1.0) {
                        errs.push(format!("grid.alpha[{i}] = {a} must lie in (0, 1)"));
                    }
                }
                for (i, d) in self.grid.delta.iter().enumerate() {
                    if !(*d > 0.0 && *d <= 1.0) {
                        errs.push(format!("grid.delta[{i}] = {d} must lie in (0, 1]"));
                    }
                }
                for (i, n) in self.grid.n.iter().enumerate() {
                    if *n == 0 {
                        errs.push(format!("grid.n[{i}] must be positive"));
                    }
                }
                for (i, p) in self.grid.p.iter().enumerate() {
                    if !(*p >= 1.0 && p.is_finite()) {
                        errs.push(format!("grid.p[{i}] = {p} must be >= 1"));
                    }
                }
            }
            Experiment::Clt => {
                if let Some(m) = &model {
                    if !self.stationary_tol.is_finite() || self.stationary_tol <= 0.0 {
                        errs.push(format!("stationary_tol = {} must be positive", self.stationary_tol));
                    }
                    if let Some(p) = &profile {
                        for (i, a) in self.grid.alpha.iter().enumerate() {
                            if *a > p.alpha_inf {
                                errs.push(format!("grid.alpha[{i}] = {a} exceeds alpha_inf = {}", p.alpha_inf));
                            }
                        }
                    }
                    if m.is_deterministic() {
                        errs.push("clt needs a model with noise".to_owned());
                    }
                }
                if !(self.ks_threshold > 0.0) {
                    errs.push(format!("ks_threshold = {} must be positive", self.ks_threshold));
                }
            }
            Experiment::Wasserstein => {}
            Experiment::Rosenthal => match &self.rosenthal {
                None => errs.push("experiment 'rosenthal' needs a 'rosenthal' section".to_owned()),
                Some(r) => {
                    if let Err(e) = lsa_core::rosenthal::v_geometric_constants(r.lambda, r.b, r.m, r.epsilon, r.d_level)
                    {
                        errs.push(format!("rosenthal: {e}"));
                    }
                    if let Some(v) = r.vartheta.filter(|v| !(*v >= 1.0 && v.is_finite())) {
                        errs.push(format!("rosenthal.vartheta = {v} must be >= 1"));
                    }
                    for (i, a) in self.grid.alpha.iter().enumerate() {
                        if !(*a < 1.0) {
                            errs.push(format!("grid.alpha[{i}] = {a} (weight exponent) must lie in (0, 1)"));
                        }
                    }
                    for (i, q) in self.grid.q.iter().enumerate() {
                        if !(*q >= 2.0 && q.fract() == 0.0 && *q <= 64.0) {
                            errs.push(format!("grid.q[{i}] = {q} must be an integer in [2, 64]"));
                        }
                    }
                    if let Some(a) = r.lsa_alpha {
                        match &profile {
                            None => errs.push("rosenthal.lsa_alpha needs a model".to_owned()),
                            Some(p) if !(a > 0.0 && a < p.alpha_inf) => {
                                errs.push(format!("rosenthal.lsa_alpha = {a} must lie in (0, {})", p.alpha_inf))
                            }
                            Some(_) => {}
                        }
                    }
                }
            },
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}
