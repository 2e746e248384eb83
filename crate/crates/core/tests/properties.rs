//! Property tests for the solvers, samplers, engine, bounds and Rosenthal
//! constants.

use lsa_core::bounds::{self, CompositeQuery, Regime, TailSide};
use lsa_core::engine;
use lsa_core::linalg::{self, Matrix, Vector};
use lsa_core::noise::LsaModel;
use lsa_core::rng::Stream;
use lsa_core::rosenthal;
use lsa_core::stats;
use proptest::prelude::*;

fn m(rows: usize, data: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, data.len() / rows, data)
}

/// Gaussian matrix shifted so that every eigenvalue has real part at least
/// `margin`.
fn random_hurwitz(seed: u64, d: usize, margin: f64) -> Matrix {
    let mut s = Stream::new(seed, 0);
    let g = Matrix::from_fn(d, d, |_, _| s.normal());
    let min_re = linalg::eigenvalues(&g)
        .unwrap()
        .iter()
        .map(|e| e.0)
        .fold(f64::INFINITY, f64::min);
    let shift = (margin - min_re).max(0.0) + s.uniform();
    g + Matrix::identity(d, d) * shift
}

fn random_psd(seed: u64, d: usize) -> Matrix {
    let mut s = Stream::new(seed, 1);
    let g = Matrix::from_fn(d, d, |_, _| s.normal());
    &g * g.transpose()
}

fn rel(res: &Matrix, sol: &Matrix) -> f64 {
    linalg::op_norm(res) / (1.0 + linalg::op_norm(sol))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn solver_residuals_small(seed in any::<u64>(), d in 1usize..=8) {
        let abar = random_hurwitz(seed, d, 0.1);
        let se = random_psd(seed, d);
        let q = linalg::solve_lyapunov(&abar).unwrap();
        prop_assert!(rel(&linalg::lyapunov_residual(&abar, &q), &q) <= 1e-10);
        let sigma = linalg::solve_sigma(&abar, &se).unwrap();
        prop_assert!(rel(&linalg::sigma_residual(&abar, &sigma, &se), &sigma) <= 1e-10);
        let p = linalg::spectral_profile(&abar, 1.0, None).unwrap();
        let alpha = 0.5 * p.alpha_inf;
        let sa = linalg::solve_ricatti(&abar, &se, alpha).unwrap();
        prop_assert!(rel(&linalg::ricatti_residual(&abar, &sa, &se, alpha), &sa) <= 1e-10);
    }

    #[test]
    fn schatten_non_increasing_in_p(seed in any::<u64>(), d in 1usize..=6) {
        let mut s = Stream::new(seed, 2);
        let x = Matrix::from_fn(d, d + 1, |_, _| s.normal());
        let ps = [1.0, 1.5, 2.0, 3.0, 8.0, 50.0, f64::INFINITY];
        let norms: Vec<f64> = ps.iter().map(|&p| linalg::schatten_norm(&x, p).unwrap()).collect();
        for w in norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn bsum_identity_random_sequences(seed in any::<u64>(), len in 1usize..=1000, a in 0.01f64..5.0) {
        let mut s = Stream::new(seed, 3);
        let alpha0 = s.uniform() / a;
        let mut seq = Vec::with_capacity(len);
        let mut cur = alpha0;
        for _ in 0..len {
            seq.push(cur);
            cur *= s.uniform().powf(0.01);
        }
        prop_assert!(rosenthal::geometric_sum_check(&seq, a) <= 1e-10);
    }

    #[test]
    fn product_hp_is_moment_composition(
        alpha in 0.001f64..0.1,
        n in 1u64..2000,
        delta in 1e-6f64..1.0,
        diag in 0.2f64..3.0,
        c_a in 0.1f64..3.0,
    ) {
        let p = linalg::spectral_profile(&m(2, &[diag, 0.3, 0.0, diag + 0.5]), c_a, None).unwrap();
        let nf = n as f64;
        let big_a = (-p.kappa_q.ln() + p.a * alpha * nf + p.b_q.powi(2) * alpha * alpha * nf) / 2.0;
        let big_b = alpha * alpha * p.b_q.powi(2) * nf / 2.0;
        let via = bounds::moments_to_hp(big_a, big_b, p.dim as f64, 2.0, f64::INFINITY, delta).unwrap();
        let direct = bounds::product_hp_bound(&p, alpha, n, delta).unwrap();
        prop_assert!(((direct - via) / via).abs() <= 1e-12);
    }

    #[test]
    fn horizon_satisfies_defining_pair(kappa in 1.0f64..50.0, aa in 1e-4f64..1.0, eps in 0.01f64..0.99) {
        let mh = rosenthal::horizon_raw(kappa, aa, eps);
        let f = 1.0 - aa / 2.0;
        prop_assert!(kappa * f.powf(mh as f64 / 2.0) <= 1.0 - eps);
        if mh > 1 {
            prop_assert!(1.0 - eps < kappa * f.powf((mh - 1) as f64 / 2.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn mean_step_contracts_in_q_norm(seed in any::<u64>(), d in 1usize..=8, frac in 0.0f64..=1.0) {
        let abar = random_hurwitz(seed, d, 0.1);
        let p = linalg::spectral_profile(&abar, 1.0, None).unwrap();
        let alpha = frac * p.alpha_inf;
        prop_assert!(p.contraction_sq(alpha) <= 1.0 - p.a * alpha + 1e-12);
        // aα ≤ 1/2 exactly when α ≤ ∥Q∥, since a = 1/(2∥Q∥).
        let q_norm = p.norm.max_eigenvalue();
        let half = alpha.min(q_norm);
        prop_assert!(1.0 - p.a * half >= 0.5 - 1e-15);
    }

    #[test]
    fn sigma_gap_dominated(seed in any::<u64>(), d in 1usize..=6) {
        let abar = random_hurwitz(seed, d, 0.1);
        let se = random_psd(seed, d);
        let p = linalg::spectral_profile(&abar, 1.0, None).unwrap();
        let sigma = linalg::solve_sigma(&abar, &se).unwrap();
        for alpha in [p.alpha_inf, p.alpha_inf / 4.0, p.alpha_inf / 16.0] {
            let sa = linalg::solve_ricatti(&abar, &se, alpha).unwrap();
            let gap = p.norm.matrix(&(sa - &sigma)).unwrap();
            let bound = bounds::sigma_gap_bound(&abar, &sigma, &p, alpha).unwrap();
            prop_assert!(gap <= bound + 1e-10, "gap {gap} bound {bound}");
        }
    }
}

#[test]
fn half_contraction_needs_alpha_below_q_norm() {
    // Ā = 1/4: ∥Q∥ = 2, α∞ = ∥Q∥² = 4, and aα = 1 at α = ∥Q∥².
    let p = linalg::spectral_profile(&m(1, &[0.25]), 1.0, None).unwrap();
    let q_norm = p.norm.max_eigenvalue();
    assert!((q_norm - 2.0).abs() < 1e-12);
    let alpha = q_norm * q_norm;
    assert!(alpha <= p.alpha_inf * (1.0 + 1e-12));
    assert!(1.0 - p.a * alpha < 0.5);
}

fn td_model() -> LsaModel {
    LsaModel::td_zero(
        m(3, &[0.1, 0.6, 0.3, 0.5, 0.0, 0.5, 0.3, 0.3, 0.4]),
        vec![1.0, 0.0, -2.0],
        m(3, &[1.0, 0.0, 0.5, 1.0, 0.0, 1.0]),
        0.8,
    )
    .unwrap()
}

fn factor_model() -> LsaModel {
    LsaModel::bounded_factor(
        m(2, &[1.0, 0.3, -0.2, 0.8]),
        Vector::from_vec(vec![0.5, -1.0]),
        m(2, &[0.5, 0.1, 0.0, 0.4]),
        0.5,
        0.7,
    )
    .unwrap()
}

fn builtin_models() -> Vec<(&'static str, LsaModel)> {
    vec![
        ("rademacher", LsaModel::biased_rademacher(0.75).unwrap()),
        ("rademacher_gaussian", LsaModel::rademacher_gaussian(0.7, 2.0).unwrap()),
        ("bounded_factor", factor_model()),
        ("td_zero", td_model()),
    ]
}

#[test]
fn sampler_means_match_within_four_se() {
    const N: usize = 100_000;
    for (name, model) in builtin_models() {
        let d = model.dim;
        let mut rng = Stream::new(99, 0);
        let mut a_draws = vec![Vec::with_capacity(N); d * d];
        let mut b_draws = vec![Vec::with_capacity(N); d];
        let (mut a, mut b) = model.buffers();
        for _ in 0..N {
            model.sample_into(&mut rng, &mut a, &mut b);
            for (k, v) in a.iter().enumerate() {
                a_draws[k].push(*v);
            }
            for (k, v) in b.iter().enumerate() {
                b_draws[k].push(*v);
            }
        }
        let check = |draws: &[f64], target: f64, what: &str| {
            let (mean, se) = stats::mean_and_se(draws).unwrap();
            assert!(
                (mean - target).abs() <= 4.0 * se + 1e-12,
                "{name} {what}: mean {mean} target {target} se {se}"
            );
        };
        for (k, draws) in a_draws.iter().enumerate() {
            check(draws, model.abar.as_slice()[k], "A");
        }
        for (k, draws) in b_draws.iter().enumerate() {
            check(draws, model.bbar[k], "b");
        }
    }
}

#[test]
fn rademacher_trajectory_is_scalar_product() {
    let model = LsaModel::biased_rademacher(0.7).unwrap();
    for id in 0..20 {
        let theta =
            engine::run_trajectory(&model, 0.1, &Vector::from_element(1, 1.0), 300, &mut Stream::new(5, id)).unwrap();
        let gamma = engine::product(&model, 0.1, 300, &mut Stream::new(5, id));
        assert!((theta[0] - gamma[(0, 0)]).abs() <= 1e-13 * gamma[(0, 0)].abs());
    }
}

#[test]
fn mc_moment_bit_identical_across_pool_sizes() {
    let model = factor_model();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| engine::mc_norm_moment(&model, 0.05, 40, 2.0, 2000, 17).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.value.to_bits(), four.value.to_bits());
    assert_eq!(one.std_err.to_bits(), four.std_err.to_bits());
}

#[test]
fn decomposition_identity_on_seeded_trials() {
    let models = builtin_models();
    for trial in 0..100u64 {
        let (_, model) = &models[(trial % models.len() as u64) as usize];
        let p = model.profile().unwrap();
        let mut s = Stream::new(trial, 1000);
        let alpha = p.alpha_inf * s.uniform().max(1e-3);
        let n = 1 + (s.uniform() * 999.0) as u64;
        let theta0 = Vector::from_fn(model.dim, |_, _| 3.0 * s.normal());
        let dec = engine::run_decomposed(model, alpha, &theta0, n, &mut Stream::new(trial, 0));
        match dec {
            Ok(dec) => assert!(
                dec.identity_residual() <= 1e-9,
                "trial {trial}: {}",
                dec.identity_residual()
            ),
            // Models outside the noise assumption may blow up at large α; the identity is then vacuous.
            Err(engine::EngineError::NonFinite { .. }) => assert!(!model.noise_assumption_holds),
            Err(e) => panic!("trial {trial}: {e}"),
        }
    }
}

#[test]
fn exact_tail_is_a_survival_function() {
    let (q, alpha, n) = (0.75, 0.1, 60u64);
    let t_min = (1.0f64 - alpha).powi(n as i32);
    assert_eq!(engine::rademacher_exact_tail(q, alpha, n, t_min), 1.0);
    let t_max = (1.0f64 + alpha).powi(n as i32);
    let top = engine::rademacher_exact_tail(q, alpha, n, t_max);
    assert!((top - (1.0 - q).powi(n as i32)).abs() <= 1e-12 * top.max(1e-300) + 1e-300);
    let mut prev = 1.0;
    for k in 0..=400 {
        let t = t_min * (t_max / t_min).powf(k as f64 / 400.0);
        let v = engine::rademacher_exact_tail(q, alpha, n, t);
        assert!(v <= prev + 1e-15);
        prev = v;
    }
    assert_eq!(engine::rademacher_exact_tail(q, alpha, n, t_max * 1.01), 0.0);
}

#[test]
fn cov_j0_matches_monte_carlo() {
    const N: usize = 100_000;
    let model = factor_model();
    let (alpha, n) = (0.1, 30);
    let exact = engine::cov_j0(&model, alpha, n);
    let theta0 = model.theta_star.clone();
    let samples = engine::par_trajectories(N, 4, |rng| {
        Ok(engine::run_decomposed(&model, alpha, &theta0, n, rng)?.j0)
    })
    .unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let prods: Vec<f64> = samples.iter().map(|v| v[i] * v[j]).collect();
            let (mean, se) = stats::mean_and_se(&prods).unwrap();
            assert!(
                (mean - exact[(i, j)]).abs() <= 4.0 * se,
                "({i},{j}): mc {mean} exact {} se {se}",
                exact[(i, j)]
            );
        }
    }
}

#[test]
fn bsum_constant_stepsize() {
    for &(alpha, a, n) in &[(0.01, 1.0, 10usize), (0.1, 2.0, 500), (0.001, 0.5, 1000)] {
        assert!(rosenthal::geometric_sum_check(&vec![alpha; n + 1], a) <= 1e-12);
    }
}

#[test]
fn bounds_grow_as_delta_shrinks() {
    let p = linalg::spectral_profile(&m(2, &[1.0, 0.3, 0.0, 1.5]), 2.0, Some(2.0)).unwrap();
    let model = factor_model();
    let mp = model.profile().unwrap();
    let deltas = [0.24, 0.1, 0.05, 0.01, 1e-3, 1e-5, 1e-8];
    let mut last = [0.0f64; 6];
    for &delta in &deltas {
        let alpha = 0.5 * mp.alpha_p_inf(4.0);
        let query = CompositeQuery {
            p0: 4.0,
            alpha,
            n: 100,
            theta0: Vector::from_element(2, 1.0),
            u: Vector::from_vec(vec![1.0, 0.0]),
            delta,
            regime: Regime::Iid,
        };
        let (j1, h1) = bounds::j1_h1_bounds(&p, 4.0, 0.01, delta, 1.0, Regime::Iid, None).unwrap();
        let now = [
            bounds::product_hp_bound(&p, 0.01, 100, delta).unwrap(),
            bounds::transient_hp_bound(&p, 4.0, 0.005, 100, 1.0, delta).unwrap(),
            bounds::j0_hp_bound(0.3, &p, 0.01, delta, 1.0).unwrap(),
            j1,
            h1,
            bounds::composite_hp_bound(mp, &model, &query).unwrap().value,
        ];
        for (k, (&n, &l)) in now.iter().zip(&last).enumerate() {
            assert!(n >= l, "evaluator {k} decreased at delta = {delta}");
        }
        last = now;
    }
    let mut last_t = 0.0;
    for &delta in &[1.0, 0.5, 0.1, 0.01, 1e-3] {
        let t = bounds::rademacher_tail_thresholds(0.75, 0.1, 1000, delta, TailSide::Upper).unwrap();
        assert!(t >= last_t);
        last_t = t;
    }
}

#[test]
fn cor1_dominates_exact_rademacher_moments() {
    for &q_a in &[0.55, 0.75, 0.95] {
        let model = LsaModel::biased_rademacher(q_a).unwrap();
        let p = model.profile().unwrap();
        for &q in &[2.0, 4.0] {
            let limit = p.alpha_p_inf(q);
            for &frac in &[0.05, 0.3, 0.7, 1.0] {
                let alpha = limit * frac;
                for n in (0..=1000u64).step_by(37) {
                    let bound = bounds::product_moment_bound(p, q, q, alpha, n, false).unwrap();
                    let exact = engine::rademacher_exact_moment(q_a, alpha, q, n).powf(1.0 / q);
                    assert!(exact <= bound * (1.0 + 1e-12), "q_a={q_a} q={q} alpha={alpha} n={n}");
                }
            }
        }
    }
}

#[test]
fn composite_value_is_sum_of_parts() {
    let model = factor_model();
    let p = model.profile().unwrap();
    for (k, &delta) in [0.2, 0.01, 1e-4].iter().enumerate() {
        let query = CompositeQuery {
            p0: 2.0 + k as f64,
            alpha: 0.9 * p.alpha_p_inf(2.0 + k as f64),
            n: 50 * (k as u64 + 1),
            theta0: Vector::from_vec(vec![2.0, -1.0]),
            u: Vector::from_vec(vec![0.6, 0.8]),
            delta,
            regime: Regime::Iid,
        };
        let r = bounds::composite_hp_bound(p, &model, &query).unwrap();
        let parts: f64 = ["part_transient", "part_j0", "part_j1", "part_h1"]
            .iter()
            .map(|k| r.constant(k).unwrap())
            .sum();
        assert!(((r.value - parts) / r.value).abs() <= 1e-12, "{} vs {parts}", r.value);
    }
}

#[test]
fn subgauss_bound_dominates_gaussian_moments() {
    for p in [2.0, 4.0, 6.0, 8.0] {
        let exact = 2f64.powf(p / 2.0) * statrs::function::gamma::gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt();
        for max_variant in [false, true] {
            assert!(bounds::subgauss_moment_bound(1.0, p, max_variant).unwrap() >= exact);
        }
    }
}

#[test]
fn ergodicity_constants_in_range_over_sweep() {
    let mut s = Stream::new(31, 0);
    let mut evaluated = 0;
    for _ in 0..10_000 {
        let lambda = s.uniform();
        let d = 1.0 + 50.0 * s.uniform();
        let b = s.uniform() * (1.0 - lambda) * (1.0 + d) / 2.0;
        let eps = s.uniform();
        let m = 1 + (s.uniform() * 20.0) as u32;
        match rosenthal::v_geometric_constants(lambda, b, m, eps, d) {
            Ok(c) => {
                assert!(c.rho > 0.0 && c.rho < 1.0);
                assert!(c.c_m > 0.0);
                evaluated += 1;
            }
            Err(rosenthal::RosenthalError::NotAdmissible(_)) => {}
            Err(e) => panic!("lambda={lambda} b={b} m={m} eps={eps} d={d}: {e}"),
        }
    }
    assert!(evaluated > 9_000);
}

#[test]
fn b_uq_exact_below_upper_exhaustively() {
    for q in 2..=8 {
        for u in 1..q {
            for rho in [0.1, 0.5, 0.9] {
                let e = rosenthal::b_uq_exact(u, q, rho).unwrap();
                let up = rosenthal::b_uq_upper(u, q, rho).unwrap();
                assert!(e <= up, "u={u} q={q} rho={rho}: {e} > {up}");
                let log_e = rosenthal::log_b_uq(u, q, rho).unwrap();
                assert!((log_e - e.ln()).abs() <= 1e-12 * e.ln().abs().max(1.0));
            }
        }
    }
}

fn binom(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn composition_counts_match_closed_form() {
    for q in 2..=10u32 {
        for u in 1..q {
            let count = rosenthal::compositions(u, 2 * q).len() as u64;
            assert_eq!(count, binom((2 * q - u - 1) as u64, (u - 1) as u64), "u={u} q={q}");
        }
    }
}

#[test]
fn delta_root_residual_over_sweep() {
    let grid = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
        (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
    };
    let mut found = 0;
    for lb in grid(0.3, 0.9, 7) {
        for bm in grid(0.1, 1.0, 10) {
            for db in grid(1.5, 10.0, 10) {
                for eps in grid(0.1, 0.9, 9) {
                    for alpha in grid(0.1, 0.9, 9) {
                        if let Some(delta) = rosenthal::delta_alpha_root(lb, bm, db, eps, alpha).unwrap() {
                            found += 1;
                            assert!(delta > 0.0);
                            let r = rosenthal::delta_alpha_residual(lb, bm, db, eps, alpha, delta);
                            assert!(r.abs() <= 1e-12, "residual {r}");
                        }
                    }
                }
            }
        }
    }
    assert!(found > 0);
}
