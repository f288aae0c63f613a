//! The three fitters against dense oracles, plus gradient and score checks.

mod common;

use common::*;
use pcha::dense::{dot, mean, norm2};
use pcha::loss::{LossKind, RiskState};
use pcha::solver::{
    fit_hagl, fit_hal, fit_har, kkt_residual, warm_start_hagl, HaglMethod, SolverConfig,
};
use proptest::prelude::*;
use rand::Rng;

fn centered(y: &[f64]) -> Vec<f64> {
    let b = mean(y);
    y.iter().map(|v| v - b).collect()
}

fn labels(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng(seed);
    let mut y: Vec<f64> = (0..n)
        .map(|_| if r.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    // Both classes present.
    y[0] = 1.0;
    if n > 1 {
        y[1] = -1.0;
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>(), logistic in any::<bool>()) {
        let mut r = rng(seed);
        let n = r.gen_range(2..=15);
        let x = { let d = r.gen_range(1..=3); random_points(&mut r, n, d) };
        let m = model(&x);
        let (kind, y) = if logistic { (LossKind::Logistic, labels(seed, n)) } else { (LossKind::Mse, random_vec(&mut r, n)) };
        let st = RiskState::new(m.design(), m.singular_values(), &y, kind).unwrap();
        let alpha: Vec<f64> = random_vec(&mut r, m.rank()).iter().map(|v| v * 0.3).collect();
        let b = r.gen_range(-0.5..0.5);
        let g = st.grad_alpha_at(&alpha, b);
        for k in 0..m.rank() {
            let h = 1e-5;
            let mut p = alpha.clone();
            let mut q = alpha.clone();
            p[k] += h;
            q[k] -= h;
            let fd = (st.risk_at(&p, b) - st.risk_at(&q, b)) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-2), "coord {k}: fd {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn ridge_matches_normal_equations(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(2..=20);
        let x = { let d = r.gen_range(1..=3); random_points(&mut r, n, d) };
        let m = model(&x);
        let y = random_vec(&mut r, n);
        let lambda = 10f64.powf(r.gen_range(-4.0..1.0));
        let st = RiskState::new(m.design(), m.singular_values(), &y, LossKind::Mse).unwrap();
        let fit = fit_har(&st, lambda, &SolverConfig::default()).unwrap();
        let oracle = ridge_normal_equations(m.design(), &centered(&y), lambda);
        for (a, b) in fit.alpha.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-8 * norm2(&oracle).max(1.0));
        }
        // Ridge stationarity makes the score vanish along directions orthogonal to α.
        let g = st.grad_alpha(&fit.alpha);
        let mut h = random_vec(&mut r, m.rank());
        let c = dot(&h, &fit.alpha) / dot(&fit.alpha, &fit.alpha).max(1e-300);
        h.iter_mut().zip(&fit.alpha).for_each(|(v, a)| *v -= c * a);
        prop_assert!(dot(&g, &h).abs() <= 1e-6 * norm2(&h).max(1e-12));
    }

    #[test]
    fn lasso_matches_proximal_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(2..=15);
        let x = { let d = r.gen_range(1..=2); random_points(&mut r, n, d) };
        let m = model(&x);
        let y = random_vec(&mut r, n);
        let lambda = 10f64.powf(r.gen_range(-3.0..0.0));
        let st = RiskState::new(m.design(), m.singular_values(), &y, LossKind::Mse).unwrap();
        let fit = fit_hal(&st, lambda, &SolverConfig::default()).unwrap();
        let yt = centered(&y);
        let ours = lasso_objective(m.design(), &yt, &fit.alpha, lambda);
        let oracle = lasso_objective(m.design(), &yt, &lasso_fista(m.design(), &yt, lambda, 20_000), lambda);
        prop_assert!(ours <= oracle + 1e-9, "ours {ours} oracle {oracle}");
        prop_assert!(oracle - ours <= 1e-6);
        prop_assert!(kkt_residual(&st.grad_alpha(&fit.alpha), &fit.alpha, lambda) <= 1e-9);
    }
}

#[test]
fn hagl_matches_constrained_oracle_on_random_instances() {
    let mut r = rng(11);
    for case in 0..12 {
        let n = r.gen_range(4..=16);
        let d = r.gen_range(1..=2);
        let x = random_points(&mut r, n, d);
        let m = model(&x);
        let y = random_vec(&mut r, n);
        let st = RiskState::new(m.design(), m.singular_values(), &y, LossKind::Mse).unwrap();
        let lambda = 10f64.powf(r.gen_range(-3.0..0.0));
        let cfg = SolverConfig::default();
        let (c, start) = warm_start_hagl(&st, &m, lambda, &cfg).unwrap();
        let e = eigenvector_matrix(&dense_design(&x), &m);
        let oracle = st.risk(&admm_constrained_mse(
            m.design(),
            m.singular_values(),
            &e,
            &centered(&y),
            c,
            20_000,
        ));
        for method in [HaglMethod::SteepestDescent, HaglMethod::Preconditioned] {
            let fit = fit_hagl(
                &st,
                &m,
                c,
                &start,
                &SolverConfig {
                    hagl_method: method,
                    ..cfg
                },
            )
            .unwrap();
            let gap = fit.diagnostics.final_risk - oracle;
            assert!(gap.abs() <= 1e-4, "case {case} {method:?}: gap {gap:e}");
            assert!(fit.diagnostics.constraint_residual.unwrap() <= 1e-10);
        }
    }
}

#[test]
fn hagl_without_refinement_keeps_the_constraint_and_lowers_the_risk() {
    let mut r = rng(5);
    for _ in 0..10 {
        let n = r.gen_range(5..=25);
        let x = {
            let d = r.gen_range(1..=3);
            random_points(&mut r, n, d)
        };
        let m = model(&x);
        let y = random_vec(&mut r, n);
        let st = RiskState::new(m.design(), m.singular_values(), &y, LossKind::Mse).unwrap();
        let cfg = SolverConfig {
            hagl_refine_max_rank: 0,
            ..SolverConfig::default()
        };
        let (c, start) = warm_start_hagl(&st, &m, 0.05, &cfg).unwrap();
        let fit = fit_hagl(&st, &m, c, &start, &cfg).unwrap();
        assert!(fit.diagnostics.final_risk <= fit.diagnostics.initial_risk);
        assert!((m.beta_stats(&fit.alpha).l1 - c).abs() <= 1e-10 * c);
        assert!(fit.diagnostics.pinned_zeros.is_none());
    }
}

#[test]
fn logistic_fits_decrease_the_penalized_objective() {
    let mut r = rng(21);
    for _ in 0..8 {
        let n = r.gen_range(6..=20);
        let x = random_points(&mut r, n, 2);
        let m = model(&x);
        let y = labels(r.gen(), n);
        let st = RiskState::new(m.design(), m.singular_values(), &y, LossKind::Logistic).unwrap();
        let lambda = 0.01;
        let cfg = SolverConfig::default();
        let har = fit_har(&st, lambda, &cfg).unwrap();
        let hal = fit_hal(&st, lambda, &cfg).unwrap();
        let zero = vec![0.0; m.rank()];
        let base = st.risk_at(&zero, st.optimal_intercept(&zero, 0.0));
        assert!(har.diagnostics.final_risk + lambda * dot(&har.alpha, &har.alpha) <= base + 1e-12);
        let l1: f64 = hal.alpha.iter().map(|a| a.abs()).sum();
        assert!(hal.diagnostics.final_risk + lambda * l1 <= base + 1e-12);
        assert!(
            hal.diagnostics.score_residual <= 1e-5,
            "{}",
            hal.diagnostics.score_residual
        );
        let (c, start) = warm_start_hagl(&st, &m, lambda, &cfg).unwrap();
        let hagl = fit_hagl(&st, &m, c, &start, &cfg).unwrap();
        assert!(hagl.diagnostics.final_risk <= hagl.diagnostics.initial_risk + 1e-15);
        assert!(hagl.diagnostics.constraint_residual.unwrap() <= 1e-10);
    }
}
