//! Algebraic identities of the basis, kernel and PC model, checked against
//! materialized designs.

#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use pcha::basis::{build_kernel_matrix, BasisSpec, CovariateMatrix};
use pcha::dense::{mean, norm1, norm2};
use pcha::loss::{LossKind, RiskState};
use pcha::pc::beta_of_alpha_oracle;
use proptest::prelude::*;
use rand::Rng;

fn points() -> impl Strategy<Value = CovariateMatrix> {
    (1usize..=12, 1usize..=3, 2usize..=8, any::<u64>()).prop_map(|(n, d, grid, seed)| {
        let mut r = rng(seed);
        let v = (0..n * d)
            .map(|_| r.gen_range(0..=grid) as f64 / grid as f64)
            .collect();
        CovariateMatrix::new(n, d, v).unwrap()
    })
}

fn alpha_for(rank: usize, seed: u64) -> Vec<f64> {
    random_vec(&mut rng(seed), rank)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_equals_brute_force_gram(x in points()) {
        let k = build_kernel_matrix(&BasisSpec::new(x.clone()), &x).unwrap();
        let g = brute_gram(&dense_design(&x));
        for i in 0..x.n() {
            for j in 0..x.n() {
                prop_assert_eq!(k.get(i, j) as f64, g[i][j]);
            }
        }
    }

    #[test]
    fn kernel_depends_only_on_coordinate_order(x in points()) {
        // A strictly increasing map per coordinate keeps every indicator.
        let warped: Vec<f64> = (0..x.n()).flat_map(|i| x.row(i).iter().map(|v| (v * v * v + 2.0 * v) / 3.0).collect::<Vec<_>>()).collect();
        let y = CovariateMatrix::new(x.n(), x.d(), warped).unwrap();
        let a = build_kernel_matrix(&BasisSpec::new(x.clone()), &x).unwrap();
        let b = build_kernel_matrix(&BasisSpec::new(y.clone()), &y).unwrap();
        for i in 0..x.n() {
            prop_assert_eq!(a.row(i), b.row(i));
        }
    }

    #[test]
    fn beta_norm_two_equals_alpha_norm_two(x in points(), seed in any::<u64>()) {
        let m = model(&x);
        let alpha = alpha_for(m.rank(), seed);
        let beta = beta_of_alpha_oracle(&m, &alpha).unwrap();
        prop_assert!((norm2(&beta) - norm2(&alpha)).abs() <= 1e-8 * norm2(&alpha).max(1.0));
        prop_assert!((m.beta_stats(&alpha).l2 - norm2(&alpha)).abs() <= 1e-8 * norm2(&alpha).max(1.0));
    }

    #[test]
    fn pc_design_columns_are_orthogonal(x in points()) {
        let m = model(&x);
        let z = m.design();
        let d = m.singular_values();
        for a in 0..m.rank() {
            for b in 0..m.rank() {
                let v: f64 = z.col(a).iter().zip(z.col(b)).map(|(p, q)| p * q).sum();
                let want = if a == b { d[a] * d[a] } else { 0.0 };
                prop_assert!((v - want).abs() <= 1e-8 * d[0] * d[0], "({a},{b}) {v} vs {want}");
            }
        }
    }

    #[test]
    fn streaming_stats_match_materialized_beta(x in points(), seed in any::<u64>()) {
        let m = model(&x);
        let alpha = alpha_for(m.rank(), seed);
        let h = dense_design(&x);
        // β = Hᵀ U D⁻¹ α, built without the library's E matrix.
        let u = &m.factors().u;
        let w: Vec<f64> = (0..x.n()).map(|i| (0..m.rank()).map(|k| u.get(i, k) * alpha[k] / m.singular_values()[k]).sum()).collect();
        let beta: Vec<f64> = (0..h[0].len()).map(|j| (0..x.n()).map(|i| h[i][j] * w[i]).sum()).collect();
        let stats = m.beta_stats(&alpha);
        prop_assert!((stats.l1 - norm1(&beta)).abs() <= 1e-9 * norm1(&beta).max(1.0));
        prop_assert!((stats.l2 - norm2(&beta)).abs() <= 1e-9 * norm2(&beta).max(1.0));
        // g_i = Σ_j sign(β_j) h_j(x_i); skip coefficients too close to zero to have a stable sign.
        if beta.iter().all(|b| b.abs() > 1e-9) {
            for i in 0..x.n() {
                let gi: f64 = beta.iter().zip(&h[i]).map(|(b, v)| b.signum() * v).sum();
                prop_assert!((stats.g[i] - gi).abs() <= 1e-9 * (h[i].len() as f64));
            }
        }
        let (full, _) = m.beta_with_stats(&alpha);
        for (a, b) in full.iter().zip(&beta) {
            prop_assert!((a - b).abs() <= 1e-9 * norm1(&beta).max(1.0));
        }
    }

    #[test]
    fn pc_model_is_sufficient_for_least_squares(x in points(), seed in any::<u64>()) {
        let m = model(&x);
        let y = random_vec(&mut rng(seed), x.n());
        let yb = mean(&y);
        let yt: Vec<f64> = y.iter().map(|v| v - yb).collect();
        let h = dense_design(&x);
        let hm = DMatrix::from_fn(x.n(), h[0].len(), |i, j| h[i][j]);
        let beta = hm.clone().svd(true, true).solve(&DVector::from_vec(yt.clone()), 1e-10).unwrap();
        let fitted = &hm * beta;
        let full = mse(&yt, fitted.as_slice());
        let st = RiskState::new(m.design(), m.singular_values(), &y, LossKind::Mse).unwrap();
        let alpha: Vec<f64> = st.design_response().iter().zip(m.singular_values()).map(|(c, d)| c / (d * d)).collect();
        prop_assert!((st.risk(&alpha) - full).abs() <= 1e-7, "{} vs {full}", st.risk(&alpha));
    }
}

#[test]
fn worked_examples() {
    // Two points in one dimension: K = [[1, 1], [1, 2]] and D² = (3 ± √5)/2.
    let x = CovariateMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
    let m = model(&x);
    let d2: Vec<f64> = m.singular_values().iter().map(|d| d * d).collect();
    assert!((d2[0] - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
    assert!((d2[1] - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
    // A single point in d = 3 activates all 7 basis functions.
    let one = CovariateMatrix::new(1, 3, vec![0.2, 0.5, 0.9]).unwrap();
    assert_eq!(
        build_kernel_matrix(&BasisSpec::new(one.clone()), &one)
            .unwrap()
            .get(0, 0),
        7
    );
}
