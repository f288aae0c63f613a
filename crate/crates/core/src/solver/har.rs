use faer::prelude::*;
use faer::Side;

use super::{check_lambda, Diagnostics, FittedEstimator, Mode, SolverConfig};
use crate::dense::{norm2, norm_inf};
use crate::error::{PchaError, Result};
use crate::loss::{LossKind, RiskState};

/// Ridge fit minimizing `R(α) + λ ‖α‖₂²`.
///
/// On the unweighted MSE state this is the diagonal solve
/// `α_m = d_m (Uᵀỹ)_m / (d_m² + nλ)`; no matrix is inverted. Logistic fits
/// use a diagonal majorize-minimize iteration that exploits the same
/// orthogonality, alternating with an exact intercept update.
pub fn fit_har(
    state: &RiskState<'_>,
    lambda: f64,
    config: &SolverConfig,
) -> Result<FittedEstimator> {
    check_lambda(lambda)?;
    let r = state.rank();
    let zero = vec![0.0; r];
    let initial_risk = state.risk(&zero);
    let (alpha, intercept, iterations, converged) = if state.is_orthogonal_mse() {
        let n = state.n() as f64;
        let alpha = state
            .design_response()
            .iter()
            .zip(state.singular_values())
            .map(|(c, d)| c / (d * d + n * lambda))
            .collect();
        (alpha, state.intercept, 1, true)
    } else if state.kind() == LossKind::Mse {
        (weighted_ridge(state, lambda)?, state.intercept, 1, true)
    } else {
        majorize_minimize(state, lambda, config)
    };
    let grad = state.grad_alpha_at(&alpha, intercept);
    let stationarity: Vec<f64> = grad
        .iter()
        .zip(&alpha)
        .map(|(g, a)| g + 2.0 * lambda * a)
        .collect();
    Ok(FittedEstimator {
        mode: Mode::Har,
        intercept,
        reg_value: lambda,
        diagnostics: Diagnostics {
            iterations,
            final_risk: state.risk_at(&alpha, intercept),
            initial_risk,
            constraint_residual: None,
            score_residual: norm2(&stationarity),
            converged,
            max_abs_alpha: norm_inf(&alpha),
            pinned_zeros: None,
            warning: (!converged).then(|| "ridge iteration hit max_iter".to_string()),
        },
        alpha,
    })
}

/// Solves `(ZᵀWZ / n + λ I) α = ZᵀW ỹ / n` densely.
fn weighted_ridge(state: &RiskState<'_>, lambda: f64) -> Result<Vec<f64>> {
    let z = state.design();
    let w = state.weights().expect("weighted state");
    let (n, r) = (z.rows(), z.cols());
    let nf = n as f64;
    let mut gram = faer::Mat::<f64>::zeros(r, r);
    for a in 0..r {
        for b in a..r {
            let v: f64 = (0..n)
                .map(|i| w[i] * z.get(i, a) * z.get(i, b))
                .sum::<f64>()
                / nf;
            gram.write(a, b, v);
            gram.write(b, a, v);
        }
        gram.write(a, a, gram.read(a, a) + lambda);
    }
    let rhs = faer::Col::from_fn(r, |m| state.design_response()[m] / nf);
    let mut jitter = 0.0;
    for _ in 0..6 {
        let mut g = gram.clone();
        for a in 0..r {
            g.write(a, a, g.read(a, a) + jitter);
        }
        crate::dense::sequential_linalg();
        if let Ok(llt) = g.cholesky(Side::Lower) {
            let x = llt.solve(&rhs);
            return Ok((0..r).map(|m| x.read(m)).collect());
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 100.0 };
    }
    Err(PchaError::LinearAlgebra(
        "weighted ridge system is not positive definite".into(),
    ))
}

/// `α_m ← α_m − (∂_m R + 2λα_m) / (c_m + 2λ)` with `c` a diagonal curvature
/// bound, then the intercept is re-optimized.
fn majorize_minimize(
    state: &RiskState<'_>,
    lambda: f64,
    config: &SolverConfig,
) -> (Vec<f64>, f64, usize, bool) {
    let curv = state.curvature_bound();
    let mut alpha = vec![0.0; state.rank()];
    let mut b = state.optimal_intercept(&alpha, 0.0);
    for it in 1..=config.max_iter {
        let g = state.grad_alpha_at(&alpha, b);
        let mut gnorm = 0.0f64;
        for m in 0..alpha.len() {
            let gm = g[m] + 2.0 * lambda * alpha[m];
            gnorm = gnorm.max(gm.abs());
            alpha[m] -= gm / (curv[m] + 2.0 * lambda);
        }
        b = state.optimal_intercept(&alpha, b);
        if gnorm < config.grad_tol {
            return (alpha, b, it, true);
        }
    }
    (alpha, b, config.max_iter, false)
}
