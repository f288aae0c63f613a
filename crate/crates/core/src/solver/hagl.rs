//! Generalized-lasso fit on the implied sectional variation norm.
//!
//! The feasible set is `{α : ‖β(α)‖₁ = C}`. Through a point `α` we move along
//! multiplicative paths `α_δ^h = (1 + δh) ⊙ α`, which preserve the norm to
//! first order exactly when `h ⊥ a(α)` with `a(α) = α ⊙ a₁(α)` and
//! `a₁ = Σ_j E(j, ·) sign(β_j)`. The descent direction is the path gradient
//! `D(α) = α ⊙ ∇R` with its component along `a(α)` removed. Each accepted
//! step is followed by an exact multiplicative renormalization back onto the
//! constraint (`β` is linear in `α`).

use serde::{Deserialize, Serialize};

use super::face::{face_tangent_residual, refine};
use super::{fit_har, Diagnostics, FittedEstimator, Mode, SolverConfig};
use crate::dense::{dot, norm2, norm_inf};
use crate::error::{PchaError, Result};
use crate::loss::RiskState;
use crate::pc::{BetaStats, PCWorkingModel};

/// Largest basis size for which the refinement materializes `β(α)`.
const REFINE_MAX_BASIS: u128 = 4_000_000;
/// `|β_j| ≤ PINNED_TOL · C` counts as pinned when reporting the face residual.
const PINNED_TOL: f64 = 1e-10;

/// How the step along the tangent space is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaglMethod {
    /// Plain steepest descent: `h = −D*(α)` with the Euclidean inner product on `h`.
    SteepestDescent,
    /// The same tangent-space projection in the metric of a diagonal
    /// curvature bound of the risk along the path, which makes the step
    /// invariant to the scale of individual PC coordinates.
    #[default]
    Preconditioned,
}

/// Direction information at one iterate.
#[derive(Debug, Clone)]
pub struct DescentDirection {
    /// Projected path gradient `D*(α) = D − (⟨D,a⟩/⟨a,a⟩) a`.
    pub projected: Vec<f64>,
    /// Change in `α` per unit step.
    pub delta_alpha: Vec<f64>,
    /// `a₁(α)`.
    pub constraint_gradient: Vec<f64>,
}

/// Builds the projected path gradient and the step in `α` for the chosen method.
pub fn constrained_descent_direction(
    state: &RiskState<'_>,
    model: &PCWorkingModel,
    alpha: &[f64],
    intercept: f64,
    stats: &BetaStats,
    method: HaglMethod,
) -> DescentDirection {
    let a1 = model.constraint_gradient(stats);
    let grad = state.grad_alpha_at(alpha, intercept);
    let path: Vec<f64> = alpha.iter().zip(&grad).map(|(a, g)| a * g).collect();
    let a: Vec<f64> = alpha.iter().zip(&a1).map(|(x, y)| x * y).collect();
    let aa = dot(&a, &a);
    let projected: Vec<f64> = if aa.sqrt() < 1e-12 {
        path.clone()
    } else {
        let coef = dot(&path, &a) / aa;
        path.iter().zip(&a).map(|(p, q)| p - coef * q).collect()
    };
    let delta_alpha = match method {
        HaglMethod::SteepestDescent => alpha.iter().zip(&projected).map(|(a, p)| -a * p).collect(),
        HaglMethod::Preconditioned => {
            // min ⟨∇R, Δ⟩ + ½ Σ c_m Δ_m² subject to ⟨a₁, Δ⟩ = 0 over the nonzero coordinates.
            let curv = state.curvature_bound();
            let active = |m: usize| alpha[m] != 0.0 && curv[m] > 0.0;
            let (mut num, mut den) = (0.0, 0.0);
            for m in (0..alpha.len()).filter(|&m| active(m)) {
                num += a1[m] * grad[m] / curv[m];
                den += a1[m] * a1[m] / curv[m];
            }
            let mu = if den > 0.0 { num / den } else { 0.0 };
            (0..alpha.len())
                .map(|m| {
                    if active(m) {
                        -(grad[m] - mu * a1[m]) / curv[m]
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    DescentDirection {
        projected,
        delta_alpha,
        constraint_gradient: a1,
    }
}

/// Norm of the gradient component orthogonal to `a₁` over the nonzero coordinates.
fn tangent_gradient_norm(grad: &[f64], a1: &[f64], alpha: &[f64]) -> f64 {
    let idx: Vec<usize> = (0..alpha.len()).filter(|&m| alpha[m] != 0.0).collect();
    let aa: f64 = idx.iter().map(|&m| a1[m] * a1[m]).sum();
    let ga: f64 = idx.iter().map(|&m| grad[m] * a1[m]).sum();
    let coef = if aa > 0.0 { ga / aa } else { 0.0 };
    idx.iter()
        .map(|&m| (grad[m] - coef * a1[m]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Minimizes the risk over `‖β(α)‖₁ = C` starting from `alpha_init`.
///
/// `alpha_init` is rescaled onto the constraint first. Coordinates that are
/// exactly zero stay zero, so the start should be dense (see [`warm_start_hagl`]).
pub fn fit_hagl(
    state: &RiskState<'_>,
    model: &PCWorkingModel,
    c: f64,
    alpha_init: &[f64],
    config: &SolverConfig,
) -> Result<FittedEstimator> {
    config.validate()?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(PchaError::InvalidValue(format!(
            "constraint level C must be positive, got {c}"
        )));
    }
    if alpha_init.len() != model.rank() || state.rank() != model.rank() {
        return Err(PchaError::DimensionMismatch(
            "initial α, risk state and working model disagree on rank".into(),
        ));
    }
    let mut alpha = alpha_init.to_vec();
    let mut stats = model.beta_stats(&alpha);
    if !(stats.l1 > 0.0) {
        return Err(PchaError::Degenerate("initial α has ‖β(α)‖₁ = 0".into()));
    }
    rescale(&mut alpha, &mut stats, c);
    let mut intercept = state.optimal_intercept(&alpha, state.intercept);
    if alpha.len() == 1 {
        // The feasible set is two points; pick the better sign.
        let flipped = [-alpha[0]];
        let b = state.optimal_intercept(&flipped, intercept);
        if state.risk_at(&flipped, b) < state.risk_at(&alpha, intercept) {
            alpha = flipped.to_vec();
            intercept = b;
            stats = model.beta_stats(&alpha);
        }
    }
    let initial_risk = state.risk_at(&alpha, intercept);
    let mut risk = initial_risk;
    let mut iterations = 0;
    let mut converged = false;
    let mut warning = None;
    // Line searches start at twice the last accepted fraction of the full step.
    let mut fraction = 1.0f64;

    while iterations < config.max_iter {
        let dir = constrained_descent_direction(
            state,
            model,
            &alpha,
            intercept,
            &stats,
            config.hagl_method,
        );
        if dot(&dir.projected, &dir.projected) < config.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let (mut step, max_step) = match config.hagl_method {
            // Keep every factor (1 − δ D*_m) positive.
            HaglMethod::SteepestDescent => {
                let m = norm_inf(&dir.projected);
                (config.step_init / m, 1.0 / m)
            }
            HaglMethod::Preconditioned => (1.0, f64::INFINITY),
        };
        let full = step;
        step *= fraction;
        let mut accepted = None;
        while step >= config.step_floor {
            if step < max_step {
                let mut trial: Vec<f64> = alpha
                    .iter()
                    .zip(&dir.delta_alpha)
                    .map(|(a, d)| a + step * d)
                    .collect();
                let mut trial_stats = model.beta_stats(&trial);
                if trial_stats.l1 > 0.0 && trial_stats.l1.is_finite() {
                    rescale(&mut trial, &mut trial_stats, c);
                    let trial_risk = state.risk_at(&trial, intercept);
                    if trial_risk.is_finite() && trial_risk < risk {
                        accepted = Some((trial, trial_stats, trial_risk));
                        break;
                    }
                }
            }
            step *= config.step_shrink;
        }
        if accepted.is_some() {
            fraction = (2.0 * step / full).min(1.0);
        }
        let Some((trial, trial_stats, trial_risk)) = accepted else {
            converged = true;
            warning =
                Some("line search reached the step floor without decreasing the risk".to_string());
            break;
        };
        let new_intercept = state.optimal_intercept(&trial, intercept);
        let new_risk = if new_intercept == intercept {
            trial_risk
        } else {
            state.risk_at(&trial, new_intercept)
        };
        let rel_decrease = (risk - new_risk) / risk.abs().max(f64::MIN_POSITIVE);
        alpha = trial;
        stats = trial_stats;
        intercept = new_intercept;
        risk = new_risk;
        if rel_decrease < config.risk_tol {
            converged = true;
            break;
        }
    }

    let mut pinned_zeros = None;
    let mut score_residual = None;
    let n_basis = model.spec().n_basis();
    if alpha.len() > 1 && alpha.len() <= config.hagl_refine_max_rank && n_basis <= REFINE_MAX_BASIS
    {
        let out = refine(state, model, c, &alpha, intercept, 20 * alpha.len() + 200);
        if out.risk <= risk {
            iterations += out.iterations;
            converged = out.converged;
            warning = (!converged).then(|| {
                "active-set refinement stopped before reaching a stationary face".to_string()
            });
            alpha = out.alpha;
            intercept = out.intercept;
            risk = out.risk;
            stats = model.beta_stats(&alpha);
            pinned_zeros = Some(out.pinned);
            let grad = state.grad_alpha_at(&alpha, intercept);
            score_residual = Some(face_tangent_residual(model, &grad, &alpha, PINNED_TOL * c));
        }
    }
    let score_residual = score_residual.unwrap_or_else(|| {
        let a1 = model.constraint_gradient(&stats);
        tangent_gradient_norm(&state.grad_alpha_at(&alpha, intercept), &a1, &alpha)
    });
    Ok(FittedEstimator {
        mode: Mode::Hagl,
        intercept,
        reg_value: c,
        diagnostics: Diagnostics {
            iterations,
            final_risk: risk,
            initial_risk,
            constraint_residual: Some((stats.l1 - c).abs() / c.max(1e-12)),
            score_residual,
            converged,
            max_abs_alpha: norm_inf(&alpha),
            pinned_zeros,
            warning: warning
                .or_else(|| (!converged).then(|| "steepest descent hit max_iter".to_string())),
        },
        alpha,
    })
}

fn rescale(alpha: &mut [f64], stats: &mut BetaStats, c: f64) {
    let s = c / stats.l1;
    alpha.iter_mut().for_each(|a| *a *= s);
    stats.l1 = c;
    stats.l2 *= s;
}

/// Ridge fit at `lambda_har` used as the HAGL start; returns `C = ‖β(α_HAR)‖₁`
/// and `α_HAR`, which lies on the constraint by construction.
pub fn warm_start_hagl(
    state: &RiskState<'_>,
    model: &PCWorkingModel,
    lambda_har: f64,
    config: &SolverConfig,
) -> Result<(f64, Vec<f64>)> {
    let har = fit_har(state, lambda_har, config)?;
    let l1 = model.beta_stats(&har.alpha).l1;
    if !(l1 > 0.0) || norm2(&har.alpha) == 0.0 {
        return Err(PchaError::Degenerate(format!(
            "ridge warm start at λ = {lambda_har:e} is identically zero; use a smaller λ"
        )));
    }
    Ok((l1, har.alpha))
}
