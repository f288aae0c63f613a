//! Plug-in average treatment effect with PC-HA outcome regressions.
//!
//! One MSE fit of `Y` on `(W, A)` (treatment as the last coordinate) gives
//! `μ̂_a(W)` by predicting at `A = a`. The efficient influence curve at the
//! known propensity measures the plug-in bias and drives the undersmoothing
//! rule; the bootstrap keeps the working model fixed and refits only `α`.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{mean, sample_sd, ColMatrix};
use crate::error::{PchaError, Result};
use crate::loss::{LossKind, RiskState};
use crate::pc::{PCWorkingModel, WorkingModelConfig};
use crate::rng;
use crate::solver::{fit_mode, FittedEstimator, Mode, SolverConfig};

pub const DEFAULT_POSITIVITY: f64 = 1e-3;
/// Geometric undersmoothing grid: `λ_cv · ratio^k`, `k = 0..=steps`.
pub const UNDERSMOOTH_STEPS: usize = 40;
pub const UNDERSMOOTH_RATIO: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalDataset {
    /// Covariate rows.
    pub w: Vec<Vec<f64>>,
    /// Treatment in {0, 1}.
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    /// Known `P(A = 1 | W)`.
    pub pi1: Vec<f64>,
}

impl CausalDataset {
    pub fn new(
        w: Vec<Vec<f64>>,
        a: Vec<f64>,
        y: Vec<f64>,
        pi1: Vec<f64>,
        positivity: f64,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(PchaError::EmptyInput("causal dataset"));
        }
        if w.len() != n || a.len() != n || pi1.len() != n {
            return Err(PchaError::DimensionMismatch(
                "W, A, Y and π₁ must have one entry per row".into(),
            ));
        }
        if let Some(v) = a.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(PchaError::InvalidValue(format!(
                "treatment must be 0 or 1, got {v}"
            )));
        }
        if !a.contains(&1.0) || !a.contains(&0.0) {
            return Err(PchaError::Degenerate(
                "both treatment arms must be nonempty".into(),
            ));
        }
        check_positivity(&pi1, positivity)?;
        Ok(Self { w, a, y, pi1 })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Rows `(W, A)` as fitted by the outcome regression.
    pub fn outcome_rows(&self) -> Vec<Vec<f64>> {
        self.w
            .iter()
            .zip(&self.a)
            .map(|(w, a)| w.iter().copied().chain([*a]).collect())
            .collect()
    }

    fn counterfactual_rows(&self, a: f64) -> Vec<Vec<f64>> {
        self.w
            .iter()
            .map(|w| w.iter().copied().chain([a]).collect())
            .collect()
    }
}

fn check_positivity(pi1: &[f64], eps: f64) -> Result<()> {
    for (row, &p) in pi1.iter().enumerate() {
        let worst = p.min(1.0 - p);
        if !(worst >= eps) {
            return Err(PchaError::Positivity {
                row,
                value: p,
                bound: eps,
            });
        }
    }
    Ok(())
}

/// The `(W, A)` working model with PC designs at `A = 1` and `A = 0`.
#[derive(Debug, Clone)]
pub struct OutcomeModel {
    pub model: PCWorkingModel,
    z1: ColMatrix,
    z0: ColMatrix,
}

#[derive(Debug, Clone)]
pub struct OutcomeFit {
    pub estimator: FittedEstimator,
    pub mu1: Vec<f64>,
    pub mu0: Vec<f64>,
}

impl OutcomeModel {
    pub fn new(data: &CausalDataset, cfg: &WorkingModelConfig) -> Result<Self> {
        Self::from_model(data, PCWorkingModel::from_raw(&data.outcome_rows(), cfg)?)
    }

    /// Wraps a model already built on `data.outcome_rows()` (e.g. a CV refit).
    pub fn from_model(data: &CausalDataset, model: PCWorkingModel) -> Result<Self> {
        if model.n() != data.n() || model.spec().d() != data.w[0].len() + 1 {
            return Err(PchaError::DimensionMismatch(
                "working model was not built on this dataset's (W, A)".into(),
            ));
        }
        let z1 = model.design_at(&model.scale_rows(&data.counterfactual_rows(1.0))?);
        let z0 = model.design_at(&model.scale_rows(&data.counterfactual_rows(0.0))?);
        Ok(Self { model, z1, z0 })
    }

    pub fn fit(
        &self,
        data: &CausalDataset,
        mode: Mode,
        lambda: f64,
        solver: &SolverConfig,
    ) -> Result<OutcomeFit> {
        let state = RiskState::new(
            self.model.design(),
            self.model.singular_values(),
            &data.y,
            LossKind::Mse,
        )?;
        self.finish(fit_mode(&state, &self.model, mode, lambda, solver)?)
    }

    /// Refit with observation weights (bootstrap multiplicities) on the fixed model.
    pub fn fit_weighted(
        &self,
        data: &CausalDataset,
        weights: &[f64],
        mode: Mode,
        lambda: f64,
        solver: &SolverConfig,
    ) -> Result<OutcomeFit> {
        let state = RiskState::weighted(
            self.model.design(),
            self.model.singular_values(),
            &data.y,
            weights,
            LossKind::Mse,
        )?;
        self.finish(fit_mode(&state, &self.model, mode, lambda, solver)?)
    }

    fn finish(&self, estimator: FittedEstimator) -> Result<OutcomeFit> {
        let shift = |z: &ColMatrix| {
            z.mul_vec(&estimator.alpha)
                .into_iter()
                .map(|v| v + estimator.intercept)
                .collect()
        };
        Ok(OutcomeFit {
            mu1: shift(&self.z1),
            mu0: shift(&self.z0),
            estimator,
        })
    }
}

/// One-shot outcome regression at `lambda`.
pub fn fit_outcome(
    data: &CausalDataset,
    mode: Mode,
    lambda: f64,
    solver: &SolverConfig,
    cfg: &WorkingModelConfig,
) -> Result<(OutcomeModel, OutcomeFit)> {
    let om = OutcomeModel::new(data, cfg)?;
    let fit = om.fit(data, mode, lambda, solver)?;
    Ok((om, fit))
}

/// `Pₙ(μ̂₁ − μ̂₀)`.
pub fn plugin_ate(mu1: &[f64], mu0: &[f64]) -> f64 {
    mu1.iter().zip(mu0).map(|(a, b)| a - b).sum::<f64>() / mu1.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EicRecord {
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub reg_value: f64,
}

/// `D = φ₁ − φ₀` with `φ_a = 1(A=a)/π_a (Y − μ̂_a) + μ̂_a − Pₙ μ̂_a`.
pub fn eic(
    data: &CausalDataset,
    mu1: &[f64],
    mu0: &[f64],
    reg_value: f64,
    positivity: f64,
) -> Result<EicRecord> {
    check_positivity(&data.pi1, positivity)?;
    let (m1, m0) = (mean(mu1), mean(mu0));
    let values: Vec<f64> = (0..data.n())
        .map(|i| {
            let (a, y, p) = (data.a[i], data.y[i], data.pi1[i]);
            let phi1 = a / p * (y - mu1[i]) + (mu1[i] - m1);
            let phi0 = (1.0 - a) / (1.0 - p) * (y - mu0[i]) + (mu0[i] - m0);
            phi1 - phi0
        })
        .collect();
    Ok(EicRecord {
        mean: mean(&values),
        sd: sample_sd(&values),
        values,
        reg_value,
    })
}

/// `τ = σ̂(D) / (√n · ln n)`.
pub fn tau_threshold(sd: f64, n: usize) -> f64 {
    let n = n as f64;
    sd / (n.sqrt() * n.ln())
}

/// `λ_cv · ratio^k` for `k = 0..=steps`.
pub fn undersmooth_grid(lambda_cv: f64, steps: usize, ratio: f64) -> Vec<f64> {
    (0..=steps)
        .map(|k| lambda_cv * ratio.powi(k as i32))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Undersmoothed {
    pub lambda: f64,
    pub fit: OutcomeFit,
    pub eic: EicRecord,
    pub tau: f64,
    /// Whether some grid point met `|Pₙ D| ≤ τ`.
    pub satisfied: bool,
    /// `(λ, |Pₙ D|)` along the grid; failed fits are left out.
    pub path: Vec<(f64, f64)>,
    pub warning: Option<String>,
}

/// Walks `grid_down` (strictly decreasing, starting at `λ_cv`) and returns the
/// smallest `λ` with `|Pₙ D(λ)| ≤ τ`, where `τ` comes from the EIC at the first
/// grid point. Without any such `λ`, returns the minimizer of `|Pₙ D|`.
pub fn undersmooth(
    data: &CausalDataset,
    om: &OutcomeModel,
    mode: Mode,
    grid_down: &[f64],
    solver: &SolverConfig,
    positivity: f64,
) -> Result<Undersmoothed> {
    undersmooth_with_tau(data, om, mode, grid_down, solver, positivity, None)
}

/// [`undersmooth`] with `τ` supplied by the caller (e.g. computed once on an
/// initial sample and reused across replications).
pub fn undersmooth_with_tau(
    data: &CausalDataset,
    om: &OutcomeModel,
    mode: Mode,
    grid_down: &[f64],
    solver: &SolverConfig,
    positivity: f64,
    tau: Option<f64>,
) -> Result<Undersmoothed> {
    if grid_down.is_empty() || grid_down.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(PchaError::InvalidValue(
            "undersmoothing grid must be nonempty and strictly decreasing".into(),
        ));
    }
    let start = om.fit(data, mode, grid_down[0], solver)?;
    let start_eic = eic(data, &start.mu1, &start.mu0, grid_down[0], positivity)?;
    let tau = tau.unwrap_or_else(|| tau_threshold(start_eic.sd, data.n()));
    let mut path = vec![(grid_down[0], start_eic.mean.abs())];
    let mut best_ok: Option<(f64, OutcomeFit, EicRecord)> = None;
    let mut best_any: (f64, OutcomeFit, EicRecord) =
        (grid_down[0], start.clone(), start_eic.clone());
    if start_eic.mean.abs() <= tau {
        best_ok = Some((grid_down[0], start, start_eic));
    }
    for &lambda in &grid_down[1..] {
        let fit = match om.fit(data, mode, lambda, solver) {
            Ok(f) => f,
            Err(e) => {
                debug!("undersmoothing fit at λ = {lambda:e} failed: {e}");
                continue;
            }
        };
        let rec = eic(data, &fit.mu1, &fit.mu0, lambda, positivity)?;
        let score = rec.mean.abs();
        path.push((lambda, score));
        if score < best_any.2.mean.abs() {
            best_any = (lambda, fit.clone(), rec.clone());
        }
        if score <= tau {
            best_ok = Some((lambda, fit, rec));
        }
    }
    let satisfied = best_ok.is_some();
    let (lambda, fit, eic) = best_ok.unwrap_or(best_any);
    let warning = (!satisfied).then(|| {
        format!("no λ on the grid reached |Pₙ D| ≤ τ = {tau:.3e}; using the minimizer of |Pₙ D|")
    });
    if let Some(w) = &warning {
        warn!("{w}");
    }
    Ok(Undersmoothed {
        lambda,
        fit,
        eic,
        tau,
        satisfied,
        path,
        warning,
    })
}

/// What the bootstrap re-estimates on each replicate.
#[derive(Debug, Clone)]
pub enum BootstrapTarget<'a> {
    /// Plug-in ATE of an outcome model.
    Ate {
        data: &'a CausalDataset,
        outcome: &'a OutcomeModel,
    },
    /// `θ(x₀)` of a regression on `model` at an already scaled point `x0`.
    Point {
        model: &'a PCWorkingModel,
        y: &'a [f64],
        kind: LossKind,
        x0: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 200,
            seed: 0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// Sorted replicate statistics.
    pub replicates: Vec<f64>,
    pub skipped: usize,
}

/// Positions `(lo, hi)` (0-based) of the percentile interval among `b`
/// sorted values; `b = 200`, `level = 0.95` gives the 5th and 195th.
pub fn percentile_indices(b: usize, level: f64) -> (usize, usize) {
    // The slack absorbs rounding in `(1 − level) / 2`, so 200 · 0.025 is exactly 5.
    let tail = (1.0 - level) / 2.0;
    let lo = ((b as f64 * tail - 1e-9).ceil() as usize).max(1) - 1;
    let hi = ((b as f64 * (1.0 - tail) + 1e-9).floor() as usize).clamp(1, b) - 1;
    (lo, hi.max(lo))
}

/// Nonparametric bootstrap with the working model held fixed: rows are
/// resampled as multiplicity weights and only `α` is refit.
pub fn bootstrap_ci(
    target: &BootstrapTarget<'_>,
    mode: Mode,
    lambda: f64,
    solver: &SolverConfig,
    cfg: &BootstrapConfig,
) -> Result<BootstrapInterval> {
    if cfg.replicates < 50 {
        return Err(PchaError::Bootstrap(format!(
            "need at least 50 replicates, got {}",
            cfg.replicates
        )));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(PchaError::Bootstrap(format!(
            "level must lie in (0, 1), got {}",
            cfg.level
        )));
    }
    let n = match target {
        BootstrapTarget::Ate { data, .. } => data.n(),
        BootstrapTarget::Point { y, .. } => y.len(),
    };
    let point_design = match target {
        BootstrapTarget::Point { model, x0, .. } => Some(model.design_at(
            &crate::basis::CovariateMatrix::new(1, x0.len(), x0.clone())?,
        )),
        _ => None,
    };
    let stats: Vec<Option<f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(cfg.seed, rng::tag("bootstrap"), b as u64);
            let mut weights = vec![0.0; n];
            for _ in 0..n {
                weights[(rng::uniform(&mut r) * n as f64) as usize % n] += 1.0;
            }
            match target {
                BootstrapTarget::Ate { data, outcome } => {
                    let treated: f64 = weights.iter().zip(&data.a).map(|(w, a)| w * a).sum();
                    if treated == 0.0 || treated == n as f64 {
                        return None;
                    }
                    let fit = outcome
                        .fit_weighted(data, &weights, mode, lambda, solver)
                        .ok()?;
                    let total: f64 = weights.iter().sum();
                    Some(
                        weights
                            .iter()
                            .zip(fit.mu1.iter().zip(&fit.mu0))
                            .map(|(w, (a, b))| w * (a - b))
                            .sum::<f64>()
                            / total,
                    )
                }
                BootstrapTarget::Point { model, y, kind, .. } => {
                    let state = RiskState::weighted(
                        model.design(),
                        model.singular_values(),
                        y,
                        &weights,
                        *kind,
                    )
                    .ok()?;
                    let fit = fit_mode(&state, model, mode, lambda, solver).ok()?;
                    let z = point_design.as_ref().expect("point design");
                    Some(z.mul_vec(&fit.alpha)[0] + fit.intercept)
                }
            }
        })
        .collect();
    let skipped = stats.iter().filter(|s| s.is_none()).count();
    if skipped * 10 > cfg.replicates {
        return Err(PchaError::Bootstrap(format!(
            "{skipped} of {} replicates were degenerate",
            cfg.replicates
        )));
    }
    if skipped > 0 {
        warn!("skipped {skipped} degenerate bootstrap replicates");
    }
    let mut values: Vec<f64> = stats.into_iter().flatten().collect();
    values.sort_by(f64::total_cmp);
    let (lo, hi) = percentile_indices(values.len(), cfg.level);
    Ok(BootstrapInterval {
        lower: values[lo],
        upper: values[hi],
        level: cfg.level,
        replicates: values,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CausalDataset {
        let w: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let a = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let y = vec![1.0, 2.0, 0.5, 1.5, 2.5, 0.0, 3.0, 1.0];
        CausalDataset::new(w, a, y, vec![0.5; 8], DEFAULT_POSITIVITY).unwrap()
    }

    #[test]
    fn tau_formula() {
        assert!((tau_threshold(1.0, 100) - 0.021715).abs() < 1e-6);
    }

    #[test]
    fn plugin_identities() {
        assert_eq!(plugin_ate(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((plugin_ate(&[1.5, 2.5], &[1.0, 2.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn percentile_rule() {
        assert_eq!(percentile_indices(200, 0.95), (4, 194));
    }

    #[test]
    fn eic_double_centering_and_ipw_identity() {
        let d = tiny();
        let (y1, y0): (Vec<f64>, Vec<f64>) = (
            d.y.iter()
                .zip(&d.a)
                .filter(|(_, a)| **a == 1.0)
                .map(|(y, _)| *y)
                .collect(),
            d.y.iter()
                .zip(&d.a)
                .filter(|(_, a)| **a == 0.0)
                .map(|(y, _)| *y)
                .collect(),
        );
        let (m1, m0) = (mean(&y1), mean(&y0));
        let rec = eic(&d, &[m1; 8], &[m0; 8], 0.0, DEFAULT_POSITIVITY).unwrap();
        // With constant μ̂ the centered terms vanish and Pₙ D is the IPW contrast minus the plug-in.
        let ipw: f64 = (0..8)
            .map(|i| d.a[i] * d.y[i] / 0.5 - (1.0 - d.a[i]) * d.y[i] / 0.5)
            .sum::<f64>()
            / 8.0;
        let ipw_fitted: f64 = (0..8)
            .map(|i| d.a[i] * m1 / 0.5 - (1.0 - d.a[i]) * m0 / 0.5)
            .sum::<f64>()
            / 8.0;
        assert!((rec.mean - (ipw - ipw_fitted)).abs() < 1e-12);
        assert!(rec.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn positivity_violation() {
        let mut d = tiny();
        d.pi1[3] = 1e-5;
        assert!(matches!(
            eic(&d, &[0.0; 8], &[0.0; 8], 0.0, DEFAULT_POSITIVITY),
            Err(PchaError::Positivity { row: 3, .. })
        ));
        assert!(CausalDataset::new(
            d.w.clone(),
            d.a.clone(),
            d.y.clone(),
            d.pi1.clone(),
            DEFAULT_POSITIVITY
        )
        .is_err());
    }

    #[test]
    fn constant_outcome_gives_zero_effect() {
        let mut d = tiny();
        d.y = vec![2.0; 8];
        let (_, fit) = fit_outcome(
            &d,
            Mode::Har,
            1e-3,
            &SolverConfig::default(),
            &WorkingModelConfig::default(),
        )
        .unwrap();
        assert!(fit
            .mu1
            .iter()
            .chain(&fit.mu0)
            .all(|v| (v - 2.0).abs() < 1e-12));
        assert!(plugin_ate(&fit.mu1, &fit.mu0).abs() < 1e-12);
    }

    #[test]
    fn undersmoothing_never_increases_lambda() {
        let d = tiny();
        let om = OutcomeModel::new(&d, &WorkingModelConfig::default()).unwrap();
        let grid = undersmooth_grid(0.1, 10, UNDERSMOOTH_RATIO);
        let us = undersmooth(
            &d,
            &om,
            Mode::Hal,
            &grid,
            &SolverConfig::default(),
            DEFAULT_POSITIVITY,
        )
        .unwrap();
        assert!(us.lambda <= 0.1);
        assert!(undersmooth(
            &d,
            &om,
            Mode::Hal,
            &[0.1, 0.2],
            &SolverConfig::default(),
            DEFAULT_POSITIVITY
        )
        .is_err());
    }
}
