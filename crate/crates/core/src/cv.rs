//! V-fold cross-validation over regularization grids.
//!
//! Every fold gets its own working model: the unit-cube scaling, the knots,
//! the kernel and its spectrum are computed from the training rows only, and
//! validation rows are mapped through the fold's scaling (clamped) before
//! prediction.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::ColMatrix;
use crate::error::{PchaError, Result};
use crate::loss::{mean_loss, LossKind, RiskState};
use crate::pc::{PCWorkingModel, WorkingModelConfig};
use crate::rng;
use crate::solver::{fit_mode, FittedEstimator, Mode, SolverConfig};

/// Number of points in the default grid.
pub const DEFAULT_GRID_LEN: usize = 20;

/// Fold assignment plus the grid it is evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    /// Fold id of every row.
    pub assignments: Vec<usize>,
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl CvPlan {
    pub fn new(n: usize, folds: usize, grid: Vec<f64>, seed: u64) -> Result<Self> {
        if grid.is_empty() {
            return Err(PchaError::CrossValidation(
                "empty regularization grid".into(),
            ));
        }
        if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PchaError::CrossValidation(
                "grid values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            folds,
            assignments: make_folds(n, folds, seed)?,
            grid,
            seed,
        })
    }

    /// `(training rows, validation rows)` of fold `k`, each ascending.
    pub fn split(&self, k: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != k)
    }
}

/// Shuffles `0..n` with the seeded stream and deals the rows round-robin, so
/// fold sizes differ by at most one.
pub fn make_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(PchaError::CrossValidation(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if folds > n {
        return Err(PchaError::CrossValidation(format!(
            "{folds} folds requested for {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::tag("folds"), n as u64));
    let mut out = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % folds;
    }
    Ok(out)
}

/// `count` log-spaced values spanning `[lo, hi]`, descending.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (b + (a - b) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// 20 log-spaced `λ` over `[1e-6, 1e2] · D_max² / n`, descending.
pub fn default_grid(model: &PCWorkingModel) -> Vec<f64> {
    let dmax = model.singular_values().first().copied().unwrap_or(1.0);
    let scale = dmax * dmax / model.n() as f64;
    log_grid(1e-6 * scale, 1e2 * scale, DEFAULT_GRID_LEN)
}

/// How CV tunes HAGL, whose grid indexes the ridge penalty of its warm start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaglSelection {
    /// Validation risk of the HAGL fit itself at every grid point.
    #[default]
    Own,
    /// Validation risk of the ridge warm start; one HAGL fit at the selected value.
    WarmStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    /// `None` uses [`default_grid`] of the full-data model.
    pub grid: Option<Vec<f64>>,
    pub seed: u64,
    pub kind: LossKind,
    pub solver: SolverConfig,
    pub working_model: WorkingModelConfig,
    pub hagl_selection: HaglSelection,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            grid: None,
            seed: 0,
            kind: LossKind::Mse,
            solver: SolverConfig::default(),
            working_model: WorkingModelConfig::default(),
            hagl_selection: HaglSelection::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub mode: Mode,
    pub plan: CvPlan,
    /// Mean validation risk per grid point; `None` where some fold fit failed.
    pub mean_risk: Vec<Option<f64>>,
    pub selected_index: usize,
    pub selected: f64,
    /// Refit on all rows at the selected value.
    pub fit: FittedEstimator,
    pub model: PCWorkingModel,
}

/// Working model of fold `k`, built from its training rows only.
pub fn fold_model(
    x_raw: &[Vec<f64>],
    plan: &CvPlan,
    k: usize,
    cfg: &WorkingModelConfig,
) -> Result<PCWorkingModel> {
    let (train, _) = plan.split(k);
    let rows: Vec<Vec<f64>> = train.iter().map(|&i| x_raw[i].clone()).collect();
    PCWorkingModel::from_raw(&rows, cfg)
}

struct Fold {
    model: PCWorkingModel,
    y_train: Vec<f64>,
    z_val: ColMatrix,
    y_val: Vec<f64>,
}

fn fold_risks(
    fold: &Fold,
    mode: Mode,
    grid: &[f64],
    kind: LossKind,
    solver: &SolverConfig,
) -> Vec<Option<f64>> {
    let Ok(state) = RiskState::new(
        fold.model.design(),
        fold.model.singular_values(),
        &fold.y_train,
        kind,
    ) else {
        return vec![None; grid.len()];
    };
    grid.par_iter()
        .map(|&lambda| {
            let fit = fit_mode(&state, &fold.model, mode, lambda, solver).ok()?;
            let f: Vec<f64> = fold
                .z_val
                .mul_vec(&fit.alpha)
                .into_iter()
                .map(|v| v + fit.intercept)
                .collect();
            let risk = mean_loss(kind, &fold.y_val, &f);
            risk.is_finite().then_some(risk)
        })
        .collect()
}

/// Selects the regularization of `mode` by V-fold CV and refits on all rows.
///
/// For HAGL the grid indexes the ridge penalty of the warm start (the
/// two-step procedure is tuned as a whole). Ties in validation risk go to the
/// stronger regularization (larger `λ`).
pub fn cv_select(x_raw: &[Vec<f64>], y: &[f64], mode: Mode, cfg: &CvConfig) -> Result<CvResult> {
    Ok(cv_select_modes(x_raw, y, &[mode], cfg)?.remove(0))
}

/// [`cv_select`] for several modes sharing the same folds and working models.
pub fn cv_select_modes(
    x_raw: &[Vec<f64>],
    y: &[f64],
    modes: &[Mode],
    cfg: &CvConfig,
) -> Result<Vec<CvResult>> {
    if x_raw.len() != y.len() {
        return Err(PchaError::DimensionMismatch(format!(
            "{} covariate rows, {} responses",
            x_raw.len(),
            y.len()
        )));
    }
    let model = PCWorkingModel::from_raw(x_raw, &cfg.working_model)?;
    let grid = cfg.grid.clone().unwrap_or_else(|| default_grid(&model));
    let plan = CvPlan::new(y.len(), cfg.folds, grid, cfg.seed)?;

    let folds: Vec<Fold> = (0..plan.folds)
        .into_par_iter()
        .map(|k| {
            let (train, val) = plan.split(k);
            let fm = fold_model(x_raw, &plan, k, &cfg.working_model)?;
            let val_rows: Vec<Vec<f64>> = val.iter().map(|&i| x_raw[i].clone()).collect();
            let z_val = fm.design_at(&fm.scale_rows(&val_rows)?);
            Ok(Fold {
                y_train: train.iter().map(|&i| y[i]).collect(),
                y_val: val.iter().map(|&i| y[i]).collect(),
                model: fm,
                z_val,
            })
        })
        .collect::<Result<_>>()?;
    let state = RiskState::new(model.design(), model.singular_values(), y, cfg.kind)?;

    modes
        .iter()
        .map(|&mode| {
            let scored = if mode == Mode::Hagl && cfg.hagl_selection == HaglSelection::WarmStart {
                Mode::Har
            } else {
                mode
            };
            let per_fold: Vec<Vec<Option<f64>>> = folds
                .par_iter()
                .map(|f| fold_risks(f, scored, &plan.grid, cfg.kind, &cfg.solver))
                .collect();
            let n = y.len() as f64;
            let mean_risk: Vec<Option<f64>> = (0..plan.grid.len())
                .map(|g| {
                    // Fold risks weighted by validation size.
                    per_fold.iter().zip(&folds).try_fold(0.0, |acc, (r, f)| {
                        r[g].map(|v| acc + v * f.y_val.len() as f64 / n)
                    })
                })
                .collect();
            let selected_index = select_index(&mean_risk, &plan.grid).ok_or_else(|| {
                PchaError::CrossValidation("every grid point failed in some fold".into())
            })?;
            let selected = plan.grid[selected_index];
            let fit = fit_mode(&state, &model, mode, selected, &cfg.solver)?;
            Ok(CvResult {
                mode,
                plan: plan.clone(),
                mean_risk,
                selected_index,
                selected,
                fit,
                model: model.clone(),
            })
        })
        .collect()
}

/// Minimizer of the mean risk; near-ties (relative 1e-12) go to the larger value.
fn select_index(mean_risk: &[Option<f64>], grid: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (g, r) in mean_risk.iter().enumerate() {
        let Some(r) = *r else { continue };
        best = match best {
            None => Some(g),
            Some(b) => {
                let rb = mean_risk[b].unwrap_or(f64::INFINITY);
                let tie = (r - rb).abs() <= 1e-12 * rb.abs().max(r.abs());
                if r < rb && !tie || tie && grid[g] > grid[b] {
                    Some(g)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_balanced() {
        let f = make_folds(6, 3, 1).unwrap();
        for k in 0..3 {
            assert_eq!(f.iter().filter(|&&v| v == k).count(), 2);
        }
        let f = make_folds(11, 3, 9).unwrap();
        let sizes: Vec<usize> = (0..3)
            .map(|k| f.iter().filter(|&&v| v == k).count())
            .collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(make_folds(2, 3, 0).is_err());
        assert!(make_folds(5, 1, 0).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 10.0, 5);
        assert!((g[0] - 10.0).abs() < 1e-12 && (g[4] - 1e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn single_grid_point_refit_matches_direct_fit() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 * 0.37).fract()]).collect();
        let y: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let cfg = CvConfig {
            folds: 3,
            grid: Some(vec![0.01]),
            ..CvConfig::default()
        };
        let res = cv_select(&x, &y, Mode::Har, &cfg).unwrap();
        assert_eq!(res.selected, 0.01);
        let m = PCWorkingModel::from_raw(&x, &WorkingModelConfig::default()).unwrap();
        let st = RiskState::new(m.design(), m.singular_values(), &y, LossKind::Mse).unwrap();
        let direct = crate::solver::fit_har(&st, 0.01, &SolverConfig::default()).unwrap();
        assert_eq!(res.fit.alpha, direct.alpha);
    }

    #[test]
    fn ties_go_to_the_larger_value() {
        let grid = [1.0, 0.5, 0.25];
        assert_eq!(
            select_index(&[Some(2.0), Some(1.0), Some(1.0)], &grid),
            Some(1)
        );
        assert_eq!(select_index(&[None, Some(3.0), Some(1.0)], &grid), Some(2));
        assert_eq!(select_index(&[None, None, None], &grid), None);
    }
}
