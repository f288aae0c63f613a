//! Fitters for the three PC-HA estimators.
//!
//! * [`fit_har`]: ridge on the orthogonal PC design (`‖α‖₂` penalty).
//! * [`fit_hal`]: lasso on the PC coefficients (`‖α‖₁` penalty).
//! * [`fit_hagl`]: risk minimization on the surface `‖β(α)‖₁ = C`, the
//!   implied sectional variation norm, by steepest descent along
//!   norm-preserving multiplicative paths.

mod face;
mod hagl;
mod hal;
mod har;

pub use face::face_tangent_residual;
pub use hagl::{
    constrained_descent_direction, fit_hagl, warm_start_hagl, DescentDirection, HaglMethod,
};
pub use hal::{fit_hal, kkt_residual};
pub use har::fit_har;

use serde::{Deserialize, Serialize};

use crate::error::{PchaError, Result};
use crate::loss::RiskState;
use crate::pc::PCWorkingModel;

/// Which coefficient norm the estimator controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Har,
    Hal,
    Hagl,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Hal, Mode::Har, Mode::Hagl];

    /// Table label, e.g. `PCHAL`.
    pub fn label(self) -> &'static str {
        match self {
            Mode::Har => "PCHAR",
            Mode::Hal => "PCHAL",
            Mode::Hagl => "PCHAGL",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Har => "har",
            Mode::Hal => "hal",
            Mode::Hagl => "hagl",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = PchaError;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .to_ascii_lowercase()
            .trim_start_matches("pc-")
            .trim_start_matches("pc")
        {
            "har" => Ok(Mode::Har),
            "hal" => Ok(Mode::Hal),
            "hagl" => Ok(Mode::Hagl),
            other => Err(PchaError::Config(format!(
                "unknown mode '{other}' (expected har, hal or hagl)"
            ))),
        }
    }
}

/// Iteration controls shared by the iterative fitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Initial line-search step, as the largest allowed relative change of any
    /// coordinate along the multiplicative path.
    pub step_init: f64,
    pub step_shrink: f64,
    pub step_floor: f64,
    pub grad_tol: f64,
    pub risk_tol: f64,
    pub hagl_method: HaglMethod,
    /// Largest working-model rank at which HAGL runs the active-set
    /// refinement after the descent; `0` disables it.
    pub hagl_refine_max_rank: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            step_init: 0.5,
            step_shrink: 0.5,
            step_floor: 1e-12,
            grad_tol: 1e-8,
            risk_tol: 1e-10,
            hagl_method: HaglMethod::default(),
            hagl_refine_max_rank: 400,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(PchaError::Config(format!(
                "step_shrink must lie in (0, 1), got {}",
                self.step_shrink
            )));
        }
        if !(self.step_init > 0.0)
            || !(self.grad_tol > 0.0)
            || !(self.risk_tol > 0.0)
            || !(self.step_floor > 0.0)
        {
            return Err(PchaError::Config(
                "step sizes and tolerances must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(PchaError::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_risk: f64,
    /// Risk at the starting point of the fitter (zero coefficients, or the warm start for HAGL).
    pub initial_risk: f64,
    /// `|‖β(α)‖₁ − C| / C`, HAGL only.
    pub constraint_residual: Option<f64>,
    /// Norm of the optimality residual of the mode's first-order conditions.
    pub score_residual: f64,
    pub converged: bool,
    pub max_abs_alpha: f64,
    /// HAGL only: number of `β` coefficients held at exactly zero by the refinement.
    pub pinned_zeros: Option<usize>,
    pub warning: Option<String>,
}

/// A fitted PC-HA estimator. The working model it belongs to is kept by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEstimator {
    pub mode: Mode,
    pub alpha: Vec<f64>,
    pub intercept: f64,
    /// `λ` for HAR/HAL, `C` for HAGL.
    pub reg_value: f64,
    pub diagnostics: Diagnostics,
}

/// Fits `mode` at regularization `lambda`. For HAGL, `lambda` is the ridge
/// penalty of the warm start, which fixes `C = ‖β(α_HAR)‖₁`; the two-step
/// procedure is then tuned through this single value.
pub fn fit_mode(
    state: &RiskState<'_>,
    model: &PCWorkingModel,
    mode: Mode,
    lambda: f64,
    config: &SolverConfig,
) -> Result<FittedEstimator> {
    match mode {
        Mode::Har => fit_har(state, lambda, config),
        Mode::Hal => fit_hal(state, lambda, config),
        Mode::Hagl => {
            let (c, alpha) = warm_start_hagl(state, model, lambda, config)?;
            fit_hagl(state, model, c, &alpha, config)
        }
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda < 0.0 || lambda.is_nan() {
        return Err(PchaError::NegativeRegularization(lambda));
    }
    Ok(())
}

#[inline]
pub(crate) fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}
