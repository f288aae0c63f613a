//! Empirical risks and their derivatives on the PC design.
//!
//! All risks are `(1/n)`-averaged (observation weights, when present, are
//! normalized to sum to `n`). The fitted function at the training points is
//! `θ = Z α + intercept`.

use serde::{Deserialize, Serialize};

use crate::dense::{dot, ColMatrix};
use crate::error::{PchaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Logistic,
}

impl std::str::FromStr for LossKind {
    type Err = PchaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Self::Mse),
            "logistic" => Ok(Self::Logistic),
            other => Err(PchaError::Config(format!(
                "unknown loss '{other}' (expected mse or logistic)"
            ))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mse => "mse",
            Self::Logistic => "logistic",
        })
    }
}

/// Recodes {0, 1} labels to {−1, +1}; {−1, +1} labels pass through.
pub fn recode_labels(y: &[f64]) -> Result<Vec<f64>> {
    y.iter()
        .map(|&v| match v {
            1.0 => Ok(1.0),
            0.0 | -1.0 => Ok(-1.0),
            other => Err(PchaError::InvalidValue(format!(
                "logistic label {other} not in {{0, 1}} or {{-1, +1}}"
            ))),
        })
        .collect()
}

/// `log(1 + eᵗ)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Average loss of predictions `f` against responses `y` (labels in {−1, +1} for logistic).
pub fn mean_loss(kind: LossKind, y: &[f64], f: &[f64]) -> f64 {
    let total: f64 = match kind {
        LossKind::Mse => y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum(),
        LossKind::Logistic => y.iter().zip(f).map(|(a, b)| softplus(-a * b)).sum(),
    };
    total / y.len().max(1) as f64
}

/// Everything a fitter needs about the data on the PC design.
#[derive(Debug, Clone)]
pub struct RiskState<'a> {
    z: &'a ColMatrix,
    d: &'a [f64],
    y: Vec<f64>,
    weights: Option<Vec<f64>>,
    kind: LossKind,
    /// For MSE the intercept is the (weighted) response mean and never moves.
    pub intercept: f64,
    /// `Zᵀ W (y − intercept)` and `Σ w (y − intercept)²`, MSE only.
    zty: Vec<f64>,
    yty: f64,
}

impl<'a> RiskState<'a> {
    /// `z` must be the orthogonal PC design with column norms `d`.
    pub fn new(z: &'a ColMatrix, d: &'a [f64], y: &[f64], kind: LossKind) -> Result<Self> {
        Self::build(z, d, y, None, kind)
    }

    /// Observation-weighted risk (e.g. bootstrap multiplicities). Weights are
    /// rescaled to sum to `n`.
    pub fn weighted(
        z: &'a ColMatrix,
        d: &'a [f64],
        y: &[f64],
        weights: &[f64],
        kind: LossKind,
    ) -> Result<Self> {
        if weights.len() != y.len() || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(PchaError::InvalidValue(
                "weights must be finite, nonnegative and one per row".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(PchaError::Degenerate(
                "all observation weights are zero".into(),
            ));
        }
        let scale = y.len() as f64 / total;
        Self::build(
            z,
            d,
            y,
            Some(weights.iter().map(|w| w * scale).collect()),
            kind,
        )
    }

    fn build(
        z: &'a ColMatrix,
        d: &'a [f64],
        y: &[f64],
        weights: Option<Vec<f64>>,
        kind: LossKind,
    ) -> Result<Self> {
        if z.rows() != y.len() || z.cols() != d.len() {
            return Err(PchaError::DimensionMismatch(format!(
                "design is {}×{}, response has {} rows and {} singular values",
                z.rows(),
                z.cols(),
                y.len(),
                d.len()
            )));
        }
        if y.is_empty() {
            return Err(PchaError::EmptyInput("no observations"));
        }
        if kind == LossKind::Logistic && y.iter().any(|v| *v != 1.0 && *v != -1.0) {
            return Err(PchaError::InvalidValue(
                "logistic responses must be coded in {-1, +1}".into(),
            ));
        }
        let n = y.len() as f64;
        let w = |i: usize| weights.as_ref().map_or(1.0, |w| w[i]);
        let (intercept, zty, yty) = match kind {
            LossKind::Mse => {
                let b = (0..y.len()).map(|i| w(i) * y[i]).sum::<f64>() / n;
                let resid: Vec<f64> = (0..y.len()).map(|i| w(i) * (y[i] - b)).collect();
                let yty = (0..y.len()).map(|i| w(i) * (y[i] - b) * (y[i] - b)).sum();
                (b, z.tr_mul_vec(&resid), yty)
            }
            LossKind::Logistic => (0.0, Vec::new(), 0.0),
        };
        Ok(Self {
            z,
            d,
            y: y.to_vec(),
            weights,
            kind,
            intercept,
            zty,
            yty,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn design(&self) -> &ColMatrix {
        self.z
    }

    pub fn singular_values(&self) -> &[f64] {
        self.d
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights
            .as_ref()
            .map_or(1.0, |w| w.iter().cloned().fold(0.0, f64::max))
    }

    /// True when the closed forms on the orthogonal design apply.
    pub fn is_orthogonal_mse(&self) -> bool {
        self.kind == LossKind::Mse && self.weights.is_none()
    }

    /// `Zᵀ (y − ȳ)`; only meaningful for MSE.
    pub fn design_response(&self) -> &[f64] {
        &self.zty
    }

    #[inline]
    fn w(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// `θ = Z α + b` at the training points.
    pub fn fitted(&self, alpha: &[f64], intercept: f64) -> Vec<f64> {
        let mut t = self.z.mul_vec(alpha);
        t.iter_mut().for_each(|v| *v += intercept);
        t
    }

    pub fn risk(&self, alpha: &[f64]) -> f64 {
        self.risk_at(alpha, self.intercept)
    }

    pub fn risk_at(&self, alpha: &[f64], intercept: f64) -> f64 {
        let n = self.n() as f64;
        if self.is_orthogonal_mse() && intercept == self.intercept {
            // ‖ỹ − Zα‖² with ZᵀZ = diag(D²).
            let quad: f64 = alpha.iter().zip(self.d).map(|(a, d)| a * a * d * d).sum();
            return ((self.yty - 2.0 * dot(alpha, &self.zty) + quad) / n).max(0.0);
        }
        let theta = self.fitted(alpha, intercept);
        let total: f64 = match self.kind {
            LossKind::Mse => theta
                .iter()
                .enumerate()
                .map(|(i, t)| self.w(i) * (self.y[i] - t).powi(2))
                .sum(),
            LossKind::Logistic => theta
                .iter()
                .enumerate()
                .map(|(i, t)| self.w(i) * softplus(-self.y[i] * t))
                .sum(),
        };
        total / n
    }

    /// `∂R/∂θ_i · n` at the training points (the per-observation score factor).
    fn residual_factor(&self, theta: &[f64]) -> Vec<f64> {
        match self.kind {
            LossKind::Mse => theta
                .iter()
                .enumerate()
                .map(|(i, t)| -2.0 * self.w(i) * (self.y[i] - t))
                .collect(),
            LossKind::Logistic => theta
                .iter()
                .enumerate()
                .map(|(i, t)| -self.w(i) * self.y[i] * sigmoid(-self.y[i] * t))
                .collect(),
        }
    }

    pub fn grad_alpha(&self, alpha: &[f64]) -> Vec<f64> {
        self.grad_alpha_at(alpha, self.intercept)
    }

    /// MSE: `−(2/n) Zᵀ W (y − Zα − b)`; logistic: `−(1/n) Zᵀ W (y ⊙ σ(−y ⊙ θ))`.
    pub fn grad_alpha_at(&self, alpha: &[f64], intercept: f64) -> Vec<f64> {
        let n = self.n() as f64;
        if self.is_orthogonal_mse() && intercept == self.intercept {
            return alpha
                .iter()
                .zip(self.d)
                .zip(&self.zty)
                .map(|((a, d), c)| -2.0 * (c - d * d * a) / n)
                .collect();
        }
        let r = self.residual_factor(&self.fitted(alpha, intercept));
        self.z.tr_mul_vec(&r).into_iter().map(|v| v / n).collect()
    }

    /// Derivative of the risk in the intercept.
    pub fn grad_intercept(&self, alpha: &[f64], intercept: f64) -> f64 {
        let r = self.residual_factor(&self.fitted(alpha, intercept));
        r.iter().sum::<f64>() / self.n() as f64
    }

    /// Unpenalized intercept minimizing the risk for fixed `α`. The MSE
    /// intercept is fixed at the response mean.
    pub fn optimal_intercept(&self, alpha: &[f64], start: f64) -> f64 {
        match self.kind {
            LossKind::Mse => self.intercept,
            LossKind::Logistic => {
                let za = self.z.mul_vec(alpha);
                let n = self.n() as f64;
                let mut b = start;
                for _ in 0..50 {
                    let (mut g, mut h) = (0.0, 0.0);
                    for (i, t) in za.iter().enumerate() {
                        let p = sigmoid(-self.y[i] * (t + b));
                        g -= self.w(i) * self.y[i] * p;
                        h += self.w(i) * p * (1.0 - p);
                    }
                    let (g, h) = (g / n, h / n);
                    if h <= 1e-300 {
                        break;
                    }
                    let step = (g / h).clamp(-5.0, 5.0);
                    b -= step;
                    if step.abs() < 1e-13 {
                        break;
                    }
                }
                b
            }
        }
    }

    /// Multiplicative-path gradient representer `D(α) = α ⊙ ∂R/∂α`.
    pub fn path_gradient(&self, alpha: &[f64]) -> Vec<f64> {
        self.grad_alpha(alpha)
            .iter()
            .zip(alpha)
            .map(|(g, a)| g * a)
            .collect()
    }

    /// Empirical score in the PC direction `f`: `⟨∂R/∂α, f⟩`.
    pub fn score(&self, alpha: &[f64], f: &[f64]) -> f64 {
        dot(&self.grad_alpha(alpha), f)
    }

    /// Diagonal curvature bound `c_m` with `∇²R ≼ diag(c)` (exact for unweighted MSE).
    pub fn curvature_bound(&self) -> Vec<f64> {
        let n = self.n() as f64;
        let scale = match self.kind {
            LossKind::Mse => 2.0 * self.max_weight() / n,
            LossKind::Logistic => 0.25 * self.max_weight() / n,
        };
        self.d.iter().map(|d| scale * d * d).collect()
    }
}

/// Free-function forms matching the operation names used in the docs.
pub fn risk(state: &RiskState<'_>, alpha: &[f64]) -> f64 {
    state.risk(alpha)
}

pub fn grad_alpha(state: &RiskState<'_>, alpha: &[f64]) -> Vec<f64> {
    state.grad_alpha(alpha)
}

pub fn path_gradient(state: &RiskState<'_>, alpha: &[f64]) -> Vec<f64> {
    state.path_gradient(alpha)
}

pub fn score(state: &RiskState<'_>, alpha: &[f64], f: &[f64]) -> f64 {
    state.score(alpha, f)
}
