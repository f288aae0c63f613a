//! Principal-component working model built from the spectrum of the basis Gram matrix.
//!
//! With `H = U D Eᵀ`, the PC design is `Z = U D = H E` and a coefficient
//! vector `α` corresponds to basis coefficients `β(α) = E α = Hᵀ U D⁻¹ α`.
//! Only `U` and `D` are stored; everything involving `β` is streamed through
//! the [`BasisEngine`].

use faer::Side;
use serde::{Deserialize, Serialize};

use crate::basis::{
    design_matrix, ordered_subsets, BasisEngine, BasisSpec, CovariateMatrix, KernelMatrix,
    ScalingMap,
};
use crate::dense::{dot, ColMatrix};
use crate::error::{PchaError, Result};

/// Default relative eigenvalue cutoff.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Retained eigenpairs of the Gram matrix: `K ≈ U diag(D²) Uᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFactors {
    /// `n × r`, orthonormal columns.
    pub u: ColMatrix,
    /// Singular values of `H`, descending.
    pub d: Vec<f64>,
}

impl SpectralFactors {
    pub fn rank(&self) -> usize {
        self.d.len()
    }
}

/// Symmetric eigendecomposition of `K`, keeping eigenvalues `≥ rank_tol · λ_max`.
///
/// Each eigenvector is sign-normalized so that its largest-magnitude entry is
/// positive (the first such entry on ties).
pub fn spectral_decompose(k: &KernelMatrix, rank_tol: f64) -> Result<SpectralFactors> {
    let n = k.n();
    if n == 0 {
        return Err(PchaError::EmptyInput("kernel matrix is empty"));
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((k.get(i, j) - k.get(j, i)).abs() as f64);
        }
    }
    if asym > 1e-9 {
        return Err(PchaError::NotSymmetric(asym));
    }
    let mat = faer::Mat::from_fn(n, n, |i, j| k.get(i, j) as f64);
    crate::dense::sequential_linalg();
    let eig = mat.selfadjoint_eigendecomposition(Side::Lower);
    let s = eig.s().column_vector();
    let vecs = eig.u();
    let lambda_max = (0..n).map(|i| s.read(i)).fold(0.0f64, f64::max);
    if lambda_max <= 0.0 {
        return Err(PchaError::Degenerate(
            "kernel matrix has no positive eigenvalue".into(),
        ));
    }
    // faer returns ascending eigenvalues.
    let keep: Vec<usize> = (0..n)
        .rev()
        .filter(|&i| s.read(i) >= rank_tol * lambda_max && s.read(i) > 0.0)
        .collect();
    let mut u = ColMatrix::zeros(n, keep.len());
    let mut d = Vec::with_capacity(keep.len());
    for (m, &idx) in keep.iter().enumerate() {
        d.push(s.read(idx).sqrt());
        let col = u.col_mut(m);
        for (i, c) in col.iter_mut().enumerate() {
            *c = vecs.read(i, idx);
        }
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.iter_mut().for_each(|c| *c = -*c);
        }
    }
    Ok(SpectralFactors { u, d })
}

/// Norm and sign statistics of `β(α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaStats {
    /// `‖β(α)‖₁`
    pub l1: f64,
    /// `‖β(α)‖₂`
    pub l2: f64,
    /// `g_i = Σ_j sign(β_j) φ_j(x_i)`.
    pub g: Vec<f64>,
}

/// Options for building a working model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingModelConfig {
    /// Cap on interaction order; `None` means all `d` coordinates.
    pub max_degree: Option<usize>,
    pub rank_tol: f64,
    pub oracle_cap: usize,
}

impl Default for WorkingModelConfig {
    fn default() -> Self {
        Self {
            max_degree: None,
            rank_tol: DEFAULT_RANK_TOL,
            oracle_cap: crate::basis::DEFAULT_ORACLE_CAP,
        }
    }
}

/// The `r`-dimensional PC working model over a fixed set of training points.
#[derive(Debug, Clone)]
pub struct PCWorkingModel {
    engine: BasisEngine,
    scaling: Option<ScalingMap>,
    factors: SpectralFactors,
    /// `Z = U diag(D)`.
    design: ColMatrix,
}

impl PCWorkingModel {
    /// Builds the model on covariates already inside the unit cube; the
    /// training rows are the knots.
    pub fn new(x: CovariateMatrix, config: &WorkingModelConfig) -> Result<Self> {
        let d = x.d();
        let spec = BasisSpec::with_max_degree(x.clone(), config.max_degree.unwrap_or(d))
            .with_oracle_cap(config.oracle_cap);
        let engine = BasisEngine::new(spec, x)?;
        let k = engine.kernel_matrix()?;
        let factors = spectral_decompose(&k, config.rank_tol)?;
        let design = ColMatrix::from_fn(factors.u.rows(), factors.rank(), |i, m| {
            factors.u.get(i, m) * factors.d[m]
        });
        Ok(Self {
            engine,
            scaling: None,
            factors,
            design,
        })
    }

    /// Scales raw covariates to the unit cube first and keeps the map for prediction.
    pub fn from_raw(raw: &[Vec<f64>], config: &WorkingModelConfig) -> Result<Self> {
        let (x, map) = crate::basis::scale_to_unit_cube(raw)?;
        let mut model = Self::new(x, config)?;
        model.scaling = Some(map);
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.engine.points().n()
    }

    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn spec(&self) -> &BasisSpec {
        self.engine.spec()
    }

    pub fn points(&self) -> &CovariateMatrix {
        self.engine.points()
    }

    pub fn scaling(&self) -> Option<&ScalingMap> {
        self.scaling.as_ref()
    }

    pub fn factors(&self) -> &SpectralFactors {
        &self.factors
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.factors.d
    }

    /// The PC design `Z = U diag(D)` at the training points.
    pub fn design(&self) -> &ColMatrix {
        &self.design
    }

    /// Training-point weights `w = U D⁻¹ α` with `β(α) = Hᵀ w`.
    pub fn point_weights(&self, alpha: &[f64]) -> Vec<f64> {
        assert_eq!(alpha.len(), self.rank());
        let scaled: Vec<f64> = alpha
            .iter()
            .zip(&self.factors.d)
            .map(|(a, d)| a / d)
            .collect();
        self.factors.u.mul_vec(&scaled)
    }

    /// One streaming pass over the implicit basis.
    pub fn beta_stats(&self, alpha: &[f64]) -> BetaStats {
        let w = self.point_weights(alpha);
        let sums = self.engine.coefficient_sums(&w, |_, _| {});
        BetaStats {
            l1: sums.l1,
            l2: sums.l2_sq.sqrt(),
            g: sums.sign_sums,
        }
    }

    /// Streams `β(α)` in basis order, one knot block at a time.
    pub fn for_each_beta(&self, alpha: &[f64], visit: impl FnMut(usize, &[f64])) {
        let w = self.point_weights(alpha);
        self.engine.coefficient_sums(&w, visit);
    }

    /// Full `β(α)` in basis order together with its statistics, from one
    /// pass. Allocates `N` values.
    pub fn beta_with_stats(&self, alpha: &[f64]) -> (Vec<f64>, BetaStats) {
        let w = self.point_weights(alpha);
        let mut beta = Vec::new();
        let sums = self
            .engine
            .coefficient_sums(&w, |_, block| beta.extend_from_slice(block));
        (
            beta,
            BetaStats {
                l1: sums.l1,
                l2: sums.l2_sq.sqrt(),
                g: sums.sign_sums,
            },
        )
    }

    /// Row `j` of the eigenvector matrix, `E(j, ·) = D⁻¹ Uᵀ h_j` with `h_j`
    /// the `j`-th basis function at the training points.
    pub fn eigenvector_row(&self, j: usize) -> Vec<f64> {
        let spk = self.spec().subsets_per_knot() as usize;
        let (l, k) = (j / spk, j % spk);
        let subset = ordered_subsets(self.spec().d(), self.spec().max_degree())[k];
        let h: Vec<f64> = self
            .points()
            .rows()
            .map(|x| {
                if self.spec().activation_mask(l, x) & subset == subset {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        self.factors
            .u
            .tr_mul_vec(&h)
            .into_iter()
            .zip(&self.factors.d)
            .map(|(v, d)| v / d)
            .collect()
    }

    /// `a₁ = D⁻¹ Uᵀ g = Σ_j E(j, ·) sign(β_j)`.
    pub fn constraint_gradient(&self, stats: &BetaStats) -> Vec<f64> {
        self.factors
            .u
            .tr_mul_vec(&stats.g)
            .into_iter()
            .zip(&self.factors.d)
            .map(|(v, d)| v / d)
            .collect()
    }

    /// Maps raw rows through the training scaling (identity when the model was
    /// built on pre-scaled covariates, apart from clamping).
    pub fn scale_rows(&self, raw: &[Vec<f64>]) -> Result<CovariateMatrix> {
        match &self.scaling {
            Some(map) => map.apply(raw),
            None => {
                let clamped: Vec<Vec<f64>> = raw
                    .iter()
                    .map(|r| r.iter().map(|v| v.clamp(0.0, 1.0)).collect())
                    .collect();
                CovariateMatrix::from_rows(&clamped)
            }
        }
    }

    /// PC basis functions evaluated at new (already scaled) points: `k(x)ᵀ U D⁻¹`, `m × r`.
    pub fn design_at(&self, x_new: &CovariateMatrix) -> ColMatrix {
        let r = self.rank();
        let mut out = ColMatrix::zeros(x_new.n(), r);
        for (i, x) in x_new.rows().enumerate() {
            let kx = self.engine.kernel_row(x);
            for m in 0..r {
                out.set(i, m, dot(&kx, self.factors.u.col(m)) / self.factors.d[m]);
            }
        }
        out
    }

    /// `θ(x) = k(x)ᵀ U D⁻¹ α + intercept` at already scaled points.
    pub fn predict(&self, alpha: &[f64], intercept: f64, x_new: &CovariateMatrix) -> Vec<f64> {
        let w = self.point_weights(alpha);
        x_new
            .rows()
            .map(|x| dot(&self.engine.kernel_row(x), &w) + intercept)
            .collect()
    }

    /// Like [`predict`](Self::predict) for raw covariates.
    pub fn predict_raw(&self, alpha: &[f64], intercept: f64, raw: &[Vec<f64>]) -> Result<Vec<f64>> {
        let x = self.scale_rows(raw)?;
        Ok(self.predict(alpha, intercept, &x))
    }

    /// Materialized `N × r` eigenvector matrix `E = Hᵀ U D⁻¹` (oracle scale only).
    pub fn eigenvector_matrix_oracle(&self) -> Result<ColMatrix> {
        let h = design_matrix(self.spec(), self.points())?;
        let n_basis = h.first().map_or(0, |r| r.len());
        let r = self.rank();
        let mut e = ColMatrix::zeros(n_basis, r);
        for m in 0..r {
            let um = self.factors.u.col(m);
            let dm = self.factors.d[m];
            for (j, v) in e.col_mut(m).iter_mut().enumerate() {
                *v = h.iter().zip(um).map(|(row, u)| row[j] * u).sum::<f64>() / dm;
            }
        }
        Ok(e)
    }
}

/// Full `β(α) = E α` from the materialized design; a test oracle for the streaming path.
pub fn beta_of_alpha_oracle(model: &PCWorkingModel, alpha: &[f64]) -> Result<Vec<f64>> {
    let e = model.eigenvector_matrix_oracle()?;
    Ok(e.mul_vec(alpha))
}
