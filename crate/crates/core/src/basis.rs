//! Zero-order indicator spline basis with data-point knots.
//!
//! A basis function is indexed by a knot row `l` and a nonempty coordinate
//! subset `s`, and evaluates to `Π_{j∈s} 1{x_j ≥ knot_{l,j}}`. The full basis
//! has `n_knots · (2^d − 1)` columns, which is never materialized outside of
//! oracle-scale helpers; the Gram matrix and all coefficient statistics are
//! computed from per-knot activation masks instead.

use serde::{Deserialize, Serialize};

use crate::error::{PchaError, Result};

/// Default ceiling on the number of basis columns the oracle helpers will materialize.
pub const DEFAULT_ORACLE_CAP: usize = 1_000_000;

/// Largest dimension for which the per-knot subset transforms run over all `2^d` masks.
const DENSE_MASK_MAX_DIM: usize = 12;

/// Row-major `n × d` matrix of covariates inside the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl CovariateMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(PchaError::EmptyInput(
                "covariate matrix needs n ≥ 1 and d ≥ 1",
            ));
        }
        if d > 63 {
            return Err(PchaError::InvalidValue(format!(
                "at most 63 covariates are supported, got {d}"
            )));
        }
        if values.len() != n * d {
            return Err(PchaError::DimensionMismatch(format!(
                "expected {} values for a {n}×{d} matrix, got {}",
                n * d,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(PchaError::InvalidValue(format!(
                "covariate {bad} outside [0, 1]"
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows
            .first()
            .map(|r| r.len())
            .ok_or(PchaError::EmptyInput("no rows"))?;
        if rows.iter().any(|r| r.len() != d) {
            return Err(PchaError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n: idx.len(),
            d: self.d,
            values,
        }
    }
}

/// Per-column affine map onto `[0, 1]` learned from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingMap {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalingMap {
    pub fn d(&self) -> usize {
        self.mins.len()
    }

    /// Maps a raw value of column `j`; degenerate columns go to 0.5 and
    /// anything outside the training range is clamped.
    #[inline]
    pub fn map_value(&self, j: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[j], self.maxs[j]);
        if hi <= lo {
            0.5
        } else {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
    }

    pub fn apply_row(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(j, &v)| self.map_value(j, v))
            .collect()
    }

    pub fn apply(&self, raw: &[Vec<f64>]) -> Result<CovariateMatrix> {
        if raw.iter().any(|r| r.len() != self.d()) {
            return Err(PchaError::DimensionMismatch(format!(
                "rows must have {} columns",
                self.d()
            )));
        }
        let values = raw.iter().flat_map(|r| self.apply_row(r)).collect();
        CovariateMatrix::new(raw.len(), self.d(), values)
    }
}

/// Fits a [`ScalingMap`] on `raw` and returns the scaled training matrix.
pub fn scale_to_unit_cube(raw: &[Vec<f64>]) -> Result<(CovariateMatrix, ScalingMap)> {
    let d = raw
        .first()
        .map(|r| r.len())
        .ok_or(PchaError::EmptyInput("no rows to scale"))?;
    if d == 0 {
        return Err(PchaError::EmptyInput("rows have no columns"));
    }
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for row in raw {
        if row.len() != d {
            return Err(PchaError::DimensionMismatch("ragged rows".into()));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(PchaError::InvalidValue(format!("non-finite covariate {v}")));
            }
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    let map = ScalingMap { mins, maxs };
    let x = map.apply(raw)?;
    Ok((x, map))
}

/// Nonempty coordinate subsets (as bit masks), ordered by size and then
/// lexicographically by their sorted index lists.
pub fn ordered_subsets(d: usize, max_degree: usize) -> Vec<u64> {
    fn rec(start: usize, d: usize, left: usize, acc: u64, out: &mut Vec<u64>) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for j in start..d {
            rec(j + 1, d, left - 1, acc | (1u64 << j), out);
        }
    }
    let mut out = Vec::new();
    for size in 1..=max_degree.min(d) {
        rec(0, d, size, 0, &mut out);
    }
    out
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// The implicit basis: knots, interaction cap and subset ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    knots: CovariateMatrix,
    max_degree: usize,
    oracle_cap: usize,
    /// `weights[p]` = number of allowed nonempty subsets of a `p`-element set.
    weights: Vec<i64>,
}

impl BasisSpec {
    /// Full-interaction basis with the training rows as knots.
    pub fn new(knots: CovariateMatrix) -> Self {
        let d = knots.d();
        Self::with_max_degree(knots, d)
    }

    pub fn with_max_degree(knots: CovariateMatrix, max_degree: usize) -> Self {
        let d = knots.d();
        let max_degree = max_degree.clamp(1, d);
        let weights = (0..=d)
            .map(|p| (1..=max_degree.min(p)).map(|k| binomial(p, k) as i64).sum())
            .collect();
        Self {
            knots,
            max_degree,
            oracle_cap: DEFAULT_ORACLE_CAP,
            weights,
        }
    }

    pub fn with_oracle_cap(mut self, cap: usize) -> Self {
        self.oracle_cap = cap;
        self
    }

    pub fn knots(&self) -> &CovariateMatrix {
        &self.knots
    }

    pub fn d(&self) -> usize {
        self.knots.d()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn oracle_cap(&self) -> usize {
        self.oracle_cap
    }

    pub fn subsets_per_knot(&self) -> u128 {
        (1..=self.max_degree).map(|k| binomial(self.d(), k)).sum()
    }

    /// Total number of basis functions `N`.
    pub fn n_basis(&self) -> u128 {
        self.knots.n() as u128 * self.subsets_per_knot()
    }

    /// Number of allowed nonempty subsets inside a set of `shared` coordinates.
    #[inline]
    pub(crate) fn subset_count(&self, shared: u32) -> i64 {
        self.weights[shared as usize]
    }

    #[inline]
    pub(crate) fn allows(&self, subset: u64) -> bool {
        subset != 0 && subset.count_ones() as usize <= self.max_degree
    }

    /// Bit `j` set when `x_j ≥ knot_{l,j}`.
    #[inline]
    pub fn activation_mask(&self, l: usize, x: &[f64]) -> u64 {
        self.knots
            .row(l)
            .iter()
            .zip(x)
            .enumerate()
            .fold(
                0u64,
                |m, (j, (k, v))| if v >= k { m | (1u64 << j) } else { m },
            )
    }

    fn check_oracle(&self) -> Result<usize> {
        let n_basis = self.n_basis();
        if n_basis > self.oracle_cap as u128 {
            return Err(PchaError::OracleCapExceeded {
                n_basis,
                cap: self.oracle_cap,
            });
        }
        Ok(n_basis as usize)
    }
}

/// Evaluates every basis function at `x` (oracle scale only).
pub fn eval_basis_row(spec: &BasisSpec, x: &[f64]) -> Result<Vec<f64>> {
    let n_basis = spec.check_oracle()?;
    if x.len() != spec.d() {
        return Err(PchaError::DimensionMismatch(format!(
            "point has {} coordinates, basis has {}",
            x.len(),
            spec.d()
        )));
    }
    let subsets = ordered_subsets(spec.d(), spec.max_degree());
    let mut out = Vec::with_capacity(n_basis);
    for l in 0..spec.knots().n() {
        let active = spec.activation_mask(l, x);
        out.extend(
            subsets
                .iter()
                .map(|&s| if s & active == s { 1.0 } else { 0.0 }),
        );
    }
    Ok(out)
}

/// Materialized `n × N` design (oracle scale only).
pub fn design_matrix(spec: &BasisSpec, x: &CovariateMatrix) -> Result<Vec<Vec<f64>>> {
    x.rows().map(|row| eval_basis_row(spec, row)).collect()
}

/// Symmetric Gram matrix `H Hᵀ` of the implicit basis, stored exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<i64>,
}

impl KernelMatrix {
    /// Row-major `n × n` values. Symmetry is checked by the spectral step.
    pub fn from_values(n: usize, values: Vec<i64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(PchaError::DimensionMismatch(format!(
                "expected {} kernel entries, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Activation masks of a set of points against every knot, point-major.
#[derive(Debug, Clone)]
pub struct Activations {
    n_points: usize,
    n_knots: usize,
    masks: Vec<u64>,
    /// The same masks stored knot-major, for passes that loop over points per knot.
    by_knot: Vec<u64>,
}

impl Activations {
    pub fn new(spec: &BasisSpec, x: &CovariateMatrix) -> Self {
        let n_knots = spec.knots().n();
        let mut masks = Vec::with_capacity(x.n() * n_knots);
        for row in x.rows() {
            masks.extend((0..n_knots).map(|l| spec.activation_mask(l, row)));
        }
        let n = x.n();
        let mut by_knot = vec![0; masks.len()];
        for i in 0..n {
            for l in 0..n_knots {
                by_knot[l * n + i] = masks[i * n_knots + l];
            }
        }
        Self {
            n_points: n,
            n_knots,
            masks,
            by_knot,
        }
    }

    /// Masks of knot `l` at every point.
    #[inline]
    pub fn knot(&self, l: usize) -> &[u64] {
        &self.by_knot[l * self.n_points..(l + 1) * self.n_points]
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[u64] {
        &self.masks[i * self.n_knots..(i + 1) * self.n_knots]
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }
}

/// Knot coordinates sorted ascending, for the one-dimensional shortcuts.
fn sorted_knots_1d(spec: &BasisSpec) -> Vec<f64> {
    let mut k: Vec<f64> = spec.knots().rows().map(|r| r[0]).collect();
    k.sort_by(f64::total_cmp);
    k
}

/// Number of sorted values `≤ v`.
#[inline]
fn count_le(sorted: &[f64], v: f64) -> usize {
    sorted.partition_point(|&k| k <= v)
}

/// `K(i, i') = Σ_l Σ_{s allowed} 1{s ⊆ active_l(x_i) ∩ active_l(x_i')}`.
pub fn build_kernel_matrix(spec: &BasisSpec, x: &CovariateMatrix) -> Result<KernelMatrix> {
    if x.d() != spec.d() {
        return Err(PchaError::DimensionMismatch(
            "covariates and knots differ in dimension".into(),
        ));
    }
    let n = x.n();
    let mut values = vec![0i64; n * n];
    if spec.d() == 1 {
        // Shared knots are exactly those at or below min(x_i, x_i').
        let knots = sorted_knots_1d(spec);
        let counts: Vec<i64> = x.rows().map(|r| count_le(&knots, r[0]) as i64).collect();
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = counts[i].min(counts[j]);
            }
        }
        return KernelMatrix::from_values(n, values);
    }
    let act = Activations::new(spec, x);
    for i in 0..n {
        let mi = act.point(i);
        for j in i..n {
            let mj = act.point(j);
            let k: i64 = mi
                .iter()
                .zip(mj)
                .map(|(a, b)| spec.subset_count((a & b).count_ones()))
                .sum();
            values[i * n + j] = k;
            values[j * n + i] = k;
        }
    }
    KernelMatrix::from_values(n, values)
}

/// Kernel between a new point and each training point: `Σ_j φ_j(x_new) φ_j(x_train,i)`.
pub fn kernel_cross(spec: &BasisSpec, x_train: &CovariateMatrix, x_new: &[f64]) -> Vec<i64> {
    let d = spec.d();
    x_train
        .rows()
        .map(|xi| {
            (0..spec.knots().n())
                .map(|l| {
                    let knot = spec.knots().row(l);
                    let shared = (0..d).filter(|&j| knot[j] <= x_new[j].min(xi[j])).count();
                    spec.subset_count(shared as u32)
                })
                .sum()
        })
        .collect()
}

/// Precomputed state for evaluating kernels and coefficient sums against a
/// fixed set of training points.
#[derive(Debug, Clone)]
pub struct BasisEngine {
    spec: BasisSpec,
    x: CovariateMatrix,
    kind: EngineKind,
}

#[derive(Debug, Clone)]
enum EngineKind {
    /// One covariate: everything reduces to sorted prefix/suffix sums.
    OneDim {
        knots_sorted: Vec<f64>,
        /// Knot indices in ascending knot order.
        knot_order: Vec<usize>,
        /// Point indices in ascending coordinate order.
        point_order: Vec<usize>,
    },
    Masks {
        act: Activations,
        dense: bool,
        subsets: Vec<u64>,
    },
}

/// Per-basis-function coefficient sums `β_j = Σ_i w_i φ_j(x_i)` summarized in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSums {
    pub l1: f64,
    pub l2_sq: f64,
    /// `g_i = Σ_j sign(β_j) φ_j(x_i)`.
    pub sign_sums: Vec<f64>,
}

impl BasisEngine {
    pub fn new(spec: BasisSpec, x: CovariateMatrix) -> Result<Self> {
        if x.d() != spec.d() {
            return Err(PchaError::DimensionMismatch(
                "covariates and knots differ in dimension".into(),
            ));
        }
        let kind = if spec.d() == 1 {
            let mut knot_order: Vec<usize> = (0..spec.knots().n()).collect();
            knot_order.sort_by(|&a, &b| spec.knots().row(a)[0].total_cmp(&spec.knots().row(b)[0]));
            let mut point_order: Vec<usize> = (0..x.n()).collect();
            point_order.sort_by(|&a, &b| x.row(a)[0].total_cmp(&x.row(b)[0]));
            EngineKind::OneDim {
                knots_sorted: sorted_knots_1d(&spec),
                knot_order,
                point_order,
            }
        } else {
            let dense = spec.d() <= DENSE_MASK_MAX_DIM;
            let subsets = if dense {
                Vec::new()
            } else {
                ordered_subsets(spec.d(), spec.max_degree())
            };
            EngineKind::Masks {
                act: Activations::new(&spec, &x),
                dense,
                subsets,
            }
        };
        Ok(Self { spec, x, kind })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn points(&self) -> &CovariateMatrix {
        &self.x
    }

    pub fn kernel_matrix(&self) -> Result<KernelMatrix> {
        build_kernel_matrix(&self.spec, &self.x)
    }

    /// Kernel vector between `x_new` and every training point.
    pub fn kernel_row(&self, x_new: &[f64]) -> Vec<f64> {
        match &self.kind {
            EngineKind::OneDim { knots_sorted, .. } => self
                .x
                .rows()
                .map(|xi| count_le(knots_sorted, x_new[0].min(xi[0])) as f64)
                .collect(),
            EngineKind::Masks { act, .. } => {
                let mx: Vec<u64> = (0..self.spec.knots().n())
                    .map(|l| self.spec.activation_mask(l, x_new))
                    .collect();
                (0..self.x.n())
                    .map(|i| {
                        act.point(i)
                            .iter()
                            .zip(&mx)
                            .map(|(a, b)| self.spec.subset_count((a & b).count_ones()))
                            .sum::<i64>() as f64
                    })
                    .collect()
            }
        }
    }

    /// Streams `β_j = Σ_i w_i φ_j(x_i)` over all basis functions, handing each
    /// knot's block (in basis order) to `visit`, then accumulates the norm and
    /// sign statistics. Memory is `O(n + 2^d)`.
    pub fn coefficient_sums(
        &self,
        w: &[f64],
        mut visit: impl FnMut(usize, &[f64]),
    ) -> CoefficientSums {
        assert_eq!(w.len(), self.x.n());
        let n = self.x.n();
        let n_knots = self.spec.knots().n();
        let mut l1 = 0.0;
        let mut l2_sq = 0.0;
        let mut g = vec![0.0; n];
        match &self.kind {
            EngineKind::OneDim {
                knots_sorted,
                knot_order,
                point_order,
            } => {
                // β at sorted knot position p = Σ of w over points ≥ knot.
                let mut suffix = vec![0.0; n + 1];
                for p in (0..n).rev() {
                    suffix[p] = suffix[p + 1] + w[point_order[p]];
                }
                let xs: Vec<f64> = point_order.iter().map(|&i| self.x.row(i)[0]).collect();
                let mut beta = vec![0.0; n_knots];
                for (pos, &l) in knot_order.iter().enumerate() {
                    let first = xs.partition_point(|&v| v < knots_sorted[pos]);
                    beta[l] = suffix[first];
                }
                for (l, &b) in beta.iter().enumerate() {
                    visit(l, std::slice::from_ref(&b));
                    l1 += b.abs();
                    l2_sq += b * b;
                }
                // g_i = Σ of sign(β) over knots ≤ x_i.
                let mut prefix = vec![0.0; n_knots + 1];
                for (pos, &l) in knot_order.iter().enumerate() {
                    prefix[pos + 1] = prefix[pos] + sign(beta[l]);
                }
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi = prefix[count_le(knots_sorted, self.x.row(i)[0])];
                }
            }
            EngineKind::Masks {
                act, dense: true, ..
            } => {
                let d = self.spec.d();
                let size = 1usize << d;
                let order = ordered_subsets(d, self.spec.max_degree());
                let mut acc = vec![0.0; size];
                let mut block = vec![0.0; order.len()];
                for l in 0..n_knots {
                    acc.iter_mut().for_each(|v| *v = 0.0);
                    let masks = act.knot(l);
                    for i in 0..n {
                        acc[masks[i] as usize] += w[i];
                    }
                    superset_sums(&mut acc, d);
                    for (b, &s) in block.iter_mut().zip(&order) {
                        *b = acc[s as usize];
                    }
                    visit(l, &block);
                    // Reuse `acc` for the sign table, then turn it into subset sums.
                    for (s, slot) in acc.iter_mut().enumerate().take(size) {
                        let v = *slot;
                        *slot = if self.spec.allows(s as u64) {
                            l1 += v.abs();
                            l2_sq += v * v;
                            sign(v)
                        } else {
                            0.0
                        };
                    }
                    subset_sums(&mut acc, d);
                    for (gi, &m) in g.iter_mut().zip(masks) {
                        *gi += acc[m as usize];
                    }
                }
            }
            EngineKind::Masks {
                act,
                dense: false,
                subsets,
            } => {
                let mut block = vec![0.0; subsets.len()];
                for l in 0..n_knots {
                    let mut groups: Vec<(u64, f64)> =
                        act.knot(l).iter().copied().zip(w.iter().copied()).collect();
                    groups.sort_by_key(|g| g.0);
                    groups.dedup_by(|a, b| {
                        if a.0 == b.0 {
                            b.1 += a.1;
                            true
                        } else {
                            false
                        }
                    });
                    for (b, &s) in block.iter_mut().zip(subsets) {
                        *b = groups
                            .iter()
                            .filter(|(m, _)| m & s == s)
                            .map(|(_, v)| v)
                            .sum();
                    }
                    visit(l, &block);
                    for &b in &block {
                        l1 += b.abs();
                        l2_sq += b * b;
                    }
                    let per_mask: Vec<(u64, f64)> = groups
                        .iter()
                        .map(|&(m, _)| {
                            let t = subsets
                                .iter()
                                .zip(&block)
                                .filter(|(s, _)| m & **s == **s)
                                .map(|(_, b)| sign(*b))
                                .sum();
                            (m, t)
                        })
                        .collect();
                    for (gi, &m) in g.iter_mut().zip(act.knot(l)) {
                        let k = per_mask
                            .binary_search_by_key(&m, |p| p.0)
                            .expect("mask present");
                        *gi += per_mask[k].1;
                    }
                }
            }
        }
        CoefficientSums {
            l1,
            l2_sq,
            sign_sums: g,
        }
    }
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// In place: `a[m] ← Σ_{m' ⊇ m} a[m']`.
fn superset_sums(a: &mut [f64], d: usize) {
    for bit in 0..d {
        let b = 1usize << bit;
        for m in 0..a.len() {
            if m & b == 0 {
                a[m] += a[m | b];
            }
        }
    }
}

/// In place: `a[m] ← Σ_{m' ⊆ m} a[m']`.
fn subset_sums(a: &mut [f64], d: usize) {
    for bit in 0..d {
        let b = 1usize << bit;
        for m in 0..a.len() {
            if m & b != 0 {
                a[m] += a[m ^ b];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(rows: &[&[f64]]) -> CovariateMatrix {
        CovariateMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn scaling_examples() {
        let raw = vec![vec![2.0, 3.0], vec![4.0, 3.0], vec![6.0, 3.0]];
        let (x, map) = scale_to_unit_cube(&raw).unwrap();
        assert_eq!(x.row(0), &[0.0, 0.5]);
        assert_eq!(x.row(1), &[0.5, 0.5]);
        assert_eq!(x.row(2), &[1.0, 0.5]);
        assert_eq!(map.apply_row(&[8.0, 3.0]), vec![1.0, 0.5]);
        assert_eq!(map.apply_row(&[-1.0, 9.0]), vec![0.0, 0.5]);
        assert!(scale_to_unit_cube(&[]).is_err());
    }

    #[test]
    fn basis_row_examples() {
        let spec = BasisSpec::new(cov(&[&[0.2], &[0.5]]));
        assert_eq!(eval_basis_row(&spec, &[0.3]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(eval_basis_row(&spec, &[0.5]).unwrap(), vec![1.0, 1.0]);
        let spec = BasisSpec::new(cov(&[&[0.5, 0.5]]));
        // Subset order: {1}, {2}, {1,2}.
        assert_eq!(
            eval_basis_row(&spec, &[0.6, 0.4]).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn subset_order_and_count() {
        assert_eq!(
            ordered_subsets(3, 3),
            vec![0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111]
        );
        assert_eq!(ordered_subsets(3, 1), vec![0b001, 0b010, 0b100]);
        let spec = BasisSpec::new(cov(&[&[0.1, 0.2, 0.3], &[0.4, 0.5, 0.6]]));
        assert_eq!(spec.n_basis(), 2 * 7);
        let capped = BasisSpec::with_max_degree(spec.knots().clone(), 2);
        assert_eq!(capped.n_basis(), 2 * 6);
    }

    #[test]
    fn oracle_cap_is_enforced() {
        let spec = BasisSpec::new(cov(&[&[0.2], &[0.5]])).with_oracle_cap(1);
        assert!(matches!(
            eval_basis_row(&spec, &[0.3]),
            Err(PchaError::OracleCapExceeded { .. })
        ));
    }

    #[test]
    fn kernel_examples() {
        let x = cov(&[&[0.2], &[0.5]]);
        let spec = BasisSpec::new(x.clone());
        let k = build_kernel_matrix(&spec, &x).unwrap();
        assert_eq!(k.row(0), &[1, 1]);
        assert_eq!(k.row(1), &[1, 2]);
        assert_eq!(kernel_cross(&spec, &x, &[0.3]), vec![1, 1]);
        let x = cov(&[&[0.7]]);
        let k = build_kernel_matrix(&BasisSpec::new(x.clone()), &x).unwrap();
        assert_eq!(k.row(0), &[1]);
    }

    #[test]
    fn kernel_cross_zero_point() {
        let x = cov(&[&[0.2, 0.3], &[0.5, 0.9]]);
        let spec = BasisSpec::new(x.clone());
        assert_eq!(kernel_cross(&spec, &x, &[0.0, 0.0]), vec![0, 0]);
        let k = build_kernel_matrix(&spec, &x).unwrap();
        assert_eq!(kernel_cross(&spec, &x, x.row(1)), k.row(1).to_vec());
        let engine = BasisEngine::new(spec, x.clone()).unwrap();
        assert_eq!(
            engine.kernel_row(x.row(0)),
            vec![k.get(0, 0) as f64, k.get(0, 1) as f64]
        );
    }

    #[test]
    fn subset_transforms() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        superset_sums(&mut a, 2);
        assert_eq!(a, vec![10.0, 6.0, 7.0, 4.0]);
        let mut b = vec![1.0, 2.0, 3.0, 4.0];
        subset_sums(&mut b, 2);
        assert_eq!(b, vec![1.0, 3.0, 4.0, 10.0]);
    }
}
