//! Active-set refinement for the generalized-lasso fit.
//!
//! Multiplicative paths reach coefficients `β_j = 0` only asymptotically,
//! while the constrained optimum usually sits on such kinks of `‖β‖₁`. This
//! phase works on faces `{α : β_j(α) = 0 for j ∈ Z, ⟨a₁, α⟩ = C}`, which are
//! affine because the signs of the remaining coefficients are fixed. It takes
//! curvature-scaled steps inside the face, stops at the first sign change
//! (pinning that coefficient at zero), and unpins a coefficient when its
//! multiplier shows that leaving the kink lowers the risk.

use std::collections::HashMap;

use faer::prelude::*;
use faer::Side;

use crate::basis::sign;
use crate::dense::{dot, norm2, norm_inf};
use crate::loss::RiskState;
use crate::pc::PCWorkingModel;

pub(super) struct FaceOutcome {
    pub alpha: Vec<f64>,
    pub intercept: f64,
    pub risk: f64,
    pub iterations: usize,
    pub pinned: usize,
    pub converged: bool,
}

/// A constraint row `E(j, ·)` shared by basis functions with identical rows.
struct Row {
    members: Vec<usize>,
    e: Vec<f64>,
}

struct Face {
    zero: Vec<bool>,
    /// Pinned indices in insertion order (rows are rebuilt from it).
    order: Vec<usize>,
    rows: Vec<Row>,
    /// Orthonormal basis of the span of the rows.
    q: Vec<Vec<f64>>,
    /// Just-released indices and the sign they leave zero with.
    forced: HashMap<usize, f64>,
    cache: HashMap<usize, Vec<f64>>,
}

impl Face {
    fn new(n_basis: usize) -> Self {
        Self {
            zero: vec![false; n_basis],
            order: Vec::new(),
            rows: Vec::new(),
            q: Vec::new(),
            forced: HashMap::new(),
            cache: HashMap::new(),
        }
    }

    fn row(&mut self, model: &PCWorkingModel, j: usize) -> &[f64] {
        self.cache
            .entry(j)
            .or_insert_with(|| model.eigenvector_row(j))
    }

    fn pin(&mut self, model: &PCWorkingModel, j: usize) {
        self.zero[j] = true;
        self.forced.remove(&j);
        self.order.push(j);
        self.attach(model, j);
    }

    /// Adds `E(j, ·)` as a new row unless it is already implied by the others.
    fn attach(&mut self, model: &PCWorkingModel, j: usize) {
        let e = self.row(model, j).to_vec();
        let scale = norm2(&e).max(1e-300);
        let mut res = e.clone();
        for q in &self.q {
            let c = dot(&res, q);
            res.iter_mut().zip(q).for_each(|(r, v)| *r -= c * v);
        }
        let rn = norm2(&res);
        if rn > 1e-9 * scale {
            self.q.push(res.into_iter().map(|v| v / rn).collect());
            self.rows.push(Row {
                members: vec![j],
                e,
            });
        } else if let Some(row) = self.rows.iter_mut().find(|r| {
            r.e.iter()
                .zip(&e)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                <= 1e-9 * scale
        }) {
            row.members.push(j);
        }
        // Otherwise the row is a combination of others and holds automatically.
    }

    fn release(&mut self, model: &PCWorkingModel, row: usize, sigma: f64) {
        let members = std::mem::take(&mut self.rows[row].members);
        for &j in &members {
            self.zero[j] = false;
            self.forced.insert(j, sigma);
        }
        self.order.retain(|j| !members.contains(j));
        self.rows.clear();
        self.q.clear();
        for j in self.order.clone() {
            self.attach(model, j);
        }
    }
}

/// Solves `M ν = rhs` for a symmetric positive semidefinite `M`, adding jitter if needed.
fn solve_psd(m: &Mat<f64>, rhs: &[f64]) -> Vec<f64> {
    let k = rhs.len();
    let b = Col::from_fn(k, |i| rhs[i]);
    let trace: f64 = (0..k).map(|i| m.read(i, i)).sum::<f64>().max(1e-300);
    let mut jitter = 0.0;
    loop {
        let mut mj = m.clone();
        for i in 0..k {
            mj.write(i, i, mj.read(i, i) + jitter);
        }
        crate::dense::sequential_linalg();
        if let Ok(llt) = mj.cholesky(Side::Lower) {
            let x = llt.solve(&b);
            let v: Vec<f64> = (0..k).map(|i| x.read(i)).collect();
            if v.iter().all(|x| x.is_finite()) {
                return v;
            }
        }
        jitter = if jitter == 0.0 {
            1e-14 * trace
        } else {
            jitter * 100.0
        };
    }
}

/// Multipliers `ν` minimizing `‖g + Aᵀν‖` in the metric `diag(1/w)`.
fn multipliers(rows: &[&[f64]], g: &[f64], w: &[f64]) -> Vec<f64> {
    let k = rows.len();
    let mut m = Mat::<f64>::zeros(k, k);
    let mut rhs = vec![0.0; k];
    for a in 0..k {
        rhs[a] = -rows[a]
            .iter()
            .zip(g)
            .zip(w)
            .map(|((x, y), c)| x * y / c)
            .sum::<f64>();
        for b in 0..=a {
            let v: f64 = rows[a]
                .iter()
                .zip(rows[b])
                .zip(w)
                .map(|((x, y), c)| x * y / c)
                .sum();
            m.write(a, b, v);
            m.write(b, a, v);
        }
    }
    solve_psd(&m, &rhs)
}

/// Norm of the risk gradient projected onto the tangent space of the face at
/// `alpha`, identifying pinned coefficients as those with `|β_j| ≤ zero_tol`.
pub fn face_tangent_residual(
    model: &PCWorkingModel,
    grad: &[f64],
    alpha: &[f64],
    zero_tol: f64,
) -> f64 {
    let (beta, _) = model.beta_with_stats(alpha);
    let r = alpha.len();
    let mut face = Face::new(beta.len());
    let mut a1 = vec![0.0; r];
    for (j, b) in beta.iter().enumerate() {
        if b.abs() <= zero_tol {
            face.pin(model, j);
        } else {
            let e = face.row(model, j).to_vec();
            a1.iter_mut().zip(&e).for_each(|(a, v)| *a += sign(*b) * v);
        }
    }
    let mut rows: Vec<&[f64]> = face.rows.iter().map(|r| r.e.as_slice()).collect();
    rows.push(&a1);
    let nu = multipliers(&rows, grad, &vec![1.0; r]);
    let mut res = grad.to_vec();
    for (row, v) in rows.iter().zip(&nu) {
        res.iter_mut()
            .zip(row.iter())
            .for_each(|(x, e)| *x += v * e);
    }
    norm2(&res)
}

pub(super) fn refine(
    state: &RiskState<'_>,
    model: &PCWorkingModel,
    c: f64,
    alpha: &[f64],
    intercept: f64,
    max_iter: usize,
) -> FaceOutcome {
    let curv = state.curvature_bound();
    let mut alpha = alpha.to_vec();
    let mut intercept = intercept;
    let mut risk = state.risk_at(&alpha, intercept);
    let (beta0, _) = model.beta_with_stats(&alpha);
    let mut face = Face::new(beta0.len());
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let (mut beta, stats) = model.beta_with_stats(&alpha);
        // Pinned coefficients carry round-off only, so the rescale stays exact.
        let s = c / stats.l1;
        if (s - 1.0).abs() > 1e-14 {
            alpha.iter_mut().for_each(|a| *a *= s);
            beta.iter_mut().for_each(|b| *b *= s);
            risk = state.risk_at(&alpha, intercept);
        }
        let noise = 1e-12 * c;
        face.forced.retain(|&j, sg| beta[j] * *sg <= noise);

        let mut a1 = model.constraint_gradient(&stats);
        let corrections: Vec<(usize, f64)> = face
            .order
            .iter()
            .map(|&j| (j, -sign(beta[j])))
            .chain(face.forced.iter().map(|(&j, &sg)| (j, sg - sign(beta[j]))))
            .filter(|(_, w)| *w != 0.0)
            .collect();
        for (j, w) in corrections {
            let e = face.row(model, j).to_vec();
            a1.iter_mut().zip(&e).for_each(|(a, v)| *a += w * v);
        }

        let grad = state.grad_alpha_at(&alpha, intercept);
        let mut rows: Vec<&[f64]> = face.rows.iter().map(|r| r.e.as_slice()).collect();
        rows.push(&a1);
        let nu = multipliers(&rows, &grad, &curv);
        let mut step = grad.clone();
        for (row, v) in rows.iter().zip(&nu) {
            step.iter_mut()
                .zip(row.iter())
                .for_each(|(x, e)| *x += v * e);
        }
        step.iter_mut().zip(&curv).for_each(|(x, w)| *x = -*x / w);
        let decrease: f64 = 0.5 * step.iter().zip(&curv).map(|(x, w)| w * x * x).sum::<f64>();

        if decrease <= 1e-15 * (risk.abs() + 1e-12) || norm_inf(&step) <= 1e-15 * norm_inf(&alpha) {
            // Stationary on this face: leave a kink if that lowers the risk.
            let mu = nu[nu.len() - 1];
            let scale = norm_inf(&grad) + mu.abs();
            let best = face
                .rows
                .iter()
                .enumerate()
                .map(|(i, row)| (i, nu[i].abs() - row.members.len() as f64 * mu))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((i, viol)) if viol > 1e-9 * scale => {
                    let sigma = if nu[i] < 0.0 { -1.0 } else { 1.0 };
                    face.release(model, i, sigma);
                    continue;
                }
                _ => {
                    converged = true;
                    break;
                }
            }
        }

        // Longest step before some free coefficient would change sign.
        let (dbeta, _) = model.beta_with_stats(&step);
        let mut t_star = 1.0;
        let mut blocking: Vec<(usize, f64)> = Vec::new();
        for (j, (&b, &db)) in beta.iter().zip(&dbeta).enumerate() {
            if face.zero[j] || db == 0.0 {
                continue;
            }
            let sg = face.forced.get(&j).copied().unwrap_or_else(|| sign(b));
            if sg == 0.0 || sg * db < 0.0 {
                let t = if sg == 0.0 { 0.0 } else { (-b / db).max(0.0) };
                if t < 1.0 {
                    blocking.push((j, t));
                    t_star = f64::min(t_star, t);
                }
            }
        }
        let trial: Vec<f64> = alpha
            .iter()
            .zip(&step)
            .map(|(a, d)| a + t_star * d)
            .collect();
        let new_intercept = state.optimal_intercept(&trial, intercept);
        let new_risk = state.risk_at(&trial, new_intercept);
        if !(new_risk <= risk + 1e-13 * risk.abs().max(1e-300)) {
            break;
        }
        alpha = trial;
        intercept = new_intercept;
        risk = new_risk;
        if t_star < 1.0 {
            let cutoff = t_star * (1.0 + 1e-9) + 1e-15;
            for (j, _) in blocking.into_iter().filter(|&(_, t)| t <= cutoff) {
                face.pin(model, j);
            }
        }
    }
    let pinned = face.order.len();
    FaceOutcome {
        alpha,
        intercept,
        risk,
        iterations,
        pinned,
        converged,
    }
}
