//! Shared test oracles. Everything here works on materialized designs and is
//! deliberately independent of the streaming code paths under test.
#![allow(dead_code)]

use pcha::basis::{design_matrix, BasisSpec, CovariateMatrix};
use pcha::dense::ColMatrix;
use pcha::pc::{PCWorkingModel, WorkingModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Points on a coarse grid so ties (shared coordinates) are common.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> CovariateMatrix {
    let grid = rng.gen_range(3..=10) as f64;
    let v = (0..n * d)
        .map(|_| (rng.gen_range(0..=grid as usize) as f64) / grid)
        .collect();
    CovariateMatrix::new(n, d, v).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

pub fn model(x: &CovariateMatrix) -> PCWorkingModel {
    PCWorkingModel::new(x.clone(), &WorkingModelConfig::default()).unwrap()
}

/// Row-major dense design `H` (n × N).
pub fn dense_design(x: &CovariateMatrix) -> Vec<Vec<f64>> {
    design_matrix(&BasisSpec::new(x.clone()), x).unwrap()
}

/// Gram matrix `H Hᵀ` by brute force.
pub fn brute_gram(h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    h.iter()
        .map(|a| {
            h.iter()
                .map(|b| a.iter().zip(b).map(|(p, q)| p * q).sum())
                .collect()
        })
        .collect()
}

pub fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Euclidean projection onto `{‖v‖₁ ≤ c}` (sort-based).
pub fn project_l1_ball(v: &[f64], c: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= c {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let (mut cum, mut theta) = (0.0, 0.0);
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - c) / (k + 1) as f64;
        if uk > t {
            theta = t;
        }
    }
    v.iter()
        .map(|x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// `min (1/n)‖ỹ − Zα‖²  s.t. ‖Eα‖₁ ≤ C` by ADMM on the split `β = Eα`, with
/// `Z` orthogonal (`ZᵀZ = diag(d²)`) and `EᵀE = I` so the α-step is diagonal.
/// `ytilde` is the centered response. Returns `α`.
pub fn admm_constrained_mse(
    z: &ColMatrix,
    d: &[f64],
    e: &ColMatrix,
    ytilde: &[f64],
    c: f64,
    iters: usize,
) -> Vec<f64> {
    let n = ytilde.len() as f64;
    let r = d.len();
    let zty = z.tr_mul_vec(ytilde);
    let rho = 2.0 * d.iter().map(|v| v * v).sum::<f64>() / (n * r as f64);
    let mut b = vec![0.0; e.rows()];
    let mut u = vec![0.0; e.rows()];
    let mut alpha = vec![0.0; r];
    for _ in 0..iters {
        let rhs: Vec<f64> = b.iter().zip(&u).map(|(p, q)| p - q).collect();
        let et = e.tr_mul_vec(&rhs);
        for m in 0..r {
            alpha[m] = (2.0 * zty[m] / n + rho * et[m]) / (2.0 * d[m] * d[m] / n + rho);
        }
        let ea = e.mul_vec(&alpha);
        let v: Vec<f64> = ea.iter().zip(&u).map(|(p, q)| p + q).collect();
        b = project_l1_ball(&v, c);
        for j in 0..u.len() {
            u[j] += ea[j] - b[j];
        }
    }
    // Report the feasible point closest to the iterate: rescale onto the ball.
    let l1: f64 = e.mul_vec(&alpha).iter().map(|v| v.abs()).sum();
    if l1 > c {
        alpha.iter_mut().for_each(|a| *a *= c / l1);
    }
    alpha
}

/// Ridge oracle: solves `(ZᵀZ/n + λI) α = Zᵀỹ/n` with a dense LU.
pub fn ridge_normal_equations(z: &ColMatrix, ytilde: &[f64], lambda: f64) -> Vec<f64> {
    let (n, r) = (z.rows(), z.cols());
    let zm = nalgebra::DMatrix::from_fn(n, r, |i, j| z.get(i, j));
    let a = zm.transpose() * &zm / n as f64 + nalgebra::DMatrix::identity(r, r) * lambda;
    let b = zm.transpose() * nalgebra::DVector::from_column_slice(ytilde) / n as f64;
    a.lu().solve(&b).unwrap().as_slice().to_vec()
}

/// `(1/n)‖ỹ − Zα‖² + λ‖α‖₁`.
pub fn lasso_objective(z: &ColMatrix, ytilde: &[f64], alpha: &[f64], lambda: f64) -> f64 {
    let f = z.mul_vec(alpha);
    mse(ytilde, &f) + lambda * alpha.iter().map(|a| a.abs()).sum::<f64>()
}

/// Lasso oracle: accelerated proximal (sub)gradient iterations on the dense
/// design, with step `1/L` from the Frobenius bound. No orthogonality is used.
pub fn lasso_fista(z: &ColMatrix, ytilde: &[f64], lambda: f64, iters: usize) -> Vec<f64> {
    let (n, r) = (z.rows() as f64, z.cols());
    let frob: f64 = (0..r)
        .map(|j| z.col(j).iter().map(|v| v * v).sum::<f64>())
        .sum();
    let step = n / (2.0 * frob);
    let mut x = vec![0.0; r];
    let mut yk = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let resid: Vec<f64> = z
            .mul_vec(&yk)
            .iter()
            .zip(ytilde)
            .map(|(f, y)| f - y)
            .collect();
        let grad: Vec<f64> = z.tr_mul_vec(&resid).iter().map(|g| 2.0 * g / n).collect();
        let next: Vec<f64> = yk
            .iter()
            .zip(&grad)
            .map(|(v, g)| {
                let u = v - step * g;
                u.signum() * (u.abs() - step * lambda).max(0.0)
            })
            .collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        yk = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        x = next;
        t = t_next;
    }
    x
}

/// `E = Hᵀ U D⁻¹` from the dense design (N × r).
pub fn eigenvector_matrix(h: &[Vec<f64>], m: &PCWorkingModel) -> ColMatrix {
    let u = &m.factors().u;
    let d = m.singular_values();
    ColMatrix::from_fn(h[0].len(), m.rank(), |j, k| {
        (0..h.len()).map(|i| h[i][j] * u.get(i, k)).sum::<f64>() / d[k]
    })
}

/// Random directions in the tangent space of the face at `beta`:
/// `h ⊥ a₁` and `E(j,·) h = 0` for every `|β_j| ≤ zero_tol`.
pub fn face_tangent_directions(
    e: &ColMatrix,
    beta: &[f64],
    zero_tol: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let r = e.cols();
    let mut a1 = vec![0.0; r];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (j, b) in beta.iter().enumerate() {
        let row: Vec<f64> = (0..r).map(|k| e.get(j, k)).collect();
        if b.abs() <= zero_tol {
            rows.push(row);
        } else {
            a1.iter_mut()
                .zip(&row)
                .for_each(|(a, v)| *a += b.signum() * v);
        }
    }
    rows.push(a1);
    let a = nalgebra::DMatrix::from_fn(rows.len(), r, |i, k| rows[i][k]);
    let pinv = a.clone().pseudo_inverse(1e-10).unwrap();
    let proj = nalgebra::DMatrix::identity(r, r) - pinv * a;
    let mut g = rng(seed);
    (0..count)
        .map(|_| {
            let v = nalgebra::DVector::from_vec(random_vec(&mut g, r));
            (&proj * v).as_slice().to_vec()
        })
        .collect()
}
