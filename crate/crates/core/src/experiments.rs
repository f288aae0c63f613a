//! Seeded data-generating processes and the three simulation studies:
//! norm scaling, convergence rates and the ATE Monte Carlo.
//!
//! Replicate `r` of study `s` draws from `rng::stream(master, tag(s), r)`, so
//! results are independent of execution order and thread count. Gaussian
//! noise uses Box-Muller (see [`crate::rng::normal`]).

use std::f64::consts::PI;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{
    eic, plugin_ate, tau_threshold, undersmooth_grid, undersmooth_with_tau, CausalDataset,
    OutcomeModel, DEFAULT_POSITIVITY, UNDERSMOOTH_RATIO, UNDERSMOOTH_STEPS,
};
use crate::cv::{cv_select_modes, CvConfig, HaglSelection};
use crate::dense::{mean, norm1, norm2, norm_inf, sample_sd};
use crate::error::{PchaError, Result};
use crate::loss::LossKind;
use crate::pc::WorkingModelConfig;
use crate::rng;
use crate::solver::{HaglMethod, Mode, SolverConfig};

/// Noise sd of the oscillatory design.
pub const OSCILLATORY_NOISE_SD: f64 = 2.0;
/// Noise sd of the additive designs.
pub const ADDITIVE_NOISE_SD: f64 = 0.3;
/// `|α_m|` above this counts toward `Jₙ`.
pub const ZERO_THRESHOLD: f64 = 1e-10;
pub const N_TEST: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

/// `2 sin(8πx²) / x`.
pub fn oscillatory_truth(x: f64) -> f64 {
    2.0 * (8.0 * PI * x * x).sin() / x
}

/// `X ~ U(0, 1]`, `Y = 2 sin(8πX²)/X + N(0, noise_sd²)`.
pub fn gen_oscillatory_with(n: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, rng::tag("oscillatory"), n as u64);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        // (0, 1] keeps the truth finite.
        let xi = 1.0 - rng::uniform(&mut r);
        y.push(oscillatory_truth(xi) + noise_sd * rng::normal(&mut r));
        x.push(vec![xi]);
    }
    Dataset { x, y }
}

pub fn gen_oscillatory(n: usize, seed: u64) -> Dataset {
    gen_oscillatory_with(n, OSCILLATORY_NOISE_SD, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Linear,
    Harmonic,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Linear => "linear",
            Target::Harmonic => "harmonic",
        }
    }

    /// `d^{-1/2} Σ x_j` or `d^{-1/2} Σ sin(2π x_j)`.
    pub fn eval(self, x: &[f64]) -> f64 {
        let s: f64 = match self {
            Target::Linear => x.iter().sum(),
            Target::Harmonic => x.iter().map(|v| (2.0 * PI * v).sin()).sum(),
        };
        s / (x.len() as f64).sqrt()
    }
}

/// `X ~ U([0,1]^d)`, `Y = ψ₀(X) + N(0, noise_sd²)`.
pub fn gen_additive(n: usize, d: usize, target: Target, noise_sd: f64, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, rng::tag(target.name()), ((d as u64) << 32) | n as u64);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: Vec<f64> = (0..d).map(|_| rng::uniform(&mut r)).collect();
        y.push(target.eval(&xi) + noise_sd * rng::normal(&mut r));
        x.push(xi);
    }
    Dataset { x, y }
}

/// `logit π₁(W) = W₁ + 0.5 W₂ + W₁W₂ + 0.3 W₂²`.
pub fn ate_propensity(w: &[f64]) -> f64 {
    let t = w[0] + 0.5 * w[1] + w[0] * w[1] + 0.3 * w[1] * w[1];
    1.0 / (1.0 + (-t).exp())
}

/// `E[Y | A, W] = 2W₁ − 2W₂² + W₂ + W₁W₂ + 0.5`; the effect of `A` is zero.
pub fn ate_outcome_mean(w: &[f64]) -> f64 {
    2.0 * w[0] - 2.0 * w[1] * w[1] + w[1] + w[0] * w[1] + 0.5
}

/// `W₁ ~ U(−2, 2)`, `W₂ ~ N(0, 0.25)`, `A ~ Bernoulli(π₁(W))`, `Y = μ(W) + N(0, 0.25)`
/// (second arguments are variances). The true ATE is 0.
///
/// `A` is drawn from the exact `π₁`; the stored propensity used by the EIC is
/// truncated to `[ε, 1 − ε]` with `ε` = [`DEFAULT_POSITIVITY`], since tail draws
/// of `W₂` push `π₁` past `1 − 10⁻³`.
pub fn gen_ate(n: usize, seed: u64) -> Result<CausalDataset> {
    let mut r = rng::stream(seed, rng::tag("ate"), n as u64);
    let (mut w, mut a, mut y, mut pi1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let wi = vec![4.0 * rng::uniform(&mut r) - 2.0, 0.5 * rng::normal(&mut r)];
        let p = ate_propensity(&wi);
        let ai = if rng::bernoulli(&mut r, p) { 1.0 } else { 0.0 };
        y.push(ate_outcome_mean(&wi) + 0.5 * rng::normal(&mut r));
        a.push(ai);
        pi1.push(p.clamp(DEFAULT_POSITIVITY, 1.0 - DEFAULT_POSITIVITY));
        w.push(wi);
    }
    CausalDataset::new(w, a, y, pi1, DEFAULT_POSITIVITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
    pub dropped: usize,
}

/// OLS of `ln value` on `ln n`. Nonpositive values are dropped with a warning.
pub fn estimate_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    let kept: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(n, v)| *v > 0.0 && v.is_finite() && *n > 0.0)
        .map(|(n, v)| (n.ln(), v.ln()))
        .collect();
    let dropped = pairs.len() - kept.len();
    if dropped > 0 {
        warn!("slope fit dropped {dropped} nonpositive values");
    }
    let mut xs: Vec<f64> = kept.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(PchaError::Degenerate(format!(
            "slope needs at least 3 distinct n, got {}",
            xs.len()
        )));
    }
    let m = kept.len() as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / m;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = kept.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = kept.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = kept
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = if kept.len() > 2 {
        (sse / (m - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        points: kept.len(),
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = PchaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(PchaError::Config(format!(
                "unknown preset '{other}' (available: desk, paper)"
            ))),
        }
    }
}

/// Solver settings of the study presets. Desk runs skip the active-set
/// refinement and cap the descent so that CV grids stay affordable.
pub fn study_solver(preset: Preset) -> SolverConfig {
    match preset {
        Preset::Desk => SolverConfig {
            max_iter: 200,
            risk_tol: 1e-8,
            hagl_method: HaglMethod::Preconditioned,
            hagl_refine_max_rank: 0,
            ..SolverConfig::default()
        },
        Preset::Paper => SolverConfig::default(),
    }
}

/// Desk runs tune HAGL on its warm start; paper runs on the HAGL fits.
pub fn study_selection(preset: Preset) -> HaglSelection {
    match preset {
        Preset::Desk => HaglSelection::WarmStart,
        Preset::Paper => HaglSelection::Own,
    }
}

/// One long-format result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub study: String,
    pub mode: String,
    pub d: usize,
    pub n: usize,
    pub replicate: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub study: String,
    pub mode: String,
    pub d: usize,
    pub metric: String,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub records: Vec<Record>,
    pub slopes: Vec<SlopeRecord>,
    /// Study-specific aggregate (e.g. the ATE table rows).
    pub summary: serde_json::Value,
}

impl StudyResult {
    pub fn slope(&self, study: &str, mode: Mode, d: usize, metric: &str) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.study == study && s.mode == mode.label() && s.d == d && s.metric == metric)
            .map(|s| s.fit.slope)
    }
}

fn cv_config(
    folds: usize,
    seed: u64,
    solver: &SolverConfig,
    hagl_selection: HaglSelection,
) -> CvConfig {
    CvConfig {
        folds,
        grid: None,
        seed,
        kind: LossKind::Mse,
        solver: *solver,
        working_model: WorkingModelConfig::default(),
        hagl_selection,
    }
}

/// Mean over replicates per `n`, then slope, for every `(study, mode, d, metric)`.
fn slopes_by_mean(records: &[Record], metrics: &[&str]) -> Vec<SlopeRecord> {
    let mut keys: Vec<(String, String, usize, String)> = records
        .iter()
        .filter(|r| metrics.contains(&r.metric.as_str()))
        .map(|r| (r.study.clone(), r.mode.clone(), r.d, r.metric.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter_map(|(study, mode, d, metric)| {
            let mut ns: Vec<usize> = records
                .iter()
                .filter(|r| r.study == study && r.mode == mode && r.d == d && r.metric == metric)
                .map(|r| r.n)
                .collect();
            ns.sort_unstable();
            ns.dedup();
            let pairs: Vec<(f64, f64)> = ns
                .iter()
                .map(|&n| {
                    let vals: Vec<f64> = records
                        .iter()
                        .filter(|r| {
                            r.study == study
                                && r.mode == mode
                                && r.d == d
                                && r.metric == metric
                                && r.n == n
                        })
                        .map(|r| r.value)
                        .collect();
                    (n as f64, mean(&vals))
                })
                .collect();
            match estimate_slope(&pairs) {
                Ok(fit) => Some(SlopeRecord {
                    study,
                    mode,
                    d,
                    metric,
                    fit,
                }),
                Err(e) => {
                    warn!("no slope for {study}/{mode}/d={d}/{metric}: {e}");
                    None
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStudyConfig {
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub modes: Vec<Mode>,
    pub folds: usize,
    pub hagl_selection: HaglSelection,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl NormStudyConfig {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let ns = match preset {
            Preset::Desk => vec![100, 200, 400, 800, 1600],
            Preset::Paper => vec![100, 200, 400, 800, 1600, 3200],
        };
        let replicates = match preset {
            Preset::Desk => 5,
            Preset::Paper => 10,
        };
        Self {
            ns,
            replicates,
            modes: Mode::ALL.to_vec(),
            folds: 3,
            hagl_selection: study_selection(preset),
            seed,
            solver: study_solver(preset),
        }
    }
}

pub const NORM_METRICS: [&str; 6] = [
    "alpha_l2",
    "alpha_l1",
    "alpha_linf",
    "beta_l1",
    "j_n",
    "beta_l2",
];

/// CV-fits every mode on oscillatory data and records coefficient norms.
pub fn run_norm_study(cfg: &NormStudyConfig) -> Result<StudyResult> {
    let tasks: Vec<(usize, usize)> = cfg
        .ns
        .iter()
        .flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r)))
        .collect();
    let per_task: Vec<Vec<Record>> = tasks
        .par_iter()
        .map(|&(n, rep)| {
            let seed =
                rng::derive_seed(cfg.seed, rng::tag("norms"), ((n as u64) << 20) | rep as u64);
            let data = gen_oscillatory(n, seed);
            let cvs = cv_select_modes(
                &data.x,
                &data.y,
                &cfg.modes,
                &cv_config(cfg.folds, seed, &cfg.solver, cfg.hagl_selection),
            )?;
            let mut out = Vec::new();
            for cv in &cvs {
                let mode = cv.mode;
                let alpha = &cv.fit.alpha;
                let stats = cv.model.beta_stats(alpha);
                let a2 = norm2(alpha);
                if (stats.l2 - a2).abs() > 1e-8 * a2.max(1.0) {
                    return Err(PchaError::Degenerate(format!(
                        "‖β(α)‖₂ = {} but ‖α‖₂ = {a2}",
                        stats.l2
                    )));
                }
                let j_n = alpha.iter().filter(|a| a.abs() > ZERO_THRESHOLD).count() as f64;
                let values = [a2, norm1(alpha), norm_inf(alpha), stats.l1, j_n, stats.l2];
                for (metric, value) in NORM_METRICS.iter().zip(values) {
                    out.push(Record {
                        study: "norms".into(),
                        mode: mode.label().into(),
                        d: 1,
                        n,
                        replicate: rep,
                        metric: (*metric).into(),
                        value,
                    });
                }
                out.push(Record {
                    study: "norms".into(),
                    mode: mode.label().into(),
                    d: 1,
                    n,
                    replicate: rep,
                    metric: "lambda".into(),
                    value: cv.selected,
                });
            }
            info!("norm study n = {n} replicate {rep} done");
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records: Vec<Record> = per_task.into_iter().flatten().collect();
    let slopes = slopes_by_mean(&records, &NORM_METRICS);
    Ok(StudyResult {
        records,
        slopes,
        summary: serde_json::Value::Null,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStudyConfig {
    pub ds: Vec<usize>,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub targets: Vec<Target>,
    /// `(target, d)` pairs to skip, e.g. to keep a desk run small.
    pub skip: Vec<(Target, usize)>,
    pub modes: Vec<Mode>,
    pub noise_sd: f64,
    pub n_test: usize,
    pub folds: usize,
    pub hagl_selection: HaglSelection,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl RateStudyConfig {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        match preset {
            Preset::Desk => Self {
                ds: vec![1, 3],
                ns: vec![100, 200, 400, 800],
                replicates: 5,
                targets: vec![Target::Linear, Target::Harmonic],
                skip: vec![(Target::Harmonic, 1)],
                modes: Mode::ALL.to_vec(),
                noise_sd: ADDITIVE_NOISE_SD,
                n_test: N_TEST,
                folds: 3,
                hagl_selection: study_selection(preset),
                seed,
                solver: study_solver(preset),
            },
            Preset::Paper => Self {
                ds: vec![3, 5, 10],
                ns: vec![400, 600, 800, 1000, 1200, 1500],
                replicates: 10,
                targets: vec![Target::Linear, Target::Harmonic],
                skip: Vec::new(),
                modes: Mode::ALL.to_vec(),
                noise_sd: ADDITIVE_NOISE_SD,
                n_test: N_TEST,
                folds: 3,
                hagl_selection: study_selection(preset),
                seed,
                solver: study_solver(preset),
            },
        }
    }
}

/// CV-fits every mode and records the noise-free test MSE against `ψ₀`.
pub fn run_rate_study(cfg: &RateStudyConfig) -> Result<StudyResult> {
    let mut tasks = Vec::new();
    for &target in &cfg.targets {
        for &d in cfg.ds.iter().filter(|&&d| !cfg.skip.contains(&(target, d))) {
            for &n in &cfg.ns {
                for rep in 0..cfg.replicates {
                    tasks.push((target, d, n, rep));
                }
            }
        }
    }
    let per_task: Vec<Vec<Record>> = tasks
        .par_iter()
        .map(|&(target, d, n, rep)| {
            let key = ((d as u64) << 40) | ((n as u64) << 20) | rep as u64;
            let seed = rng::derive_seed(cfg.seed, rng::tag(target.name()), key);
            let data = gen_additive(n, d, target, cfg.noise_sd, seed);
            let test = gen_additive(
                cfg.n_test,
                d,
                target,
                0.0,
                rng::derive_seed(seed, rng::tag("test"), 0),
            );
            let study = format!("rates_{}", target.name());
            let cvs = cv_select_modes(
                &data.x,
                &data.y,
                &cfg.modes,
                &cv_config(cfg.folds, seed, &cfg.solver, cfg.hagl_selection),
            )?;
            let mut out = Vec::new();
            for cv in &cvs {
                let mode = cv.mode;
                let pred = cv
                    .model
                    .predict_raw(&cv.fit.alpha, cv.fit.intercept, &test.x)?;
                let mse = pred
                    .iter()
                    .zip(&test.y)
                    .map(|(p, t)| (p - t).powi(2))
                    .sum::<f64>()
                    / test.y.len() as f64;
                out.push(Record {
                    study: study.clone(),
                    mode: mode.label().into(),
                    d,
                    n,
                    replicate: rep,
                    metric: "test_mse".into(),
                    value: mse,
                });
                out.push(Record {
                    study: study.clone(),
                    mode: mode.label().into(),
                    d,
                    n,
                    replicate: rep,
                    metric: "lambda".into(),
                    value: cv.selected,
                });
            }
            info!(
                "rate study {} d = {d} n = {n} replicate {rep} done",
                target.name()
            );
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records: Vec<Record> = per_task.into_iter().flatten().collect();
    let slopes = slopes_by_mean(&records, &["test_mse"]);
    Ok(StudyResult {
        records,
        slopes,
        summary: serde_json::Value::Null,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AteStudyConfig {
    pub n: usize,
    pub replicates: usize,
    pub modes: Vec<Mode>,
    pub folds: usize,
    pub hagl_selection: HaglSelection,
    pub undersmooth: bool,
    /// Select `λ_cv` and `τ` once on an initial sample and reuse them in every
    /// replication, instead of per replication.
    pub once_off: bool,
    pub steps: usize,
    pub ratio: f64,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl AteStudyConfig {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let replicates = match preset {
            Preset::Desk => 200,
            Preset::Paper => 500,
        };
        Self {
            n: 300,
            replicates,
            modes: Mode::ALL.to_vec(),
            folds: 3,
            hagl_selection: study_selection(preset),
            undersmooth: true,
            once_off: false,
            steps: UNDERSMOOTH_STEPS,
            ratio: UNDERSMOOTH_RATIO,
            seed,
            solver: study_solver(preset),
        }
    }
}

/// One row of the ATE tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteRow {
    pub mode: String,
    pub variant: String,
    pub bias: f64,
    pub true_se: f64,
    pub bias_over_se: f64,
    pub oracle_coverage: f64,
    pub mean_eic_mean: f64,
    pub mean_eic_sd: f64,
    pub mean_abs_eic_mean: f64,
    pub replicates: usize,
}

struct AteRep {
    ate: f64,
    eic_mean: f64,
    eic_sd: f64,
    lambda: f64,
}

/// CV-only and (optionally) undersmoothed estimates of one mode at `λ_cv`.
/// `tau` overrides the threshold computed from the CV fit.
fn ate_estimates(
    data: &CausalDataset,
    om: &OutcomeModel,
    mode: Mode,
    lambda_cv: f64,
    tau: Option<f64>,
    cfg: &AteStudyConfig,
) -> Result<(AteRep, Option<(AteRep, bool)>)> {
    let fit = om.fit(data, mode, lambda_cv, &cfg.solver)?;
    let rec = eic(data, &fit.mu1, &fit.mu0, lambda_cv, DEFAULT_POSITIVITY)?;
    let cv_rep = AteRep {
        ate: plugin_ate(&fit.mu1, &fit.mu0),
        eic_mean: rec.mean,
        eic_sd: rec.sd,
        lambda: lambda_cv,
    };
    let us = if cfg.undersmooth {
        let grid = undersmooth_grid(lambda_cv, cfg.steps, cfg.ratio);
        let u = undersmooth_with_tau(data, om, mode, &grid, &cfg.solver, DEFAULT_POSITIVITY, tau)?;
        let rep = AteRep {
            ate: plugin_ate(&u.fit.mu1, &u.fit.mu0),
            eic_mean: u.eic.mean,
            eic_sd: u.eic.sd,
            lambda: u.lambda,
        };
        Some((rep, u.satisfied))
    } else {
        None
    };
    Ok((cv_rep, us))
}

/// Monte Carlo of the plug-in ATE with CV-selected and undersmoothed outcome fits.
pub fn run_ate_study(cfg: &AteStudyConfig) -> Result<StudyResult> {
    let study_tag = rng::tag("ate_study");
    let cv_cfg = |seed| cv_config(cfg.folds, seed, &cfg.solver, cfg.hagl_selection);
    // Once-off protocol: λ_cv and τ per mode from an initial sample outside the replications.
    let fixed: Option<Vec<(f64, f64)>> = if cfg.once_off {
        let seed = rng::derive_seed(cfg.seed, study_tag, u64::MAX);
        let data = gen_ate(cfg.n, seed)?;
        let cvs = cv_select_modes(&data.outcome_rows(), &data.y, &cfg.modes, &cv_cfg(seed))?;
        let mut out = Vec::new();
        for cv in cvs {
            let om = OutcomeModel::from_model(&data, cv.model)?;
            let fit = om.fit(&data, cv.mode, cv.selected, &cfg.solver)?;
            let rec = eic(&data, &fit.mu1, &fit.mu0, cv.selected, DEFAULT_POSITIVITY)?;
            out.push((cv.selected, tau_threshold(rec.sd, data.n())));
        }
        Some(out)
    } else {
        None
    };

    let per_rep: Vec<Vec<Record>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = rng::derive_seed(cfg.seed, study_tag, rep as u64);
            let data = gen_ate(cfg.n, seed)?;
            let (om, choices): (OutcomeModel, Vec<(f64, Option<f64>)>) = match &fixed {
                Some(f) => (
                    OutcomeModel::new(&data, &WorkingModelConfig::default())?,
                    f.iter().map(|&(l, t)| (l, Some(t))).collect(),
                ),
                None => {
                    let mut cvs =
                        cv_select_modes(&data.outcome_rows(), &data.y, &cfg.modes, &cv_cfg(seed))?;
                    let lambdas = cvs.iter().map(|cv| (cv.selected, None)).collect();
                    (
                        OutcomeModel::from_model(&data, cvs.remove(0).model)?,
                        lambdas,
                    )
                }
            };
            let mut out = Vec::new();
            for (&mode, &(lambda_cv, tau)) in cfg.modes.iter().zip(&choices) {
                let (cv_rep, us) = ate_estimates(&data, &om, mode, lambda_cv, tau, cfg)?;
                let mut push = |metric: &str, value: f64| {
                    out.push(Record {
                        study: "ate".into(),
                        mode: mode.label().into(),
                        d: 2,
                        n: cfg.n,
                        replicate: rep,
                        metric: metric.into(),
                        value,
                    })
                };
                push("ate_cv", cv_rep.ate);
                push("eic_mean_cv", cv_rep.eic_mean);
                push("eic_sd_cv", cv_rep.eic_sd);
                push("lambda_cv", cv_rep.lambda);
                if let Some((u, ok)) = us {
                    push("ate_us", u.ate);
                    push("eic_mean_us", u.eic_mean);
                    push("eic_sd_us", u.eic_sd);
                    push("lambda_us", u.lambda);
                    push("us_satisfied", if ok { 1.0 } else { 0.0 });
                }
            }
            info!("ate replicate {rep} done");
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records: Vec<Record> = per_rep.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        for variant in ["cv", "us"] {
            if variant == "us" && !cfg.undersmooth {
                continue;
            }
            let col = |m: &str| -> Vec<f64> {
                let name = format!("{m}_{variant}");
                records
                    .iter()
                    .filter(|r| r.mode == mode.label() && r.metric == name)
                    .map(|r| r.value)
                    .collect()
            };
            rows.push(ate_row(
                mode,
                variant,
                &col("ate"),
                &col("eic_mean"),
                &col("eic_sd"),
            ));
        }
    }
    Ok(StudyResult {
        records,
        slopes: Vec::new(),
        summary: serde_json::to_value(&rows)?,
    })
}

/// Table row from replicate estimates (truth 0).
pub fn ate_row(
    mode: Mode,
    variant: &str,
    ates: &[f64],
    eic_means: &[f64],
    eic_sds: &[f64],
) -> AteRow {
    let bias = mean(ates);
    let se = sample_sd(ates);
    let covered = ates.iter().filter(|a| a.abs() <= 1.96 * se).count();
    AteRow {
        mode: mode.label().into(),
        variant: variant.into(),
        bias,
        true_se: se,
        bias_over_se: bias / se,
        oracle_coverage: covered as f64 / ates.len().max(1) as f64,
        mean_eic_mean: mean(eic_means),
        mean_eic_sd: mean(eic_sds),
        mean_abs_eic_mean: eic_means.iter().map(|v| v.abs()).sum::<f64>()
            / eic_means.len().max(1) as f64,
        replicates: ates.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_examples() {
        assert!(oscillatory_truth(0.5).abs() < 1e-14);
        assert!((Target::Linear.eval(&[1.0; 4]) - 2.0).abs() < 1e-15);
        assert!(Target::Harmonic.eval(&[0.5; 3]).abs() < 1e-15);
        assert!((ate_propensity(&[0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!((ate_outcome_mean(&[0.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_oscillatory(20, 3), gen_oscillatory(20, 3));
        assert_ne!(gen_oscillatory(20, 3), gen_oscillatory(20, 4));
        assert_eq!(
            gen_additive(10, 3, Target::Linear, 0.3, 1),
            gen_additive(10, 3, Target::Linear, 0.3, 1)
        );
        assert_eq!(gen_ate(50, 9).unwrap(), gen_ate(50, 9).unwrap());
        let z = gen_oscillatory_with(30, 0.0, 5);
        assert!(z
            .x
            .iter()
            .zip(&z.y)
            .all(|(x, y)| (oscillatory_truth(x[0]) - y).abs() < 1e-15));
    }

    #[test]
    fn slope_examples() {
        let pairs: Vec<(f64, f64)> = [100.0, 200.0, 400.0, 800.0]
            .iter()
            .map(|&n: &f64| (n, 4.0 * n.powf(-2.0 / 3.0)))
            .collect();
        let f = estimate_slope(&pairs).unwrap();
        assert!((f.slope + 2.0 / 3.0).abs() < 1e-12);
        let flat = estimate_slope(&[(10.0, 3.0), (20.0, 3.0), (40.0, 3.0)]).unwrap();
        assert!(flat.slope.abs() < 1e-14);
        let dropped =
            estimate_slope(&[(10.0, 1.0), (20.0, 2.0), (40.0, 4.0), (80.0, 0.0)]).unwrap();
        assert_eq!(dropped.dropped, 1);
        assert!(estimate_slope(&[(10.0, 1.0), (20.0, 2.0)]).is_err());
    }

    #[test]
    fn oracle_coverage_rule() {
        let row = ate_row(
            Mode::Hal,
            "cv",
            &[0.1, -0.1, 0.05, -0.05, 0.3],
            &[0.0; 5],
            &[1.0; 5],
        );
        let se = sample_sd(&[0.1, -0.1, 0.05, -0.05, 0.3]);
        let expected = [0.1f64, -0.1, 0.05, -0.05, 0.3]
            .iter()
            .filter(|a| a.abs() <= 1.96 * se)
            .count() as f64
            / 5.0;
        assert_eq!(row.oracle_coverage, expected);
    }
}
