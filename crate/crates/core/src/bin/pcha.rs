use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;

use pcha::causal::{eic, plugin_ate, CausalDataset, OutcomeModel, DEFAULT_POSITIVITY};
use pcha::cv::{cv_select, CvConfig};
use pcha::experiments::{
    estimate_slope, run_ate_study, run_norm_study, run_rate_study, AteStudyConfig, NormStudyConfig,
    Preset, RateStudyConfig, StudyResult,
};
use pcha::io::{
    beta_csv, loglog_svg, predictions_csv, read_table, records_csv, FitSummary, StudyReport,
};
use pcha::loss::recode_labels;
use pcha::{LossKind, Mode, PchaError, Result, SolverConfig, WorkingModelConfig};

#[derive(Parser)]
#[command(
    name = "pcha",
    version,
    about = "Principal-component highly adaptive regression"
)]
struct Cli {
    /// Worker threads (falls back to PCHA_THREADS, then all cores).
    #[arg(long, global = true, env = "PCHA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator with cross-validated regularization.
    Fit(FitArgs),
    /// Run a simulation study.
    Study(StudyArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV with a header row.
    train: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    /// Binary treatment column; appended last among the covariates and used for a plug-in ATE.
    #[arg(long)]
    treatment: Option<String>,
    /// Known propensity column; enables the efficient influence curve summary.
    #[arg(long, requires = "treatment")]
    propensity: Option<String>,
    #[arg(long, default_value = "hagl")]
    mode: Mode,
    #[arg(long, default_value = "mse")]
    loss: LossKind,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated regularization grid (default: data-driven).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Cap on the interaction order of the basis.
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long, default_value = "summary.json")]
    summary: PathBuf,
    /// Test CSV with the training covariate columns; writes predictions.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value = "predictions.csv")]
    predictions: PathBuf,
    /// Writes every basis coefficient β(α) to this CSV (small bases only).
    #[arg(long)]
    emit_beta: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    Norms,
    Rates,
    Ate,
}

#[derive(Args)]
struct StudyArgs {
    study: StudyKind,
    /// desk or paper
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON file with a full study configuration; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// ATE only: select λ and τ once on an initial sample.
    #[arg(long)]
    once_off: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write a log-log SVG of the slope data.
    #[arg(long)]
    svg: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Fit(a) => run_fit(&a),
        Command::Study(a) => run_study(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| {
        PchaError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let table = read_table(&a.train)?;
    let yi = table.column_index(&a.response)?;
    let ti = a
        .treatment
        .as_deref()
        .map(|t| table.column_index(t))
        .transpose()?;
    let pi = a
        .propensity
        .as_deref()
        .map(|p| table.column_index(p))
        .transpose()?;
    let skip: Vec<usize> = [Some(yi), ti, pi].into_iter().flatten().collect();
    let mut x = table.rows_without(&skip);
    let mut names = table.names_without(&skip);
    if x[0].is_empty() && ti.is_none() {
        return Err(PchaError::Config(
            "no covariate columns left after removing the response".into(),
        ));
    }
    if let Some(t) = ti {
        x.iter_mut()
            .zip(&table.rows)
            .for_each(|(row, src)| row.push(src[t]));
        names.push(table.header[t].clone());
    }
    let mut y = table.column(yi);
    if a.loss == LossKind::Logistic {
        y = recode_labels(&y)?;
    }
    let working_model = WorkingModelConfig {
        max_degree: a.max_degree,
        ..WorkingModelConfig::default()
    };
    let cfg = CvConfig {
        folds: a.folds,
        grid: a.grid.clone(),
        seed: a.seed,
        kind: a.loss,
        solver: SolverConfig::default(),
        working_model,
        ..CvConfig::default()
    };
    let cv = cv_select(&x, &y, a.mode, &cfg)?;
    let mut summary = FitSummary::new(
        &cv.model,
        &cv.fit,
        cv.selected,
        names,
        a.response.clone(),
        cv.plan.grid.clone(),
        cv.mean_risk.clone(),
    );

    if let Some(t) = ti {
        let w: Vec<Vec<f64>> = x.iter().map(|r| r[..r.len() - 1].to_vec()).collect();
        let treat = table.column(t);
        let pi1 = pi.map_or_else(|| vec![0.5; y.len()], |p| table.column(p));
        let data = CausalDataset::new(w, treat, y.clone(), pi1, DEFAULT_POSITIVITY)?;
        let om = OutcomeModel::from_model(&data, cv.model.clone())?;
        let of = om.fit(&data, a.mode, cv.selected, &cfg.solver)?;
        let mut ate = BTreeMap::from([("plugin".to_string(), plugin_ate(&of.mu1, &of.mu0))]);
        if pi.is_some() {
            let rec = eic(&data, &of.mu1, &of.mu0, cv.selected, DEFAULT_POSITIVITY)?;
            ate.insert("eic_mean".into(), rec.mean);
            ate.insert("eic_sd".into(), rec.sd);
        }
        summary.ate = Some(ate);
    }
    if let Some(w) = &summary.warning {
        warn!("{w}");
    }
    write(
        &a.summary,
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;

    if let Some(test_path) = &a.test {
        let test = read_table(test_path)?;
        let idx: Vec<usize> = summary
            .covariates
            .iter()
            .map(|c| test.column_index(c))
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = test
            .rows
            .iter()
            .map(|r| idx.iter().map(|&j| r[j]).collect())
            .collect();
        let pred = cv
            .model
            .predict_raw(&cv.fit.alpha, cv.fit.intercept, &rows)?;
        write(&a.predictions, &predictions_csv(&pred))?;
    }
    if let Some(path) = &a.emit_beta {
        write(path, &beta_csv(&cv.model, &cv.fit.alpha)?)?;
    }
    println!(
        "{}: selected {:.6e}, ‖β‖₁ = {:.6}, Jₙ = {}, training risk {:.6e}",
        a.mode,
        summary.selected_regularization,
        summary.beta_l1,
        summary.j_n,
        summary.training_risk
    );
    Ok(())
}

fn load_config<C: serde::de::DeserializeOwned>(path: &Path) -> Result<C> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| PchaError::Config(format!("{}: {e}", path.display())))
}

fn run_study(a: &StudyArgs) -> Result<()> {
    let preset: Preset = a.preset.parse()?;
    std::fs::create_dir_all(&a.out)?;
    match a.study {
        StudyKind::Norms => {
            let mut cfg = match &a.config {
                Some(p) => load_config(p)?,
                None => NormStudyConfig::preset(preset, a.seed),
            };
            if let Some(r) = a.replicates {
                cfg.replicates = r;
            }
            let res = run_norm_study(&cfg)?;
            emit(
                a,
                "norms",
                &cfg,
                cfg.seed,
                &res,
                &["alpha_l1", "alpha_l2", "beta_l1"],
            )
        }
        StudyKind::Rates => {
            let mut cfg = match &a.config {
                Some(p) => load_config(p)?,
                None => RateStudyConfig::preset(preset, a.seed),
            };
            if let Some(r) = a.replicates {
                cfg.replicates = r;
            }
            let res = run_rate_study(&cfg)?;
            emit(a, "rates", &cfg, cfg.seed, &res, &["test_mse"])
        }
        StudyKind::Ate => {
            let mut cfg = match &a.config {
                Some(p) => load_config(p)?,
                None => AteStudyConfig::preset(preset, a.seed),
            };
            if let Some(r) = a.replicates {
                cfg.replicates = r;
            }
            cfg.once_off |= a.once_off;
            let res = run_ate_study(&cfg)?;
            emit(a, "ate", &cfg, cfg.seed, &res, &[])
        }
    }
}

fn emit<C: Serialize>(
    a: &StudyArgs,
    study: &str,
    cfg: &C,
    seed: u64,
    res: &StudyResult,
    plotted: &[&str],
) -> Result<()> {
    write(
        &a.out.join(format!("{study}.csv")),
        &records_csv(&res.records)?,
    )?;
    let report = StudyReport {
        study,
        preset: &a.preset,
        master_seed: seed,
        config: cfg,
        slopes: &res.slopes,
        summary: &res.summary,
    };
    write(
        &a.out.join(format!("{study}.json")),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    for s in &res.slopes {
        println!(
            "{:<16} {:<7} d={:<3} {:<10} slope {:+.3} (se {:.3})",
            s.study, s.mode, s.d, s.metric, s.fit.slope, s.fit.stderr
        );
    }
    if let Some(rows) = res.summary.as_array() {
        println!(
            "{:<7} {:<8} {:>8} {:>8} {:>8} {:>9} {:>9} {:>8}",
            "mode", "variant", "bias", "se", "bias/se", "coverage", "eic_mean", "eic_sd"
        );
        for r in rows {
            let f = |k: &str| r[k].as_f64().unwrap_or(f64::NAN);
            println!(
                "{:<7} {:<8} {:>8.4} {:>8.4} {:>8.3} {:>8.1}% {:>9.4} {:>8.3}",
                r["mode"].as_str().unwrap_or(""),
                r["variant"].as_str().unwrap_or(""),
                f("bias"),
                f("true_se"),
                f("bias_over_se"),
                100.0 * f("oracle_coverage"),
                f("mean_eic_mean"),
                f("mean_eic_sd")
            );
        }
    }
    if a.svg && !plotted.is_empty() {
        let mut series = Vec::new();
        for s in res
            .slopes
            .iter()
            .filter(|s| plotted.contains(&s.metric.as_str()))
        {
            let mut ns: Vec<usize> = res
                .records
                .iter()
                .filter(|r| {
                    r.study == s.study && r.mode == s.mode && r.d == s.d && r.metric == s.metric
                })
                .map(|r| r.n)
                .collect();
            ns.sort_unstable();
            ns.dedup();
            let points: Vec<(f64, f64)> = ns
                .iter()
                .map(|&n| {
                    let v: Vec<f64> = res
                        .records
                        .iter()
                        .filter(|r| {
                            r.study == s.study
                                && r.mode == s.mode
                                && r.d == s.d
                                && r.metric == s.metric
                                && r.n == n
                        })
                        .map(|r| r.value)
                        .collect();
                    (n as f64, v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect();
            let line = estimate_slope(&points).ok().map(|f| (f.slope, f.intercept));
            series.push((
                format!("{} {} d={} {}", s.study, s.mode, s.d, s.metric),
                points,
                line,
            ));
        }
        write(
            &a.out.join(format!("{study}.svg")),
            &loglog_svg(study, &series),
        )?;
    }
    Ok(())
}
