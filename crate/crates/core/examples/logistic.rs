//! Classification with the logistic loss on {−1, +1} labels.
//!
//! `cargo run --example logistic`

use pcha::experiments::{gen_additive, Target};
use pcha::loss::recode_labels;
use pcha::solver::fit_mode;
use pcha::{LossKind, Mode, PCWorkingModel, Result, RiskState, SolverConfig, WorkingModelConfig};

fn main() -> Result<()> {
    let data = gen_additive(120, 2, Target::Harmonic, 0.3, 2);
    let labels: Vec<f64> = data
        .y
        .iter()
        .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let y = recode_labels(&labels)?;
    let model = PCWorkingModel::from_raw(&data.x, &WorkingModelConfig::default())?;
    let state = RiskState::new(
        model.design(),
        model.singular_values(),
        &y,
        LossKind::Logistic,
    )?;
    for mode in Mode::ALL {
        let fit = fit_mode(&state, &model, mode, 0.005, &SolverConfig::default())?;
        let scores = model.predict_raw(&fit.alpha, fit.intercept, &data.x)?;
        let acc = scores
            .iter()
            .zip(&y)
            .filter(|(s, y)| s.signum() == **y)
            .count() as f64
            / y.len() as f64;
        println!(
            "{:<7} training log-loss {:.4}, accuracy {:.1}%",
            mode.label(),
            fit.diagnostics.final_risk,
            100.0 * acc
        );
    }
    Ok(())
}
