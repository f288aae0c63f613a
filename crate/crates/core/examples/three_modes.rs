//! Ridge (HAR), lasso (HAL) and generalized lasso (HAGL) on one working model,
//! at a single regularization value.
//!
//! `cargo run --example three_modes`

use pcha::experiments::{gen_oscillatory, oscillatory_truth};
use pcha::solver::fit_mode;
use pcha::{LossKind, Mode, PCWorkingModel, Result, RiskState, SolverConfig, WorkingModelConfig};

fn main() -> Result<()> {
    let train = gen_oscillatory(200, 3);
    let model = PCWorkingModel::from_raw(&train.x, &WorkingModelConfig::default())?;
    let state = RiskState::new(
        model.design(),
        model.singular_values(),
        &train.y,
        LossKind::Mse,
    )?;
    let grid: Vec<Vec<f64>> = (1..=500).map(|i| vec![i as f64 / 500.0]).collect();

    println!(
        "{:<7} {:>10} {:>10} {:>10} {:>12}",
        "mode", "risk", "‖α‖₂", "‖β‖₁", "truth MSE"
    );
    for mode in Mode::ALL {
        let fit = fit_mode(&state, &model, mode, 1e-3, &SolverConfig::default())?;
        let pred = model.predict_raw(&fit.alpha, fit.intercept, &grid)?;
        let mse = grid
            .iter()
            .zip(&pred)
            .map(|(x, p)| (p - oscillatory_truth(x[0])).powi(2))
            .sum::<f64>()
            / grid.len() as f64;
        let a2 = fit.alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        println!(
            "{:<7} {:>10.4} {:>10.4} {:>10.3} {:>12.4}",
            mode.label(),
            fit.diagnostics.final_risk,
            a2,
            model.beta_stats(&fit.alpha).l1,
            mse
        );
    }
    Ok(())
}
