//! HAGL in two steps: a ridge warm start fixes `C = ‖β(α_HAR)‖₁`, then the
//! risk is minimized on `{‖β(α)‖₁ = C}`. Both descent methods land on the same
//! constrained optimum.
//!
//! `cargo run --example hagl_constrained`

use pcha::experiments::{gen_additive, Target};
use pcha::solver::{fit_hagl, warm_start_hagl};
use pcha::{
    HaglMethod, LossKind, PCWorkingModel, Result, RiskState, SolverConfig, WorkingModelConfig,
};

fn main() -> Result<()> {
    let data = gen_additive(80, 2, Target::Harmonic, 0.3, 5);
    let model = PCWorkingModel::from_raw(&data.x, &WorkingModelConfig::default())?;
    let state = RiskState::new(
        model.design(),
        model.singular_values(),
        &data.y,
        LossKind::Mse,
    )?;
    let base = SolverConfig::default();
    let (c, start) = warm_start_hagl(&state, &model, 0.01, &base)?;
    println!("C = {c:.4}, warm-start risk {:.5}", state.risk(&start));

    for method in [HaglMethod::SteepestDescent, HaglMethod::Preconditioned] {
        let fit = fit_hagl(
            &state,
            &model,
            c,
            &start,
            &SolverConfig {
                hagl_method: method,
                ..base
            },
        )?;
        let d = &fit.diagnostics;
        println!(
            "{method:?}: risk {:.6} after {} iterations, constraint residual {:.1e}, zeros pinned {:?}",
            d.final_risk,
            d.iterations,
            d.constraint_residual.unwrap_or(f64::NAN),
            d.pinned_zeros
        );
    }
    Ok(())
}
