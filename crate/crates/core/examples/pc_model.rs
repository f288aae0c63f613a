//! The PC working model: `K = U D² Uᵀ`, design `Z = U D`, and basis
//! coefficients `β = Hᵀ U D⁻¹ α` summarized without materializing `H`.
//!
//! `cargo run --example pc_model`

use pcha::experiments::gen_additive;
use pcha::experiments::Target;
use pcha::{PCWorkingModel, Result, WorkingModelConfig};

fn main() -> Result<()> {
    let data = gen_additive(60, 2, Target::Harmonic, 0.3, 7);
    let model = PCWorkingModel::from_raw(&data.x, &WorkingModelConfig::default())?;
    let d = model.singular_values();
    println!("n = {}, rank r = {}", model.n(), model.rank());
    println!(
        "largest and smallest singular values: {:.3} / {:.3e}",
        d[0],
        d[d.len() - 1]
    );

    // Any α in PC coordinates maps to a basis-coefficient vector with ‖β‖₂ = ‖α‖₂.
    let alpha: Vec<f64> = (0..model.rank()).map(|m| 1.0 / (1.0 + m as f64)).collect();
    let stats = model.beta_stats(&alpha);
    let a2 = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    println!(
        "‖α‖₂ = {a2:.6}, ‖β‖₂ = {:.6}, ‖β‖₁ = {:.6}",
        stats.l2, stats.l1
    );

    let fitted = model.predict_raw(&alpha, 0.0, &data.x[..3])?;
    println!("f(x) at the first three training points: {fitted:.4?}");
    Ok(())
}
