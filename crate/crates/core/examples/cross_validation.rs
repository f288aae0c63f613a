//! V-fold selection of the regularization value for all three modes, sharing
//! the fold working models, then test error on fresh data.
//!
//! `cargo run --release --example cross_validation`

use pcha::cv::{cv_select_modes, CvConfig, HaglSelection};
use pcha::experiments::{gen_additive, Target};
use pcha::{Mode, Result};

fn main() -> Result<()> {
    let train = gen_additive(200, 2, Target::Linear, 0.3, 1);
    let test = gen_additive(500, 2, Target::Linear, 0.0, 2);
    let cfg = CvConfig {
        folds: 5,
        seed: 9,
        hagl_selection: HaglSelection::WarmStart,
        ..CvConfig::default()
    };
    for res in cv_select_modes(&train.x, &train.y, &Mode::ALL, &cfg)? {
        let pred = res
            .model
            .predict_raw(&res.fit.alpha, res.fit.intercept, &test.x)?;
        let mse = pred
            .iter()
            .zip(&test.y)
            .map(|(p, y)| (p - y).powi(2))
            .sum::<f64>()
            / test.y.len() as f64;
        println!(
            "{:<7} λ = {:.3e} (grid index {}), test MSE against the truth {:.5}",
            res.mode.label(),
            res.selected,
            res.selected_index,
            mse
        );
    }
    Ok(())
}
