//! A scaled-down rate study: test MSE of CV-selected fits against n, as
//! log-log slopes per mode.
//!
//! `cargo run --release --example rate_study`

use pcha::experiments::{run_rate_study, Preset, RateStudyConfig, Target};
use pcha::{Mode, Result};

fn main() -> Result<()> {
    let cfg = RateStudyConfig {
        ds: vec![2],
        ns: vec![50, 100, 200],
        replicates: 2,
        targets: vec![Target::Linear],
        skip: Vec::new(),
        n_test: 200,
        ..RateStudyConfig::preset(Preset::Desk, 1)
    };
    let res = run_rate_study(&cfg)?;
    for mode in Mode::ALL {
        if let Some(s) = res.slope("rates_linear", mode, 2, "test_mse") {
            println!("{:<7} test-MSE slope {s:+.3}", mode.label());
        }
    }
    Ok(())
}
