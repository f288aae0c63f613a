//! A scaled-down norm study: how ‖α‖ and ‖β‖₁ of the CV-selected fits grow
//! with n on the oscillatory target, summarized as log-log slopes.
//!
//! `cargo run --release --example norm_study`

use pcha::experiments::{run_norm_study, NormStudyConfig, Preset};
use pcha::{Mode, Result};

fn main() -> Result<()> {
    let cfg = NormStudyConfig {
        ns: vec![50, 100, 200],
        replicates: 2,
        ..NormStudyConfig::preset(Preset::Desk, 1)
    };
    let res = run_norm_study(&cfg)?;
    for mode in Mode::ALL {
        for metric in ["alpha_l1", "alpha_l2", "beta_l1"] {
            // Slopes need three sizes with positive values; an all-zero lasso fit drops out.
            match res.slope("norms", mode, 1, metric) {
                Some(s) => println!("{:<7} {metric:<9} slope {s:+.3}", mode.label()),
                None => println!("{:<7} {metric:<9} slope n/a", mode.label()),
            }
        }
    }
    Ok(())
}
