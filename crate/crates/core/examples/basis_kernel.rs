//! The indicator basis is never built: the kernel `K = H Hᵀ` counts shared
//! basis functions exactly, in integers.
//!
//! `cargo run --example basis_kernel`

use pcha::basis::{build_kernel_matrix, design_matrix, BasisSpec};
use pcha::{CovariateMatrix, Result};

fn main() -> Result<()> {
    let x = CovariateMatrix::from_rows(&[vec![0.1, 0.7], vec![0.4, 0.2], vec![0.9, 0.5]])?;
    let spec = BasisSpec::new(x.clone());
    let k = build_kernel_matrix(&spec, &x)?;
    println!(
        "n = {}, d = {}, basis size N = n(2^d − 1) = {}",
        x.n(),
        x.d(),
        x.n() * 3
    );
    println!("K:");
    for i in 0..x.n() {
        println!("  {:?}", k.row(i));
    }

    // The same numbers from the materialized design, feasible only at toy sizes.
    let h = design_matrix(&spec, &x)?;
    let shared = |i: usize, j: usize| {
        h[i].iter()
            .zip(&h[j])
            .filter(|(a, b)| **a * **b != 0.0)
            .count()
    };
    println!(
        "basis functions active at both x₀ and x₂: {} (K₀₂ = {})",
        shared(0, 2),
        k.get(0, 2)
    );
    Ok(())
}
