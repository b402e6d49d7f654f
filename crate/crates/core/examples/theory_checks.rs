//! Matrix error, coefficient bound, kernel and range checks.
//!
//! `cargo run --release --example theory_checks -- [n_el ...]`

use lrmp::assembly::ProblemSetup;
use lrmp::geometry::{builtin_domain, thick_ring, BUILTIN_DOMAINS};
use lrmp::verify::{kernel_check, matrix_error_check};

fn main() -> lrmp::Result<()> {
    let levels: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let levels = if levels.is_empty() { vec![8] } else { levels };
    for n in levels {
        let r = matrix_error_check(&thick_ring(), &ProblemSetup::elasticity(3, n))?;
        println!("thick_ring p=3 n_el={n}: ‖A-Ã‖/‖A‖ = {:.2e}, ζ = {:.2e}", r.rel_error, r.zeta);
    }
    for name in BUILTIN_DOMAINS {
        let d = builtin_domain(name)?;
        let r = matrix_error_check(&d, &ProblemSetup::scalar(2, 2))?;
        println!(
            "{name:12} scalar p=2 n_el=2: error {:.2e}, bound 9ζ/λ_min = {:.2e} (ζ {:.1e}, λ_min {:.2e})",
            r.rel_error, r.bound, r.zeta, r.lambda_min
        );
        let k = kernel_check(&d, &ProblemSetup::elasticity(2, 2))?;
        println!(
            "{name:12} elasticity p=2 n_el=2: dim ker A = {}, dim ker Ã = {}, range residual {:.1e}",
            k.kernel_dim_exact.unwrap_or(0),
            k.kernel_dim_approx.unwrap_or(0),
            k.range_residual.unwrap_or(0.0)
        );
    }
    Ok(())
}
