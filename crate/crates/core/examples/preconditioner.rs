//! Block preconditioner: fitted constants, exponential-sum inverse and its
//! accuracy on the discrete spectrum.

use lrmp::assembly::{assemble, ProblemSetup};
use lrmp::geometry::thick_square;
use lrmp::precond::{compute_constants, InverseKind, PrecondBlock};

fn main() -> lrmp::Result<()> {
    let sys = assemble(&thick_square(), &ProblemSetup::elasticity(3, 8))?;
    for eps in [0.1, 1e-2, 1e-4] {
        let b = PrecondBlock::new(&sys, 0, 0, InverseKind::ExpSum { eps_prec: eps })?;
        let e = b.exp_sum.as_ref().expect("exponential sum");
        let spec = b.spectrum();
        let (lo, hi) = spec.iter().fold((f64::INFINITY, 0.0f64), |(a, c), &x| (a.min(x), c.max(x)));
        println!(
            "eps_prec {eps:.0e}: {} terms for condition {:.2e}, max |1 - λ s(λ)| on the spectrum = {:.3e}",
            e.terms(),
            hi / lo,
            e.max_error(&spec)
        );
    }
    for k in 0..3 {
        println!("subdomain 0, component {k}: constants {:.4?}", compute_constants(&sys, 0, k)?);
    }
    let small = assemble(&thick_square(), &ProblemSetup::elasticity(2, 2))?;
    let b = PrecondBlock::new(&small, 0, 0, InverseKind::ExpSum { eps_prec: 0.1 })?;
    println!("p=2 n_el=2: ‖I - P̃⁻¹P‖ in the P-norm = {:.4}", b.energy_error(usize::MAX)?);
    Ok(())
}
