//! Assemble the L-shape elasticity system in Tucker format and compare it
//! with a patchwise reference assembly.

use lrmp::assembly::{assemble, reference_dense, CoefficientSource, ProblemSetup};
use lrmp::geometry::{lshape, thick_ring};

fn main() -> lrmp::Result<()> {
    let sys = assemble(&lshape(), &ProblemSetup::elasticity(3, 16))?;
    println!("L-shape p=3 n_el=16: {} subdomains, {} unknowns", sys.nsub(), sys.ndof());
    let mut seen = std::collections::BTreeMap::new();
    for (i, j, k, l, r) in sys.rank_report() {
        let kind = if i == j { "diagonal" } else { "off-diagonal" };
        seen.entry((kind, r)).or_insert((i, j, k, l));
    }
    for ((kind, r), (i, j, k, l)) in &seen {
        println!("  {kind:12} block rank {r:?} (first at subdomains {i},{j}, components {k},{l})");
    }
    println!(
        "  matrix storage {} reals, timings: coefficients {:.2}s, matrix {:.2}s, rhs {:.2}s",
        sys.matrix_storage(),
        sys.timings.coefficients,
        sys.timings.matrix,
        sys.timings.rhs
    );

    for (name, d) in [("L-shape", lshape()), ("thick ring", thick_ring())] {
        let small = assemble(&d, &ProblemSetup::elasticity(2, 2))?;
        let (a, f) = reference_dense(&small, CoefficientSource::Exact)?;
        let at = small.densify(usize::MAX)?;
        let ft = small.rhs_dense()?;
        println!(
            "{name} p=2 n_el=2: ‖Ã - A‖/‖A‖ = {:.1e}, ‖f̃ - f‖/‖f‖ = {:.1e}",
            (&at - &a).norm() / a.norm(),
            (&ft - &f).norm() / f.norm()
        );
    }
    Ok(())
}
