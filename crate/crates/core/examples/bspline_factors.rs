//! Univariate B-spline spaces, merged subdomain knots and the 1D factors
//! behind every Kronecker term.

use lrmp::splines::{mass_matrix, stiffness_matrix, KnotVector};

fn main() -> lrmp::Result<()> {
    let p = 3;
    let kv = KnotVector::uniform_open(p, 4)?;
    println!("degree {p}, 4 elements: knots {:?}, dimension {}", kv.knots(), kv.dim());
    let x = 0.3;
    let (first, vals, ders) = kv.eval(x)?;
    println!("at x = {x}: functions {first}..{} are active", first + vals.len() - 1);
    println!("  values {vals:.4?} (sum {:.15})", vals.iter().sum::<f64>());
    println!("  derivatives {ders:.4?} (sum {:.1e})", ders.iter().sum::<f64>());

    // Two patches glued at a face give a C^0 space on [0, 1]: the junction
    // knot 1/2 has multiplicity p.
    let merged = KnotVector::merge(&kv, &kv)?;
    println!("merged knots {:?}, dimension {} = 2·{} - 1", merged.knots(), merged.dim(), kv.dim());

    let m = mass_matrix(&kv);
    let k = stiffness_matrix(&kv);
    println!("mass: total {:.6} (= 1), stiffness row sums max {:.1e} (constants are in the kernel)", m.sum(), k.row_sum().amax());
    println!("greville abscissae {:.4?}", kv.greville());
    Ok(())
}
