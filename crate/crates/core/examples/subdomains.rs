//! Builtin multipatch domains, their overlapping subdomains and the
//! dimensions of the merged tensor-product spaces.

use lrmp::geometry::{builtin_domain, Discretization, BUILTIN_DOMAINS};

fn main() -> lrmp::Result<()> {
    let disc = Discretization { degree: 3, n_el: 8 };
    for name in BUILTIN_DOMAINS {
        let d = builtin_domain(name)?;
        d.validate()?;
        let subs = d.subdomains()?;
        println!("{name}: {} patches, {} subdomains", d.npatches(), subs.len());
        for (i, s) in subs.iter().enumerate() {
            let sp = s.space(&disc);
            println!("  Θ{i}: patches {:?}, box {:?}, space {:?} ({} dofs per component)", s.patches(), s.pbox.ext, sp.dims(), sp.ndof());
        }
    }
    Ok(())
}
