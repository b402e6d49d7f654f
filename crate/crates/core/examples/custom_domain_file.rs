//! Describe a domain in a text file, then solve on it.
//!
//! `cargo run --release --example custom_domain_file -- [path]` reads the
//! file if given, otherwise uses the two-block bar below.

use lrmp::bench::{run, DomainSource, RunConfig};
use lrmp::geometry::{parse_domain, write_domain, Mode};

const BAR: &str = "\
name = bar
patch
  box = 0 0 0 1 1 1
  bc = D N N N N N      # clamped at x = 0
  young = 1
  poisson = 0.3
end
patch
  box = 1 0 0 2 1 1
  bc = N N N N N N
  young = 2
  poisson = 0.3
end
glue = 0 1 1            # patch 0's upper x face is patch 1's lower x face
";

fn main() -> lrmp::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("bar.domain");
            std::fs::write(&p, BAR)?;
            p
        }
    };
    let d = parse_domain(&std::fs::read_to_string(&path)?)?;
    println!("{}: {} patches, {} subdomains", d.name, d.npatches(), d.subdomains()?.len());
    println!("round trip:\n{}", write_domain(&d));
    let cfg = RunConfig { domain: DomainSource::File(path), mode: Mode::Elasticity, degree: 2, level: 3, force: Some([0.0, 0.0, -1.0]), ..RunConfig::default() };
    let o = run(&cfg)?;
    println!("{} unknowns, {} iterations, max rank {}, memory {:.1}%", o.ndof, o.report.iterations, o.report.max_rank, o.report.memory.percent);
    Ok(())
}
