//! Solve the L-shape elasticity problem with truncated PCG.
//!
//! `cargo run --release --example solve_lshape -- [degree] [n_el]`

use lrmp::assembly::{assemble, ProblemSetup};
use lrmp::geometry::lshape;
use lrmp::precond::{InverseKind, Preconditioner};
use lrmp::solver::{tpcg, SolverParams};

fn main() -> lrmp::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let p = args.first().copied().unwrap_or(2);
    let n = args.get(1).copied().unwrap_or(8);
    let sys = assemble(&lshape(), &ProblemSetup::elasticity(p, n))?;
    println!("degree {p}, {n} elements, {} unknowns, assembly {:.2}s", sys.ndof(), sys.timings.total());
    let prec = Preconditioner::build(&sys, InverseKind::ExpSum { eps_prec: 0.1 })?;
    println!("preconditioner: up to {} exponential terms, error {:.3}", prec.max_terms(), prec.max_exp_error());
    let (_, rep) = tpcg(&sys, &prec, &SolverParams::default(), None, |l| {
        println!("{:4} residual {:.3e} eps {:.1e} rank u {:3} rank p {:3}", l.iter, l.residual, l.eps, l.max_rank_u, l.max_rank_p)
    })?;
    println!(
        "converged {} after {} iterations, max rank {}, memory {:.2}% ({:.2}% with cores), {:.2}s",
        rep.converged, rep.iterations, rep.max_rank, rep.memory.percent, rep.memory.percent_full, rep.seconds
    );
    Ok(())
}
