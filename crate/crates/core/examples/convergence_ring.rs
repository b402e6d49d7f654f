//! Manufactured Poisson problem on the thick ring: errors and orders.
//!
//! `cargo run --release --example convergence_ring -- [degree] [levels...]`

use lrmp::assembly::assemble;
use lrmp::precond::{InverseKind, Preconditioner};
use lrmp::solver::{tpcg, SolverParams};
use lrmp::verify::{empirical_orders, ring_poisson, solution_errors, ConvergenceRow};

fn main() -> lrmp::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let p = args.first().copied().unwrap_or(2);
    let levels: Vec<u32> = if args.len() > 1 { args[1..].iter().map(|&l| l as u32).collect() } else { vec![1, 2, 3] };
    let mut rows = Vec::new();
    for lv in levels {
        let n = 1usize << lv;
        let (domain, setup, exact) = ring_poisson(p, n);
        let sys = assemble(&domain, &setup)?;
        let prec = Preconditioner::build(&sys, InverseKind::ExpSum { eps_prec: 0.1 })?;
        let params = SolverParams { tol: 1e-10, gamma: 1e-13, ..SolverParams::default() };
        let (u, rep) = tpcg(&sys, &prec, &params, None, |l| {
            if l.iter % 10 == 0 {
                println!("  {:4} residual {:.3e} eps {:.1e} rank {}", l.iter, l.residual, l.eps, l.max_rank_u)
            }
        })?;
        let (l2, h1) = solution_errors(&sys, &u, &exact)?;
        println!("p={p} n_el={n}: {} iterations, L2 {l2:.3e}, H1 {h1:.3e}", rep.iterations);
        rows.push(ConvergenceRow { degree: p, level: lv, n_el: n, iterations: rep.iterations, l2, h1 });
    }
    for (p, l, a, b) in empirical_orders(&rows) {
        println!("p={p} level {l}: L2 order {a:.2}, H1 order {b:.2}");
    }
    Ok(())
}
