//! Truncated preconditioned conjugate gradient on the block system.

use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::BlockSystem;
use crate::error::{Error, Result};
use crate::precond::Preconditioner;
use crate::tucker::{truncate_dynamic, BlockVector, LazySum};

/// When the iteration stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    /// `‖r_k‖ <= tol`.
    Absolute,
    /// `‖r_k‖ <= tol · ‖f̃‖`.
    Relative,
}

impl std::str::FromStr for StopRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" | "abs" => Ok(StopRule::Absolute),
            "relative" | "rel" => Ok(StopRule::Relative),
            _ => Err(Error::Config(format!("unknown stopping rule `{s}`"))),
        }
    }
}

/// Parameters of the iteration.
#[derive(Clone, Debug)]
pub struct SolverParams {
    pub tol: f64,
    /// Scale of the residual-adaptive truncation tolerance `η_k`.
    pub beta: f64,
    /// Intermediate truncation inside the block matvec.
    pub gamma: f64,
    /// Acceptance band of the dynamic truncation.
    pub delta: f64,
    /// Reduction factor of the dynamic truncation.
    pub alpha: f64,
    /// First dynamic tolerance.
    pub eps0: f64,
    /// Smallest dynamic tolerance; `None` means `tol · ‖f̃‖ / 10`.
    pub eps_min: Option<f64>,
    pub max_iter: usize,
    pub stop: StopRule,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            tol: 1e-6,
            beta: 1e-1,
            gamma: 1e-8,
            delta: 1e-3,
            alpha: 0.5,
            eps0: 1e-1,
            eps_min: None,
            max_iter: 500,
            stop: StopRule::Relative,
        }
    }
}

impl SolverParams {
    /// All truncations switched off.
    pub fn exact(tol: f64) -> SolverParams {
        SolverParams { tol, beta: 0.0, gamma: 0.0, eps0: 0.0, eps_min: Some(0.0), ..SolverParams::default() }
    }
}

/// One line of the iteration log.
#[derive(Clone, Debug)]
pub struct IterationLog {
    pub iter: usize,
    pub residual: f64,
    /// Accepted dynamic truncation tolerance for `u_{k+1}`.
    pub eps: f64,
    pub attempts: usize,
    pub omega: f64,
    pub eta: f64,
    pub max_rank_u: usize,
    pub max_rank_p: usize,
    pub seconds: f64,
}

/// Outcome of a solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub residual0: f64,
    pub final_residual: f64,
    pub rhs_norm: f64,
    pub history: Vec<IterationLog>,
    /// Ranks of every solution block, in block order `(i, k)`.
    pub ranks: Vec<[usize; 3]>,
    pub max_rank: usize,
    pub memory: Memory,
    pub seconds: f64,
}

/// Storage of a block vector relative to the full representation.
#[derive(Clone, Copy, Debug)]
pub struct Memory {
    /// Factor storage over `Σ_j Π_d n_sub,d` (one scalar field per subdomain), in percent.
    pub percent: f64,
    /// Factors and cores over all unknowns of all components, in percent.
    pub percent_full: f64,
}

/// Memory measures of a block vector with `ncomp` components per subdomain.
pub fn memory_percent(u: &BlockVector, ncomp: usize) -> Memory {
    let mut num = 0usize;
    let mut num_full = 0usize;
    let mut ndof = 0usize;
    let mut ntot = 0usize;
    for (b, v) in u.blocks.iter().enumerate() {
        let n = v.dims();
        let r = v.ranks();
        num += (0..3).map(|d| r[d] * n[d]).sum::<usize>();
        num_full += v.storage();
        let len = n.iter().product::<usize>();
        if b % ncomp == 0 {
            ndof += len;
        }
        ntot += len;
    }
    Memory { percent: 100.0 * num as f64 / ndof as f64, percent_full: 100.0 * num_full as f64 / ntot as f64 }
}

/// `ỹ ≈ Ã x - b`, accumulated block by block with truncation at `gamma`
/// after every product and a final truncation at `eta`.
pub fn matvec_blocks(sys: &BlockSystem, x: &BlockVector, b: Option<&BlockVector>, gamma: f64, eta: f64) -> BlockVector {
    let dims = sys.block_dims();
    let blocks = (0..sys.nblocks())
        .into_par_iter()
        .map(|r| {
            let mut y = match b {
                Some(b) => b.blocks[r].scaled(-1.0),
                None => crate::tucker::TuckerVector::zeros(dims[r]),
            };
            for (c, a) in sys.blocks[r].iter().enumerate() {
                if let Some(a) = a {
                    let mut s = LazySum::new(dims[r]);
                    s.push(1.0, &y);
                    s.push_matvec(1.0, a, &x.blocks[c]);
                    y = s.truncate(gamma);
                }
            }
            y.truncate_rel(eta)
        })
        .collect();
    BlockVector { blocks }
}

/// Solve `Ã u = f̃` by truncated PCG.
pub fn tpcg(
    sys: &BlockSystem,
    prec: &Preconditioner,
    params: &SolverParams,
    u0: Option<BlockVector>,
    mut log: impl FnMut(&IterationLog),
) -> Result<(BlockVector, SolveReport)> {
    let start = Instant::now();
    let dims = sys.block_dims();
    let f = &sys.rhs;
    let fnorm = f.norm();
    let target = match params.stop {
        StopRule::Absolute => params.tol,
        StopRule::Relative => params.tol * fnorm,
    };
    let eps_min = params.eps_min.unwrap_or(params.tol * fnorm * 0.1);
    let mut u = u0.unwrap_or_else(|| BlockVector::zeros(&dims));
    let eta0 = params.beta * params.tol;
    let mut r = matvec_blocks(sys, &u, Some(f), params.gamma, eta0).scaled(-1.0);
    let r0 = r.norm();
    if !r0.is_finite() {
        return Err(Error::NonFinite("initial residual".into()));
    }
    let mut rnorm = r0;
    let mut eta = eta0;
    let mut z = prec.apply(&r, eta)?;
    let mut p = z.clone();
    let mut eps = params.eps0;
    let mut history: Vec<IterationLog> = Vec::new();
    let mut k = 0;
    while rnorm > target {
        if k >= params.max_iter {
            break;
        }
        let q = matvec_blocks(sys, &p, None, params.gamma, eta);
        let xi = p.dot(&q);
        if !xi.is_finite() {
            return Err(Error::NonFinite(format!("p·Ap at iteration {k}")));
        }
        if xi <= 0.0 {
            return Err(Error::Breakdown { iteration: k, reason: format!("p·Ap = {xi:e} is not positive") });
        }
        let omega = r.dot(&p) / xi;
        let dt = truncate_dynamic(&u, &p, omega, eps, params.delta, params.alpha, eps_min);
        u = dt.vector;
        eps = dt.eps;
        r = matvec_blocks(sys, &u, Some(f), params.gamma, eta).scaled(-1.0);
        rnorm = r.norm();
        if !rnorm.is_finite() || !u.is_finite() {
            return Err(Error::NonFinite(format!("residual at iteration {}", k + 1)));
        }
        eta = if rnorm > 0.0 { params.beta * params.tol * r0 / rnorm } else { 0.0 };
        z = prec.apply(&r, eta)?;
        let beta_k = -z.dot(&q) / xi;
        p = BlockVector::axpby_truncated(1.0, &z, beta_k, &p, eta);
        k += 1;
        let entry = IterationLog {
            iter: k,
            residual: rnorm,
            eps,
            attempts: dt.attempts,
            omega,
            eta,
            max_rank_u: u.max_rank(),
            max_rank_p: p.max_rank(),
            seconds: start.elapsed().as_secs_f64(),
        };
        log(&entry);
        history.push(entry);
        if k > 20 && rnorm > 10.0 * history[k - 21].residual {
            return Err(Error::Breakdown { iteration: k, reason: "residual grew tenfold over 20 iterations".into() });
        }
    }
    let ranks: Vec<[usize; 3]> = u.blocks.iter().map(|b| b.ranks()).collect();
    let report = SolveReport {
        iterations: k,
        converged: rnorm <= target,
        residual0: r0,
        final_residual: rnorm,
        rhs_norm: fnorm,
        history,
        max_rank: u.max_rank(),
        memory: memory_percent(&u, sys.ncomp()),
        ranks,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((u, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tucker::TuckerVector;

    #[test]
    fn memory_formula() {
        let v = BlockVector { blocks: vec![TuckerVector::rank_one(&[1.0; 10], &[1.0; 10], &[1.0; 10])] };
        let m = memory_percent(&v, 1);
        assert!((m.percent - 3.0).abs() < 1e-12);
        assert!((m.percent_full - 3.1).abs() < 1e-12);
    }

    fn to_block(sys: &BlockSystem, v: &nalgebra::DVector<f64>) -> BlockVector {
        let t = crate::assembly::unflatten(v, &sys.block_dims());
        BlockVector { blocks: t.iter().map(|b| TuckerVector::from_dense(b, 0.0, usize::MAX).unwrap()).collect() }
    }

    fn to_dense(v: &BlockVector) -> nalgebra::DVector<f64> {
        let t: Vec<_> = v.blocks.iter().map(|b| b.densify(usize::MAX).unwrap()).collect();
        crate::assembly::flatten(&t)
    }

    #[test]
    fn untruncated_iteration_matches_dense_pcg() {
        use crate::assembly::{assemble, ProblemSetup};
        use crate::geometry::lshape;
        use crate::precond::InverseKind;
        for setup in [ProblemSetup::scalar(2, 2), ProblemSetup::elasticity(2, 2)] {
            let sys = assemble(&lshape(), &setup).unwrap();
            let pre = Preconditioner::build(&sys, InverseKind::Exact).unwrap();
            let a = sys.densify(usize::MAX).unwrap();
            let f = sys.rhs_dense().unwrap();
            let n = f.len();
            let mut pinv = nalgebra::DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                let e = nalgebra::DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
                pinv.set_column(j, &to_dense(&pre.apply(&to_block(&sys, &e), 0.0).unwrap()));
            }
            let tol = 1e-9 * f.norm();
            let mut x = nalgebra::DVector::<f64>::zeros(n);
            let mut r = f.clone();
            let mut z = &pinv * &r;
            let mut p = z.clone();
            let mut its = 0;
            while r.norm() > tol {
                let q = &a * &p;
                let w = r.dot(&z) / p.dot(&q);
                x += w * &p;
                let rz = r.dot(&z);
                r -= w * &q;
                z = &pinv * &r;
                p = &z + (r.dot(&z) / rz) * &p;
                its += 1;
            }
            let (u, rep) = tpcg(&sys, &pre, &SolverParams::exact(1e-9), None, |_| {}).unwrap();
            assert!(rep.converged);
            assert!((rep.iterations as i64 - its as i64).abs() <= 1, "{} vs {its}", rep.iterations);
            let ud = to_dense(&u);
            assert!((&ud - &x).norm() <= 1e-10 * x.norm().max(1.0) + tol, "{}", (&ud - &x).norm());
            let honest = (&f - &a * &ud).norm();
            assert!((honest - rep.final_residual).abs() <= 1e-10 * f.norm());
        }
    }

    #[test]
    fn stop_rule_parses() {
        assert_eq!("relative".parse::<StopRule>().unwrap(), StopRule::Relative);
        assert!("sometimes".parse::<StopRule>().is_err());
    }
}
