//! Executable checks of the approximation theory and oracle comparisons.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::assembly::{assemble, flatten, patch_field, reference_dense, unflatten, BlockSystem, CoefficientSource, FieldEvaluator, ProblemSetup, ReferenceOperator};
use crate::error::{Error, Result};
use crate::geometry::{coefficient, det3, inv3, thick_ring, Domain};
use crate::precond::{InverseKind, Preconditioner};
use crate::solver::{tpcg, SolverParams};
use crate::splines::QuadTable;
use crate::linalg::sym_eig;
use crate::tucker::{BlockVector, TuckerVector};

/// Outcome of the matrix-error and kernel checks.
#[derive(Clone, Debug, Default)]
pub struct TheoryReport {
    /// `‖A - Ã‖₂ / ‖A‖₂`.
    pub rel_error: f64,
    /// `9 ζ / λ_min`, infinite when `λ_min <= 0`.
    pub bound: f64,
    /// Largest pointwise coefficient deviation on the sample grid.
    pub zeta: f64,
    /// Smallest eigenvalue of the full coefficient matrix on the sample grid.
    pub lambda_min: f64,
    pub kernel_dim_exact: Option<usize>,
    pub kernel_dim_approx: Option<usize>,
    /// `‖Π_ker(Ã) f̃‖ / ‖f̃‖`.
    pub range_residual: Option<f64>,
}

impl TheoryReport {
    /// `λ_min > 0`, so the bound is meaningful.
    pub fn hypotheses_hold(&self) -> bool {
        self.lambda_min > 0.0
    }

    pub fn bound_holds(&self) -> bool {
        self.rel_error <= self.bound
    }
}

/// Largest singular value of a symmetric operator by power iteration on its
/// square, stopping when the Rayleigh quotient changes by less than `tol`
/// relative or after `steps` iterations.
pub fn symmetric_norm(apply: impl Fn(&DVector<f64>) -> DVector<f64>, n: usize, steps: usize, tol: f64, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..steps {
        let w = apply(&v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let w2 = apply(&(&w / nw));
        let rq = (nw * w2.norm()).sqrt();
        let done = (rq - est).abs() <= tol * rq;
        est = rq;
        let nw2 = w2.norm();
        if nw2 == 0.0 || done {
            break;
        }
        v = w2 / nw2;
    }
    est
}

/// `(ζ, λ_min)` over a `grid³` sample of every patch.
pub fn coefficient_deviation(sys: &BlockSystem, grid: usize) -> Result<(f64, f64)> {
    let nc = sys.ncomp();
    let mode = sys.setup.mode;
    let pts: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1).max(1) as f64).collect();
    let per_patch: Vec<(f64, f64)> = (0..sys.domain.npatches())
        .into_par_iter()
        .map(|m| {
            let patch = &sys.domain.patches[m];
            let coef = &sys.coefficients[m];
            let mut zeta = 0.0f64;
            let mut lmin = f64::INFINITY;
            for &c in &pts {
                for &b in &pts {
                    for &a in &pts {
                        let xi = [a, b, c];
                        let (_, j) = patch.eval(xi)?;
                        let mut full = DMatrix::zeros(3 * nc, 3 * nc);
                        for k in 0..nc {
                            for l in 0..nc {
                                let ce = coefficient(&j, mode, &patch.material, k, l);
                                for al in 0..3 {
                                    for be in 0..3 {
                                        full[(3 * k + al, 3 * l + be)] = ce[al][be];
                                        let ca = coef.get(k, l, al, be).eval(xi);
                                        zeta = zeta.max((ca - ce[al][be]).abs());
                                    }
                                }
                            }
                        }
                        let scale = full.amax();
                        let l = sym_eig(&full).0.min();
                        // Eigenvalues at roundoff level count as zero.
                        lmin = lmin.min(if l.abs() <= 1e-12 * scale { 0.0 } else { l });
                    }
                }
            }
            Ok((zeta, lmin))
        })
        .collect::<Result<_>>()?;
    Ok(per_patch.iter().fold((0.0, f64::INFINITY), |(z, l), &(a, b)| (z.max(a), l.min(b))))
}

/// Relative 2-norm error of the low-rank matrix against the exact Galerkin
/// matrix, together with the coefficient bound.
pub fn matrix_error_check(domain: &Domain, setup: &ProblemSetup) -> Result<TheoryReport> {
    let sys = assemble(domain, setup)?;
    matrix_error_of(&sys)
}

/// As [`matrix_error_check`] for an assembled system.
pub fn matrix_error_of(sys: &BlockSystem) -> Result<TheoryReport> {
    let reference = ReferenceOperator::new(sys)?;
    let dims = sys.block_dims();
    let n = sys.ndof();
    let a = |v: &DVector<f64>| flatten(&reference.apply(&unflatten(v, &dims)));
    let e = |v: &DVector<f64>| {
        let x = unflatten(v, &dims);
        flatten(&reference.apply(&x)) - flatten(&sys.apply_full(&x))
    };
    let na = symmetric_norm(a, n, 200, 1e-4, 1);
    let ne = symmetric_norm(e, n, 200, 1e-4, 2);
    let (zeta, lambda_min) = coefficient_deviation(sys, 20)?;
    let bound = if lambda_min > 0.0 { 9.0 * zeta / lambda_min } else { f64::INFINITY };
    Ok(TheoryReport { rel_error: ne / na, bound, zeta, lambda_min, ..TheoryReport::default() })
}

fn kernel(a: &DMatrix<f64>) -> (usize, DMatrix<f64>) {
    let (vals, vecs) = sym_eig(a);
    let top = vals.amax();
    let idx: Vec<usize> = (0..a.nrows()).filter(|&i| vals[i].abs() < 1e-10 * top).collect();
    let mut v = DMatrix::zeros(a.nrows(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        v.set_column(c, &vecs.column(i));
    }
    (idx.len(), v)
}

/// Kernel dimensions of the exact and low-rank matrices and the distance of
/// `f̃` from the range of `Ã`, from dense matrices.
pub fn kernel_check(domain: &Domain, setup: &ProblemSetup) -> Result<TheoryReport> {
    let sys = assemble(domain, setup)?;
    let (a, _) = reference_dense(&sys, CoefficientSource::Exact)?;
    let at = sys.densify(8000)?;
    let f = sys.rhs_dense()?;
    let (ke, _) = kernel(&a);
    let (ka, v) = kernel(&at);
    let proj = v.transpose() * &f;
    Ok(TheoryReport {
        kernel_dim_exact: Some(ke),
        kernel_dim_approx: Some(ka),
        range_residual: Some(if f.norm() > 0.0 { proj.norm() / f.norm() } else { 0.0 }),
        ..TheoryReport::default()
    })
}

/// Largest relative discrepancy, over `pairs` random block-vector pairs,
/// between `uᵀÃv` from the blocks and the patchwise bilinear form with the
/// approximated coefficients.
pub fn lemma_check(sys: &BlockSystem, pairs: usize, seed: u64) -> Result<f64> {
    let (a, _) = reference_dense(sys, CoefficientSource::Approximate)?;
    let at = sys.densify(8000)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let n = a.nrows();
    let scale = a.amax();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let u = DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let v = DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let x = u.dot(&(&a * &v));
        let y = u.dot(&(&at * &v));
        worst = worst.max((x - y).abs() / (scale * u.norm() * v.norm()));
    }
    Ok(worst)
}

/// Block vector holding a dense coordinate vector exactly.
pub fn block_from_dense(sys: &BlockSystem, v: &DVector<f64>) -> Result<BlockVector> {
    let t = unflatten(v, &sys.block_dims());
    Ok(BlockVector { blocks: t.iter().map(|b| TuckerVector::from_dense(b, 0.0, usize::MAX)).collect::<Result<_>>()? })
}

/// Dense coordinate vector of a block vector.
pub fn dense_from_block(u: &BlockVector) -> Result<DVector<f64>> {
    let t: Vec<_> = u.blocks.iter().map(|b| b.densify(usize::MAX)).collect::<Result<_>>()?;
    Ok(flatten(&t))
}

/// Minimum-norm solution of the dense singular system `Ã u = f̃`.
pub fn dense_solve(sys: &BlockSystem) -> Result<DVector<f64>> {
    let a = sys.densify(8000)?;
    let f = sys.rhs_dense()?;
    let (vals, q) = sym_eig(&a);
    let top = vals.amax();
    let mut c = q.transpose() * &f;
    for (i, x) in c.iter_mut().enumerate() {
        let l = vals[i];
        *x = if l.abs() < 1e-10 * top { 0.0 } else { *x / l };
    }
    Ok(&q * c)
}

/// Largest deviation between the fields of `u` and `w` at `samples` random
/// points, relative to the largest value of the field of `w`.
pub fn field_agreement(sys: &BlockSystem, u: &BlockVector, w: &BlockVector, samples: usize, seed: u64) -> Result<f64> {
    let fu = FieldEvaluator::new(sys, u);
    let fw = FieldEvaluator::new(sys, w);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut diff = 0.0f64;
    let mut mag = 0.0f64;
    for _ in 0..samples {
        let m = rng.gen_range(0..sys.domain.npatches());
        let xi = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let a = fu.eval(m, xi)?;
        let b = fw.eval(m, xi)?;
        for k in 0..sys.ncomp() {
            diff = diff.max((a.value[k] - b.value[k]).abs());
            mag = mag.max(b.value[k].abs());
        }
    }
    Ok(if mag > 0.0 { diff / mag } else { diff })
}

/// Exact solution and gradient of a manufactured scalar problem.
pub type ScalarSolution = Arc<dyn Fn([f64; 3]) -> (f64, [f64; 3]) + Send + Sync>;

/// `L²` norm and `H¹` seminorm of `u_h - u`, by Gauss quadrature with
/// `degree + 2` points per element and direction.
pub fn solution_errors(sys: &BlockSystem, u: &BlockVector, exact: &ScalarSolution) -> Result<(f64, f64)> {
    let disc = sys.setup.disc;
    let kv = disc.patch_knots();
    let table = QuadTable::new(&kv, disc.degree + 2);
    let np = kv.dim();
    let bval = table.collocation(np, false);
    let bder = table.collocation(np, true);
    let nq = table.len();
    let x: Vec<_> = u.blocks.iter().map(|b| b.densify(usize::MAX)).collect::<Result<_>>()?;
    let (mut l2, mut h1) = (0.0, 0.0);
    for m in 0..sys.domain.npatches() {
        let patch = &sys.domain.patches[m];
        let f = &patch_field(sys, &x, m)?[0];
        let val = f.mode_product(0, &bval).mode_product(1, &bval).mode_product(2, &bval);
        let g = [0, 1, 2].map(|b| {
            let c = |d: usize| if d == b { &bder } else { &bval };
            f.mode_product(0, c(0)).mode_product(1, c(1)).mode_product(2, c(2))
        });
        let parts: Vec<(f64, f64)> = (0..nq)
            .into_par_iter()
            .map(|q3| {
                let (mut a, mut b) = (0.0, 0.0);
                for q2 in 0..nq {
                    for q1 in 0..nq {
                        let xi = [table.points[q1], table.points[q2], table.points[q3]];
                        let (xp, j) = patch.eval(xi)?;
                        let ji = inv3(&j);
                        let w = table.weights[q1] * table.weights[q2] * table.weights[q3] * det3(&j).abs();
                        let (ue, ge) = exact(xp);
                        let idx = val.idx(q1, q2, q3);
                        a += w * (val.data[idx] - ue).powi(2);
                        for i in 0..3 {
                            let gi: f64 = (0..3).map(|c| ji[c][i] * g[c].data[idx]).sum();
                            b += w * (gi - ge[i]).powi(2);
                        }
                    }
                }
                Ok((a, b))
            })
            .collect::<Result<_>>()?;
        for (a, b) in parts {
            l2 += a;
            h1 += b;
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

/// One row of the convergence table.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub degree: usize,
    pub level: u32,
    pub n_el: usize,
    pub iterations: usize,
    pub l2: f64,
    pub h1: f64,
}

/// Manufactured Poisson problem on the thick ring with Dirichlet data on
/// every face: `-Δu = -s`, `u = -s / (48π²)`, `s = sin 4πx sin 4πy sin 4πz`.
pub fn ring_poisson(degree: usize, n_el: usize) -> (Domain, ProblemSetup, ScalarSolution) {
    let c = 1.0 / (48.0 * PI * PI);
    let s = |x: [f64; 3]| (4.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin() * (4.0 * PI * x[2]).sin();
    let mut setup = ProblemSetup::scalar(degree, n_el);
    setup.force = Arc::new(move |x| [-s(x), 0.0, 0.0]);
    setup.dirichlet = Some(Arc::new(move |x| [-c * s(x), 0.0, 0.0]));
    let exact: ScalarSolution = Arc::new(move |x| {
        let (a, b, d) = ((4.0 * PI * x[0]), (4.0 * PI * x[1]), (4.0 * PI * x[2]));
        let g = [a.cos() * b.sin() * d.sin(), a.sin() * b.cos() * d.sin(), a.sin() * b.sin() * d.cos()];
        (-c * s(x), g.map(|t| -c * 4.0 * PI * t))
    });
    (thick_ring().with_all_dirichlet(), setup, exact)
}

/// Solve the manufactured ring problem for every `(degree, level)` with
/// `n_el = 2^level` and TPCG tolerance `tol`.
pub fn convergence_study(degrees: &[usize], levels: &[u32], tol: f64) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    for &p in degrees {
        for &lv in levels {
            let n = 1usize << lv;
            let (domain, setup, exact) = ring_poisson(p, n);
            let sys = assemble(&domain, &setup)?;
            let prec = Preconditioner::build(&sys, InverseKind::ExpSum { eps_prec: 0.1 })?;
            let params = SolverParams { tol, gamma: (tol * 1e-3).min(1e-8), ..SolverParams::default() };
            let (u, rep) = tpcg(&sys, &prec, &params, None, |_| {})?;
            if !rep.converged {
                return Err(Error::Breakdown { iteration: rep.iterations, reason: "no convergence in the convergence study".into() });
            }
            let (l2, h1) = solution_errors(&sys, &u, &exact)?;
            rows.push(ConvergenceRow { degree: p, level: lv, n_el: n, iterations: rep.iterations, l2, h1 });
        }
    }
    Ok(rows)
}

/// Empirical orders `(degree, level, L² order, H¹ order)` between
/// consecutive levels of the same degree.
pub fn empirical_orders(rows: &[ConvergenceRow]) -> Vec<(usize, u32, f64, f64)> {
    rows.windows(2)
        .filter(|w| w[0].degree == w[1].degree)
        .map(|w| {
            let r = w[1].n_el as f64 / w[0].n_el as f64;
            (w[1].degree, w[1].level, (w[0].l2 / w[1].l2).ln() / r.ln(), (w[0].h1 / w[1].h1).ln() / r.ln())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cross3d, lshape, thick_square};

    #[test]
    fn power_iteration_finds_the_largest_singular_value() {
        let d = DVector::from_vec(vec![1.0, -3.0, 2.0, 0.5]);
        let n = symmetric_norm(|v| d.component_mul(v), 4, 200, 1e-12, 7);
        assert!((n - 3.0).abs() < 1e-6);
    }

    #[test]
    fn affine_lshape_matrix_is_exact() {
        let r = matrix_error_check(&lshape(), &ProblemSetup::elasticity(2, 2)).unwrap();
        assert!(r.rel_error <= 1e-13, "{}", r.rel_error);
        assert!(r.zeta <= 1e-13);
        // Rigid rotations make the elasticity coefficient matrix singular.
        assert_eq!(r.lambda_min, 0.0);
    }

    #[test]
    fn scalar_bound_holds_on_curved_and_affine_domains() {
        for d in [thick_ring(), thick_square(), cross3d()] {
            let r = matrix_error_check(&d, &ProblemSetup::scalar(2, 2)).unwrap();
            assert!(r.hypotheses_hold());
            assert!(r.bound_holds(), "{}: {} > {}", d.name, r.rel_error, r.bound);
        }
    }

    #[test]
    fn kernels_agree_on_tiny_meshes() {
        let r = kernel_check(&lshape(), &ProblemSetup::elasticity(2, 2)).unwrap();
        assert_eq!(r.kernel_dim_exact, r.kernel_dim_approx);
        assert!(r.kernel_dim_exact.unwrap() > 0);
        let r = kernel_check(&thick_ring(), &ProblemSetup::elasticity(2, 2)).unwrap();
        assert_eq!(r.kernel_dim_exact, r.kernel_dim_approx);
        assert!(r.range_residual.unwrap() <= 1e-10);
    }

    #[test]
    fn bilinear_forms_agree_blockwise_and_patchwise() {
        let sys = assemble(&thick_ring(), &ProblemSetup::elasticity(2, 2)).unwrap();
        assert!(lemma_check(&sys, 50, 3).unwrap() <= 1e-10);
    }

    #[test]
    fn fast_errors_match_pointwise_evaluation() {
        let (domain, setup, exact) = ring_poisson(2, 2);
        let sys = assemble(&domain, &setup).unwrap();
        let u = block_from_dense(&sys, &dense_solve(&sys).unwrap()).unwrap();
        let (l2, h1) = solution_errors(&sys, &u, &exact).unwrap();
        let table = QuadTable::new(&sys.setup.disc.patch_knots(), 4);
        let ev = FieldEvaluator::new(&sys, &u);
        let (mut a, mut b) = (0.0, 0.0);
        for m in 0..domain.npatches() {
            for (q3, w3) in table.points.iter().zip(&table.weights) {
                for (q2, w2) in table.points.iter().zip(&table.weights) {
                    for (q1, w1) in table.points.iter().zip(&table.weights) {
                        let v = ev.eval(m, [*q1, *q2, *q3]).unwrap();
                        let (_, j) = domain.patches[m].eval([*q1, *q2, *q3]).unwrap();
                        let w = w1 * w2 * w3 * det3(&j).abs();
                        let (ue, ge) = exact(v.x);
                        a += w * (v.value[0] - ue).powi(2);
                        b += w * (0..3).map(|i| (v.grad[0][i] - ge[i]).powi(2)).sum::<f64>();
                    }
                }
            }
        }
        assert!((l2 - a.sqrt()).abs() <= 1e-10 * l2, "{l2} vs {}", a.sqrt());
        assert!((h1 - b.sqrt()).abs() <= 1e-10 * h1, "{h1} vs {}", b.sqrt());
    }

    #[test]
    fn manufactured_solution_satisfies_the_equation() {
        let (_, setup, exact) = ring_poisson(2, 2);
        let x = [0.13, -0.41, 0.27];
        let h = 1e-4;
        let mut lap = 0.0;
        for d in 0..3 {
            let mut a = x;
            let mut b = x;
            a[d] += h;
            b[d] -= h;
            lap += (exact(a).0 - 2.0 * exact(x).0 + exact(b).0) / (h * h);
            let fd = (exact(a).0 - exact(b).0) / (2.0 * h);
            assert!((fd - exact(x).1[d]).abs() < 1e-7);
        }
        assert!((-lap - (setup.force)(x)[0]).abs() < 1e-5);
        assert_eq!((setup.dirichlet.as_ref().unwrap())(x)[0], exact(x).0);
    }
}
