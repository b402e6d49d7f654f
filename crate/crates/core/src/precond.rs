//! Block-diagonal preconditioner.
//!
//! Each block `(i, k)` uses the surrogate
//! `P = c₁ M₃⊗M₂⊗K₁ + c₂ M₃⊗K₂⊗M₁ + c₃ K₃⊗M₂⊗M₁` with univariate mass and
//! stiffness matrices of the subdomain. With `K_d U_d = M_d U_d Λ_d` and
//! `U_dᵀ M_d U_d = I` its inverse is `(U₃⊗U₂⊗U₁) D⁻¹ (U₃⊗U₂⊗U₁)ᵀ`, where
//! `D = c₁Λ₁ ⊕ c₂Λ₂ ⊕ c₃Λ₃`. `D⁻¹` is replaced by an exponential sum, which
//! separates across directions and gives a Tucker matrix with a
//! super-diagonal core.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::BlockSystem;
use crate::error::{Error, Result};
use crate::geometry::coefficient;
use crate::linalg::{gen_sym_eig, sym_eig, Tensor3};
use crate::splines::{mass_matrix, stiffness_matrix, Retained};
use crate::tucker::{BlockVector, LazySum, TuckerMatrix, TuckerVector};

/// `1/x ≈ Σ_r w_r exp(-a_r x)` on a spectrum.
#[derive(Clone, Debug)]
pub struct ExpSum {
    pub weights: Vec<f64>,
    pub exponents: Vec<f64>,
    /// `max |x S(x) - 1|` over the spectrum it was built for.
    pub max_rel_err: f64,
}

impl ExpSum {
    pub fn terms(&self) -> usize {
        self.weights.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.weights.iter().zip(&self.exponents).map(|(w, a)| w * (-a * x).exp()).sum()
    }

    /// Largest relative error `|x S(x) - 1|` over `xs`.
    pub fn max_error(&self, xs: &[f64]) -> f64 {
        xs.iter().map(|&x| (x * self.eval(x) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Trapezoidal rule for `1/x = ∫ exp(s - x e^s) ds` on `[x_min, x_max]`.
    ///
    /// With `κ = x_max / x_min` and `x` normalized to `[1, κ]`, the step is
    /// `h = π² / ln(2/ε)` and the nodes run from `ln(ε / (2κ))` to
    /// `ln(ln(2/ε))`. The rule is then checked on `samples` (or on a log
    /// grid) and refined by shrinking `h` and widening the range until the
    /// relative error is at most `eps`.
    pub fn build(x_min: f64, x_max: f64, eps: f64, samples: Option<&[f64]>) -> Result<ExpSum> {
        if !(x_min > 0.0) || !x_max.is_finite() || x_max < x_min {
            return Err(Error::Preconditioner(format!("spectrum [{x_min}, {x_max}] is not positive")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Preconditioner(format!("eps_prec = {eps} outside (0, 1)")));
        }
        let kappa = x_max / x_min;
        let grid: Vec<f64>;
        let xs: &[f64] = match samples {
            Some(s) => s,
            None => {
                let n = 2000;
                grid = (0..=n).map(|i| x_min * kappa.powf(i as f64 / n as f64)).collect();
                &grid
            }
        };
        let l = (2.0 / eps).ln();
        let mut h = std::f64::consts::PI.powi(2) / l;
        let mut s_lo = (eps / (2.0 * kappa)).ln();
        let mut s_hi = l.ln().max(0.0);
        for _ in 0..40 {
            let n = ((s_hi - s_lo) / h).ceil() as usize;
            let mut weights = Vec::with_capacity(n + 1);
            let mut exponents = Vec::with_capacity(n + 1);
            for j in 0..=n {
                let s = s_lo + j as f64 * h;
                weights.push(h * s.exp() / x_min);
                exponents.push(s.exp() / x_min);
            }
            let mut e = ExpSum { weights, exponents, max_rel_err: 0.0 };
            e.max_rel_err = e.max_error(xs);
            if e.max_rel_err <= eps {
                return Ok(e);
            }
            h *= 0.85;
            s_lo -= 0.5;
            s_hi += 0.25;
        }
        Err(Error::Preconditioner(format!("exponential sum did not reach {eps} for ratio {kappa:.3e}")))
    }
}

/// How the diagonal inverse is realized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InverseKind {
    /// Exponential sum with relative accuracy `eps_prec`.
    ExpSum { eps_prec: f64 },
    /// Exact division in eigen-coordinates (dense in the core; small cases).
    Exact,
}

/// One diagonal block `(i, k)` of the preconditioner.
#[derive(Clone, Debug)]
pub struct PrecondBlock {
    pub sub: usize,
    pub comp: usize,
    pub c: [f64; 3],
    pub k: [DMatrix<f64>; 3],
    pub m: [DMatrix<f64>; 3],
    pub u: [DMatrix<f64>; 3],
    pub lambda: [DVector<f64>; 3],
    pub exp_sum: Option<ExpSum>,
    pub inverse: Option<TuckerMatrix>,
}

fn restrict(a: &DMatrix<f64>, r: Retained) -> DMatrix<f64> {
    a.view((r.lo, r.lo), (r.len(), r.len())).into_owned()
}

/// Averages of the diagonal coefficient entries `Q^(i,k)_ℓℓ` over the grid of
/// breakpoints and midpoints of the subdomain's geometry knots.
pub fn compute_constants(sys: &BlockSystem, i: usize, k: usize) -> Result<[f64; 3]> {
    let pbox = &sys.subdomains[i].pbox;
    let gk = sys.domain.box_geometry_knots(pbox)?;
    let pts: Vec<Vec<f64>> = gk.iter().map(|kv| kv.breakpoint_midpoint_samples()).collect();
    let mut sum = [0.0; 3];
    let mut cnt = 0usize;
    for &z in &pts[2] {
        for &y in &pts[1] {
            for &x in &pts[0] {
                let (p, _, j) = sys.domain.box_eval(pbox, [x, y, z])?;
                let mat = sys.domain.patches[p].material;
                let q = coefficient(&j, sys.setup.mode, &mat, k, k);
                for l in 0..3 {
                    sum[l] += q[l][l];
                }
                cnt += 1;
            }
        }
    }
    let c = sum.map(|s| s / cnt as f64);
    if c.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Preconditioner(format!("nonpositive constants {c:?} on subdomain {i}")));
    }
    Ok(c)
}

impl PrecondBlock {
    pub fn new(sys: &BlockSystem, i: usize, k: usize, kind: InverseKind) -> Result<PrecondBlock> {
        let c = compute_constants(sys, i, k)?;
        let sp = &sys.spaces[i];
        let mut ks = Vec::new();
        let mut ms = Vec::new();
        let mut us = Vec::new();
        let mut ls = Vec::new();
        for d in 0..3 {
            let kd = restrict(&stiffness_matrix(&sp.knots[d]), sp.retained[d]);
            let md = restrict(&mass_matrix(&sp.knots[d]), sp.retained[d]);
            let (lam, u) = gen_sym_eig(&kd, &md)?;
            let lam = lam.map(|x| x.max(0.0));
            ks.push(kd);
            ms.push(md);
            us.push(u);
            ls.push(lam);
        }
        let arr = |mut v: Vec<DMatrix<f64>>| -> [DMatrix<f64>; 3] {
            let c = v.pop().unwrap();
            let b = v.pop().unwrap();
            let a = v.pop().unwrap();
            [a, b, c]
        };
        let lambda = [ls[0].clone(), ls[1].clone(), ls[2].clone()];
        let mut blk = PrecondBlock {
            sub: i,
            comp: k,
            c,
            k: arr(ks),
            m: arr(ms),
            u: arr(us),
            lambda,
            exp_sum: None,
            inverse: None,
        };
        if let InverseKind::ExpSum { eps_prec } = kind {
            let spec = blk.spectrum();
            let (lo, hi) = spec.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
            // Check on the full discrete spectrum when it is moderate, else on a log grid.
            let e = if spec.len() <= 400_000 {
                ExpSum::build(lo, hi, eps_prec, Some(&spec))?
            } else {
                ExpSum::build(lo, hi, eps_prec, None)?
            };
            blk.inverse = Some(blk.inverse_from(&e)?);
            blk.exp_sum = Some(e);
        }
        Ok(blk)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.u[0].nrows(), self.u[1].nrows(), self.u[2].nrows()]
    }

    /// All values `c₁λ₁ + c₂λ₂ + c₃λ₃`.
    pub fn spectrum(&self) -> Vec<f64> {
        let [a, b, c] = &self.lambda;
        let mut v = Vec::with_capacity(a.len() * b.len() * c.len());
        for z in c.iter() {
            for y in b.iter() {
                for x in a.iter() {
                    v.push(self.c[0] * x + self.c[1] * y + self.c[2] * z);
                }
            }
        }
        v
    }

    fn inverse_from(&self, e: &ExpSum) -> Result<TuckerMatrix> {
        let mut terms = Vec::with_capacity(e.terms());
        for (w, a) in e.weights.iter().zip(&e.exponents) {
            let f = [0, 1, 2].map(|d| {
                let s = self.lambda[d].map(|l| (-a * self.c[d] * l).exp());
                &self.u[d] * DMatrix::from_diagonal(&s) * self.u[d].transpose()
            });
            terms.push((*w, f));
        }
        TuckerMatrix::from_terms(terms)
    }

    /// The surrogate `P` itself as a Tucker matrix.
    pub fn operator(&self) -> Result<TuckerMatrix> {
        let t = |d: usize| -> [DMatrix<f64>; 3] {
            [0, 1, 2].map(|e| if e == d { self.k[e].clone() } else { self.m[e].clone() })
        };
        TuckerMatrix::from_terms(vec![(self.c[0], t(0)), (self.c[1], t(1)), (self.c[2], t(2))])
    }

    /// `P̃⁻¹ v` truncated at relative tolerance `eta`.
    pub fn apply(&self, v: &TuckerVector, eta: f64) -> Result<TuckerVector> {
        match &self.inverse {
            Some(inv) => {
                let mut s = LazySum::new(self.dims());
                s.push_matvec(1.0, inv, v);
                Ok(s.truncate(eta))
            }
            None => self.apply_exact(v, eta),
        }
    }

    /// Exact `P⁻¹ v` through the eigen-coordinates.
    pub fn apply_exact(&self, v: &TuckerVector, eta: f64) -> Result<TuckerVector> {
        let n = self.dims();
        let cap = 4_000_000;
        if n.iter().product::<usize>() > cap {
            return Err(Error::SizeCap { size: n.iter().product(), cap });
        }
        let f = [0, 1, 2].map(|d| self.u[d].transpose() * v.factor(d));
        let w = TuckerVector::new(f, v.core().clone())?.densify(cap)?;
        let mut t = Tensor3::zeros(n);
        for z in 0..n[2] {
            for y in 0..n[1] {
                for x in 0..n[0] {
                    let d = self.c[0] * self.lambda[0][x] + self.c[1] * self.lambda[1][y] + self.c[2] * self.lambda[2][z];
                    t.set(x, y, z, w.get(x, y, z) / d);
                }
            }
        }
        let tv = TuckerVector::from_dense(&t, eta, cap)?;
        let f = [0, 1, 2].map(|d| &self.u[d] * tv.factor(d));
        TuckerVector::new(f, tv.core().clone())
    }

    /// Largest relative generalized eigen-residual over directions.
    /// `‖I - P̃⁻¹P‖` in the `P`-energy norm, from dense matrices of at most `cap` rows.
    pub fn energy_error(&self, cap: usize) -> Result<f64> {
        let inv = self.inverse.as_ref().ok_or_else(|| Error::Config("energy error needs an exponential-sum inverse".into()))?;
        let p = self.operator()?.densify(cap)?;
        let pinv = inv.densify(cap)?;
        let (vals, q) = sym_eig(&p);
        let half = &q * DMatrix::from_diagonal(&vals.map(|x| x.max(0.0).sqrt())) * q.transpose();
        let e = &half * &pinv * &half;
        let e = (&e + e.transpose()) * 0.5;
        Ok(sym_eig(&e).0.iter().map(|x| (1.0 - x).abs()).fold(0.0, f64::max))
    }

    pub fn eigen_residual(&self) -> f64 {
        (0..3)
            .map(|d| {
                let r = &self.k[d] * &self.u[d] - &self.m[d] * &self.u[d] * DMatrix::from_diagonal(&self.lambda[d]);
                r.norm() / self.k[d].norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Block-diagonal preconditioner over all `(i, k)`.
#[derive(Clone, Debug)]
pub struct Preconditioner {
    pub kind: InverseKind,
    pub blocks: Vec<PrecondBlock>,
}

impl Preconditioner {
    pub fn build(sys: &BlockSystem, kind: InverseKind) -> Result<Preconditioner> {
        let nc = sys.ncomp();
        let blocks = (0..sys.nblocks())
            .into_par_iter()
            .map(|b| PrecondBlock::new(sys, b / nc, b % nc, kind))
            .collect::<Result<_>>()?;
        Ok(Preconditioner { kind, blocks })
    }

    /// `z^(i,k) = truncate(P̃⁻¹ r^(i,k), η)` for every block.
    pub fn apply(&self, r: &BlockVector, eta: f64) -> Result<BlockVector> {
        let blocks = self
            .blocks
            .par_iter()
            .zip(r.blocks.par_iter())
            .map(|(p, v)| p.apply(v, eta))
            .collect::<Result<_>>()?;
        Ok(BlockVector { blocks })
    }

    /// Largest number of exponential-sum terms.
    pub fn max_terms(&self) -> usize {
        self.blocks.iter().filter_map(|b| b.exp_sum.as_ref().map(|e| e.terms())).max().unwrap_or(0)
    }

    /// Largest achieved exponential-sum error.
    pub fn max_exp_error(&self) -> f64 {
        self.blocks.iter().filter_map(|b| b.exp_sum.as_ref().map(|e| e.max_rel_err)).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, ProblemSetup};
    use crate::geometry::{lshape, Bc, Domain, Glue, Material, Patch};

    fn cube(bc: [Bc; 6]) -> Domain {
        Domain { name: "cube".into(), patches: vec![Patch::affine_box([0.0; 3], [1.0; 3], bc, Material::default())], glues: vec![] }
    }

    #[test]
    fn constants_for_reference_cases() {
        let d = cube([Bc::Dirichlet; 6]);
        let sys = assemble(&d, &ProblemSetup::elasticity(2, 2)).unwrap();
        let (mu, lambda) = Material::default().lame();
        let c = compute_constants(&sys, 0, 0).unwrap();
        let want = [2.0 * mu + lambda, mu, mu];
        for l in 0..3 {
            assert!((c[l] - want[l]).abs() < 1e-14);
        }
        let stacked = Domain {
            name: "stack".into(),
            patches: vec![
                Patch::affine_box([0.0; 3], [1.0; 3], [Bc::Dirichlet; 6], Material::default()),
                Patch::affine_box([0.0, 0.0, 1.0], [1.0, 1.0, 2.0], [Bc::Dirichlet; 6], Material::default()),
            ],
            glues: vec![Glue { a: 0, b: 1, dir: 2 }],
        };
        let sys = assemble(&stacked, &ProblemSetup::scalar(2, 2)).unwrap();
        let c = compute_constants(&sys, 0, 0).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-14 && (c[1] - 2.0).abs() < 1e-14 && (c[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn identity_cube_surrogate_is_the_laplacian() {
        let d = cube([Bc::Dirichlet; 6]);
        let sys = assemble(&d, &ProblemSetup::scalar(2, 3)).unwrap();
        let p = PrecondBlock::new(&sys, 0, 0, InverseKind::Exact).unwrap();
        let a = sys.densify(10_000).unwrap();
        let pd = p.operator().unwrap().densify(usize::MAX).unwrap();
        assert!((a - pd).amax() < 1e-13);
        assert!(p.eigen_residual() < 1e-10);
    }

    #[test]
    fn exponential_sum_accuracy_and_size() {
        let xs: Vec<f64> = (0..=4000).map(|i| 10f64.powf(4.0 * i as f64 / 4000.0)).collect();
        let e = ExpSum::build(1.0, 1e4, 0.1, Some(&xs)).unwrap();
        assert!(e.terms() <= 12, "{} terms", e.terms());
        assert!(e.max_error(&xs) <= 0.1);
        let e = ExpSum::build(2.0, 2e6, 1e-6, None).unwrap();
        let ys: Vec<f64> = (0..=997).map(|i| 2.0 * 10f64.powf(6.0 * i as f64 / 997.0)).collect();
        assert!(e.max_error(&ys) <= 1.2e-6);
        assert!(ExpSum::build(0.0, 1.0, 0.1, None).is_err());
    }

    #[test]
    fn single_dof_inverse_is_exact() {
        let d = cube([Bc::Dirichlet; 6]);
        let sys = assemble(&d, &ProblemSetup::scalar(1, 2)).unwrap();
        let p = PrecondBlock::new(&sys, 0, 0, InverseKind::ExpSum { eps_prec: 0.5 }).unwrap();
        assert_eq!(p.dims(), [1, 1, 1]);
        let v = TuckerVector::rank_one(&[1.0], &[1.0], &[1.0]);
        let z = p.apply_exact(&v, 0.0).unwrap();
        let pd = p.operator().unwrap().densify(usize::MAX).unwrap();
        assert!((z.entry(0, 0, 0) * pd[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn approximate_inverse_contract() {
        let sys = assemble(&lshape(), &ProblemSetup::elasticity(2, 4)).unwrap();
        let pre = Preconditioner::build(&sys, InverseKind::ExpSum { eps_prec: 0.1 }).unwrap();
        for b in &pre.blocks {
            let e = b.energy_error(usize::MAX).unwrap();
            assert!(e <= 0.1 + 1e-12, "block ({}, {}): {e}", b.sub, b.comp);
            let spec = b.exp_sum.as_ref().unwrap().max_error(&b.spectrum());
            assert!((e - spec).abs() < 1e-8, "{e} vs {spec}");
        }
        let r = sys.rhs.clone();
        let z0 = pre.apply(&BlockVector::zeros(&sys.block_dims()), 0.0).unwrap();
        assert_eq!(z0.norm(), 0.0);
        let z = pre.apply(&r, 0.0).unwrap();
        let ex = Preconditioner::build(&sys, InverseKind::Exact).unwrap().apply(&r, 0.0).unwrap();
        let diff = BlockVector::axpby_truncated(1.0, &z, -1.0, &ex, 0.0).norm();
        assert!(diff <= 0.1 * ex.norm() * 1.5);
    }
}
