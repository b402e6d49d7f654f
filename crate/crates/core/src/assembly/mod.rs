//! Tucker-format assembly of the overlapping block system.
//!
//! For each patch the entries of the coefficient matrices `C^(k,ℓ)` are
//! approximated once by low-rank functions. A block `(i, j, k, ℓ)` is
//! assembled on the box of patches shared by subdomains `i` and `j`: the
//! patch approximations are glued over the box (with the chain-rule factors
//! of the halving maps) and every term `(α, β)` contributes one Tucker
//! matrix whose factor entries are `∫ c(ξ) [b_s]^(d,α) [b_t]^(d,β) dξ`.

mod field;
mod reference;

pub use field::FieldEvaluator;
pub use field::FieldValue;
pub use reference::{flatten, patch_field, reference_dense, unflatten, CoefficientSource, ReferenceOperator};

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::funclowrank::{approx3_batch, LowRankFunc3, ToleranceScale};
use crate::geometry::{coefficient, overlap, Discretization, Domain, Mode, PatchBox, Subdomain, SubdomainSpace};
use crate::linalg::Tensor3;
use crate::splines::{weighted_matrix, weighted_vector, KnotVector, QuadTable, Retained};
use crate::tucker::{BlockVector, LazySum, TuckerMatrix, TuckerVector};

/// Vector field on physical space.
pub type VectorField = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// Constant vector field.
pub fn constant_field(v: [f64; 3]) -> VectorField {
    Arc::new(move |_| v)
}

/// Everything besides the geometry that defines a discrete problem.
#[derive(Clone)]
pub struct ProblemSetup {
    pub mode: Mode,
    pub disc: Discretization,
    /// Body force (only the first component is used in scalar mode).
    pub force: VectorField,
    /// Dirichlet data; `None` means homogeneous.
    pub dirichlet: Option<VectorField>,
    /// Relative tolerance of the low-rank coefficient approximations.
    pub cheb_tol: f64,
}

impl ProblemSetup {
    /// Elasticity under gravity-like load `f = (0, 0, -1)`.
    pub fn elasticity(degree: usize, n_el: usize) -> ProblemSetup {
        ProblemSetup {
            mode: Mode::Elasticity,
            disc: Discretization { degree, n_el },
            force: constant_field([0.0, 0.0, -1.0]),
            dirichlet: None,
            cheb_tol: 1e-7,
        }
    }

    /// Scalar problem with unit source.
    pub fn scalar(degree: usize, n_el: usize) -> ProblemSetup {
        ProblemSetup {
            mode: Mode::Scalar,
            disc: Discretization { degree, n_el },
            force: constant_field([1.0, 0.0, 0.0]),
            dirichlet: None,
            cheb_tol: 1e-7,
        }
    }
}

/// Quadrature points per knot span for coefficient-weighted integrals.
pub fn quad_points(degree: usize) -> usize {
    degree + 2
}

// ---------------------------------------------------------------------------
// Coefficient approximations
// ---------------------------------------------------------------------------

/// Low-rank approximations of the entries of `C^(m,k,ℓ)` for one patch.
/// Only pairs with `k >= ℓ` are stored; the others follow from
/// `C^(k,ℓ)_{αβ} = C^(ℓ,k)_{βα}`.
#[derive(Clone, Debug)]
pub struct PatchCoefficients {
    ncomp: usize,
    entries: Vec<LowRankFunc3>,
    /// Absolute approximation tolerance used for every entry.
    pub abs_tol: f64,
}

fn pair_index(k: usize, l: usize) -> usize {
    debug_assert!(k >= l);
    k * (k + 1) / 2 + l
}

impl PatchCoefficients {
    pub fn compute(domain: &Domain, m: usize, mode: Mode, tol: f64) -> Result<PatchCoefficients> {
        let nc = mode.components();
        let npairs = nc * (nc + 1) / 2;
        let patch = &domain.patches[m];
        let mat = patch.material;
        let f = |xi: [f64; 3], out: &mut [f64]| match patch.eval(xi) {
            Ok((_, j)) => {
                for k in 0..nc {
                    for l in 0..=k {
                        let c = coefficient(&j, mode, &mat, k, l);
                        let base = 9 * pair_index(k, l);
                        for a in 0..3 {
                            for b in 0..3 {
                                out[base + 3 * a + b] = c[a][b];
                            }
                        }
                    }
                }
            }
            Err(_) => out.iter_mut().for_each(|x| *x = f64::NAN),
        };
        let entries = approx3_batch(f, 9 * npairs, tol, ToleranceScale::Shared)?;
        // Record the absolute tolerance: tol times the largest entry magnitude.
        let mut mag = 0.0f64;
        let mut buf = vec![0.0; 9 * npairs];
        for &a in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            for &b in &[0.0, 0.25, 0.5, 0.75, 1.0] {
                for &c in &[0.0, 0.5, 1.0] {
                    f([a, b, c], &mut buf);
                    mag = buf.iter().fold(mag, |x, y| x.max(y.abs()));
                }
            }
        }
        Ok(PatchCoefficients { ncomp: nc, entries, abs_tol: tol * mag })
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// Entry `(α, β)` of the approximation of `C^(k,ℓ)`.
    pub fn get(&self, k: usize, l: usize, a: usize, b: usize) -> &LowRankFunc3 {
        if k >= l {
            &self.entries[9 * pair_index(k, l) + 3 * a + b]
        } else {
            &self.entries[9 * pair_index(l, k) + 3 * b + a]
        }
    }
}

/// Glue per-patch functions over a box. In a glued direction `d` the
/// function is scaled by `scale(d)`.
pub fn glue_over_box(pbox: &PatchBox, f: impl Fn(usize) -> LowRankFunc3, scale: impl Fn(usize) -> f64) -> LowRankFunc3 {
    // Cells keyed by position; glue direction by direction.
    let mut cur: Vec<([usize; 3], LowRankFunc3)> = pbox.cells().into_iter().map(|(g, p)| (g, f(p))).collect();
    for d in 0..3 {
        if pbox.ext[d] != 2 {
            continue;
        }
        let mut next = Vec::new();
        for (g, lo) in cur.iter().filter(|(g, _)| g[d] == 0) {
            let mut h = *g;
            h[d] = 1;
            let hi = &cur.iter().find(|(x, _)| *x == h).expect("box cell").1;
            next.push((*g, LowRankFunc3::glue_halves(lo, hi, d, scale(d))));
        }
        cur = next;
    }
    cur.pop().expect("nonempty box").1
}

/// Chain-rule scale for entry `(α, β)` when gluing along `d`.
fn entry_scale(a: usize, b: usize, d: usize) -> f64 {
    let mut s = 2.0;
    if a == d {
        s *= 0.5;
    }
    if b == d {
        s *= 0.5;
    }
    s
}

// ---------------------------------------------------------------------------
// Embeddings and factor matrices
// ---------------------------------------------------------------------------

/// Placement of a box's univariate basis inside a subdomain's retained basis.
#[derive(Clone, Copy, Debug)]
pub struct Embedding {
    pub offset: usize,
    pub retained: Retained,
}

impl Embedding {
    /// Retained index of box basis function `t`.
    pub fn map(&self, t: usize) -> Option<usize> {
        let s = t + self.offset;
        (s >= self.retained.lo && s < self.retained.hi).then(|| s - self.retained.lo)
    }

    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }
}

fn embed(m: &DMatrix<f64>, rows: &Embedding, cols: &Embedding) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for s in 0..m.nrows() {
        let Some(i) = rows.map(s) else { continue };
        for t in 0..m.ncols() {
            if let Some(j) = cols.map(t) {
                out[(i, j)] = m[(s, t)];
            }
        }
    }
    out
}

/// Quadrature data for boxes of extent 1 and 2.
#[derive(Clone, Debug)]
pub struct BoxQuadrature {
    pub knots: [KnotVector; 2],
    pub tables: [QuadTable; 2],
}

impl BoxQuadrature {
    pub fn new(disc: &Discretization) -> BoxQuadrature {
        let k1 = disc.box_knots(1);
        let k2 = disc.box_knots(2);
        let q = quad_points(disc.degree);
        let t1 = QuadTable::new(&k1, q);
        let t2 = QuadTable::new(&k2, q);
        BoxQuadrature { knots: [k1, k2], tables: [t1, t2] }
    }

    pub fn get(&self, ext: usize) -> (&KnotVector, &QuadTable) {
        (&self.knots[ext - 1], &self.tables[ext - 1])
    }
}

/// Tucker matrix of `∫ ∇v̂ᵀ Q ∇ŵ` over a box for the given coefficient
/// entries `q(α, β)`, with test and trial functions placed by embeddings.
pub fn assemble_box_matrix(
    pbox: &PatchBox,
    quad: &BoxQuadrature,
    q: impl Fn(usize, usize) -> LowRankFunc3,
    test: &[Embedding; 3],
    trial: &[Embedding; 3],
) -> Result<TuckerMatrix> {
    let mut parts = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            let f = q(a, b);
            if f.is_zero() {
                continue;
            }
            let mut factors: [Vec<DMatrix<f64>>; 3] = [vec![], vec![], vec![]];
            for d in 0..3 {
                let (kv, table) = quad.get(pbox.ext[d]);
                let vals = f.factors(d).eval_many(&table.points);
                for r in 0..vals.ncols() {
                    let c: Vec<f64> = vals.column(r).iter().copied().collect();
                    let m = weighted_matrix(kv, table, &c, d == a, d == b);
                    factors[d].push(embed(&m, &test[d], &trial[d]));
                }
            }
            parts.push(TuckerMatrix::new(factors, f.core().clone())?);
        }
    }
    if parts.is_empty() {
        let rows = [test[0].len(), test[1].len(), test[2].len()];
        let cols = [trial[0].len(), trial[1].len(), trial[2].len()];
        return Ok(TuckerMatrix::zeros(rows, cols));
    }
    TuckerMatrix::concat(&parts)
}

/// Tucker vector of `∫ g b_s` over a box.
pub fn assemble_box_vector(pbox: &PatchBox, quad: &BoxQuadrature, g: &LowRankFunc3, test: &[Embedding; 3]) -> TuckerVector {
    let dims = [test[0].len(), test[1].len(), test[2].len()];
    if g.is_zero() {
        return TuckerVector::zeros(dims);
    }
    let mut factors = Vec::new();
    for d in 0..3 {
        let (kv, table) = quad.get(pbox.ext[d]);
        let vals = g.factors(d).eval_many(&table.points);
        let mut f = DMatrix::zeros(dims[d], vals.ncols());
        for r in 0..vals.ncols() {
            let c: Vec<f64> = vals.column(r).iter().copied().collect();
            let v = weighted_vector(kv, table, &c);
            for (t, x) in v.iter().enumerate() {
                if let Some(i) = test[d].map(t) {
                    f[(i, r)] = *x;
                }
            }
        }
        factors.push(f);
    }
    let f3 = factors.pop().unwrap();
    let f2 = factors.pop().unwrap();
    let f1 = factors.pop().unwrap();
    TuckerVector::new([f1, f2, f3], g.core().clone()).expect("consistent shapes")
}

// ---------------------------------------------------------------------------
// The block system
// ---------------------------------------------------------------------------

/// Wall-clock breakdown of an assembly.
#[derive(Clone, Debug, Default)]
pub struct AssemblyTimings {
    pub coefficients: f64,
    pub matrix: f64,
    pub rhs: f64,
}

impl AssemblyTimings {
    pub fn total(&self) -> f64 {
        self.coefficients + self.matrix + self.rhs
    }
}

/// Assembled overlapping block system in Tucker format.
pub struct BlockSystem {
    pub domain: Domain,
    pub setup: ProblemSetup,
    pub subdomains: Vec<Subdomain>,
    pub spaces: Vec<SubdomainSpace>,
    pub coefficients: Vec<PatchCoefficients>,
    /// `blocks[r][c]` with block index `i * ncomp + k`.
    pub blocks: Vec<Vec<Option<TuckerMatrix>>>,
    pub rhs: BlockVector,
    /// Per patch and component: Dirichlet lifting coefficients on the full patch space.
    pub lifting: Option<Vec<Vec<TuckerVector>>>,
    pub timings: AssemblyTimings,
}

impl BlockSystem {
    pub fn ncomp(&self) -> usize {
        self.setup.mode.components()
    }

    pub fn nsub(&self) -> usize {
        self.subdomains.len()
    }

    pub fn nblocks(&self) -> usize {
        self.nsub() * self.ncomp()
    }

    /// Block sizes, one per (subdomain, component).
    pub fn block_dims(&self) -> Vec<[usize; 3]> {
        let nc = self.ncomp();
        (0..self.nblocks()).map(|b| self.spaces[b / nc].dims()).collect()
    }

    /// Total number of unknowns of the overlapping system.
    pub fn ndof(&self) -> usize {
        self.block_dims().iter().map(|d| d.iter().product::<usize>()).sum()
    }

    pub fn block(&self, i: usize, j: usize, k: usize, l: usize) -> Option<&TuckerMatrix> {
        let nc = self.ncomp();
        self.blocks[i * nc + k][j * nc + l].as_ref()
    }

    /// Rank triples of all stored blocks: `(i, j, k, ℓ, ranks)`.
    pub fn rank_report(&self) -> Vec<(usize, usize, usize, usize, [usize; 3])> {
        let nc = self.ncomp();
        let mut v = Vec::new();
        for (r, row) in self.blocks.iter().enumerate() {
            for (c, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    v.push((r / nc, c / nc, r % nc, c % nc, b.ranks()));
                }
            }
        }
        v
    }

    /// `Σ_c A[r][c] x[c] - b[r]` computed exactly (no truncation).
    pub fn residual_exact(&self, x: &BlockVector, b: Option<&BlockVector>) -> BlockVector {
        let blocks = (0..self.nblocks())
            .into_par_iter()
            .map(|r| {
                let mut s = LazySum::new(self.block_dims()[r]);
                if let Some(b) = b {
                    s.push(-1.0, &b.blocks[r]);
                }
                for (c, a) in self.blocks[r].iter().enumerate() {
                    if let Some(a) = a {
                        s.push_matvec(1.0, a, &x.blocks[c]);
                    }
                }
                s.truncate(0.0)
            })
            .collect();
        BlockVector { blocks }
    }

    /// Apply the Tucker operator to full block tensors.
    pub fn apply_full(&self, x: &[Tensor3]) -> Vec<Tensor3> {
        let dims = self.block_dims();
        (0..self.nblocks())
            .into_par_iter()
            .map(|r| {
                let mut y = Tensor3::zeros(dims[r]);
                for (c, a) in self.blocks[r].iter().enumerate() {
                    if let Some(a) = a {
                        y.axpy(1.0, &a.apply_dense(&x[c]));
                    }
                }
                y
            })
            .collect()
    }

    /// Dense form of the whole operator, in block order.
    pub fn densify(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.ndof();
        if n > cap {
            return Err(Error::SizeCap { size: n, cap });
        }
        let dims = self.block_dims();
        let mut off = vec![0];
        for d in &dims {
            off.push(off.last().unwrap() + d.iter().product::<usize>());
        }
        let mut a = DMatrix::zeros(n, n);
        for (r, row) in self.blocks.iter().enumerate() {
            for (c, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    let d = b.densify(cap)?;
                    a.view_mut((off[r], off[c]), (d.nrows(), d.ncols())).copy_from(&d);
                }
            }
        }
        Ok(a)
    }

    /// Dense right-hand side, in block order.
    pub fn rhs_dense(&self) -> Result<nalgebra::DVector<f64>> {
        let t: Vec<Tensor3> = self.rhs.blocks.iter().map(|b| b.densify(usize::MAX)).collect::<Result<_>>()?;
        Ok(flatten(&t))
    }

    /// Storage of all blocks, in reals.
    pub fn matrix_storage(&self) -> usize {
        self.blocks.iter().flatten().flatten().map(|b| b.storage()).sum()
    }
}

/// Test embedding of a box (whose lower corner is at `corner` inside the
/// subdomain) into the subdomain's retained basis.
pub fn box_embedding(space: &SubdomainSpace, disc: &Discretization, corner: [usize; 3]) -> [Embedding; 3] {
    let step = disc.patch_dim() - 1;
    [0, 1, 2].map(|d| Embedding { offset: corner[d] * step, retained: space.retained[d] })
}

/// Assemble the block system.
pub fn assemble(domain: &Domain, setup: &ProblemSetup) -> Result<BlockSystem> {
    domain.validate()?;
    if setup.disc.degree < 1 || setup.disc.n_el < 1 {
        return Err(Error::Config("degree and number of elements must be positive".into()));
    }
    let mode = setup.mode;
    let nc = mode.components();
    let disc = setup.disc;
    let subdomains = domain.subdomains()?;
    let spaces: Vec<SubdomainSpace> = subdomains.iter().map(|s| s.space(&disc)).collect();
    let nsub = subdomains.len();

    let t0 = Instant::now();
    let coefficients: Vec<PatchCoefficients> = (0..domain.npatches())
        .into_par_iter()
        .map(|m| PatchCoefficients::compute(domain, m, mode, setup.cheb_tol))
        .collect::<Result<_>>()?;
    let t_coef = t0.elapsed().as_secs_f64();

    let quad = BoxQuadrature::new(&disc);

    // Upper-triangular block list; the rest follows by transposition.
    let t1 = Instant::now();
    let mut jobs = Vec::new();
    for i in 0..nsub {
        for j in i..nsub {
            if let Some((ov, ca, cb)) = overlap(&subdomains[i], &subdomains[j])? {
                for k in 0..nc {
                    for l in 0..nc {
                        if i == j && l < k {
                            continue;
                        }
                        jobs.push((i, j, k, l, ov.clone(), ca, cb));
                    }
                }
            }
        }
    }
    let built: Vec<((usize, usize, usize, usize), TuckerMatrix)> = jobs
        .par_iter()
        .map(|(i, j, k, l, ov, ca, cb)| {
            let test = box_embedding(&spaces[*i], &disc, *ca);
            let trial = box_embedding(&spaces[*j], &disc, *cb);
            let q = |a: usize, b: usize| {
                glue_over_box(ov, |p| coefficients[p].get(*k, *l, a, b).clone(), |d| entry_scale(a, b, d))
            };
            assemble_box_matrix(ov, &quad, q, &test, &trial).map(|m| ((*i, *j, *k, *l), m))
        })
        .collect::<Result<_>>()?;
    let nb = nsub * nc;
    let mut blocks: Vec<Vec<Option<TuckerMatrix>>> = vec![vec![None; nb]; nb];
    for ((i, j, k, l), m) in built {
        let (r, c) = (i * nc + k, j * nc + l);
        if r != c {
            blocks[c][r] = Some(m.transpose());
        }
        blocks[r][c] = Some(m);
    }
    let t_mat = t1.elapsed().as_secs_f64();

    // Right-hand side.
    let t2 = Instant::now();
    let loads: Vec<Vec<LowRankFunc3>> = (0..domain.npatches())
        .into_par_iter()
        .map(|m| {
            let patch = &domain.patches[m];
            let force = setup.force.clone();
            let f = move |xi: [f64; 3], out: &mut [f64]| match patch.eval(xi) {
                Ok((x, j)) => {
                    let det = crate::geometry::det3(&j).abs();
                    let v = force(x);
                    for (c, o) in out.iter_mut().enumerate() {
                        *o = det * v[c];
                    }
                }
                Err(_) => out.iter_mut().for_each(|x| *x = f64::NAN),
            };
            approx3_batch(f, nc, setup.cheb_tol, ToleranceScale::PerComponent)
        })
        .collect::<Result<_>>()?;
    let mut rhs_blocks = Vec::with_capacity(nb);
    for i in 0..nsub {
        let test = box_embedding(&spaces[i], &disc, [0, 0, 0]);
        let pbox = &subdomains[i].pbox;
        for k in 0..nc {
            let g = glue_over_box(pbox, |p| loads[p][k].clone(), |_| 2.0);
            rhs_blocks.push(assemble_box_vector(pbox, &quad, &g, &test).truncate_rel(1e-14));
        }
    }
    let mut rhs = BlockVector { blocks: rhs_blocks };

    let lifting = match &setup.dirichlet {
        None => None,
        Some(gfun) => {
            let lift = lifting_coefficients(domain, &disc, nc, gfun)?;
            let pd = disc.patch_dim();
            let full = [Embedding { offset: 0, retained: Retained::all(pd) }; 3];
            let mut new_blocks = Vec::with_capacity(nb);
            for i in 0..nsub {
                for k in 0..nc {
                    let mut s = LazySum::new(spaces[i].dims());
                    s.push(1.0, &rhs.blocks[i * nc + k]);
                    for m in subdomains[i].patches() {
                        let pos = subdomains[i].pbox.position_of(m).unwrap();
                        let test = box_embedding(&spaces[i], &disc, pos);
                        let single = PatchBox::single(m);
                        for l in 0..nc {
                            let q = |a: usize, b: usize| coefficients[m].get(k, l, a, b).clone();
                            let a = assemble_box_matrix(&single, &quad, q, &test, &full)?;
                            s.push_matvec(-1.0, &a, &lift[m][l]);
                        }
                    }
                    new_blocks.push(s.truncate(1e-14));
                }
            }
            rhs = BlockVector { blocks: new_blocks };
            Some(lift)
        }
    };
    let t_rhs = t2.elapsed().as_secs_f64();

    Ok(BlockSystem {
        domain: domain.clone(),
        setup: setup.clone(),
        subdomains,
        spaces,
        coefficients,
        blocks,
        rhs,
        lifting,
        timings: AssemblyTimings { coefficients: t_coef, matrix: t_mat, rhs: t_rhs },
    })
}

/// Greville interpolation of the Dirichlet data on every patch (full patch
/// spaces). Shared faces receive identical traces.
fn lifting_coefficients(domain: &Domain, disc: &Discretization, nc: usize, g: &VectorField) -> Result<Vec<Vec<TuckerVector>>> {
    let kv = disc.patch_knots();
    let n = kv.dim();
    let gr = kv.greville();
    let mut b = DMatrix::zeros(n, n);
    for (r, &x) in gr.iter().enumerate() {
        let (f, v) = kv.eval_values(x)?;
        for (j, val) in v.iter().enumerate() {
            b[(r, f + j)] = *val;
        }
    }
    let binv = b.try_inverse().ok_or_else(|| Error::Config("singular Greville collocation".into()))?;
    let mut out = Vec::new();
    for p in &domain.patches {
        let mut vals: Vec<Tensor3> = vec![Tensor3::zeros([n, n, n]); nc];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let x = p.map([gr[i], gr[j], gr[k]])?;
                    let v = g(x);
                    for c in 0..nc {
                        vals[c].set(i, j, k, v[c]);
                    }
                }
            }
        }
        let mut per = Vec::new();
        for t in vals {
            let c = t.mode_product(0, &binv).mode_product(1, &binv).mode_product(2, &binv);
            per.push(TuckerVector::from_dense(&c, 1e-14, usize::MAX)?);
        }
        out.push(per);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::lshape;

    #[test]
    fn lshape_ranks_and_symmetry() {
        let d = lshape();
        let sys = assemble(&d, &ProblemSetup::elasticity(2, 2)).unwrap();
        for (i, j, k, l, r) in sys.rank_report() {
            let expect = if k == l { [3, 3, 3] } else { [2, 2, 2] };
            assert_eq!(r, expect, "block ({i},{j},{k},{l})");
        }
        let a = sys.block(0, 1, 0, 2).unwrap().densify(usize::MAX).unwrap();
        let b = sys.block(1, 0, 2, 0).unwrap().densify(usize::MAX).unwrap();
        assert!((a - b.transpose()).norm() < 1e-14);
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn tucker_matches_pointwise_reference() {
        for (d, mode) in [(lshape(), Mode::Elasticity), (crate::geometry::cross3d(), Mode::Scalar)] {
            let setup = if mode == Mode::Scalar { ProblemSetup::scalar(2, 2) } else { ProblemSetup::elasticity(2, 2) };
            let sys = assemble(&d, &setup).unwrap();
            let a = sys.densify(10_000).unwrap();
            let (r, f) = reference_dense(&sys, CoefficientSource::Exact).unwrap();
            assert!(rel(&a, &r) < 1e-12, "{}: {}", d.name, rel(&a, &r));
            let g = sys.rhs_dense().unwrap();
            assert!((g - &f).norm() / f.norm() < 1e-12);
        }
    }

    #[test]
    fn matrix_free_matches_dense() {
        let d = crate::geometry::thick_ring();
        let sys = assemble(&d, &ProblemSetup::elasticity(2, 2)).unwrap();
        let (r, _) = reference_dense(&sys, CoefficientSource::Exact).unwrap();
        let op = ReferenceOperator::new(&sys).unwrap();
        let dims = sys.block_dims();
        let x = nalgebra::DVector::from_fn(r.ncols(), |i, _| ((i * 7919) % 101) as f64 / 101.0 - 0.5);
        let y = flatten(&op.apply(&unflatten(&x, &dims)));
        let z = &r * &x;
        assert!((y - &z).norm() / z.norm() < 1e-12);
        let t = flatten(&sys.apply_full(&unflatten(&x, &dims)));
        assert!((t - &z).norm() / z.norm() < 1e-6);
    }
}
