//! Tucker-format vectors and matrices.
//!
//! A vector of size `n1 n2 n3` is `Σ core[r1,r2,r3] v3 ⊗ v2 ⊗ v1` with factor
//! matrices `V_d` of size `n_d × R_d`; the first direction runs fastest in
//! the linear index. A matrix is `Σ core[r1,r2,r3] A3 ⊗ A2 ⊗ A1` with dense
//! factor matrices per direction.
//!
//! Sums and matrix-vector products are formed lazily in [`LazySum`], so the
//! block-diagonal or Kronecker cores they imply never have to be built before
//! truncation.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{left_svd, Tensor3};

// ---------------------------------------------------------------------------
// Tucker vectors
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct TuckerVector {
    dims: [usize; 3],
    factors: [DMatrix<f64>; 3],
    core: Tensor3,
}

impl TuckerVector {
    pub fn new(factors: [DMatrix<f64>; 3], core: Tensor3) -> Result<Self> {
        let dims = [factors[0].nrows(), factors[1].nrows(), factors[2].nrows()];
        for d in 0..3 {
            if factors[d].ncols() != core.dims[d] {
                return Err(Error::DimensionMismatch(format!(
                    "factor {} has {} columns but core extent is {}",
                    d + 1,
                    factors[d].ncols(),
                    core.dims[d]
                )));
            }
        }
        Ok(TuckerVector { dims, factors, core })
    }

    /// Zero vector with ranks `(1, 1, 1)`.
    pub fn zeros(dims: [usize; 3]) -> Self {
        let f = |n: usize| {
            let mut m = DMatrix::zeros(n, 1);
            if n > 0 {
                m[(0, 0)] = 1.0;
            }
            m
        };
        TuckerVector { dims, factors: [f(dims[0]), f(dims[1]), f(dims[2])], core: Tensor3::zeros([1, 1, 1]) }
    }

    /// Rank-one vector `a3 ⊗ a2 ⊗ a1`.
    pub fn rank_one(a1: &[f64], a2: &[f64], a3: &[f64]) -> Self {
        let col = |a: &[f64]| DMatrix::from_column_slice(a.len(), 1, a);
        TuckerVector {
            dims: [a1.len(), a2.len(), a3.len()],
            factors: [col(a1), col(a2), col(a3)],
            core: Tensor3::from_vec([1, 1, 1], vec![1.0]),
        }
    }

    /// HOSVD compression of a full tensor. `cap` bounds the number of entries.
    pub fn from_dense(t: &Tensor3, eps: f64, cap: usize) -> Result<Self> {
        if t.len() > cap {
            return Err(Error::SizeCap { size: t.len(), cap });
        }
        let mut s = LazySum::new(t.dims);
        s.push_raw(
            [DMatrix::identity(t.dims[0], t.dims[0]), DMatrix::identity(t.dims[1], t.dims[1]), DMatrix::identity(t.dims[2], t.dims[2])],
            t.clone(),
            1.0,
        );
        Ok(s.truncate(eps))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn ranks(&self) -> [usize; 3] {
        self.core.dims
    }

    pub fn factor(&self, d: usize) -> &DMatrix<f64> {
        &self.factors[d]
    }

    pub fn core(&self) -> &Tensor3 {
        &self.core
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of stored reals: `R1 R2 R3 + Σ R_d n_d`.
    pub fn storage(&self) -> usize {
        self.core.len() + (0..3).map(|d| self.dims[d] * self.core.dims[d]).sum::<usize>()
    }

    /// Storage of the factor matrices only.
    pub fn factor_storage(&self) -> usize {
        (0..3).map(|d| self.dims[d] * self.core.dims[d]).sum()
    }

    pub fn densify(&self, cap: usize) -> Result<Tensor3> {
        let n = self.len();
        if n > cap {
            return Err(Error::SizeCap { size: n, cap });
        }
        Ok(self
            .core
            .mode_product(0, &self.factors[0])
            .mode_product(1, &self.factors[1])
            .mode_product(2, &self.factors[2]))
    }

    /// Euclidean inner product, computed through the cores.
    pub fn dot(&self, other: &TuckerVector) -> f64 {
        assert_eq!(self.dims, other.dims, "dot of vectors with different sizes");
        let mut w = other.core.clone();
        for d in 0..3 {
            let m = self.factors[d].transpose() * &other.factors[d];
            w = w.mode_product(d, &m);
        }
        self.core.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
    }

    /// Frobenius norm of the core after QR of every factor; avoids the
    /// cancellation of `sqrt(dot(self, self))` for redundant factors.
    pub fn norm(&self) -> f64 {
        let mut c = self.core.clone();
        for d in 0..3 {
            let f = &self.factors[d];
            if f.ncols() == 0 {
                return 0.0;
            }
            c = c.mode_product(d, &f.clone().qr().r());
        }
        c.norm()
    }

    pub fn scale(&mut self, a: f64) {
        self.core.scale(a);
    }

    pub fn scaled(&self, a: f64) -> TuckerVector {
        let mut v = self.clone();
        v.scale(a);
        v
    }

    /// Exact sum: factors are concatenated and the core is block diagonal,
    /// so ranks add componentwise.
    pub fn add(&self, other: &TuckerVector) -> TuckerVector {
        let mut s = LazySum::new(self.dims);
        s.push(1.0, self);
        s.push(1.0, other);
        s.materialize()
    }

    /// Relative truncation: `‖v − ṽ‖ ≤ eps ‖v‖`. With `eps = 0` only the
    /// orthonormalization is performed.
    pub fn truncate_rel(&self, eps: f64) -> TuckerVector {
        let mut s = LazySum::new(self.dims);
        s.push(1.0, self);
        s.truncate(eps)
    }

    /// Evaluate one entry.
    pub fn entry(&self, i: usize, j: usize, k: usize) -> f64 {
        let [r1, r2, r3] = self.core.dims;
        let mut s = 0.0;
        for c in 0..r3 {
            let f3 = self.factors[2][(k, c)];
            for b in 0..r2 {
                let f23 = f3 * self.factors[1][(j, b)];
                for a in 0..r1 {
                    s += self.core.get(a, b, c) * f23 * self.factors[0][(i, a)];
                }
            }
        }
        s
    }

    /// Text dump: header lines, then factor matrices row by row, then the
    /// core with the first index running fastest.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let r = self.ranks();
        writeln!(s, "tucker_vector").unwrap();
        writeln!(s, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2]).unwrap();
        writeln!(s, "ranks {} {} {}", r[0], r[1], r[2]).unwrap();
        for d in 0..3 {
            writeln!(s, "factor {}", d + 1).unwrap();
            for i in 0..self.dims[d] {
                let row: Vec<String> = (0..r[d]).map(|j| format!("{:.17e}", self.factors[d][(i, j)])).collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        }
        writeln!(s, "core").unwrap();
        for x in &self.core.data {
            writeln!(s, "{:.17e}", x).unwrap();
        }
        s
    }

    pub fn parse_dump(text: &str) -> Result<TuckerVector> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.trim().to_string()))
                .ok_or_else(|| Error::Parse { line: 0, msg: format!("unexpected end of input, expected {what}") })
        };
        let perr = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
        let nums = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("bad number `{t}`") }))
                .collect()
        };
        let (l, h) = next("header")?;
        if h != "tucker_vector" {
            return Err(perr(l, "expected `tucker_vector`"));
        }
        let mut triple = |key: &str| -> Result<[usize; 3]> {
            let (l, s) = next(key)?;
            let t: Vec<&str> = s.split_whitespace().collect();
            if t.len() != 4 || t[0] != key {
                return Err(perr(l, &format!("expected `{key} a b c`")));
            }
            let mut out = [0; 3];
            for d in 0..3 {
                out[d] = t[d + 1].parse().map_err(|_| perr(l, "bad integer"))?;
            }
            Ok(out)
        };
        let dims = triple("dims")?;
        let ranks = triple("ranks")?;
        let mut factors: Vec<DMatrix<f64>> = Vec::new();
        for d in 0..3 {
            let (l, s) = next("factor header")?;
            if s != format!("factor {}", d + 1) {
                return Err(perr(l, "expected factor header"));
            }
            let mut m = DMatrix::zeros(dims[d], ranks[d]);
            for i in 0..dims[d] {
                let (l, s) = next("factor row")?;
                let v = nums(l, &s)?;
                if v.len() != ranks[d] {
                    return Err(perr(l, "wrong number of entries in factor row"));
                }
                for (j, x) in v.into_iter().enumerate() {
                    m[(i, j)] = x;
                }
            }
            factors.push(m);
        }
        let (l, s) = next("core")?;
        if s != "core" {
            return Err(perr(l, "expected `core`"));
        }
        let n = ranks[0] * ranks[1] * ranks[2];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let (l, s) = next("core entry")?;
            data.push(s.parse::<f64>().map_err(|_| perr(l, "bad number"))?);
        }
        let f3 = factors.pop().unwrap();
        let f2 = factors.pop().unwrap();
        let f1 = factors.pop().unwrap();
        TuckerVector::new([f1, f2, f3], Tensor3::from_vec(ranks, data))
    }
}

// ---------------------------------------------------------------------------
// Lazy sums and fused truncation
// ---------------------------------------------------------------------------

/// A sum of Tucker terms that share concatenated factor matrices. Each block
/// places a (scaled) core at given column offsets of the factors.
#[derive(Clone, Debug)]
pub struct LazySum {
    dims: [usize; 3],
    cols: [Vec<DMatrix<f64>>; 3],
    width: [usize; 3],
    cores: Vec<Arc<Tensor3>>,
    blocks: Vec<(usize, [usize; 3], f64)>,
}

impl LazySum {
    pub fn new(dims: [usize; 3]) -> Self {
        LazySum { dims, cols: [vec![], vec![], vec![]], width: [0; 3], cores: vec![], blocks: vec![] }
    }

    fn push_raw(&mut self, factors: [DMatrix<f64>; 3], core: Tensor3, scale: f64) {
        let mut off = [0; 3];
        for (d, f) in factors.into_iter().enumerate() {
            assert_eq!(f.nrows(), self.dims[d], "term size mismatch");
            off[d] = self.width[d];
            self.width[d] += f.ncols();
            self.cols[d].push(f);
        }
        self.cores.push(Arc::new(core));
        self.blocks.push((self.cores.len() - 1, off, scale));
    }

    /// Add `scale · v`.
    pub fn push(&mut self, scale: f64, v: &TuckerVector) {
        self.push_raw(v.factors.clone(), v.core.clone(), scale);
    }

    /// Add `scale · A v` without forming the Kronecker core.
    pub fn push_matvec(&mut self, scale: f64, a: &TuckerMatrix, v: &TuckerVector) {
        assert_eq!(a.cols, v.dims, "matvec size mismatch");
        assert_eq!(a.rows, self.dims, "matvec output size mismatch");
        let rv = v.ranks();
        let mut base = [0; 3];
        for d in 0..3 {
            base[d] = self.width[d];
            for f in &a.factors[d] {
                let c = f * &v.factors[d];
                self.width[d] += c.ncols();
                self.cols[d].push(c);
            }
        }
        self.cores.push(Arc::new(v.core.clone()));
        let ci = self.cores.len() - 1;
        let [b1, b2, b3] = a.core.dims;
        for k in 0..b3 {
            for j in 0..b2 {
                for i in 0..b1 {
                    let c = a.core.get(i, j, k);
                    if c != 0.0 {
                        let off = [base[0] + i * rv[0], base[1] + j * rv[1], base[2] + k * rv[2]];
                        self.blocks.push((ci, off, scale * c));
                    }
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    fn concat(&self, d: usize) -> DMatrix<f64> {
        let n = self.dims[d];
        let mut m = DMatrix::zeros(n, self.width[d]);
        let mut c = 0;
        for f in &self.cols[d] {
            m.columns_mut(c, f.ncols()).copy_from(f);
            c += f.ncols();
        }
        m
    }

    /// Exact Tucker vector with the full (block-sparse) core.
    pub fn materialize(&self) -> TuckerVector {
        if self.blocks.is_empty() {
            return TuckerVector::zeros(self.dims);
        }
        let mut core = Tensor3::zeros(self.width);
        for &(ci, off, s) in &self.blocks {
            core.add_block(off, &self.cores[ci], s);
        }
        TuckerVector { dims: self.dims, factors: [self.concat(0), self.concat(1), self.concat(2)], core }
    }

    /// Orthonormalize the factors, project every block onto the new bases and
    /// apply sequentially truncated HOSVD with a budget of `eps²/3 ‖v‖²` per mode.
    pub fn truncate(&self, eps: f64) -> TuckerVector {
        if self.blocks.is_empty() {
            return TuckerVector::zeros(self.dims);
        }
        let mut q = Vec::with_capacity(3);
        let mut t = Vec::with_capacity(3);
        for d in 0..3 {
            let f = self.concat(d);
            let qr = f.qr();
            q.push(qr.q());
            t.push(qr.r());
        }
        let s = [t[0].nrows(), t[1].nrows(), t[2].nrows()];
        let mut core = Tensor3::zeros(s);
        for &(ci, off, sc) in &self.blocks {
            let c = &self.cores[ci];
            let mut x = (**c).clone();
            for d in 0..3 {
                let td = t[d].columns(off[d], c.dims[d]).into_owned();
                x = x.mode_product(d, &td);
            }
            core.axpy(sc, &x);
        }
        let mut factors = [q.remove(0), q.remove(0), q.remove(0)];
        let norm2 = core.norm().powi(2);
        if norm2 == 0.0 || !norm2.is_finite() {
            if !norm2.is_finite() {
                let mut z = TuckerVector::zeros(self.dims);
                z.core.data[0] = f64::NAN;
                return z;
            }
            return TuckerVector::zeros(self.dims);
        }
        let budget = eps * eps / 3.0 * norm2;
        for d in 0..3 {
            let (u, sv) = left_svd(&core.unfold(d));
            let r = if eps > 0.0 { truncation_rank(&sv, budget) } else { sv.len().max(1) };
            let ur = u.columns(0, r).into_owned();
            core = core.mode_product(d, &ur.transpose());
            factors[d] = &factors[d] * ur;
        }
        TuckerVector { dims: self.dims, factors, core }
    }
}

/// Smallest `r >= 1` with `Σ_{i >= r} σ_i² <= budget`.
fn truncation_rank(sv: &[f64], budget: f64) -> usize {
    let mut tail = 0.0;
    let mut r = sv.len();
    while r > 1 {
        let next = tail + sv[r - 1] * sv[r - 1];
        if next > budget {
            break;
        }
        tail = next;
        r -= 1;
    }
    r.max(1)
}

// ---------------------------------------------------------------------------
// Tucker matrices
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct TuckerMatrix {
    rows: [usize; 3],
    cols: [usize; 3],
    factors: [Vec<DMatrix<f64>>; 3],
    core: Tensor3,
}

impl TuckerMatrix {
    pub fn new(factors: [Vec<DMatrix<f64>>; 3], core: Tensor3) -> Result<Self> {
        let mut rows = [0; 3];
        let mut cols = [0; 3];
        for d in 0..3 {
            if factors[d].is_empty() || factors[d].len() != core.dims[d] {
                return Err(Error::DimensionMismatch(format!(
                    "direction {} has {} factors but core extent {}",
                    d + 1,
                    factors[d].len(),
                    core.dims[d]
                )));
            }
            rows[d] = factors[d][0].nrows();
            cols[d] = factors[d][0].ncols();
            if factors[d].iter().any(|f| f.shape() != (rows[d], cols[d])) {
                return Err(Error::DimensionMismatch(format!("factors of direction {} differ in shape", d + 1)));
            }
        }
        Ok(TuckerMatrix { rows, cols, factors, core })
    }

    /// `Σ_t c_t A3_t ⊗ A2_t ⊗ A1_t` with a diagonal core.
    pub fn from_terms(terms: Vec<(f64, [DMatrix<f64>; 3])>) -> Result<Self> {
        let r = terms.len();
        if r == 0 {
            return Err(Error::DimensionMismatch("no terms".into()));
        }
        let mut core = Tensor3::zeros([r, r, r]);
        let mut f: [Vec<DMatrix<f64>>; 3] = [vec![], vec![], vec![]];
        for (t, (c, [a1, a2, a3])) in terms.into_iter().enumerate() {
            core.set(t, t, t, c);
            f[0].push(a1);
            f[1].push(a2);
            f[2].push(a3);
        }
        TuckerMatrix::new(f, core)
    }

    /// Zero matrix of rank `(1, 1, 1)`.
    pub fn zeros(rows: [usize; 3], cols: [usize; 3]) -> Self {
        TuckerMatrix {
            rows,
            cols,
            factors: [
                vec![DMatrix::zeros(rows[0], cols[0])],
                vec![DMatrix::zeros(rows[1], cols[1])],
                vec![DMatrix::zeros(rows[2], cols[2])],
            ],
            core: Tensor3::zeros([1, 1, 1]),
        }
    }

    /// Sum with concatenated factors and block-diagonal core.
    pub fn concat(parts: &[TuckerMatrix]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::DimensionMismatch("empty sum".into()))?;
        let mut dims = [0; 3];
        let mut f: [Vec<DMatrix<f64>>; 3] = [vec![], vec![], vec![]];
        for p in parts {
            if p.rows != first.rows || p.cols != first.cols {
                return Err(Error::DimensionMismatch("matrix sizes differ".into()));
            }
            for d in 0..3 {
                dims[d] += p.core.dims[d];
                f[d].extend(p.factors[d].iter().cloned());
            }
        }
        let mut core = Tensor3::zeros(dims);
        let mut off = [0; 3];
        for p in parts {
            core.add_block(off, &p.core, 1.0);
            for d in 0..3 {
                off[d] += p.core.dims[d];
            }
        }
        TuckerMatrix::new(f, core)
    }

    pub fn rows(&self) -> [usize; 3] {
        self.rows
    }

    pub fn cols(&self) -> [usize; 3] {
        self.cols
    }

    pub fn ranks(&self) -> [usize; 3] {
        self.core.dims
    }

    pub fn factors(&self, d: usize) -> &[DMatrix<f64>] {
        &self.factors[d]
    }

    pub fn core(&self) -> &Tensor3 {
        &self.core
    }

    pub fn storage(&self) -> usize {
        self.core.len() + (0..3).map(|d| self.factors[d].len() * self.rows[d] * self.cols[d]).sum::<usize>()
    }

    pub fn transpose(&self) -> TuckerMatrix {
        let t = |v: &Vec<DMatrix<f64>>| v.iter().map(|m| m.transpose()).collect::<Vec<_>>();
        TuckerMatrix {
            rows: self.cols,
            cols: self.rows,
            factors: [t(&self.factors[0]), t(&self.factors[1]), t(&self.factors[2])],
            core: self.core.clone(),
        }
    }

    pub fn scaled(&self, a: f64) -> TuckerMatrix {
        let mut m = self.clone();
        m.core.scale(a);
        m
    }

    /// Exact product; ranks multiply and the core is the Kronecker product of the cores.
    pub fn matvec(&self, v: &TuckerVector) -> TuckerVector {
        let mut s = LazySum::new(self.rows);
        s.push_matvec(1.0, self, v);
        s.materialize()
    }

    /// Apply to a full tensor.
    pub fn apply_dense(&self, x: &Tensor3) -> Tensor3 {
        let mut y = Tensor3::zeros(self.rows);
        let [b1, b2, b3] = self.core.dims;
        for k in 0..b3 {
            for j in 0..b2 {
                for i in 0..b1 {
                    let c = self.core.get(i, j, k);
                    if c != 0.0 {
                        let z = x
                            .mode_product(0, &self.factors[0][i])
                            .mode_product(1, &self.factors[1][j])
                            .mode_product(2, &self.factors[2][k]);
                        y.axpy(c, &z);
                    }
                }
            }
        }
        y
    }

    /// Dense matrix `Σ core · A3 ⊗ A2 ⊗ A1`.
    pub fn densify(&self, cap: usize) -> Result<DMatrix<f64>> {
        let nr: usize = self.rows.iter().product();
        let nc: usize = self.cols.iter().product();
        if nr * nc > cap {
            return Err(Error::SizeCap { size: nr * nc, cap });
        }
        let mut m = DMatrix::zeros(nr, nc);
        let [b1, b2, b3] = self.core.dims;
        for k in 0..b3 {
            for j in 0..b2 {
                for i in 0..b1 {
                    let c = self.core.get(i, j, k);
                    if c != 0.0 {
                        let kr = self.factors[2][k].kronecker(&self.factors[1][j]).kronecker(&self.factors[0][i]);
                        m += kr * c;
                    }
                }
            }
        }
        Ok(m)
    }

    /// Number of nonzero core entries, i.e. Kronecker terms in a product.
    pub fn nnz_core(&self) -> usize {
        self.core.data.iter().filter(|&&c| c != 0.0).count()
    }
}

// ---------------------------------------------------------------------------
// Block vectors
// ---------------------------------------------------------------------------

/// A vector made of Tucker blocks, one per (subdomain, component) pair.
#[derive(Clone, Debug)]
pub struct BlockVector {
    pub blocks: Vec<TuckerVector>,
}

impl BlockVector {
    pub fn zeros(dims: &[[usize; 3]]) -> Self {
        BlockVector { blocks: dims.iter().map(|&d| TuckerVector::zeros(d)).collect() }
    }

    pub fn dims(&self) -> Vec<[usize; 3]> {
        self.blocks.iter().map(|b| b.dims()).collect()
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    pub fn scaled(&self, a: f64) -> BlockVector {
        BlockVector { blocks: self.blocks.iter().map(|b| b.scaled(a)).collect() }
    }

    pub fn max_rank(&self) -> usize {
        self.blocks.iter().flat_map(|b| b.ranks()).max().unwrap_or(0)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.core.data.iter().all(|x| x.is_finite()))
    }

    /// Blockwise `truncate(a x + b y, eps)`.
    pub fn axpby_truncated(a: f64, x: &BlockVector, b: f64, y: &BlockVector, eps: f64) -> BlockVector {
        use rayon::prelude::*;
        let blocks = x
            .blocks
            .par_iter()
            .zip(&y.blocks)
            .map(|(xb, yb)| {
                let mut s = LazySum::new(xb.dims());
                s.push(a, xb);
                s.push(b, yb);
                s.truncate(eps)
            })
            .collect();
        BlockVector { blocks }
    }

    pub fn truncate_rel(&self, eps: f64) -> BlockVector {
        use rayon::prelude::*;
        BlockVector { blocks: self.blocks.par_iter().map(|b| b.truncate_rel(eps)).collect() }
    }
}

/// Outcome of [`truncate_dynamic`].
#[derive(Clone, Debug)]
pub struct DynamicTruncation {
    pub vector: BlockVector,
    pub eps: f64,
    pub attempts: usize,
}

/// Dynamic truncation of the trial update `u + ω p`.
///
/// Starting from `eps_start`, the trial is truncated blockwise and accepted
/// when the truncated increment `Δũ = ũ − u` satisfies
/// `|Δũ·Δu / ‖Δu‖² − 1| <= delta` with `Δu = ω p`. Otherwise the tolerance is
/// multiplied by `alpha` (never below `eps_min`) and the truncation repeated.
/// At `eps_min` the truncation is accepted unconditionally.
pub fn truncate_dynamic(
    u: &BlockVector,
    p: &BlockVector,
    omega: f64,
    eps_start: f64,
    delta: f64,
    alpha: f64,
    eps_min: f64,
) -> DynamicTruncation {
    let du_norm2 = omega * omega * p.dot(p);
    let u_dot_p = u.dot(p);
    let mut eps = eps_start.max(eps_min);
    let mut attempts = 0;
    loop {
        attempts += 1;
        let trial = BlockVector::axpby_truncated(1.0, u, omega, p, eps);
        if eps <= eps_min || du_norm2 == 0.0 {
            return DynamicTruncation { vector: trial, eps, attempts };
        }
        // Δũ·Δu = ω (ũ·p − u·p)
        let num = omega * (trial.dot(p) - u_dot_p);
        let ratio = num / du_norm2;
        if (ratio - 1.0).abs() <= delta {
            return DynamicTruncation { vector: trial, eps, attempts };
        }
        eps = (alpha * eps).max(eps_min);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_tucker(rng: &mut impl Rng, dims: [usize; 3], ranks: [usize; 3]) -> TuckerVector {
        let f = |rng: &mut dyn rand::RngCore, n: usize, r: usize| DMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
        let factors = [f(rng, dims[0], ranks[0]), f(rng, dims[1], ranks[1]), f(rng, dims[2], ranks[2])];
        let core = Tensor3::from_fn(ranks, |_, _, _| rng.gen_range(-1.0..1.0));
        TuckerVector::new(factors, core).unwrap()
    }

    fn dense_diff(a: &TuckerVector, b: &TuckerVector) -> f64 {
        let x = a.densify(usize::MAX).unwrap();
        let y = b.densify(usize::MAX).unwrap();
        x.data.iter().zip(&y.data).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn storage_and_add_ranks() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let v = random_tucker(&mut rng, [5, 6, 7], [2, 3, 2]);
        assert_eq!(v.storage(), 12 + 10 + 18 + 14);
        let w = random_tucker(&mut rng, [5, 6, 7], [1, 2, 3]);
        let s = v.add(&w);
        assert_eq!(s.ranks(), [3, 5, 5]);
        let (x, y, z) = (v.densify(1000).unwrap(), w.densify(1000).unwrap(), s.densify(1000).unwrap());
        for i in 0..z.len() {
            assert!((x.data[i] + y.data[i] - z.data[i]).abs() < 1e-12);
        }
        assert!((v.dot(&w) - x.data.iter().zip(&y.data).map(|(a, b)| a * b).sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn truncation_orthonormalizes_and_removes_duplicates() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let v = random_tucker(&mut rng, [8, 9, 10], [2, 3, 4]);
        let t0 = v.truncate_rel(0.0);
        assert!(dense_diff(&v, &t0) < 1e-12 * v.norm());
        for d in 0..3 {
            let f = t0.factor(d);
            assert!((f.transpose() * f - DMatrix::identity(f.ncols(), f.ncols())).norm() < 1e-12);
        }
        let vv = v.add(&v).truncate_rel(1e-14);
        assert_eq!(vv.ranks(), v.ranks());
    }

    #[test]
    fn matvec_ranks_multiply() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let v = random_tucker(&mut rng, [4, 5, 3], [2, 2, 1]);
        let mk = |rng: &mut rand::rngs::StdRng, n: usize| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = TuckerMatrix::new(
            [vec![mk(&mut rng, 4), mk(&mut rng, 4)], vec![mk(&mut rng, 5), mk(&mut rng, 5)], vec![mk(&mut rng, 3), mk(&mut rng, 3)]],
            Tensor3::from_fn([2, 2, 2], |i, j, k| (i + 2 * j + 3 * k) as f64 - 2.5),
        )
        .unwrap();
        let y = a.matvec(&v);
        assert_eq!(y.ranks(), [4, 4, 2]);
        let dense = a.densify(usize::MAX).unwrap();
        let x = v.densify(usize::MAX).unwrap();
        let yd = &dense * nalgebra::DVector::from_vec(x.data.clone());
        let yt = y.densify(usize::MAX).unwrap();
        for i in 0..yt.len() {
            assert!((yd[i] - yt.data[i]).abs() < 1e-11);
        }
        let ya = a.apply_dense(&x);
        for i in 0..yt.len() {
            assert!((ya.data[i] - yt.data[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let v = random_tucker(&mut rng, [3, 4, 2], [2, 1, 2]);
        let w = TuckerVector::parse_dump(&v.dump()).unwrap();
        assert_eq!(w.ranks(), v.ranks());
        assert!(dense_diff(&v, &w) == 0.0);
        assert!(TuckerVector::parse_dump("tucker_vector\ndims 1 2\n").is_err());
    }

    #[test]
    fn size_caps_are_enforced() {
        let v = TuckerVector::zeros([10, 10, 10]);
        assert!(matches!(v.densify(999), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn dynamic_truncation_accepts_exact_update() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let u = BlockVector { blocks: vec![random_tucker(&mut rng, [6, 6, 6], [2, 2, 2])] };
        let p = BlockVector { blocks: vec![random_tucker(&mut rng, [6, 6, 6], [2, 2, 2])] };
        let r = truncate_dynamic(&u, &p, 0.5, 1e-9, 1e-3, 0.5, 1e-12);
        assert_eq!(r.attempts, 1);
        assert!(r.vector.max_rank() <= 4);
        // A loose start is tightened until the increment test passes.
        let r = truncate_dynamic(&u, &p, 0.5, 0.9, 1e-3, 0.5, 1e-12);
        let du = p.scaled(0.5);
        let dt = BlockVector::axpby_truncated(1.0, &r.vector, -1.0, &u, 0.0);
        let ratio = dt.dot(&du) / du.dot(&du);
        assert!((ratio - 1.0).abs() <= 1e-3 || r.eps == 1e-12);
        assert!(r.eps < 0.9);
    }
}
