//! Low-rank Tucker approximation of trivariate functions on `[0, 1]³`.
//!
//! Functions are sampled on tensor Chebyshev grids whose size is refined per
//! direction (9, 17, 33, ... points) until the trailing Chebyshev
//! coefficients fall below the tolerance. The value tensor is then
//! compressed by HOSVD and each factor column is turned back into a
//! Chebyshev series. Factor functions are piecewise: gluing two functions
//! along a direction produces two panels there.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{gauss_legendre, Tensor3};
use crate::tucker::TuckerVector;

/// Largest grid size per direction.
pub const MAX_POINTS: usize = 257;

/// Chebyshev extreme points on `[-1, 1]`, ascending.
pub fn cheb_points(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|j| -(std::f64::consts::PI * j as f64 / (n - 1) as f64).cos()).collect()
}

/// Matrix mapping values at [`cheb_points`] to Chebyshev coefficients.
pub fn vals_to_coeffs_matrix(n: usize) -> DMatrix<f64> {
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let m = (n - 1) as f64;
    DMatrix::from_fn(n, n, |k, j| {
        // x_j = -cos(pi j / m) = cos(pi (m - j) / m)
        let theta = std::f64::consts::PI * (m - j as f64) / m;
        let wj = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        let wk = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        2.0 / m * wj * wk * (k as f64 * theta).cos()
    })
}

/// Clenshaw evaluation of `Σ c_k T_k(t)`.
pub fn clenshaw(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

/// Map `[0, 1]` grid points.
fn unit_points(n: usize) -> Vec<f64> {
    cheb_points(n).into_iter().map(|x| 0.5 * (x + 1.0)).collect()
}

// ---------------------------------------------------------------------------
// Piecewise Chebyshev factor functions
// ---------------------------------------------------------------------------

/// `R` univariate functions sharing a panel decomposition of their interval.
#[derive(Clone, Debug)]
pub struct FactorSet {
    breaks: Vec<f64>,
    coeffs: Vec<DMatrix<f64>>,
}

impl FactorSet {
    fn single(coeffs: DMatrix<f64>) -> FactorSet {
        FactorSet { breaks: vec![0.0, 1.0], coeffs: vec![coeffs] }
    }

    pub fn rank(&self) -> usize {
        self.coeffs[0].ncols()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    fn panel_of(&self, x: f64) -> usize {
        let np = self.coeffs.len();
        for p in 0..np - 1 {
            if x <= self.breaks[p + 1] {
                return p;
            }
        }
        np - 1
    }

    /// Values of all functions at `x`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let p = self.panel_of(x);
        let (a, b) = (self.breaks[p], self.breaks[p + 1]);
        let t = ((2.0 * x - a - b) / (b - a)).clamp(-1.0, 1.0);
        let c = &self.coeffs[p];
        (0..c.ncols()).map(|r| clenshaw(c.column(r).as_slice(), t)).collect()
    }

    /// `points.len() × R` matrix of values.
    pub fn eval_many(&self, points: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(points.len(), self.rank());
        for (i, &x) in points.iter().enumerate() {
            for (r, v) in self.eval(x).into_iter().enumerate() {
                m[(i, r)] = v;
            }
        }
        m
    }

    /// Linear recombination: new function `j` is `Σ_r f_r w[r, j]`.
    fn combine(&self, w: &DMatrix<f64>) -> FactorSet {
        FactorSet { breaks: self.breaks.clone(), coeffs: self.coeffs.iter().map(|c| c * w).collect() }
    }

    /// Same functions re-expanded on a finer panel decomposition.
    fn on_breaks(&self, breaks: &[f64]) -> FactorSet {
        if breaks == self.breaks.as_slice() {
            return self.clone();
        }
        let mut coeffs = Vec::with_capacity(breaks.len() - 1);
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let old = self.panel_of(0.5 * (a + b));
            let n = self.coeffs[old].nrows();
            let pts: Vec<f64> = cheb_points(n).iter().map(|t| a + 0.5 * (b - a) * (t + 1.0)).collect();
            let vals = self.eval_many(&pts);
            coeffs.push(vals_to_coeffs_matrix(n) * vals);
        }
        FactorSet { breaks: breaks.to_vec(), coeffs }
    }

    /// Concatenate the functions of two sets (union of breakpoints).
    fn hcat(a: &FactorSet, b: &FactorSet) -> FactorSet {
        let mut br: Vec<f64> = a.breaks.iter().chain(&b.breaks).copied().collect();
        br.sort_by(f64::total_cmp);
        br.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
        let (a, b) = (a.on_breaks(&br), b.on_breaks(&br));
        let coeffs = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(ca, cb)| {
                let n = ca.nrows().max(cb.nrows());
                let mut m = DMatrix::zeros(n, ca.ncols() + cb.ncols());
                m.view_mut((0, 0), ca.shape()).copy_from(ca);
                m.view_mut((0, ca.ncols()), cb.shape()).copy_from(cb);
                m
            })
            .collect();
        FactorSet { breaks: br, coeffs }
    }

    /// Place `a` on `[0, 1/2]` and `b` on `[1/2, 1]`, each zero on the other half.
    fn glue(a: &FactorSet, b: &FactorSet) -> FactorSet {
        let ra = a.rank();
        let rb = b.rank();
        let mut breaks: Vec<f64> = a.breaks.iter().map(|x| 0.5 * x).collect();
        breaks.extend(b.breaks.iter().skip(1).map(|x| 0.5 + 0.5 * x));
        let mut coeffs = Vec::new();
        for c in &a.coeffs {
            let mut m = DMatrix::zeros(c.nrows(), ra + rb);
            m.view_mut((0, 0), c.shape()).copy_from(c);
            coeffs.push(m);
        }
        for c in &b.coeffs {
            let mut m = DMatrix::zeros(c.nrows(), ra + rb);
            m.view_mut((0, ra), c.shape()).copy_from(c);
            coeffs.push(m);
        }
        FactorSet { breaks, coeffs }
    }

    /// Values at Gauss points scaled by `sqrt(w)`: an isometry from the
    /// polynomial span into Euclidean space for the `L²(0, 1)` product.
    fn weighted_samples(&self) -> DMatrix<f64> {
        let mut rows: Vec<DMatrix<f64>> = Vec::new();
        for (p, c) in self.coeffs.iter().enumerate() {
            let (a, b) = (self.breaks[p], self.breaks[p + 1]);
            let (gx, gw) = gauss_legendre(c.nrows() + 1);
            let mut m = DMatrix::zeros(gx.len(), c.ncols());
            for (i, &t) in gx.iter().enumerate() {
                let s = (0.5 * (b - a) * gw[i]).sqrt();
                for r in 0..c.ncols() {
                    m[(i, r)] = s * clenshaw(c.column(r).as_slice(), t);
                }
            }
            rows.push(m);
        }
        let n: usize = rows.iter().map(|m| m.nrows()).sum();
        let mut out = DMatrix::zeros(n, self.rank());
        let mut o = 0;
        for m in rows {
            out.view_mut((o, 0), m.shape()).copy_from(&m);
            o += m.nrows();
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Low-rank trivariate functions
// ---------------------------------------------------------------------------

/// `f(ξ) = Σ core[r1,r2,r3] f1_r1(ξ1) f2_r2(ξ2) f3_r3(ξ3)`.
#[derive(Clone, Debug)]
pub struct LowRankFunc3 {
    factors: [FactorSet; 3],
    core: Tensor3,
    zero: bool,
}

impl LowRankFunc3 {
    pub fn constant(c: f64) -> LowRankFunc3 {
        let one = || FactorSet::single(DMatrix::from_element(1, 1, 1.0));
        LowRankFunc3 { factors: [one(), one(), one()], core: Tensor3::from_vec([1, 1, 1], vec![c]), zero: c == 0.0 }
    }

    pub fn zero() -> LowRankFunc3 {
        LowRankFunc3::constant(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn ranks(&self) -> [usize; 3] {
        self.core.dims
    }

    pub fn core(&self) -> &Tensor3 {
        &self.core
    }

    pub fn factors(&self, d: usize) -> &FactorSet {
        &self.factors[d]
    }

    pub fn scaled(&self, a: f64) -> LowRankFunc3 {
        let mut f = self.clone();
        f.core.scale(a);
        f.zero = f.zero || a == 0.0;
        f
    }

    pub fn eval(&self, xi: [f64; 3]) -> f64 {
        if self.zero {
            return 0.0;
        }
        let v: Vec<Vec<f64>> = (0..3).map(|d| self.factors[d].eval(xi[d])).collect();
        let [r1, r2, r3] = self.core.dims;
        let mut s = 0.0;
        for k in 0..r3 {
            for j in 0..r2 {
                let w = v[1][j] * v[2][k];
                for i in 0..r1 {
                    s += self.core.get(i, j, k) * v[0][i] * w;
                }
            }
        }
        s
    }

    /// Values on a tensor grid.
    pub fn eval_grid(&self, pts: [&[f64]; 3]) -> Tensor3 {
        if self.zero {
            return Tensor3::zeros([pts[0].len(), pts[1].len(), pts[2].len()]);
        }
        let mut t = self.core.clone();
        for d in 0..3 {
            t = t.mode_product(d, &self.factors[d].eval_many(pts[d]));
        }
        t
    }

    /// `scale · g`, where `g` equals `a` (rescaled) for `ξ_d <= 1/2` and `b`
    /// (rescaled) for `ξ_d > 1/2`. The result is recompressed at `1e-14`.
    pub fn glue_halves(a: &LowRankFunc3, b: &LowRankFunc3, d: usize, scale: f64) -> LowRankFunc3 {
        if a.zero && b.zero {
            return LowRankFunc3::zero();
        }
        let mut factors: Vec<FactorSet> = Vec::with_capacity(3);
        for e in 0..3 {
            if e == d {
                factors.push(FactorSet::glue(&a.factors[e], &b.factors[e]));
            } else {
                factors.push(FactorSet::hcat(&a.factors[e], &b.factors[e]));
            }
        }
        let ra = a.core.dims;
        let rb = b.core.dims;
        let mut core = Tensor3::zeros([ra[0] + rb[0], ra[1] + rb[1], ra[2] + rb[2]]);
        if !a.zero {
            core.add_block([0, 0, 0], &a.core, scale);
        }
        if !b.zero {
            core.add_block(ra, &b.core, scale);
        }
        let f3 = factors.pop().unwrap();
        let f2 = factors.pop().unwrap();
        let f1 = factors.pop().unwrap();
        LowRankFunc3 { factors: [f1, f2, f3], core, zero: false }.recompress(1e-14)
    }

    /// Orthonormalize the factor functions in `L²(0, 1)` and truncate the
    /// core by HOSVD with relative tolerance `tol`.
    pub fn recompress(&self, tol: f64) -> LowRankFunc3 {
        if self.zero {
            return self.clone();
        }
        let mut core = self.core.clone();
        let mut factors = self.factors.clone();
        for d in 0..3 {
            let s = factors[d].weighted_samples();
            let (_, sv, v) = crate::linalg::thin_svd(&s);
            let vt = v.transpose();
            let smax = sv.iter().fold(0.0f64, |m, x| m.max(*x));
            if smax == 0.0 {
                return LowRankFunc3::zero();
            }
            let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > 1e-15 * smax).collect();
            let r = self.core.dims[d];
            let mut w = DMatrix::zeros(r, keep.len());
            let mut t = DMatrix::zeros(keep.len(), r);
            for (c, &i) in keep.iter().enumerate() {
                for j in 0..r {
                    w[(j, c)] = vt[(i, j)] / sv[i];
                    t[(c, j)] = sv[i] * vt[(i, j)];
                }
            }
            factors[d] = factors[d].combine(&w);
            core = core.mode_product(d, &t);
        }
        if core.norm() == 0.0 {
            return LowRankFunc3::zero();
        }
        let id = |n: usize| DMatrix::<f64>::identity(n, n);
        let tv = TuckerVector::new([id(core.dims[0]), id(core.dims[1]), id(core.dims[2])], core)
            .expect("consistent shapes")
            .truncate_rel(tol);
        for d in 0..3 {
            factors[d] = factors[d].combine(tv.factor(d));
        }
        LowRankFunc3 { factors, core: tv.core().clone(), zero: false }
    }
}

// ---------------------------------------------------------------------------
// Adaptive approximation
// ---------------------------------------------------------------------------

/// How the tolerance of a batch of components is scaled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ToleranceScale {
    /// `tol · max |f_c|` for each component separately.
    PerComponent,
    /// `tol · max_c max |f_c|`, shared by all components.
    Shared,
}

fn sample_grid<F>(f: &F, ncomp: usize, n: [usize; 3]) -> Vec<Tensor3>
where
    F: Fn([f64; 3], &mut [f64]) + Sync,
{
    use rayon::prelude::*;
    let p: Vec<Vec<f64>> = n.iter().map(|&k| unit_points(k)).collect();
    let planes: Vec<Vec<f64>> = (0..n[2])
        .into_par_iter()
        .map(|k| {
            let mut out = vec![0.0; ncomp * n[0] * n[1]];
            let mut buf = vec![0.0; ncomp];
            for j in 0..n[1] {
                for i in 0..n[0] {
                    f([p[0][i], p[1][j], p[2][k]], &mut buf);
                    for c in 0..ncomp {
                        out[c * n[0] * n[1] + i + n[0] * j] = buf[c];
                    }
                }
            }
            out
        })
        .collect();
    (0..ncomp)
        .map(|c| {
            let mut t = Tensor3::zeros(n);
            for (k, pl) in planes.iter().enumerate() {
                let m = n[0] * n[1];
                t.data[k * m..(k + 1) * m].copy_from_slice(&pl[c * m..(c + 1) * m]);
            }
            t
        })
        .collect()
}

fn to_coeffs(t: &Tensor3) -> Tensor3 {
    let mut c = t.clone();
    for d in 0..3 {
        c = c.mode_product(d, &vals_to_coeffs_matrix(t.dims[d]));
    }
    c
}

/// Largest coefficient among the last two slices along direction `d`.
fn tail(c: &Tensor3, d: usize) -> f64 {
    let n = c.dims[d];
    if n < 3 {
        return 0.0;
    }
    let mut m = 0.0f64;
    for k in 0..c.dims[2] {
        for j in 0..c.dims[1] {
            for i in 0..c.dims[0] {
                let idx = [i, j, k][d];
                if idx >= n - 2 {
                    m = m.max(c.get(i, j, k).abs());
                }
            }
        }
    }
    m
}

fn compress_values(t: &Tensor3, abs_tol: f64) -> LowRankFunc3 {
    let nrm = t.norm();
    let eps = (abs_tol / nrm).min(1.0);
    let tv = TuckerVector::from_dense(t, eps, usize::MAX).expect("no cap");
    let mut f: Vec<FactorSet> = Vec::new();
    for d in 0..3 {
        let c = vals_to_coeffs_matrix(t.dims[d]) * tv.factor(d);
        f.push(FactorSet::single(c));
    }
    let f3 = f.pop().unwrap();
    let f2 = f.pop().unwrap();
    let f1 = f.pop().unwrap();
    LowRankFunc3 { factors: [f1, f2, f3], core: tv.core().clone(), zero: false }
}

/// Approximate `ncomp` functions evaluated jointly by `f(ξ, out)`.
///
/// The returned functions satisfy `max |f_c − f̃_c| <= tol · scale_c` on a
/// validation grid with twice the resolution, where `scale_c` follows
/// `scale`. Components whose magnitude is below the absolute tolerance are
/// returned as exact zeros.
pub fn approx3_batch<F>(f: F, ncomp: usize, tol: f64, scale: ToleranceScale) -> Result<Vec<LowRankFunc3>>
where
    F: Fn([f64; 3], &mut [f64]) + Sync,
{
    // Probe for constants.
    let probe = sample_grid(&f, ncomp, [5, 5, 5]);
    let mut extra = vec![0.0; ncomp];
    let mut probe_ok = true;
    let off = [[0.137, 0.713, 0.291], [0.862, 0.344, 0.577], [0.419, 0.058, 0.931], [0.671, 0.912, 0.163]];
    let mut spread = vec![0.0f64; ncomp];
    let mut mag = vec![0.0f64; ncomp];
    for c in 0..ncomp {
        let t = &probe[c];
        let (mn, mx) = t.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if !mn.is_finite() || !mx.is_finite() {
            return Err(Error::NonFinite("function sample".into()));
        }
        spread[c] = mx - mn;
        mag[c] = t.max_abs();
    }
    for x in off {
        f(x, &mut extra);
        for c in 0..ncomp {
            if !extra[c].is_finite() {
                return Err(Error::NonFinite("function sample".into()));
            }
            spread[c] = spread[c].max((extra[c] - probe[c].data[0]).abs());
            mag[c] = mag[c].max(extra[c].abs());
        }
    }
    let shared_mag = mag.iter().fold(0.0f64, |m, x| m.max(*x));
    for c in 0..ncomp {
        if spread[c] > 1e-14 * mag[c].max(f64::MIN_POSITIVE) {
            probe_ok = false;
        }
    }
    if probe_ok {
        return Ok((0..ncomp)
            .map(|c| {
                let v = probe[c].data[0];
                let s = match scale {
                    ToleranceScale::PerComponent => mag[c],
                    ToleranceScale::Shared => shared_mag,
                };
                if v.abs() <= tol * s || v == 0.0 {
                    LowRankFunc3::zero()
                } else {
                    LowRankFunc3::constant(v)
                }
            })
            .collect());
    }

    let mut n = [9usize; 3];
    let mut refined_all = 0;
    loop {
        let vals = sample_grid(&f, ncomp, n);
        if vals.iter().any(|t| t.data.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("function sample".into()));
        }
        let mags: Vec<f64> = vals.iter().map(|t| t.max_abs()).collect();
        let smax = mags.iter().fold(0.0f64, |m, x| m.max(*x));
        let abs_tol: Vec<f64> = mags
            .iter()
            .map(|&m| match scale {
                ToleranceScale::PerComponent => tol * m,
                ToleranceScale::Shared => tol * smax,
            })
            .collect();
        let coeffs: Vec<Tensor3> = vals.iter().map(to_coeffs).collect();
        let mut grow = [false; 3];
        for d in 0..3 {
            for c in 0..ncomp {
                if mags[c] > abs_tol[c] && tail(&coeffs[c], d) > abs_tol[c] / 8.0 {
                    grow[d] = true;
                }
            }
        }
        if grow.iter().any(|&g| g) {
            let mut err = 0.0f64;
            for d in 0..3 {
                if grow[d] {
                    if 2 * n[d] - 1 > MAX_POINTS {
                        for c in 0..ncomp {
                            err = err.max(tail(&coeffs[c], d) / mags[c].max(f64::MIN_POSITIVE));
                        }
                        return Err(Error::ChebyshevNoConvergence { max_points: MAX_POINTS, err });
                    }
                    n[d] = 2 * n[d] - 1;
                }
            }
            continue;
        }
        // Compress and validate.
        let mut out = Vec::with_capacity(ncomp);
        for c in 0..ncomp {
            if mags[c] <= abs_tol[c] || mags[c] == 0.0 {
                out.push(LowRankFunc3::zero());
            } else {
                out.push(compress_values(&vals[c], abs_tol[c] / 4.0));
            }
        }
        let vn = n.map(|k| (2 * k - 1).min(2 * MAX_POINTS - 1));
        let worst = validate(&f, ncomp, &out, vn, &abs_tol);
        match worst {
            None => return Ok(out),
            Some(err) => {
                if refined_all >= 2 || n.iter().any(|&k| 2 * k - 1 > MAX_POINTS) {
                    return Err(Error::ChebyshevNoConvergence { max_points: MAX_POINTS, err });
                }
                refined_all += 1;
                n = n.map(|k| 2 * k - 1);
            }
        }
    }
}

/// Returns `None` when every component is within its tolerance, otherwise
/// the largest relative violation.
fn validate<F>(f: &F, ncomp: usize, approx: &[LowRankFunc3], n: [usize; 3], abs_tol: &[f64]) -> Option<f64>
where
    F: Fn([f64; 3], &mut [f64]) + Sync,
{
    let p: Vec<Vec<f64>> = n.iter().map(|&k| unit_points(k)).collect();
    let total = n[0] * n[1] * n[2];
    let mut worst = 0.0f64;
    let mut buf = vec![0.0; ncomp];
    if total <= 150_000 {
        let exact = sample_grid(f, ncomp, n);
        for c in 0..ncomp {
            let a = approx[c].eval_grid([&p[0], &p[1], &p[2]]);
            let e = exact[c].data.iter().zip(&a.data).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            worst = worst.max(e / abs_tol[c].max(f64::MIN_POSITIVE));
        }
    } else {
        // Deterministic subset of the validation grid.
        let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
        for _ in 0..20_000 {
            let mut idx = [0usize; 3];
            for d in 0..3 {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                idx[d] = (state % n[d] as u64) as usize;
            }
            let xi = [p[0][idx[0]], p[1][idx[1]], p[2][idx[2]]];
            f(xi, &mut buf);
            for c in 0..ncomp {
                let e = (buf[c] - approx[c].eval(xi)).abs();
                worst = worst.max(e / abs_tol[c].max(f64::MIN_POSITIVE));
            }
        }
    }
    if worst <= 1.0 {
        None
    } else {
        Some(worst)
    }
}

/// Approximate a single function with relative tolerance `tol`.
pub fn approx3<F>(f: F, tol: f64) -> Result<LowRankFunc3>
where
    F: Fn([f64; 3]) -> f64 + Sync,
{
    let mut v = approx3_batch(|x, out: &mut [f64]| out[0] = f(x), 1, tol, ToleranceScale::PerComponent)?;
    Ok(v.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_round_trip() {
        for n in [1usize, 2, 5, 9, 17] {
            let pts = cheb_points(n);
            let c = vals_to_coeffs_matrix(n) * nalgebra::DVector::from_iterator(n, pts.iter().map(|x| (2.0 * x).exp()));
            for &x in &pts {
                assert!((clenshaw(c.as_slice(), x) - (2.0 * x).exp()).abs() < 1e-9 || n < 9);
            }
        }
    }

    #[test]
    fn separable_function_has_rank_one() {
        let f = approx3(|x| (1.0 + x[0]).recip() * (2.0 * x[1]).cos() * (1.0 + x[2] * x[2]), 1e-10).unwrap();
        assert_eq!(f.ranks(), [1, 1, 1]);
        for p in [[0.1f64, 0.2, 0.3], [0.9, 0.5, 0.77]] {
            let e = (1.0f64 + p[0]).recip() * (2.0f64 * p[1]).cos() * (1.0 + p[2] * p[2]);
            assert!((f.eval(p) - e).abs() < 1e-9);
        }
    }

    #[test]
    fn sum_of_terms_has_expected_rank() {
        let g = |x: [f64; 3]| x[0].sin() * x[1] + (x[2] * 3.0).exp() * x[0] * x[0];
        let f = approx3(g, 1e-9).unwrap();
        assert_eq!(f.ranks(), [2, 2, 2]);
        assert!((f.eval([0.3, 0.6, 0.2]) - g([0.3, 0.6, 0.2])).abs() < 1e-8);
    }

    #[test]
    fn constants_short_circuit() {
        let f = approx3(|_| 2.5, 1e-7).unwrap();
        assert_eq!(f.ranks(), [1, 1, 1]);
        assert_eq!(f.eval([0.4, 0.1, 0.9]), 2.5);
        let z = approx3(|_| 0.0, 1e-7).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn glue_is_exact_and_compresses() {
        let a = approx3(|x| (1.0 + x[0]) * (1.0 + x[2]), 1e-12).unwrap();
        let b = approx3(|x| (1.0 + x[0]) * (2.0 - x[2]), 1e-12).unwrap();
        let g = LowRankFunc3::glue_halves(&a, &b, 2, 2.0);
        for &p in &[[0.2, 0.3, 0.1], [0.7, 0.9, 0.5], [0.5, 0.5, 0.8], [0.1, 0.1, 0.99]] {
            let e = if p[2] <= 0.5 { 2.0 * a.eval([p[0], p[1], 2.0 * p[2]]) } else { 2.0 * b.eval([p[0], p[1], 2.0 * p[2] - 1.0]) };
            assert!((g.eval(p) - e).abs() < 1e-12);
        }
        assert_eq!(g.ranks(), [1, 1, 1]);
        let c1 = LowRankFunc3::constant(3.0);
        let gc = LowRankFunc3::glue_halves(&c1, &c1, 0, 1.0);
        assert_eq!(gc.ranks(), [1, 1, 1]);
        assert!((gc.eval([0.3, 0.4, 0.5]) - 3.0).abs() < 1e-13);
        let c2 = LowRankFunc3::constant(5.0);
        let gd = LowRankFunc3::glue_halves(&c1, &c2, 0, 1.0);
        assert_eq!(gd.ranks(), [1, 1, 1]);
        let g4 = LowRankFunc3::glue_halves(&gd, &LowRankFunc3::glue_halves(&c2, &c2, 0, 1.0), 1, 1.0);
        assert_eq!(g4.ranks(), [2, 2, 1]);
    }

    #[test]
    fn shared_scale_zeroes_tiny_components() {
        let v = approx3_batch(
            |x, out: &mut [f64]| {
                out[0] = 1.0 + x[0];
                out[1] = 1e-12 * x[1];
            },
            2,
            1e-7,
            ToleranceScale::Shared,
        )
        .unwrap();
        assert!(!v[0].is_zero());
        assert!(v[1].is_zero());
    }
}
