//! Univariate B-splines on open knot vectors.
//!
//! Basis functions are evaluated with the Cox-de Boor recursion; only the
//! `p + 1` functions that are nonzero at a point are returned, together with
//! the index of the first one.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::gauss_legendre;

const KNOT_TOL: f64 = 1e-12;

/// Open knot vector of degree `p` on `[0, 1]`-like intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Validate and wrap a knot sequence. The first and last knots must be
    /// repeated `p + 1` times and interior multiplicities may not exceed `p`.
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::InvalidKnotVector(format!(
                "{} knots is too few for degree {p}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidKnotVector("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnotVector("knots must be non-decreasing".into()));
        }
        let (a, b) = (knots[0], knots[knots.len() - 1]);
        if b - a <= 0.0 {
            return Err(Error::InvalidKnotVector("empty parameter interval".into()));
        }
        if knots[..=p].iter().any(|&k| k != a) || knots[knots.len() - p - 1..].iter().any(|&k| k != b) {
            return Err(Error::InvalidKnotVector("knot vector is not open".into()));
        }
        let mut i = p + 1;
        while i < knots.len() - p - 1 {
            let mut j = i;
            while j < knots.len() && knots[j] == knots[i] {
                j += 1;
            }
            if knots[i] == b {
                break;
            }
            if j - i > p {
                return Err(Error::InvalidKnotVector(format!(
                    "interior knot {} has multiplicity {} > {p}",
                    knots[i],
                    j - i
                )));
            }
            i = j;
        }
        Ok(KnotVector { degree, knots })
    }

    /// Uniform open knot vector on `[0, 1]` with `n_el` elements; its dimension is `n_el + p`.
    pub fn uniform_open(p: usize, n_el: usize) -> Result<Self> {
        if n_el == 0 {
            return Err(Error::InvalidKnotVector("n_el must be positive".into()));
        }
        let mut k = vec![0.0; p + 1];
        for e in 1..n_el {
            k.push(e as f64 / n_el as f64);
        }
        k.extend(std::iter::repeat(1.0).take(p + 1));
        KnotVector::new(p, k)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn lo(&self) -> f64 {
        self.knots[0]
    }

    pub fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Distinct knot values in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if b.last().map_or(true, |&l| k > l) {
                b.push(k);
            }
        }
        b
    }

    /// Breakpoints together with the midpoint of each nonempty span, sorted.
    pub fn breakpoint_midpoint_samples(&self) -> Vec<f64> {
        let b = self.breakpoints();
        let mut out = Vec::with_capacity(2 * b.len());
        for w in b.windows(2) {
            out.push(w[0]);
            out.push(0.5 * (w[0] + w[1]));
        }
        out.push(*b.last().unwrap());
        out
    }

    /// Nonempty knot spans `(index, a, b)` where `index` is the span index used by [`Self::find_span`].
    pub fn spans(&self) -> Vec<(usize, f64, f64)> {
        let p = self.degree;
        (p..self.dim())
            .filter(|&i| self.knots[i + 1] > self.knots[i])
            .map(|i| (i, self.knots[i], self.knots[i + 1]))
            .collect()
    }

    /// Index `i` with `t_i <= x < t_{i+1}` (the last nonempty span for `x = hi`).
    pub fn find_span(&self, x: f64) -> Result<usize> {
        let (lo, hi) = (self.lo(), self.hi());
        let tol = KNOT_TOL * (hi - lo);
        if !(x >= lo - tol && x <= hi + tol) {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        let n = self.dim();
        let p = self.degree;
        if x >= self.knots[n] {
            let mut i = n - 1;
            while self.knots[i] == self.knots[i + 1] {
                i -= 1;
            }
            return Ok(i);
        }
        let x = x.max(lo);
        // Binary search over [p, n).
        let (mut low, mut high) = (p, n);
        while high - low > 1 {
            let mid = (low + high) / 2;
            if x < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        Ok(low)
    }

    /// Values and first derivatives of the `p + 1` basis functions nonzero at `x`.
    /// Returns `(first, values, derivatives)`.
    pub fn eval(&self, x: f64) -> Result<(usize, Vec<f64>, Vec<f64>)> {
        let span = self.find_span(x)?;
        let x = x.clamp(self.lo(), self.hi());
        let (v, d) = self.basis_ders(span, x);
        Ok((span - self.degree, v, d))
    }

    /// Values only.
    pub fn eval_values(&self, x: f64) -> Result<(usize, Vec<f64>)> {
        let (f, v, _) = self.eval(x)?;
        Ok((f, v))
    }

    fn basis_ders(&self, span: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
        let p = self.degree;
        let u = &self.knots;
        // ndu[j][r]: basis values (lower triangle) and knot differences (upper).
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let vals: Vec<f64> = (0..=p).map(|j| ndu[j][p]).collect();
        let mut ders = vec![0.0; p + 1];
        if p > 0 {
            for (r, d) in ders.iter_mut().enumerate() {
                let mut acc = 0.0;
                if r >= 1 {
                    acc += ndu[r - 1][p - 1] / ndu[p][r - 1];
                }
                if r < p {
                    acc -= ndu[r][p - 1] / ndu[p][r];
                }
                *d = p as f64 * acc;
            }
        }
        (vals, ders)
    }

    /// Evaluate a spline with coefficients `c` (value, derivative).
    pub fn eval_spline(&self, c: &[f64], x: f64) -> Result<(f64, f64)> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("{} coefficients for dim {}", c.len(), self.dim())));
        }
        let (f, v, d) = self.eval(x)?;
        let mut s = (0.0, 0.0);
        for j in 0..v.len() {
            s.0 += c[f + j] * v[j];
            s.1 += c[f + j] * d[j];
        }
        Ok(s)
    }

    /// Map the knot vector affinely to `[a, b]`.
    pub fn rescaled(&self, a: f64, b: f64) -> KnotVector {
        let (lo, hi) = (self.lo(), self.hi());
        let knots = self.knots.iter().map(|&k| a + (b - a) * (k - lo) / (hi - lo)).collect();
        KnotVector { degree: self.degree, knots }
    }

    /// Knot vector of two conforming pieces glued at the midpoint: the first is
    /// mapped to `[0, 1/2]`, the second to `[1/2, 1]`, and the junction knot has
    /// multiplicity `p`. The result has dimension `dim(a) + dim(b) - 1`.
    pub fn merge(a: &KnotVector, b: &KnotVector) -> Result<KnotVector> {
        if a.degree != b.degree {
            return Err(Error::NonConforming(format!("degrees {} and {} differ", a.degree, b.degree)));
        }
        let p = a.degree;
        let a = a.rescaled(0.0, 0.5);
        let b = b.rescaled(0.5, 1.0);
        let mut k = vec![0.0; p + 1];
        k.extend_from_slice(&a.knots[p + 1..a.knots.len() - p - 1]);
        k.extend(std::iter::repeat(0.5).take(p));
        k.extend_from_slice(&b.knots[p + 1..b.knots.len() - p - 1]);
        k.extend(std::iter::repeat(1.0).take(p + 1));
        KnotVector::new(p, k)
    }

    /// Greville abscissae.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        if p == 0 {
            return (0..self.dim()).map(|i| 0.5 * (self.knots[i] + self.knots[i + 1])).collect();
        }
        (0..self.dim())
            .map(|i| self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64)
            .collect()
    }
}

/// Tensor of Gauss points over all nonempty spans with `q` points per span.
#[derive(Clone, Debug)]
pub struct QuadTable {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// First nonzero basis index at each point.
    pub first: Vec<usize>,
    /// `p + 1` basis values per point.
    pub values: Vec<Vec<f64>>,
    /// `p + 1` basis derivatives per point.
    pub ders: Vec<Vec<f64>>,
}

impl QuadTable {
    pub fn new(kv: &KnotVector, q: usize) -> QuadTable {
        let (gx, gw) = gauss_legendre(q);
        let mut t = QuadTable { points: vec![], weights: vec![], first: vec![], values: vec![], ders: vec![] };
        for (span, a, b) in kv.spans() {
            let h = 0.5 * (b - a);
            for (x, w) in gx.iter().zip(&gw) {
                let xi = a + h * (x + 1.0);
                let (v, d) = kv.basis_ders(span, xi);
                t.points.push(xi);
                t.weights.push(w * h);
                t.first.push(span - kv.degree);
                t.values.push(v);
                t.ders.push(d);
            }
        }
        t
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dense `n_points × dim` collocation matrix of values (`der = false`) or derivatives.
    pub fn collocation(&self, dim: usize, der: bool) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.len(), dim);
        for q in 0..self.len() {
            let src = if der { &self.ders[q] } else { &self.values[q] };
            for (j, v) in src.iter().enumerate() {
                m[(q, self.first[q] + j)] = *v;
            }
        }
        m
    }
}

/// `M[s, t] = ∫ c(ξ) [b_s]^(ds) [b_t]^(dt) dξ` where `c` is sampled at the
/// quadrature points of `table` and `ds`, `dt` select derivatives.
pub fn weighted_matrix(kv: &KnotVector, table: &QuadTable, c: &[f64], ds: bool, dt: bool) -> DMatrix<f64> {
    let n = kv.dim();
    let p = kv.degree();
    let mut m = DMatrix::zeros(n, n);
    for q in 0..table.len() {
        let wq = table.weights[q] * c[q];
        if wq == 0.0 {
            continue;
        }
        let f = table.first[q];
        let bs = if ds { &table.ders[q] } else { &table.values[q] };
        let bt = if dt { &table.ders[q] } else { &table.values[q] };
        for a in 0..=p {
            let wa = wq * bs[a];
            for b in 0..=p {
                m[(f + a, f + b)] += wa * bt[b];
            }
        }
    }
    m
}

/// `v[s] = ∫ c(ξ) b_s(ξ) dξ` with `c` sampled at the quadrature points.
pub fn weighted_vector(kv: &KnotVector, table: &QuadTable, c: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; kv.dim()];
    for q in 0..table.len() {
        let wq = table.weights[q] * c[q];
        for (a, b) in table.values[q].iter().enumerate() {
            v[table.first[q] + a] += wq * b;
        }
    }
    v
}

/// Mass matrix `∫ b_s b_t` with `p + 1` Gauss points per span.
pub fn mass_matrix(kv: &KnotVector) -> DMatrix<f64> {
    let t = QuadTable::new(kv, kv.degree() + 1);
    weighted_matrix(kv, &t, &vec![1.0; t.len()], false, false)
}

/// Stiffness matrix `∫ b_s' b_t'` with `p + 1` Gauss points per span.
pub fn stiffness_matrix(kv: &KnotVector) -> DMatrix<f64> {
    let t = QuadTable::new(kv, kv.degree() + 1);
    weighted_matrix(kv, &t, &vec![1.0; t.len()], true, true)
}

/// Contiguous range of retained basis functions after removing the first
/// and/or last one (homogeneous Dirichlet data at the interval ends).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Retained {
    pub lo: usize,
    pub hi: usize,
}

impl Retained {
    pub fn new(dim: usize, drop_first: bool, drop_last: bool) -> Retained {
        Retained { lo: usize::from(drop_first), hi: dim - usize::from(drop_last) }
    }

    pub fn all(dim: usize) -> Retained {
        Retained { lo: 0, hi: dim }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct recursive Cox-de Boor definition, used as an oracle.
    fn naive_basis(u: &[f64], i: usize, p: usize, x: f64, last: bool) -> f64 {
        if p == 0 {
            if (u[i] <= x && x < u[i + 1]) || (last && x == u[i + 1] && u[i] < u[i + 1] && u[i + 1] == *u.last().unwrap()) {
                return 1.0;
            }
            return 0.0;
        }
        let mut s = 0.0;
        if u[i + p] > u[i] {
            s += (x - u[i]) / (u[i + p] - u[i]) * naive_basis(u, i, p - 1, x, last);
        }
        if u[i + p + 1] > u[i + 1] {
            s += (u[i + p + 1] - x) / (u[i + p + 1] - u[i + 1]) * naive_basis(u, i + 1, p - 1, x, last);
        }
        s
    }

    #[test]
    fn uniform_dims_and_partition_of_unity() {
        let kv = KnotVector::uniform_open(3, 4).unwrap();
        assert_eq!(kv.dim(), 7);
        for k in 0..=40 {
            let x = k as f64 / 40.0;
            let (_, v, d) = kv.eval(x).unwrap();
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(d.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_recursion() {
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.3, 0.3, 0.7, 1.0, 1.0, 1.0]).unwrap();
        for k in 0..=50 {
            let x = k as f64 / 50.0;
            let (f, v, _) = kv.eval(x).unwrap();
            for i in 0..kv.dim() {
                let expect = naive_basis(kv.knots(), i, 2, x, true);
                let got = if i >= f && i <= f + 2 { v[i - f] } else { 0.0 };
                assert!((got - expect).abs() < 1e-13, "i={i} x={x}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let kv = KnotVector::uniform_open(4, 3).unwrap();
        let h = 1e-6;
        for &x in &[0.1, 0.45, 0.77] {
            let (f, _, d) = kv.eval(x).unwrap();
            let (fp, vp) = kv.eval_values(x + h).unwrap();
            let (fm, vm) = kv.eval_values(x - h).unwrap();
            assert_eq!(f, fp);
            assert_eq!(f, fm);
            for j in 0..d.len() {
                assert!(((vp[j] - vm[j]) / (2.0 * h) - d[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let kv = KnotVector::uniform_open(2, 2).unwrap();
        assert!(matches!(kv.eval(1.5), Err(Error::OutOfDomain { .. })));
        assert!(KnotVector::new(2, vec![0.0, 0.0, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 0.5, 0.2, 1.0, 1.0]).is_err());
    }

    #[test]
    fn merge_dimension_and_junction() {
        let a = KnotVector::uniform_open(3, 4).unwrap();
        let m = KnotVector::merge(&a, &a).unwrap();
        assert_eq!(m.dim(), 2 * a.dim() - 1);
        assert_eq!(m.knots().iter().filter(|&&k| k == 0.5).count(), 3);
        // Restriction to the lower half reproduces the first piece's basis.
        let (f, v) = m.eval_values(0.2).unwrap();
        let (fa, va) = a.eval_values(0.4).unwrap();
        assert_eq!(f, fa);
        for (x, y) in v.iter().zip(&va) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn mass_and_stiffness_oracles() {
        // Degree 1 on one element: hat functions.
        let kv = KnotVector::uniform_open(1, 1).unwrap();
        let m = mass_matrix(&kv);
        assert!((m[(0, 0)] - 1.0 / 3.0).abs() < 1e-14 && (m[(0, 1)] - 1.0 / 6.0).abs() < 1e-14);
        let k = stiffness_matrix(&kv);
        assert!((k[(0, 0)] - 1.0).abs() < 1e-14 && (k[(0, 1)] + 1.0).abs() < 1e-14);
        // Total mass equals the interval length for any degree.
        let kv = KnotVector::uniform_open(4, 5).unwrap();
        assert!((mass_matrix(&kv).sum() - 1.0).abs() < 1e-13);
        assert!(stiffness_matrix(&kv).row_sum().norm() < 1e-11);
    }

    #[test]
    fn samples_include_breakpoints_and_midpoints() {
        let kv = KnotVector::uniform_open(2, 2).unwrap();
        assert_eq!(kv.breakpoint_midpoint_samples(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
