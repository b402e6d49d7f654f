//! Dense helpers shared by the numerical modules: a column-major 3-tensor,
//! mode products, Gauss-Legendre rules and a generalized symmetric eigensolver.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};

/// Dense 3-tensor stored with the first index running fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        Tensor3 { dims, data }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3 { dims, data }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let p = self.idx(i, j, k);
        self.data[p] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    /// `self += a * other` for tensors of equal shape.
    pub fn axpy(&mut self, a: f64, other: &Tensor3) {
        assert_eq!(self.dims, other.dims);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    /// Mode-`d` product `self ×_d m`: the `d`-th extent becomes `m.nrows()`.
    pub fn mode_product(&self, d: usize, m: &DMatrix<f64>) -> Tensor3 {
        let [n1, n2, n3] = self.dims;
        assert_eq!(m.ncols(), self.dims[d], "mode product size mismatch");
        let r = m.nrows();
        match d {
            0 => {
                let x = DMatrixView::from_slice(&self.data, n1, n2 * n3);
                let y = m * x;
                Tensor3 { dims: [r, n2, n3], data: y.as_slice().to_vec() }
            }
            1 => {
                let mut out = Tensor3::zeros([n1, r, n3]);
                let mt = m.transpose();
                for k in 0..n3 {
                    let s = &self.data[k * n1 * n2..(k + 1) * n1 * n2];
                    let x = DMatrixView::from_slice(s, n1, n2);
                    let y = x * &mt;
                    out.data[k * n1 * r..(k + 1) * n1 * r].copy_from_slice(y.as_slice());
                }
                out
            }
            2 => {
                let x = DMatrixView::from_slice(&self.data, n1 * n2, n3);
                let y = x * m.transpose();
                Tensor3 { dims: [n1, n2, r], data: y.as_slice().to_vec() }
            }
            _ => panic!("mode index out of range"),
        }
    }

    /// Mode-`d` unfolding as an `n_d × (product of the others)` matrix.
    pub fn unfold(&self, d: usize) -> DMatrix<f64> {
        let [n1, n2, n3] = self.dims;
        match d {
            0 => DMatrix::from_column_slice(n1, n2 * n3, &self.data),
            1 => {
                let mut m = DMatrix::zeros(n2, n1 * n3);
                for k in 0..n3 {
                    for j in 0..n2 {
                        for i in 0..n1 {
                            m[(j, i + n1 * k)] = self.data[i + n1 * (j + n2 * k)];
                        }
                    }
                }
                m
            }
            2 => DMatrix::from_column_slice(n1 * n2, n3, &self.data).transpose(),
            _ => panic!("mode index out of range"),
        }
    }

    /// Insert `block` at the given offsets (block must fit).
    pub fn add_block(&mut self, off: [usize; 3], block: &Tensor3, a: f64) {
        let [b1, b2, b3] = block.dims;
        for k in 0..b3 {
            for j in 0..b2 {
                let dst = self.idx(off[0], off[1] + j, off[2] + k);
                let src = block.idx(0, j, k);
                for i in 0..b1 {
                    self.data[dst + i] += a * block.data[src + i];
                }
            }
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Generalized symmetric eigenproblem `K u = λ M u` with `M` SPD.
/// Returns ascending eigenvalues and `U` with `Uᵀ M U = I`.
pub fn gen_sym_eig(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Preconditioner("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Preconditioner("singular Cholesky factor".into()))?;
    let c = &linv * k * linv.transpose();
    let (vals, v) = sym_eig(&c);
    let u = linv.transpose() * v;
    Ok((vals, u))
}

/// Thin SVD `a = U diag(σ) Vᵀ` with `σ` descending.
///
/// The matrix is first reduced to a square triangular factor by QR; the
/// factor is diagonalized by one-sided Jacobi rotations, which stays
/// accurate for exactly rank-deficient inputs.
pub fn thin_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (DMatrix::zeros(m, 0), vec![], DMatrix::zeros(n, 0));
    }
    if m >= n {
        let qr = a.clone().qr();
        let (ur, s, v) = jacobi_svd(qr.r());
        (qr.q() * ur, s, v)
    } else {
        let qr = a.transpose().qr();
        let (u, s, vr) = jacobi_svd(qr.r().transpose());
        (u, s, qr.q() * vr)
    }
}

/// One-sided Jacobi SVD of a square matrix.
fn jacobi_svd(mut g: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let n = g.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = g.column(i).norm_squared();
                let beta = g.column(j).norm_squared();
                let gamma = g.column(i).dot(&g.column(j));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut g, &mut v] {
                    for r in 0..m.nrows() {
                        let (x, y) = (m[(r, i)], m[(r, j)]);
                        m[(r, i)] = c * x - s * y;
                        m[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sig: Vec<f64> = (0..n).map(|i| g.column(i).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sig[y].total_cmp(&sig[x]));
    let smax = sig.iter().fold(0.0f64, |m, x| m.max(*x));
    let mut u = DMatrix::zeros(g.nrows(), n);
    let mut vo = DMatrix::zeros(n, n);
    let mut so = Vec::with_capacity(n);
    let mut filled = 0;
    for (c, &i) in order.iter().enumerate() {
        vo.set_column(c, &v.column(i));
        so.push(sig[i]);
        if sig[i] > 1e-300 && sig[i] > 1e-30 * smax {
            u.set_column(c, &(g.column(i) / sig[i]));
            filled += 1;
        }
    }
    // Complete the left basis for (numerically) zero singular values.
    let mut e = 0;
    for c in filled..n {
        loop {
            let mut w = nalgebra::DVector::zeros(g.nrows());
            w[e % g.nrows()] = 1.0;
            e += 1;
            for _ in 0..2 {
                for k in 0..c {
                    let p = u.column(k).dot(&w);
                    w -= u.column(k) * p;
                }
            }
            let nw = w.norm();
            if nw > 1e-8 {
                u.set_column(c, &(w / nw));
                break;
            }
        }
    }
    (u, so, vo)
}

/// Symmetric eigendecomposition `a = Q diag(λ) Qᵀ`, eigenvalues ascending.
///
/// The nalgebra result is polished by cyclic Jacobi sweeps on `QᵀAQ`; the
/// tridiagonal QR alone can leave residuals of order 1e-7 on matrices with
/// large degenerate clusters.
pub fn sym_eig(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let mut q = eig.eigenvectors;
    let mut b = q.transpose() * &sym * &q;
    let scale = b.norm().max(f64::MIN_POSITIVE);
    for _ in 0..30 {
        let off: f64 = (0..n).map(|j| (0..n).filter(|&i| i != j).map(|i| b[(i, j)].powi(2)).sum::<f64>()).sum::<f64>().sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                let apr = b[(p, r)];
                if apr.abs() <= 1e-300 || apr.abs() <= 1e-18 * scale {
                    continue;
                }
                let theta = (b[(r, r)] - b[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (b[(k, p)], b[(k, r)]);
                    b[(k, p)] = c * x - s * y;
                    b[(k, r)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (b[(p, k)], b[(r, k)]);
                    b[(p, k)] = c * x - s * y;
                    b[(r, k)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (q[(k, p)], q[(k, r)]);
                    q[(k, p)] = c * x - s * y;
                    q[(k, r)] = s * x + c * y;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| b[(i, i)]));
    let mut v = DMatrix::zeros(n, n);
    for (c, &o) in order.iter().enumerate() {
        v.set_column(c, &q.column(o));
    }
    (vals, v)
}

/// Left singular vectors and singular values of `a` (descending).
pub fn left_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (u, s, _) = thin_svd(a);
    (u, s)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

#[cfg(test)]
mod tests {
    #[test]
    fn svd_of_exactly_rank_one_matrices() {
        for (m, n) in [(9, 9), (9, 81), (40, 7)] {
            let a = DMatrix::from_element(m, n, 0.576_923_076_923_076_9);
            let (u, s, v) = thin_svd(&a);
            let k = m.min(n);
            let rec = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.clone())) * v.transpose();
            assert!((rec - &a).norm() < 1e-13 * a.norm());
            assert!((u.transpose() * &u - DMatrix::identity(k, k)).norm() < 1e-13);
            assert!((s[0] - a.norm()).abs() < 1e-12 * a.norm());
        }
    }

    #[test]
    fn svd_matches_known_spectrum() {
        let d = [5.0, 3.0, 1e-6, 0.0];
        let q1 = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) as f64).sin()).qr().q();
        let q2 = DMatrix::from_fn(4, 4, |i, j| ((i * 5 + j * 11) as f64).cos()).qr().q();
        let mut sig = DMatrix::zeros(6, 4);
        for i in 0..4 {
            sig[(i, i)] = d[i];
        }
        let a = &q1 * sig * q2.transpose();
        let (_, s, _) = thin_svd(&a);
        for i in 0..4 {
            assert!((s[i] - d[i]).abs() < 1e-13, "{i}: {}", s[i]);
        }
    }

    use super::*;

    #[test]
    fn sym_eig_of_degenerate_matrix() {
        use nalgebra::DMatrix;
        // Kronecker sum with a large repeated cluster and a null space.
        let t = DMatrix::from_fn(6, 6, |i, j| if i == j { 2.0 } else if i.abs_diff(j) == 1 { -1.0 } else { 0.0 });
        let sum = super::kron(&t, &DMatrix::identity(6, 6)) + super::kron(&DMatrix::identity(6, 6), &t);
        let a = super::kron(&DMatrix::from_element(2, 2, 1.0), &sum);
        let (l, q) = super::sym_eig(&a);
        let r = &a * &q - &q * DMatrix::from_diagonal(&l);
        assert!(r.norm() <= 1e-13 * a.norm());
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(72, 72)).norm() <= 1e-12);
        assert!(l.as_slice().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(l.iter().filter(|x| x.abs() < 1e-10).count(), 36);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn mode_products_match_naive() {
        let t = Tensor3::from_fn([3, 4, 2], |i, j, k| (i + 2 * j + 5 * k) as f64 * 0.1 + (i * j) as f64);
        for d in 0..3 {
            let m = DMatrix::from_fn(5, t.dims[d], |a, b| (a as f64 - b as f64).sin());
            let r = t.mode_product(d, &m);
            let mut dims = t.dims;
            dims[d] = 5;
            let naive = Tensor3::from_fn(dims, |i, j, k| {
                let idx = [i, j, k];
                (0..t.dims[d])
                    .map(|s| {
                        let mut ii = idx;
                        ii[d] = s;
                        m[(idx[d], s)] * t.get(ii[0], ii[1], ii[2])
                    })
                    .sum()
            });
            for (a, b) in r.data.iter().zip(&naive.data) {
                assert!((a - b).abs() < 1e-12);
            }
            let u = t.unfold(d);
            assert_eq!(u.nrows(), t.dims[d]);
            assert!((u.norm() - t.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn generalized_eigen_is_m_orthonormal() {
        let n = 6;
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else if i.abs_diff(j) == 1 { 0.5 } else { 0.0 });
        let k = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else if i.abs_diff(j) == 1 { -1.0 } else { 0.0 });
        let (vals, u) = gen_sym_eig(&k, &m).unwrap();
        let id = u.transpose() * &m * &u;
        assert!((id - DMatrix::identity(n, n)).norm() < 1e-12);
        let res = &k * &u - &m * &u * DMatrix::from_diagonal(&vals);
        assert!(res.norm() < 1e-12);
    }
}
