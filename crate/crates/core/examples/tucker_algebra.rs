//! Tucker vectors and Kronecker-sum matrices: products, sums, truncation.

use lrmp::linalg::Tensor3;
use lrmp::tucker::{LazySum, TuckerMatrix, TuckerVector};
use nalgebra::DMatrix;

fn main() -> lrmp::Result<()> {
    let n = 12;
    let h = 1.0 / (n + 1) as f64;
    // A separable function sampled on a grid has low multilinear rank.
    let t = Tensor3::from_fn([n, n, n], |i, j, k| {
        let (x, y, z) = ((i + 1) as f64 * h, (j + 1) as f64 * h, (k + 1) as f64 * h);
        1.0 / (1.0 + x + y + z)
    });
    let v = TuckerVector::from_dense(&t, 1e-10, usize::MAX)?;
    println!("1/(1+x+y+z) on {n}³ points: ranks {:?}, storage {} of {}", v.ranks(), v.storage(), n * n * n);

    // Discrete Laplacian as a Kronecker sum of three 1D matrices.
    let lap = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    }) / (h * h);
    let id = DMatrix::identity(n, n);
    let a = TuckerMatrix::from_terms(vec![
        (1.0, [lap.clone(), id.clone(), id.clone()]),
        (1.0, [id.clone(), lap.clone(), id.clone()]),
        (1.0, [id.clone(), id, lap]),
    ])?;
    let av = a.matvec(&v);
    println!("A v: ranks {:?} before truncation", av.ranks());
    for eps in [1e-2, 1e-6, 1e-10] {
        let w = av.truncate_rel(eps);
        let err = w.add(&av.scaled(-1.0)).norm() / av.norm();
        println!("  truncated at {eps:.0e}: ranks {:?}, relative error {err:.2e}", w.ranks());
    }

    // Sums of many terms are compressed without forming the full concatenation.
    let mut s = LazySum::new([n, n, n]);
    s.push(1.0, &v);
    s.push_matvec(-0.5 * h * h, &a, &v);
    s.push(2.0, &TuckerVector::rank_one(&vec![1.0; n], &vec![1.0; n], &vec![1.0; n]));
    let r = s.truncate(1e-8);
    println!("v - h²/2 A v + 2·1: ranks {:?}, dot with v {:.6}", r.ranks(), r.dot(&v));
    Ok(())
}
