//! Pointwise evaluation of a discrete solution.

use nalgebra::DVector;

use super::BlockSystem;
use crate::error::Result;
use crate::geometry::inv3;
use crate::splines::KnotVector;
use crate::tucker::{BlockVector, TuckerVector};

/// Value and physical gradient of a solution at a point.
#[derive(Clone, Copy, Debug)]
pub struct FieldValue {
    pub x: [f64; 3],
    /// Components (only the first is meaningful in scalar mode).
    pub value: [f64; 3],
    /// `grad[k][i] = ∂u_k/∂x_i`.
    pub grad: [[f64; 3]; 3],
}

/// Evaluates `u_h = Σ_i u^(i) + lifting` on patches.
pub struct FieldEvaluator<'a> {
    sys: &'a BlockSystem,
    u: &'a BlockVector,
}

/// Dense values and parameter derivatives of all basis functions of `kv`
/// at `x`, restricted to `lo..lo + len`.
fn basis_column(kv: &KnotVector, x: f64, lo: usize, len: usize, dscale: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let (first, v, d) = kv.eval(x)?;
    let mut a = DVector::zeros(len);
    let mut b = DVector::zeros(len);
    for j in 0..v.len() {
        let s = first + j;
        if s >= lo && s < lo + len {
            a[s - lo] = v[j];
            b[s - lo] = d[j] * dscale;
        }
    }
    Ok((a, b))
}

/// Value and parameter gradient of a Tucker vector against tensor basis columns.
fn contract(v: &TuckerVector, cols: &[(DVector<f64>, DVector<f64>); 3]) -> (f64, [f64; 3]) {
    let proj: Vec<(DVector<f64>, DVector<f64>)> =
        (0..3).map(|d| (v.factor(d).transpose() * &cols[d].0, v.factor(d).transpose() * &cols[d].1)).collect();
    let core = v.core();
    let r = v.ranks();
    let mut val = 0.0;
    let mut g = [0.0; 3];
    for k in 0..r[2] {
        for j in 0..r[1] {
            for i in 0..r[0] {
                let c = core.get(i, j, k);
                let (a0, a1, a2) = (proj[0].0[i], proj[1].0[j], proj[2].0[k]);
                val += c * a0 * a1 * a2;
                g[0] += c * proj[0].1[i] * a1 * a2;
                g[1] += c * a0 * proj[1].1[j] * a2;
                g[2] += c * a0 * a1 * proj[2].1[k];
            }
        }
    }
    (val, g)
}

impl<'a> FieldEvaluator<'a> {
    pub fn new(sys: &'a BlockSystem, u: &'a BlockVector) -> Self {
        FieldEvaluator { sys, u }
    }

    /// Solution at local parameter `xi` of patch `m`.
    pub fn eval(&self, m: usize, xi: [f64; 3]) -> Result<FieldValue> {
        let sys = self.sys;
        let nc = sys.ncomp();
        let disc = sys.setup.disc;
        let mut value = [0.0; 3];
        let mut gref = [[0.0; 3]; 3];
        for (i, sd) in sys.subdomains.iter().enumerate() {
            let Some(pos) = sd.pbox.position_of(m) else { continue };
            let sp = &sys.spaces[i];
            let mut cols = Vec::with_capacity(3);
            for d in 0..3 {
                let ext = sd.pbox.ext[d];
                let t = (pos[d] as f64 + xi[d]) / ext as f64;
                let r = sp.retained[d];
                // Derivative with respect to the patch parameter.
                cols.push(basis_column(&sp.knots[d], t, r.lo, r.len(), 1.0 / ext as f64)?);
            }
            let cols: [(DVector<f64>, DVector<f64>); 3] = [cols[0].clone(), cols[1].clone(), cols[2].clone()];
            for k in 0..nc {
                let (v, g) = contract(&self.u.blocks[i * nc + k], &cols);
                value[k] += v;
                for d in 0..3 {
                    gref[k][d] += g[d];
                }
            }
        }
        if let Some(lift) = &sys.lifting {
            let kv = disc.patch_knots();
            let n = kv.dim();
            let c0 = basis_column(&kv, xi[0], 0, n, 1.0)?;
            let c1 = basis_column(&kv, xi[1], 0, n, 1.0)?;
            let c2 = basis_column(&kv, xi[2], 0, n, 1.0)?;
            let cols = [c0, c1, c2];
            for k in 0..nc {
                let (v, g) = contract(&lift[m][k], &cols);
                value[k] += v;
                for d in 0..3 {
                    gref[k][d] += g[d];
                }
            }
        }
        let (x, jac) = sys.domain.patches[m].eval(xi)?;
        let ji = inv3(&jac);
        let mut grad = [[0.0; 3]; 3];
        for k in 0..nc {
            for i in 0..3 {
                grad[k][i] = (0..3).map(|b| ji[b][i] * gref[k][b]).sum();
            }
        }
        Ok(FieldValue { x, value, grad })
    }
}
