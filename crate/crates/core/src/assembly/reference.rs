//! Reference operators assembled patch by patch with pointwise coefficients.
//!
//! These never use gluing or low-rank approximations of the geometry (unless
//! asked to evaluate the approximations pointwise) and serve as oracles for
//! the Tucker-format system.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{quad_points, BlockSystem};
use crate::error::{Error, Result};
use crate::geometry::{coefficient, det3, inv3, Mode};
use crate::linalg::Tensor3;
use crate::splines::QuadTable;

/// Which coefficients the reference operator integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoefficientSource {
    /// `C^(m)` from the geometry map.
    Exact,
    /// The low-rank approximations, evaluated pointwise.
    Approximate,
}

/// For every subdomain containing patch `m`: map from patch-local basis
/// index (per direction) to the subdomain's retained index.
fn patch_maps(sys: &BlockSystem, m: usize) -> Vec<(usize, [Vec<Option<usize>>; 3])> {
    let step = sys.setup.disc.patch_dim() - 1;
    let n = sys.setup.disc.patch_dim();
    let mut out = Vec::new();
    for (i, sd) in sys.subdomains.iter().enumerate() {
        let Some(pos) = sd.pbox.position_of(m) else { continue };
        let maps = [0, 1, 2].map(|d| {
            let r = sys.spaces[i].retained[d];
            (0..n)
                .map(|a| {
                    let s = a + pos[d] * step;
                    (s >= r.lo && s < r.hi).then(|| s - r.lo)
                })
                .collect::<Vec<_>>()
        });
        out.push((i, maps));
    }
    out
}

fn block_offsets(sys: &BlockSystem) -> Vec<usize> {
    let mut off = vec![0];
    for d in sys.block_dims() {
        off.push(off.last().unwrap() + d.iter().product::<usize>());
    }
    off
}

/// Dense reference matrix and right-hand side of the overlapping system,
/// in block order `(i, k)` with the first tensor index fastest.
pub fn reference_dense(sys: &BlockSystem, src: CoefficientSource) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let ntot = sys.ndof();
    if ntot > 8000 {
        return Err(Error::SizeCap { size: ntot, cap: 8000 });
    }
    let nc = sys.ncomp();
    let disc = sys.setup.disc;
    let kv = disc.patch_knots();
    let np = kv.dim();
    let table = QuadTable::new(&kv, quad_points(disc.degree));
    let nloc = np * np * np;
    let off = block_offsets(sys);
    let mut a = DMatrix::zeros(ntot, ntot);
    let mut f = DVector::zeros(ntot);
    let lift: Option<Vec<Vec<Tensor3>>> = match &sys.lifting {
        None => None,
        Some(l) => Some(l.iter().map(|v| v.iter().map(|t| t.densify(usize::MAX)).collect::<Result<_>>()).collect::<Result<_>>()?),
    };

    for m in 0..sys.domain.npatches() {
        let patch = &sys.domain.patches[m];
        // Local matrices per (k, ℓ) and local load per k.
        let mut aloc = vec![DMatrix::<f64>::zeros(nloc, nloc); nc * nc];
        let mut floc = vec![DVector::<f64>::zeros(nloc); nc];
        let nq = table.len();
        let p1 = disc.degree + 1;
        for q3 in 0..nq {
            for q2 in 0..nq {
                for q1 in 0..nq {
                    let xi = [table.points[q1], table.points[q2], table.points[q3]];
                    let w = table.weights[q1] * table.weights[q2] * table.weights[q3];
                    let (x, jac) = patch.eval(xi)?;
                    let mut c = vec![[[0.0; 3]; 3]; nc * nc];
                    for k in 0..nc {
                        for l in 0..nc {
                            c[k * nc + l] = match src {
                                CoefficientSource::Exact => coefficient(&jac, sys.setup.mode, &patch.material, k, l),
                                CoefficientSource::Approximate => {
                                    let pc = &sys.coefficients[m];
                                    let mut e = [[0.0; 3]; 3];
                                    for (al, row) in e.iter_mut().enumerate() {
                                        for (be, v) in row.iter_mut().enumerate() {
                                            *v = pc.get(k, l, al, be).eval(xi);
                                        }
                                    }
                                    e
                                }
                            };
                        }
                    }
                    let force = (sys.setup.force)(x);
                    let det = det3(&jac).abs();
                    // Local basis indices and gradients at this point.
                    let mut idx = Vec::with_capacity(p1 * p1 * p1);
                    let mut val = Vec::with_capacity(p1 * p1 * p1);
                    let mut grad = Vec::with_capacity(p1 * p1 * p1);
                    let (f1, f2, f3) = (table.first[q1], table.first[q2], table.first[q3]);
                    for c3 in 0..p1 {
                        for c2 in 0..p1 {
                            for c1 in 0..p1 {
                                let (v1, v2, v3) = (table.values[q1][c1], table.values[q2][c2], table.values[q3][c3]);
                                let (d1, d2, d3) = (table.ders[q1][c1], table.ders[q2][c2], table.ders[q3][c3]);
                                idx.push((f1 + c1) + np * ((f2 + c2) + np * (f3 + c3)));
                                val.push(v1 * v2 * v3);
                                grad.push([d1 * v2 * v3, v1 * d2 * v3, v1 * v2 * d3]);
                            }
                        }
                    }
                    for k in 0..nc {
                        for (s, &is) in idx.iter().enumerate() {
                            floc[k][is] += w * det * force[k] * val[s];
                        }
                        for l in 0..nc {
                            let cm = &c[k * nc + l];
                            let al = &mut aloc[k * nc + l];
                            for (t, &it) in idx.iter().enumerate() {
                                let gt = grad[t];
                                let cg: [f64; 3] = [0, 1, 2].map(|r| (0..3).map(|b| cm[r][b] * gt[b]).sum::<f64>());
                                for (s, &is) in idx.iter().enumerate() {
                                    let gs = grad[s];
                                    al[(is, it)] += w * (gs[0] * cg[0] + gs[1] * cg[1] + gs[2] * cg[2]);
                                }
                            }
                        }
                    }
                }
            }
        }
        if let Some(lift) = &lift {
            for k in 0..nc {
                for l in 0..nc {
                    let g = DVector::from_column_slice(&lift[m][l].data);
                    floc[k] -= &aloc[k * nc + l] * g;
                }
            }
        }
        // Scatter into every pair of subdomains that contain the patch.
        let maps = patch_maps(sys, m);
        let flat = |maps: &[Vec<Option<usize>>; 3], dims: [usize; 3], a: usize| -> Option<usize> {
            let (a1, a2, a3) = (a % np, (a / np) % np, a / (np * np));
            Some(maps[0][a1]? + dims[0] * (maps[1][a2]? + dims[1] * maps[2][a3]?))
        };
        for (i, mi) in &maps {
            let di = sys.spaces[*i].dims();
            for k in 0..nc {
                let ri = off[i * nc + k];
                for s in 0..nloc {
                    let Some(gs) = flat(mi, di, s) else { continue };
                    f[ri + gs] += floc[k][s];
                }
            }
            for (j, mj) in &maps {
                let dj = sys.spaces[*j].dims();
                for k in 0..nc {
                    for l in 0..nc {
                        let (ri, cj) = (off[i * nc + k], off[j * nc + l]);
                        let al = &aloc[k * nc + l];
                        for t in 0..nloc {
                            let Some(gt) = flat(mj, dj, t) else { continue };
                            for s in 0..nloc {
                                let v = al[(s, t)];
                                if v == 0.0 {
                                    continue;
                                }
                                if let Some(gs) = flat(mi, di, s) {
                                    a[(ri + gs, cj + gt)] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((a, f))
}

/// Pointwise geometry data at the quadrature points of one patch.
struct PatchData {
    /// `J⁻¹` row-major per point.
    kinv: Vec<[f64; 9]>,
    /// `|det J|` times the quadrature weight.
    s: Vec<f64>,
    mu: f64,
    lambda: f64,
    maps: Vec<(usize, [Vec<Option<usize>>; 3])>,
}

/// Matrix-free Galerkin operator with exact coefficients, applied by sum
/// factorization on each patch.
pub struct ReferenceOperator<'a> {
    sys: &'a BlockSystem,
    bval: DMatrix<f64>,
    bder: DMatrix<f64>,
    nq: usize,
    patches: Vec<PatchData>,
}

impl<'a> ReferenceOperator<'a> {
    pub fn new(sys: &'a BlockSystem) -> Result<Self> {
        let disc = sys.setup.disc;
        let kv = disc.patch_knots();
        let np = kv.dim();
        let table = QuadTable::new(&kv, quad_points(disc.degree));
        let nq = table.len();
        let bval = table.collocation(np, false);
        let bder = table.collocation(np, true);
        let patches = (0..sys.domain.npatches())
            .into_par_iter()
            .map(|m| {
                let patch = &sys.domain.patches[m];
                let mut kinv = Vec::with_capacity(nq * nq * nq);
                let mut s = Vec::with_capacity(nq * nq * nq);
                for q3 in 0..nq {
                    for q2 in 0..nq {
                        for q1 in 0..nq {
                            let xi = [table.points[q1], table.points[q2], table.points[q3]];
                            let (_, j) = patch.eval(xi)?;
                            let ji = inv3(&j);
                            kinv.push([ji[0][0], ji[0][1], ji[0][2], ji[1][0], ji[1][1], ji[1][2], ji[2][0], ji[2][1], ji[2][2]]);
                            s.push(det3(&j).abs() * table.weights[q1] * table.weights[q2] * table.weights[q3]);
                        }
                    }
                }
                let (mu, lambda) = patch.material.lame();
                Ok(PatchData { kinv, s, mu, lambda, maps: patch_maps(sys, m) })
            })
            .collect::<Result<_>>()?;
        Ok(ReferenceOperator { sys, bval, bder, nq, patches })
    }

    /// `y = A x` for full block tensors.
    pub fn apply(&self, x: &[Tensor3]) -> Vec<Tensor3> {
        let sys = self.sys;
        let nc = sys.ncomp();
        let np = sys.setup.disc.patch_dim();
        let elastic = sys.setup.mode == Mode::Elasticity;
        let contributions: Vec<Vec<(usize, [Vec<Option<usize>>; 3], Tensor3)>> = self
            .patches
            .par_iter()
            .map(|pd| {
                let u = gather(&pd.maps, x, nc, np);
                // Parameter gradients at quadrature points.
                let grads: Vec<[Tensor3; 3]> = u
                    .iter()
                    .map(|uk| {
                        [0, 1, 2].map(|b| {
                            let m = |d: usize| if d == b { &self.bder } else { &self.bval };
                            uk.mode_product(0, m(0)).mode_product(1, m(1)).mode_product(2, m(2))
                        })
                    })
                    .collect();
                let npts = self.nq * self.nq * self.nq;
                let mut flux: Vec<[Tensor3; 3]> =
                    (0..nc).map(|_| [0, 1, 2].map(|_| Tensor3::zeros([self.nq; 3]))).collect();
                for q in 0..npts {
                    let ki = &pd.kinv[q];
                    // h[ℓ][i] = Σ_β K[β][i] G[ℓ][β]
                    let mut h = [[0.0; 3]; 3];
                    for l in 0..nc {
                        for i in 0..3 {
                            h[l][i] = (0..3).map(|b| ki[3 * b + i] * grads[l][b].data[q]).sum();
                        }
                    }
                    let mut sig = [[0.0; 3]; 3];
                    if elastic {
                        let tr = h[0][0] + h[1][1] + h[2][2];
                        for k in 0..3 {
                            for i in 0..3 {
                                sig[k][i] = pd.mu * (h[k][i] + h[i][k]);
                            }
                            sig[k][k] += pd.lambda * tr;
                        }
                    } else {
                        sig[0] = h[0];
                    }
                    for k in 0..nc {
                        for a in 0..3 {
                            flux[k][a].data[q] = pd.s[q] * (0..3).map(|i| ki[3 * a + i] * sig[k][i]).sum::<f64>();
                        }
                    }
                }
                let vt = self.bval.transpose();
                let dt = self.bder.transpose();
                let mut out = Vec::new();
                let yk: Vec<Tensor3> = flux
                    .iter()
                    .map(|fk| {
                        let mut y = Tensor3::zeros([np, np, np]);
                        for (a, fa) in fk.iter().enumerate() {
                            let m = |d: usize| if d == a { &dt } else { &vt };
                            y.axpy(1.0, &fa.mode_product(0, m(0)).mode_product(1, m(1)).mode_product(2, m(2)));
                        }
                        y
                    })
                    .collect();
                for (i, maps) in &pd.maps {
                    for (k, y) in yk.iter().enumerate() {
                        out.push((i * nc + k, maps.clone(), y.clone()));
                    }
                }
                out
            })
            .collect();
        let dims = sys.block_dims();
        let mut y: Vec<Tensor3> = dims.iter().map(|d| Tensor3::zeros(*d)).collect();
        for list in contributions {
            for (b, maps, t) in list {
                let yb = &mut y[b];
                for a3 in 0..np {
                    let Some(s3) = maps[2][a3] else { continue };
                    for a2 in 0..np {
                        let Some(s2) = maps[1][a2] else { continue };
                        for a1 in 0..np {
                            let Some(s1) = maps[0][a1] else { continue };
                            let v = yb.get(s1, s2, s3) + t.get(a1, a2, a3);
                            yb.set(s1, s2, s3, v);
                        }
                    }
                }
            }
        }
        y
    }
}

/// Patch coefficients per component: the sum over subdomains containing the
/// patch of the restrictions of `x`.
fn gather(maps: &[(usize, [Vec<Option<usize>>; 3])], x: &[Tensor3], nc: usize, np: usize) -> Vec<Tensor3> {
    let mut u: Vec<Tensor3> = vec![Tensor3::zeros([np, np, np]); nc];
    for (i, maps) in maps {
        for (k, uk) in u.iter_mut().enumerate() {
            let xb = &x[i * nc + k];
            for a3 in 0..np {
                let Some(s3) = maps[2][a3] else { continue };
                for a2 in 0..np {
                    let Some(s2) = maps[1][a2] else { continue };
                    for a1 in 0..np {
                        let Some(s1) = maps[0][a1] else { continue };
                        let v = uk.get(a1, a2, a3) + xb.get(s1, s2, s3);
                        uk.set(a1, a2, a3, v);
                    }
                }
            }
        }
    }
    u
}

/// Coefficients of `u_h = Σ_i u^(i) + lifting` in the full spline space of
/// patch `m`, per component.
pub fn patch_field(sys: &BlockSystem, x: &[Tensor3], m: usize) -> Result<Vec<Tensor3>> {
    let nc = sys.ncomp();
    let np = sys.setup.disc.patch_dim();
    let mut u = gather(&patch_maps(sys, m), x, nc, np);
    if let Some(lift) = &sys.lifting {
        for (k, uk) in u.iter_mut().enumerate() {
            uk.axpy(1.0, &lift[m][k].densify(usize::MAX)?);
        }
    }
    Ok(u)
}

/// Concatenate block tensors into one vector.
pub fn flatten(blocks: &[Tensor3]) -> DVector<f64> {
    DVector::from_iterator(blocks.iter().map(|b| b.len()).sum(), blocks.iter().flat_map(|b| b.data.iter().copied()))
}

/// Inverse of [`flatten`].
pub fn unflatten(v: &DVector<f64>, dims: &[[usize; 3]]) -> Vec<Tensor3> {
    let mut out = Vec::with_capacity(dims.len());
    let mut o = 0;
    for d in dims {
        let n = d[0] * d[1] * d[2];
        out.push(Tensor3::from_vec(*d, v.as_slice()[o..o + n].to_vec()));
        o += n;
    }
    out
}
