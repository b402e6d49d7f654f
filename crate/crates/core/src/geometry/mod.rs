//! Multipatch geometry, boundary tags and overlapping subdomains.
//!
//! Every patch is a trivariate spline map `F: [0,1]³ → R³`. Patches are glued
//! face to face with identity orientation: patch `a`'s upper face in
//! direction `d` coincides with patch `b`'s lower face in the same direction,
//! with the two remaining parameters aligned. Subdomains are boxes of one,
//! two, four or eight patches sharing a face, an edge or a corner.

mod builtin;
mod file;

pub use builtin::{builtin_domain, cross3d, lshape, thick_ring, thick_square, BUILTIN_DOMAINS};
pub use file::{parse_domain, write_domain};

use crate::error::{Error, Result};
use crate::splines::{KnotVector, Retained};

/// Kind of problem being discretized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Vector-valued linear elasticity (three components).
    Elasticity,
    /// Scalar Poisson problem.
    Scalar,
}

impl Mode {
    pub fn components(self) -> usize {
        match self {
            Mode::Elasticity => 3,
            Mode::Scalar => 1,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "elasticity" => Ok(Mode::Elasticity),
            "scalar" | "poisson" => Ok(Mode::Scalar),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

/// Isotropic material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material { young: 1.0, poisson: 0.3 }
    }
}

impl Material {
    /// Lamé parameters `(μ, λ)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.young, self.poisson);
        (e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))
    }
}

/// Boundary condition on a patch face that is not glued to another patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bc {
    Dirichlet,
    Neumann,
}

/// Classification of a patch face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    Dirichlet,
    Neumann,
    Interface(usize),
}

/// Face index `2 d + side` for direction `d` and side 0 (lower) or 1 (upper).
pub fn face_index(d: usize, side: usize) -> usize {
    2 * d + side
}

/// One trivariate spline patch.
#[derive(Clone, Debug)]
pub struct Patch {
    pub knots: [KnotVector; 3],
    /// Control points, first direction fastest.
    pub ctrl: Vec<[f64; 3]>,
    pub bc: [Bc; 6],
    pub material: Material,
}

impl Patch {
    pub fn new(knots: [KnotVector; 3], ctrl: Vec<[f64; 3]>, bc: [Bc; 6], material: Material) -> Result<Patch> {
        let n: usize = knots.iter().map(|k| k.dim()).product();
        if ctrl.len() != n {
            return Err(Error::DimensionMismatch(format!("{} control points for {n} basis functions", ctrl.len())));
        }
        Ok(Patch { knots, ctrl, bc, material })
    }

    /// Trilinear box `[lo, hi]` (degree 1, one element per direction).
    pub fn affine_box(lo: [f64; 3], hi: [f64; 3], bc: [Bc; 6], material: Material) -> Patch {
        let kv = KnotVector::uniform_open(1, 1).expect("valid");
        let mut ctrl = Vec::with_capacity(8);
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..2 {
                    let s = [i, j, k];
                    ctrl.push([0, 1, 2].map(|d| if s[d] == 0 { lo[d] } else { hi[d] }));
                }
            }
        }
        Patch { knots: [kv.clone(), kv.clone(), kv], ctrl, bc, material }
    }

    fn dims(&self) -> [usize; 3] {
        [self.knots[0].dim(), self.knots[1].dim(), self.knots[2].dim()]
    }

    /// Image point and Jacobian `J[i][j] = ∂x_i / ∂ξ_j`.
    pub fn eval(&self, xi: [f64; 3]) -> Result<([f64; 3], [[f64; 3]; 3])> {
        let mut first = [0; 3];
        let mut vals: [Vec<f64>; 3] = Default::default();
        let mut ders: [Vec<f64>; 3] = Default::default();
        for d in 0..3 {
            let (f, v, dv) = self.knots[d].eval(xi[d])?;
            first[d] = f;
            vals[d] = v;
            ders[d] = dv;
        }
        let n = self.dims();
        let mut x = [0.0; 3];
        let mut jac = [[0.0; 3]; 3];
        for (c, (v3, d3)) in vals[2].iter().zip(&ders[2]).enumerate() {
            for (b, (v2, d2)) in vals[1].iter().zip(&ders[1]).enumerate() {
                for (a, (v1, d1)) in vals[0].iter().zip(&ders[0]).enumerate() {
                    let idx = (first[0] + a) + n[0] * ((first[1] + b) + n[1] * (first[2] + c));
                    let p = self.ctrl[idx];
                    let w = [d1 * v2 * v3, v1 * d2 * v3, v1 * v2 * d3];
                    let w0 = v1 * v2 * v3;
                    for i in 0..3 {
                        x[i] += w0 * p[i];
                        for j in 0..3 {
                            jac[i][j] += w[j] * p[i];
                        }
                    }
                }
            }
        }
        Ok((x, jac))
    }

    pub fn map(&self, xi: [f64; 3]) -> Result<[f64; 3]> {
        Ok(self.eval(xi)?.0)
    }
}

pub fn det3(j: &[[f64; 3]; 3]) -> f64 {
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

pub fn inv3(j: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let d = det3(j);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            let (a, b) = ((k + 1) % 3, (k + 2) % 3);
            let (c, e) = ((i + 1) % 3, (i + 2) % 3);
            r[i][k] = (j[a][c] * j[b][e] - j[a][e] * j[b][c]) / d;
        }
    }
    r
}

/// Coefficient matrix `C^(k,ℓ) = |det J| J⁻¹ M J⁻ᵀ` for the pair of
/// components `(k, ℓ)`, where `M = μ(δ_kℓ I + e_ℓ e_kᵀ) + λ e_k e_ℓᵀ` in
/// elasticity and `M = I` in scalar mode.
pub fn coefficient(jac: &[[f64; 3]; 3], mode: Mode, mat: &Material, k: usize, l: usize) -> [[f64; 3]; 3] {
    let det = det3(jac);
    let ji = inv3(jac);
    let mut m = [[0.0; 3]; 3];
    match mode {
        Mode::Scalar => {
            for (i, row) in m.iter_mut().enumerate() {
                row[i] = 1.0;
            }
        }
        Mode::Elasticity => {
            let (mu, lambda) = mat.lame();
            if k == l {
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] = mu;
                }
            }
            m[l][k] += mu;
            m[k][l] += lambda;
        }
    }
    // ji * m * ji^T scaled by |det|
    let mut t = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            t[a][b] = (0..3).map(|c| ji[a][c] * m[c][b]).sum();
        }
    }
    let mut out = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            out[a][b] = det.abs() * (0..3).map(|c| t[a][c] * ji[b][c]).sum::<f64>();
        }
    }
    out
}

/// Face gluing record: patch `a`'s upper face in direction `dir` is patch
/// `b`'s lower face in the same direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Glue {
    pub a: usize,
    pub b: usize,
    pub dir: usize,
}

/// A multipatch domain.
#[derive(Clone, Debug)]
pub struct Domain {
    pub name: String,
    pub patches: Vec<Patch>,
    pub glues: Vec<Glue>,
}

/// A box of patches: extents 1 or 2 per direction, cells indexed by
/// `g1 + 2 (g2 + 2 g3)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchBox {
    pub ext: [usize; 3],
    cells: [Option<usize>; 8],
}

impl PatchBox {
    pub fn single(p: usize) -> PatchBox {
        let mut cells = [None; 8];
        cells[0] = Some(p);
        PatchBox { ext: [1, 1, 1], cells }
    }

    pub fn patch_at(&self, g: [usize; 3]) -> usize {
        self.cells[g[0] + 2 * (g[1] + 2 * g[2])].expect("cell inside box")
    }

    /// Positions and patches, lowest position first.
    pub fn cells(&self) -> Vec<([usize; 3], usize)> {
        let mut v = Vec::new();
        for g3 in 0..self.ext[2] {
            for g2 in 0..self.ext[1] {
                for g1 in 0..self.ext[0] {
                    v.push(([g1, g2, g3], self.patch_at([g1, g2, g3])));
                }
            }
        }
        v
    }

    pub fn patches(&self) -> Vec<usize> {
        self.cells().into_iter().map(|(_, p)| p).collect()
    }

    pub fn position_of(&self, patch: usize) -> Option<[usize; 3]> {
        self.cells().into_iter().find(|&(_, p)| p == patch).map(|(g, _)| g)
    }

    /// Patch containing box parameter `xi`, with its local parameter.
    pub fn locate(&self, xi: [f64; 3]) -> (usize, [f64; 3], [usize; 3]) {
        let mut g = [0; 3];
        let mut loc = xi;
        for d in 0..3 {
            if self.ext[d] == 2 {
                g[d] = usize::from(xi[d] > 0.5);
                loc[d] = 2.0 * xi[d] - g[d] as f64;
            }
        }
        (self.patch_at(g), loc, g)
    }

    /// Number of glued directions.
    pub fn glued(&self) -> usize {
        self.ext.iter().filter(|&&e| e == 2).count()
    }
}

/// An overlapping subdomain together with its Dirichlet elimination flags.
#[derive(Clone, Debug)]
pub struct Subdomain {
    pub pbox: PatchBox,
    /// `elim[d][side]`: basis functions on this box face are removed.
    pub elim: [[bool; 2]; 3],
}

/// Univariate discrete spaces of a subdomain.
#[derive(Clone, Debug)]
pub struct SubdomainSpace {
    pub knots: [KnotVector; 3],
    pub retained: [Retained; 3],
}

impl SubdomainSpace {
    pub fn dims(&self) -> [usize; 3] {
        [self.retained[0].len(), self.retained[1].len(), self.retained[2].len()]
    }

    pub fn ndof(&self) -> usize {
        self.dims().iter().product()
    }
}

/// Univariate discretization shared by every patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Discretization {
    pub degree: usize,
    pub n_el: usize,
}

impl Discretization {
    pub fn patch_knots(&self) -> KnotVector {
        KnotVector::uniform_open(self.degree, self.n_el).expect("valid")
    }

    pub fn patch_dim(&self) -> usize {
        self.n_el + self.degree
    }

    /// Knot vector over a box with extent 1 or 2.
    pub fn box_knots(&self, ext: usize) -> KnotVector {
        let k = self.patch_knots();
        if ext == 2 {
            KnotVector::merge(&k, &k).expect("conforming")
        } else {
            k
        }
    }
}

impl Domain {
    pub fn npatches(&self) -> usize {
        self.patches.len()
    }

    /// Neighbor across face `(d, side)`.
    pub fn neighbor(&self, m: usize, d: usize, side: usize) -> Option<usize> {
        self.glues.iter().find_map(|g| {
            if g.dir != d {
                None
            } else if side == 1 && g.a == m {
                Some(g.b)
            } else if side == 0 && g.b == m {
                Some(g.a)
            } else {
                None
            }
        })
    }

    pub fn face_kind(&self, m: usize, d: usize, side: usize) -> FaceKind {
        match self.neighbor(m, d, side) {
            Some(q) => FaceKind::Interface(q),
            None => match self.patches[m].bc[face_index(d, side)] {
                Bc::Dirichlet => FaceKind::Dirichlet,
                Bc::Neumann => FaceKind::Neumann,
            },
        }
    }

    /// Check gluing records: indices, uniqueness, matching face geometry, and
    /// invertible Jacobians on a probe grid.
    pub fn validate(&self) -> Result<()> {
        let np = self.patches.len();
        if np == 0 {
            return Err(Error::Topology("domain has no patches".into()));
        }
        for g in &self.glues {
            if g.a >= np || g.b >= np || g.dir > 2 || g.a == g.b {
                return Err(Error::Topology(format!("invalid glue {:?}", g)));
            }
        }
        for m in 0..np {
            for d in 0..3 {
                for side in 0..2 {
                    let c = self
                        .glues
                        .iter()
                        .filter(|g| g.dir == d && ((side == 1 && g.a == m) || (side == 0 && g.b == m)))
                        .count();
                    if c > 1 {
                        return Err(Error::Topology(format!("face ({d}, {side}) of patch {m} glued twice")));
                    }
                }
            }
        }
        let probe = [0.0, 0.31, 0.5, 0.77, 1.0];
        for g in &self.glues {
            let (pa, pb) = (&self.patches[g.a], &self.patches[g.b]);
            let others: Vec<usize> = (0..3).filter(|&e| e != g.dir).collect();
            for &s in &probe {
                for &t in &probe {
                    let mut xa = [0.0; 3];
                    let mut xb = [0.0; 3];
                    xa[g.dir] = 1.0;
                    xb[g.dir] = 0.0;
                    xa[others[0]] = s;
                    xb[others[0]] = s;
                    xa[others[1]] = t;
                    xb[others[1]] = t;
                    let ya = pa.map(xa)?;
                    let yb = pb.map(xb)?;
                    let dist = (0..3).map(|i| (ya[i] - yb[i]).powi(2)).sum::<f64>().sqrt();
                    if dist > 1e-9 {
                        return Err(Error::NonConforming(format!(
                            "patches {} and {} do not match on their shared face (gap {dist:e})",
                            g.a, g.b
                        )));
                    }
                }
            }
        }
        for (m, p) in self.patches.iter().enumerate() {
            for &a in &probe {
                for &b in &probe {
                    for &c in &probe {
                        let (_, j) = p.eval([a, b, c])?;
                        let det = det3(&j);
                        if !(det.abs() > 1e-14) {
                            return Err(Error::SingularJacobian { patch: m, xi: [a, b, c], det });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Box of patches reached from `start` by stepping up in the directions
    /// listed in `dirs`, if every step exists and the steps commute.
    fn try_box(&self, start: usize, dirs: &[usize]) -> Option<PatchBox> {
        let mut ext = [1; 3];
        for &d in dirs {
            ext[d] = 2;
        }
        let mut cells = [None; 8];
        cells[0] = Some(start);
        for g3 in 0..ext[2] {
            for g2 in 0..ext[1] {
                for g1 in 0..ext[0] {
                    let g = [g1, g2, g3];
                    if g == [0, 0, 0] {
                        continue;
                    }
                    // Reach g by one step from a lower cell, and check all lower cells agree.
                    let mut found: Option<usize> = None;
                    for d in 0..3 {
                        if g[d] == 1 {
                            let mut h = g;
                            h[d] = 0;
                            let from = cells[h[0] + 2 * (h[1] + 2 * h[2])]?;
                            let nb = self.neighbor(from, d, 1)?;
                            match found {
                                None => found = Some(nb),
                                Some(f) if f != nb => return None,
                                _ => {}
                            }
                        }
                    }
                    cells[g1 + 2 * (g2 + 2 * g3)] = found;
                }
            }
        }
        let pb = PatchBox { ext, cells };
        let mut ps = pb.patches();
        ps.sort_unstable();
        ps.dedup();
        if ps.len() != pb.cells().len() {
            return None;
        }
        Some(pb)
    }

    /// Subdomains: first boxes around corners shared by 8 patches, then
    /// around edges shared by 4, then face pairs. A candidate whose patches
    /// all belong to an earlier subdomain is skipped. Isolated patches form
    /// a subdomain on their own.
    pub fn subdomains(&self) -> Result<Vec<Subdomain>> {
        let mut boxes: Vec<PatchBox> = Vec::new();
        let contained = |boxes: &Vec<PatchBox>, pb: &PatchBox| {
            let ps = pb.patches();
            boxes.iter().any(|b| {
                let bp = b.patches();
                ps.iter().all(|p| bp.contains(p))
            })
        };
        let dir_sets: [&[usize]; 7] = [&[0, 1, 2], &[0, 1], &[0, 2], &[1, 2], &[0], &[1], &[2]];
        for dirs in dir_sets {
            for m in 0..self.patches.len() {
                if let Some(pb) = self.try_box(m, dirs) {
                    if !contained(&boxes, &pb) {
                        boxes.push(pb);
                    }
                }
            }
        }
        for m in 0..self.patches.len() {
            let pb = PatchBox::single(m);
            if !contained(&boxes, &pb) {
                boxes.push(pb);
            }
        }
        boxes.into_iter().map(|pb| self.make_subdomain(pb)).collect()
    }

    fn make_subdomain(&self, pbox: PatchBox) -> Result<Subdomain> {
        let members = pbox.patches();
        let mut elim = [[false; 2]; 3];
        for d in 0..3 {
            for side in 0..2 {
                let gd = side * (pbox.ext[d] - 1);
                let mut kinds = Vec::new();
                for (g, p) in pbox.cells() {
                    if g[d] != gd {
                        continue;
                    }
                    let k = self.face_kind(p, d, side);
                    let removed = match k {
                        FaceKind::Dirichlet => true,
                        FaceKind::Neumann => false,
                        FaceKind::Interface(q) => {
                            if members.contains(&q) {
                                return Err(Error::Topology(format!(
                                    "outer face of subdomain {:?} is glued inside the subdomain",
                                    members
                                )));
                            }
                            true
                        }
                    };
                    kinds.push(removed);
                }
                if kinds.iter().any(|&r| r != kinds[0]) {
                    return Err(Error::BoundaryMerge(format!(
                        "subdomain {:?}: face ({}, {}) mixes Neumann and Dirichlet/interface parts",
                        members, d, side
                    )));
                }
                elim[d][side] = kinds[0];
            }
        }
        Ok(Subdomain { pbox, elim })
    }

    /// Geometry knot vectors of a box (merged in glued directions).
    pub fn box_geometry_knots(&self, pbox: &PatchBox) -> Result<[KnotVector; 3]> {
        let base = pbox.patch_at([0, 0, 0]);
        let mut out: Vec<KnotVector> = Vec::new();
        for d in 0..3 {
            let a = &self.patches[base].knots[d];
            if pbox.ext[d] == 2 {
                let mut g = [0; 3];
                g[d] = 1;
                let b = &self.patches[pbox.patch_at(g)].knots[d];
                out.push(KnotVector::merge(a, b)?);
            } else {
                out.push(a.clone());
            }
        }
        let k3 = out.pop().unwrap();
        let k2 = out.pop().unwrap();
        let k1 = out.pop().unwrap();
        Ok([k1, k2, k3])
    }

    /// Map of a box: point and Jacobian with respect to the box parameter.
    pub fn box_eval(&self, pbox: &PatchBox, xi: [f64; 3]) -> Result<(usize, [f64; 3], [[f64; 3]; 3])> {
        let (p, loc, _) = pbox.locate(xi);
        let (x, mut j) = self.patches[p].eval(loc)?;
        for d in 0..3 {
            if pbox.ext[d] == 2 {
                for row in j.iter_mut() {
                    row[d] *= 2.0;
                }
            }
        }
        Ok((p, x, j))
    }

    /// Copy with every non-glued face set to Dirichlet.
    pub fn with_all_dirichlet(&self) -> Domain {
        let mut d = self.clone();
        for p in &mut d.patches {
            p.bc = [Bc::Dirichlet; 6];
        }
        d.name = format!("{}_dirichlet", self.name);
        d
    }
}

impl Subdomain {
    pub fn space(&self, disc: &Discretization) -> SubdomainSpace {
        let mut knots: Vec<KnotVector> = Vec::new();
        let mut ret = [Retained::all(0); 3];
        for d in 0..3 {
            let kv = disc.box_knots(self.pbox.ext[d]);
            ret[d] = Retained::new(kv.dim(), self.elim[d][0], self.elim[d][1]);
            knots.push(kv);
        }
        let k3 = knots.pop().unwrap();
        let k2 = knots.pop().unwrap();
        let k1 = knots.pop().unwrap();
        SubdomainSpace { knots: [k1, k2, k3], retained: ret }
    }

    pub fn patches(&self) -> Vec<usize> {
        self.pbox.patches()
    }
}

/// Common patches of two subdomains as a box, with the box's lower corner
/// position inside each subdomain.
pub fn overlap(a: &Subdomain, b: &Subdomain) -> Result<Option<(PatchBox, [usize; 3], [usize; 3])>> {
    let pa = a.patches();
    let pb = b.patches();
    let common: Vec<usize> = pa.iter().copied().filter(|p| pb.contains(p)).collect();
    if common.is_empty() {
        return Ok(None);
    }
    let pos_a: Vec<[usize; 3]> = common.iter().map(|&p| a.pbox.position_of(p).unwrap()).collect();
    let pos_b: Vec<[usize; 3]> = common.iter().map(|&p| b.pbox.position_of(p).unwrap()).collect();
    let lo = |v: &Vec<[usize; 3]>| [0, 1, 2].map(|d| v.iter().map(|g| g[d]).min().unwrap());
    let hi = |v: &Vec<[usize; 3]>| [0, 1, 2].map(|d| v.iter().map(|g| g[d]).max().unwrap());
    let (la, ha, lb) = (lo(&pos_a), hi(&pos_a), lo(&pos_b));
    let ext = [0, 1, 2].map(|d| ha[d] - la[d] + 1);
    if ext.iter().product::<usize>() != common.len() {
        return Err(Error::Topology(format!("overlap {:?} is not a box of patches", common)));
    }
    let mut cells = [None; 8];
    for (i, &p) in common.iter().enumerate() {
        let g = pos_a[i];
        let r = [g[0] - la[0], g[1] - la[1], g[2] - la[2]];
        let gb = pos_b[i];
        if [0, 1, 2].iter().any(|&d| gb[d] - lb[d] != r[d]) {
            return Err(Error::Topology("subdomain frames disagree on an overlap".into()));
        }
        cells[r[0] + 2 * (r[1] + 2 * r[2])] = Some(p);
    }
    Ok(Some((PatchBox { ext, cells }, la, lb)))
}
