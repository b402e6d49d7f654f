use nalgebra::DMatrix;

use super::{Bc, Domain, Glue, Material, Patch};
use crate::error::{Error, Result};
use crate::splines::KnotVector;

pub const BUILTIN_DOMAINS: [&str; 4] = ["lshape", "cross3d", "thick_square", "thick_ring"];

use Bc::{Dirichlet as D, Neumann as N};

pub fn builtin_domain(name: &str) -> Result<Domain> {
    match name {
        "lshape" => Ok(lshape()),
        "cross3d" | "cross" => Ok(cross3d()),
        "thick_square" => Ok(thick_square()),
        "thick_ring" | "ring" => Ok(thick_ring()),
        _ => Err(Error::UnknownDomain(name.to_string())),
    }
}

/// Three unit cubes forming an L: `[-1,0]×[0,1]²`, `[0,1]³` and
/// `[0,1]²×[1,2]`. Dirichlet on the planes `x = -1`, `z = 1`, `x = 0` and
/// `z = 0`, homogeneous Neumann elsewhere.
pub fn lshape() -> Domain {
    let m = Material::default();
    let patches = vec![
        Patch::affine_box([-1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [D, D, N, N, D, D], m),
        Patch::affine_box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [D, N, N, N, D, D], m),
        Patch::affine_box([0.0, 0.0, 1.0], [1.0, 1.0, 2.0], [D, N, N, N, D, N], m),
    ];
    let glues = vec![Glue { a: 0, b: 1, dir: 0 }, Glue { a: 1, b: 2, dir: 2 }];
    Domain { name: "lshape".into(), patches, glues }
}

/// A central unit cube with one unit cube attached to each of its faces.
/// The far face of each arm is traction free; every other boundary face is
/// clamped.
pub fn cross3d() -> Domain {
    let m = Material::default();
    let mut patches = vec![Patch::affine_box([0.0; 3], [1.0; 3], [D; 6], m)];
    let mut glues = Vec::new();
    for d in 0..3 {
        for side in 0..2 {
            let mut lo = [0.0; 3];
            let mut hi = [1.0; 3];
            if side == 1 {
                lo[d] = 1.0;
                hi[d] = 2.0;
            } else {
                lo[d] = -1.0;
                hi[d] = 0.0;
            }
            let mut bc = [D; 6];
            bc[2 * d + side] = N;
            patches.push(Patch::affine_box(lo, hi, bc, m));
            let arm = patches.len() - 1;
            glues.push(if side == 1 { Glue { a: 0, b: arm, dir: d } } else { Glue { a: arm, b: 0, dir: d } });
        }
    }
    Domain { name: "cross3d".into(), patches, glues }
}

/// `[0,2]²×[0,1]` split into 3×3×1 patches. Traction free on `z = 1`,
/// clamped elsewhere; `E = 6` on the four corner patches and `E = 1` on
/// the others, `ν = 0.3`.
pub fn thick_square() -> Domain {
    let mut patches = Vec::new();
    for b in 0..3 {
        for a in 0..3 {
            let corner = (a == 0 || a == 2) && (b == 0 || b == 2);
            let mat = Material { young: if corner { 6.0 } else { 1.0 }, poisson: 0.3 };
            let lo = [2.0 * a as f64 / 3.0, 2.0 * b as f64 / 3.0, 0.0];
            let hi = [2.0 * (a + 1) as f64 / 3.0, 2.0 * (b + 1) as f64 / 3.0, 1.0];
            patches.push(Patch::affine_box(lo, hi, [D, D, D, D, D, N], mat));
        }
    }
    let mut glues = Vec::new();
    for b in 0..3 {
        for a in 0..3 {
            if a < 2 {
                glues.push(Glue { a: a + 3 * b, b: a + 1 + 3 * b, dir: 0 });
            }
            if b < 2 {
                glues.push(Glue { a: a + 3 * b, b: a + 3 * (b + 1), dir: 1 });
            }
        }
    }
    Domain { name: "thick_square".into(), patches, glues }
}

/// Degree of the single-segment polynomial used for the quarter circle.
pub const RING_ARC_DEGREE: usize = 12;
pub const RING_INNER_RADIUS: f64 = 1.0;
pub const RING_OUTER_RADIUS: f64 = 2.0;
pub const RING_HEIGHT: f64 = 1.0;

/// Bézier control points of a polynomial interpolant of the unit quarter
/// circle, collocated at Chebyshev extreme points of the parameter.
fn quarter_arc(deg: usize) -> Vec<[f64; 2]> {
    let n = deg + 1;
    let t: Vec<f64> = (0..n).map(|j| 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / deg as f64).cos())).collect();
    let bern = |i: usize, x: f64| {
        let mut c = 1.0;
        for k in 0..i {
            c = c * (deg - k) as f64 / (k + 1) as f64;
        }
        c * x.powi(i as i32) * (1.0 - x).powi((deg - i) as i32)
    };
    let b = DMatrix::from_fn(n, n, |j, i| bern(i, t[j]));
    let lu = b.lu();
    let th = |x: f64| 0.5 * std::f64::consts::PI * x;
    let xs = lu.solve(&nalgebra::DVector::from_iterator(n, t.iter().map(|&x| th(x).cos()))).expect("regular");
    let ys = lu.solve(&nalgebra::DVector::from_iterator(n, t.iter().map(|&x| th(x).sin()))).expect("regular");
    let mut pts: Vec<[f64; 2]> = (0..n).map(|i| [xs[i], ys[i]]).collect();
    pts[0] = [1.0, 0.0];
    pts[deg] = [0.0, 1.0];
    pts
}

/// Four quarter-ring patches (radii 1 and 2, height 1) glued cyclically in
/// the angular direction. Parameters: angle, radius, height. Clamped on
/// `z = 0` and on the inner wall, traction free elsewhere.
pub fn thick_ring() -> Domain {
    let arc = quarter_arc(RING_ARC_DEGREE);
    let k_arc = KnotVector::uniform_open(RING_ARC_DEGREE, 1).expect("valid");
    let k_lin = KnotVector::uniform_open(1, 1).expect("valid");
    let mut patches = Vec::new();
    for q in 0..4 {
        let rot = |p: [f64; 2]| -> [f64; 2] {
            let mut p = p;
            for _ in 0..q {
                p = [-p[1], p[0]];
            }
            p
        };
        let mut ctrl = Vec::new();
        for k in 0..2 {
            for j in 0..2 {
                let r = if j == 0 { RING_INNER_RADIUS } else { RING_OUTER_RADIUS };
                for a in &arc {
                    let p = rot(*a);
                    ctrl.push([r * p[0], r * p[1], RING_HEIGHT * k as f64]);
                }
            }
        }
        let bc = [N, N, D, N, D, N];
        patches.push(
            Patch::new([k_arc.clone(), k_lin.clone(), k_lin.clone()], ctrl, bc, Material::default()).expect("consistent"),
        );
    }
    let glues = (0..4).map(|q| Glue { a: q, b: (q + 1) % 4, dir: 0 }).collect();
    Domain { name: "thick_ring".into(), patches, glues }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_split() {
        let expect = [("lshape", 2, 3), ("cross3d", 6, 7), ("thick_square", 4, 9), ("thick_ring", 4, 4)];
        for (name, nsub, np) in expect {
            let d = builtin_domain(name).unwrap();
            d.validate().unwrap();
            assert_eq!(d.npatches(), np);
            let s = d.subdomains().unwrap();
            assert_eq!(s.len(), nsub, "{name}");
        }
        assert!(matches!(builtin_domain("torus"), Err(Error::UnknownDomain(_))));
    }

    #[test]
    fn cross_center_in_every_subdomain() {
        let s = cross3d().subdomains().unwrap();
        assert!(s.iter().all(|sd| sd.patches().contains(&0)));
    }

    #[test]
    fn lshape_elimination_flags() {
        let s = lshape().subdomains().unwrap();
        assert_eq!(s[0].pbox.ext, [2, 1, 1]);
        assert_eq!(s[0].elim, [[true, false], [false, false], [true, true]]);
        assert_eq!(s[1].pbox.ext, [1, 1, 2]);
        assert_eq!(s[1].elim, [[true, false], [false, false], [true, false]]);
    }

    #[test]
    fn ring_arc_is_nearly_circular() {
        let d = thick_ring();
        let p = &d.patches[1];
        for k in 0..=20 {
            let x = p.map([k as f64 / 20.0, 0.0, 0.5]).unwrap();
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!((r - 1.0).abs() < 1e-9, "radius {r}");
        }
    }

    #[test]
    fn thick_square_subdomains_are_four_patch_boxes() {
        let s = thick_square().subdomains().unwrap();
        for sd in &s {
            assert_eq!(sd.pbox.ext, [2, 2, 1]);
            assert_eq!(sd.elim, [[true, true], [true, true], [true, false]]);
        }
    }
}
