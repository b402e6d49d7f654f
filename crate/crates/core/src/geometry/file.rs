//! Line-oriented domain description.
//!
//! ```text
//! # comment
//! name = two_cubes
//! patch
//!   box = 0 0 0 1 1 1          # trilinear box: lower corner, upper corner
//!   bc = D N N N D N           # faces (1,lo) (1,hi) (2,lo) (2,hi) (3,lo) (3,hi)
//!   young = 1
//!   poisson = 0.3
//! end
//! patch
//!   degrees = 1 1 1
//!   knots1 = 0 0 1 1
//!   knots2 = 0 0 1 1
//!   knots3 = 0 0 1 1
//!   ctrl = 1 0 0               # one control point per line, direction 1 fastest
//!   ...
//!   bc = N N N N D N
//! end
//! glue = 0 1 1                 # patch 0's upper face in direction 1 is patch 1's lower face
//! ```
//!
//! Faces that are glued may carry any tag; it is ignored.

use std::fmt::Write as _;

use super::{Bc, Domain, Glue, Material, Patch};
use crate::error::{Error, Result};
use crate::splines::KnotVector;

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn floats(line: usize, s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| perr(line, format!("bad number `{t}`")))).collect()
}

#[derive(Default)]
struct PatchDraft {
    start: usize,
    boxed: Option<([f64; 3], [f64; 3])>,
    degrees: Option<[usize; 3]>,
    knots: [Option<Vec<f64>>; 3],
    ctrl: Vec<[f64; 3]>,
    bc: Option<[Bc; 6]>,
    material: Material,
}

impl PatchDraft {
    fn finish(self) -> Result<Patch> {
        let bc = self.bc.unwrap_or([Bc::Neumann; 6]);
        if let Some((lo, hi)) = self.boxed {
            if self.degrees.is_some() || !self.ctrl.is_empty() {
                return Err(perr(self.start, "`box` cannot be combined with explicit control points"));
            }
            return Ok(Patch::affine_box(lo, hi, bc, self.material));
        }
        let deg = self.degrees.ok_or_else(|| perr(self.start, "patch needs `box` or `degrees`"))?;
        let mut kv = Vec::new();
        for d in 0..3 {
            let k = self.knots[d].clone().ok_or_else(|| perr(self.start, format!("missing knots{}", d + 1)))?;
            kv.push(KnotVector::new(deg[d], k).map_err(|e| perr(self.start, e.to_string()))?);
        }
        let k3 = kv.pop().unwrap();
        let k2 = kv.pop().unwrap();
        let k1 = kv.pop().unwrap();
        Patch::new([k1, k2, k3], self.ctrl, bc, self.material).map_err(|e| perr(self.start, e.to_string()))
    }
}

pub fn parse_domain(text: &str) -> Result<Domain> {
    let mut name = String::from("custom");
    let mut patches = Vec::new();
    let mut glues = Vec::new();
    let mut cur: Option<PatchDraft> = None;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "patch" {
            if cur.is_some() {
                return Err(perr(ln, "nested `patch`"));
            }
            cur = Some(PatchDraft { start: ln, ..Default::default() });
            continue;
        }
        if line == "end" {
            let p = cur.take().ok_or_else(|| perr(ln, "`end` without `patch`"))?;
            patches.push(p.finish()?);
            continue;
        }
        let (key, val) = line.split_once('=').ok_or_else(|| perr(ln, "expected `key = value`"))?;
        let (key, val) = (key.trim(), val.trim());
        match (&mut cur, key) {
            (None, "name") => name = val.to_string(),
            (None, "glue") => {
                let t: Vec<usize> = val
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| perr(ln, format!("bad integer `{x}`"))))
                    .collect::<Result<_>>()?;
                if t.len() != 3 || !(1..=3).contains(&t[2]) {
                    return Err(perr(ln, "glue needs `patch_a patch_b direction(1..3)`"));
                }
                glues.push(Glue { a: t[0], b: t[1], dir: t[2] - 1 });
            }
            (Some(p), "box") => {
                let v = floats(ln, val)?;
                if v.len() != 6 {
                    return Err(perr(ln, "box needs 6 numbers"));
                }
                p.boxed = Some(([v[0], v[1], v[2]], [v[3], v[4], v[5]]));
            }
            (Some(p), "degrees") => {
                let v: Vec<usize> = val
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| perr(ln, format!("bad integer `{x}`"))))
                    .collect::<Result<_>>()?;
                if v.len() != 3 {
                    return Err(perr(ln, "degrees needs 3 integers"));
                }
                p.degrees = Some([v[0], v[1], v[2]]);
            }
            (Some(p), "knots1") => p.knots[0] = Some(floats(ln, val)?),
            (Some(p), "knots2") => p.knots[1] = Some(floats(ln, val)?),
            (Some(p), "knots3") => p.knots[2] = Some(floats(ln, val)?),
            (Some(p), "ctrl") => {
                let v = floats(ln, val)?;
                if v.len() != 3 {
                    return Err(perr(ln, "ctrl needs 3 coordinates"));
                }
                p.ctrl.push([v[0], v[1], v[2]]);
            }
            (Some(p), "bc") => {
                let t: Vec<&str> = val.split_whitespace().collect();
                if t.len() != 6 {
                    return Err(perr(ln, "bc needs 6 tags"));
                }
                let mut bc = [Bc::Neumann; 6];
                for (f, s) in t.iter().enumerate() {
                    bc[f] = match *s {
                        "D" | "d" => Bc::Dirichlet,
                        "N" | "n" | "I" | "i" => Bc::Neumann,
                        _ => return Err(perr(ln, format!("unknown boundary tag `{s}`"))),
                    };
                }
                p.bc = Some(bc);
            }
            (Some(p), "young") => p.material.young = floats(ln, val)?.first().copied().ok_or_else(|| perr(ln, "missing value"))?,
            (Some(p), "poisson") => {
                p.material.poisson = floats(ln, val)?.first().copied().ok_or_else(|| perr(ln, "missing value"))?
            }
            (_, k) => return Err(perr(ln, format!("unexpected key `{k}`"))),
        }
    }
    if let Some(p) = cur {
        return Err(perr(p.start, "unterminated `patch` block"));
    }
    let d = Domain { name, patches, glues };
    d.validate()?;
    Ok(d)
}

pub fn write_domain(d: &Domain) -> String {
    let mut s = String::new();
    writeln!(s, "name = {}", d.name).unwrap();
    for p in &d.patches {
        writeln!(s, "patch").unwrap();
        let deg: Vec<String> = p.knots.iter().map(|k| k.degree().to_string()).collect();
        writeln!(s, "  degrees = {}", deg.join(" ")).unwrap();
        for (i, k) in p.knots.iter().enumerate() {
            let v: Vec<String> = k.knots().iter().map(|x| format!("{x:?}")).collect();
            writeln!(s, "  knots{} = {}", i + 1, v.join(" ")).unwrap();
        }
        for c in &p.ctrl {
            writeln!(s, "  ctrl = {:?} {:?} {:?}", c[0], c[1], c[2]).unwrap();
        }
        let bc: Vec<&str> = p.bc.iter().map(|b| if *b == Bc::Dirichlet { "D" } else { "N" }).collect();
        writeln!(s, "  bc = {}", bc.join(" ")).unwrap();
        writeln!(s, "  young = {:?}", p.material.young).unwrap();
        writeln!(s, "  poisson = {:?}", p.material.poisson).unwrap();
        writeln!(s, "end").unwrap();
    }
    for g in &d.glues {
        writeln!(s, "glue = {} {} {}", g.a, g.b, g.dir + 1).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builtin::{lshape, thick_ring};

    #[test]
    fn round_trip_builtins() {
        for d in [lshape(), thick_ring()] {
            let e = parse_domain(&write_domain(&d)).unwrap();
            assert_eq!(e.patches.len(), d.patches.len());
            assert_eq!(e.glues, d.glues);
            let x = e.patches[1].map([0.3, 0.6, 0.2]).unwrap();
            let y = d.patches[1].map([0.3, 0.6, 0.2]).unwrap();
            assert_eq!(x, y);
            assert_eq!(e.subdomains().unwrap().len(), d.subdomains().unwrap().len());
        }
    }

    #[test]
    fn box_shortcut_and_errors() {
        let txt = "name = pair\npatch\n box = 0 0 0 1 1 1\n bc = D N N N D N\nend\npatch\n box = 1 0 0 2 1 1\n bc = N N N N D N\nend\nglue = 0 1 1\n";
        let d = parse_domain(txt).unwrap();
        assert_eq!(d.subdomains().unwrap().len(), 1);
        let bad = "patch\n box = 0 0 0 1 1\nend\n";
        assert!(matches!(parse_domain(bad), Err(Error::Parse { line: 2, .. })));
        let gap = "patch\n box = 0 0 0 1 1 1\nend\npatch\n box = 1.5 0 0 2 1 1\nend\nglue = 0 1 1\n";
        assert!(matches!(parse_domain(gap), Err(Error::NonConforming(_))));
    }
}
