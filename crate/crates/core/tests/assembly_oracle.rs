//! Tucker-format system against patchwise reference assembly, and the block
//! rank pattern of every builtin domain.

use std::collections::{BTreeMap, BTreeSet};

use lrmp::assembly::{assemble, reference_dense, BlockSystem, CoefficientSource, ProblemSetup};
use lrmp::geometry::{builtin_domain, cross3d, lshape, thick_ring, thick_square};

fn rel(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn densified_system_matches_reference() {
    for (name, tol) in [("lshape", 1e-12), ("cross3d", 1e-12), ("thick_square", 1e-12), ("thick_ring", 1e-6)] {
        let sys = assemble(&builtin_domain(name).unwrap(), &ProblemSetup::elasticity(2, 2)).unwrap();
        assert!(sys.ndof() <= 20_000);
        let (a, f) = reference_dense(&sys, CoefficientSource::Exact).unwrap();
        let at = sys.densify(usize::MAX).unwrap();
        let ft = sys.rhs_dense().unwrap();
        assert!(rel(&at, &a) <= tol, "{name}: matrix {}", rel(&at, &a));
        assert!((&ft - &f).norm() <= tol * f.norm(), "{name}: rhs {}", (&ft - &f).norm() / f.norm());
    }
}

#[test]
fn approximate_coefficients_reproduce_the_blocks_exactly() {
    let sys = assemble(&thick_ring(), &ProblemSetup::scalar(2, 3)).unwrap();
    let (a, _) = reference_dense(&sys, CoefficientSource::Approximate).unwrap();
    assert!(rel(&sys.densify(usize::MAX).unwrap(), &a) <= 1e-11);
}

/// Rank triples grouped by (same subdomain, same component).
fn classes(sys: &BlockSystem) -> BTreeMap<(bool, bool), BTreeSet<[usize; 3]>> {
    let mut m: BTreeMap<(bool, bool), BTreeSet<[usize; 3]>> = BTreeMap::new();
    for (i, j, k, l, r) in sys.rank_report() {
        m.entry((i == j, k == l)).or_default().insert(r);
    }
    m
}

#[test]
fn lshape_and_cross_ranks() {
    for d in [lshape(), cross3d()] {
        let c = classes(&assemble(&d, &ProblemSetup::elasticity(2, 4)).unwrap());
        for ((_, same_comp), set) in &c {
            let expect = if *same_comp { [3, 3, 3] } else { [2, 2, 2] };
            assert_eq!(set, &BTreeSet::from([expect]), "{}", d.name);
        }
    }
}

#[test]
fn thick_square_ranks() {
    // E varies only in x and y on a single layer of patches: the material
    // doubles the in-plane ranks of diagonal blocks and leaves mode 3 alone.
    let c = classes(&assemble(&thick_square(), &ProblemSetup::elasticity(2, 4)).unwrap());
    assert_eq!(c[&(true, true)], BTreeSet::from([[6, 6, 3]]));
    assert_eq!(c[&(true, false)], BTreeSet::from([[4, 4, 2]]));
    assert_eq!(c[&(false, true)], BTreeSet::from([[3, 3, 3]]));
    assert_eq!(c[&(false, false)], BTreeSet::from([[2, 2, 2]]));
}

#[test]
fn thick_ring_ranks_within_one() {
    let sys = assemble(&thick_ring(), &ProblemSetup::elasticity(2, 4)).unwrap();
    for (i, j, k, l, r) in sys.rank_report() {
        let expect = match (k, l) {
            (0, 0) | (1, 1) => 5,
            (2, 2) => 3,
            _ => 4,
        };
        assert!(r.iter().all(|&x| x <= expect + 1), "block ({i},{j},{k},{l}): {r:?}");
    }
}

#[test]
fn block_matrix_is_symmetric() {
    let sys = assemble(&thick_square(), &ProblemSetup::elasticity(1, 2)).unwrap();
    let a = sys.densify(usize::MAX).unwrap();
    assert!((&a - a.transpose()).norm() <= 1e-13 * a.norm());
}
