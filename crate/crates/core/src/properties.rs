//! Invariance properties of the exact invariants across the catalog.

use crate::catalog;
use crate::divisor::{base_locus_fixed_components, section_divisor};
use crate::polytope::{LatticePolytope, PolytopeDocument};
use crate::rational::RationalVector;
use proptest::prelude::*;

const NAMES: &[&str] = &["p1", "p2", "p1xp1", "blp_p2", "blpq_p2", "p3", "blp_p3"];

fn polytope() -> impl Strategy<Value = LatticePolytope> {
    prop::sample::select(NAMES).prop_map(|n| catalog::by_name(n).unwrap())
}

/// Product of elementary row operations and sign flips: always unimodular.
fn unimodular(n: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec((0..n, 0..n, -2i64..=2, any::<bool>()), 0..6).prop_map(move |ops| {
        let mut m: Vec<Vec<i64>> = (0..n)
            .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
            .collect();
        for (i, j, k, flip) in ops {
            if i != j {
                let row = m[j].clone();
                m[i].iter_mut().zip(&row).for_each(|(a, b)| *a += k * b);
            }
            if flip {
                m[i].iter_mut().for_each(|x| *x = -*x);
            }
        }
        m
    })
}

fn apply(u: &[Vec<i64>], y: &RationalVector) -> RationalVector {
    y.transform(u)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vertex_order_is_irrelevant(p in polytope(), seed in any::<u64>()) {
        let mut vertices = p.vertices().to_vec();
        // deterministic shuffle from the seed
        let mut s = seed;
        for i in (1..vertices.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            vertices.swap(i, (s >> 33) as usize % (i + 1));
        }
        let q = LatticePolytope::new(None, p.dim(), vertices, None).unwrap();
        prop_assert_eq!(q.vertices(), p.vertices());
        let (a, b) = (p.fano_invariants(), q.fano_invariants());
        prop_assert_eq!(a.r, b.r);
        prop_assert_eq!(a.barycenter, b.barycenter);
        prop_assert_eq!(a.q, b.q);
        prop_assert_eq!(a.volume, b.volume);
    }

    #[test]
    fn unimodular_equivariance(
        (p, u) in polytope().prop_flat_map(|p| { let n = p.dim(); (Just(p), unimodular(n)) })
    ) {
        let q = p.transformed(&u).unwrap();
        let (a, b) = (p.fano_invariants(), q.fano_invariants());
        prop_assert_eq!(&b.r, &a.r);
        prop_assert_eq!(&b.volume, &a.volume);
        prop_assert_eq!(b.barycenter, apply(&u, &a.barycenter));
        prop_assert_eq!(b.q, a.q.as_ref().map(|y| apply(&u, y)));
    }

    #[test]
    fn q_lies_on_the_boundary_of_its_face(p in polytope()) {
        let inv = p.fano_invariants();
        if let (Some(q), Some(face)) = (&inv.q, &inv.minimal_face) {
            for r in 0..p.facets().len() {
                let v = p.facet_value(r, q);
                let minus_one = crate::rational::rat(-1);
                prop_assert!(v >= minus_one);
                prop_assert_eq!(v == minus_one, face.active_facets.contains(&r));
            }
        } else {
            prop_assert!(inv.ke_exists);
        }
    }

    #[test]
    fn document_round_trip(p in polytope()) {
        let doc = PolytopeDocument::from_json(&p.to_document().to_json()).unwrap();
        let q = LatticePolytope::from_document(&doc).unwrap();
        prop_assert_eq!(q.to_document(), p.to_document());
    }
}

/// Fixed components from the minimum over every lattice point of the face,
/// not just its vertices.
fn brute_force_fixed(p: &LatticePolytope) -> Vec<(usize, i64)> {
    let face = p.fano_invariants().minimal_face.unwrap();
    let on_face: Vec<Vec<i64>> = p
        .lattice_points()
        .into_iter()
        .filter(|y| {
            face.active_facets
                .iter()
                .all(|&r| p.facets()[r].iter().zip(y).map(|(a, b)| a * b).sum::<i64>() == -1)
        })
        .collect();
    let divisors: Vec<Vec<i64>> = on_face
        .iter()
        .map(|y| section_divisor(p, y).unwrap().0)
        .collect();
    (0..p.facets().len())
        .filter_map(|r| {
            let a = divisors.iter().map(|d| d[r]).min().unwrap();
            (a > 0).then_some((r, a))
        })
        .collect()
}

#[test]
fn fixed_components_match_brute_force() {
    for name in ["blp_p2", "blpq_p2", "blp_p3", "blp_p4"] {
        let p = catalog::by_name(name).unwrap();
        let face = p.fano_invariants().minimal_face.unwrap();
        let fast: Vec<(usize, i64)> = base_locus_fixed_components(&p, &face)
            .unwrap()
            .into_iter()
            .collect();
        assert_eq!(fast, brute_force_fixed(&p), "{name}");
    }
}
