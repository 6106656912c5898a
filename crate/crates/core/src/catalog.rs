//! Built-in polytopes used by the fixtures, tests and CLI.

use crate::error::PolytopeError;
use crate::polytope::LatticePolytope;

fn build(
    name: &str,
    dim: usize,
    vertices: Vec<Vec<i64>>,
    facets: Option<Vec<Vec<i64>>>,
) -> LatticePolytope {
    LatticePolytope::new(Some(name.to_string()), dim, vertices, facets)
        .expect("built-in polytope is valid")
}

/// The segment `[-1, 1]`.
pub fn p1() -> LatticePolytope {
    build("p1", 1, vec![vec![-1], vec![1]], None)
}

/// Projective plane: the triangle with facets `x >= -1`, `y >= -1`, `x + y <= 1`.
pub fn p2() -> LatticePolytope {
    build("p2", 2, vec![vec![-1, -1], vec![2, -1], vec![-1, 2]], None)
}

pub fn p3() -> LatticePolytope {
    build(
        "p3",
        3,
        vec![
            vec![-1, -1, -1],
            vec![3, -1, -1],
            vec![-1, 3, -1],
            vec![-1, -1, 3],
        ],
        None,
    )
}

/// The square `[-1, 1]^2` (P^1 x P^1).
pub fn p1xp1() -> LatticePolytope {
    build(
        "p1xp1",
        2,
        vec![vec![-1, -1], vec![1, -1], vec![-1, 1], vec![1, 1]],
        None,
    )
}

/// Projective space blown up at one point, in dimension `n >= 2`.
///
/// Facets are `x_i >= -1`, `sum x >= -1` and `sum x <= 1`.
pub fn blp_pn(n: usize) -> LatticePolytope {
    assert!(n >= 2, "blow-up family starts at n = 2");
    let k = n as i64;
    let mut vertices = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut low = vec![-1; n];
        low[i] = k - 2;
        let mut high = vec![-1; n];
        high[i] = k;
        vertices.push(low);
        vertices.push(high);
    }
    let mut facets: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            let mut e = vec![0; n];
            e[i] = 1;
            e
        })
        .collect();
    facets.push(vec![1; n]);
    facets.push(vec![-1; n]);
    build(&format!("blp_p{n}"), n, vertices, Some(facets))
}

pub fn blp_p2() -> LatticePolytope {
    blp_pn(2)
}

pub fn blp_p3() -> LatticePolytope {
    blp_pn(3)
}

/// Projective plane blown up at two points.
pub fn blpq_p2() -> LatticePolytope {
    build(
        "blpq_p2",
        2,
        vec![
            vec![0, 1],
            vec![1, 0],
            vec![1, -1],
            vec![-1, -1],
            vec![-1, 1],
        ],
        None,
    )
}

/// Names accepted by [`by_name`].
pub const NAMES: &[&str] = &[
    "p1", "p2", "p3", "p1xp1", "blp_p2", "blp_p3", "blp_p4", "blp_p5", "blpq_p2",
];

pub fn by_name(name: &str) -> Result<LatticePolytope, PolytopeError> {
    Ok(match name {
        "p1" => p1(),
        "p2" => p2(),
        "p3" => p3(),
        "p1xp1" => p1xp1(),
        "blpq_p2" => blpq_p2(),
        _ => match name
            .strip_prefix("blp_p")
            .and_then(|s| s.parse::<usize>().ok())
        {
            Some(n) if (2..=8).contains(&n) => blp_pn(n),
            _ => {
                return Err(PolytopeError::InvalidDocument(format!(
                    "unknown built-in polytope '{name}'"
                )))
            }
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_names_resolve() {
        for name in NAMES {
            let p = by_name(name).unwrap();
            assert_eq!(p.name(), Some(*name));
        }
        assert!(by_name("nope").is_err());
    }

    #[test]
    fn blp_family_matches_hull_in_low_dimension() {
        for n in [2, 3] {
            let p = blp_pn(n);
            let hull = LatticePolytope::new(None, n, p.vertices().to_vec(), None).unwrap();
            let mut a = p.facets().to_vec();
            let mut b = hull.facets().to_vec();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }
}
