//! Exact geometry of reflexive lattice polytopes.
//!
//! A polytope is stored in canonical form: vertices deduplicated and sorted
//! lexicographically, each facet given by a primitive inward normal `v_r`
//! with inequality `<v_r, y> >= -1`. Everything here is exact; no floating
//! point enters until values are rendered.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::PolytopeError;
use crate::rational::{
    self, determinant, fmt_rational, gcd_slice, kernel_vector, primitive_integer, rat, Rational,
    RationalVector,
};

/// On-disk description of a polytope (JSON).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolytopeDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dim: usize,
    pub vertices: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facets: Option<Vec<Vec<i64>>>,
}

impl PolytopeDocument {
    pub fn from_json(text: &str) -> Result<Self, PolytopeError> {
        serde_json::from_str(text).map_err(|e| PolytopeError::InvalidDocument(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }
}

/// A reflexive lattice polytope `{ y : <v_r, y> >= -1 for all r }`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticePolytope {
    name: Option<String>,
    dim: usize,
    vertices: Vec<Vec<i64>>,
    facets: Vec<Vec<i64>>,
    // incidence[r] = indices of vertices on facet r
    incidence: Vec<Vec<usize>>,
}

/// A face of the polytope, identified by the facets that are tight on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceDescriptor {
    pub active_facets: Vec<usize>,
    pub vertex_indices: Vec<usize>,
    pub face_vertices: Vec<Vec<i64>>,
    pub dim: usize,
    /// `false` for the improper face returned for interior points.
    pub proper: bool,
}

/// One simplex of the cone-over-facets decomposition; the origin is its apex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Simplex {
    pub vertices: Vec<usize>,
    pub volume: Rational,
    pub barycenter: RationalVector,
}

/// Exact invariants attached to a toric Fano polytope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FanoInvariants {
    pub volume: Rational,
    pub barycenter: RationalVector,
    pub q: Option<RationalVector>,
    pub r: Rational,
    pub minimal_face: Option<FaceDescriptor>,
    /// `lambda_r(Q)` for every facet, when `Q` exists.
    pub facet_values: Option<Vec<Rational>>,
    pub ke_exists: bool,
}

/// Loads and validates a polytope document.
pub fn load_polytope(doc: &PolytopeDocument) -> Result<LatticePolytope, PolytopeError> {
    LatticePolytope::from_document(doc)
}

impl LatticePolytope {
    pub fn from_document(doc: &PolytopeDocument) -> Result<Self, PolytopeError> {
        Self::new(
            doc.name.clone(),
            doc.dim,
            doc.vertices.clone(),
            doc.facets.clone(),
        )
    }

    pub fn new(
        name: Option<String>,
        dim: usize,
        vertices: Vec<Vec<i64>>,
        facets: Option<Vec<Vec<i64>>>,
    ) -> Result<Self, PolytopeError> {
        if dim == 0 {
            return Err(PolytopeError::InvalidDocument(
                "dim must be positive".into(),
            ));
        }
        if let Some(bad) = vertices.iter().find(|v| v.len() != dim) {
            return Err(PolytopeError::InvalidDocument(format!(
                "vertex {bad:?} does not have {dim} coordinates"
            )));
        }
        let mut vertices = vertices;
        vertices.sort();
        vertices.dedup();
        if vertices.len() <= dim {
            return Err(PolytopeError::InvalidDocument(format!(
                "need at least {} vertices for a full-dimensional polytope",
                dim + 1
            )));
        }
        if affine_rank(&vertices, &(0..vertices.len()).collect::<Vec<_>>()) != dim {
            return Err(PolytopeError::InvalidDocument(
                "vertices do not span a full-dimensional polytope".into(),
            ));
        }

        let facets = match facets {
            Some(f) => {
                validate_supplied_facets(dim, &vertices, &f)?;
                f
            }
            None if dim <= 3 => hull_facets(dim, &vertices)?,
            None => return Err(PolytopeError::UnsupportedDimension(dim)),
        };

        let incidence = facets
            .iter()
            .map(|v| {
                (0..vertices.len())
                    .filter(|&i| dot(v, &vertices[i]) == -1)
                    .collect()
            })
            .collect();
        let p = LatticePolytope {
            name,
            dim,
            vertices,
            facets,
            incidence,
        };
        p.cross_validate()?;
        Ok(p)
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<i64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Vec<i64>] {
        &self.facets
    }

    pub fn facet_index(&self, normal: &[i64]) -> Option<usize> {
        self.facets.iter().position(|f| f == normal)
    }

    pub fn vertices_on_facet(&self, r: usize) -> &[usize] {
        &self.incidence[r]
    }

    pub fn to_document(&self) -> PolytopeDocument {
        PolytopeDocument {
            name: self.name.clone(),
            dim: self.dim,
            vertices: self.vertices.clone(),
            facets: Some(self.facets.clone()),
        }
    }

    /// `lambda_r(y) = <v_r, y>`.
    pub fn facet_value(&self, r: usize, y: &RationalVector) -> Rational {
        y.pair(&self.facets[r])
    }

    pub fn contains(&self, y: &RationalVector) -> bool {
        (0..self.facets.len()).all(|r| self.facet_value(r, y) >= rat(-1))
    }

    pub fn contains_lattice_point(&self, p: &[i64]) -> bool {
        p.len() == self.dim && self.facets.iter().all(|v| dot(v, p) >= -1)
    }

    /// Every integer point of the polytope, by a bounding-box scan.
    pub fn lattice_points(&self) -> Vec<Vec<i64>> {
        let lo: Vec<i64> = (0..self.dim)
            .map(|k| self.vertices.iter().map(|v| v[k]).min().unwrap())
            .collect();
        let hi: Vec<i64> = (0..self.dim)
            .map(|k| self.vertices.iter().map(|v| v[k]).max().unwrap())
            .collect();
        let mut out = Vec::new();
        let mut cur = lo.clone();
        loop {
            if self.contains_lattice_point(&cur) {
                out.push(cur.clone());
            }
            // odometer increment, last coordinate fastest
            let mut k = self.dim;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    cur[k + 1..].copy_from_slice(&lo[k + 1..self.dim]);
                    break;
                }
            }
        }
    }

    /// Cone over a pulling triangulation of each facet, apex at the origin.
    pub fn decomposition(&self) -> Vec<Simplex> {
        let n = self.dim;
        let fact: Rational = (1..=n as i64).map(rat).fold(Rational::one(), |a, b| a * b);
        let mut out = Vec::new();
        for r in 0..self.facets.len() {
            for simplex in self.triangulate(&self.incidence[r], n - 1) {
                let rows: Vec<Vec<Rational>> = simplex
                    .iter()
                    .map(|&i| self.vertices[i].iter().map(|&x| rat(x)).collect())
                    .collect();
                let volume = determinant(&rows).abs() / &fact;
                let mut sum = RationalVector::zeros(n);
                for &i in &simplex {
                    sum = &sum + &RationalVector::from_ints(&self.vertices[i]);
                }
                let barycenter = sum.scale(&Rational::new(1.into(), ((n + 1) as i64).into()));
                out.push(Simplex {
                    vertices: simplex,
                    volume,
                    barycenter,
                });
            }
        }
        out
    }

    pub fn volume(&self) -> Rational {
        self.decomposition()
            .iter()
            .fold(Rational::zero(), |acc, s| acc + &s.volume)
    }

    pub fn barycenter(&self) -> RationalVector {
        let simplices = self.decomposition();
        let mut total = Rational::zero();
        let mut moment = RationalVector::zeros(self.dim);
        for s in &simplices {
            total += &s.volume;
            moment = &moment + &s.barycenter.scale(&s.volume);
        }
        moment.scale(&(Rational::one() / total))
    }

    /// Where the ray from `pc` through the origin leaves the polytope.
    ///
    /// Returns `Q = -mu * pc` with `mu = 1 / max_r lambda_r(pc)` and the set of
    /// facets attaining that maximum.
    pub fn ray_boundary_intersection(
        &self,
        pc: &RationalVector,
    ) -> Result<(RationalVector, Vec<usize>), PolytopeError> {
        let (mu, active) = self.ray_scale(pc)?;
        Ok((pc.scale(&-mu), active))
    }

    fn ray_scale(&self, pc: &RationalVector) -> Result<(Rational, Vec<usize>), PolytopeError> {
        if pc.is_zero() {
            return Err(PolytopeError::BarycenterAtOrigin);
        }
        let values: Vec<Rational> = (0..self.facets.len())
            .map(|r| self.facet_value(r, pc))
            .collect();
        // origin is interior and the polytope bounded, so some value is positive
        let max = values.iter().max().cloned().expect("at least one facet");
        debug_assert!(max.is_positive());
        let active = (0..values.len()).filter(|&r| values[r] == max).collect();
        Ok((Rational::one() / max, active))
    }

    /// Greatest Ricci lower bound and the associated exact data.
    pub fn fano_invariants(&self) -> FanoInvariants {
        let volume = self.volume();
        let barycenter = self.barycenter();
        if barycenter.is_zero() {
            return FanoInvariants {
                volume,
                barycenter,
                q: None,
                r: Rational::one(),
                minimal_face: None,
                facet_values: None,
                ke_exists: true,
            };
        }
        let (mu, _) = self.ray_scale(&barycenter).expect("barycenter is nonzero");
        let q = barycenter.scale(&-mu.clone());
        let r = &mu / (&mu + Rational::one());
        let face = self.minimal_face(&q).expect("Q lies on the boundary");
        let facet_values = (0..self.facets.len())
            .map(|i| self.facet_value(i, &q))
            .collect();
        FanoInvariants {
            volume,
            barycenter,
            q: Some(q),
            r,
            minimal_face: Some(face),
            facet_values: Some(facet_values),
            ke_exists: false,
        }
    }

    /// Smallest face containing `y`.
    pub fn minimal_face(&self, y: &RationalVector) -> Result<FaceDescriptor, PolytopeError> {
        let minus_one = rat(-1);
        let mut active = Vec::new();
        for r in 0..self.facets.len() {
            let v = self.facet_value(r, y);
            if v < minus_one {
                return Err(PolytopeError::PointOutsidePolytope(y.to_string()));
            }
            if v == minus_one {
                active.push(r);
            }
        }
        let vertex_indices: Vec<usize> = (0..self.vertices.len())
            .filter(|&i| active.iter().all(|&r| self.incidence[r].contains(&i)))
            .collect();
        let dim = affine_rank(&self.vertices, &vertex_indices);
        Ok(FaceDescriptor {
            proper: !active.is_empty(),
            face_vertices: vertex_indices
                .iter()
                .map(|&i| self.vertices[i].clone())
                .collect(),
            vertex_indices,
            active_facets: active,
            dim,
        })
    }

    /// Image under an integer matrix of determinant +-1 (acting on vertices).
    pub fn transformed(&self, u: &[Vec<i64>]) -> Result<LatticePolytope, PolytopeError> {
        let n = self.dim;
        let urat: Vec<Vec<Rational>> = u
            .iter()
            .map(|r| r.iter().map(|&x| rat(x)).collect())
            .collect();
        let det = determinant(&urat);
        if det.abs() != Rational::one() {
            return Err(PolytopeError::InvalidDocument(
                "matrix is not unimodular".into(),
            ));
        }
        let vertices: Vec<Vec<i64>> = self
            .vertices
            .iter()
            .map(|v| {
                (0..n)
                    .map(|i| (0..n).map(|j| u[i][j] * v[j]).sum())
                    .collect()
            })
            .collect();
        // facets transform by the inverse transpose: <v, y> = <U^{-T} v, U y>
        let mut facets = Vec::with_capacity(self.facets.len());
        for v in &self.facets {
            // solve U^T w = v
            let ut: Vec<Vec<Rational>> = (0..n)
                .map(|i| (0..n).map(|j| rat(u[j][i])).collect())
                .collect();
            let rhs: Vec<Rational> = v.iter().map(|&x| rat(x)).collect();
            let w = rational::solve(&ut, &rhs).expect("unimodular");
            facets.push(
                w.iter()
                    .map(|x| num_traits::ToPrimitive::to_i64(&x.to_integer()).unwrap())
                    .collect(),
            );
        }
        LatticePolytope::new(self.name.clone(), n, vertices, Some(facets))
    }

    fn triangulate(&self, face: &[usize], k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![face[0]]];
        }
        let apex = face[0];
        let mut out = Vec::new();
        for sub in self.subfaces(face, k) {
            if sub.contains(&apex) {
                continue;
            }
            for mut s in self.triangulate(&sub, k - 1) {
                s.insert(0, apex);
                out.push(s);
            }
        }
        out
    }

    // Facets (codimension one faces) of a k-dimensional face.
    fn subfaces(&self, face: &[usize], k: usize) -> Vec<Vec<usize>> {
        let mut found = BTreeSet::new();
        for inc in &self.incidence {
            let s: Vec<usize> = face.iter().copied().filter(|i| inc.contains(i)).collect();
            if s.len() < face.len() && s.len() >= k && affine_rank(&self.vertices, &s) == k - 1 {
                found.insert(s);
            }
        }
        found.into_iter().collect()
    }

    fn cross_validate(&self) -> Result<(), PolytopeError> {
        let n = self.dim;
        for (r, inc) in self.incidence.iter().enumerate() {
            if inc.is_empty() || affine_rank(&self.vertices, inc) != n - 1 {
                return Err(PolytopeError::InconsistentDescription(format!(
                    "facet {:?} does not support a codimension-one face",
                    self.facets[r]
                )));
            }
        }
        for (i, v) in self.vertices.iter().enumerate() {
            let normals: Vec<Vec<Rational>> = self
                .incidence
                .iter()
                .zip(&self.facets)
                .filter(|(inc, _)| inc.contains(&i))
                .map(|(_, f)| f.iter().map(|&x| rat(x)).collect())
                .collect();
            if rational::rank(&normals) != n {
                return Err(PolytopeError::InconsistentDescription(format!(
                    "{v:?} is not a vertex of the facet description"
                )));
            }
        }
        Ok(())
    }
}

fn dot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Affine dimension of the selected points.
fn affine_rank(points: &[Vec<i64>], idx: &[usize]) -> usize {
    if idx.len() <= 1 {
        return 0;
    }
    let base = &points[idx[0]];
    let rows: Vec<Vec<Rational>> = idx[1..]
        .iter()
        .map(|&i| {
            points[i]
                .iter()
                .zip(base)
                .map(|(a, b)| rat(a - b))
                .collect()
        })
        .collect();
    rational::rank(&rows)
}

fn check_rhs(normal: &[i64], rhs: i64) -> Result<(), PolytopeError> {
    if rhs >= 0 {
        return Err(PolytopeError::OriginNotInterior {
            normal: normal.to_vec(),
            rhs: rhs.to_string(),
        });
    }
    if rhs != -1 {
        return Err(PolytopeError::NonReflexive {
            normal: normal.to_vec(),
            rhs: rhs.to_string(),
        });
    }
    Ok(())
}

/// Facets of `conv(vertices)` by brute-force enumeration of vertex n-tuples.
fn hull_facets(dim: usize, vertices: &[Vec<i64>]) -> Result<Vec<Vec<i64>>, PolytopeError> {
    let mut normals = BTreeSet::new();
    for combo in combinations(vertices.len(), dim) {
        let base = &vertices[combo[0]];
        let rows: Vec<Vec<Rational>> = combo[1..]
            .iter()
            .map(|&i| {
                vertices[i]
                    .iter()
                    .zip(base)
                    .map(|(a, b)| rat(a - b))
                    .collect()
            })
            .collect();
        let Some(k) = kernel_vector(&rows, dim) else {
            continue;
        };
        let Some(a) = primitive_integer(&k) else {
            continue;
        };
        let c = dot(&a, base);
        let (mut above, mut below) = (false, false);
        for v in vertices {
            let s = dot(&a, v) - c;
            above |= s > 0;
            below |= s < 0;
        }
        if above && below {
            continue;
        }
        let (normal, rhs) = if below {
            (a.iter().map(|x| -x).collect::<Vec<_>>(), -c)
        } else {
            (a, c)
        };
        check_rhs(&normal, rhs)?;
        normals.insert(normal);
    }
    Ok(normals.into_iter().collect())
}

fn validate_supplied_facets(
    dim: usize,
    vertices: &[Vec<i64>],
    facets: &[Vec<i64>],
) -> Result<(), PolytopeError> {
    let mut seen = BTreeSet::new();
    for f in facets {
        if f.len() != dim {
            return Err(PolytopeError::InvalidDocument(format!(
                "facet {f:?} does not have {dim} coordinates"
            )));
        }
        if gcd_slice(f) != 1 {
            return Err(PolytopeError::InconsistentDescription(format!(
                "facet normal {f:?} is not primitive"
            )));
        }
        if !seen.insert(f.clone()) {
            return Err(PolytopeError::InconsistentDescription(format!(
                "facet {f:?} listed twice"
            )));
        }
        let rhs = vertices.iter().map(|v| dot(f, v)).min().unwrap();
        check_rhs(f, rhs)?;
    }
    // Every vertex of the facet polytope must be one of the listed vertices.
    for combo in combinations(facets.len(), dim) {
        let a: Vec<Vec<Rational>> = combo
            .iter()
            .map(|&r| facets[r].iter().map(|&x| rat(x)).collect())
            .collect();
        let b = vec![rat(-1); dim];
        let Some(y) = rational::solve(&a, &b) else {
            continue;
        };
        let y = RationalVector(y);
        if facets.iter().all(|f| y.pair(f) >= rat(-1))
            && !vertices.iter().any(|v| RationalVector::from_ints(v) == y)
        {
            return Err(PolytopeError::InconsistentDescription(format!(
                "facet inequalities have vertex {y} missing from the vertex list"
            )));
        }
    }
    Ok(())
}

/// All k-subsets of 0..n in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

impl FanoInvariants {
    /// Human-readable summary with exact fractions and decimals.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "volume      = {} ({:.12})\n",
            fmt_rational(&self.volume),
            rational::to_f64(&self.volume)
        ));
        s.push_str(&format!(
            "barycenter  = {} ({:?})\n",
            self.barycenter,
            self.barycenter.to_f64()
        ));
        s.push_str(&format!(
            "R           = {} ({:.12})\n",
            fmt_rational(&self.r),
            rational::to_f64(&self.r)
        ));
        match (&self.q, &self.minimal_face) {
            (Some(q), Some(face)) => {
                s.push_str(&format!("Q           = {} ({:?})\n", q, q.to_f64()));
                s.push_str(&format!(
                    "min face    = dim {} vertices {:?} active facets {:?}\n",
                    face.dim, face.face_vertices, face.active_facets
                ));
            }
            _ => s.push_str("KE exists   = true (barycenter at origin)\n"),
        }
        s
    }
}
