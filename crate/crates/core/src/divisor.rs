//! Anticanonical section divisors, base-locus fixed components and the
//! predicted conic angles along them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::{One, Signed, Zero};

use crate::error::DivisorError;
use crate::polytope::{FaceDescriptor, LatticePolytope};
use crate::rational::{fmt_rational, rat, to_f64, Rational};

/// Coefficients of a torus-invariant divisor, one per facet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DivisorVector(pub Vec<i64>);

impl DivisorVector {
    /// Coefficient-wise minimum.
    pub fn meet(&self, other: &DivisorVector) -> DivisorVector {
        DivisorVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| *a.min(b))
                .collect(),
        )
    }
}

/// One fixed component of the base locus and its predicted cone angle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConicComponent {
    pub facet: usize,
    pub normal: Vec<i64>,
    pub multiplicity: i64,
    /// `2 a (1 - R)`
    pub exponent: Rational,
    /// Cone angle divided by `2 pi`: `1 - (1 - R) a`.
    pub angle_fraction: Rational,
}

impl ConicComponent {
    pub fn angle_radians(&self) -> f64 {
        2.0 * std::f64::consts::PI * to_f64(&self.angle_fraction)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingularityReport {
    pub r: Rational,
    pub face: FaceDescriptor,
    pub components: Vec<ConicComponent>,
    /// Section divisors of the face vertices, in face-vertex order.
    pub face_sections: Vec<(Vec<i64>, DivisorVector)>,
    pub warnings: Vec<String>,
}

impl SingularityReport {
    /// Fixed components as a map from facet index to multiplicity.
    pub fn fixed_components(&self) -> BTreeMap<usize, i64> {
        self.components
            .iter()
            .map(|c| (c.facet, c.multiplicity))
            .collect()
    }

    pub fn render(&self, p: &LatticePolytope) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "R = {} ({:.12})", fmt_rational(&self.r), to_f64(&self.r));
        let _ = writeln!(
            s,
            "minimal face: dim {} vertices {:?}",
            self.face.dim, self.face.face_vertices
        );
        let _ = writeln!(s, "fixed components:");
        for c in &self.components {
            let _ = writeln!(
                s,
                "  facet {:?}: a = {}, exponent = {}, angle = 2pi * {} ({:.12} rad)",
                c.normal,
                c.multiplicity,
                fmt_rational(&c.exponent),
                fmt_rational(&c.angle_fraction),
                c.angle_radians()
            );
        }
        let _ = writeln!(
            s,
            "face-vertex sections (coefficients in facet order {:?}):",
            p.facets()
        );
        for (v, d) in &self.face_sections {
            let _ = writeln!(s, "  {:?}: {:?}", v, d.0);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Divisor of the section attached to the lattice point `p`.
pub fn section_divisor(poly: &LatticePolytope, p: &[i64]) -> Result<DivisorVector, DivisorError> {
    if !poly.contains_lattice_point(p) {
        return Err(DivisorError::PointOutsidePolytope(p.to_vec()));
    }
    Ok(DivisorVector(
        poly.facets()
            .iter()
            .map(|v| v.iter().zip(p).map(|(a, b)| a * b).sum::<i64>() + 1)
            .collect(),
    ))
}

/// Multiplicities `a_i > 0` of the fixed components of the face's linear system.
pub fn base_locus_fixed_components(
    poly: &LatticePolytope,
    face: &FaceDescriptor,
) -> Result<BTreeMap<usize, i64>, DivisorError> {
    if !face.proper || face.face_vertices.is_empty() {
        return Err(DivisorError::ImproperFace);
    }
    let mut out = BTreeMap::new();
    for (i, v) in poly.facets().iter().enumerate() {
        let a = 1 + face
            .face_vertices
            .iter()
            .map(|p| v.iter().zip(p).map(|(x, y)| x * y).sum::<i64>())
            .min()
            .expect("nonempty face");
        if a > 0 {
            out.insert(i, a);
        }
    }
    Ok(out)
}

pub fn conic_angle_report(poly: &LatticePolytope) -> Result<SingularityReport, DivisorError> {
    let inv = poly.fano_invariants();
    let Some(face) = inv.minimal_face else {
        return Err(DivisorError::KEExists);
    };
    let r = inv.r;
    let fixed = base_locus_fixed_components(poly, &face)?;
    let one_minus_r = Rational::one() - &r;
    let mut warnings = Vec::new();
    let components: Vec<ConicComponent> = fixed
        .iter()
        .map(|(&facet, &a)| {
            let angle_fraction = Rational::one() - &one_minus_r * rat(a);
            if !angle_fraction.is_positive() {
                warnings.push(format!(
                    "facet {:?}: angle fraction {} is not positive (outside the conic range)",
                    poly.facets()[facet],
                    fmt_rational(&angle_fraction)
                ));
            }
            ConicComponent {
                facet,
                normal: poly.facets()[facet].clone(),
                multiplicity: a,
                exponent: rat(2 * a) * &one_minus_r,
                angle_fraction,
            }
        })
        .collect();
    let face_sections = face
        .face_vertices
        .iter()
        .map(|v| {
            (
                v.clone(),
                section_divisor(poly, v).expect("vertex lies in polytope"),
            )
        })
        .collect();
    debug_assert!(components.iter().all(|c| !c.exponent.is_zero()));
    Ok(SingularityReport {
        r,
        face,
        components,
        face_sections,
        warnings,
    })
}
