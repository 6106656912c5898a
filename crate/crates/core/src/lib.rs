//! Toric Fano invariants and a continuity-path Monge-Ampere solver.

pub mod catalog;
pub mod divisor;
pub mod error;
pub mod fixtures;
pub mod polytope;
pub mod potential;
pub mod rational;
pub mod report;
pub mod solver;

#[cfg(test)]
mod properties;

pub use divisor::{
    base_locus_fixed_components, conic_angle_report, section_divisor, DivisorVector,
    SingularityReport,
};
pub use error::{Error, Result};
pub use polytope::{
    load_polytope, FaceDescriptor, FanoInvariants, LatticePolytope, PolytopeDocument,
};
pub use potential::{
    limit_reference, normalization_constant, translated_reference, LimitReference,
    ReferencePotential, SoftmaxWeights,
};
pub use rational::{Rational, RationalVector};
