//! Shared setup for the criterion benches.

use fano_core::catalog;
use fano_core::potential::ReferencePotential;
use fano_core::solver::Problem;

/// Solver problem for a built-in polytope.
pub fn problem(name: &str) -> Problem {
    let p = catalog::by_name(name).expect("built-in polytope");
    Problem::new(&p, ReferencePotential::new(&p).expect("normalizable")).expect("solver problem")
}
