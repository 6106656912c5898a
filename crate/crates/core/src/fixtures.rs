//! Registry of exact expected invariants for the built-in polytopes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Deserialize;

use crate::catalog;
use crate::divisor::conic_angle_report;
use crate::error::{Error, Result};
use crate::rational::{fmt_rational, parse_rational, rat, Rational};

const FIXTURES: &str = include_str!("../data/fixtures.toml");

#[derive(Debug, Clone, Deserialize)]
struct FixtureFile {
    case: Vec<FixtureCase>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FixedComponent {
    pub facet: Vec<i64>,
    pub a: i64,
    pub angle: String,
}

/// Expected values for one polytope; absent fields are not checked.
#[derive(Debug, Clone, Deserialize)]
pub struct FixtureCase {
    pub name: String,
    pub source: String,
    pub volume: Option<String>,
    pub barycenter: Option<Vec<String>>,
    pub r: String,
    pub q: Option<Vec<String>>,
    pub face_vertices: Option<Vec<Vec<i64>>>,
    pub fixed: Option<Vec<FixedComponent>>,
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub field: String,
    pub expected: String,
    pub actual: String,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Debug, Clone)]
pub struct FixtureOutcome {
    pub name: String,
    pub source: String,
    pub checks: Vec<Check>,
}

impl FixtureOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

pub fn cases() -> Result<Vec<FixtureCase>> {
    let file: FixtureFile =
        toml::from_str(FIXTURES).map_err(|e| Error::Fixture(format!("fixture file: {e}")))?;
    Ok(file.case)
}

/// `R` of the blow-up of `P^n` at a point:
/// `(n+1)((n+1)^n - (n-1)^n) / ((n+1)^(n+1) + (n-1)^(n+1))`.
pub fn blow_up_r(n: u32) -> Rational {
    let a = rat(n as i64 + 1);
    let b = rat(n as i64 - 1);
    let pow = |x: &Rational, k: u32| (0..k).fold(rat(1), |acc, _| acc * x);
    &a * (pow(&a, n) - pow(&b, n)) / (pow(&a, n + 1) + pow(&b, n + 1))
}

fn canonical(s: &str) -> Result<String> {
    parse_rational(s)
        .map(|r| fmt_rational(&r))
        .ok_or_else(|| Error::Fixture(format!("not a rational: {s}")))
}

fn canonical_vec(v: &[String]) -> Result<String> {
    Ok(format!(
        "({})",
        v.iter()
            .map(|s| canonical(s))
            .collect::<Result<Vec<_>>>()?
            .join(", ")
    ))
}

fn render_vec(v: &[Rational]) -> String {
    format!(
        "({})",
        v.iter().map(fmt_rational).collect::<Vec<_>>().join(", ")
    )
}

fn sorted(mut v: Vec<Vec<i64>>) -> String {
    v.sort();
    format!("{v:?}")
}

pub fn evaluate(case: &FixtureCase) -> Result<FixtureOutcome> {
    let poly = catalog::by_name(&case.name)?;
    let inv = poly.fano_invariants();
    let mut checks = Vec::new();
    let mut push = |field: &str, expected: String, actual: String| {
        checks.push(Check {
            field: field.to_string(),
            expected,
            actual,
        })
    };
    push("R", canonical(&case.r)?, fmt_rational(&inv.r));
    if let Some(v) = &case.volume {
        push("volume", canonical(v)?, fmt_rational(&inv.volume));
    }
    if let Some(b) = &case.barycenter {
        push(
            "barycenter",
            canonical_vec(b)?,
            render_vec(&inv.barycenter.0),
        );
    }
    if let Some(q) = &case.q {
        let actual = inv
            .q
            .as_ref()
            .map_or("none".to_string(), |q| render_vec(&q.0));
        push("Q", canonical_vec(q)?, actual);
    }
    if let Some(f) = &case.face_vertices {
        let actual = inv
            .minimal_face
            .as_ref()
            .map_or("none".to_string(), |f| sorted(f.face_vertices.clone()));
        push("face vertices", sorted(f.clone()), actual);
    }
    if let Some(fixed) = &case.fixed {
        let report = conic_angle_report(&poly)?;
        let actual: BTreeMap<Vec<i64>, (i64, String)> = report
            .components
            .iter()
            .map(|c| {
                (
                    c.normal.clone(),
                    (c.multiplicity, fmt_rational(&c.angle_fraction)),
                )
            })
            .collect();
        let expected = fixed
            .iter()
            .map(|c| Ok((c.facet.clone(), (c.a, canonical(&c.angle)?))))
            .collect::<Result<BTreeMap<_, _>>>()?;
        push(
            "fixed components",
            format!("{expected:?}"),
            format!("{actual:?}"),
        );
    }
    if let Some(n) = case
        .name
        .strip_prefix("blp_p")
        .and_then(|s| s.parse::<u32>().ok())
    {
        push(
            "R closed form",
            fmt_rational(&blow_up_r(n)),
            fmt_rational(&inv.r),
        );
    }
    Ok(FixtureOutcome {
        name: case.name.clone(),
        source: case.source.clone(),
        checks,
    })
}

/// Evaluates every registered case in parallel.
pub fn fixtures() -> Result<Vec<FixtureOutcome>> {
    cases()?.par_iter().map(evaluate).collect()
}

/// Plain-text pass/fail table; failing rows show expected and actual values.
pub fn render_table(outcomes: &[FixtureOutcome]) -> String {
    let mut s = format!(
        "{:<10} {:<16} {:<18} {}\n",
        "case", "source", "field", "status"
    );
    for o in outcomes {
        for c in &o.checks {
            let status = if c.passed() {
                "ok".to_string()
            } else {
                format!("FAIL expected {} got {}", c.expected, c.actual)
            };
            s += &format!("{:<10} {:<16} {:<18} {status}\n", o.name, o.source, c.field);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(fmt_rational(&blow_up_r(2)), "6/7");
        assert_eq!(fmt_rational(&blow_up_r(3)), "14/17");
    }

    #[test]
    fn registry_is_green() {
        let out = fixtures().unwrap();
        assert_eq!(out.len(), cases().unwrap().len());
        let table = render_table(&out);
        assert!(out.iter().all(FixtureOutcome::passed), "{table}");
    }

    #[test]
    fn mismatch_is_reported() {
        let mut case = cases()
            .unwrap()
            .into_iter()
            .find(|c| c.name == "blp_p2")
            .unwrap();
        case.r = "5/7".into();
        let out = evaluate(&case).unwrap();
        assert!(!out.passed());
        assert!(render_table(&[out]).contains("FAIL expected 5/7 got 6/7"));
    }
}
