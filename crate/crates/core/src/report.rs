//! CSV and binary artifacts for path runs and exact invariants.
//!
//! Grid dump layout: an ASCII header of `key value...` lines terminated by a
//! line `END`, followed by `fields.len() * nodes` little-endian `f64` values,
//! one field after another. Within a field, node `(i, j)` (axis-0 index `i`)
//! is at position `i * M + j`.

use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::polytope::LatticePolytope;
use crate::rational::{fmt_rational, to_f64, Rational};
use crate::solver::path::PathRecord;
use crate::solver::{Discretization, Problem, SolutionState};

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Header of `path.csv` for a polytope with `n` dimensions and `vertices` vertices.
pub fn path_header(n: usize, vertices: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|k| format!("x_{k}")));
    h.push("m_t".into());
    h.extend((1..=vertices).map(|k| format!("b_{k}")));
    for c in [
        "key_residual",
        "I",
        "J",
        "H_t",
        "kappa",
        "off_face_mass",
        "face_gap",
        "sup_phi",
        "sup_neg_phi",
        "recenters",
        "newton_residual",
    ] {
        h.push(c.into());
    }
    h
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.17e}"))
}

pub fn write_path_csv<W: Write>(
    out: W,
    record: &PathRecord,
    n: usize,
    vertices: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(path_header(n, vertices))
        .map_err(csv_error)?;
    for s in &record.steps {
        let mut row = vec![format!("{}", s.state.t)];
        row.extend(s.state.x_t.iter().map(|x| format!("{x:.17e}")));
        row.push(format!("{:.17e}", s.state.m_t));
        row.extend(s.state.b.0.iter().map(|b| format!("{b:.17e}")));
        row.extend([
            format!("{:.17e}", s.key.residual),
            format!("{:.17e}", s.energies.i),
            format!("{:.17e}", s.energies.j),
            format!("{:.17e}", s.harnack),
            format!("{:.17e}", s.wang_zhu.kappa_fit),
            opt(s.off_face_mass),
            opt(s.face_gap),
            format!("{:.17e}", s.sup_phi),
            format!("{:.17e}", s.sup_neg_phi),
            s.recenter_count.to_string(),
            format!("{:.17e}", s.state.residual_norm),
        ]);
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// `quantity,exact,decimal` rows for the exact invariants.
pub fn write_invariants_csv<W: Write>(out: W, poly: &LatticePolytope) -> Result<()> {
    let inv = poly.fano_invariants();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "exact", "decimal"])
        .map_err(csv_error)?;
    let mut row = |q: String, r: &Rational| {
        w.write_record([q, fmt_rational(r), format!("{:.17e}", to_f64(r))])
            .map_err(csv_error)
    };
    row("volume".into(), &inv.volume)?;
    for (k, c) in inv.barycenter.iter().enumerate() {
        row(format!("barycenter_{}", k + 1), c)?;
    }
    row("R".into(), &inv.r)?;
    if let Some(q) = &inv.q {
        for (k, c) in q.iter().enumerate() {
            row(format!("Q_{}", k + 1), c)?;
        }
    }
    if inv.minimal_face.is_some() {
        let report = crate::divisor::conic_angle_report(poly)?;
        for c in &report.components {
            let label = c
                .normal
                .iter()
                .map(i64::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            row(format!("a[{label}]"), &crate::rational::rat(c.multiplicity))?;
            row(format!("angle_fraction[{label}]"), &c.angle_fraction)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Decoded grid dump.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub header: Vec<(String, String)>,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl GridDump {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_slice())
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.17e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes `phi`, `u0` and `w` of a converged state.
pub fn write_grid_dump<W: Write>(
    mut out: W,
    problem: &Problem,
    state: &SolutionState,
) -> Result<()> {
    let d = Discretization::new(problem, state.window.clone())?;
    let w = d.w(&state.phi, state.t);
    let win = &state.window;
    let fields: [(&str, &[f64]); 3] = [("phi", &state.phi), ("u0", &d.u0), ("w", &w)];
    let names: Vec<&str> = fields.iter().map(|f| f.0).collect();
    writeln!(out, "fano-grid 1")?;
    writeln!(out, "dim {}", win.dim())?;
    writeln!(out, "resolution {}", win.resolution())?;
    writeln!(out, "nodes {}", win.len())?;
    writeln!(out, "half_width {:.17e}", win.half_width())?;
    writeln!(out, "step {:.17e}", win.step())?;
    writeln!(out, "center {}", join(win.center()))?;
    writeln!(out, "t {:.17e}", state.t)?;
    writeln!(out, "x_t {}", join(&state.x_t))?;
    writeln!(out, "m_t {:.17e}", state.m_t)?;
    writeln!(out, "gauge_shift {:.17e}", state.gauge_shift)?;
    writeln!(out, "fields {}", names.join(" "))?;
    writeln!(out, "END")?;
    for (_, values) in fields {
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Io(io::Error::new(io::ErrorKind::InvalidData, msg.into()).to_string())
}

pub fn read_grid_dump<R: Read>(mut input: R) -> Result<GridDump> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let marker = b"\nEND\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| invalid("grid dump has no END line"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|e| invalid(e.to_string()))?;
    let header: Vec<(String, String)> = text
        .lines()
        .map(|l| match l.split_once(' ') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => (l.to_string(), String::new()),
        })
        .collect();
    let get = |k: &str| header.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone());
    let nodes: usize = get("nodes")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| invalid("grid dump header lacks `nodes`"))?;
    let names: Vec<String> = get("fields")
        .ok_or_else(|| invalid("grid dump header lacks `fields`"))?
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let body = &bytes[end + marker.len()..];
    if body.len() != names.len() * nodes * 8 {
        return Err(invalid(format!(
            "grid dump body has {} bytes, expected {}",
            body.len(),
            names.len() * nodes * 8
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let fields = names
        .into_iter()
        .zip(values.chunks(nodes.max(1)))
        .map(|(n, v)| (n, v.to_vec()))
        .collect();
    Ok(GridDump { header, fields })
}

/// Writes `path.csv`, `invariants.csv` and, for the last state, `final_grid.bin`.
pub fn write_run(
    dir: &Path,
    poly: &LatticePolytope,
    problem: &Problem,
    record: &PathRecord,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n = poly.dim();
    write_path_csv(
        std::fs::File::create(dir.join("path.csv"))?,
        record,
        n,
        poly.vertices().len(),
    )?;
    write_invariants_csv(std::fs::File::create(dir.join("invariants.csv"))?, poly)?;
    if let Some(last) = record.steps.last() {
        let file = io::BufWriter::new(std::fs::File::create(dir.join("final_grid.bin"))?);
        write_grid_dump(file, problem, &last.state)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::potential::ReferencePotential;
    use crate::solver::{solve_t, GridWindow, SolverOptions};

    #[test]
    fn invariants_csv_lists_exact_values() {
        let mut buf = Vec::new();
        write_invariants_csv(&mut buf, &catalog::blp_p2()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("quantity,exact,decimal\n"));
        assert!(text.contains("\nR,6/7,"));
        assert!(text.contains("\nangle_fraction[-1 -1],5/7,"));
    }

    #[test]
    fn path_header_layout() {
        let h = path_header(2, 4);
        assert_eq!(&h[..4], ["t", "x_1", "x_2", "m_t"]);
        assert_eq!(h[4..8], ["b_1", "b_2", "b_3", "b_4"]);
        assert_eq!(h[8], "key_residual");
    }

    #[test]
    fn grid_dump_round_trip() {
        let p = catalog::p1();
        let problem = Problem::new(&p, ReferencePotential::new(&p).unwrap()).unwrap();
        let window = GridWindow::new(vec![0.0], 20.0, 65).unwrap();
        let state = solve_t(&problem, 0.0, &window, None, &SolverOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_grid_dump(&mut buf, &problem, &state).unwrap();
        let dump = read_grid_dump(buf.as_slice()).unwrap();
        assert_eq!(dump.header_value("resolution"), Some("65"));
        assert_eq!(dump.field("phi").unwrap(), state.phi.as_slice());
        assert_eq!(dump.fields.len(), 3);
        assert!(read_grid_dump(&buf[..buf.len() - 3]).is_err());
    }
}
