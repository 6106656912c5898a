//! `fano`: exact toric Fano invariants and continuity-path solves.
//!
//! Exit codes: 0 success, 2 partial path, 64 usage error, 65 invalid input or
//! failed check. Set `FANO_VERBOSE=1` for per-step progress on stderr.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fano_core::catalog;
use fano_core::divisor::conic_angle_report;
use fano_core::fixtures::{fixtures, render_table};
use fano_core::polytope::{LatticePolytope, PolytopeDocument};
use fano_core::potential::{check_potential, ReferencePotential};
use fano_core::report::{write_path_csv, write_run};
use fano_core::solver::path::{continuity_path, default_schedule, PathOptions};
use fano_core::solver::{Problem, SolverOptions};

const EXIT_PARTIAL: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_INVALID: u8 = 65;

#[derive(Parser, Debug)]
#[command(
    name = "fano",
    version,
    about = "Toric Fano invariants and real Monge-Ampere continuity paths"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Volume, barycenter, R, Q and the minimal face, exact and in decimals.
    Analyze(Input),
    /// Base-locus fixed components and predicted cone angles.
    Angles(Input),
    /// Randomized checks of the reference potential identities.
    CheckPotential {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// March the continuity path towards R and report diagnostics.
    Solve(SolveArgs),
    /// Evaluate the built-in fixture registry.
    Fixtures,
}

#[derive(Args, Debug)]
struct Input {
    /// JSON polytope document, or a built-in name (see `fano fixtures`).
    input: String,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    input: Input,
    /// Last value of t; defaults to R - 0.02.
    #[arg(long)]
    t_max: Option<f64>,
    /// Nodes per axis (odd, at least 33).
    #[arg(long, default_value_t = 129)]
    grid: usize,
    /// Window half-width; defaults to the polytope's tail-based width.
    #[arg(long)]
    halfwidth: Option<f64>,
    /// Newton tolerance on the weighted residual, in (0, 1e-2].
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// Directory for path.csv, invariants.csv and final_grid.bin; without
    /// it, path.csv is written to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Invalid(String),
}

fn load(input: &str) -> Result<LatticePolytope, Failure> {
    let path = Path::new(input);
    if path.exists() {
        let text =
            std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{input}: {e}")))?;
        let doc = PolytopeDocument::from_json(&text)
            .map_err(|e| Failure::Invalid(format!("{input}: {e}")))?;
        LatticePolytope::from_document(&doc).map_err(|e| Failure::Invalid(format!("{input}: {e}")))
    } else {
        catalog::by_name(input).map_err(|_| {
            Failure::Invalid(format!(
                "{input}: no such file and not a built-in polytope ({})",
                catalog::NAMES.join(", ")
            ))
        })
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(Failure::Invalid(format!("stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn verbose() -> bool {
    std::env::var("FANO_VERBOSE").is_ok_and(|v| !v.is_empty() && v != "0")
}

fn analyze(input: &Input) -> Result<u8, Failure> {
    let poly = load(&input.input)?;
    let inv = poly.fano_invariants();
    let mut text = format!("polytope    = {}\n", poly.name().unwrap_or("(unnamed)"));
    text.push_str(&inv.summary());
    if inv.minimal_face.is_some() {
        let report = conic_angle_report(&poly).map_err(|e| Failure::Invalid(e.to_string()))?;
        for c in &report.components {
            let _ = writeln!(
                text,
                "angle       = 2pi * {} along facet {:?} (a = {})",
                fano_core::rational::fmt_rational(&c.angle_fraction),
                c.normal,
                c.multiplicity
            );
        }
    }
    emit(&text)?;
    Ok(0)
}

fn angles(input: &Input) -> Result<u8, Failure> {
    let poly = load(&input.input)?;
    match conic_angle_report(&poly) {
        Ok(report) => {
            emit(&report.render(&poly))?;
            Ok(0)
        }
        Err(fano_core::error::DivisorError::KEExists) => {
            emit("R = 1: barycenter at the origin, KE exists; no conic limit is predicted\n")?;
            Ok(0)
        }
        Err(e) => Err(Failure::Invalid(e.to_string())),
    }
}

fn check(input: &Input, samples: usize, seed: u64) -> Result<u8, Failure> {
    let poly = load(&input.input)?;
    let results =
        check_potential(&poly, samples, seed).map_err(|e| Failure::Invalid(e.to_string()))?;
    let mut text = format!(
        "{:<44} {:>12} {:>10} status\n",
        "check", "worst", "tolerance"
    );
    for r in &results {
        let _ = writeln!(
            text,
            "{:<44} {:>12.3e} {:>10.1e} {}",
            r.name,
            r.worst,
            r.tolerance,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    emit(&text)?;
    Ok(if results.iter().all(|r| r.passed) {
        0
    } else {
        EXIT_INVALID
    })
}

fn solve(args: &SolveArgs) -> Result<u8, Failure> {
    if args.grid < 33 || args.grid % 2 == 0 {
        return Err(Failure::Usage(format!(
            "--grid must be odd and at least 33 (got {})",
            args.grid
        )));
    }
    if !(args.tolerance > 0.0 && args.tolerance <= 1e-2) {
        return Err(Failure::Usage(format!(
            "--tolerance must lie in (0, 1e-2] (got {})",
            args.tolerance
        )));
    }
    if let Some(l) = args.halfwidth {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Failure::Usage(format!(
                "--halfwidth must be positive (got {l})"
            )));
        }
    }
    let poly = load(&args.input.input)?;
    let reference = ReferencePotential::new(&poly).map_err(|e| Failure::Invalid(e.to_string()))?;
    let problem = Problem::new(&poly, reference).map_err(|e| Failure::Invalid(e.to_string()))?;
    let schedule =
        default_schedule(problem.r, args.t_max).map_err(|e| Failure::Invalid(e.to_string()))?;
    let options = PathOptions {
        resolution: args.grid,
        half_width: args.halfwidth,
        solver: SolverOptions {
            tolerance: args.tolerance,
            ..Default::default()
        },
        ..Default::default()
    };
    if verbose() {
        eprintln!("schedule {schedule:?}");
    }
    let record = continuity_path(&problem, &schedule, &options)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    if verbose() {
        for s in &record.steps {
            eprintln!(
                "t = {:.6}: x_t = {:?}, m_t = {:.6}, key residual {:.3e}, {} Newton steps",
                s.state.t, s.state.x_t, s.state.m_t, s.key.residual, s.state.iterations
            );
        }
    }
    let invalid = |e: fano_core::error::Error| Failure::Invalid(e.to_string());
    match &args.out {
        Some(dir) => write_run(dir, &poly, &problem, &record).map_err(invalid)?,
        None => {
            let mut buf = Vec::new();
            write_path_csv(&mut buf, &record, poly.dim(), poly.vertices().len())
                .map_err(invalid)?;
            emit(&String::from_utf8_lossy(&buf))?;
        }
    }
    match &record.failure {
        None => Ok(0),
        Some((t, e)) => {
            let last = record
                .last_t()
                .map_or("none".to_string(), |t| t.to_string());
            eprintln!("path stopped at t = {t}: {e}; last good t = {last}");
            Ok(EXIT_PARTIAL)
        }
    }
}

fn run_fixtures() -> Result<u8, Failure> {
    let outcomes = fixtures().map_err(|e| Failure::Invalid(e.to_string()))?;
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    emit(&format!(
        "{}{} of {} cases passed\n",
        render_table(&outcomes),
        outcomes.len() - failed,
        outcomes.len()
    ))?;
    Ok(if failed == 0 { 0 } else { EXIT_INVALID })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Analyze(input) => analyze(input),
        Command::Angles(input) => angles(input),
        Command::CheckPotential {
            input,
            samples,
            seed,
        } => check(input, *samples, *seed),
        Command::Solve(args) => solve(args),
        Command::Fixtures => run_fixtures(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
