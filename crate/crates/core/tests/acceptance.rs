//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::time::Instant;

use fano_core::catalog;
use fano_core::divisor::conic_angle_report;
use fano_core::fixtures::blow_up_r;
use fano_core::potential::{
    check_potential, fd_gradient, normalization_constant, ReferencePotential,
};
use fano_core::rational::{fmt_rational, ratio, RationalVector};
use fano_core::solver::path::{continuity_path, default_schedule, PathOptions, PathRecord};
use fano_core::solver::{solve_t, GridWindow, Problem, SolverOptions};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// The Bl_p P^2 schedule: steps of 0.1 to 0.7, then closer to `R = 6/7`.
const BLP_SCHEDULE: [f64; 12] = [
    0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.82, 0.84,
];
const BLP_HALF_WIDTH: f64 = 16.0;
const COARSE: usize = 129;
const FINE: usize = 257;
/// P^2 runs to t = 0.95; at the default width (about 29) a 129^2 grid is too
/// coarse near t = 1.
const P2_HALF_WIDTH: f64 = 12.0;
const P2_RESOLUTION: usize = 193;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn report(out: &mut Vec<Outcome>, id: usize, pass: bool, detail: String) {
    println!(
        "criterion {id:>2}: {} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    out.push(Outcome { id, pass, detail });
}

fn problem(name: &str) -> Problem {
    let p = catalog::by_name(name).unwrap();
    Problem::new(&p, ReferencePotential::new(&p).unwrap()).unwrap()
}

fn criterion_1(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut failures = Vec::new();
    let blp = catalog::blp_p2();
    if blp.fano_invariants().r != ratio(6, 7) {
        failures.push("R(Bl_p P^2)".to_string());
    }
    let angles: Vec<String> = conic_angle_report(&blp)
        .unwrap()
        .components
        .iter()
        .map(|c| fmt_rational(&c.angle_fraction))
        .collect();
    if angles != ["5/7"] {
        failures.push(format!("Bl_p P^2 angles {angles:?}"));
    }
    let blpq = catalog::blpq_p2();
    let inv = blpq.fano_invariants();
    if inv.r != ratio(21, 25) {
        failures.push("R(Bl_pq P^2)".into());
    }
    if inv.barycenter != RationalVector(vec![ratio(-2, 21), ratio(-2, 21)]) {
        failures.push("P_c(Bl_pq P^2)".into());
    }
    let rep = conic_angle_report(&blpq).unwrap();
    let a: Vec<i64> = rep.components.iter().map(|c| c.multiplicity).collect();
    let fr: Vec<String> = rep
        .components
        .iter()
        .map(|c| fmt_rational(&c.angle_fraction))
        .collect();
    if a != [1, 1] || fr != ["21/25", "21/25"] {
        failures.push(format!("Bl_pq P^2 a {a:?} angles {fr:?}"));
    }
    for n in 2..=5u32 {
        let r = catalog::blp_pn(n as usize).fano_invariants().r;
        if r != blow_up_r(n) {
            failures.push(format!("R(Bl_p P^{n}) = {}", fmt_rational(&r)));
        }
    }
    if catalog::blp_p3().fano_invariants().r != ratio(14, 17) {
        failures.push("R(Bl_p P^3) != 14/17".into());
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 1.0 {
        failures.push(format!("runtime {elapsed:.2}s"));
    }
    report(
        out,
        1,
        failures.is_empty(),
        format!("exact invariants, R(Bl_p P^n) n=2..5 closed form, {elapsed:.3}s; mismatches {failures:?}"),
    );
}

fn criterion_2(out: &mut Vec<Outcome>) {
    let fixed = |name: &str| -> Vec<(Vec<i64>, i64)> {
        conic_angle_report(&catalog::by_name(name).unwrap())
            .unwrap()
            .components
            .iter()
            .map(|c| (c.normal.clone(), c.multiplicity))
            .collect()
    };
    let blp = fixed("blp_p2");
    let blpq = fixed("blpq_p2");
    let pass = blp == [(vec![-1, -1], 2)] && blpq == [(vec![0, 1], 1), (vec![1, 0], 1)];
    report(
        out,
        2,
        pass,
        format!("Bl_p P^2 {blp:?}; Bl_pq P^2 {blpq:?}"),
    );
}

fn criterion_3(out: &mut Vec<Outcome>) {
    let mut worst_sum = 0.0f64;
    let mut worst_bary = 0.0f64;
    let mut worst_fd = 0.0f64;
    let mut rng = StdRng::seed_from_u64(7);
    for name in ["p1", "p2", "blp_p2", "blpq_p2", "blp_p3"] {
        let p = catalog::by_name(name).unwrap();
        let reference = ReferencePotential::new(&p).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let b = reference.weights(&x);
            worst_sum = worst_sum.max((b.sum() - 1.0).abs());
            let g = reference.gradient(&x);
            let bg = b.barycenter(reference.points());
            for (a, c) in g.iter().zip(&bg) {
                worst_bary = worst_bary.max((a - c).abs());
            }
            for (a, c) in g.iter().zip(fd_gradient(&reference, &x, 1e-5)) {
                worst_fd = worst_fd.max((a - c).abs());
            }
        }
    }
    let suite = check_potential(&catalog::blp_p2(), 100, 11).unwrap();
    let pass = worst_sum <= 1e-12
        && worst_bary <= 1e-12
        && worst_fd <= 1e-8
        && suite.iter().all(|c| c.passed);
    report(
        out,
        3,
        pass,
        format!("|sum b - 1| {worst_sum:.2e}, |Du0 - sum b p| {worst_bary:.2e}, |Du0 - FD| {worst_fd:.2e}"),
    );
}

fn criterion_4(out: &mut Vec<Outcome>) {
    let norm = normalization_constant(&catalog::p1()).unwrap();
    let exact = (std::f64::consts::PI / 4.0).ln();
    let err = (norm.c - exact).abs();
    report(
        out,
        4,
        err <= 1e-8,
        format!(
            "P^1: C = {:.15}, log(pi/4) = {exact:.15}, |diff| {err:.2e}",
            norm.c
        ),
    );
}

fn criterion_5(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let pr = problem("p1");
    let window = GridWindow::default_for(&pr.reference, 16385).unwrap();
    let s0 = solve_t(&pr, 0.0, &window, None, &SolverOptions::default()).unwrap();
    let s1 = solve_t(&pr, 0.5, &window, Some(&s0.phi), &SolverOptions::default()).unwrap();
    let c = window.center_index();
    let quarter = (window.resolution() - 1) / 4;
    let mut errs = Vec::new();
    for (s, t) in [(&s0, 0.0), (&s1, 0.5)] {
        let oracle = common::p1_shooting_oracle(t, window.step(), quarter);
        // at t = 0 only differences are determined
        let shift = if t == 0.0 { s.phi[c] - oracle[0] } else { 0.0 };
        let err = (0..=quarter)
            .map(|k| {
                let a = (s.phi[c + k] - shift - oracle[k]).abs();
                let b = (s.phi[c - k] - shift - oracle[k]).abs();
                a.max(b)
            })
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        out,
        5,
        errs.iter().all(|e| *e <= 1e-6),
        format!(
            "P^1 vs shooting oracle on |x| <= L/2 (L = {:.2}, M = 16385): t=0 {:.2e}, t=0.5 {:.2e}; {elapsed:.1}s",
            window.half_width(),
            errs[0],
            errs[1]
        ),
    );
}

fn blp_path(resolution: usize) -> (PathRecord, f64) {
    let start = Instant::now();
    let pr = problem("blp_p2");
    let options = PathOptions {
        resolution,
        half_width: Some(BLP_HALF_WIDTH),
        ..Default::default()
    };
    let record = continuity_path(&pr, &BLP_SCHEDULE, &options).unwrap();
    (record, start.elapsed().as_secs_f64())
}

fn step_at(record: &PathRecord, t: f64) -> Option<&fano_core::solver::path::PathStep> {
    record.steps.iter().find(|s| (s.state.t - t).abs() < 1e-12)
}

fn criterion_6(out: &mut Vec<Outcome>, coarse: &PathRecord, fine: &PathRecord, secs: f64) {
    let complete = fine.is_complete() && coarse.is_complete();
    let t0 = fine.steps.first().map_or(f64::NAN, |s| s.key.residual);
    let worst = fine
        .steps
        .iter()
        .filter(|s| s.state.t > 0.0)
        .map(|s| (s.state.t, s.key.residual))
        .fold((f64::NAN, 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    let ratios: Vec<(f64, f64)> = fine
        .steps
        .iter()
        .filter(|s| s.state.t > 0.0)
        .filter_map(|s| {
            step_at(coarse, s.state.t).map(|c| (s.state.t, c.key.residual / s.key.residual))
        })
        .collect();
    let min_ratio = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let profile: Vec<String> = fine
        .steps
        .iter()
        .map(|s| format!("{}:{:.1e}", s.state.t, s.key.residual))
        .collect();
    let pass = complete && t0 < 1e-6 && worst.1 < 1e-3 && min_ratio >= 2.0;
    report(
        out,
        6,
        pass,
        format!(
            "key residual at {FINE}^2: t=0 {t0:.1e}; max over t>0 {:.2e} at t={}; min {COARSE}->{FINE} reduction {min_ratio:.2}x; [{}]; {secs:.0}s",
            worst.1,
            worst.0,
            profile.join(" ")
        ),
    );
}

fn criterion_7(out: &mut Vec<Outcome>, fine: &PathRecord) {
    let mid = step_at(fine, 0.5);
    let last = fine.steps.last().unwrap();
    let off_mid = mid.and_then(|s| s.off_face_mass).unwrap_or(f64::NAN);
    let off_last = last.off_face_mass.unwrap_or(f64::NAN);
    let pr = problem("blp_p2");
    let face = pr.face_vertices.clone().unwrap();
    let on_face: Vec<f64> = face.iter().map(|&i| last.state.b.0[i]).collect();
    let spread = on_face.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - on_face.iter().cloned().fold(f64::INFINITY, f64::min);
    let gaps: Vec<f64> = fine
        .steps
        .iter()
        .rev()
        .take(3)
        .rev()
        .filter_map(|s| s.face_gap)
        .collect();
    let monotone = gaps.len() == 3 && gaps.windows(2).all(|w| w[1] < w[0]);
    let pass = off_last < off_mid && spread <= 1e-6 && monotone;
    report(
        out,
        7,
        pass,
        format!(
            "off-face mass {off_mid:.3e} (t=0.5) -> {off_last:.3e} (t={}); on-face b {on_face:.6?} spread {spread:.1e}; face gap over last three {gaps:.4?}",
            last.state.t
        ),
    );
}

fn criterion_8(out: &mut Vec<Outcome>, coarse: &PathRecord, fine: &PathRecord) {
    let max_m = |r: &PathRecord| {
        r.steps
            .iter()
            .map(|s| s.state.m_t.abs())
            .fold(0.0, f64::max)
    };
    let (mc, mf) = (max_m(coarse), max_m(fine));
    let change = (mf - mc).abs() / mf.max(mc);
    let kappas: Vec<f64> = fine.steps.iter().map(|s| s.wang_zhu.kappa_fit).collect();
    let kmin = kappas.iter().cloned().fold(f64::INFINITY, f64::min);
    let kmax = kappas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pass = change < 0.2 && kmin > 0.0 && kmax <= 2.0 * kmin;
    report(
        out,
        8,
        pass,
        format!(
            "max|m_t| {mc:.4} ({COARSE}) vs {mf:.4} ({FINE}), change {:.1}%; kappa fit in [{kmin:.3}, {kmax:.3}]",
            100.0 * change
        ),
    );
}

fn criterion_9(out: &mut Vec<Outcome>, records: &[&PathRecord]) {
    let mut worst = 0.0f64;
    let mut states = 0;
    for r in records {
        for s in &r.steps {
            let tol = 1e-6 * (1.0 + s.energies.i.abs());
            worst = worst.max(s.energies.sandwich_violation(s.state.window.dim()) / tol);
            states += 1;
        }
    }
    report(
        out,
        9,
        worst <= 1.0,
        format!("{states} path states; worst sandwich violation / (1e-6 (1 + |I|)) = {worst:.2e}"),
    );
}

fn criterion_10(out: &mut Vec<Outcome>, blp: &[&PathRecord]) {
    let pr1 = problem("p1");
    let p1 = continuity_path(
        &pr1,
        &default_schedule(pr1.r, Some(0.95)).unwrap(),
        &PathOptions {
            resolution: 1025,
            ..Default::default()
        },
    )
    .unwrap();
    let pr2 = problem("p2");
    let p2 = continuity_path(
        &pr2,
        &default_schedule(pr2.r, Some(0.95)).unwrap(),
        &PathOptions {
            resolution: P2_RESOLUTION,
            half_width: Some(P2_HALF_WIDTH),
            ..Default::default()
        },
    )
    .unwrap();
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let p1_worst = p1
        .steps
        .iter()
        .map(|s| norm(&s.state.x_t))
        .fold(0.0, f64::max);
    let p2_worst = p2
        .steps
        .iter()
        .map(|s| norm(&s.state.x_t))
        .fold(0.0, f64::max);
    let p2_diag = p2
        .steps
        .iter()
        .map(|s| (s.state.x_t[0] - s.state.x_t[1]).abs())
        .fold(0.0, f64::max);
    let blp_diag = blp
        .iter()
        .flat_map(|r| r.steps.iter())
        .map(|s| (s.state.x_t[0] - s.state.x_t[1]).abs())
        .fold(0.0, f64::max);
    let complete = p1.is_complete() && p2.is_complete();
    let pass = complete && p1_worst <= 1e-8 && p2_worst <= 1e-8 && blp_diag <= 1e-8;
    report(
        out,
        10,
        pass,
        format!(
            "P^1 |x_t| {p1_worst:.1e}; P^2 ({P2_RESOLUTION}^2, L = {P2_HALF_WIDTH}) |x_t| {p2_worst:.1e} (off-diagonal {p2_diag:.1e}); Bl_p P^2 |x_1 - x_2| {blp_diag:.1e}; schedules to 0.95 complete: {complete}"
        ),
    );
}

fn main() {
    // `cargo test` passes harness flags; a filter that names nothing here skips the suite
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return;
    }
    let mut out = Vec::new();
    criterion_1(&mut out);
    criterion_2(&mut out);
    criterion_3(&mut out);
    criterion_4(&mut out);
    criterion_5(&mut out);
    let (coarse, _) = blp_path(COARSE);
    let (fine, secs) = blp_path(FINE);
    criterion_6(&mut out, &coarse, &fine, secs);
    criterion_7(&mut out, &fine);
    criterion_8(&mut out, &coarse, &fine);
    criterion_9(&mut out, &[&coarse, &fine]);
    criterion_10(&mut out, &[&coarse, &fine]);
    let failed: Vec<usize> = out.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        out.len() - failed.len(),
        out.len()
    );
    if !failed.is_empty() {
        for o in out.iter().filter(|o| !o.pass) {
            eprintln!("criterion {} failed: {}", o.id, o.detail);
        }
        std::process::exit(1);
    }
}
