//! Warm-started march along the schedule `t_0 < t_1 < ... < R`.

use super::diagnostics::{
    energy_functionals, harnack_diagnostic, key_identity_residual, wang_zhu_diagnostics, Energies,
    KeyIdentity, WangZhu,
};
use super::{solve_t, GridWindow, Problem, SolutionState, SolverOptions};
use crate::error::SolverError;

/// Knobs for [`continuity_path`].
#[derive(Debug, Clone, PartialEq)]
pub struct PathOptions {
    pub resolution: usize,
    /// Window half-width; `None` picks the default for the polytope.
    pub half_width: Option<f64>,
    pub solver: SolverOptions,
    /// Bisections of a failed step before giving up.
    pub max_substep_levels: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            resolution: 129,
            half_width: None,
            solver: SolverOptions::default(),
            max_substep_levels: 4,
        }
    }
}

/// One accepted point of the path with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub state: SolutionState,
    pub key: KeyIdentity,
    pub wang_zhu: WangZhu,
    pub energies: Energies,
    pub harnack: f64,
    pub sup_phi: f64,
    pub sup_neg_phi: f64,
    /// Softmax mass on vertices outside the minimal face.
    pub off_face_mass: Option<f64>,
    /// `max_r (lambda_r(Du0(x_t)) + 1)` over the minimal face's facets.
    pub face_gap: Option<f64>,
    pub recenter_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub steps: Vec<PathStep>,
    /// Final weights restricted to the minimal face and renormalized.
    pub b_limit: Option<Vec<f64>>,
    /// Linear extrapolation of the face weights to `t = R`.
    pub b_limit_extrapolated: Option<Vec<f64>>,
    /// Last `m_t`.
    pub c_estimate: Option<f64>,
    /// The schedule value that failed, with the error, for partial paths.
    pub failure: Option<(f64, SolverError)>,
}

impl PathRecord {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn last_t(&self) -> Option<f64> {
        self.steps.last().map(|s| s.state.t)
    }
}

/// Uniform steps of 0.1 up to `min(0.5, cap)`, then `t_k = R (1 - 2^-k (1 - t0/R))`
/// while below the cap, then the cap itself. The cap is `t_max` or `R - 0.02`.
pub fn default_schedule(r: f64, t_max: Option<f64>) -> Result<Vec<f64>, SolverError> {
    let cap = t_max.unwrap_or(r - 0.02);
    if !(cap >= 0.0 && cap < r) {
        return Err(SolverError::InvalidSchedule(format!(
            "cap {cap} must lie in [0, R) with R = {r}"
        )));
    }
    let t0 = cap.min(0.5);
    let mut out = Vec::new();
    let mut k = 0;
    while (k as f64) * 0.1 <= t0 + 1e-12 {
        out.push(k as f64 * 0.1);
        k += 1;
    }
    let t0 = *out.last().unwrap();
    for k in 1.. {
        let t = r * (1.0 - 0.5f64.powi(k) * (1.0 - t0 / r));
        if t >= cap - 1e-9 {
            break;
        }
        out.push(t);
    }
    if *out.last().unwrap() < cap - 1e-9 {
        out.push(cap);
    }
    Ok(out)
}

/// Window moved to the grid node nearest `x_t`, with `phi` carried over.
///
/// The new centre is snapped to the old grid so the carried values are exact
/// copies; nodes that fall outside the old window take the nearest edge value.
pub fn recenter(window: &GridWindow, phi: &[f64], x_t: &[f64]) -> (GridWindow, Vec<f64>) {
    let moved = window.snapped_to(x_t);
    let offset = window.offset_steps(&moved);
    let m = window.resolution() as i64;
    let n = window.dim();
    let init = (0..moved.len())
        .map(|idx| {
            let ij = moved.multi_index(idx);
            let mut src = [0usize; 2];
            for a in 0..n {
                src[a] = (ij[a] as i64 + offset[a]).clamp(0, m - 1) as usize;
            }
            phi[window.flat(src)]
        })
        .collect();
    (moved, init)
}

fn needs_recenter(window: &GridWindow, x_t: &[f64]) -> bool {
    let d = x_t
        .iter()
        .zip(window.center())
        .map(|(a, c)| (a - c) * (a - c))
        .sum::<f64>()
        .sqrt();
    d > window.half_width() / 4.0
}

/// Solves at `t`, bisecting the step from `t_prev` on Newton failure and
/// moving the window when the minimizer reaches its edge.
fn advance(
    problem: &Problem,
    t_prev: Option<f64>,
    t: f64,
    window: &mut GridWindow,
    phi: &mut Option<Vec<f64>>,
    recenters: &mut usize,
    options: &PathOptions,
) -> Result<SolutionState, SolverError> {
    let mut last_err = None;
    for level in 0..=options.max_substep_levels {
        let pieces = 1usize << level;
        let start = t_prev.unwrap_or(t);
        let mut w = window.clone();
        let mut p = phi.clone();
        let mut moved = 0;
        let mut ok = None;
        for k in 1..=pieces {
            let tk = if k == pieces {
                t
            } else {
                start + (t - start) * k as f64 / pieces as f64
            };
            let mut attempt = solve_t(problem, tk, &w, p.as_deref(), &options.solver);
            // at most a few window moves per sub-step
            for _ in 0..4 {
                match &attempt {
                    Err(SolverError::MinimizerAtBoundary { x_t }) => {
                        let base = p.clone().unwrap_or_else(|| vec![0.0; w.len()]);
                        let (nw, np) = recenter(&w, &base, x_t);
                        w = nw;
                        p = Some(np);
                        moved += 1;
                        attempt = solve_t(problem, tk, &w, p.as_deref(), &options.solver);
                    }
                    _ => break,
                }
            }
            match attempt {
                Ok(s) => {
                    p = Some(s.phi.clone());
                    if k == pieces {
                        ok = Some(s);
                    }
                }
                Err(e) => {
                    last_err = Some(e);
                    break;
                }
            }
        }
        if let Some(s) = ok {
            *window = w;
            *phi = p;
            *recenters += moved;
            return Ok(s);
        }
        if t_prev.is_none() {
            break;
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Runs the continuity path over `schedule` and evaluates all diagnostics.
pub fn continuity_path(
    problem: &Problem,
    schedule: &[f64],
    options: &PathOptions,
) -> Result<PathRecord, SolverError> {
    if schedule.is_empty() {
        return Err(SolverError::InvalidSchedule("schedule is empty".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolverError::InvalidSchedule(
            "schedule must be strictly increasing".into(),
        ));
    }
    if schedule[0] < 0.0 || *schedule.last().unwrap() >= problem.r {
        return Err(SolverError::InvalidSchedule(format!(
            "schedule must lie in [0, R) with R = {}",
            problem.r
        )));
    }
    let n = problem.dim();
    let mut window = match options.half_width {
        Some(l) => GridWindow::new(vec![0.0; n], l, options.resolution)?,
        None => GridWindow::default_for(&problem.reference, options.resolution)?,
    };
    let mut phi: Option<Vec<f64>> = None;
    let mut recenters = 0;
    let mut steps: Vec<PathStep> = Vec::new();
    let mut failure = None;
    let mut t_prev = None;
    for &t in schedule {
        let state = match advance(
            problem,
            t_prev,
            t,
            &mut window,
            &mut phi,
            &mut recenters,
            options,
        )
        .and_then(|s| describe(problem, s, recenters))
        {
            Ok(step) => step,
            Err(e) => {
                failure = Some((t, e));
                break;
            }
        };
        if needs_recenter(&window, &state.state.x_t) {
            let (nw, np) = recenter(&window, &state.state.phi, &state.state.x_t);
            window = nw;
            phi = Some(np);
            recenters += 1;
        }
        t_prev = Some(t);
        steps.push(state);
    }
    let (b_limit, b_limit_extrapolated) = limit_weights(problem, &steps);
    Ok(PathRecord {
        c_estimate: steps.last().map(|s| s.state.m_t),
        steps,
        b_limit,
        b_limit_extrapolated,
        failure,
    })
}

fn describe(
    problem: &Problem,
    state: SolutionState,
    recenter_count: usize,
) -> Result<PathStep, SolverError> {
    let key = key_identity_residual(problem, &state)?;
    let wang_zhu = wang_zhu_diagnostics(problem, &state)?;
    let energies = energy_functionals(problem, &state)?;
    let harnack = harnack_diagnostic(problem, &state)?;
    let sup_phi = state.phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sup_neg_phi = state
        .phi
        .iter()
        .map(|p| -p)
        .fold(f64::NEG_INFINITY, f64::max);
    let off_face_mass = problem.face_vertices.as_ref().map(|face| {
        state
            .b
            .0
            .iter()
            .enumerate()
            .filter(|(i, _)| !face.contains(i))
            .map(|(_, b)| b)
            .sum()
    });
    let face_gap = problem.face_vertices.as_ref().map(|_| {
        let g = problem.reference.gradient(&state.x_t);
        problem
            .active_facets
            .iter()
            .map(|&r| {
                let lam: f64 = problem.facets[r].iter().zip(&g).map(|(v, x)| v * x).sum();
                lam + 1.0
            })
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(PathStep {
        state,
        key,
        wang_zhu,
        energies,
        harnack,
        sup_phi,
        sup_neg_phi,
        off_face_mass,
        face_gap,
        recenter_count,
    })
}

fn face_weights(face: &[usize], b: &[f64]) -> Vec<f64> {
    let s: f64 = face.iter().map(|&i| b[i]).sum();
    face.iter().map(|&i| b[i] / s).collect()
}

fn limit_weights(problem: &Problem, steps: &[PathStep]) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let Some(face) = &problem.face_vertices else {
        return (None, None);
    };
    let Some(last) = steps.last() else {
        return (None, None);
    };
    let raw = face_weights(face, &last.state.b.0);
    let extrapolated = (steps.len() >= 2).then(|| {
        let prev = &steps[steps.len() - 2];
        let b1 = face_weights(face, &prev.state.b.0);
        let (t1, t2) = (prev.state.t, last.state.t);
        let slope = (problem.r - t2) / (t2 - t1);
        let ext: Vec<f64> = raw
            .iter()
            .zip(&b1)
            .map(|(b2, b1)| (b2 + (b2 - b1) * slope).max(0.0))
            .collect();
        let s: f64 = ext.iter().sum();
        ext.iter().map(|v| v / s).collect()
    });
    (Some(raw), extrapolated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let s = default_schedule(6.0 / 7.0, None).unwrap();
        assert_eq!(&s[..6], &[0.0, 0.1, 0.2, 0.30000000000000004, 0.4, 0.5]);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        assert!((s.last().unwrap() - (6.0 / 7.0 - 0.02)).abs() < 1e-12);
        let s = default_schedule(1.0, Some(0.95)).unwrap();
        assert_eq!(*s.last().unwrap(), 0.95);
        assert!(default_schedule(0.8, Some(0.9)).is_err());
    }

    #[test]
    fn recenter_by_zero_is_identity() {
        let w = GridWindow::new(vec![0.0, 0.0], 8.0, 33).unwrap();
        let phi: Vec<f64> = (0..w.len()).map(|i| i as f64).collect();
        let (nw, np) = recenter(&w, &phi, &[0.1, -0.1]);
        assert_eq!(nw, w);
        assert_eq!(np, phi);
    }

    #[test]
    fn recenters_compose() {
        let w = GridWindow::new(vec![0.0, 0.0], 8.0, 33).unwrap();
        let phi: Vec<f64> = (0..w.len()).map(|i| (i as f64).sin()).collect();
        let (w1, p1) = recenter(&w, &phi, &[1.0, 0.5]);
        let (w2, p2) = recenter(&w1, &p1, &[2.0, -1.0]);
        let (w3, p3) = recenter(&w, &phi, &[2.0, -1.0]);
        assert_eq!(w2, w3);
        // nodes that stayed inside the original window agree exactly
        for i in 0..w2.len() {
            if w.contains(&w2.node(i)) && w1.contains(&w2.node(i)) {
                assert_eq!(p2[i], p3[i]);
            }
        }
    }
}
