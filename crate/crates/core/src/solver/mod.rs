//! Finite-difference Newton solver for the continuity family
//! `det D^2 u = exp(-(1 - t) u0 - t u)`.
//!
//! The unknown is the relative potential `phi = u - u0` on a square window,
//! with the analytic Hessian of `u0` and a finite-difference Hessian of `phi`.
//! The discrete equation at every node is
//!
//! ```text
//! G(phi) = log det(D^2 u0 + D_h^2 phi + eps I) - log(exp(-w) + eps^n) = 0,
//! w = u0 + t phi,
//! ```
//!
//! where `eps = 1000 * f64::EPSILON / h^2` sits at the roundoff floor of the
//! second differences and only matters in the far field.

pub mod diagnostics;
pub mod grid;
pub mod path;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use rayon::prelude::*;

use crate::error::SolverError;
use crate::polytope::LatticePolytope;
use crate::potential::{ReferencePotential, SoftmaxWeights};
use crate::rational::to_f64;

pub use diagnostics::{
    energy_functionals, harnack_diagnostic, key_identity_residual, transformed_residual,
    wang_zhu_diagnostics, Energies, KeyIdentity, WangZhu,
};
pub use grid::{diagonal_sign, GridWindow, Stencil};
pub use path::{continuity_path, default_schedule, recenter, PathOptions, PathRecord, PathStep};

/// Newton iteration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on `max_i W_i |G_i|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-9,
            max_iterations: 100,
            max_halvings: 30,
        }
    }
}

/// Polytope data the solver needs, in floating point.
#[derive(Debug, Clone)]
pub struct Problem {
    pub reference: ReferencePotential,
    pub facets: Vec<Vec<f64>>,
    pub barycenter: Vec<f64>,
    pub volume: f64,
    pub r: f64,
    pub diagonal_sign: i64,
    pub face_vertices: Option<Vec<usize>>,
    pub active_facets: Vec<usize>,
}

impl Problem {
    pub fn new(poly: &LatticePolytope, reference: ReferencePotential) -> Result<Self, SolverError> {
        let n = poly.dim();
        if !(1..=2).contains(&n) {
            return Err(SolverError::UnsupportedDimension(n));
        }
        let inv = poly.fano_invariants();
        let (face_vertices, active_facets) = match &inv.minimal_face {
            Some(f) => (Some(f.vertex_indices.clone()), f.active_facets.clone()),
            None => (None, Vec::new()),
        };
        Ok(Problem {
            reference,
            facets: poly
                .facets()
                .iter()
                .map(|v| v.iter().map(|&x| x as f64).collect())
                .collect(),
            barycenter: inv.barycenter.to_f64(),
            volume: to_f64(&inv.volume),
            r: to_f64(&inv.r),
            diagonal_sign: grid::diagonal_sign(poly),
            face_vertices,
            active_facets,
        })
    }

    pub fn dim(&self) -> usize {
        self.reference.dim()
    }
}

/// A converged solution of the equation at one value of `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    pub t: f64,
    pub window: GridWindow,
    /// `phi = u - u0` at the window nodes.
    pub phi: Vec<f64>,
    /// At `t = 0` the equation only fixes `phi` up to a constant; the solver
    /// pins `phi` at the window centre and solves `G + mu = 0` for the
    /// constant `mu`, which absorbs the window's normalization defect.
    pub gauge_shift: f64,
    pub x_t: Vec<f64>,
    pub m_t: f64,
    pub b: SoftmaxWeights,
    /// Final `max_i W_i |G_i|` with `W_i = (exp(-w_i) + eps^n) / (exp(-m) + eps^n)`.
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Per-window discretization: stencil plus the analytic data of `u0`.
pub struct Discretization<'a> {
    pub problem: &'a Problem,
    pub window: GridWindow,
    pub stencil: Stencil,
    pub u0: Vec<f64>,
    /// Analytic Hessian `[H11, H12, H22]` of `u0`.
    pub h0: Vec<[f64; 3]>,
    pub g0: Vec<[f64; 2]>,
    pub eps: f64,
    log_eps_n: f64,
    /// Window-edge nodes carry a linear boundary condition instead of the
    /// equation, as `(column, coefficient)` pairs.
    boundary: Vec<Option<Vec<(usize, f64)>>>,
}

/// Residual and its ingredients at one iterate.
struct Evaluation {
    f: Vec<f64>,
    /// `log(exp(-w) + eps^n)`
    log_rhs: Vec<f64>,
    /// `dF/dA` at each node.
    k: Vec<[f64; 3]>,
    /// `exp(-w) / (exp(-w) + eps^n)`
    sigma: Vec<f64>,
    /// Smallest eigenvalue of `D^2 u + eps I` at each node.
    lambda_min: Vec<f64>,
}

impl Evaluation {
    /// `W_i = exp(log_rhs_i - max log_rhs)`.
    fn weights(&self) -> Vec<f64> {
        let top = self
            .log_rhs
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        self.log_rhs.iter().map(|l| (l - top).exp()).collect()
    }

    /// `D^2 u + eps I` is positive definite wherever `W_i >= CONVEXITY_WEIGHT`.
    fn resolved_convex(&self) -> bool {
        self.weights()
            .iter()
            .zip(&self.lambda_min)
            .all(|(w, l)| *l > 0.0 || *w < CONVEXITY_WEIGHT)
    }

    fn weighted_max(&self) -> f64 {
        self.weights()
            .iter()
            .zip(&self.f)
            .map(|(w, f)| w * f.abs())
            .fold(0.0, f64::max)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log x` for `x >= floor`, continued linearly below `floor` (C^1).
fn soft_log(x: f64, floor: f64) -> (f64, f64) {
    if x >= floor {
        (x.ln(), 1.0 / x)
    } else {
        (floor.ln() + (x - floor) / floor, 1.0 / floor)
    }
}

/// Eigenvalues of a symmetric matrix `[a11, a12, a22]` (ascending).
fn eigenvalues(a: &[f64; 3], n: usize) -> [f64; 2] {
    if n == 1 {
        return [a[0], a[0]];
    }
    let m = 0.5 * (a[0] + a[2]);
    let r = (0.25 * (a[0] - a[2]).powi(2) + a[1] * a[1]).sqrt();
    [m - r, m + r]
}

/// Extended `log det A` and its gradient `dF/dA` as `[K11, K12, K22]`.
/// Equals `log det A` and `A^{-1}` when every eigenvalue is above `floor`.
fn log_det(a: &[f64; 3], n: usize, floor: f64) -> (f64, [f64; 3]) {
    if n == 1 {
        let (v, d) = soft_log(a[0], floor);
        return (v, [d, 0.0, 0.0]);
    }
    let [l1, l2] = eigenvalues(a, n);
    let (v1, d1) = soft_log(l1, floor);
    let (v2, d2) = soft_log(l2, floor);
    let m = 0.5 * (l1 + l2);
    let r = 0.5 * (l2 - l1);
    let alpha = 0.5 * (d1 + d2);
    // divided difference of the derivative, with its limit for equal eigenvalues
    let beta = if r > 1e-12 * m.abs().max(floor) {
        (d2 - d1) / (2.0 * r)
    } else if m >= floor {
        -1.0 / (m * m)
    } else {
        0.0
    };
    (
        v1 + v2,
        [
            alpha + beta * (a[0] - m),
            beta * a[1],
            alpha + beta * (a[2] - m),
        ],
    )
}

/// `v . D phi = 0` at an edge node, where `v` is the normal of the facet of
/// the polytope nearest to `D u0` among facets transversal to the window
/// edge, so that `D u` stays on that facet. Derivatives across the edge are
/// one-sided inward, those along it centred.
fn boundary_row(
    problem: &Problem,
    window: &GridWindow,
    stencil: &Stencil,
    g0: &[f64; 2],
    i: usize,
) -> Vec<(usize, f64)> {
    let n = window.dim();
    let ij = window.multi_index(i);
    let last = window.resolution() - 1;
    let outward: Vec<f64> = (0..n)
        .map(|k| match ij[k] {
            0 => -1.0,
            j if j == last => 1.0,
            _ => 0.0,
        })
        .collect();
    let v = problem
        .facets
        .iter()
        .filter_map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let tilt: f64 = v.iter().zip(&outward).map(|(a, b)| a * b).sum::<f64>() / norm;
            (tilt < -BOUNDARY_TILT).then(|| {
                let gap: f64 = v.iter().zip(g0).map(|(a, b)| a * b).sum::<f64>() + 1.0;
                (gap / norm, v)
            })
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, v)| v)
        .expect("some facet is transversal to every window edge");
    // the row is `-v . D phi`, whose diagonal is positive since `v . outward < 0`
    let h = window.step();
    let mut row = vec![(i, 0.0)];
    for k in 0..n {
        let (p, q) = stencil.neighbours(i, k);
        if outward[k] != 0.0 {
            // `p` is the inward neighbour, `pp` the next one;
            // `d_k phi = outward_k (3 phi_i - 4 phi_p + phi_pp) / 2h`
            let inward = |j: usize| {
                let (a, b) = stencil.neighbours(j, k);
                if outward[k] < 0.0 {
                    a
                } else {
                    b
                }
            };
            let pp = inward(p);
            let c = -outward[k] * v[k] / (2.0 * h);
            row[0].1 += 3.0 * c;
            row.push((p, -4.0 * c));
            row.push((pp, c));
        } else {
            // `d_k phi = (phi_p - phi_q) / 2h`
            let c = v[k] / (2.0 * h);
            row.push((p, -c));
            row.push((q, c));
        }
    }
    row
}

/// Minimal `|cos|` between an admissible boundary facet normal and the
/// window edge normal.
const BOUNDARY_TILT: f64 = 0.1;

impl<'a> Discretization<'a> {
    pub fn new(problem: &'a Problem, window: GridWindow) -> Result<Self, SolverError> {
        let n = problem.dim();
        if window.dim() != n {
            return Err(SolverError::InvalidWindow(format!(
                "window dimension {} does not match polytope dimension {n}",
                window.dim()
            )));
        }
        let stencil = Stencil::new(&window, problem.diagonal_sign);
        let jets: Vec<_> = (0..window.len())
            .into_par_iter()
            .map(|i| problem.reference.jet(&window.node(i)[..n]))
            .collect();
        let u0 = jets.iter().map(|j| j.value).collect();
        let h0 = jets
            .iter()
            .map(|j| match n {
                1 => [j.hessian[0], 0.0, 0.0],
                _ => [j.hessian[0], j.hessian[1], j.hessian[3]],
            })
            .collect();
        let g0: Vec<[f64; 2]> = jets
            .iter()
            .map(|j| match n {
                1 => [j.gradient[0], 0.0],
                _ => [j.gradient[0], j.gradient[1]],
            })
            .collect();
        let h = window.step();
        let eps = 1000.0 * f64::EPSILON / (h * h);
        let boundary = (0..window.len())
            .map(|i| {
                window
                    .is_edge(i)
                    .then(|| boundary_row(problem, &window, &stencil, &g0[i], i))
            })
            .collect();
        Ok(Discretization {
            boundary,
            problem,
            stencil,
            u0,
            h0,
            g0,
            eps,
            log_eps_n: n as f64 * eps.ln(),
            window,
        })
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    /// Discrete Hessian of `u = u0 + phi` at a node (no regularization).
    pub fn hessian_u(&self, phi: &[f64], i: usize) -> [f64; 3] {
        let hp = self.stencil.hessian(phi, i);
        let h0 = self.h0[i];
        [h0[0] + hp[0], h0[1] + hp[1], h0[2] + hp[2]]
    }

    pub fn w(&self, phi: &[f64], t: f64) -> Vec<f64> {
        self.u0.iter().zip(phi).map(|(u, p)| u + t * p).collect()
    }

    fn evaluate(&self, phi: &[f64], t: f64, mu: f64) -> Evaluation {
        self.evaluate_blend(phi, t, mu, 1.0)
    }

    /// Residual against the blended target
    /// `s log(exp(-w) + eps^n) + (1 - s) log det(D^2 u0 + eps I)`,
    /// for which `phi = 0` is exact at `s = 0`.
    fn evaluate_blend(&self, phi: &[f64], t: f64, mu: f64, s: f64) -> Evaluation {
        let n = self.dim();
        let eps = self.eps;
        let rows: Vec<(f64, f64, [f64; 3], f64, f64)> = (0..self.window.len())
            .into_par_iter()
            .map(|i| {
                let mut a = self.hessian_u(phi, i);
                a[0] += eps;
                if n == 2 {
                    a[2] += eps;
                }
                let lambda_min = eigenvalues(&a, n)[0];
                let w = self.u0[i] + t * phi[i];
                let log_rhs = log_add_exp(-w, self.log_eps_n);
                let sigma = (-w - log_rhs).exp();
                let mut a0 = self.h0[i];
                a0[0] += eps;
                if n == 2 {
                    a0[2] += eps;
                }
                let (log_rhs, sigma) = if s < 1.0 {
                    let ld0 = log_det(&a0, n, f64::MIN_POSITIVE).0;
                    (s * log_rhs + (1.0 - s) * ld0, s * sigma)
                } else {
                    (log_rhs, sigma)
                };
                if let Some(row) = &self.boundary[i] {
                    let f = row.iter().map(|&(j, c)| c * phi[j]).sum();
                    return (f, log_rhs, [0.0; 3], 0.0, f64::INFINITY);
                }
                let scale = match n {
                    1 => log_rhs.exp(),
                    _ => log_rhs.exp() / eigenvalues(&a0, n)[1].max((0.5 * log_rhs).exp()),
                };
                let floor = SOFT_LOG_FLOOR * scale;
                let (ld, k) = log_det(&a, n, floor);
                (ld - log_rhs + mu, log_rhs, k, sigma, lambda_min)
            })
            .collect();
        Evaluation {
            f: rows.iter().map(|r| r.0).collect(),
            log_rhs: rows.iter().map(|r| r.1).collect(),
            k: rows.iter().map(|r| r.2).collect(),
            sigma: rows.iter().map(|r| r.3).collect(),
            lambda_min: rows.iter().map(|r| r.4).collect(),
        }
    }

    /// Public residual view: `G_i` and the weights `W_i` for a given `phi`.
    pub fn residual(&self, phi: &[f64], t: f64, mu: f64) -> (Vec<f64>, Vec<f64>) {
        let ev = self.evaluate(phi, t, mu);
        let w = ev.weights();
        (ev.f, w)
    }

    pub fn log_rhs_floor(&self) -> f64 {
        self.log_eps_n
    }
}

/// Relative weight below which second differences cannot resolve the
/// exponentially small curvature across the walls of the normal fan, so
/// convexity is not asserted there.
const CONVEXITY_WEIGHT: f64 = 1e-8;

/// Eigenvalue threshold, relative to the expected smallest eigenvalue
/// `rhs / max(lambda_max(D^2 u0), sqrt(rhs))` (in 1-D: `rhs`), below which
/// `log` is continued linearly.
const SOFT_LOG_FLOOR: f64 = 1e-3;

const REFINEMENT_STEPS: usize = 2;

/// Sparsity pattern and symbolic factorization, reused across Newton steps.
struct LinearSystem {
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu: SymbolicLu<usize>,
    gauge: Option<usize>,
}

impl LinearSystem {
    fn new(d: &Discretization, gauge: Option<usize>) -> Result<Self, SolverError> {
        let n = d.window.len();
        let mut pairs = Vec::with_capacity(n * (1 + 2 * d.stencil.directions() + 1));
        let width = 1 + 2 * d.stencil.directions();
        for r in 0..n {
            match &d.boundary[r] {
                // padded with the diagonal to the common row width
                Some(b) => {
                    assert!(b.len() <= width);
                    for slot in 0..width {
                        let col = b.get(slot).map_or(r, |e| e.0);
                        pairs.push(Pair { row: r, col });
                    }
                }
                None => {
                    pairs.push(Pair { row: r, col: r });
                    for k in 0..d.stencil.directions() {
                        let (p, q) = d.stencil.neighbours(r, k);
                        pairs.push(Pair { row: r, col: p });
                        pairs.push(Pair { row: r, col: q });
                    }
                }
            }
            if let Some(c) = gauge {
                pairs.push(Pair { row: r, col: c });
            }
        }
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        let lu = SymbolicLu::try_new(symbolic.as_ref())
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        Ok(LinearSystem {
            symbolic,
            argsort,
            lu,
            gauge,
        })
    }

    /// Solves `J delta = -f` with row equilibration and iterative refinement.
    fn newton_direction(
        &self,
        d: &Discretization,
        ev: &Evaluation,
        t: f64,
    ) -> Result<Vec<f64>, SolverError> {
        let size = d.window.len();
        let (mat, scale) = self.jacobian(d, ev, t)?;
        let lu = Lu::try_new_with_symbolic(self.lu.clone(), mat.as_ref())
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        let rhs = Col::<f64>::from_fn(size, |i| -ev.f[i] * scale[i]);
        let mut sol = lu.solve(&rhs);
        for _ in 0..REFINEMENT_STEPS {
            let r = &rhs - &mat * &sol;
            sol += lu.solve(&r);
        }
        let out: Vec<f64> = (0..size).map(|i| sol[i]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Factorization(
                "non-finite Newton direction".into(),
            ));
        }
        Ok(out)
    }

    fn jacobian(
        &self,
        d: &Discretization,
        ev: &Evaluation,
        t: f64,
    ) -> Result<(SparseColMat<usize, f64>, Vec<f64>), SolverError> {
        let n = d.dim();
        let dirs = d.stencil.directions();
        let ih2 = d.stencil.inv_h2();
        let s = d.stencil.sign as f64;
        let per_row = 1 + 2 * dirs + usize::from(self.gauge.is_some());
        let size = d.window.len();
        let mut values = vec![0.0; size * per_row];
        values
            .par_chunks_mut(per_row)
            .enumerate()
            .for_each(|(r, row)| {
                if let Some(b) = &d.boundary[r] {
                    for (slot, &(_, c)) in b.iter().enumerate() {
                        row[slot] = c;
                    }
                    return;
                }
                let [k11, k12, k22] = ev.k[r];
                let coef: [f64; 3] = if n == 1 {
                    [k11, 0.0, 0.0]
                } else {
                    [k11 - s * k12, k22 - s * k12, s * k12]
                };
                let mut centre = t * ev.sigma[r];
                for k in 0..dirs {
                    let c = coef[k] * ih2;
                    row[1 + 2 * k] = c;
                    row[2 + 2 * k] = c;
                    centre -= 2.0 * c;
                }
                row[0] = centre;
                if let Some(g) = self.gauge {
                    let cols = std::iter::once(r).chain((0..dirs).flat_map(|k| {
                        let (p, q) = d.stencil.neighbours(r, k);
                        [p, q]
                    }));
                    for (slot, col) in cols.enumerate() {
                        if col == g {
                            row[slot] = 0.0;
                        }
                    }
                    row[per_row - 1] = 1.0;
                }
            });
        let scale: Vec<f64> = values
            .par_chunks_mut(per_row)
            .map(|row| {
                let top = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let s = if top > 0.0 { 1.0 / top } else { 1.0 };
                row.iter_mut().for_each(|v| *v *= s);
                s
            })
            .collect();
        let mat = SparseColMat::<usize, f64>::new_from_argsort(
            self.symbolic.clone(),
            &self.argsort,
            &values,
        )
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        Ok((mat, scale))
    }
}

/// Solves the equation at `t` on `window`, warm-started from `init`.
///
/// A cold start at `t = 0` is far from the solution in the tails, so the
/// target is deformed from `det D^2 u0` (where `phi = 0` is exact) to the
/// true right-hand side in adaptive steps. A warm start that fails to
/// converge directly is retried the same way.
pub fn solve_t(
    problem: &Problem,
    t: f64,
    window: &GridWindow,
    init: Option<&[f64]>,
    options: &SolverOptions,
) -> Result<SolutionState, SolverError> {
    if !(0.0..problem.r).contains(&t) && !(t == 0.0) {
        return Err(SolverError::InvalidSchedule(format!(
            "t = {t} is outside [0, R) with R = {}",
            problem.r
        )));
    }
    let d = Discretization::new(problem, window.clone())?;
    let size = window.len();
    let gauge = (t == 0.0).then(|| window.center_index());
    let start = match init {
        Some(p) if p.len() != size => {
            return Err(SolverError::InvalidWindow(format!(
                "initial guess has {} values for {size} nodes",
                p.len()
            )))
        }
        Some(p) => {
            let mut phi = p.to_vec();
            if let Some(c) = gauge {
                let shift = phi[c];
                phi.iter_mut().for_each(|p| *p -= shift);
            }
            Some(phi)
        }
        None => None,
    };
    let system = LinearSystem::new(&d, gauge)?;
    if let Some(phi) = start {
        if let Ok(newton) = newton(&d, &system, t, 1.0, phi, 0.0, options) {
            return conclude(&d, t, newton);
        }
    }
    let newton = homotopy(&d, &system, t, options)?;
    conclude(&d, t, newton)
}

fn conclude(d: &Discretization, t: f64, newton: Newton) -> Result<SolutionState, SolverError> {
    if !newton.convex {
        return Err(SolverError::ConvexityLost);
    }
    finish(
        d,
        t,
        newton.phi,
        newton.mu,
        newton.residual,
        newton.iterations,
    )
}

/// Outcome of one Newton solve.
struct Newton {
    phi: Vec<f64>,
    mu: f64,
    residual: f64,
    iterations: usize,
    convex: bool,
}

/// Stage tolerance for intermediate homotopy targets.
const STAGE_TOLERANCE: f64 = 1e-6;
const STAGE_ITERATIONS: usize = 25;
const MIN_STAGE_STEP: f64 = 1.0 / 4096.0;

fn homotopy(
    d: &Discretization,
    system: &LinearSystem,
    t: f64,
    options: &SolverOptions,
) -> Result<Newton, SolverError> {
    let stage = SolverOptions {
        tolerance: STAGE_TOLERANCE.max(options.tolerance),
        max_iterations: STAGE_ITERATIONS.min(options.max_iterations),
        ..*options
    };
    let mut phi = vec![0.0; d.window.len()];
    let mut mu = 0.0;
    let mut s: f64 = 0.0;
    let mut step: f64 = 0.125;
    let mut iterations = 0;
    while s < 1.0 {
        let next = (s + step).min(1.0);
        match newton(d, system, t, next, phi.clone(), mu, &stage) {
            Ok(r) => {
                iterations += r.iterations;
                phi = r.phi;
                mu = r.mu;
                s = next;
                if r.iterations <= 6 {
                    step *= 2.0;
                }
            }
            Err(e) => {
                step *= 0.5;
                if step < MIN_STAGE_STEP {
                    return Err(e);
                }
            }
        }
    }
    let mut r = newton(d, system, t, 1.0, phi, mu, options)?;
    r.iterations += iterations;
    Ok(r)
}

fn newton(
    d: &Discretization,
    system: &LinearSystem,
    t: f64,
    s: f64,
    mut phi: Vec<f64>,
    mut mu: f64,
    options: &SolverOptions,
) -> Result<Newton, SolverError> {
    let gauge = system.gauge;
    let mut ev = d.evaluate_blend(&phi, t, mu, s);
    let mut iterations = 0;
    loop {
        let res = ev.weighted_max();
        if res < options.tolerance {
            return Ok(Newton {
                phi,
                mu,
                residual: res,
                iterations,
                convex: ev.resolved_convex(),
            });
        }
        if iterations >= options.max_iterations {
            return Err(SolverError::NotConverged {
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let weights = ev.weights();
        let merit = |f: &[f64]| -> f64 {
            f.iter()
                .zip(&weights)
                .map(|(f, w)| (w * f) * (w * f))
                .sum::<f64>()
                .sqrt()
        };
        let merit0 = merit(&ev.f);
        let delta = system.newton_direction(d, &ev, t)?;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let mut trial = phi.clone();
            let mut trial_mu = mu;
            trial
                .par_iter_mut()
                .zip(&delta)
                .for_each(|(p, dp)| *p += alpha * dp);
            if let Some(c) = gauge {
                trial[c] = 0.0;
                trial_mu += alpha * delta[c];
            }
            let tev = d.evaluate_blend(&trial, t, trial_mu, s);
            if merit(&tev.f) < (1.0 - 1e-4 * alpha) * merit0 {
                accepted = Some((trial, trial_mu, tev));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((p, m, e)) => {
                phi = p;
                mu = m;
                ev = e;
            }
            None => {
                return Err(SolverError::NotConverged {
                    iterations,
                    residual: res,
                })
            }
        }
    }
}

fn finish(
    d: &Discretization,
    t: f64,
    phi: Vec<f64>,
    mu: f64,
    residual_norm: f64,
    iterations: usize,
) -> Result<SolutionState, SolverError> {
    let (x_t, m_t) = locate_minimum(d, &phi, t)?;
    let b = d.problem.reference.weights(&x_t);
    Ok(SolutionState {
        t,
        window: d.window.clone(),
        phi,
        gauge_shift: mu,
        x_t,
        m_t,
        b,
        residual_norm,
        iterations,
    })
}

/// Second-order Taylor model of `w` at node `c`: value, gradient, Hessian.
fn taylor_model(d: &Discretization, phi: &[f64], t: f64, c: usize) -> (f64, [f64; 2], [f64; 3]) {
    let gp = d.stencil.gradient(phi, c);
    let hp = d.stencil.hessian(phi, c);
    let g0 = d.g0[c];
    let h0 = d.h0[c];
    (
        d.u0[c] + t * phi[c],
        [g0[0] + t * gp[0], g0[1] + t * gp[1]],
        [h0[0] + t * hp[0], h0[1] + t * hp[1], h0[2] + t * hp[2]],
    )
}

/// Minimizer `x_t` and minimum `m_t` of `w = u0 + t phi`.
///
/// Starts at the discrete argmin and iterates on the quadratic obtained by
/// blending the nodal Taylor models of the enclosing cell with multilinear
/// weights. The blend is invariant under any grid symmetry, so `x_t` inherits
/// the symmetries of the discrete solution.
pub fn locate_minimum(
    d: &Discretization,
    phi: &[f64],
    t: f64,
) -> Result<(Vec<f64>, f64), SolverError> {
    let n = d.dim();
    let win = &d.window;
    let w = d.w(phi, t);
    let k = (0..w.len())
        .min_by(|&a, &b| w[a].total_cmp(&w[b]))
        .expect("nonempty grid");
    if win.steps_to_edge(k) < 2 {
        return Err(SolverError::MinimizerAtBoundary {
            x_t: win.node(k)[..n].to_vec(),
        });
    }
    let h = win.step();
    let m = win.resolution();
    let mut x = win.node(k);
    let mut value = w[k];
    for _ in 0..50 {
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for a in 0..n {
            let s = (x[a] - win.center()[a] + win.half_width()) / h;
            let s = s.clamp(0.0, (m - 1) as f64);
            let i = (s.floor() as usize).min(m - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut hbar = [0.0; 3];
        let mut rhs = [0.0; 2];
        let mut models = Vec::with_capacity(4);
        for corner in 0..(1usize << n) {
            let mut ij = base;
            let mut lam = 1.0;
            for a in 0..n {
                if corner >> a & 1 == 1 {
                    ij[a] += 1;
                    lam *= frac[a];
                } else {
                    lam *= 1.0 - frac[a];
                }
            }
            if lam == 0.0 {
                continue;
            }
            let c = win.flat(ij);
            let xc = win.node(c);
            let (wc, g, hh) = taylor_model(d, phi, t, c);
            for e in 0..3 {
                hbar[e] += lam * hh[e];
            }
            // H_c x_c - g_c
            let hx = match n {
                1 => [hh[0] * xc[0], 0.0],
                _ => [hh[0] * xc[0] + hh[1] * xc[1], hh[1] * xc[0] + hh[2] * xc[1]],
            };
            for a in 0..n {
                rhs[a] += lam * (hx[a] - g[a]);
            }
            models.push((lam, xc, wc, g, hh));
        }
        let new_x = match n {
            1 => [rhs[0] / hbar[0], 0.0],
            _ => {
                let det = hbar[0] * hbar[2] - hbar[1] * hbar[1];
                [
                    (hbar[2] * rhs[0] - hbar[1] * rhs[1]) / det,
                    (hbar[0] * rhs[1] - hbar[1] * rhs[0]) / det,
                ]
            }
        };
        if !(new_x[0].is_finite() && new_x[1].is_finite()) {
            break;
        }
        value = models
            .iter()
            .map(|(lam, xc, wc, g, hh)| {
                let dx = [new_x[0] - xc[0], new_x[1] - xc[1]];
                let quad = match n {
                    1 => hh[0] * dx[0] * dx[0],
                    _ => {
                        hh[0] * dx[0] * dx[0] + 2.0 * hh[1] * dx[0] * dx[1] + hh[2] * dx[1] * dx[1]
                    }
                };
                lam * (wc + g[0] * dx[0] + g[1] * dx[1] + 0.5 * quad)
            })
            .sum();
        let step = ((new_x[0] - x[0]).powi(2) + (new_x[1] - x[1]).powi(2)).sqrt();
        x = new_x;
        if step <= 1e-14 * (1.0 + x[0].abs() + x[1].abs()) {
            break;
        }
    }
    let x_t = x[..n].to_vec();
    if win.inner_radius(&x_t) < 2.0 * h {
        return Err(SolverError::MinimizerAtBoundary { x_t });
    }
    Ok((x_t, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn problem(p: &LatticePolytope) -> Problem {
        Problem::new(p, ReferencePotential::new(p).unwrap()).unwrap()
    }

    #[test]
    fn p1_at_zero_matches_closed_form() {
        let pr = problem(&catalog::p1());
        let win = GridWindow::default_for(&pr.reference, 2049).unwrap();
        let st = solve_t(&pr, 0.0, &win, None, &SolverOptions::default()).unwrap();
        assert!(st.residual_norm < 1e-9);
        assert!(st.x_t[0].abs() < 1e-10);
        assert!(st.gauge_shift.abs() < 1e-6, "gauge {}", st.gauge_shift);
        // u' = (2/pi) gd(x) at x = 2
        let i = (0..win.len())
            .min_by(|&a, &b| {
                (win.node(a)[0] - 2.0)
                    .abs()
                    .total_cmp(&(win.node(b)[0] - 2.0).abs())
            })
            .unwrap();
        let d = Discretization::new(&pr, win.clone()).unwrap();
        let x = win.node(i)[0];
        let du = d.g0[i][0] + d.stencil.gradient(&st.phi, i)[0];
        let gd = 2.0 * (0.5 * x).tanh().atan() * 2.0 / std::f64::consts::PI;
        assert!((du - gd).abs() < 1e-4, "{du} vs {gd}");
    }

    fn jacobian_check(name: &str, t: f64, gauge: bool) {
        let pr = problem(&catalog::by_name(name).unwrap());
        let n = pr.dim();
        let win = GridWindow::new(vec![0.0; n], 6.0, 33).unwrap();
        let d = Discretization::new(&pr, win.clone()).unwrap();
        let g = gauge.then(|| win.center_index());
        let sys = LinearSystem::new(&d, g).unwrap();
        let phi: Vec<f64> = (0..win.len())
            .map(|i| {
                let x = win.node(i);
                0.005 * (0.3 * x[0]).cos() * (0.2 * x[1] + 0.1).cos()
            })
            .collect();
        let v: Vec<f64> = (0..win.len())
            .map(|i| {
                let x = win.node(i);
                (0.4 * x[0] + 0.3).sin() * (0.25 * x[1]).cos()
            })
            .collect();
        let ev = d.evaluate(&phi, t, 0.0);
        let (jac, scale) = sys.jacobian(&d, &ev, t).unwrap();
        let vc = Col::<f64>::from_fn(win.len(), |i| v[i]);
        let jv = jac.as_ref() * vc.as_ref();
        let tau = 1e-7;
        let apply = |sgn: f64| {
            let mut p: Vec<f64> = phi.iter().zip(&v).map(|(a, b)| a + sgn * tau * b).collect();
            let mut mu = 0.0;
            if let Some(c) = g {
                mu = sgn * tau * v[c];
                p[c] = phi[c];
            }
            d.evaluate(&p, t, mu).f
        };
        let (fp, fm) = (apply(1.0), apply(-1.0));
        let err = |i: usize| {
            let mut a = d.hessian_u(&phi, i);
            a[0] += d.eps;
            a[2] += d.eps;
            if eigenvalues(&a, n)[0] <= 0.0 {
                return 0.0;
            }
            let fd = (fp[i] - fm[i]) / (2.0 * tau);
            let an = jv[i] / scale[i];
            (fd - an).abs() / (1.0 + fd.abs() + an.abs())
        };
        let worst = (0..win.len())
            .max_by(|&a, &b| err(a).total_cmp(&err(b)))
            .unwrap();
        assert!(
            err(worst) < 1e-3,
            "{name} t={t}: {} at {:?}, fd {} vs {}",
            err(worst),
            win.node(worst),
            (fp[worst] - fm[worst]) / (2.0 * tau),
            jv[worst] / scale[worst]
        );
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        jacobian_check("p1", 0.3, false);
        jacobian_check("p1", 0.0, true);
        jacobian_check("blp_p2", 0.4, false);
        jacobian_check("blp_p2", 0.0, true);
        jacobian_check("p2", 0.2, false);
    }

    #[test]
    fn rejects_t_beyond_r() {
        let pr = problem(&catalog::blp_p2());
        let win = GridWindow::new(vec![0.0, 0.0], 20.0, 33).unwrap();
        assert!(matches!(
            solve_t(&pr, 0.9, &win, None, &SolverOptions::default()),
            Err(SolverError::InvalidSchedule(_))
        ));
    }

    #[test]
    fn minimizer_near_edge_is_reported() {
        let pr = problem(&catalog::p1());
        // window that barely contains the minimizer at the origin
        let win = GridWindow::new(vec![9.9], 10.0, 65).unwrap();
        let r = solve_t(&pr, 0.5, &win, None, &SolverOptions::default());
        assert!(
            matches!(r, Err(SolverError::MinimizerAtBoundary { .. })),
            "{r:?}"
        );
    }
}
