//! Identities and a-priori quantities evaluated on converged states.

use rayon::prelude::*;

use super::{Discretization, Problem, SolutionState};
use crate::error::SolverError;
use crate::potential::{radial_tail_bound, translated_reference};

/// `(1/Vol) int Du0 exp(-w) dx + t/(1-t) P_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyIdentity {
    pub residual: f64,
    pub vector: Vec<f64>,
    /// Bound on the contribution from outside the window.
    pub tail_bound: f64,
    /// Slope used for the tail bound, measured on the inscribed sphere.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WangZhu {
    pub m_t: f64,
    /// `min (w - m_t) / |x - x_t|` over window-edge nodes.
    pub kappa_fit: f64,
    pub kappa_node: Vec<f64>,
    /// Smallest `C` with `w >= kappa_fit |x - x_t| - C` on the window.
    pub offset_fit: f64,
}

/// Energy functionals of `phi` and the two quadratic-form parts of `I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub i: f64,
    pub j: f64,
}

impl Energies {
    /// Distance by which `(n+1)J/n <= I <= (n+1)J` is violated (0 when it holds).
    pub fn sandwich_violation(&self, n: usize) -> f64 {
        let nf = n as f64;
        let lower = (nf + 1.0) * self.j / nf - self.i;
        let upper = self.i - (nf + 1.0) * self.j;
        lower.max(upper).max(0.0)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `w` at an arbitrary point: analytic `u0` plus interpolated `phi`.
pub fn w_at(problem: &Problem, state: &SolutionState, x: &[f64]) -> f64 {
    problem.reference.value(x) + state.t * state.window.interpolate(&state.phi, x)
}

pub fn key_identity_residual(
    problem: &Problem,
    state: &SolutionState,
) -> Result<KeyIdentity, SolverError> {
    let n = problem.dim();
    let d = Discretization::new(problem, state.window.clone())?;
    let win = &state.window;
    let t = state.t;
    let sums: Vec<f64> = (0..win.len())
        .into_par_iter()
        .fold(
            || vec![0.0; n],
            |mut acc, i| {
                let q = win.quadrature_weight(i) * (-(d.u0[i] + t * state.phi[i])).exp();
                for (a, g) in acc.iter_mut().zip(d.g0[i].iter()) {
                    *a += q * g;
                }
                acc
            },
        )
        .reduce(
            || vec![0.0; n],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    let factor = t / (1.0 - t);
    let vector: Vec<f64> = sums
        .iter()
        .zip(&problem.barycenter)
        .map(|(s, pc)| s / problem.volume + factor * pc)
        .collect();
    let residual = vector.iter().map(|v| v * v).sum::<f64>().sqrt();

    // Convexity along rays from x_t: beyond the inscribed sphere of radius r,
    // w >= m + kappa |x - x_t| with kappa the least slope on that sphere.
    let r = win.inner_radius(&state.x_t);
    let samples: Vec<Vec<f64>> = match n {
        1 => vec![vec![state.x_t[0] - r], vec![state.x_t[0] + r]],
        _ => (0..720)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 720.0;
                vec![state.x_t[0] + r * a.cos(), state.x_t[1] + r * a.sin()]
            })
            .collect(),
    };
    let kappa = samples
        .iter()
        .map(|x| (w_at(problem, state, x) - state.m_t) / r)
        .fold(f64::INFINITY, f64::min);
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(SolverError::TailNotCertified { kappa });
    }
    let rho = problem
        .reference
        .points()
        .iter()
        .map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let tail_bound = rho / problem.volume * (-state.m_t).exp() * radial_tail_bound(n, kappa, r);
    Ok(KeyIdentity {
        residual,
        vector,
        tail_bound,
        kappa,
    })
}

pub fn wang_zhu_diagnostics(
    problem: &Problem,
    state: &SolutionState,
) -> Result<WangZhu, SolverError> {
    let d = Discretization::new(problem, state.window.clone())?;
    let n = problem.dim();
    let w = d.w(&state.phi, state.t);
    let win = &state.window;
    let mut kappa_fit = f64::INFINITY;
    let mut kappa_node = Vec::new();
    for i in (0..win.len()).filter(|&i| win.is_edge(i)) {
        let x = win.node(i);
        let k = (w[i] - state.m_t) / distance(&x[..n], &state.x_t);
        if k < kappa_fit {
            kappa_fit = k;
            kappa_node = x[..n].to_vec();
        }
    }
    let offset_fit = (0..win.len())
        .map(|i| kappa_fit * distance(&win.node(i)[..n], &state.x_t) - w[i])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(WangZhu {
        m_t: state.m_t,
        kappa_fit,
        kappa_node,
        offset_fit,
    })
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(order: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(order);
    for k in 1..=order {
        // Newton iteration on P_order from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=order {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// `I(phi) = (1/Vol) int phi (det D^2 u0 - det D^2 u)` and
/// `J(phi) = int_0^1 I(s phi) / s ds` (16-point Gauss-Legendre in `s`).
pub fn energy_functionals(
    problem: &Problem,
    state: &SolutionState,
) -> Result<Energies, SolverError> {
    let d = Discretization::new(problem, state.window.clone())?;
    let win = &state.window;
    let n = problem.dim();
    let phi = &state.phi;
    let det = |a: [f64; 3]| {
        if n == 1 {
            a[0]
        } else {
            a[0] * a[2] - a[1] * a[1]
        }
    };
    let i_of = |s: f64| -> f64 {
        (0..win.len())
            .into_par_iter()
            .map(|i| {
                let h0 = d.h0[i];
                let b = d.stencil.hessian(phi, i);
                let a = [h0[0] + s * b[0], h0[1] + s * b[1], h0[2] + s * b[2]];
                win.quadrature_weight(i) * s * phi[i] * (det(h0) - det(a))
            })
            .sum::<f64>()
            / problem.volume
    };
    let i = i_of(1.0);
    let j = gauss_legendre_unit(16)
        .iter()
        .map(|&(s, w)| w * i_of(s) / s)
        .sum();
    Ok(Energies { i, j })
}

/// `H_t = t (sup(-psi) - n sup psi)` with `psi(y) = u(x_t + y) - u(x_t) - u0(y)`,
/// the sups taken over the window nodes.
pub fn harnack_diagnostic(problem: &Problem, state: &SolutionState) -> Result<f64, SolverError> {
    let n = problem.dim();
    let win = &state.window;
    let reference = &problem.reference;
    let u_xt = reference.value(&state.x_t) + win.interpolate(&state.phi, &state.x_t);
    let (sup, sup_neg) = (0..win.len())
        .into_par_iter()
        .map(|i| {
            let x = win.node(i);
            let y: Vec<f64> = x[..n].iter().zip(&state.x_t).map(|(a, b)| a - b).collect();
            let u = reference.value(&x[..n]) + state.phi[i];
            let psi = u - u_xt - reference.value(&y);
            (psi, -psi)
        })
        .reduce(
            || (f64::NEG_INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.max(b.0), a.1.max(b.1)),
        );
    Ok(state.t * (sup_neg - n as f64 * sup))
}

/// Weighted residual of the re-based equation
/// `det D^2 U = exp(-t U - (1-t) U~ - w(x_t))`, with `U = u(x_t + .) - u(x_t)`
/// and `U~` the re-based reference, evaluated on the same nodes.
pub fn transformed_residual(problem: &Problem, state: &SolutionState) -> Result<f64, SolverError> {
    let d = Discretization::new(problem, state.window.clone())?;
    let n = problem.dim();
    let win = &state.window;
    let t = state.t;
    let reference = &problem.reference;
    let u0_xt = reference.value(&state.x_t);
    let u_xt = u0_xt + win.interpolate(&state.phi, &state.x_t);
    let w_xt = t * u_xt + (1.0 - t) * u0_xt;
    let shifted = translated_reference(reference, &state.x_t);
    let eps = d.eps;
    let floor = d.log_rhs_floor();
    let rows: Vec<(f64, f64)> = (0..win.len())
        .into_par_iter()
        .map(|i| {
            let x = win.node(i);
            let y: Vec<f64> = x[..n].iter().zip(&state.x_t).map(|(a, b)| a - b).collect();
            let big_u = d.u0[i] + state.phi[i] - u_xt;
            let u_tilde = shifted.value(&y);
            let mut a = d.hessian_u(&state.phi, i);
            a[0] += eps;
            if n == 2 {
                a[2] += eps;
            }
            let det = if n == 1 {
                a[0]
            } else {
                a[0] * a[2] - a[1] * a[1]
            };
            let expo = -t * big_u - (1.0 - t) * u_tilde - w_xt;
            let hi = expo.max(floor);
            let log_rhs = hi + ((expo.min(floor) - hi).exp()).ln_1p();
            (det.ln() - log_rhs + state.gauge_shift, log_rhs)
        })
        .collect();
    let top = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(rows
        .iter()
        .map(|(g, l)| (l - top).exp() * g.abs())
        .fold(0.0, f64::max))
}

/// Largest violation of `<v_r, Du> >= -1` at nodes off the window edge.
pub fn gradient_image_violation(
    problem: &Problem,
    state: &SolutionState,
) -> Result<f64, SolverError> {
    let d = Discretization::new(problem, state.window.clone())?;
    let n = problem.dim();
    let win = &state.window;
    Ok((0..win.len())
        .into_par_iter()
        .filter(|&i| !win.is_edge(i))
        .map(|i| {
            let gp = d.stencil.gradient(&state.phi, i);
            let g = [d.g0[i][0] + gp[0], d.g0[i][1] + gp[1]];
            problem
                .facets
                .iter()
                .map(|v| {
                    let lam: f64 = (0..n).map(|k| v[k] * g[k]).sum();
                    -1.0 - lam
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre_unit(16);
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let m: f64 = rule.iter().map(|(s, w)| w * s.powi(29)).sum();
        assert!((m - 1.0 / 30.0).abs() < 1e-14);
    }

    #[test]
    fn sandwich_violation_measures_distance() {
        let e = Energies { i: 1.0, j: 0.5 };
        assert_eq!(e.sandwich_violation(1), 0.0);
        let e = Energies { i: 2.0, j: 0.5 };
        assert!((e.sandwich_violation(2) - 0.5).abs() < 1e-15);
    }
}
