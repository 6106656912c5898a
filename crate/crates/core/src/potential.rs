//! The reference potential `u0(x) = log sum_a exp<p_a, x> + C` over the
//! polytope vertices, and weighted variants of the same log-sum-exp form.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::error::PotentialError;
use crate::polytope::LatticePolytope;
use crate::rational::{to_f64, Rational};

/// `x -> log sum_a w_a exp<p_a, x>`, evaluated with a max shift.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLogSumExp {
    dim: usize,
    points: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
}

/// Value, gradient and Hessian (row-major) at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

/// Softmax weights `b_a(x)`; positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxWeights(pub Vec<f64>);

impl SoftmaxWeights {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `sum_a b_a p_a`.
    pub fn barycenter(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let n = points.first().map_or(0, Vec::len);
        let mut g = vec![0.0; n];
        for (b, p) in self.0.iter().zip(points) {
            for k in 0..n {
                g[k] += b * p[k];
            }
        }
        g
    }
}

impl WeightedLogSumExp {
    pub fn new(points: Vec<Vec<f64>>, log_weights: Vec<f64>) -> Self {
        assert_eq!(points.len(), log_weights.len());
        let dim = points.first().map_or(0, Vec::len);
        WeightedLogSumExp {
            dim,
            points,
            log_weights,
        }
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let n = points.len();
        Self::new(points, vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn exponents(&self, x: &[f64]) -> Vec<f64> {
        self.points
            .iter()
            .zip(&self.log_weights)
            .map(|(p, lw)| lw + dot(p, x))
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let e = self.exponents(x);
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + e.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }

    pub fn weights(&self, x: &[f64]) -> SoftmaxWeights {
        let e = self.exponents(x);
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        SoftmaxWeights(w)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.weights(x).barycenter(&self.points)
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        self.jet(x).hessian
    }

    pub fn jet(&self, x: &[f64]) -> Jet {
        let n = self.dim;
        let e = self.exponents(x);
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        for (b, p) in w.iter().zip(&self.points) {
            for i in 0..n {
                g[i] += b * p[i];
            }
        }
        // centred second moment avoids the cancellation in E[pp^T] - gg^T
        for (b, p) in w.iter().zip(&self.points) {
            for i in 0..n {
                let di = p[i] - g[i];
                for j in 0..n {
                    h[i * n + j] += b * di * (p[j] - g[j]);
                }
            }
        }
        Jet {
            value: m + s.ln(),
            gradient: g,
            hessian: h,
        }
    }

    /// The same function re-based at `a`: `x -> f(a + x) - f(a)`.
    pub fn translated(&self, a: &[f64]) -> WeightedLogSumExp {
        let b = self.weights(a);
        WeightedLogSumExp::new(self.points.clone(), b.0.iter().map(|w| w.ln()).collect())
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }
}

/// `u0` with its normalization constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePotential {
    lse: WeightedLogSumExp,
    c: f64,
    c_error: f64,
    volume: f64,
    /// `min_r 1/|v_r|`: the support function satisfies `h(x) >= kappa |x|`.
    kappa: f64,
}

/// Result of the normalization quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub c: f64,
    /// Certified absolute error bound on `c` (quadrature difference plus tail).
    pub error: f64,
    pub integral: f64,
    pub half_width: f64,
    pub step: f64,
    pub tail_bound: f64,
}

pub const TAIL_TOLERANCE: f64 = 1e-10;
pub const QUADRATURE_TOLERANCE: f64 = 1e-8;

impl ReferencePotential {
    /// Builds `u0` and computes `C` by quadrature (dimension <= 3).
    pub fn new(poly: &LatticePolytope) -> Result<Self, PotentialError> {
        let mut r = Self::unnormalized(poly);
        let norm = normalization_constant(poly)?;
        r.c = norm.c;
        r.c_error = norm.error;
        Ok(r)
    }

    /// `u0` with `C = 0`; used when only derivatives matter.
    pub fn unnormalized(poly: &LatticePolytope) -> Self {
        let points = poly
            .vertices()
            .iter()
            .map(|v| v.iter().map(|&x| x as f64).collect())
            .collect();
        ReferencePotential {
            lse: WeightedLogSumExp::uniform(points),
            c: 0.0,
            c_error: 0.0,
            volume: to_f64(&poly.volume()),
            kappa: facet_kappa(poly),
        }
    }

    pub fn dim(&self) -> usize {
        self.lse.dim()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        self.lse.points()
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn constant_error(&self) -> f64 {
        self.c_error
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.lse.value(x) + self.c
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.lse.gradient(x)
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        self.lse.hessian(x)
    }

    pub fn weights(&self, x: &[f64]) -> SoftmaxWeights {
        self.lse.weights(x)
    }

    pub fn jet(&self, x: &[f64]) -> Jet {
        let mut j = self.lse.jet(x);
        j.value += self.c;
        j
    }

    /// Support function `max_a <p_a, x>`.
    pub fn support(&self, x: &[f64]) -> f64 {
        self.points()
            .iter()
            .map(|p| dot(p, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Minimum of the support function over the unit sup-norm sphere,
    /// sampled on a fine grid of its faces.
    pub fn kappa_sup_norm(&self) -> f64 {
        let n = self.dim();
        let k = match n {
            1 => 1,
            2 => 2001,
            _ => 201,
        };
        let mut best = f64::INFINITY;
        for face in 0..n {
            for sign in [-1.0, 1.0] {
                let mut idx = vec![0usize; n.saturating_sub(1)];
                loop {
                    let mut x = vec![0.0; n];
                    let mut c = 0;
                    for (d, xd) in x.iter_mut().enumerate() {
                        if d == face {
                            *xd = sign;
                        } else {
                            *xd = -1.0 + 2.0 * idx[c] as f64 / (k.max(2) - 1) as f64;
                            c += 1;
                        }
                    }
                    best = best.min(self.support(&x));
                    // odometer over the remaining coordinates
                    let mut d = 0;
                    while d < idx.len() {
                        idx[d] += 1;
                        if idx[d] < k {
                            break;
                        }
                        idx[d] = 0;
                        d += 1;
                    }
                    if d == idx.len() {
                        break;
                    }
                }
            }
        }
        best
    }

    pub fn log_sum_exp(&self) -> &WeightedLogSumExp {
        &self.lse
    }
}

/// `u0` re-based at `x_t`: `U(x) = log sum_a b_a(x_t) exp<p_a, x>`.
pub fn translated_reference(reference: &ReferencePotential, x_t: &[f64]) -> WeightedLogSumExp {
    reference.log_sum_exp().translated(x_t)
}

/// Limit potential `log sum' b_a exp<p_a, x>` over the vertices of a face.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitReference {
    pub face_vertices: Vec<Vec<i64>>,
    pub weights: Vec<f64>,
    lse: WeightedLogSumExp,
}

impl LimitReference {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.lse.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.lse.gradient(x)
    }
}

pub fn limit_reference(
    face_vertices: &[Vec<i64>],
    b: &[f64],
) -> Result<LimitReference, PotentialError> {
    if face_vertices.is_empty() || face_vertices.len() != b.len() {
        return Err(PotentialError::DegenerateWeights(format!(
            "{} weights for {} face vertices",
            b.len(),
            face_vertices.len()
        )));
    }
    if let Some(w) = b.iter().find(|w| w.is_nan() || **w <= 0.0) {
        return Err(PotentialError::DegenerateWeights(format!(
            "weight {w} is not positive"
        )));
    }
    let s: f64 = b.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(PotentialError::DegenerateWeights(format!(
            "weights sum to {s}"
        )));
    }
    let points = face_vertices
        .iter()
        .map(|v| v.iter().map(|&x| x as f64).collect())
        .collect();
    Ok(LimitReference {
        face_vertices: face_vertices.to_vec(),
        weights: b.to_vec(),
        lse: WeightedLogSumExp::new(points, b.iter().map(|w| w.ln()).collect()),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn facet_kappa(poly: &LatticePolytope) -> f64 {
    poly.facets()
        .iter()
        .map(|v| 1.0 / v.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Bound on `int_{|x| > L} exp(-kappa |x|) dx` in dimension `n <= 3`.
pub fn radial_tail_bound(n: usize, kappa: f64, l: f64) -> f64 {
    let e = (-kappa * l).exp();
    match n {
        1 => 2.0 * e / kappa,
        2 => 2.0 * std::f64::consts::PI * e * (l / kappa + 1.0 / (kappa * kappa)),
        3 => {
            4.0 * std::f64::consts::PI
                * e
                * (l * l / kappa + 2.0 * l / (kappa * kappa) + 2.0 / kappa.powi(3))
        }
        _ => f64::INFINITY,
    }
}

/// Tensor trapezoid rule for `f` on `[-l, l]^n` with `m` nodes per axis.
pub fn trapezoid<F>(n: usize, l: f64, m: usize, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let h = 2.0 * l / (m - 1) as f64;
    let wt = |i: usize| if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
    let total: usize = m.pow(n as u32);
    let sum: f64 = (0..total)
        .into_par_iter()
        .map(|mut k| {
            let mut x = [0.0; 3];
            let mut w = 1.0;
            for d in (0..n).rev() {
                let i = k % m;
                k /= m;
                x[d] = -l + h * i as f64;
                w *= wt(i);
            }
            w * f(&x[..n])
        })
        .sum();
    sum * h.powi(n as i32)
}

/// `C = log int exp(-log sum exp<p,x>) dx - log Vol`.
pub fn normalization_constant(poly: &LatticePolytope) -> Result<Normalization, PotentialError> {
    let n = poly.dim();
    if n > 3 {
        return Err(PotentialError::UnsupportedDimension(n));
    }
    let reference = ReferencePotential::unnormalized(poly);
    let kappa = reference.kappa();
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(PotentialError::TailBoundFailure(format!("kappa = {kappa}")));
    }
    let mut l = 1.0;
    while radial_tail_bound(n, kappa, l) >= TAIL_TOLERANCE {
        l += 1.0;
        if l > 1e4 {
            return Err(PotentialError::TailBoundFailure(
                "no finite half-width".into(),
            ));
        }
    }
    let tail = radial_tail_bound(n, kappa, l);
    let lse = reference.log_sum_exp();
    let f = |x: &[f64]| (-lse.value(x)).exp();

    let mut m = (2.0 * l).ceil() as usize + 1;
    let mut prev = trapezoid(n, l, m, f);
    loop {
        let next_m = 2 * m - 1;
        let next = trapezoid(n, l, next_m, f);
        let diff = (next - prev).abs();
        m = next_m;
        prev = next;
        if diff < QUADRATURE_TOLERANCE {
            let integral = next;
            let volume = to_f64(&poly.volume());
            let err = (diff + tail) / integral;
            return Ok(Normalization {
                c: integral.ln() - volume.ln(),
                error: err,
                integral,
                half_width: l,
                step: 2.0 * l / (m - 1) as f64,
                tail_bound: tail,
            });
        }
        if m > 20_000 {
            return Err(PotentialError::TailBoundFailure(
                "quadrature did not settle".into(),
            ));
        }
    }
}

/// One line of the potential invariant suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Randomized checks of the softmax, gradient, Hessian, support-function and
/// convexity identities, plus the normalization round trip when `n <= 3`.
pub fn check_potential(
    poly: &LatticePolytope,
    samples: usize,
    seed: u64,
) -> Result<Vec<CheckResult>, PotentialError> {
    let n = poly.dim();
    let reference = if n <= 3 {
        ReferencePotential::new(poly)?
    } else {
        ReferencePotential::unnormalized(poly)
    };
    let mut rng = StdRng::seed_from_u64(seed);
    let mut draw = |s: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-s..s)).collect() };
    let npts = reference.points().len() as f64;

    let (mut sum_err, mut bary_err, mut fd_err, mut min_eig, mut lse_gap, mut convex) =
        (0.0f64, 0.0f64, 0.0f64, f64::INFINITY, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let x = draw(5.0);
        let b = reference.weights(&x);
        sum_err = sum_err.max((b.sum() - 1.0).abs());
        let g = reference.gradient(&x);
        let bg = b.barycenter(reference.points());
        bary_err = bary_err.max(max_abs_diff(&g, &bg));
        fd_err = fd_err.max(max_abs_diff(&g, &fd_gradient(&reference, &x, 1e-5)));
        min_eig = min_eig.min(min_eigenvalue(&reference.hessian(&x), n));
        let gap = reference.value(&x) - reference.constant() - reference.support(&x);
        // distance outside [0, log N]
        lse_gap = lse_gap.max((-gap).max(gap - npts.ln()).max(0.0));
        let y = draw(5.0);
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let excess = reference.value(&mid) - 0.5 * (reference.value(&x) + reference.value(&y));
        convex = convex.max(excess);
    }
    let mut out = vec![
        CheckResult::new("softmax weights sum to 1", sum_err, 1e-12),
        CheckResult::new("gradient equals softmax barycenter", bary_err, 1e-12),
        CheckResult::new("gradient vs central differences", fd_err, 1e-8),
        CheckResult::new("Hessian positive definite (-min eigenvalue)", -min_eig, 0.0),
        CheckResult::new("0 <= u0 - C - support <= log N", lse_gap, 1e-12),
        CheckResult::new("midpoint convexity excess", convex, 1e-12),
    ];
    // a nonpositive eigenvalue fails; report it as a positive "worst" value
    out[3].passed = min_eig > 0.0;
    if n <= 3 {
        let norm = normalization_constant(poly)?;
        // re-integrate exp(-u0) on a finer grid than the one that fixed C
        let m = ((2.0 * norm.half_width / norm.step).round() as usize) * 2 + 1;
        let total = trapezoid(n, norm.half_width, m, |x| (-reference.value(x)).exp());
        out.push(CheckResult::new(
            "integral of exp(-u0) equals Vol",
            (total - reference.volume()).abs(),
            1e-6,
        ));
    }
    Ok(out)
}

impl CheckResult {
    fn new(name: &'static str, worst: f64, tolerance: f64) -> Self {
        CheckResult {
            name,
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Central-difference gradient of `u0`.
pub fn fd_gradient(reference: &ReferencePotential, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += step;
            xm[k] -= step;
            (reference.value(&xp) - reference.value(&xm)) / (2.0 * step)
        })
        .collect()
}

/// Smallest eigenvalue of a small symmetric matrix.
pub fn min_eigenvalue(h: &[f64], n: usize) -> f64 {
    match n {
        1 => h[0],
        2 => {
            let (a, b, d) = (h[0], h[1], h[3]);
            let mean = 0.5 * (a + d);
            let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            mean - r
        }
        _ => {
            let m = faer::Mat::<f64>::from_fn(n, n, |i, j| h[i * n + j]);
            m.self_adjoint_eigenvalues(faer::Side::Lower)
                .map(|ev| ev.into_iter().fold(f64::INFINITY, f64::min))
                .unwrap_or(f64::NAN)
        }
    }
}

/// Exact volume as `f64`, for callers holding only a rational.
pub fn volume_f64(v: &Rational) -> f64 {
    to_f64(v)
}
