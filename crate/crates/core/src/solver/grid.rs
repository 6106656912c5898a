//! Uniform grid windows and the finite-difference stencils used on them.
//!
//! Nodes are flattened with the last axis fastest (`idx = i * M + j` in 2-D).
//! Zero normal derivative at the window edge is imposed by reflecting
//! out-of-range indices (`-1 -> 1`, `M -> M - 2`) independently per axis.

use crate::error::SolverError;
use crate::polytope::LatticePolytope;
use crate::potential::ReferencePotential;

/// Axis-aligned square window `center + [-L, L]^n` with `M` nodes per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWindow {
    center: Vec<f64>,
    half_width: f64,
    m: usize,
}

impl GridWindow {
    pub fn new(center: Vec<f64>, half_width: f64, m: usize) -> Result<Self, SolverError> {
        let n = center.len();
        if !(1..=2).contains(&n) {
            return Err(SolverError::UnsupportedDimension(n));
        }
        if m < 33 || m % 2 == 0 {
            return Err(SolverError::InvalidWindow(format!(
                "resolution must be odd and at least 33 (got {m})"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(SolverError::InvalidWindow(format!(
                "half-width must be positive (got {half_width})"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(SolverError::InvalidWindow("center is not finite".into()));
        }
        Ok(GridWindow {
            center,
            half_width,
            m,
        })
    }

    /// Window centred at the origin whose edge keeps `exp(-u0)` below about 1e-12.
    pub fn default_for(reference: &ReferencePotential, m: usize) -> Result<Self, SolverError> {
        let n = reference.dim();
        let l = default_half_width(reference);
        GridWindow::new(vec![0.0; n], l, m)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.m - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis indices of a flattened node.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim() {
            1 => [idx, 0],
            _ => [idx / self.m, idx % self.m],
        }
    }

    pub fn flat(&self, ij: [usize; 2]) -> usize {
        match self.dim() {
            1 => ij[0],
            _ => ij[0] * self.m + ij[1],
        }
    }

    pub fn center_index(&self) -> usize {
        let c = (self.m - 1) / 2;
        self.flat([c, c])
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.center[axis] - self.half_width + self.step() * i as f64
    }

    /// Coordinates of a node; unused trailing entries are zero.
    pub fn node(&self, idx: usize) -> [f64; 2] {
        let ij = self.multi_index(idx);
        let mut x = [0.0; 2];
        for (d, xd) in x.iter_mut().enumerate().take(self.dim()) {
            *xd = self.axis_coord(d, ij[d]);
        }
        x
    }

    /// Smallest number of steps from the node to the window edge.
    pub fn steps_to_edge(&self, idx: usize) -> usize {
        let ij = self.multi_index(idx);
        (0..self.dim())
            .map(|d| ij[d].min(self.m - 1 - ij[d]))
            .min()
            .unwrap()
    }

    pub fn is_edge(&self, idx: usize) -> bool {
        self.steps_to_edge(idx) == 0
    }

    /// Trapezoid weight of a node, including the cell volume `h^n`.
    pub fn quadrature_weight(&self, idx: usize) -> f64 {
        let ij = self.multi_index(idx);
        let mut w = self.step().powi(self.dim() as i32);
        for &i in ij.iter().take(self.dim()) {
            if i == 0 || i == self.m - 1 {
                w *= 0.5;
            }
        }
        w
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(a, c)| (a - c).abs() <= self.half_width)
    }

    /// Distance from `x` to the window edge (inscribed-ball radius about `x`).
    pub fn inner_radius(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| self.half_width - (a - c).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Multilinear interpolation of nodal values at `x`, clamped to the window.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let h = self.step();
        let n = self.dim();
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for d in 0..n {
            let s = ((x[d] - self.center[d] + self.half_width) / h).clamp(0.0, (self.m - 1) as f64);
            let i = (s.floor() as usize).min(self.m - 2);
            base[d] = i;
            frac[d] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut ij = base;
            let mut w = 1.0;
            for d in 0..n {
                if corner >> d & 1 == 1 {
                    ij[d] += 1;
                    w *= frac[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                acc += w * values[self.flat(ij)];
            }
        }
        acc
    }

    /// Same window moved so its centre is the node nearest to `x`.
    pub fn snapped_to(&self, x: &[f64]) -> GridWindow {
        let h = self.step();
        let center = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| c + ((a - c) / h).round() * h)
            .collect();
        GridWindow {
            center,
            half_width: self.half_width,
            m: self.m,
        }
    }

    /// Grid offset (in whole steps) of another window with the same spacing.
    pub fn offset_steps(&self, other: &GridWindow) -> Vec<i64> {
        let h = self.step();
        other
            .center
            .iter()
            .zip(&self.center)
            .map(|(b, a)| ((b - a) / h).round() as i64)
            .collect()
    }
}

/// `L = (log 1e12 + log N) / kappa`, with `kappa` the minimum of the support
/// function over the unit sup-norm sphere.
pub fn default_half_width(reference: &ReferencePotential) -> f64 {
    let n_pts = reference.points().len() as f64;
    (1e12f64.ln() + n_pts.ln()) / reference.kappa_sup_norm()
}

/// Sign `s` of the diagonal direction `(1, s)` used by the 2-D mixed stencil.
///
/// Picks the diagonal that more facet normals are parallel to, so that the
/// lattice symmetries of the usual test polytopes preserve the stencil.
pub fn diagonal_sign(poly: &LatticePolytope) -> i64 {
    if poly.dim() != 2 {
        return 1;
    }
    let along = |s: i64| {
        poly.facets()
            .iter()
            .filter(|v| v[0] != 0 && v[1] == s * v[0])
            .count()
    };
    if along(-1) > along(1) {
        -1
    } else {
        1
    }
}

/// Neighbour table for the second differences along each stencil direction.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub dim: usize,
    pub sign: i64,
    /// `neighbours[idx * dirs + k] = (plus, minus)` along direction `k`.
    neighbours: Vec<(usize, usize)>,
    dirs: usize,
    inv_h2: f64,
    inv_2h: f64,
}

impl Stencil {
    pub fn new(window: &GridWindow, sign: i64) -> Stencil {
        let n = window.dim();
        let m = window.resolution() as i64;
        let reflect = |i: i64| {
            if i < 0 {
                -i
            } else if i >= m {
                2 * (m - 1) - i
            } else {
                i
            }
        };
        let dir_list: Vec<[i64; 2]> = match n {
            1 => vec![[1, 0]],
            _ => vec![[1, 0], [0, 1], [1, sign]],
        };
        let mut neighbours = Vec::with_capacity(window.len() * dir_list.len());
        for idx in 0..window.len() {
            let ij = window.multi_index(idx);
            for d in &dir_list {
                let mv = |sgn: i64| {
                    let mut out = [0usize; 2];
                    for a in 0..n {
                        out[a] = reflect(ij[a] as i64 + sgn * d[a]) as usize;
                    }
                    window.flat(out)
                };
                neighbours.push((mv(1), mv(-1)));
            }
        }
        let h = window.step();
        Stencil {
            dim: n,
            sign,
            neighbours,
            dirs: dir_list.len(),
            inv_h2: 1.0 / (h * h),
            inv_2h: 1.0 / (2.0 * h),
        }
    }

    pub fn directions(&self) -> usize {
        self.dirs
    }

    pub fn neighbours(&self, idx: usize, k: usize) -> (usize, usize) {
        self.neighbours[idx * self.dirs + k]
    }

    pub fn inv_h2(&self) -> f64 {
        self.inv_h2
    }

    fn second_differences(&self, f: &[f64], idx: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate().take(self.dirs) {
            let (p, q) = self.neighbours(idx, k);
            *o = (f[p] - 2.0 * f[idx] + f[q]) * self.inv_h2;
        }
        out
    }

    /// Discrete Hessian `[H11, H12, H22]` (1-D: `[H11, 0, 0]`).
    pub fn hessian(&self, f: &[f64], idx: usize) -> [f64; 3] {
        let d = self.second_differences(f, idx);
        if self.dim == 1 {
            return [d[0], 0.0, 0.0];
        }
        let s = self.sign as f64;
        [d[0], 0.5 * s * (d[2] - d[0] - d[1]), d[1]]
    }

    /// Central-difference gradient; vanishes across the window edge.
    pub fn gradient(&self, f: &[f64], idx: usize) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (a, ga) in g.iter_mut().enumerate().take(self.dim) {
            let (p, q) = self.neighbours(idx, a);
            *ga = (f[p] - f[q]) * self.inv_2h;
        }
        g
    }
}
