//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

/// `u0` of the segment `[-1, 1]` in closed form: `log(2 cosh x) + log(pi/4)`.
fn p1_u0(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() + (std::f64::consts::PI / 4.0).ln()
}

fn p1_u0_second(x: f64) -> f64 {
    1.0 / x.cosh().powi(2)
}

/// Integrates `phi'' = exp(-u0 - t phi) - u0''` from `x = 0` with
/// `phi(0) = a`, `phi'(0) = 0` by RK4. Returns `phi` at `x = k h` for
/// `k = 0..=nodes` and the mass `int_0^X exp(-u0 - t phi)` with `X = span`.
fn p1_shoot(t: f64, a: f64, h: f64, nodes: usize, span: f64, substeps: usize) -> (Vec<f64>, f64) {
    let rhs = |x: f64, y: [f64; 3]| -> [f64; 3] {
        let e = (-p1_u0(x) - t * y[0]).exp();
        [y[1], e - p1_u0_second(x), e]
    };
    let total = ((span / h).ceil() as usize).max(nodes);
    let dx = h / substeps as f64;
    let mut y = [a, 0.0, 0.0];
    let mut out = vec![a];
    let mut x = 0.0;
    for k in 1..=total {
        for _ in 0..substeps {
            let k1 = rhs(x, y);
            let mid = |y: [f64; 3], k: [f64; 3], s: f64| {
                [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]]
            };
            let k2 = rhs(x + dx / 2.0, mid(y, k1, dx / 2.0));
            let k3 = rhs(x + dx / 2.0, mid(y, k2, dx / 2.0));
            let k4 = rhs(x + dx, mid(y, k3, dx));
            for j in 0..3 {
                y[j] += dx / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            x += dx;
        }
        if k <= nodes {
            out.push(y[0]);
        }
    }
    (out, y[2])
}

/// Even solution `phi` of the P^1 equation at `t`, sampled at `x = k h` for
/// `k = 0..=nodes`. For `t > 0` the value `phi(0)` is found by bisection on
/// the half-line mass `int_0^inf exp(-u0 - t phi) = 1` (half of `Vol = 2`);
/// at `t = 0` the solution is only defined up to a constant and `phi(0) = 0`.
pub fn p1_shooting_oracle(t: f64, h: f64, nodes: usize) -> Vec<f64> {
    let span = 40.0;
    let substeps = ((h / 2e-3).ceil() as usize).max(1);
    if t == 0.0 {
        return p1_shoot(0.0, 0.0, h, nodes, span, substeps).0;
    }
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (_, mass) = p1_shoot(t, mid, h, 0, span, substeps);
        // mass decreases with phi(0)
        if mass > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    p1_shoot(t, 0.5 * (lo + hi), h, nodes, span, substeps).0
}
