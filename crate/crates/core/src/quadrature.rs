//! Quadrature rules for the half-line integrals of the semigroup calculus
//! and Gauss–Legendre rules for bounded intervals.

use serde::{Deserialize, Serialize};

/// Trapezoid rule in `s = ln t` on `[t_min, t_max]`.
///
/// Integrands of the form `f(t) t^{-3/2}` that decay exponentially at both
/// ends of the log axis are integrated to near machine precision by this
/// rule; what remains is the truncation at `t_min` and `t_max`, which the
/// callers estimate and compare against `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub nodes: usize,
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            t_min: 1e-20,
            t_max: 1e3,
            nodes: 400,
            tolerance: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn new(t_min: f64, t_max: f64, nodes: usize) -> Self {
        Self {
            t_min,
            t_max,
            nodes,
            ..Self::default()
        }
    }

    /// Nodes `t_i` and weights `w_i` with `sum w_i f(t_i) ~ int f(t) dt`.
    pub fn rule(&self) -> Vec<(f64, f64)> {
        assert!(self.t_min > 0.0 && self.t_max > self.t_min && self.nodes >= 2);
        let a = self.t_min.ln();
        let b = self.t_max.ln();
        let h = (b - a) / (self.nodes - 1) as f64;
        (0..self.nodes)
            .map(|i| {
                let t = (a + h * i as f64).exp();
                let end = i == 0 || i == self.nodes - 1;
                let w = if end { 0.5 * h * t } else { h * t };
                (t, w)
            })
            .collect()
    }

    pub(crate) fn is_valid(&self) -> bool {
        self.t_min > 0.0
            && self.t_max > self.t_min
            && self.nodes >= 2
            && self.t_min.is_finite()
            && self.t_max.is_finite()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on `[a, b]` split at the given interior
/// breakpoints.
pub fn composite_gauss(breaks: &[f64], order: usize) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(order);
    let mut out = Vec::with_capacity((breaks.len() - 1) * order);
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in gx.iter().zip(&gw) {
            out.push((mid + half * x, half * w));
        }
    }
    out
}
