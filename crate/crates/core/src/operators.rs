//! The fractional ε-Neumann Laplacian and its semigroup calculus.
//!
//! Every operator here is diagonal on the cosine basis. The spectral route
//! multiplies coefficients by `(eps lambda_k)^s`; the semigroup route
//! integrates the heat semigroup against `t^{-3/2}` instead, and the kernel
//! functions evaluate the Neumann heat and Poisson kernels pointwise by
//! truncated series (with tail bounds) or by Bochner subordination.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::domain::{
    cosine_mode_1d, flat_index, for_each_lane, increment, NodalField, RectDomain, SpectralField,
};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

/// Relative size below which a series term is dropped.
const SERIES_CUTOFF: f64 = 1e-17;
const MAX_SERIES_TERMS: usize = 1_000_000;

/// A pointwise kernel evaluation with its truncation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSample {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// Time `t` for the heat kernel, height `y` for the Poisson kernel.
    pub param: f64,
    pub value: f64,
    pub tail_bound: f64,
}

/// How the Poisson kernel is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoissonRoute {
    /// `sum_k e^{-y sqrt(lambda_k)} phi_k(x) phi_k(z)`.
    Direct,
    /// `y/(2 sqrt(pi)) int_0^inf e^{-y^2/4t} W_t(x,z) t^{-3/2} dt`.
    Subordinated,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "epsilon = {eps} must be positive"
        )))
    }
}

/// `(-eps Delta_N)^s u`: multiplies `u_k` by `(eps lambda_k)^s`.
pub fn frac_apply(u: &SpectralField, eps: f64, s: f64) -> Result<SpectralField> {
    check_eps(eps)?;
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "power s = {s} must lie in (0, 1]"
        )));
    }
    Ok(u.map_modes(|lam, c| {
        if lam == 0.0 {
            0.0
        } else {
            (eps * lam).powf(s) * c
        }
    }))
}

/// Per-mode multiplier of the semigroup route at rate `a = eps lambda`.
///
/// Uses `(1 - e^{-at}) = (1 - e^{-t}) + (e^{-t} - e^{-at})`; the first part
/// integrates against `t^{-3/2}` to `2 sqrt(pi)` exactly, the second decays
/// exponentially at both ends of the log axis and is integrated by `rule`.
fn semigroup_multiplier(a: f64, rule: &[(f64, f64)]) -> f64 {
    let integral: f64 = rule
        .iter()
        .map(|&(t, w)| w * ((-t).exp() - (-a * t).exp()) * t.powf(-1.5))
        .sum();
    1.0 + integral / (2.0 * PI.sqrt())
}

/// Estimated truncation error of the semigroup route, relative to
/// `(eps lambda)^{1/2}`, for the worst mode in `rates`.
fn semigroup_truncation(rates: impl Iterator<Item = f64>, quad: &QuadratureSpec) -> f64 {
    let norm = 1.0 / (2.0 * PI.sqrt());
    rates
        .map(|a| {
            let head = 2.0 * (a - 1.0).abs() * quad.t_min.sqrt();
            let tail = 2.0 * (-(a.min(1.0)) * quad.t_max).exp() / quad.t_max.sqrt();
            norm * (head + tail) / a.sqrt()
        })
        .fold(0.0, f64::max)
}

/// `(-eps Delta_N)^{1/2} u` through the heat semigroup,
/// `(1/(2 sqrt(pi))) int_0^inf (u - e^{t eps Delta_N} u) t^{-3/2} dt`,
/// integrated coefficient by coefficient.
///
/// The mean contributes nothing to the integrand and maps to zero.
pub fn semigroup_route_frac_half(
    u: &SpectralField,
    eps: f64,
    quad: &QuadratureSpec,
) -> Result<SpectralField> {
    check_eps(eps)?;
    if !quad.is_valid() {
        return Err(Error::InvalidParameter("malformed quadrature".into()));
    }
    let active = u
        .domain()
        .eigenvalues()
        .iter()
        .zip(u.coeffs())
        .filter(|(&lam, &c)| lam > 0.0 && c != 0.0)
        .map(|(&lam, _)| eps * lam);
    let estimate = semigroup_truncation(active, quad);
    if estimate > quad.tolerance {
        return Err(Error::Quadrature {
            estimate,
            tolerance: quad.tolerance,
        });
    }
    let rule = quad.rule();
    Ok(u.map_modes(|lam, c| {
        if lam == 0.0 || c == 0.0 {
            0.0
        } else {
            semigroup_multiplier(eps * lam, &rule) * c
        }
    }))
}

/// `e^{t Delta_N} u`.
pub fn heat_apply(u: &SpectralField, t: f64) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time t = {t} must be nonnegative"
        )));
    }
    Ok(u.map_modes(|lam, c| (-t * lam).exp() * c))
}

/// `e^{-y (-eps Delta_N)^{1/2}} u`.
pub fn poisson_apply(u: &SpectralField, eps: f64, y: f64) -> Result<SpectralField> {
    check_eps(eps)?;
    if !(y >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "height y = {y} must be nonnegative"
        )));
    }
    Ok(u.map_modes(|lam, c| (-y * (eps * lam).sqrt()).exp() * c))
}

/// One-dimensional Neumann heat kernel on `(0, l)` and its tail bound.
fn heat_kernel_1d(t: f64, x: f64, z: f64, l: f64) -> Result<(f64, f64)> {
    // Canonical argument order keeps W_t(x, z) == W_t(z, x) bitwise.
    let (x, z) = if x <= z { (x, z) } else { (z, x) };
    let c = (PI / l).powi(2);
    let lead = 1.0 / l;
    let mut sum = lead;
    let mut k = 1usize;
    loop {
        let decay = (-t * c * (k * k) as f64).exp();
        if 2.0 / l * decay < SERIES_CUTOFF * lead {
            // Geometric bound on the remaining terms.
            let ratio = (-t * c * (2 * k + 1) as f64).exp();
            let tail = 2.0 / l * decay / (1.0 - ratio);
            return Ok((sum, tail));
        }
        let kf = k as f64;
        sum += 2.0 / l * decay * (PI * kf * x / l).cos() * (PI * kf * z / l).cos();
        k += 1;
        if k > MAX_SERIES_TERMS {
            return Err(Error::Truncation {
                tail: 2.0 / l * decay,
                tolerance: SERIES_CUTOFF * lead,
            });
        }
    }
}

fn product_with_tails(parts: &[(f64, f64)]) -> (f64, f64) {
    let value: f64 = parts.iter().map(|p| p.0).product();
    let upper: f64 = parts.iter().map(|p| p.0.abs() + p.1).product();
    let lower: f64 = parts.iter().map(|p| p.0.abs()).product();
    (value, upper - lower)
}

/// Neumann heat kernel `W_t(x, z) = sum_k e^{-t lambda_k} phi_k(x) phi_k(z)`.
///
/// On a box the kernel factors over axes; each axis series is extended
/// until its terms fall below `1e-17` of the leading term. Fails when the
/// reported tail exceeds `tolerance`.
pub fn heat_kernel(
    domain: &RectDomain,
    t: f64,
    x: &[f64],
    z: &[f64],
    tolerance: f64,
) -> Result<KernelSample> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time t = {t} must be positive"
        )));
    }
    let parts = (0..domain.dim())
        .map(|i| heat_kernel_1d(t, x[i], z[i], domain.lengths()[i]))
        .collect::<Result<Vec<_>>>()?;
    let (value, tail_bound) = product_with_tails(&parts);
    if tail_bound > tolerance {
        return Err(Error::Truncation {
            tail: tail_bound,
            tolerance,
        });
    }
    Ok(KernelSample {
        x: x.to_vec(),
        z: z.to_vec(),
        param: t,
        value,
        tail_bound,
    })
}

/// `z -> W_t(x, z)` sampled at every grid node.
pub fn heat_kernel_row(domain: &Arc<RectDomain>, t: f64, x: &[f64]) -> Result<NodalField> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time t = {t} must be positive"
        )));
    }
    let axes = (0..domain.dim())
        .map(|i| {
            (0..domain.grid()[i])
                .map(|j| {
                    heat_kernel_1d(t, x[i], domain.node_coord(i, j), domain.lengths()[i])
                        .map(|v| v.0)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(domain.num_nodes());
    let mut idx = vec![0usize; domain.dim()];
    for _ in 0..domain.num_nodes() {
        values.push(idx.iter().enumerate().map(|(i, &j)| axes[i][j]).product());
        increment(&mut idx, domain.grid());
    }
    NodalField::new(domain.clone(), values)
}

/// Radius `R` in `sqrt(lambda)` beyond which the Poisson series tail is
/// below `target`, together with that bound.
fn poisson_radius(domain: &RectDomain, y: f64, target: f64) -> (f64, f64) {
    let n = domain.dim();
    let lengths = domain.lengths();
    let amp = 2f64.powi(n as i32) / domain.volume();
    // Lattice count with sqrt(lambda) <= r is at most prod(L_i r / pi + 1);
    // the tail is at most amp * y * int_R^inf e^{-y r} N(r) dr.
    let count = |r: f64| lengths.iter().map(|l| l * r / PI + 1.0).product::<f64>();
    let bound = |r0: f64| {
        let step = 0.05 / y;
        let mut acc = 0.0;
        for j in 0..2000 {
            let r = r0 + (j as f64 + 1.0) * step;
            acc += (-y * (r - step)).exp() * count(r) * step;
        }
        amp * y * acc
    };
    let mut r = 20.0 / y;
    let mut b = bound(r);
    while b > target {
        r += 5.0 / y;
        b = bound(r);
    }
    (r, b)
}

/// Sum `sum_{sqrt(lambda_k) <= R} e^{-y sqrt(lambda_k)} phi_k(x) phi_k(z)`.
fn poisson_direct(domain: &RectDomain, y: f64, x: &[f64], z: &[f64]) -> Result<(f64, f64)> {
    let target = SERIES_CUTOFF / domain.volume();
    let (radius, tail) = poisson_radius(domain, y, target);
    let n = domain.dim();
    let box_shape: Vec<usize> = domain
        .lengths()
        .iter()
        .map(|l| (radius * l / PI).floor() as usize + 1)
        .collect();
    let total: usize = box_shape.iter().product();
    if total > 50_000_000 {
        return Err(Error::Truncation {
            tail: f64::INFINITY,
            tolerance: target,
        });
    }
    let tables: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..box_shape[i])
                .map(|k| {
                    let l = domain.lengths()[i];
                    cosine_mode_1d(k, x[i], l) * cosine_mode_1d(k, z[i], l)
                })
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; n];
    let mut sum = 0.0;
    for _ in 0..total {
        let root = domain.eigenvalue(&idx).sqrt();
        if root <= radius {
            let basis: f64 = idx.iter().enumerate().map(|(i, &k)| tables[i][k]).product();
            sum += (-y * root).exp() * basis;
        }
        increment(&mut idx, &box_shape);
    }
    Ok((sum, tail))
}

/// Subordinated Poisson kernel. The constant mode is split off (it
/// integrates to `1/|Omega|` exactly); the remainder decays like
/// `e^{-lambda_1 t}` and `e^{-y^2/4t}` and is integrated in `ln t` with
/// `quad.nodes` points over the range where the integrand is above `e^{-80}`.
fn poisson_subordinated(
    domain: &RectDomain,
    y: f64,
    x: &[f64],
    z: &[f64],
    quad: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let mean = 1.0 / domain.volume();
    let t_lo = y * y / (4.0 * 80.0);
    let t_hi = 80.0 / domain.first_nonzero_eigenvalue();
    let rule = QuadratureSpec::new(t_lo, t_hi, quad.nodes.max(2)).rule();
    let mut sum = 0.0;
    let mut tail = 0.0;
    for (t, w) in rule {
        let sample = heat_kernel(domain, t, x, z, f64::INFINITY)?;
        let weight = w * (-y * y / (4.0 * t)).exp() * t.powf(-1.5);
        sum += weight * (sample.value - mean);
        tail += weight * sample.tail_bound;
    }
    let pref = y / (2.0 * PI.sqrt());
    // Truncated ends: the integrand is below e^{-80} times the kernel scale.
    let ends = (-80.0f64).exp() * (1.0 + (4.0 * PI * t_lo).powf(-(domain.dim() as f64) / 2.0));
    Ok((mean + pref * sum, pref * tail + ends))
}

/// Neumann–Poisson kernel `P_y(x, z)` by either route.
pub fn poisson_kernel(
    domain: &RectDomain,
    y: f64,
    x: &[f64],
    z: &[f64],
    route: PoissonRoute,
    quad: &QuadratureSpec,
) -> Result<KernelSample> {
    if !(y > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "height y = {y} must be positive"
        )));
    }
    let (value, tail_bound) = match route {
        PoissonRoute::Direct => poisson_direct(domain, y, x, z)?,
        PoissonRoute::Subordinated => poisson_subordinated(domain, y, x, z, quad)?,
    };
    if tail_bound > quad.tolerance {
        return Err(Error::Truncation {
            tail: tail_bound,
            tolerance: quad.tolerance,
        });
    }
    Ok(KernelSample {
        x: x.to_vec(),
        z: z.to_vec(),
        param: y,
        value,
        tail_bound,
    })
}

/// Evaluates a cosine series with coefficient box `shape` at the grid nodes
/// by contracting one axis at a time.
pub(crate) fn eval_series_on_grid(
    domain: &RectDomain,
    coeffs: &[f64],
    shape: &[usize],
) -> Vec<f64> {
    let mut data = coeffs.to_vec();
    let mut cur = shape.to_vec();
    for axis in 0..domain.dim() {
        let l = domain.lengths()[axis];
        let rows = domain.grid()[axis];
        let cols = cur[axis];
        let mat: Vec<f64> = (0..rows)
            .flat_map(|j| {
                let zj = domain.node_coord(axis, j);
                (0..cols).map(move |k| cosine_mode_1d(k, zj, l))
            })
            .collect();
        let stride: usize = cur[axis + 1..].iter().product();
        let outer: usize = cur[..axis].iter().product();
        let mut next = vec![0.0; outer * rows * stride];
        for o in 0..outer {
            for j in 0..rows {
                let row = &mat[j * cols..(j + 1) * cols];
                let dst = (o * rows + j) * stride;
                for (k, &a) in row.iter().enumerate() {
                    let src = (o * cols + k) * stride;
                    for inner in 0..stride {
                        next[dst + inner] += a * data[src + inner];
                    }
                }
            }
        }
        data = next;
        cur[axis] = rows;
    }
    data
}

/// `z -> P_y(x, z)` at every grid node, direct route.
pub fn poisson_kernel_row(domain: &Arc<RectDomain>, y: f64, x: &[f64]) -> Result<NodalField> {
    if !(y > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "height y = {y} must be positive"
        )));
    }
    let (radius, _) = poisson_radius(domain, y, SERIES_CUTOFF / domain.volume());
    let shape: Vec<usize> = domain
        .lengths()
        .iter()
        .map(|l| (radius * l / PI).floor() as usize + 1)
        .collect();
    let total: usize = shape.iter().product();
    let mut coeffs = vec![0.0; total];
    let mut idx = vec![0usize; domain.dim()];
    for c in coeffs.iter_mut() {
        let root = domain.eigenvalue(&idx).sqrt();
        if root <= radius {
            *c = (-y * root).exp() * domain.eigenfunction(&idx, x);
        }
        increment(&mut idx, &shape);
    }
    NodalField::new(domain.clone(), eval_series_on_grid(domain, &coeffs, &shape))
}

/// `||u||_eps^2 = ||u||_{L^2}^2 + sqrt(eps) sum_k lambda_k^{1/2} u_k^2`.
pub fn h_eps_norm_sq(u: &SpectralField, eps: f64) -> f64 {
    u.domain()
        .eigenvalues()
        .iter()
        .zip(u.coeffs())
        .map(|(&lam, &c)| (1.0 + (eps * lam).sqrt()) * c * c)
        .sum()
}

/// `||(-eps Delta_N)^{1/4} u||^2 = sum_k (eps lambda_k)^{1/2} u_k^2`.
pub fn frac_quarter_norm_sq(u: &SpectralField, eps: f64) -> f64 {
    u.domain()
        .eigenvalues()
        .iter()
        .zip(u.coeffs())
        .map(|(&lam, &c)| (eps * lam).sqrt() * c * c)
        .sum()
}

/// Volume of the unit ball in `R^n`.
pub(crate) fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * PI / n as f64,
    }
}

fn fft_nd(
    data: &mut [Complex<f64>],
    shape: &[usize],
    direction: FftDirection,
    planner: &mut FftPlanner<f64>,
) {
    for axis in 0..shape.len() {
        let plan = planner.plan_fft(shape[axis], direction);
        let mut scratch = vec![Complex::default(); plan.get_inplace_scratch_len()];
        for_each_lane(data, shape, axis, |lane| {
            plan.process_with_scratch(lane, &mut scratch)
        });
    }
}

/// Estimator of the Gagliardo seminorm
/// `[u]^2 = int int |u(x) - u(z)|^2 / |x - z|^{n+1} dx dz`.
///
/// The double midpoint sum skips node pairs closer than 1.5 grid spacings
/// (by the largest spacing) and replaces them by the first-order local
/// term `|grad u(x)|^2 omega_n rho`, where `rho` is the radius of a ball
/// with the volume of the skipped cells. The pair sum is evaluated as two
/// zero-padded FFT convolutions.
pub fn gagliardo_seminorm_sq(u: &NodalField) -> f64 {
    let domain = u.domain();
    let n = domain.dim();
    let grid = domain.grid();
    let pad: Vec<usize> = grid.iter().map(|g| 2 * g).collect();
    let total: usize = pad.iter().product();
    let h_cut = 1.5 * domain.max_spacing();

    let mut weights = vec![Complex::default(); total];
    let mut skipped = 0usize;
    let mut idx = vec![0usize; n];
    for w in weights.iter_mut() {
        // Offset d_i in (-N_i, N_i), wrapped into [0, 2 N_i).
        let mut r2 = 0.0;
        let mut valid = true;
        for i in 0..n {
            let d = if idx[i] < grid[i] {
                idx[i] as f64
            } else if idx[i] > grid[i] {
                idx[i] as f64 - pad[i] as f64
            } else {
                valid = false;
                0.0
            };
            r2 += (d * domain.spacing(i)).powi(2);
        }
        if valid {
            let r = r2.sqrt();
            if r < h_cut {
                skipped += 1;
            } else {
                *w = Complex::new(r.powi(-(n as i32 + 1)), 0.0);
            }
        }
        increment(&mut idx, &pad);
    }

    let mut field = vec![Complex::default(); total];
    let mut ones = vec![Complex::default(); total];
    let mut gi = vec![0usize; n];
    for &v in u.values() {
        let f = flat_index(&gi, &pad);
        field[f] = Complex::new(v, 0.0);
        ones[f] = Complex::new(1.0, 0.0);
        increment(&mut gi, grid);
    }

    let mut planner = FftPlanner::new();
    fft_nd(&mut weights, &pad, FftDirection::Forward, &mut planner);
    fft_nd(&mut field, &pad, FftDirection::Forward, &mut planner);
    fft_nd(&mut ones, &pad, FftDirection::Forward, &mut planner);
    for ((f, o), w) in field.iter_mut().zip(ones.iter_mut()).zip(&weights) {
        *f *= w;
        *o *= w;
    }
    fft_nd(&mut field, &pad, FftDirection::Inverse, &mut planner);
    fft_nd(&mut ones, &pad, FftDirection::Inverse, &mut planner);
    let scale = 1.0 / total as f64;

    let vol = domain.cell_volume();
    let mut pair_sum = 0.0;
    let mut gi = vec![0usize; n];
    for &v in u.values() {
        let f = flat_index(&gi, &pad);
        let conv_u = field[f].re * scale;
        let conv_1 = ones[f].re * scale;
        pair_sum += 2.0 * v * v * conv_1 - 2.0 * v * conv_u;
        increment(&mut gi, grid);
    }
    pair_sum *= vol * vol;

    // `skipped` includes the zero offset.
    let excluded = skipped as f64 * vol;
    let rho = (excluded / unit_ball_volume(n)).powf(1.0 / n as f64);
    let grad = u.to_spectral().gradient();
    let grad_sq: f64 = (0..domain.num_nodes())
        .map(|j| grad.iter().map(|g| g.values()[j].powi(2)).sum::<f64>())
        .sum();
    let correction = vol * grad_sq * unit_ball_volume(n) * rho;
    (pair_sum + correction).max(0.0)
}

/// `sum_{k != 0} lambda_k^{1/2} u_k^2 - lambda_1^{1/2} sum_{k != 0} u_k^2`,
/// nonnegative by the spectral Poincaré inequality.
pub fn poincare_defect(u: &SpectralField) -> f64 {
    let root1 = u.domain().first_nonzero_eigenvalue().sqrt();
    u.domain()
        .eigenvalues()
        .iter()
        .zip(u.coeffs())
        .filter(|(&lam, _)| lam > 0.0)
        .map(|(&lam, &c)| (lam.sqrt() - root1) * c * c)
        .sum()
}
