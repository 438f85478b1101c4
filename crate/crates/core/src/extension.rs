//! The ε-Neumann harmonic extension to the cylinder `Omega x (0, inf)`.
//!
//! `v(x, y) = u_Omega + sum_{k != 0} e^{-y (eps lambda_k)^{1/2}} u_k phi_k(x)`
//! solves `eps Delta_x v + v_yy = 0` with lateral Neumann data and trace
//! `u`; its normal derivative at `y = 0` is `-(-eps Delta_N)^{1/2} u`.

use std::f64::consts::PI;

use crate::domain::{NodalField, SpectralField};
use crate::error::{Error, Result};
use crate::operators::{
    frac_apply, frac_quarter_norm_sq, h_eps_norm_sq, heat_apply, poisson_apply,
};
use crate::quadrature::{composite_gauss, QuadratureSpec};

/// An extension sampled on a set of heights.
#[derive(Debug, Clone)]
pub struct ExtensionField {
    base: SpectralField,
    eps: f64,
    y_levels: Vec<f64>,
    slabs: Vec<NodalField>,
    mean: f64,
}

impl ExtensionField {
    pub fn base(&self) -> &SpectralField {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn y_levels(&self) -> &[f64] {
        &self.y_levels
    }

    pub fn slabs(&self) -> &[NodalField] {
        &self.slabs
    }

    /// `u_Omega`, shared by every slab.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Spectral coefficients of `v(., y)` at any height.
    pub fn at(&self, y: f64) -> Result<SpectralField> {
        poisson_apply(&self.base, self.eps, y)
    }

    /// Spectral coefficients of `-v_y(., y)`.
    pub fn normal_derivative(&self, y: f64) -> Result<SpectralField> {
        frac_apply(&self.at(y)?, self.eps, 0.5)
    }

    /// `||v||_eps^2`: cylinder Dirichlet energy plus the squared L^2 norm of
    /// the trace, from the closed forms.
    pub fn eps_norm_sq(&self) -> f64 {
        h_eps_norm_sq(&self.base, self.eps)
    }
}

/// Harmonic extension of `u` sampled at `y_levels`.
pub fn extend(u: &SpectralField, eps: f64, y_levels: &[f64]) -> Result<ExtensionField> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {eps} must be positive"
        )));
    }
    if y_levels.iter().any(|y| !(*y >= 0.0)) {
        return Err(Error::InvalidParameter(
            "heights must be nonnegative".into(),
        ));
    }
    let mut y_sorted = y_levels.to_vec();
    y_sorted.sort_by(f64::total_cmp);
    let slabs = y_sorted
        .iter()
        .map(|&y| poisson_apply(u, eps, y).map(|s| s.to_nodal()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExtensionField {
        base: u.clone(),
        eps,
        y_levels: y_sorted,
        slabs,
        mean: u.mean(),
    })
}

/// `v(., y)` by subordination to the heat semigroup,
/// `u_Omega + (sqrt(eps) y / (2 sqrt(pi))) int_0^inf e^{-eps y^2/4t} e^{t Delta_N}(u - u_Omega) t^{-3/2} dt`.
///
/// The `t` range is cut where the integrand falls below `e^{-80}` of its
/// scale; `quad.nodes` points are used in `ln t`.
pub fn extend_subordinated(
    u: &SpectralField,
    eps: f64,
    y: f64,
    quad: &QuadratureSpec,
) -> Result<SpectralField> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {eps} must be positive"
        )));
    }
    if y == 0.0 {
        return Ok(u.clone());
    }
    if !(y > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "height y = {y} must be nonnegative"
        )));
    }
    let s = eps.sqrt() * y;
    let lam1 = u.domain().first_nonzero_eigenvalue();
    let rule = QuadratureSpec::new(s * s / (4.0 * 80.0), 80.0 / lam1, quad.nodes.max(2)).rule();
    let zero_mean = u.zero_mean_part();
    let pref = s / (2.0 * PI.sqrt());
    let mut acc = SpectralField::zeros(u.domain());
    for (t, w) in rule {
        let weight = pref * w * (-s * s / (4.0 * t)).exp() * t.powf(-1.5);
        acc = acc.add_scaled(weight, &heat_apply(&zero_mean, t)?);
    }
    acc.coeffs_mut()[0] = u.coeffs()[0];
    Ok(acc)
}

/// `iint eps |grad_x v|^2 + v_y^2` of the exact extension,
/// `sum_{k != 0} (eps lambda_k)^{1/2} u_k^2`.
pub fn dirichlet_energy(v: &ExtensionField) -> f64 {
    frac_quarter_norm_sq(&v.base, v.eps)
}

/// Slab-quadrature estimate of the Dirichlet energy on the truncated
/// cylinder `Omega x (0, y_max)`: trapezoid in `y` on a geometrically
/// graded grid, exact (spectral) in `x` and in `d/dy`.
pub fn dirichlet_energy_slab_estimate(v: &ExtensionField, y_max: f64) -> f64 {
    let u = &v.base;
    let eps = v.eps;
    let a_max = u
        .domain()
        .eigenvalues()
        .iter()
        .zip(u.coeffs())
        .filter(|(_, c)| **c != 0.0)
        .map(|(&lam, _)| (eps * lam).sqrt())
        .fold(0.0, f64::max);
    if a_max == 0.0 {
        return 0.0;
    }
    let mut ys = vec![0.0];
    let mut step = 0.02 / a_max;
    while *ys.last().unwrap() < y_max {
        let next = (ys.last().unwrap() + step).min(y_max);
        ys.push(next);
        step *= 1.03;
    }
    let density = |y: f64| -> f64 {
        u.domain()
            .eigenvalues()
            .iter()
            .zip(u.coeffs())
            .map(|(&lam, &c)| {
                let a = (eps * lam).sqrt();
                let vk = c * (-a * y).exp();
                // eps lambda v_k^2 + (d/dy v_k)^2
                eps * lam * vk * vk + a * a * vk * vk
            })
            .sum()
    };
    let vals: Vec<f64> = ys.iter().map(|&y| density(y)).collect();
    ys.windows(2)
        .zip(vals.windows(2))
        .map(|(y, f)| 0.5 * (y[1] - y[0]) * (f[0] + f[1]))
        .sum()
}

/// `|| -(v(., h) - v(., 0))/h - (-eps Delta_N)^{1/2} u ||_{L^2}`.
pub fn dtn_residual(u: &SpectralField, eps: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step h = {h} must be positive"
        )));
    }
    let quotient = poisson_apply(u, eps, h)?.sub(u).scaled(-1.0 / h);
    Ok(quotient.sub(&frac_apply(u, eps, 0.5)?).l2_norm())
}

/// A perturbation `amplitude * psi(y) * phi_mode(x)` with
/// `psi(y) = y (Y - y)^2 / Y^2` on `[0, Y]` and zero beyond: zero trace and
/// compact support in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroTraceBump {
    pub mode: Vec<usize>,
    pub amplitude: f64,
    pub support: f64,
}

impl ZeroTraceBump {
    fn psi(&self, y: f64) -> (f64, f64) {
        let s = self.support;
        if y >= s {
            return (0.0, 0.0);
        }
        let value = y * (s - y).powi(2) / (s * s);
        let slope = ((s - y).powi(2) - 2.0 * y * (s - y)) / (s * s);
        (self.amplitude * value, self.amplitude * slope)
    }
}

/// Dirichlet energy of `v + sum bumps` minus `||(-eps Delta_N)^{1/4} u||^2`.
///
/// Zero for the exact extension and nonnegative for any competitor with the
/// same trace. The unperturbed modes cancel exactly; each perturbed mode
/// contributes `2 u_k int (a^2 e^{-ay} P - a e^{-ay} P') + int (a^2 P^2 + P'^2)`
/// with `a = (eps lambda_k)^{1/2}` and `P` the summed bump profile, computed by
/// composite Gauss–Legendre quadrature.
pub fn trace_inequality_gap(v: &ExtensionField, bumps: &[ZeroTraceBump]) -> Result<f64> {
    let domain = v.base.domain();
    let mut modes: Vec<Vec<usize>> = bumps.iter().map(|b| b.mode.clone()).collect();
    modes.sort();
    modes.dedup();
    let mut gap = 0.0;
    for mode in modes {
        if mode.len() != domain.dim() || mode.iter().zip(domain.cutoffs()).any(|(k, c)| k >= c) {
            return Err(Error::InvalidParameter(format!(
                "bump mode {mode:?} not retained"
            )));
        }
        let group: Vec<&ZeroTraceBump> = bumps.iter().filter(|b| b.mode == mode).collect();
        if group.iter().any(|b| !(b.support > 0.0)) {
            return Err(Error::InvalidParameter(
                "bump support must be positive".into(),
            ));
        }
        let coeff = v.base.coeffs()[domain.mode_index(&mode)];
        let a = (v.eps * domain.eigenvalue(&mode)).sqrt();
        let y_end = group.iter().map(|b| b.support).fold(0.0, f64::max);
        let mut breaks: Vec<f64> = (0..=32).map(|i| y_end * i as f64 / 32.0).collect();
        for b in &group {
            breaks.push(b.support);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let rule = composite_gauss(&breaks, 24);
        let mut cross = 0.0;
        let mut quad = 0.0;
        for (y, w) in rule {
            let (p, dp) = group.iter().fold((0.0, 0.0), |acc, b| {
                let (q, dq) = b.psi(y);
                (acc.0 + q, acc.1 + dq)
            });
            let e = (-a * y).exp();
            cross += w * a * e * (a * p - dp);
            quad += w * (a * a * p * p + dp * dp);
        }
        gap += 2.0 * coeff * cross + quad;
    }
    Ok(gap)
}

/// `||v||_eps / (min(1, eps^{1/2})^{1/2} ||u||_{L^{2n/(n-1)}})` for the exact
/// extension of `u`; bounded below by a constant independent of `eps`.
pub fn trace_embedding_ratio(u: &SpectralField, eps: f64) -> Result<f64> {
    let n = u.domain().dim();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "trace embedding needs n >= 2".into(),
        ));
    }
    let nu = 2.0 * n as f64 / (n as f64 - 1.0);
    let f = u.to_nodal().map(f64::abs);
    let lnu = f.quad_integral(nu)?.powf(1.0 / nu);
    let scale = eps.sqrt().min(1.0).sqrt();
    Ok(h_eps_norm_sq(u, eps).sqrt() / (scale * lnu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::RectDomain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, band: usize, seed: u64) -> SpectralField {
        let d = RectDomain::unit_square(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = SpectralField::zeros(&d);
        for f in 0..d.num_modes() {
            if d.multi_index(f).iter().all(|&k| k < band) {
                u.coeffs_mut()[f] = rng.gen_range(-1.0..1.0);
            }
        }
        u
    }

    #[test]
    fn single_mode_extension() {
        let d = RectDomain::unit_square(16).unwrap();
        let phi = SpectralField::mode(&d, &[1, 0]);
        let v = extend(&phi, 1.0, &[0.5, 0.0, 0.25]).unwrap();
        assert_eq!(v.y_levels(), &[0.0, 0.25, 0.5]);
        for (y, slab) in v.y_levels().iter().zip(v.slabs()) {
            for j in 0..d.num_nodes() {
                let expect = (-PI * y).exp() * d.eigenfunction(&[1, 0], &d.node(j));
                assert!((slab.values()[j] - expect).abs() < 1e-13);
            }
        }
        assert!((dirichlet_energy(&v) - PI).abs() < 1e-13);
    }

    #[test]
    fn constants_pass_through() {
        let d = RectDomain::unit_square(8).unwrap();
        let c = SpectralField::constant(&d, 2.0);
        let v = extend(&c, 0.3, &[0.0, 1.0, 5.0]).unwrap();
        for slab in v.slabs() {
            assert!(slab.values().iter().all(|x| (x - 2.0).abs() < 1e-13));
        }
        assert_eq!(dirichlet_energy(&v), 0.0);
        assert_eq!(dtn_residual(&c, 0.3, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn trace_and_mean_invariants() {
        let u = random_field(16, 6, 2);
        let v = extend(&u, 0.5, &[0.0, 0.1, 0.4, 2.0]).unwrap();
        let trace = u.to_nodal();
        for (a, b) in v.slabs()[0].values().iter().zip(trace.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let mut prev = f64::INFINITY;
        for (y, slab) in v.y_levels().iter().zip(v.slabs()) {
            assert!((slab.integral() / u.domain().volume() - u.mean()).abs() < 1e-13);
            let norm = v.at(*y).unwrap().zero_mean_part().l2_norm();
            assert!(norm <= prev);
            prev = norm;
        }
    }

    #[test]
    fn subordination_route_matches_closed_form() {
        let u = random_field(16, 8, 5);
        let q = QuadratureSpec::default();
        for eps in [0.05, 1.0] {
            for y in [0.01, 0.3, 2.0] {
                let a = extend_subordinated(&u, eps, y, &q).unwrap();
                let b = poisson_apply(&u, eps, y).unwrap();
                assert!(a.sub(&b).l2_norm() / b.l2_norm() < 1e-6, "eps={eps} y={y}");
            }
        }
    }

    #[test]
    fn slab_quadrature_matches_energy() {
        let u = random_field(16, 6, 7);
        let eps = 0.3;
        let v = extend(&u, eps, &[0.0]).unwrap();
        let y_max = 8.0 / (eps * u.domain().first_nonzero_eigenvalue()).sqrt();
        let est = dirichlet_energy_slab_estimate(&v, y_max);
        let exact = dirichlet_energy(&v);
        assert!((est - exact).abs() / exact < 0.01, "{est} vs {exact}");
    }

    #[test]
    fn dtn_residual_single_mode_bound_and_order() {
        let d = RectDomain::unit_square(8).unwrap();
        let k = [2, 1];
        let phi = SpectralField::mode(&d, &k);
        let lam = d.eigenvalue(&k);
        for h in [1e-2, 1e-3] {
            let r = dtn_residual(&phi, 1.0, h).unwrap();
            assert!(r <= h * lam / 2.0 + 1e-12);
        }
        let u = random_field(16, 6, 3);
        let r1 = dtn_residual(&u, 0.2, 1e-4).unwrap();
        let r2 = dtn_residual(&u, 0.2, 2e-4).unwrap();
        assert!((r1 / r2 - 0.5).abs() < 0.05);
    }

    #[test]
    fn trace_gap_examples() {
        let d = RectDomain::unit_square(8).unwrap();
        let phi = SpectralField::mode(&d, &[1, 0]);
        let v = extend(&phi, 1.0, &[0.0]).unwrap();
        assert!(trace_inequality_gap(&v, &[]).unwrap().abs() < 1e-10);
        let bump = ZeroTraceBump {
            mode: vec![2, 0],
            amplitude: 0.3,
            support: 1.0,
        };
        assert!(trace_inequality_gap(&v, &[bump]).unwrap() > 0.0);
    }

    #[test]
    fn trace_gap_minimised_by_the_extension() {
        let u = random_field(8, 4, 1);
        let v = extend(&u, 0.7, &[0.0]).unwrap();
        let scan: Vec<(f64, f64)> = (-10..=10)
            .map(|i| {
                let t = i as f64 * 0.05;
                let bumps = [
                    ZeroTraceBump {
                        mode: vec![1, 2],
                        amplitude: t,
                        support: 0.8,
                    },
                    ZeroTraceBump {
                        mode: vec![0, 0],
                        amplitude: 0.5 * t,
                        support: 2.0,
                    },
                ];
                (t, trace_inequality_gap(&v, &bumps).unwrap())
            })
            .collect();
        for (_, g) in &scan {
            assert!(*g >= -1e-12);
        }
        let best = scan.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(best.0, 0.0);
    }

    #[test]
    fn trace_embedding_ratio_is_bounded_below_across_eps() {
        let ratios: Vec<f64> = [0.01, 0.1, 1.0, 10.0]
            .iter()
            .flat_map(|&eps| {
                (0..5).map(move |s| trace_embedding_ratio(&random_field(16, 5, s), eps).unwrap())
            })
            .collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(lo > 0.0 && hi / lo < 50.0, "{lo} {hi}");
    }
}
