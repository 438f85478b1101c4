//! The linear problem `(-eps Delta_N)^{1/2} u + u = f` and its resolvent kernel.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::domain::{cosine_mode_1d, increment, unflatten, NodalField, RectDomain, SpectralField};
use crate::error::{Error, Result};
use crate::extension::{extend, ExtensionField};
use crate::operators::{frac_apply, poisson_apply, KernelSample};
use crate::quadrature::{composite_gauss, QuadratureSpec};

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub f: SpectralField,
    pub eps: f64,
    pub u: SpectralField,
    /// `||(-eps Delta_N)^{1/2} u + u - f||_{L^2}`.
    pub residual: f64,
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

/// Divides each coefficient by `(eps lambda_k)^{1/2} + 1`.
pub fn solve_linear(f: &SpectralField, eps: f64) -> Result<LinearSolution> {
    check_eps(eps)?;
    let u = f.map_modes(|lam, c| c / ((eps * lam).sqrt() + 1.0));
    let residual = frac_apply(&u, eps, 0.5)?
        .add_scaled(1.0, &u)
        .sub(f)
        .l2_norm();
    Ok(LinearSolution {
        f: f.clone(),
        eps,
        u,
        residual,
    })
}

/// `u = int_0^inf e^{-t} e^{-sqrt(eps) t (-Delta_N)^{1/2}} f dt` by the
/// log-trapezoid rule of `quad`.
pub fn solve_linear_by_quadrature(
    f: &SpectralField,
    eps: f64,
    quad: &QuadratureSpec,
) -> Result<SpectralField> {
    check_eps(eps)?;
    if !quad.is_valid() {
        return Err(Error::InvalidParameter(format!(
            "invalid quadrature {quad:?}"
        )));
    }
    let mut acc = SpectralField::zeros(f.domain());
    for (t, w) in quad.rule() {
        acc = acc.add_scaled(w * (-t).exp(), &poisson_apply(f, eps, t)?);
    }
    Ok(acc)
}

/// The extension of `sol.u`; its trace is `sol.u` and it satisfies the
/// Robin condition `-v_y + v = f` at `y = 0`.
pub fn extend_linear_solution(sol: &LinearSolution, y_levels: &[f64]) -> Result<ExtensionField> {
    extend(&sol.u, sol.eps, y_levels)
}

/// `|| -(v(., h) - v(., 0))/h + v(., 0) - f ||_{L^2}`; first order in `h`.
pub fn robin_residual(sol: &LinearSolution, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step h = {h} must be positive"
        )));
    }
    let v_h = poisson_apply(&sol.u, sol.eps, h)?;
    let quotient = v_h.sub(&sol.u).scaled(-1.0 / h);
    Ok(quotient.add_scaled(1.0, &sol.u).sub(&sol.f).l2_norm())
}

/// Resolvent kernel `L(x, z) = int_0^inf e^{-t} P_{sqrt(eps) t}(x, z) dt`.
///
/// The `t` integral is split at `t0`. Beyond it the cosine series with exact
/// weights `e^{-t0 (1 + a_k)} / (1 + a_k)`, `a_k = (eps lambda_k)^{1/2}`, is
/// summed over all modes with `lambda_k^{1/2}` below a radius where these
/// weights reach `e^{-36}`. Below it the Neumann Poisson kernel is the sum of
/// free-space Poisson kernels over the reflected images of `z`; images within
/// distance `R` are summed exactly and the rest is replaced by the continuum
/// `(1/|Omega|) int_{|w| > R} P_y(w) dw`. `tail_bound` estimates the
/// continuum replacement error. Fails when `x` and `z` coincide.
pub fn resolvent_kernel(
    domain: &RectDomain,
    eps: f64,
    x: &[f64],
    z: &[f64],
    quad: &QuadratureSpec,
) -> Result<KernelSample> {
    check_eps(eps)?;
    if !quad.is_valid() {
        return Err(Error::InvalidParameter(format!(
            "invalid quadrature {quad:?}"
        )));
    }
    let n = domain.dim();
    // Mode budget of the series part.
    let budget = match n {
        1 => 1.0e5,
        2 => 6.0e4,
        _ => 2.0e5,
    };
    let cell: f64 = domain.lengths().iter().map(|l| l / PI).product();
    let radius = (budget / cell).powf(1.0 / n as f64);
    split_kernel(domain, eps, x, z, radius, quad.tolerance)
}

fn split_kernel(
    domain: &RectDomain,
    eps: f64,
    x: &[f64],
    z: &[f64],
    radius: f64,
    tolerance: f64,
) -> Result<KernelSample> {
    let n = domain.dim();
    let r: f64 = x
        .iter()
        .zip(z)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if r < 1e-10 * domain.max_spacing() {
        return Err(Error::Quadrature {
            estimate: f64::INFINITY,
            tolerance,
        });
    }
    let t0 = 36.0 / (eps.sqrt() * radius);
    let shape: Vec<usize> = domain
        .lengths()
        .iter()
        .map(|l| (radius * l / PI).floor() as usize + 1)
        .collect();
    let tables: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let l = domain.lengths()[i];
            (0..shape[i])
                .map(|k| cosine_mode_1d(k, x[i], l) * cosine_mode_1d(k, z[i], l))
                .collect()
        })
        .collect();
    let mut series = 0.0;
    let mut idx = vec![0usize; n];
    for _ in 0..shape.iter().product::<usize>() {
        let lam = domain.eigenvalue(&idx);
        if lam.sqrt() <= radius {
            let b = 1.0 + (eps * lam).sqrt();
            let prod: f64 = idx.iter().enumerate().map(|(i, &k)| tables[i][k]).product();
            series += (-t0 * b).exp() / b * prod;
        }
        increment(&mut idx, &shape);
    }

    let (images, continuum, tail) = image_part(domain, eps, x, z, t0);
    Ok(KernelSample {
        x: x.to_vec(),
        z: z.to_vec(),
        param: eps,
        value: series + images + continuum,
        tail_bound: tail,
    })
}

/// `Gamma(m / 2)`.
fn gamma_half(m: usize) -> f64 {
    let (mut g, mut k) = if m.is_multiple_of(2) { (1.0, 2) } else { (PI.sqrt(), 1) };
    while k < m {
        g *= k as f64 / 2.0;
        k += 2;
    }
    g
}

/// `int_0^{t0} e^{-t} P_{sqrt(eps) t}(x, z) dt` by images, with the
/// continuum correction for images beyond `R` and its error estimate.
fn image_part(domain: &RectDomain, eps: f64, x: &[f64], z: &[f64], t0: f64) -> (f64, f64, f64) {
    let n = domain.dim();
    let gr = gamma_half(n + 1) / gamma_half(n);
    // Free-space Poisson kernel c_n y / (y^2 + r^2)^{(n+1)/2}.
    let c_n = gamma_half(n + 1) / PI.powf((n as f64 + 1.0) / 2.0);
    // Surface factor c_n |S^{n-1}| of the far-field mass y / R.
    let surface = 2.0 * gr / PI.sqrt();
    let l_max = domain.lengths().iter().cloned().fold(0.0, f64::max);
    let big_r = 12.0 * l_max;
    let se = eps.sqrt();
    let y0 = se * t0;

    let time_integral = |rho: f64| -> f64 {
        let mut breaks = vec![0.0];
        let mut b = rho / 16.0;
        while b < y0 {
            breaks.push(b);
            b *= 2.0;
        }
        breaks.push(y0);
        composite_gauss(&breaks, 12)
            .iter()
            .map(|(y, w)| {
                w * (-y / se).exp() * c_n * y * (y * y + rho * rho).powf(-(n as f64 + 1.0) / 2.0)
            })
            .sum::<f64>()
            / se
    };

    let per_axis: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let l = domain.lengths()[i];
            let m_max = (big_r / (2.0 * l)).ceil() as i64 + 1;
            (-m_max..=m_max)
                .flat_map(|m| {
                    let shift = 2.0 * m as f64 * l;
                    [shift + z[i] - x[i], shift - z[i] - x[i]]
                })
                .collect()
        })
        .collect();
    let mut images = 0.0;
    let lens: Vec<usize> = per_axis.iter().map(Vec::len).collect();
    let mut idx = vec![0usize; n];
    for _ in 0..lens.iter().product::<usize>() {
        let rho2: f64 = idx
            .iter()
            .enumerate()
            .map(|(i, &k)| per_axis[i][k].powi(2))
            .sum();
        if rho2 <= big_r * big_r {
            images += time_integral(rho2.sqrt());
        }
        increment(&mut idx, &lens);
    }
    // int_0^{t0} e^{-t} sqrt(eps) t dt
    let moment = se * (1.0 - (-t0).exp() * (1.0 + t0));
    let continuum = surface * moment / (domain.volume() * big_r);
    let tail = surface * moment * l_max / (domain.volume() * big_r * big_r);
    (images, continuum, tail)
}

/// Resolvent weights `sum_i q_i e^{-t_i} e^{-t_i (eps lambda_k)^{1/2}}`,
/// the quadrature image of `1 / (1 + (eps lambda_k)^{1/2})`.
fn resolvent_weights(domain: &RectDomain, eps: f64, quad: &QuadratureSpec) -> Vec<f64> {
    let rule = quad.rule();
    domain
        .eigenvalues()
        .iter()
        .map(|&lam| {
            let a = (eps * lam).sqrt();
            rule.iter().map(|(t, w)| w * (-t * (1.0 + a)).exp()).sum()
        })
        .collect()
}

/// `z -> L_K(x, z)` at every grid node, where `L_K` keeps only the modes
/// retained by `domain`. Summed against grid values with the cell volume,
/// it reproduces the spectral resolvent on the grid; unlike
/// [`resolvent_kernel`] it is bounded on the diagonal and shows Gibbs
/// undershoot away from it.
pub fn resolvent_kernel_row(
    domain: &Arc<RectDomain>,
    eps: f64,
    x: &[f64],
    quad: &QuadratureSpec,
) -> Result<NodalField> {
    check_eps(eps)?;
    let weights = resolvent_weights(domain, eps, quad);
    let coeffs: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(f, w)| w * domain.eigenfunction(&domain.multi_index(f), x))
        .collect();
    Ok(SpectralField::new(domain.clone(), coeffs)?.to_nodal())
}

/// `u(x_j) = sum_z L(x_j, z) f(z) dV` over the grid, one kernel row per node.
pub fn solve_by_kernel(f: &NodalField, eps: f64, quad: &QuadratureSpec) -> Result<NodalField> {
    check_eps(eps)?;
    let domain = f.domain();
    let dv = domain.cell_volume();
    let weights = resolvent_weights(domain, eps, quad);
    // tables[i][j * K_i + k] = phi_k(x_j) along axis i
    let tables: Vec<Vec<f64>> = (0..domain.dim())
        .map(|i| {
            let (g, k_max) = (domain.grid()[i], domain.cutoffs()[i]);
            (0..g)
                .flat_map(|j| {
                    let x = domain.node_coord(i, j);
                    (0..k_max).map(move |k| cosine_mode_1d(k, x, domain.lengths()[i]))
                })
                .collect()
        })
        .collect();
    let modes: Vec<Vec<usize>> = (0..domain.num_modes())
        .map(|flat| domain.multi_index(flat))
        .collect();
    let values = (0..domain.num_nodes())
        .into_par_iter()
        .map(|j| {
            let node = unflatten(j, domain.grid());
            let coeffs: Vec<f64> = weights
                .iter()
                .zip(&modes)
                .map(|(w, k)| {
                    w * (0..k.len())
                        .map(|i| tables[i][node[i] * domain.cutoffs()[i] + k[i]])
                        .product::<f64>()
                })
                .collect();
            let row = domain.inverse(&coeffs);
            row.iter().zip(f.values()).map(|(l, v)| l * v).sum::<f64>() * dv
        })
        .collect();
    NodalField::new(domain.clone(), values)
}

/// Largest observed `||u||_{L^q} / ||f||_{L^q}` over a corpus of right-hand
/// sides, for `q` in `{1, 2, inf}` (`f64::INFINITY` selects the sup norm).
pub fn lp_stability_constant(corpus: &[SpectralField], eps: f64, q: f64) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::InsufficientData("empty corpus".into()));
    }
    let norm = |g: &NodalField| -> Result<f64> {
        if q.is_infinite() {
            Ok(g.values().iter().fold(0.0f64, |m, v| m.max(v.abs())))
        } else {
            Ok(g.map(f64::abs).quad_integral(q)?.powf(1.0 / q))
        }
    };
    let mut worst = 0.0f64;
    for f in corpus {
        let u = solve_linear(f, eps)?.u;
        let nf = norm(&f.to_nodal())?;
        if nf > 0.0 {
            worst = worst.max(norm(&u.to_nodal())? / nf);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn smooth_field(d: &Arc<RectDomain>, band: usize, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = SpectralField::zeros(d);
        for f in 0..d.num_modes() {
            let k = d.multi_index(f);
            if k.iter().all(|&k| k < band) {
                let decay = 1.0 / (1.0 + k.iter().sum::<usize>() as f64).powi(2);
                u.coeffs_mut()[f] = rng.gen_range(-1.0..1.0) * decay;
            }
        }
        u
    }

    #[test]
    fn mode_and_constant_examples() {
        let d = RectDomain::unit_square(16).unwrap();
        let eps = 0.2;
        let phi = SpectralField::mode(&d, &[2, 1]);
        let sol = solve_linear(&phi, eps).unwrap();
        let expect = 1.0 / ((eps * 5.0 * PI * PI).sqrt() + 1.0);
        assert!((sol.u.coeffs()[d.mode_index(&[2, 1])] - expect).abs() < 1e-15);
        assert!(sol.residual < 1e-12);
        let c = SpectralField::constant(&d, 3.0);
        let sol = solve_linear(&c, eps).unwrap();
        assert_eq!(sol.u.coeffs(), c.coeffs());
        assert!(solve_linear(&c, 0.0).is_err());
    }

    #[test]
    fn per_mode_identity_and_residual() {
        let d = RectDomain::unit_square(32).unwrap();
        for seed in 0..5 {
            let f = smooth_field(&d, 32, seed);
            let sol = solve_linear(&f, 0.07).unwrap();
            assert!(sol.residual <= 1e-12 * f.l2_norm());
            for i in 0..d.num_modes() {
                let lhs = sol.u.coeffs()[i] * ((0.07 * d.eigenvalues()[i]).sqrt() + 1.0);
                assert!((lhs - f.coeffs()[i]).abs() <= 1e-15 * (1.0 + f.coeffs()[i].abs()));
            }
        }
    }

    #[test]
    fn quadrature_route_matches() {
        let d = RectDomain::unit_square(16).unwrap();
        let q = QuadratureSpec::default();
        for eps in [0.01, 1.0, 10.0] {
            let f = smooth_field(&d, 16, 9);
            let a = solve_linear(&f, eps).unwrap().u;
            let b = solve_linear_by_quadrature(&f, eps, &q).unwrap();
            assert!(a.sub(&b).l2_norm() / a.l2_norm() < 1e-6);
        }
    }

    #[test]
    fn extension_trace_and_robin_order() {
        let d = RectDomain::unit_square(16).unwrap();
        let phi = SpectralField::mode(&d, &[1, 1]);
        let sol = solve_linear(&phi, 0.5).unwrap();
        let v = extend_linear_solution(&sol, &[0.0, 0.3]).unwrap();
        let a = (0.5 * 2.0 * PI * PI).sqrt();
        let x = d.node(37);
        let expect = (-0.3 * a).exp() * d.eigenfunction(&[1, 1], &x) / (a + 1.0);
        assert!((v.slabs()[1].values()[37] - expect).abs() < 1e-14);
        let f = smooth_field(&d, 8, 4);
        let sol = solve_linear(&f, 0.5).unwrap();
        let r1 = robin_residual(&sol, 1e-4).unwrap();
        let r2 = robin_residual(&sol, 2e-4).unwrap();
        assert!((r1 / r2 - 0.5).abs() < 0.05);
        let c = solve_linear(&SpectralField::constant(&d, 1.5), 0.5).unwrap();
        let v = extend_linear_solution(&c, &[2.0]).unwrap();
        assert!(v.slabs()[0]
            .values()
            .iter()
            .all(|x| (x - 1.5).abs() < 1e-14));
    }

    #[test]
    fn kernel_mass_and_symmetry() {
        let d = RectDomain::unit_square(16).unwrap();
        let q = QuadratureSpec::default();
        for x in [[0.1, 0.2], [0.5, 0.5], [0.97, 0.03]] {
            let row = resolvent_kernel_row(&d, 0.3, &x, &q).unwrap();
            assert!((row.integral() - 1.0).abs() < 1e-10);
        }
        let a = resolvent_kernel(&d, 0.3, &[0.2, 0.3], &[0.6, 0.1], &q)
            .unwrap()
            .value;
        let b = resolvent_kernel(&d, 0.3, &[0.6, 0.1], &[0.2, 0.3], &q)
            .unwrap()
            .value;
        assert!((a - b).abs() < 1e-12 * a.abs());
        assert!(resolvent_kernel(&d, 0.3, &[0.2, 0.3], &[0.2, 0.3], &q).is_err());
    }

    #[test]
    fn kernel_route_solve_matches_spectral() {
        let d = RectDomain::unit_square(16).unwrap();
        let q = QuadratureSpec::default();
        let f = smooth_field(&d, 6, 2);
        let eps = 0.1;
        let spectral = solve_linear(&f, eps).unwrap().u.to_nodal();
        let kernel = solve_by_kernel(&f.to_nodal(), eps, &q).unwrap();
        let err: f64 = spectral
            .values()
            .iter()
            .zip(kernel.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!(err.sqrt() / spectral.l2_norm_sq().sqrt() < 1e-4);
        let one = solve_by_kernel(&NodalField::constant(&d, 1.0), eps, &q).unwrap();
        assert!(one.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn maximum_principle_on_smooth_nonnegative_data() {
        let d = RectDomain::unit_square(32).unwrap();
        for seed in 0..10 {
            let g = smooth_field(&d, 6, seed);
            let f = g.to_nodal().map(|v| v * v).to_spectral();
            let u = solve_linear(&f, 0.05).unwrap().u.to_nodal();
            let fmax = f.to_nodal().max();
            assert!(u.min() >= -1e-10 * fmax, "{}", u.min());
        }
    }

    #[test]
    fn lp_constants_are_at_most_one() {
        let d = RectDomain::unit_square(32).unwrap();
        let corpus: Vec<_> = (0..8).map(|s| smooth_field(&d, 6, s)).collect();
        for q in [1.0, 2.0, f64::INFINITY] {
            let c = lp_stability_constant(&corpus, 0.1, q).unwrap();
            assert!(c > 0.0 && c <= 1.0 + 1e-8, "q={q} c={c}");
        }
    }

    #[test]
    fn kernel_decay_away_from_the_diagonal() {
        let d = RectDomain::unit_square(32).unwrap();
        let q = QuadratureSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        let mut lowest = f64::INFINITY;
        for _ in 0..200 {
            let x: [f64; 2] = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let z: [f64; 2] = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let r = ((x[0] - z[0]).powi(2) + (x[1] - z[1]).powi(2)).sqrt();
            if r < 2.0 * d.max_spacing() {
                continue;
            }
            let l = resolvent_kernel(&d, 0.1, &x, &z, &q).unwrap().value;
            worst = worst.max(l * r);
            lowest = lowest.min(l);
        }
        assert!(worst < 5.0, "{worst}");
        assert!(lowest > 0.0, "{lowest}");
    }

    #[test]
    fn kernel_in_one_dimension_matches_the_cosine_series() {
        // Brute-force partial sums, averaged over the last stretch to damp
        // the conditional convergence.
        let d = RectDomain::new(vec![1.0], vec![16], vec![16]).unwrap();
        let q = QuadratureSpec::default();
        let eps = 0.2;
        for (x, z) in [(0.1, 0.6), (0.3, 0.35), (0.02, 0.98)] {
            let k_max = 400_000usize;
            let mut partial = 1.0;
            let mut avg = 0.0;
            for k in 1..=k_max {
                let a = (eps * (PI * k as f64).powi(2)).sqrt();
                partial += 2.0 * (PI * k as f64 * x).cos() * (PI * k as f64 * z).cos() / (1.0 + a);
                if k > k_max / 2 {
                    avg += partial;
                }
            }
            avg /= (k_max - k_max / 2) as f64;
            let got = resolvent_kernel(&d, eps, &[x], &[z], &q).unwrap();
            assert!(
                (got.value - avg).abs() < 1e-4 * avg.abs().max(1.0),
                "{x} {z}: {} vs {avg}",
                got.value
            );
        }
    }

    #[test]
    fn kernel_split_point_is_immaterial() {
        let d = RectDomain::unit_square(16).unwrap();
        for (x, z) in [
            ([0.1, 0.2], [0.4, 0.9]),
            ([0.5, 0.5], [0.55, 0.52]),
            ([0.0, 0.0], [0.03, 0.01]),
        ] {
            let a = split_kernel(&d, 0.05, &x, &z, 120.0, 1e-8).unwrap();
            let b = split_kernel(&d, 0.05, &x, &z, 400.0, 1e-8).unwrap();
            let tol = 1e-5 * a.value.abs() + 10.0 * (a.tail_bound + b.tail_bound);
            assert!(
                (a.value - b.value).abs() < tol,
                "{} vs {}",
                a.value,
                b.value
            );
        }
    }
}
