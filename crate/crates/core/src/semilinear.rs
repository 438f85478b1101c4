//! Positive solutions of `(-eps Delta_N)^{1/2} u + u = u_+^p`.
//!
//! Solutions are critical points of
//! `I(u) = 1/2 ||u||_eps^2 - 1/(p+1) int u_+^{p+1}`; least-energy ones are
//! found by descent on the Nehari manifold and polished by Newton's method.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{NodalField, RectDomain, SpectralField};
use crate::error::{Error, Result};
use crate::krylov::gmres;
use crate::operators::h_eps_norm_sq;

/// Largest number of modes for which Newton steps use a dense LU solve.
pub const DENSE_MODE_LIMIT: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemilinearConfig {
    pub eps: f64,
    pub p: f64,
    /// Descent step `tau`.
    pub step: f64,
    /// Descent stops once `||grad I||_eps <= descent_tol ||u||_eps`.
    pub descent_tol: f64,
    /// Accepted solutions have `||R(u)||_{L^2}` below this.
    pub newton_tol: f64,
    pub max_descent: usize,
    pub max_newton: usize,
    /// Grid refinement used for the nonlinearity.
    pub oversample: usize,
    /// Tent center; `None` selects the midpoint of the face `x_n = 0`.
    pub center: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SemilinearConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            p: 2.0,
            step: 0.5,
            descent_tol: 1e-5,
            newton_tol: 1e-10,
            max_descent: 5000,
            max_newton: 60,
            oversample: 2,
            center: None,
            seed: 0,
        }
    }
}

impl SemilinearConfig {
    pub fn validate(&self, domain: &RectDomain) -> Result<()> {
        let n = domain.dim() as f64;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} must be positive",
                self.eps
            )));
        }
        let upper = if domain.dim() == 1 {
            f64::INFINITY
        } else {
            (n + 1.0) / (n - 1.0)
        };
        if !(self.p > 1.0 && self.p < upper) {
            return Err(Error::InvalidParameter(format!(
                "exponent p = {} outside the subcritical range (1, {upper})",
                self.p
            )));
        }
        if !(self.step > 0.0) || !(self.descent_tol > 0.0) || !(self.newton_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "step and tolerances must be positive".into(),
            ));
        }
        if self.oversample == 0 {
            return Err(Error::InvalidParameter(
                "oversampling factor must be at least 1".into(),
            ));
        }
        if let Some(c) = &self.center {
            let inside = c.len() == domain.dim()
                && c.iter()
                    .zip(domain.lengths())
                    .all(|(x, l)| (0.0..=*l).contains(x));
            if !inside {
                return Err(Error::InvalidParameter(format!(
                    "tent center {c:?} outside the box"
                )));
            }
        }
        Ok(())
    }

    pub fn tent_center(&self, domain: &RectDomain) -> Vec<f64> {
        self.center.clone().unwrap_or_else(|| {
            let mut c: Vec<f64> = domain.lengths().iter().map(|l| l / 2.0).collect();
            *c.last_mut().unwrap() = 0.0;
            c
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolutionReport {
    pub u: SpectralField,
    pub energy: f64,
    /// `||R(u)||_{L^2}`.
    pub residual: f64,
    /// `| ||u||_eps^2 - int u_+^{p+1} |`.
    pub nehari_defect: f64,
    /// `||u||_eps^2`.
    pub norm_sq: f64,
    pub sup: f64,
    pub inf: f64,
    pub is_constant: bool,
    pub descent_iterations: usize,
    pub newton_iterations: usize,
    /// Residual after each descent step and each Newton step.
    pub descent_history: Vec<f64>,
    pub newton_history: Vec<f64>,
    /// `max_t I(t u)` over `t` in `[0, 2]`, a discrete mountain-pass estimate
    /// along the ray through `u`.
    pub path_estimate: f64,
    pub wall_time: f64,
}

impl SolutionReport {
    /// The invariants of a converged solve.
    pub fn accepted(&self, newton_tol: f64) -> bool {
        self.residual < newton_tol && self.nehari_defect < 1e-8 * self.norm_sq && self.inf > 0.0
    }
}

/// `eps`, `p` and the two grids of one problem.
#[derive(Debug, Clone)]
pub struct Problem {
    coarse: Arc<RectDomain>,
    fine: Arc<RectDomain>,
    eps: f64,
    p: f64,
    diag: Vec<f64>,
}

impl Problem {
    pub fn new(domain: &Arc<RectDomain>, eps: f64, p: f64, oversample: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {eps} must be positive"
            )));
        }
        if !(p > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "exponent p = {p} must exceed 1"
            )));
        }
        let fine = if oversample <= 1 {
            domain.clone()
        } else {
            domain.refined(oversample)?
        };
        let diag = domain
            .eigenvalues()
            .iter()
            .map(|&lam| 1.0 + (eps * lam).sqrt())
            .collect();
        Ok(Self {
            coarse: domain.clone(),
            fine,
            eps,
            p,
            diag,
        })
    }

    pub fn domain(&self) -> &Arc<RectDomain> {
        &self.coarse
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn fine_values(&self, u: &SpectralField) -> Result<NodalField> {
        Ok(u.resample(&self.fine)?.to_nodal())
    }

    fn project(&self, f: &NodalField) -> Result<SpectralField> {
        f.to_spectral().resample(&self.coarse)
    }

    /// Coefficients of `u_+^p` computed on the fine grid.
    pub fn nonlinearity(&self, u: &SpectralField) -> Result<SpectralField> {
        let p = self.p;
        self.project(
            &self
                .fine_values(u)?
                .map(|v| if v > 0.0 { v.powf(p) } else { 0.0 }),
        )
    }

    /// `int u_+^{p+1}` on the fine grid.
    pub fn positive_mass(&self, u: &SpectralField) -> Result<f64> {
        let q = self.p + 1.0;
        let f = self.fine_values(u)?;
        Ok(f.values()
            .iter()
            .map(|&v| if v > 0.0 { v.powf(q) } else { 0.0 })
            .sum::<f64>()
            * self.fine.cell_volume())
    }

    pub fn norm_sq(&self, u: &SpectralField) -> f64 {
        h_eps_norm_sq(u, self.eps)
    }

    pub fn energy(&self, u: &SpectralField) -> Result<f64> {
        Ok(0.5 * self.norm_sq(u) - self.positive_mass(u)? / (self.p + 1.0))
    }

    /// `R(u) = (-eps Delta_N)^{1/2} u + u - u_+^p`.
    pub fn residual(&self, u: &SpectralField) -> Result<SpectralField> {
        let g = self.nonlinearity(u)?;
        let coeffs = u
            .coeffs()
            .iter()
            .zip(&self.diag)
            .zip(g.coeffs())
            .map(|((c, d), g)| d * c - g)
            .collect();
        SpectralField::new(self.coarse.clone(), coeffs)
    }

    /// `u - K[u_+^p]`, the gradient of `I` in the `||.||_eps` metric.
    pub fn gradient(&self, u: &SpectralField) -> Result<SpectralField> {
        let r = self.residual(u)?;
        let coeffs = r
            .coeffs()
            .iter()
            .zip(&self.diag)
            .map(|(r, d)| r / d)
            .collect();
        SpectralField::new(self.coarse.clone(), coeffs)
    }

    /// `(||u||_eps^2 / int u_+^{p+1})^{1/(p-1)}`.
    pub fn nehari_scale(&self, u: &SpectralField) -> Result<f64> {
        let mass = self.positive_mass(u)?;
        if !(mass > 0.0) {
            return Err(Error::VanishingPositivePart);
        }
        Ok((self.norm_sq(u) / mass).powf(1.0 / (self.p - 1.0)))
    }

    /// Jacobian of `R` at `u`, applied to coefficient vectors.
    fn jacobian(&self, u: &SpectralField) -> Result<impl Fn(&[f64]) -> Vec<f64> + '_> {
        let p = self.p;
        let weight: Vec<f64> = self
            .fine_values(u)?
            .values()
            .iter()
            .map(|&v| if v > 0.0 { p * v.powf(p - 1.0) } else { 0.0 })
            .collect();
        Ok(move |w: &[f64]| -> Vec<f64> {
            let wf = SpectralField::new(self.coarse.clone(), w.to_vec())
                .and_then(|s| s.resample(&self.fine))
                .expect("coefficient vector matches the coarse domain")
                .to_nodal();
            let prod: Vec<f64> = wf
                .values()
                .iter()
                .zip(&weight)
                .map(|(a, b)| a * b)
                .collect();
            let back = NodalField::new(self.fine.clone(), prod)
                .and_then(|f| self.project(&f))
                .expect("fine grid field");
            w.iter()
                .zip(&self.diag)
                .zip(back.coeffs())
                .map(|((w, d), b)| d * w - b)
                .collect()
        })
    }

    /// Solves `J(u) delta = -R` for the Newton correction.
    fn newton_direction(&self, u: &SpectralField, r: &SpectralField) -> Result<Vec<f64>> {
        let jac = self.jacobian(u)?;
        let m = self.coarse.num_modes();
        let rhs: Vec<f64> = r.coeffs().iter().map(|v| -v).collect();
        if m <= DENSE_MODE_LIMIT {
            let mut mat = DMatrix::zeros(m, m);
            let mut e = vec![0.0; m];
            for j in 0..m {
                e[j] = 1.0;
                let col = jac(&e);
                e[j] = 0.0;
                mat.set_column(j, &DVector::from_vec(col));
            }
            let lu = mat.lu();
            let sol = lu
                .solve(&DVector::from_vec(rhs))
                .ok_or_else(|| Error::Solver("singular Jacobian".into()))?;
            return Ok(sol.iter().copied().collect());
        }
        // Right preconditioning by the diagonal part.
        let diag = &self.diag;
        let op = |z: &[f64]| -> Vec<f64> {
            let w: Vec<f64> = z.iter().zip(diag).map(|(z, d)| z / d).collect();
            jac(&w)
        };
        let out = gmres(op, &rhs, 1e-10, 80, 800);
        if !(out.relative_residual < 1e-4) {
            return Err(Error::Solver(format!(
                "GMRES stalled at relative residual {:.3e} after {} iterations",
                out.relative_residual, out.iterations
            )));
        }
        Ok(out.x.iter().zip(diag).map(|(z, d)| z / d).collect())
    }
}

pub fn energy(u: &SpectralField, eps: f64, p: f64) -> Result<f64> {
    Problem::new(u.domain(), eps, p, 2)?.energy(u)
}

pub fn euler_lagrange_residual(u: &SpectralField, eps: f64, p: f64) -> Result<SpectralField> {
    Problem::new(u.domain(), eps, p, 2)?.residual(u)
}

pub fn grad_energy(u: &SpectralField, eps: f64, p: f64) -> Result<SpectralField> {
    Problem::new(u.domain(), eps, p, 2)?.gradient(u)
}

pub fn nehari_scale(u: &SpectralField, eps: f64, p: f64) -> Result<f64> {
    Problem::new(u.domain(), eps, p, 2)?.nehari_scale(u)
}

/// `eps^{-n/2} (1 - |x - center| / eps^{1/2})_+` sampled at the nodes.
///
/// The tent is clipped to the box. When no node falls inside its support
/// the nearest node carries the peak value.
pub fn tent_initializer(
    domain: &Arc<RectDomain>,
    eps: f64,
    center: &[f64],
) -> Result<SpectralField> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {eps} must be positive"
        )));
    }
    let n = domain.dim() as f64;
    let peak = eps.powf(-n / 2.0);
    let radius = eps.sqrt();
    let mut f = NodalField::from_fn(domain, |x| {
        let r: f64 = x
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        peak * (1.0 - r / radius).max(0.0)
    });
    if f.max() == 0.0 {
        let mut values = f.into_values();
        values[domain.nearest_node(center)] = peak;
        f = NodalField::new(domain.clone(), values)?;
    }
    Ok(f.to_spectral())
}

fn constancy(u: &SpectralField) -> (f64, f64, bool) {
    let nodal = u.to_nodal();
    let mean = u.mean();
    let (sup, inf) = (nodal.max(), nodal.min());
    let dev = nodal
        .values()
        .iter()
        .fold(0.0f64, |m, v| m.max((v - mean).abs()));
    (sup, inf, dev < 1e-6 * sup.max(1.0))
}

/// Nehari descent from `start`, then Newton.
pub fn solve_from(
    domain: &Arc<RectDomain>,
    config: &SemilinearConfig,
    start: SpectralField,
) -> Result<SolutionReport> {
    config.validate(domain)?;
    let clock = Instant::now();
    let problem = Problem::new(domain, config.eps, config.p, config.oversample)?;
    let start = start.resample(domain)?;

    let mut u = start.scaled(problem.nehari_scale(&start)?);
    let mut e = problem.energy(&u)?;
    let mut tau = config.step;
    let mut descent_history = Vec::new();
    let mut descent_iterations = 0;
    while descent_iterations < config.max_descent {
        let g = problem.gradient(&u)?;
        let g_norm = problem.norm_sq(&g).sqrt();
        descent_history.push(g_norm);
        if g_norm <= config.descent_tol * problem.norm_sq(&u).sqrt() {
            break;
        }
        descent_iterations += 1;
        let mut accepted = false;
        while tau >= 1e-10 {
            let trial = u.add_scaled(-tau, &g);
            if let Ok(s) = problem.nehari_scale(&trial) {
                let cand = trial.scaled(s);
                let e_new = problem.energy(&cand)?;
                if e_new <= e + 1e-14 * e.abs() {
                    let decrease = e - e_new;
                    u = cand;
                    e = e_new;
                    accepted = true;
                    tau = (tau * 2.0).min(config.step);
                    if decrease <= 1e-15 * e.abs() {
                        descent_iterations = config.max_descent;
                    }
                    break;
                }
            }
            tau *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if problem.positive_mass(&u)? <= 0.0 {
        return Err(Error::VanishingPositivePart);
    }

    let mut r = problem.residual(&u)?;
    let mut r_norm = r.l2_norm();
    let mut newton_history = vec![r_norm];
    let mut newton_iterations = 0;
    while r_norm >= config.newton_tol && newton_iterations < config.max_newton {
        newton_iterations += 1;
        let delta = SpectralField::new(domain.clone(), problem.newton_direction(&u, &r)?)?;
        let mut alpha = 1.0;
        let mut improved = false;
        while alpha > 1e-6 {
            let cand = u.add_scaled(alpha, &delta);
            let rc = problem.residual(&cand)?;
            let nc = rc.l2_norm();
            if nc < r_norm {
                u = cand;
                r = rc;
                r_norm = nc;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        newton_history.push(r_norm);
        if !improved {
            break;
        }
    }
    if r_norm >= config.newton_tol {
        return Err(Error::Solver(format!(
            "Newton stopped at residual {r_norm:.3e}; descent gradient history tail {:?}, Newton history {:?}",
            &descent_history[descent_history.len().saturating_sub(3)..],
            newton_history
        )));
    }

    let norm_sq = problem.norm_sq(&u);
    let mass = problem.positive_mass(&u)?;
    let (sup, inf, is_constant) = constancy(&u);
    if !(inf > 0.0) {
        return Err(Error::Solver(format!(
            "converged to a solution with inf u = {inf:.3e} <= 0"
        )));
    }
    let path_estimate = (0..=64)
        .map(|i| problem.energy(&u.scaled(i as f64 / 32.0)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SolutionReport {
        energy: problem.energy(&u)?,
        residual: r_norm,
        nehari_defect: (norm_sq - mass).abs(),
        norm_sq,
        sup,
        inf,
        is_constant,
        descent_iterations,
        newton_iterations,
        descent_history,
        newton_history,
        path_estimate,
        wall_time: clock.elapsed().as_secs_f64(),
        u,
    })
}

/// Solve from the Nehari-projected tent.
pub fn solve(domain: &Arc<RectDomain>, config: &SemilinearConfig) -> Result<SolutionReport> {
    config.validate(domain)?;
    let tent = tent_initializer(domain, config.eps, &config.tent_center(domain))?;
    solve_from(domain, config, tent)
}

/// A seeded band-limited perturbation with the given L^2 norm.
pub fn random_perturbation(
    domain: &Arc<RectDomain>,
    band: usize,
    norm: f64,
    seed: u64,
) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = SpectralField::zeros(domain);
    for f in 1..domain.num_modes() {
        let k = domain.multi_index(f);
        if k.iter().all(|&k| k < band) {
            let size = 1.0 + k.iter().sum::<usize>() as f64;
            w.coeffs_mut()[f] = rng.gen_range(-1.0..1.0) / size;
        }
    }
    let l2 = w.l2_norm();
    if l2 > 0.0 {
        w.scaled(norm / l2)
    } else {
        w
    }
}

/// `m_starts` solves: the plain tent, then the tent plus perturbations of
/// half its L^2 norm seeded by `config.seed + i`. Failed starts are kept.
pub fn perturbed_restart_scan(
    domain: &Arc<RectDomain>,
    config: &SemilinearConfig,
    m_starts: usize,
) -> Result<Vec<Result<SolutionReport>>> {
    if m_starts == 0 {
        return Err(Error::InvalidParameter(
            "at least one start is required".into(),
        ));
    }
    config.validate(domain)?;
    let tent = tent_initializer(domain, config.eps, &config.tent_center(domain))?;
    let size = tent.l2_norm();
    Ok((0..m_starts)
        .map(|i| {
            let start = if i == 0 {
                tent.clone()
            } else {
                let w =
                    random_perturbation(domain, 6, 0.5 * size, config.seed.wrapping_add(i as u64));
                tent.add_scaled(1.0, &w)
            };
            solve_from(domain, config, start)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Arc<RectDomain> {
        RectDomain::unit_square(n).unwrap()
    }

    #[test]
    fn constant_one_is_critical() {
        let d = square(16);
        for p in [1.5, 2.0, 2.9] {
            let one = SpectralField::constant(&d, 1.0);
            let e = energy(&one, 0.3, p).unwrap();
            assert!((e - (0.5 - 1.0 / (p + 1.0))).abs() < 1e-14);
            assert!(euler_lagrange_residual(&one, 0.3, p).unwrap().l2_norm() < 1e-14);
            assert!(grad_energy(&one, 0.3, p).unwrap().l2_norm() < 1e-14);
            assert!((nehari_scale(&one, 0.3, p).unwrap() - 1.0).abs() < 1e-14);
        }
        let zero = SpectralField::zeros(&d);
        assert_eq!(energy(&zero, 0.3, 2.0).unwrap(), 0.0);
        assert_eq!(
            euler_lagrange_residual(&zero, 0.3, 2.0).unwrap().l2_norm(),
            0.0
        );
        assert!(matches!(
            nehari_scale(&zero, 0.3, 2.0),
            Err(Error::VanishingPositivePart)
        ));
    }

    #[test]
    fn energy_of_negative_mode() {
        let d = square(32);
        let eps = 0.2;
        let u = SpectralField::mode(&d, &[1, 0]).scaled(-1.0);
        // (-phi)_+^3 with phi = sqrt 2 cos(pi x): 2^{3/2} int_{1/2}^1 |cos|^3 = 2^{3/2} (2 / (3 pi)).
        let mass = 2f64.powf(1.5) * 2.0 / (3.0 * std::f64::consts::PI);
        let expect = 0.5 * (1.0 + (eps * std::f64::consts::PI.powi(2)).sqrt()) - mass / 3.0;
        let got = energy(&u, eps, 2.0).unwrap();
        assert!((got - expect).abs() < 2e-3, "{got} vs {expect}");
    }

    #[test]
    fn config_validation() {
        let d = square(8);
        let mut c = SemilinearConfig::default();
        assert!(c.validate(&d).is_ok());
        c.p = 3.0;
        assert!(c.validate(&d).is_err());
        c.p = 1.0;
        assert!(c.validate(&d).is_err());
        c.p = 2.0;
        c.center = Some(vec![2.0, 0.0]);
        assert!(c.validate(&d).is_err());
        c.center = None;
        c.eps = 0.0;
        assert!(c.validate(&d).is_err());
        assert_eq!(SemilinearConfig::default().tent_center(&d), vec![0.5, 0.0]);
    }

    #[test]
    fn tent_shape() {
        let d = square(64);
        let t = tent_initializer(&d, 0.01, &[0.5, 0.5]).unwrap();
        assert!(t.mean() > 0.0);
        let nodal = NodalField::from_fn(&d, |x| {
            let r = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
            100.0 * (1.0 - r / 0.1).max(0.0)
        });
        let peak = d.nearest_node(&[0.5, 0.5]);
        assert!(nodal.values()[peak] >= nodal.max() - 1e-12);
        let support = nodal.superlevel_measure(0.0);
        assert!((support - std::f64::consts::PI * 0.01).abs() < 0.1 * std::f64::consts::PI * 0.01);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = square(16);
        let prob = Problem::new(&d, 0.1, 2.0, 2).unwrap();
        for seed in 0..4 {
            let u = SpectralField::constant(&d, 0.8)
                .add_scaled(1.0, &random_perturbation(&d, 5, 0.6, seed));
            let w = random_perturbation(&d, 8, 1.0, 100 + seed);
            let g = prob.gradient(&u).unwrap();
            let exact: f64 = g
                .coeffs()
                .iter()
                .zip(w.coeffs())
                .zip(&prob.diag)
                .map(|((g, w), d)| d * g * w)
                .sum();
            let fd = |delta: f64| {
                (prob.energy(&u.add_scaled(delta, &w)).unwrap()
                    - prob.energy(&u.add_scaled(-delta, &w)).unwrap())
                    / (2.0 * delta)
            };
            let e1 = (fd(1e-2) - exact).abs();
            let e2 = (fd(5e-3) - exact).abs();
            assert!(e2 < 0.3 * e1 || e2 < 1e-10, "{e1} {e2}");
        }
    }

    #[test]
    fn nehari_scaling_hits_the_constraint() {
        let d = square(16);
        let prob = Problem::new(&d, 0.05, 2.0, 2).unwrap();
        let u = tent_initializer(&d, 0.05, &[0.5, 0.0]).unwrap();
        let s = prob.nehari_scale(&u).unwrap();
        let v = u.scaled(s);
        let defect = (prob.norm_sq(&v) - prob.positive_mass(&v).unwrap()).abs();
        assert!(defect < 1e-12 * prob.norm_sq(&v));
        assert!((prob.nehari_scale(&v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_eps_gives_the_constant() {
        let d = square(16);
        let cfg = SemilinearConfig {
            eps: 100.0,
            ..Default::default()
        };
        let rep = solve(&d, &cfg).unwrap();
        assert!(rep.is_constant);
        assert!(rep.accepted(cfg.newton_tol));
        assert!((rep.sup - 1.0).abs() < 1e-8);
    }

    #[test]
    fn small_eps_gives_a_spike() {
        let d = square(32);
        let cfg = SemilinearConfig {
            eps: 0.01,
            ..Default::default()
        };
        let rep = solve(&d, &cfg).unwrap();
        assert!(!rep.is_constant);
        assert!(rep.accepted(cfg.newton_tol), "{rep:?}");
        assert!(rep.energy < 0.5 - 1.0 / 3.0);
        assert!(rep.path_estimate >= rep.energy - 1e-12);
        let doubled = euler_lagrange_residual(&rep.u.scaled(2.0), 0.01, 2.0).unwrap();
        assert!(doubled.l2_norm() > 1e-2);
    }

    #[test]
    fn dense_and_krylov_directions_agree() {
        let d = square(32);
        let prob = Problem::new(&d, 0.05, 2.0, 2).unwrap();
        let u =
            SpectralField::constant(&d, 1.0).add_scaled(1.0, &random_perturbation(&d, 6, 0.3, 3));
        let r = prob.residual(&u).unwrap();
        let dense = prob.newton_direction(&u, &r).unwrap();
        let big = square(48);
        let prob_big = Problem::new(&big, 0.05, 2.0, 2).unwrap();
        let ub = u.resample(&big).unwrap();
        let rb = prob_big.residual(&ub).unwrap();
        let krylov = prob_big.newton_direction(&ub, &rb).unwrap();
        let jac = prob_big.jacobian(&ub).unwrap();
        let applied = jac(&krylov);
        let err: f64 = applied
            .iter()
            .zip(rb.coeffs())
            .map(|(a, b)| (a + b).powi(2))
            .sum();
        assert!(err.sqrt() < 1e-8 * rb.l2_norm());
        assert_eq!(dense.len(), 1024);
    }
}
