//! Parameter sweeps and the scaling, shape and threshold diagnostics run on
//! their output.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{NodalField, RectDomain, SpectralField};
use crate::error::{Error, Result};
use crate::operators::{frac_apply, frac_quarter_norm_sq, gagliardo_seminorm_sq};
use crate::semilinear::{perturbed_restart_scan, solve, Problem, SemilinearConfig};

/// Sweep settings shared by every `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub eps_list: Vec<f64>,
    pub base: SemilinearConfig,
    pub lengths: Vec<f64>,
    /// Nodes per unit length before the resolution floor is applied.
    pub nodes_per_unit: usize,
    /// Minimum number of grid cells across `eps^{1/2}`.
    pub min_cells: f64,
    /// Exponents `q` of the recorded `int u^q`.
    pub q_list: Vec<f64>,
    /// Level-set thresholds as fractions of the smallest `sup u` of the sweep.
    pub eta_factors: Vec<f64>,
    /// Harnack ball radius in units of `eps^{1/2}`.
    pub harnack_radius: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            eps_list: logspace(1e-3, 1e-1, 9),
            base: SemilinearConfig::default(),
            lengths: vec![1.0, 1.0],
            nodes_per_unit: 128,
            min_cells: 6.0,
            q_list: vec![1.0, 2.0, 3.0],
            eta_factors: vec![0.25, 0.5],
            harnack_radius: 1.0,
        }
    }
}

impl SweepSpec {
    /// Grid for one `eps`: at least `nodes_per_unit` per unit length and at
    /// least `min_cells` cells across `eps^{1/2}`, rounded up to a multiple
    /// of 16.
    pub fn grid_for(&self, eps: f64) -> Vec<usize> {
        let per_unit = (self.nodes_per_unit as f64).max(self.min_cells / eps.sqrt());
        self.lengths
            .iter()
            .map(|l| {
                let n = (per_unit * l).ceil() as usize;
                n.div_ceil(16) * 16
            })
            .collect()
    }
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.log10(), b.log10());
    (0..n)
        .map(|i| 10f64.powf(la + (lb - la) * i as f64 / (n - 1) as f64))
        .collect()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    pub dim: usize,
    pub grid: Vec<usize>,
    pub energy: f64,
    /// `int u^{p+1}`.
    pub mass_p1: f64,
    /// `(q, int u^q)`.
    pub masses: Vec<(f64, f64)>,
    pub sup: f64,
    pub inf: f64,
    pub etas: Vec<f64>,
    /// `|{u > eta}|` for each entry of `etas`.
    pub measures: Vec<f64>,
    /// Cubes of side `eps^{1/2}` meeting `{u > etas[0]}`.
    pub cubes: usize,
    /// Harnack ratios on balls around the maximum and the box center.
    pub harnack: Vec<f64>,
    pub is_constant: bool,
    pub residual: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub epsilon: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Sorted by `eps`.
    pub records: Vec<SweepRecord>,
    /// Solutions aligned with `records`.
    pub solutions: Vec<SpectralField>,
    pub failures: Vec<SweepFailure>,
}

/// Solves at every `eps` in parallel and evaluates the diagnostics.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.eps_list.is_empty() || spec.eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter(
            "epsilon list must be nonempty and positive".into(),
        ));
    }
    let mut eps_list = spec.eps_list.clone();
    eps_list.sort_by(f64::total_cmp);
    eps_list.dedup();

    let outcomes: Vec<(f64, Result<crate::semilinear::SolutionReport>)> = eps_list
        .par_iter()
        .map(|&eps| {
            let run = || {
                let domain =
                    RectDomain::new(spec.lengths.clone(), spec.grid_for(eps), spec.grid_for(eps))?;
                let cfg = SemilinearConfig {
                    eps,
                    ..spec.base.clone()
                };
                solve(&domain, &cfg)
            };
            (eps, run())
        })
        .collect();

    let mut failures = Vec::new();
    let mut solved = Vec::new();
    for (eps, out) in outcomes {
        match out {
            Ok(rep) => solved.push((eps, rep)),
            Err(e) => failures.push(SweepFailure {
                epsilon: eps,
                message: e.to_string(),
            }),
        }
    }
    let min_sup = solved
        .iter()
        .map(|(_, r)| r.sup)
        .fold(f64::INFINITY, f64::min);
    let etas: Vec<f64> = spec.eta_factors.iter().map(|f| f * min_sup).collect();

    let records = solved
        .par_iter()
        .map(|(eps, rep)| {
            let eps = *eps;
            let p = spec.base.p;
            let domain = rep.u.domain().clone();
            let problem = Problem::new(&domain, eps, p, spec.base.oversample)?;
            let nodal = rep.u.to_nodal();
            let masses = spec
                .q_list
                .iter()
                .map(|&q| Ok((q, positive_power_integral(&nodal, q))))
                .collect::<Result<Vec<_>>>()?;
            let measures = etas
                .iter()
                .map(|&eta| nodal.superlevel_measure(eta))
                .collect();
            let cubes = match etas.first() {
                Some(&eta) => cube_cover(&nodal, eps, eta)?,
                None => 0,
            };
            let peak = domain.node(argmax(nodal.values()));
            let middle: Vec<f64> = spec.lengths.iter().map(|l| l / 2.0).collect();
            let harnack = harnack_ratio(
                &nodal,
                eps,
                p,
                &[peak, middle],
                spec.harnack_radius * eps.sqrt(),
            )?
            .into_iter()
            .map(|b| b.ratio)
            .collect();
            Ok(SweepRecord {
                epsilon: eps,
                dim: domain.dim(),
                grid: domain.grid().to_vec(),
                energy: rep.energy,
                mass_p1: problem.positive_mass(&rep.u)?,
                masses,
                sup: rep.sup,
                inf: rep.inf,
                etas: etas.clone(),
                measures,
                cubes,
                harnack,
                is_constant: rep.is_constant,
                residual: rep.residual,
                seed: spec.base.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let solutions = solved.into_iter().map(|(_, r)| r.u).collect();
    Ok(SweepResult {
        records,
        solutions,
        failures,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// `int u_+^q` by the midpoint rule.
fn positive_power_integral(u: &NodalField, q: f64) -> f64 {
    u.values()
        .iter()
        .map(|&v| if v > 0.0 { v.powf(q) } else { 0.0 })
        .sum::<f64>()
        * u.domain().cell_volume()
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in `ln y`.
    pub residual: f64,
}

pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<LogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} points for a line fit",
            x.len().min(y.len())
        )));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InsufficientData(
            "log fit needs positive data".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(LogFit {
        slope,
        intercept,
        residual,
    })
}

fn nonconstant(records: &[SweepRecord]) -> Vec<&SweepRecord> {
    records.iter().filter(|r| !r.is_constant).collect()
}

/// Slope of `ln I_eps` against `ln eps` over the nonconstant records.
pub fn energy_scaling_fit(records: &[SweepRecord]) -> Result<LogFit> {
    let rec = nonconstant(records);
    if rec.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} nonconstant records, need 4",
            rec.len()
        )));
    }
    let x: Vec<f64> = rec.iter().map(|r| r.epsilon).collect();
    let y: Vec<f64> = rec.iter().map(|r| r.energy).collect();
    log_log_fit(&x, &y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingBand {
    pub min: f64,
    pub max: f64,
    /// Ratios move monotonically in `eps` and span more than a factor 10.
    pub drift: bool,
}

impl ScalingBand {
    pub fn width(&self) -> f64 {
        self.max / self.min
    }
}

fn band(ratios: &[f64]) -> ScalingBand {
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let up = ratios.windows(2).all(|w| w[1] >= w[0]);
    let down = ratios.windows(2).all(|w| w[1] <= w[0]);
    ScalingBand {
        min,
        max,
        drift: (up || down) && max > 10.0 * min,
    }
}

/// Band of `int u^q / eps^{n/2}` (`eps^{nq/2}` for `q < 1`) over the
/// nonconstant records. `q = p + 1` reads the `mass_p1` column.
pub fn lq_scaling(records: &[SweepRecord], q: f64, p: f64) -> Result<ScalingBand> {
    if !(q > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "exponent q = {q} must be positive"
        )));
    }
    let rec = nonconstant(records);
    if rec.is_empty() {
        return Err(Error::InsufficientData("no nonconstant records".into()));
    }
    let ratios = rec
        .iter()
        .map(|r| {
            let value = if q == p + 1.0 {
                r.mass_p1
            } else {
                r.masses
                    .iter()
                    .find(|(qq, _)| *qq == q)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::InsufficientData(format!("q = {q} not recorded")))?
            };
            let half = r.dim as f64 / 2.0;
            let power = if q >= 1.0 { half } else { half * q };
            Ok(value / r.epsilon.powf(power))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(band(&ratios))
}

/// Slope of `ln |{u > eta}|` against `ln eps` for `etas[eta_index]`.
pub fn measure_decay(records: &[SweepRecord], eta_index: usize) -> Result<LogFit> {
    let rec = nonconstant(records);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut empty = Vec::new();
    for r in rec {
        let m = *r.measures.get(eta_index).ok_or_else(|| {
            Error::InvalidParameter(format!("no level set with index {eta_index}"))
        })?;
        if m > 0.0 {
            x.push(r.epsilon);
            y.push(m);
        } else {
            empty.push(r.epsilon);
        }
    }
    if !empty.is_empty() {
        return Err(Error::InsufficientData(format!(
            "empty level sets at eps = {empty:?}"
        )));
    }
    log_log_fit(&x, &y)
}

/// Number of cubes `prod [k_i l, (k_i + 1) l)`, `l = eps^{1/2}`, containing a
/// node where `u > eta`.
pub fn cube_cover(u: &NodalField, eps: f64, eta: f64) -> Result<usize> {
    let domain = u.domain();
    let side = eps.sqrt();
    if side < 2.0 * domain.max_spacing() {
        return Err(Error::InvalidParameter(format!(
            "cube side {side:.3e} is below two grid spacings ({:.3e})",
            2.0 * domain.max_spacing()
        )));
    }
    let cubes: BTreeSet<Vec<usize>> = u
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > eta)
        .map(|(j, _)| {
            domain
                .node(j)
                .iter()
                .map(|x| (x / side).floor() as usize)
                .collect()
        })
        .collect();
    Ok(cubes.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackBall {
    pub center: Vec<f64>,
    pub radius: f64,
    /// `sup / inf` of `u` over the ball.
    pub ratio: f64,
    /// `R (||c||_inf / eps)^{1/2}` with `c = 1 - u^{p-1}`.
    pub control: f64,
}

pub fn harnack_ratio(
    u: &NodalField,
    eps: f64,
    p: f64,
    centers: &[Vec<f64>],
    radius: f64,
) -> Result<Vec<HarnackBall>> {
    let domain = u.domain();
    let c_inf = u.values().iter().fold(0.0f64, |m, &v| {
        m.max((1.0 - v.max(0.0).powf(p - 1.0)).abs())
    });
    let control = radius * (c_inf / eps).sqrt();
    centers
        .iter()
        .map(|c| {
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for (j, &v) in u.values().iter().enumerate() {
                let r2: f64 = domain
                    .node(j)
                    .iter()
                    .zip(c)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                if r2 <= radius * radius {
                    hi = hi.max(v);
                    lo = lo.min(v);
                }
            }
            if hi == f64::NEG_INFINITY {
                return Err(Error::InvalidParameter(format!(
                    "ball around {c:?} of radius {radius:.3e} has no nodes"
                )));
            }
            if !(lo > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "u is not positive on the ball around {c:?}"
                )));
            }
            Ok(HarnackBall {
                center: c.clone(),
                radius,
                ratio: hi / lo,
                control,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoserChain {
    /// Trace embedding exponent `2n / (n - 1)`.
    pub nu: f64,
    pub s: Vec<f64>,
    /// `ln int u^{p - 1 + 2 s_j}`.
    pub log_integrals: Vec<f64>,
    /// `||u||_{L^{s_j nu}}`.
    pub norms: Vec<f64>,
    /// `(int u^{s_j nu})^{2/nu} / (s_j eps^{-1/2} int u^{p-1+2s_j})`.
    pub chain_ratios: Vec<f64>,
    /// `int u^{p - 1 + 2 s_j} / eps^{n/2}`.
    pub scaled_integrals: Vec<f64>,
    /// Stopped early because a value left the floating-point range.
    pub truncated: bool,
}

/// `ln int u^q` accumulated in the log domain.
fn log_power_integral(u: &NodalField, q: f64) -> f64 {
    let logs: Vec<f64> = u
        .values()
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| q * v.ln())
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln() + u.domain().cell_volume().ln()
}

/// The exponent chain `p - 1 + 2 s_0 = nu`, `p - 1 + 2 s_{j+1} = nu s_j`
/// and the norms it controls, for `j = 0..=j_max`.
pub fn moser_chain(u: &NodalField, eps: f64, p: f64, j_max: usize) -> Result<MoserChain> {
    let n = u.domain().dim();
    if n < 2 {
        return Err(Error::InvalidParameter("the chain needs n >= 2".into()));
    }
    if j_max > 8 {
        return Err(Error::InvalidParameter(format!(
            "j_max = {j_max} exceeds 8"
        )));
    }
    if !(u.min() > 0.0) {
        return Err(Error::InvalidParameter("u must be positive".into()));
    }
    let nu = 2.0 * n as f64 / (n as f64 - 1.0);
    let mut chain = MoserChain {
        nu,
        s: Vec::new(),
        log_integrals: Vec::new(),
        norms: Vec::new(),
        chain_ratios: Vec::new(),
        scaled_integrals: Vec::new(),
        truncated: false,
    };
    let mut s = (nu - p + 1.0) / 2.0;
    for _ in 0..=j_max {
        let log_int = log_power_integral(u, p - 1.0 + 2.0 * s);
        let log_top = log_power_integral(u, s * nu);
        let log_ratio = 2.0 / nu * log_top - (s.ln() - 0.5 * eps.ln() + log_int);
        let scaled = log_int - n as f64 / 2.0 * eps.ln();
        if !log_int.is_finite()
            || !log_top.is_finite()
            || log_ratio.abs() > 700.0
            || scaled.abs() > 700.0
        {
            chain.truncated = true;
            break;
        }
        chain.s.push(s);
        chain.log_integrals.push(log_int);
        chain.norms.push((log_top / (s * nu)).exp());
        chain.chain_ratios.push(log_ratio.exp());
        chain.scaled_integrals.push(scaled.exp());
        s = (nu * s - p + 1.0) / 2.0;
    }
    Ok(chain)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformBound {
    pub max_sup: f64,
    /// `sup u` at the smallest `eps` over `sup u` at the largest.
    pub drift_ratio: f64,
    /// Raised when the drift ratio reaches 5.
    pub drift: bool,
}

pub fn uniform_bound_report(records: &[SweepRecord]) -> Result<UniformBound> {
    if records.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} records, need 4",
            records.len()
        )));
    }
    let mut sorted: Vec<&SweepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let max_sup = sorted
        .iter()
        .map(|r| r.sup)
        .fold(f64::NEG_INFINITY, f64::max);
    let drift_ratio = sorted[0].sup / sorted[sorted.len() - 1].sup;
    Ok(UniformBound {
        max_sup,
        drift_ratio,
        drift: drift_ratio >= 5.0,
    })
}

/// `[((p C_sup^{p-1} - 1) / (C1 C2))_+]^2`.
///
/// `C1` and `C2` enter through `eps^{1/2} C1 C2 ||phi||^2 <= eps^{1/2} C1 [phi]^2 <= ||(-eps Delta_N)^{1/4} phi||^2`
/// for zero-mean `phi`; on the cosine basis with the spectral seminorm
/// their product is at most `lambda_1^{1/2}`.
pub fn epsilon_star_estimate(p: f64, c_sup: f64, c1: f64, c2: f64) -> Result<f64> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::InvalidParameter("C1 and C2 must be positive".into()));
    }
    let num = (p * c_sup.powf(p - 1.0) - 1.0).max(0.0);
    Ok((num / (c1 * c2)).powi(2))
}

/// Fitted constants of [`epsilon_star_estimate`]: `C1` is the smallest
/// observed `||(-Delta_N)^{1/4} phi||^2 / [phi]^2` and `C2` the smallest
/// `[phi]^2 / ||phi - phi_Omega||^2`, with `[.]` the Gagliardo seminorm,
/// over the first few cosine modes and seeded random smooth fields.
pub fn fit_dichotomy_constants(
    domain: &Arc<RectDomain>,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut corpus = Vec::new();
    for f in 1..domain.num_modes().min(6) {
        let mut v = SpectralField::zeros(domain);
        v.coeffs_mut()[f] = 1.0;
        corpus.push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let s = rand::Rng::gen::<u64>(&mut rng);
        corpus.push(crate::semilinear::random_perturbation(domain, 6, 1.0, s));
    }
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::INFINITY;
    for v in &corpus {
        let gag = gagliardo_seminorm_sq(&v.to_nodal());
        let spec = frac_quarter_norm_sq(v, 1.0);
        let l2 = v.zero_mean_part().l2_norm_sq();
        if gag > 0.0 && l2 > 0.0 {
            c1 = c1.min(spec / gag);
            c2 = c2.min(gag / l2);
        }
    }
    if !c1.is_finite() {
        return Err(Error::InsufficientData("no nonconstant samples".into()));
    }
    Ok((c1, c2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionScan {
    /// `(eps, number of nonconstant starts, number of failed starts)`.
    pub evaluations: Vec<(f64, usize, usize)>,
    /// Largest `eps` seen with a nonconstant start.
    pub below: f64,
    /// Smallest `eps` seen with all starts constant.
    pub above: f64,
}

/// Counts nonconstant solutions among `starts` restarts.
pub fn restart_census(
    domain: &Arc<RectDomain>,
    config: &SemilinearConfig,
    starts: usize,
) -> Result<(usize, usize)> {
    let reports = perturbed_restart_scan(domain, config, starts)?;
    let failed = reports.iter().filter(|r| r.is_err()).count();
    let nonconstant = reports
        .iter()
        .filter(|r| matches!(r, Ok(rep) if !rep.is_constant))
        .count();
    Ok((nonconstant, failed))
}

/// Bisection in `ln eps` for the largest `eps` at which restarts still find
/// a nonconstant solution. Needs a nonconstant start at `lo` and only
/// constant ones at `hi`.
pub fn transition_scan(
    domain: &Arc<RectDomain>,
    base: &SemilinearConfig,
    lo: f64,
    hi: f64,
    starts: usize,
    steps: usize,
) -> Result<TransitionScan> {
    let census = |eps: f64| {
        restart_census(
            domain,
            &SemilinearConfig {
                eps,
                ..base.clone()
            },
            starts,
        )
    };
    let mut evaluations = Vec::new();
    let (n_lo, f_lo) = census(lo)?;
    evaluations.push((lo, n_lo, f_lo));
    let (n_hi, f_hi) = census(hi)?;
    evaluations.push((hi, n_hi, f_hi));
    if n_lo == 0 || n_hi > 0 {
        return Err(Error::InsufficientData(format!(
            "bracket [{lo}, {hi}] does not separate nonconstant ({n_lo}) from constant ({n_hi}) solutions"
        )));
    }
    let (mut below, mut above) = (lo, hi);
    for _ in 0..steps {
        let mid = (below * above).sqrt();
        let (n, f) = census(mid)?;
        evaluations.push((mid, n, f));
        if n > 0 {
            below = mid;
        } else {
            above = mid;
        }
    }
    Ok(TransitionScan {
        evaluations,
        below,
        above,
    })
}

/// How the nonlocal chemotaxis parameters map to `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KsMapping {
    /// `eps = D2 / a`.
    Linear,
    /// `eps = (D2 / a)^2`.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSParams {
    pub d1: f64,
    pub d2: f64,
    pub chi: f64,
    pub a: f64,
    pub b: f64,
    /// Prescribed mean of `rho`.
    pub mean: f64,
    pub mapping: KsMapping,
}

impl KSParams {
    pub fn p(&self) -> f64 {
        self.chi / self.d1
    }

    pub fn eps(&self) -> f64 {
        match self.mapping {
            KsMapping::Linear => self.d2 / self.a,
            KsMapping::Squared => (self.d2 / self.a).powi(2),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = [self.d1, self.d2, self.chi, self.a, self.b]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::InvalidParameter(
                "D1, D2, chi, a, b must be positive".into(),
            ));
        }
        if !(self.mean > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mean {} must be positive",
                self.mean
            )));
        }
        let p = self.p();
        let upper = if n == 1 {
            f64::INFINITY
        } else {
            (n as f64 + 1.0) / (n as f64 - 1.0)
        };
        if !(p > 1.0 && p < upper) {
            return Err(Error::InvalidParameter(format!(
                "chi / D1 = {p} outside (1, {upper})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KsReconstruction {
    pub rho: NodalField,
    pub c: NodalField,
    pub lambda: f64,
    pub beta: f64,
    /// `||D2 (-Delta_N)^{1/2} c + a c - b rho||_{L^2}`.
    pub chemical_residual: f64,
    /// `max |D1 grad rho - chi rho grad log c| / max |D1 grad rho|`.
    pub flux_residual: f64,
}

/// Steady state `(rho, c)` from a solution `u` computed at `eps = ks.eps()`
/// and `p = ks.p()`: `c = beta u`, `rho = lambda c^p`, with
/// `beta = b mean / (a mean(u^p))` and `lambda = a / (b beta^{p-1})`.
pub fn keller_segel_reconstruct(
    u: &SpectralField,
    ks: &KSParams,
    oversample: usize,
) -> Result<KsReconstruction> {
    let domain = u.domain();
    ks.validate(domain.dim())?;
    let p = ks.p();
    let problem = Problem::new(domain, ks.eps(), p, oversample)?;
    let g = problem.nonlinearity(u)?;
    let mean_up = g.mean();
    if !(mean_up > 0.0) {
        return Err(Error::VanishingPositivePart);
    }
    let beta = ks.b * ks.mean / (ks.a * mean_up);
    let lambda = ks.a / (ks.b * beta.powf(p - 1.0));
    let c_hat = u.scaled(beta);
    let rho_hat = g.scaled(lambda * beta.powf(p));
    let chemical = frac_apply(&c_hat, 1.0, 0.5)?
        .scaled(ks.d2)
        .add_scaled(ks.a, &c_hat)
        .add_scaled(-ks.b, &rho_hat);

    let c = c_hat.to_nodal();
    if !(c.min() > 0.0) {
        return Err(Error::Validation(
            "c must be positive for the flux identity".into(),
        ));
    }
    let rho = c.map(|v| lambda * v.powf(p));
    let grad_c = c_hat.gradient();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 0..domain.num_nodes() {
        let cv = c.values()[j];
        let rv = rho.values()[j];
        for gc in &grad_c {
            let dc = gc.values()[j];
            let drho = lambda * p * cv.powf(p - 1.0) * dc;
            let lhs = ks.d1 * drho;
            worst = worst.max((lhs - ks.chi * rv * dc / cv).abs());
            scale = scale.max(lhs.abs());
        }
    }
    Ok(KsReconstruction {
        rho,
        c,
        lambda,
        beta,
        chemical_residual: chemical.l2_norm(),
        flux_residual: if scale > 0.0 { worst / scale } else { worst },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(eps: f64, energy: f64, sup: f64) -> SweepRecord {
        SweepRecord {
            epsilon: eps,
            dim: 2,
            grid: vec![16, 16],
            energy,
            mass_p1: 6.0 * energy,
            masses: vec![(1.0, eps)],
            sup,
            inf: 0.1,
            etas: vec![0.5],
            measures: vec![eps],
            cubes: 1,
            harnack: vec![],
            is_constant: false,
            residual: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn fitter_self_test() {
        let recs: Vec<_> = logspace(1e-3, 1e-1, 9)
            .into_iter()
            .map(|e| record(e, e, 2.0))
            .collect();
        let fit = energy_scaling_fit(&recs).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12 && fit.residual < 1e-12);
        let b = lq_scaling(&recs, 3.0, 2.0).unwrap();
        assert!((b.min - 6.0).abs() < 1e-12 && (b.max - 6.0).abs() < 1e-12 && !b.drift);
        assert!((measure_decay(&recs, 0).unwrap().slope - 1.0).abs() < 1e-12);
        assert!(energy_scaling_fit(&recs[..3]).is_err());
        assert!(lq_scaling(&recs, 7.0, 2.0).is_err());
    }

    #[test]
    fn drift_detectors() {
        let eps = logspace(1e-3, 1e-1, 5);
        let diverging: Vec<_> = eps.iter().map(|&e| record(e, e, 1.0 / e)).collect();
        let ub = uniform_bound_report(&diverging).unwrap();
        assert!(ub.drift && ub.drift_ratio > 5.0);
        let steady: Vec<_> = eps.iter().map(|&e| record(e, e, 3.0)).collect();
        assert!(!uniform_bound_report(&steady).unwrap().drift);
        let mut wild = steady.clone();
        for r in &mut wild {
            r.masses = vec![(1.0, r.epsilon * r.epsilon)];
        }
        assert!(lq_scaling(&wild, 1.0, 2.0).unwrap().drift);
    }

    #[test]
    fn cube_cover_examples() {
        let d = RectDomain::unit_square(64).unwrap();
        let one = NodalField::constant(&d, 1.0);
        assert_eq!(cube_cover(&one, 0.01, 0.5).unwrap(), 100);
        let spike = NodalField::from_fn(&d, |x| {
            let r = ((x[0] - 0.45).powi(2) + (x[1] - 0.45).powi(2)).sqrt();
            if r < 0.1 / 4.0 {
                1.0
            } else {
                0.0
            }
        });
        assert!(cube_cover(&spike, 0.01, 0.5).unwrap() <= 4);
        assert!(cube_cover(&one, 1e-4, 0.5).is_err());
        assert_eq!(cube_cover(&one, 0.01, 2.0).unwrap(), 0);
    }

    #[test]
    fn harnack_and_moser_on_constants() {
        let d = RectDomain::unit_square(32).unwrap();
        let one = NodalField::constant(&d, 1.0);
        let balls = harnack_ratio(&one, 0.1, 2.0, &[vec![0.5, 0.5]], 0.2).unwrap();
        assert_eq!(balls[0].ratio, 1.0);
        assert_eq!(balls[0].control, 0.0);
        let chain = moser_chain(&one, 0.1, 2.0, 4).unwrap();
        assert_eq!(chain.s[0], 1.5);
        assert_eq!(chain.s[1], 2.5);
        for (l, n) in chain.log_integrals.iter().zip(&chain.norms) {
            assert!(l.abs() < 1e-12 && (n - 1.0).abs() < 1e-12);
        }
        assert!(moser_chain(&one, 0.1, 2.0, 9).is_err());
    }

    #[test]
    fn moser_chain_survives_large_powers() {
        let d = RectDomain::unit_square(32).unwrap();
        let u = NodalField::from_fn(&d, |x| {
            1.0 + 40.0 * (-(x[0] * x[0] + x[1] * x[1]) / 0.01).exp()
        });
        let chain = moser_chain(&u, 0.01, 2.0, 8).unwrap();
        assert!(!chain.norms.is_empty());
        let last = *chain.norms.last().unwrap();
        assert!(last <= u.max() * (1.0 + 1e-12) && last > 0.5 * u.max());
    }

    #[test]
    fn epsilon_star_clamps() {
        assert_eq!(epsilon_star_estimate(2.0, 0.4, 1.0, 1.0).unwrap(), 0.0);
        let pi = std::f64::consts::PI;
        let e = epsilon_star_estimate(2.0, 1.0, 1.0, pi).unwrap();
        assert!((e - 1.0 / (pi * pi)).abs() < 1e-15);
    }

    #[test]
    fn fitted_constants_respect_the_spectral_product() {
        let d = RectDomain::unit_square(48).unwrap();
        let (c1, c2) = fit_dichotomy_constants(&d, 6, 1).unwrap();
        assert!(c1 > 0.0 && c2 > 0.0);
        assert!(c1 * c2 <= std::f64::consts::PI * 1.05);
    }

    #[test]
    fn ks_constant_state() {
        let d = RectDomain::unit_square(16).unwrap();
        let ks = KSParams {
            d1: 1.0,
            d2: 0.5,
            chi: 2.0,
            a: 2.0,
            b: 3.0,
            mean: 0.7,
            mapping: KsMapping::Squared,
        };
        assert_eq!(ks.eps(), 0.0625);
        let one = SpectralField::constant(&d, 1.0);
        let rec = keller_segel_reconstruct(&one, &ks, 2).unwrap();
        assert!(rec.rho.values().iter().all(|v| (v - 0.7).abs() < 1e-13));
        assert!(rec
            .c
            .values()
            .iter()
            .all(|v| (v - 3.0 * 0.7 / 2.0).abs() < 1e-13));
        assert!(rec.chemical_residual < 1e-12);
        let bad = KSParams {
            chi: 4.0,
            ..ks.clone()
        };
        assert!(keller_segel_reconstruct(&one, &bad, 2).is_err());
        let linear = KSParams {
            mapping: KsMapping::Linear,
            ..ks
        };
        assert_eq!(linear.eps(), 0.25);
    }

    #[test]
    fn grid_floor() {
        let spec = SweepSpec::default();
        assert_eq!(spec.grid_for(0.1), vec![128, 128]);
        assert_eq!(spec.grid_for(1e-3), vec![192, 192]);
    }
}
