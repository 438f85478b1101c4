//! Command-line driver. Exit status 0 on success, 1 on validation failure
//! (bad input or a check that did not hold), 2 on solver failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::domain::{NodalField, RectDomain, SpectralField};
use crate::error::{Error, Result};
use crate::experiments::{
    cube_cover, energy_scaling_fit, epsilon_star_estimate, fit_dichotomy_constants,
    keller_segel_reconstruct, lq_scaling, measure_decay, run_sweep, uniform_bound_report, KSParams,
    KsMapping, SweepSpec,
};
use crate::extension::{
    dirichlet_energy, dtn_residual, extend, trace_embedding_ratio, trace_inequality_gap,
    ZeroTraceBump,
};
use crate::io::{
    emit_csv, emit_manifest, parse_eps_grid, resolve, threads_from_env, EigenImport, FileConfig,
    RunManifest,
};
use crate::linear::{solve_linear, solve_linear_by_quadrature};
use crate::operators::{
    frac_apply, frac_quarter_norm_sq, gagliardo_seminorm_sq, heat_kernel, heat_kernel_row,
    poisson_kernel, poisson_kernel_row, semigroup_route_frac_half, PoissonRoute,
};
use crate::quadrature::QuadratureSpec;
use crate::semilinear::{random_perturbation, solve, Problem, SemilinearConfig};

#[derive(Parser, Debug)]
#[command(
    name = "fracneumann",
    version,
    about = "Fractional Neumann problems on boxes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the semilinear problem once.
    Solve(SolveArgs),
    /// Solve over a grid of epsilon values and fit the scaling laws.
    Sweep(SweepArgs),
    /// Run a suite of invariant checks.
    Verify(VerifyArgs),
    /// Tabulate heat and Poisson kernels.
    Kernels(KernelArgs),
    /// Reconstruct a chemotaxis steady state.
    Ks(KsArgs),
    /// Validate an eigenpair file.
    ImportEigen(ImportArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    lx: Option<f64>,
    #[arg(long)]
    ly: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tent center, comma separated.
    #[arg(long, value_delimiter = ',')]
    center: Option<Vec<f64>>,
    #[arg(long)]
    oversample: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// `a:b:log:n`, `a:b:lin:n` or a comma-separated list.
    #[arg(long)]
    eps: Option<String>,
    /// Reuse the configuration recorded in a manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Operators,
    Extension,
    Linear,
    Semilinear,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Heat times.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.2,1")]
    t: Vec<f64>,
    /// Poisson heights.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.2,1")]
    y: Vec<f64>,
    /// Source point x, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.4")]
    x: Vec<f64>,
    /// Target point z, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.5")]
    z: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MappingArg {
    Linear,
    Squared,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct KsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    d1: Option<f64>,
    #[arg(long)]
    d2: Option<f64>,
    #[arg(long)]
    chi: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long, value_enum)]
    mapping: Option<MappingArg>,
    /// Largest accepted chemical-equation residual.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args, Debug)]
struct ImportArgs {
    file: PathBuf,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Solver(_)
        | Error::VanishingPositivePart
        | Error::Quadrature { .. }
        | Error::Truncation { .. } => 2,
        _ => 1,
    }
}

/// Runs the tool on `args` (program name first) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match threads_from_env() {
        Ok(Some(n)) => {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    }
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Kernels(a) => cmd_kernels(a),
        Command::Ks(a) => cmd_ks(a),
        Command::ImportEigen(a) => cmd_import(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Fills every solver-related key, flag first, then file, then default.
fn resolve_common(flags: &Common, file: &FileConfig) -> FileConfig {
    let d = SemilinearConfig::default();
    FileConfig {
        epsilon: file.epsilon,
        p: Some(resolve(flags.p, file.p, d.p)),
        nx: Some(resolve(flags.nx, file.nx, 128)),
        ny: Some(resolve(flags.ny, file.ny, 128)),
        lx: Some(resolve(flags.lx, file.lx, 1.0)),
        ly: Some(resolve(flags.ly, file.ly, 1.0)),
        seed: Some(resolve(flags.seed, file.seed, d.seed)),
        step: Some(file.step.unwrap_or(d.step)),
        descent_tol: Some(file.descent_tol.unwrap_or(d.descent_tol)),
        newton_tol: Some(file.newton_tol.unwrap_or(d.newton_tol)),
        max_descent: Some(file.max_descent.unwrap_or(d.max_descent)),
        max_newton: Some(file.max_newton.unwrap_or(d.max_newton)),
        oversample: Some(resolve(flags.oversample, file.oversample, d.oversample)),
        center: flags.center.clone().or_else(|| file.center.clone()),
        eps: file.eps.clone(),
        min_cells: file.min_cells,
        ..file.clone()
    }
}

fn load_file(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

/// Solver settings of a resolved configuration.
pub fn solver_config(cfg: &FileConfig) -> SemilinearConfig {
    let d = SemilinearConfig::default();
    SemilinearConfig {
        eps: cfg.epsilon.unwrap_or(d.eps),
        p: cfg.p.unwrap_or(d.p),
        step: cfg.step.unwrap_or(d.step),
        descent_tol: cfg.descent_tol.unwrap_or(d.descent_tol),
        newton_tol: cfg.newton_tol.unwrap_or(d.newton_tol),
        max_descent: cfg.max_descent.unwrap_or(d.max_descent),
        max_newton: cfg.max_newton.unwrap_or(d.max_newton),
        oversample: cfg.oversample.unwrap_or(d.oversample),
        center: cfg.center.clone(),
        seed: cfg.seed.unwrap_or(d.seed),
    }
}

/// The box of a resolved configuration.
pub fn domain_of(cfg: &FileConfig) -> Result<Arc<RectDomain>> {
    let grid = vec![cfg.nx.unwrap_or(128), cfg.ny.unwrap_or(128)];
    RectDomain::new(
        vec![cfg.lx.unwrap_or(1.0), cfg.ly.unwrap_or(1.0)],
        grid.clone(),
        grid,
    )
}

/// Sweep settings of a resolved configuration; `nx / lx` nodes per unit length.
pub fn sweep_spec(cfg: &FileConfig) -> Result<SweepSpec> {
    let d = SweepSpec::default();
    let lx = cfg.lx.unwrap_or(1.0);
    let eps_list = match &cfg.eps {
        Some(text) => parse_eps_grid(text)?,
        None => d.eps_list.clone(),
    };
    Ok(SweepSpec {
        eps_list,
        base: solver_config(cfg),
        lengths: vec![lx, cfg.ly.unwrap_or(1.0)],
        nodes_per_unit: (cfg.nx.unwrap_or(128) as f64 / lx).round() as usize,
        min_cells: cfg.min_cells.unwrap_or(d.min_cells),
        ..d
    })
}

fn out_dir(flags: &Common, default: &str) -> Result<PathBuf> {
    let dir = flags.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_nodal_csv(path: &Path, fields: &[(&str, &NodalField)]) -> Result<()> {
    let domain = fields[0].1.domain();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let mut header: Vec<String> = (0..domain.dim()).map(|i| format!("x{i}")).collect();
    header.extend(fields.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)
        .map_err(|e| Error::Parse(e.to_string()))?;
    for j in 0..domain.num_nodes() {
        let mut row: Vec<String> = domain.node(j).iter().map(|x| format!("{x:.16e}")).collect();
        row.extend(
            fields
                .iter()
                .map(|(_, f)| format!("{:.16e}", f.values()[j])),
        );
        w.write_record(&row)
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportSummary {
    epsilon: f64,
    p: f64,
    energy: f64,
    residual: f64,
    nehari_defect: f64,
    norm_sq: f64,
    sup: f64,
    inf: f64,
    is_constant: bool,
    accepted: bool,
    descent_iterations: usize,
    newton_iterations: usize,
    path_estimate: f64,
    wall_time: f64,
}

fn cmd_solve(a: SolveArgs) -> Result<i32> {
    let clock = Instant::now();
    let file = load_file(&a.common.config)?;
    let mut cfg = resolve_common(&a.common, &file);
    cfg.epsilon = Some(resolve(
        a.epsilon,
        file.epsilon,
        SemilinearConfig::default().eps,
    ));
    let domain = domain_of(&cfg)?;
    let solver = solver_config(&cfg);
    solver.validate(&domain)?;
    let dir = out_dir(&a.common, "run")?;
    let report = solve(&domain, &solver)?;
    let accepted = report.accepted(solver.newton_tol);
    let summary = ReportSummary {
        epsilon: solver.eps,
        p: solver.p,
        energy: report.energy,
        residual: report.residual,
        nehari_defect: report.nehari_defect,
        norm_sq: report.norm_sq,
        sup: report.sup,
        inf: report.inf,
        is_constant: report.is_constant,
        accepted,
        descent_iterations: report.descent_iterations,
        newton_iterations: report.newton_iterations,
        path_estimate: report.path_estimate,
        wall_time: report.wall_time,
    };
    fs::write(
        dir.join("report.toml"),
        toml::to_string(&summary).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    write_nodal_csv(&dir.join("solution.csv"), &[("u", &report.u.to_nodal())])?;
    let mut manifest = RunManifest::new("solve", solver.seed, cfg);
    manifest.threads = threads_from_env()?;
    manifest.files = vec!["report.toml".into(), "solution.csv".into()];
    manifest.wall_time = clock.elapsed().as_secs_f64();
    emit_manifest(&manifest, &dir.join("manifest.toml"))?;
    println!(
        "energy {:.10e}  residual {:.3e}  sup {:.6}  inf {:.3e}  constant {}  accepted {}",
        report.energy, report.residual, report.sup, report.inf, report.is_constant, accepted
    );
    Ok(if accepted { 0 } else { 1 })
}

fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    let clock = Instant::now();
    let file = match (&a.manifest, &a.common.config) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidParameter(
                "use either --manifest or --config".into(),
            ))
        }
        (Some(m), None) => RunManifest::load(m)?.config,
        (None, c) => load_file(c)?,
    };
    let mut cfg = resolve_common(&a.common, &file);
    cfg.eps = Some(
        a.eps
            .clone()
            .or(file.eps.clone())
            .unwrap_or_else(|| "1e-3:1e-1:log:9".into()),
    );
    cfg.min_cells = Some(file.min_cells.unwrap_or(SweepSpec::default().min_cells));
    let spec = sweep_spec(&cfg)?;
    let dir = out_dir(&a.common, "sweep")?;
    let result = run_sweep(&spec)?;
    emit_csv(&result.records, &dir.join("sweep.csv"))?;

    let mut manifest = RunManifest::new("sweep", spec.base.seed, cfg);
    manifest.threads = threads_from_env()?;
    manifest.files = vec!["sweep.csv".into()];
    manifest.fitted = sweep_fits(&spec, &result.records);
    manifest.wall_time = clock.elapsed().as_secs_f64();
    emit_manifest(&manifest, &dir.join("manifest.toml"))?;
    for r in &result.records {
        println!(
            "eps {:.4e}  energy {:.6e}  sup {:.4}  inf {:.3e}  cubes {}  constant {}",
            r.epsilon, r.energy, r.sup, r.inf, r.cubes, r.is_constant
        );
    }
    for (k, v) in &manifest.fitted {
        println!("{k} = {v:.6}");
    }
    for f in &result.failures {
        eprintln!("failed at eps {:.4e}: {}", f.epsilon, f.message);
    }
    Ok(if result.failures.is_empty() { 0 } else { 2 })
}

fn note_skip<T>(what: &str, r: Result<T>) -> Option<T> {
    r.map_err(|e| eprintln!("skipped {what}: {e}")).ok()
}

/// Scaling fits and dichotomy constants of a finished sweep; fits that lack
/// data are reported on stderr and left out.
pub fn sweep_fits(
    spec: &SweepSpec,
    records: &[crate::experiments::SweepRecord],
) -> BTreeMap<String, f64> {
    let mut fitted = BTreeMap::new();
    if let Some(fit) = note_skip("energy fit", energy_scaling_fit(records)) {
        fitted.insert("energy_slope".into(), fit.slope);
        fitted.insert("energy_intercept".into(), fit.intercept);
    }
    if let Some(band) = note_skip(
        "mass band",
        lq_scaling(records, spec.base.p + 1.0, spec.base.p),
    ) {
        fitted.insert("mass_band_min".into(), band.min);
        fitted.insert("mass_band_max".into(), band.max);
    }
    if let Some(fit) = note_skip("measure decay", measure_decay(records, 0)) {
        fitted.insert("measure_slope".into(), fit.slope);
    }
    if let Some(m) = records.iter().map(|r| r.cubes).max() {
        fitted.insert("cube_count_max".into(), m as f64);
    }
    if let Some((lo, hi, c)) = note_skip("equivalence constants", equivalence_constants(spec)) {
        fitted.insert("equivalence_band_min".into(), lo);
        fitted.insert("equivalence_band_max".into(), hi);
        fitted.insert("trace_embedding_c".into(), c);
    }
    if let Some(ub) = note_skip("uniform bound", uniform_bound_report(records)) {
        fitted.insert("c_sup".into(), ub.max_sup);
        fitted.insert("sup_drift_ratio".into(), ub.drift_ratio);
        let constants = RectDomain::new(spec.lengths.clone(), vec![48, 48], vec![48, 48])
            .and_then(|d| fit_dichotomy_constants(&d, 8, spec.base.seed));
        if let Some((c1, c2)) = note_skip("dichotomy constants", constants) {
            fitted.insert("c1".into(), c1);
            fitted.insert("c2".into(), c2);
            if let Some(e) = note_skip(
                "eps star",
                epsilon_star_estimate(spec.base.p, ub.max_sup, c1, c2),
            ) {
                fitted.insert("eps_star".into(), e);
            }
        }
    }
    fitted
}

/// Band of `[u] / (sum lambda^{1/2} u_k^2)^{1/2}` and the smallest trace
/// embedding ratio over the sweep's `eps`, on a fixed random corpus.
fn equivalence_constants(spec: &SweepSpec) -> Result<(f64, f64, f64)> {
    let domain = RectDomain::new(spec.lengths.clone(), vec![48, 48], vec![48, 48])?;
    let (mut lo, mut hi, mut c) = (f64::INFINITY, 0.0f64, f64::INFINITY);
    for seed in 0..8 {
        let u = random_perturbation(&domain, 6, 1.0, spec.base.seed.wrapping_add(seed));
        let ratio = (gagliardo_seminorm_sq(&u.to_nodal()) / frac_quarter_norm_sq(&u, 1.0)).sqrt();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        for &eps in &spec.eps_list {
            c = c.min(trace_embedding_ratio(&u, eps)?);
        }
    }
    Ok((lo, hi, c))
}

struct Check {
    name: String,
    value: f64,
    bound: f64,
}

impl Check {
    fn new(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            bound,
        }
    }

    fn pass(&self) -> bool {
        self.value <= self.bound
    }
}

fn random_fields(domain: &Arc<RectDomain>, count: usize) -> Vec<SpectralField> {
    (0..count as u64)
        .map(|s| random_perturbation(domain, 8, 1.0, s))
        .collect()
}

fn cmd_verify(a: VerifyArgs) -> Result<i32> {
    let tol = a.tol;
    let quad = QuadratureSpec::default();
    let d = RectDomain::unit_square(32)?;
    let mut checks = Vec::new();
    match a.suite {
        Suite::Operators => {
            let mut worst: f64 = 0.0;
            for f in 1..50 {
                let mut phi = SpectralField::zeros(&d);
                phi.coeffs_mut()[f] = 1.0;
                let out = frac_apply(&phi, 0.3, 0.5)?;
                let expect = (0.3 * d.eigenvalues()[f]).sqrt();
                worst = worst.max(out.sub(&phi.scaled(expect)).l2_norm() / expect);
            }
            checks.push(Check::new("eigenmode multipliers (relative)", worst, 1e-12));
            let mut worst: f64 = 0.0;
            for eps in [0.01, 0.3, 1.0, 10.0] {
                for u in random_fields(&d, 5) {
                    let a = frac_apply(&u, eps, 0.5)?;
                    let b = semigroup_route_frac_half(&u, eps, &quad)?;
                    worst = worst.max(a.sub(&b).l2_norm() / a.l2_norm());
                }
            }
            checks.push(Check::new(
                "spectral vs semigroup route (relative L2)",
                worst,
                tol,
            ));
            let fine = RectDomain::unit_square(128)?;
            let x = [0.3, 0.7];
            let mut worst: f64 = 0.0;
            for s in [0.05, 0.2, 1.0] {
                worst = worst.max((heat_kernel_row(&fine, s, &x)?.integral() - 1.0).abs());
                worst = worst.max((poisson_kernel_row(&fine, s, &x)?.integral() - 1.0).abs());
            }
            checks.push(Check::new("kernel mass defect", worst, 1e-8));
        }
        Suite::Extension => {
            let u = random_fields(&d, 1).remove(0);
            let v = extend(&u, 0.2, &[0.0])?;
            let closed: f64 = d
                .eigenvalues()
                .iter()
                .zip(u.coeffs())
                .map(|(l, c)| (0.2 * l).sqrt() * c * c)
                .sum();
            checks.push(Check::new(
                "Dirichlet energy identity",
                (dirichlet_energy(&v) - closed).abs(),
                1e-10,
            ));
            let ratio = dtn_residual(&u, 0.2, 1e-4)? / dtn_residual(&u, 0.2, 2e-4)?;
            checks.push(Check::new(
                "DtN residual halving |ratio - 0.5|",
                (ratio - 0.5).abs(),
                0.05,
            ));
            checks.push(Check::new(
                "trace gap of the extension",
                trace_inequality_gap(&v, &[])?.abs(),
                1e-10,
            ));
            let bump = ZeroTraceBump {
                mode: vec![1, 1],
                amplitude: 0.2,
                support: 1.0,
            };
            let gap = trace_inequality_gap(&v, &[bump])?;
            checks.push(Check::new(
                "negative part of a competitor's trace gap",
                (-gap).max(0.0),
                1e-12,
            ));
        }
        Suite::Linear => {
            let mut worst: f64 = 0.0;
            let mut worst_route: f64 = 0.0;
            for f in random_fields(&d, 5) {
                let sol = solve_linear(&f, 0.1)?;
                worst = worst.max(sol.residual / f.l2_norm());
                let b = solve_linear_by_quadrature(&f, 0.1, &quad)?;
                worst_route = worst_route.max(sol.u.sub(&b).l2_norm() / sol.u.l2_norm());
            }
            checks.push(Check::new("resolvent residual (relative)", worst, 1e-12));
            checks.push(Check::new(
                "quadrature route (relative L2)",
                worst_route,
                tol,
            ));
            let one = solve_linear(&SpectralField::constant(&d, 1.0), 0.1)?
                .u
                .to_nodal();
            let dev = one
                .values()
                .iter()
                .fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
            checks.push(Check::new("resolvent of 1", dev, 1e-10));
        }
        Suite::Semilinear => {
            let prob = Problem::new(&d, 0.05, 2.0, 2)?;
            let one = SpectralField::constant(&d, 1.0);
            checks.push(Check::new(
                "residual of u = 1",
                prob.residual(&one)?.l2_norm(),
                1e-12,
            ));
            checks.push(Check::new(
                "energy of u = 1 minus 1/6",
                (prob.energy(&one)? - 1.0 / 6.0).abs(),
                1e-14,
            ));
            let u = one.add_scaled(1.0, &random_perturbation(&d, 5, 0.5, 1));
            let w = random_perturbation(&d, 8, 1.0, 2);
            let g = prob.gradient(&u)?;
            let metric: f64 = g
                .coeffs()
                .iter()
                .zip(w.coeffs())
                .zip(d.eigenvalues())
                .map(|((g, w), l)| (1.0 + (0.05 * l).sqrt()) * g * w)
                .sum();
            let delta = 1e-4;
            let fd = (prob.energy(&u.add_scaled(delta, &w))?
                - prob.energy(&u.add_scaled(-delta, &w))?)
                / (2.0 * delta);
            checks.push(Check::new(
                "gradient vs central difference",
                (fd - metric).abs() / metric.abs(),
                tol.max(1e-6),
            ));
        }
    }
    let mut failed = 0;
    for c in &checks {
        let tag = if c.pass() { "PASS" } else { "FAIL" };
        if !c.pass() {
            failed += 1;
        }
        println!(
            "{tag}  {:<45} {:.3e} (bound {:.1e})",
            c.name, c.value, c.bound
        );
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

fn cmd_kernels(a: KernelArgs) -> Result<i32> {
    let d = RectDomain::unit_square(a.n)?;
    if a.x.len() != 2 || a.z.len() != 2 {
        return Err(Error::InvalidParameter(
            "points need two coordinates".into(),
        ));
    }
    let quad = QuadratureSpec::default();
    let mut rows = vec!["kernel,param,value,tail_bound,row_integral".to_string()];
    for &t in &a.t {
        let s = heat_kernel(&d, t, &a.x, &a.z, quad.tolerance)?;
        let mass = heat_kernel_row(&d, t, &a.x)?.integral();
        rows.push(format!(
            "heat,{t:.16e},{:.16e},{:.3e},{mass:.16e}",
            s.value, s.tail_bound
        ));
    }
    for &y in &a.y {
        let mass = poisson_kernel_row(&d, y, &a.x)?.integral();
        for (name, route) in [
            ("poisson_direct", PoissonRoute::Direct),
            ("poisson_subordinated", PoissonRoute::Subordinated),
        ] {
            let s = poisson_kernel(&d, y, &a.x, &a.z, route, &quad)?;
            rows.push(format!(
                "{name},{y:.16e},{:.16e},{:.3e},{mass:.16e}",
                s.value, s.tail_bound
            ));
        }
    }
    let text = rows.join("\n") + "\n";
    match a.out {
        Some(path) => fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_ks(a: KsArgs) -> Result<i32> {
    let file = load_file(&a.common.config)?;
    let mut cfg = resolve_common(&a.common, &file);
    let mapping = match a.mapping {
        Some(MappingArg::Linear) => Some(KsMapping::Linear),
        Some(MappingArg::Squared) => Some(KsMapping::Squared),
        None => None,
    };
    let ks = KSParams {
        d1: resolve(a.d1, file.d1, 1.0),
        d2: resolve(a.d2, file.d2, 0.1),
        chi: resolve(a.chi, file.chi, 2.0),
        a: resolve(a.a, file.a, 1.0),
        b: resolve(a.b, file.b, 1.0),
        mean: resolve(a.mean, file.mean, 1.0),
        mapping: resolve(mapping, file.mapping, KsMapping::Linear),
    };
    cfg.d1 = Some(ks.d1);
    cfg.d2 = Some(ks.d2);
    cfg.chi = Some(ks.chi);
    cfg.a = Some(ks.a);
    cfg.b = Some(ks.b);
    cfg.mean = Some(ks.mean);
    cfg.mapping = Some(ks.mapping);
    cfg.p = Some(ks.p());
    cfg.epsilon = Some(ks.eps());
    let domain = domain_of(&cfg)?;
    ks.validate(domain.dim())?;
    let solver = solver_config(&cfg);
    let dir = out_dir(&a.common, "ks")?;
    let report = solve(&domain, &solver)?;
    let rec = keller_segel_reconstruct(&report.u, &ks, solver.oversample)?;
    write_nodal_csv(
        &dir.join("steady_state.csv"),
        &[("rho", &rec.rho), ("c", &rec.c)],
    )?;
    let mut manifest = RunManifest::new("ks", solver.seed, cfg);
    manifest.fitted.insert("beta".into(), rec.beta);
    manifest.fitted.insert("lambda".into(), rec.lambda);
    manifest
        .fitted
        .insert("chemical_residual".into(), rec.chemical_residual);
    manifest
        .fitted
        .insert("flux_residual".into(), rec.flux_residual);
    manifest.files = vec!["steady_state.csv".into()];
    emit_manifest(&manifest, &dir.join("manifest.toml"))?;
    println!(
        "eps {:.6e}  p {}  beta {:.6e}  lambda {:.6e}  chemical residual {:.3e}  flux residual {:.3e}",
        ks.eps(),
        ks.p(),
        rec.beta,
        rec.lambda,
        rec.chemical_residual,
        rec.flux_residual
    );
    if rec.chemical_residual > a.tol {
        eprintln!(
            "chemical equation residual exceeds {:.1e} under the {:?} mapping",
            a.tol, ks.mapping
        );
        return Ok(1);
    }
    Ok(0)
}

fn cmd_import(a: ImportArgs) -> Result<i32> {
    let imp = EigenImport::load(&a.file)?;
    imp.validate()?;
    println!(
        "{} modes on a {:?} grid, |Omega| = {}, lambda in [{}, {}]",
        imp.modes.len(),
        imp.grid,
        imp.volume,
        imp.eigenvalues[0],
        imp.eigenvalues[imp.eigenvalues.len() - 1]
    );
    Ok(0)
}

/// Nodal `u` above `eta` covered by cubes of side `eps^{1/2}`; re-exported
/// for scripts that post-process `solution.csv`.
pub fn cover_count(u: &NodalField, eps: f64, eta: f64) -> Result<usize> {
    cube_cover(u, eps, eta)
}
