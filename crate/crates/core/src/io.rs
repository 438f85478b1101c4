//! Configuration files, run manifests, CSV tables and eigenpair import.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{linspace, logspace, KsMapping, SweepRecord};

/// Column order of the sweep table.
pub const CSV_HEADER: [&str; 9] = [
    "epsilon",
    "energy",
    "mass_p1",
    "sup",
    "inf",
    "measure_eta1",
    "cubes",
    "is_constant",
    "residual",
];

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "FRACNEUMANN_THREADS";

/// Optional settings from a `key = value` file; unset keys fall back to
/// command-line flags or defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub epsilon: Option<f64>,
    pub p: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub lx: Option<f64>,
    pub ly: Option<f64>,
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub descent_tol: Option<f64>,
    pub newton_tol: Option<f64>,
    pub max_descent: Option<usize>,
    pub max_newton: Option<usize>,
    pub oversample: Option<usize>,
    pub center: Option<Vec<f64>>,
    pub eps: Option<String>,
    pub min_cells: Option<f64>,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub chi: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub mean: Option<f64>,
    pub mapping: Option<KsMapping>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// First set value in precedence order: flag, file, default.
pub fn resolve<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Parses `a:b:log:n`, `a:b:lin:n` or a comma-separated list.
pub fn parse_eps_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("epsilon grid `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    let list = if parts.len() == 4 {
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[3].trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match parts[2].trim() {
            "log" => {
                if !(a > 0.0 && b > 0.0) {
                    return Err(bad());
                }
                logspace(a, b, n)
            }
            "lin" => linspace(a, b, n),
            _ => return Err(bad()),
        }
    } else if parts.len() == 1 {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    } else {
        return Err(bad());
    };
    if list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "epsilon grid `{text}` has nonpositive entries"
        )));
    }
    Ok(list)
}

/// Thread count from [`THREADS_ENV`], if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Error::Parse(format!("{THREADS_ENV}={v} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub epsilon: f64,
    pub energy: f64,
    pub mass_p1: f64,
    pub sup: f64,
    pub inf: f64,
    pub measure_eta1: f64,
    pub cubes: usize,
    pub is_constant: bool,
    pub residual: f64,
}

impl From<&SweepRecord> for CsvRow {
    fn from(r: &SweepRecord) -> Self {
        Self {
            epsilon: r.epsilon,
            energy: r.energy,
            mass_p1: r.mass_p1,
            sup: r.sup,
            inf: r.inf,
            measure_eta1: r.measures.first().copied().unwrap_or(f64::NAN),
            cubes: r.cubes,
            is_constant: r.is_constant,
            residual: r.residual,
        }
    }
}

pub fn csv_string(rows: &[CsvRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)
        .map_err(|e| Error::Parse(e.to_string()))?;
    for r in rows {
        w.write_record([
            fmt17(r.epsilon),
            fmt17(r.energy),
            fmt17(r.mass_p1),
            fmt17(r.sup),
            fmt17(r.inf),
            fmt17(r.measure_eta1),
            r.cubes.to_string(),
            r.is_constant.to_string(),
            fmt17(r.residual),
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let rows: Vec<CsvRow> = records.iter().map(CsvRow::from).collect();
    fs::write(path, csv_string(&rows)?)?;
    Ok(())
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Fully resolved configuration; reloading it reproduces the run.
    pub config: FileConfig,
    /// Fitted constants by name.
    pub fitted: BTreeMap<String, f64>,
    /// Output files relative to the manifest.
    pub files: Vec<String>,
    pub wall_time: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: FileConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            threads: None,
            config,
            fitted: BTreeMap::new(),
            files: Vec::new(),
            wall_time: 0.0,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

pub fn emit_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    fs::write(path, manifest.to_toml()?)?;
    Ok(())
}

/// Precomputed Neumann eigenpairs on a grid.
///
/// Text layout: a header line `n g_1 .. g_n count volume`, then `count`
/// lines, each holding `lambda` followed by the nodal values of the
/// eigenfunction in row-major order. Tokens are whitespace-separated.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenImport {
    pub dim: usize,
    pub grid: Vec<usize>,
    pub volume: f64,
    pub eigenvalues: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

impl EigenImport {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Parse("empty eigenpair file".into()))?
            .split_whitespace()
            .collect();
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad integer `{s}` in header")))
        };
        let dim = int(header
            .first()
            .ok_or_else(|| Error::Parse("missing dimension".into()))?)?;
        if dim == 0 || header.len() != dim + 3 {
            return Err(Error::Parse(format!(
                "header needs n, {dim} grid sizes, count and volume"
            )));
        }
        let grid = header[1..=dim]
            .iter()
            .map(|s| int(s))
            .collect::<Result<Vec<_>>>()?;
        let count = int(header[dim + 1])?;
        let volume: f64 = header[dim + 2]
            .parse()
            .map_err(|_| Error::Parse(format!("bad volume `{}`", header[dim + 2])))?;
        let nodes: usize = grid.iter().product();
        let mut eigenvalues = Vec::with_capacity(count);
        let mut modes = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let values = line
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("mode {i}: bad number `{s}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != nodes + 1 {
                return Err(Error::Parse(format!(
                    "mode {i}: expected {} values, found {}",
                    nodes + 1,
                    values.len()
                )));
            }
            eigenvalues.push(values[0]);
            modes.push(values[1..].to_vec());
        }
        if modes.len() != count {
            return Err(Error::Parse(format!(
                "header announces {count} modes, file has {}",
                modes.len()
            )));
        }
        Ok(Self {
            dim,
            grid,
            volume,
            eigenvalues,
            modes,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume / self.grid.iter().product::<usize>() as f64
    }

    /// Checks monotone eigenvalues, a constant first mode and
    /// orthonormality under the midpoint rule.
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Validation("no modes".into()));
        }
        if !(self.volume > 0.0) {
            return Err(Error::Validation(format!(
                "volume {} must be positive",
                self.volume
            )));
        }
        for (i, w) in self.eigenvalues.windows(2).enumerate() {
            if !(w[1] >= w[0]) {
                return Err(Error::Validation(format!(
                    "eigenvalues not nondecreasing: lambda_{} = {} > lambda_{} = {}",
                    i,
                    w[0],
                    i + 1,
                    w[1]
                )));
            }
        }
        let c = 1.0 / self.volume.sqrt();
        if let Some((j, v)) = self.modes[0]
            .iter()
            .enumerate()
            .find(|(_, v)| (**v - c).abs() > 1e-8)
        {
            return Err(Error::Validation(format!(
                "first mode is not the constant 1/sqrt(|Omega|) = {c}: node {j} holds {v}"
            )));
        }
        let dv = self.cell_volume();
        for i in 0..self.modes.len() {
            for j in 0..=i {
                let ip: f64 = self.modes[i]
                    .iter()
                    .zip(&self.modes[j])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    * dv;
                let target = if i == j { 1.0 } else { 0.0 };
                if (ip - target).abs() > 1e-6 {
                    return Err(Error::Validation(format!(
                        "modes {j} and {i} not orthonormal: inner product {ip:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Coefficients of nodal values against the imported modes.
    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        let dv = self.cell_volume();
        self.modes
            .iter()
            .map(|m| m.iter().zip(values).map(|(a, b)| a * b).sum::<f64>() * dv)
            .collect()
    }

    /// Nodal values of `sum_k m(lambda_k) c_k phi_k`.
    pub fn synthesize(&self, coeffs: &[f64], multiplier: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.modes[0].len()];
        for ((m, c), &lam) in self.modes.iter().zip(coeffs).zip(&self.eigenvalues) {
            let s = multiplier(lam) * c;
            out.iter_mut().zip(m).for_each(|(o, v)| *o += s * v);
        }
        out
    }

    /// `(-eps Delta_N)^s` of nodal values, truncated to the imported modes.
    pub fn frac_apply(&self, values: &[f64], eps: f64, s: f64) -> Vec<f64> {
        let c = self.project(values);
        self.synthesize(&c, |lam| if lam > 0.0 { (eps * lam).powf(s) } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::RectDomain;
    use proptest::prelude::*;

    fn unit_square_import(n: usize, count: usize) -> String {
        let d = RectDomain::unit_square(n).unwrap();
        let mut modes: Vec<(f64, Vec<usize>)> = (0..d.num_modes())
            .map(|f| (d.eigenvalues()[f], d.multi_index(f)))
            .collect();
        modes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut text = format!("2 {n} {n} {count} 1.0\n");
        for (lam, k) in modes.into_iter().take(count) {
            text.push_str(&format!("{lam:.17e}"));
            for j in 0..d.num_nodes() {
                text.push_str(&format!(" {:.17e}", d.eigenfunction(&k, &d.node(j))));
            }
            text.push('\n');
        }
        text
    }

    #[test]
    fn eps_grid_syntax() {
        let g = parse_eps_grid("1e-3:1e-1:log:9").unwrap();
        assert_eq!(g.len(), 9);
        assert!((g[4] - 1e-2).abs() < 1e-15);
        assert!((parse_eps_grid("0.1:0.5:lin:5").unwrap()[2] - 0.3).abs() < 1e-15);
        assert_eq!(parse_eps_grid("0.5, 100").unwrap(), vec![0.5, 100.0]);
        for bad in [
            "1:2:cubic:3",
            "0:1:log:3",
            "a:b:log:3",
            "1e-3:1e-1:log:0",
            "-1",
        ] {
            assert!(parse_eps_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn precedence_and_config_parsing() {
        assert_eq!(resolve(Some(1), Some(2), 3), 1);
        assert_eq!(resolve(None, Some(2), 3), 2);
        assert_eq!(resolve::<i32>(None, None, 3), 3);
        let cfg = FileConfig::parse(
            "epsilon = 0.02\nnx = 64\ncenter = [0.0, 0.0]\nmapping = \"squared\"\n",
        )
        .unwrap();
        assert_eq!(cfg.epsilon, Some(0.02));
        assert_eq!(cfg.nx, Some(64));
        assert_eq!(cfg.mapping, Some(KsMapping::Squared));
        assert!(FileConfig::parse("epsilonn = 1").is_err());
        assert!(FileConfig::parse("nx = \"many\"").is_err());
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(csv_string(&[]).unwrap(), CSV_HEADER.join(",") + "\n");
        assert!(parse_csv(&csv_string(&[]).unwrap()).unwrap().is_empty());
        assert!(parse_csv("eps,energy\n1,2\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bitwise(values in proptest::collection::vec(
            (any::<f64>().prop_filter("finite", |v| v.is_finite()), 0usize..1000, any::<bool>()), 0..20)) {
            let rows: Vec<CsvRow> = values
                .iter()
                .map(|&(v, c, b)| CsvRow {
                    epsilon: v.abs(),
                    energy: v,
                    mass_p1: -v,
                    sup: v / 3.0,
                    inf: v * 1e-300,
                    measure_eta1: v.sqrt(),
                    cubes: c,
                    is_constant: b,
                    residual: 1e-17 * v,
                })
                .collect();
            let back = parse_csv(&csv_string(&rows).unwrap()).unwrap();
            prop_assert_eq!(back.len(), rows.len());
            for (a, b) in rows.iter().zip(&back) {
                for (x, y) in [
                    (a.epsilon, b.epsilon), (a.energy, b.energy), (a.mass_p1, b.mass_p1), (a.sup, b.sup),
                    (a.inf, b.inf), (a.residual, b.residual),
                ] {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
                prop_assert!(a.measure_eta1.to_bits() == b.measure_eta1.to_bits()
                    || (a.measure_eta1.is_nan() && b.measure_eta1.is_nan()));
                prop_assert_eq!(a.cubes, b.cubes);
                prop_assert_eq!(a.is_constant, b.is_constant);
            }
        }
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new(
            "sweep",
            7,
            FileConfig {
                epsilon: Some(0.1),
                ..Default::default()
            },
        );
        m.fitted.insert("energy_slope".into(), 0.93);
        m.fitted.insert("c_sup".into(), 5.5);
        m.files.push("sweep.csv".into());
        let text = m.to_toml().unwrap();
        assert!(text.find("c_sup").unwrap() < text.find("energy_slope").unwrap());
        assert_eq!(RunManifest::parse(&text).unwrap(), m);
    }

    #[test]
    fn eigen_import_accepts_cosines_and_applies_operators() {
        let text = unit_square_import(8, 10);
        let imp = EigenImport::parse(&text).unwrap();
        imp.validate().unwrap();
        let d = RectDomain::unit_square(8).unwrap();
        let phi: Vec<f64> = (0..d.num_nodes())
            .map(|j| d.eigenfunction(&[1, 1], &d.node(j)))
            .collect();
        let out = imp.frac_apply(&phi, 0.5, 0.5);
        let scale = (0.5 * 2.0 * std::f64::consts::PI.powi(2)).sqrt();
        for (o, v) in out.iter().zip(&phi) {
            assert!((o - scale * v).abs() < 1e-10);
        }
    }

    #[test]
    fn eigen_import_diagnostics() {
        let good = EigenImport::parse(&unit_square_import(4, 5)).unwrap();
        let mut swapped = good.clone();
        swapped.eigenvalues.swap(1, 4);
        let err = swapped.validate().unwrap_err().to_string();
        assert!(err.contains("nondecreasing"), "{err}");
        let mut tilted = good.clone();
        tilted.modes[0][3] += 1e-4;
        assert!(tilted
            .validate()
            .unwrap_err()
            .to_string()
            .contains("first mode"));
        let mut skewed = good.clone();
        let m1 = skewed.modes[1].clone();
        skewed.modes[2]
            .iter_mut()
            .zip(&m1)
            .for_each(|(a, b)| *a += 0.01 * b);
        assert!(skewed
            .validate()
            .unwrap_err()
            .to_string()
            .contains("orthonormal"));
        assert!(EigenImport::parse("2 4 4 1 1.0\n0.0 1 2\n").is_err());
        assert!(EigenImport::parse("2 4 4\n").is_err());
    }
}
