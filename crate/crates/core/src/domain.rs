//! Separable box domains with closed-form Neumann eigendata, grid sampling,
//! midpoint quadrature and the orthonormal cosine transform between nodal
//! and spectral representations.
//!
//! On `(0, L)` the Neumann eigenfunctions are `1/sqrt(L)` and
//! `sqrt(2/L) cos(pi k x / L)` with eigenvalue `(pi k / L)^2`; a box takes
//! tensor products. Grid nodes sit at cell midpoints `x_j = L (j + 1/2) / N`,
//! which makes the type-II cosine transform exactly orthogonal on the modes
//! `k < N`.
//!
//! Arrays over nodes and over modes are flattened row-major (last axis
//! fastest).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};

/// Default grid size per axis.
pub const DEFAULT_GRID: usize = 128;

#[derive(Clone)]
struct AxisPlan {
    dct: Arc<dyn TransformType2And3<f64>>,
    dst: Arc<dyn TransformType2And3<f64>>,
}

/// A box `prod (0, L_i)` with a midpoint grid and a retained set of cosine
/// modes.
#[derive(Clone)]
pub struct RectDomain {
    lengths: Vec<f64>,
    grid: Vec<usize>,
    cutoffs: Vec<usize>,
    eigenvalues: Vec<f64>,
    plans: Vec<AxisPlan>,
}

impl fmt::Debug for RectDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RectDomain")
            .field("lengths", &self.lengths)
            .field("grid", &self.grid)
            .field("cutoffs", &self.cutoffs)
            .finish()
    }
}

impl PartialEq for RectDomain {
    fn eq(&self, other: &Self) -> bool {
        self.lengths == other.lengths && self.grid == other.grid && self.cutoffs == other.cutoffs
    }
}

/// Builds a box of dimension `n`. `cutoffs` defaults to the grid sizes.
pub fn build_domain(
    n: usize,
    lengths: &[f64],
    grid_sizes: &[usize],
    cutoffs: Option<&[usize]>,
) -> Result<Arc<RectDomain>> {
    if n == 0 {
        return Err(Error::InvalidDomain("dimension must be at least 1".into()));
    }
    if lengths.len() != n || grid_sizes.len() != n {
        return Err(Error::InvalidDomain(format!(
            "expected {n} lengths and grid sizes, got {} and {}",
            lengths.len(),
            grid_sizes.len()
        )));
    }
    let cutoffs = cutoffs
        .map(|c| c.to_vec())
        .unwrap_or_else(|| grid_sizes.to_vec());
    RectDomain::new(lengths.to_vec(), grid_sizes.to_vec(), cutoffs)
}

impl RectDomain {
    pub fn new(lengths: Vec<f64>, grid: Vec<usize>, cutoffs: Vec<usize>) -> Result<Arc<Self>> {
        let n = lengths.len();
        if n == 0 {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if grid.len() != n || cutoffs.len() != n {
            return Err(Error::InvalidDomain(format!(
                "shape mismatch: {n} lengths, {} grid sizes, {} cutoffs",
                grid.len(),
                cutoffs.len()
            )));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidDomain(format!(
                "non-positive side length {l}"
            )));
        }
        if grid.iter().any(|&g| g < 2) {
            return Err(Error::InvalidDomain("grid sizes must be at least 2".into()));
        }
        if cutoffs.iter().zip(&grid).any(|(&k, &g)| k == 0 || k > g) {
            return Err(Error::InvalidDomain(
                "cutoffs must satisfy 1 <= K_i <= N_i".into(),
            ));
        }

        let mut planner = DctPlanner::new();
        let plans = grid
            .iter()
            .map(|&g| AxisPlan {
                dct: planner.plan_dct2(g),
                dst: planner.plan_dst2(g),
            })
            .collect();

        let total: usize = cutoffs.iter().product();
        let mut eigenvalues = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let lam = idx
                .iter()
                .zip(&lengths)
                .map(|(&k, &l)| (PI * k as f64 / l).powi(2))
                .sum();
            eigenvalues.push(lam);
            increment(&mut idx, &cutoffs);
        }

        Ok(Arc::new(Self {
            lengths,
            grid,
            cutoffs,
            eigenvalues,
            plans,
        }))
    }

    /// Unit square `(0,1)^2` with `n` nodes and `n` modes per axis.
    pub fn unit_square(n: usize) -> Result<Arc<Self>> {
        Self::new(vec![1.0, 1.0], vec![n, n], vec![n, n])
    }

    /// Same box, grid and cutoffs multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Arc<Self>> {
        Self::new(
            self.lengths.clone(),
            self.grid.iter().map(|g| g * factor).collect(),
            self.cutoffs.iter().map(|k| k * factor).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    /// `|Omega|`.
    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.grid[axis] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).fold(0.0, f64::max)
    }

    /// Midpoint quadrature weight `prod L_i / N_i`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).product()
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn num_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues of the retained modes, flattened row-major.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: &[usize]) -> f64 {
        k.iter()
            .zip(&self.lengths)
            .map(|(&k, &l)| (PI * k as f64 / l).powi(2))
            .sum()
    }

    /// Smallest nonzero eigenvalue of the box (independent of cutoff).
    pub fn first_nonzero_eigenvalue(&self) -> f64 {
        let lmax = self.lengths.iter().cloned().fold(0.0, f64::max);
        (PI / lmax).powi(2)
    }

    pub fn mode_index(&self, k: &[usize]) -> usize {
        flat_index(k, &self.cutoffs)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        unflatten(flat, &self.cutoffs)
    }

    /// Coordinate of node `j` along `axis`.
    pub fn node_coord(&self, axis: usize, j: usize) -> f64 {
        self.spacing(axis) * (j as f64 + 0.5)
    }

    /// Coordinates of the flat node index.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        unflatten(flat, &self.grid)
            .into_iter()
            .enumerate()
            .map(|(i, j)| self.node_coord(i, j))
            .collect()
    }

    /// Node nearest to `x`.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.dim())
            .map(|i| {
                let j = (x[i] / self.spacing(i) - 0.5).round();
                j.clamp(0.0, (self.grid[i] - 1) as f64) as usize
            })
            .collect();
        flat_index(&idx, &self.grid)
    }

    /// Evaluates the orthonormal eigenfunction `phi_k` at `x`.
    pub fn eigenfunction(&self, k: &[usize], x: &[f64]) -> f64 {
        k.iter()
            .zip(x)
            .zip(&self.lengths)
            .map(|((&k, &x), &l)| cosine_mode_1d(k, x, l))
            .product()
    }

    /// Orthonormal cosine coefficients of nodal values (type-II DCT along
    /// every axis, truncated to the cutoffs).
    pub fn forward(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.num_nodes());
        let mut data = values.to_vec();
        let shape = self.grid.clone();
        for axis in 0..self.dim() {
            let n = self.grid[axis];
            let l = self.lengths[axis];
            let h = l / n as f64;
            let s0 = h / l.sqrt();
            let sk = h * (2.0 / l).sqrt();
            let plan = &self.plans[axis].dct;
            let mut scratch = vec![0.0; plan.get_scratch_len()];
            for_each_lane(&mut data, &shape, axis, |lane| {
                plan.process_dct2_with_scratch(lane, &mut scratch);
                lane[0] *= s0;
                for v in lane[1..].iter_mut() {
                    *v *= sk;
                }
            });
        }
        resize(&data, &shape, &self.cutoffs)
    }

    /// Nodal values of a cosine series given by its retained coefficients.
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.num_modes());
        let mut data = resize(coeffs, &self.cutoffs, &self.grid);
        let shape = self.grid.clone();
        for axis in 0..self.dim() {
            let l = self.lengths[axis];
            let s0 = 2.0 / l.sqrt();
            let sk = (2.0 / l).sqrt();
            let plan = &self.plans[axis].dct;
            let mut scratch = vec![0.0; plan.get_scratch_len()];
            for_each_lane(&mut data, &shape, axis, |lane| {
                lane[0] *= s0;
                for v in lane[1..].iter_mut() {
                    *v *= sk;
                }
                plan.process_dct3_with_scratch(lane, &mut scratch);
            });
        }
        data
    }

    /// Nodal values of the partial derivative along `axis` of a cosine
    /// series (a sine series along that axis).
    pub fn inverse_derivative(&self, coeffs: &[f64], axis: usize) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.num_modes());
        let mut data = resize(coeffs, &self.cutoffs, &self.grid);
        let shape = self.grid.clone();
        for ax in 0..self.dim() {
            let l = self.lengths[ax];
            let n = self.grid[ax];
            let sk = (2.0 / l).sqrt();
            if ax == axis {
                let plan = &self.plans[ax].dst;
                let mut scratch = vec![0.0; plan.get_scratch_len()];
                for_each_lane(&mut data, &shape, ax, |lane| {
                    // d/dx cos(pi k x / L) = -(pi k / L) sin(pi k x / L);
                    // the DST-III input slot j carries sine mode j + 1.
                    for j in 0..n - 1 {
                        let k = (j + 1) as f64;
                        lane[j] = -sk * PI * k / l * lane[j + 1];
                    }
                    lane[n - 1] = 0.0;
                    plan.process_dst3_with_scratch(lane, &mut scratch);
                });
            } else {
                let plan = &self.plans[ax].dct;
                let mut scratch = vec![0.0; plan.get_scratch_len()];
                let s0 = 2.0 / l.sqrt();
                for_each_lane(&mut data, &shape, ax, |lane| {
                    lane[0] *= s0;
                    for v in lane[1..].iter_mut() {
                        *v *= sk;
                    }
                    plan.process_dct3_with_scratch(lane, &mut scratch);
                });
            }
        }
        data
    }
}

/// `phi_k` on `(0, L)`.
pub fn cosine_mode_1d(k: usize, x: f64, l: f64) -> f64 {
    if k == 0 {
        1.0 / l.sqrt()
    } else {
        (2.0 / l).sqrt() * (PI * k as f64 * x / l).cos()
    }
}

pub(crate) fn flat_index(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &s)| acc * s + i)
}

pub(crate) fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (i, &s) in shape.iter().enumerate().rev() {
        idx[i] = flat % s;
        flat /= s;
    }
    idx
}

pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < shape[i] {
            return;
        }
        idx[i] = 0;
    }
}

/// Applies `f` to every 1-D lane of a row-major array along `axis`.
pub(crate) fn for_each_lane<T: Copy + Default>(
    data: &mut [T],
    shape: &[usize],
    axis: usize,
    mut f: impl FnMut(&mut [T]),
) {
    let len = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut lane = vec![T::default(); len];
    for o in 0..outer {
        let base = o * len * stride;
        for inner in 0..stride {
            for (j, v) in lane.iter_mut().enumerate() {
                *v = data[base + j * stride + inner];
            }
            f(&mut lane);
            for (j, v) in lane.iter().enumerate() {
                data[base + j * stride + inner] = *v;
            }
        }
    }
}

/// Copies the overlapping corner of a row-major array into a new shape,
/// zero-filling the rest.
pub(crate) fn resize(data: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    if from == to {
        return data.to_vec();
    }
    let total: usize = to.iter().product();
    let mut out = vec![0.0; total];
    let common: Vec<usize> = from.iter().zip(to).map(|(a, b)| *a.min(b)).collect();
    let count: usize = common.iter().product();
    if count == 0 {
        return out;
    }
    let mut idx = vec![0usize; from.len()];
    for _ in 0..count {
        out[flat_index(&idx, to)] = data[flat_index(&idx, from)];
        increment(&mut idx, &common);
    }
    out
}

/// A function sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct NodalField {
    domain: Arc<RectDomain>,
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(domain: Arc<RectDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.num_nodes() {
            return Err(Error::InvalidParameter(format!(
                "expected {} nodal values, got {}",
                domain.num_nodes(),
                values.len()
            )));
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(domain: &Arc<RectDomain>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..domain.num_nodes())
            .map(|j| f(&domain.node(j)))
            .collect();
        Self {
            domain: domain.clone(),
            values,
        }
    }

    pub fn constant(domain: &Arc<RectDomain>, c: f64) -> Self {
        Self {
            domain: domain.clone(),
            values: vec![c; domain.num_nodes()],
        }
    }

    pub fn domain(&self) -> &Arc<RectDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_spectral(&self) -> SpectralField {
        to_spectral(self)
    }

    /// Midpoint rule for `int f dx`.
    pub fn integral(&self) -> f64 {
        self.domain.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// `int f^q` for integer `q`, `int f_+^q` otherwise.
    pub fn quad_integral(&self, q: f64) -> Result<f64> {
        quad_integral(self, q)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.domain.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Measure of `{f > eta}` by cell counting.
    pub fn superlevel_measure(&self, eta: f64) -> f64 {
        self.domain.cell_volume() * self.values.iter().filter(|&&v| v > eta).count() as f64
    }
}

/// Coefficients on the orthonormal cosine basis, one per retained mode.
#[derive(Debug, Clone)]
pub struct SpectralField {
    domain: Arc<RectDomain>,
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(domain: Arc<RectDomain>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != domain.num_modes() {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients, got {}",
                domain.num_modes(),
                coeffs.len()
            )));
        }
        Ok(Self { domain, coeffs })
    }

    pub fn zeros(domain: &Arc<RectDomain>) -> Self {
        Self {
            domain: domain.clone(),
            coeffs: vec![0.0; domain.num_modes()],
        }
    }

    /// The constant function `c`.
    pub fn constant(domain: &Arc<RectDomain>, c: f64) -> Self {
        let mut u = Self::zeros(domain);
        u.coeffs[0] = c * domain.volume().sqrt();
        u
    }

    /// The eigenfunction `phi_k`. Panics if `k` is not retained.
    pub fn mode(domain: &Arc<RectDomain>, k: &[usize]) -> Self {
        assert!(
            k.iter().zip(domain.cutoffs()).all(|(a, b)| a < b),
            "mode {k:?} beyond cutoffs"
        );
        let mut u = Self::zeros(domain);
        u.coeffs[domain.mode_index(k)] = 1.0;
        u
    }

    pub fn domain(&self) -> &Arc<RectDomain> {
        &self.domain
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn to_nodal(&self) -> NodalField {
        to_nodal(self)
    }

    /// `u_Omega = u_0 / sqrt(|Omega|)`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0] / self.domain.volume().sqrt()
    }

    /// `u - u_Omega`.
    pub fn zero_mean_part(&self) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = 0.0;
        out
    }

    /// Parseval: `||u||_{L^2}^2 = sum u_k^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map_modes(|_, c| s * c)
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        Self {
            domain: self.domain.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    /// Applies `f(lambda_k, u_k)` coefficient-wise.
    pub fn map_modes(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            domain: self.domain.clone(),
            coeffs: self
                .domain
                .eigenvalues()
                .iter()
                .zip(&self.coeffs)
                .map(|(&lam, &c)| f(lam, c))
                .collect(),
        }
    }

    /// Moves the coefficients onto another resolution of the same box,
    /// zero-padding or truncating modes.
    pub fn resample(&self, target: &Arc<RectDomain>) -> Result<Self> {
        if target.lengths() != self.domain.lengths() {
            return Err(Error::DomainMismatch);
        }
        Ok(Self {
            domain: target.clone(),
            coeffs: resize(&self.coeffs, self.domain.cutoffs(), target.cutoffs()),
        })
    }

    /// Evaluates the series at an arbitrary point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = &self.domain;
        let per_axis: Vec<Vec<f64>> = (0..d.dim())
            .map(|i| {
                (0..d.cutoffs()[i])
                    .map(|k| cosine_mode_1d(k, x[i], d.lengths()[i]))
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; d.dim()];
        let mut sum = 0.0;
        for c in &self.coeffs {
            if *c != 0.0 {
                let basis: f64 = idx
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| per_axis[i][k])
                    .product();
                sum += c * basis;
            }
            increment(&mut idx, d.cutoffs());
        }
        sum
    }

    /// Nodal gradient, one field per axis.
    pub fn gradient(&self) -> Vec<NodalField> {
        (0..self.domain.dim())
            .map(|axis| NodalField {
                domain: self.domain.clone(),
                values: self.domain.inverse_derivative(&self.coeffs, axis),
            })
            .collect()
    }

    /// Fails with [`Error::DomainMismatch`] unless both fields live on the same grid.
    pub fn ensure_same_domain(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }
}

pub fn to_spectral(f: &NodalField) -> SpectralField {
    SpectralField {
        domain: f.domain.clone(),
        coeffs: f.domain.forward(&f.values),
    }
}

pub fn to_nodal(u: &SpectralField) -> NodalField {
    NodalField {
        domain: u.domain.clone(),
        values: u.domain.inverse(&u.coeffs),
    }
}

/// Midpoint quadrature of `f^q`.
///
/// Integer exponents integrate `f^q` with its sign; any other exponent
/// integrates the positive part `f_+^q` (negative values contribute zero).
pub fn quad_integral(f: &NodalField, q: f64) -> Result<f64> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "exponent q = {q} must be positive"
        )));
    }
    let w = f.domain.cell_volume();
    let sum: f64 = if q.fract() == 0.0 && q <= i32::MAX as f64 {
        let qi = q as i32;
        f.values.iter().map(|v| v.powi(qi)).sum()
    } else {
        f.values
            .iter()
            .map(|&v| if v > 0.0 { v.powf(q) } else { 0.0 })
            .sum()
    };
    Ok(w * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn eigenvalues_of_unit_square() {
        let d = build_domain(2, &[1.0, 1.0], &[8, 8], None).unwrap();
        assert_eq!(d.eigenvalues()[d.mode_index(&[0, 0])], 0.0);
        assert!(close(
            d.eigenvalues()[d.mode_index(&[1, 0])],
            PI * PI,
            1e-15
        ));
        let c = SpectralField::constant(&d, 1.0).to_nodal();
        assert!(c.values().iter().all(|v| close(*v, 1.0, 1e-14)));
    }

    #[test]
    fn rectangle_eigenvalue_matches_finite_differences() {
        // Lowest nonzero eigenvalue of the 1-D Neumann second-difference
        // matrix on (0, 2) with M cells is (2/h sin(pi h / 4))^2.
        let d = build_domain(2, &[2.0, 1.0], &[8, 8], None).unwrap();
        let exact = d.eigenvalues()[d.mode_index(&[1, 0])];
        let mut prev_err = f64::INFINITY;
        for m in [50usize, 100, 200, 400] {
            let h = 2.0 / m as f64;
            let fd = lowest_neumann_fd_eigenvalue(m, h);
            let err = (fd - exact).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err / exact < 1e-5);
        assert!(close(exact, PI * PI / 4.0, 1e-15));
    }

    /// Inverse iteration with a shift on the cell-centred Neumann
    /// second-difference matrix.
    fn lowest_neumann_fd_eigenvalue(m: usize, h: f64) -> f64 {
        let mut v: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) / m as f64 - 0.5).collect();
        let shift = 1.0;
        let mut lam = 0.0;
        for _ in 0..60 {
            // Solve (A + shift) w = v with the Thomas algorithm.
            let diag: Vec<f64> = (0..m)
                .map(|j| {
                    let nb = if j == 0 || j == m - 1 { 1.0 } else { 2.0 };
                    nb / (h * h) + shift
                })
                .collect();
            let off = -1.0 / (h * h);
            let mut c = vec![0.0; m];
            let mut d = vec![0.0; m];
            c[0] = off / diag[0];
            d[0] = v[0] / diag[0];
            for j in 1..m {
                let den = diag[j] - off * c[j - 1];
                c[j] = off / den;
                d[j] = (v[j] - off * d[j - 1]) / den;
            }
            let mut w = vec![0.0; m];
            w[m - 1] = d[m - 1];
            for j in (0..m - 1).rev() {
                w[j] = d[j] - c[j] * w[j + 1];
            }
            let mean = w.iter().sum::<f64>() / m as f64;
            w.iter_mut().for_each(|x| *x -= mean);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let vw: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            lam = 1.0 / (vw / v.iter().map(|x| x * x).sum::<f64>()) - shift;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lam
    }

    #[test]
    fn constant_has_single_coefficient() {
        let d = build_domain(2, &[2.0, 1.5], &[8, 6], None).unwrap();
        let u = NodalField::constant(&d, 3.0).to_spectral();
        assert!(close(u.coeffs()[0], 3.0 * 3.0f64.sqrt(), 1e-14));
        assert!(u.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
        assert!(close(u.mean(), 3.0, 1e-14));
    }

    #[test]
    fn sampled_mode_is_unit_coefficient() {
        let d = RectDomain::unit_square(16).unwrap();
        let f = NodalField::from_fn(&d, |x| d.eigenfunction(&[1, 0], x));
        let u = f.to_spectral();
        for (i, c) in u.coeffs().iter().enumerate() {
            let expect = if i == d.mode_index(&[1, 0]) { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-12, "coefficient {i}: {c}");
        }
    }

    #[test]
    fn round_trip_random_band_limited() {
        let d = build_domain(2, &[1.0, 2.0], &[12, 16], Some(&[10, 16])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<f64> = (0..d.num_modes())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let u = SpectralField::new(d.clone(), coeffs).unwrap();
        let back = u.to_nodal().to_spectral();
        let err = back.sub(&u).l2_norm() / u.l2_norm();
        assert!(err < 1e-12, "{err}");
        let f = u.to_nodal();
        let f2 = f.to_spectral().to_nodal();
        let num: f64 = f
            .values()
            .iter()
            .zip(f2.values())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = f.values().iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 1e-12);
        // Parseval.
        assert!(close(f.l2_norm_sq(), u.l2_norm_sq(), 1e-12));
        // Mean extraction.
        assert!(close(u.mean(), f.integral() / d.volume(), 1e-12));
    }

    #[test]
    fn three_dimensional_round_trip() {
        let d = build_domain(3, &[1.0, 0.5, 2.0], &[6, 4, 8], None).unwrap();
        let f = NodalField::from_fn(&d, |x| x[0] * x[1] - x[2].cos());
        let u = f.to_spectral();
        let g = u.to_nodal();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(close(f.l2_norm_sq(), u.l2_norm_sq(), 1e-12));
    }

    #[test]
    fn quad_integral_examples() {
        let d = RectDomain::unit_square(32).unwrap();
        let one = NodalField::constant(&d, 1.0);
        assert!(close(quad_integral(&one, 3.0).unwrap(), 1.0, 1e-14));
        let c = NodalField::from_fn(&d, |x| (PI * x[0]).cos());
        assert!(close(quad_integral(&c, 2.0).unwrap(), 0.5, 1e-14));
        let phi = NodalField::from_fn(&d, |x| d.eigenfunction(&[1, 1], x));
        assert!(close(quad_integral(&phi, 2.0).unwrap(), 1.0, 1e-10));
        // Positive-part convention for non-integer exponents.
        let pos = quad_integral(&c, 1.5).unwrap();
        assert!(pos > 0.0 && pos < 0.5);
        assert!(quad_integral(&c, -1.0).is_err());
    }

    #[test]
    fn positive_part_integral_against_exact() {
        // High-resolution reference with 2^20 midpoints.
        let reference = {
            let m = 1 << 20;
            let h = 1.0 / m as f64;
            (0..m)
                .map(|j| (PI * (j as f64 + 0.5) * h).cos())
                .filter(|v| *v > 0.0)
                .map(|v| v.powf(1.5) * h)
                .sum::<f64>()
        };
        let d = build_domain(1, &[1.0], &[2048], None).unwrap();
        let c = NodalField::from_fn(&d, |x| (PI * x[0]).cos());
        assert!((quad_integral(&c, 1.5).unwrap() - reference).abs() < 1e-6);
    }

    #[test]
    fn gradient_of_mode() {
        let d = RectDomain::unit_square(16).unwrap();
        let u = SpectralField::mode(&d, &[2, 1]);
        let g = u.gradient();
        for j in 0..d.num_nodes() {
            let x = d.node(j);
            let gx = -2.0 * (2.0 * PI) * (2.0 * PI * x[0]).sin() * (PI * x[1]).cos();
            let gy = -2.0 * PI * (2.0 * PI * x[0]).cos() * (PI * x[1]).sin();
            assert!((g[0].values()[j] - gx).abs() < 1e-11);
            assert!((g[1].values()[j] - gy).abs() < 1e-11);
        }
    }

    #[test]
    fn second_differences_converge_at_rate_two() {
        // -Delta phi_k = lambda_k phi_k; central differences at the centre
        // converge quadratically.
        let k = [2usize, 1];
        let d = RectDomain::unit_square(4).unwrap();
        let x = [0.3, 0.4];
        let lam = d.eigenvalue(&k);
        let phi = |p: &[f64]| d.eigenfunction(&k, p);
        let errs: Vec<f64> = [1e-2, 5e-3]
            .iter()
            .map(|&h| {
                let lap = (phi(&[x[0] + h, x[1]])
                    + phi(&[x[0] - h, x[1]])
                    + phi(&[x[0], x[1] + h])
                    + phi(&[x[0], x[1] - h])
                    - 4.0 * phi(&x))
                    / (h * h);
                (-lap - lam * phi(&x)).abs()
            })
            .collect();
        let rate = (errs[0] / errs[1]).log2();
        assert!((rate - 2.0).abs() < 0.05, "{rate}");
    }

    #[test]
    fn invalid_domains_are_rejected() {
        assert!(build_domain(2, &[1.0], &[8, 8], None).is_err());
        assert!(build_domain(2, &[1.0, -1.0], &[8, 8], None).is_err());
        assert!(build_domain(2, &[1.0, 1.0], &[8, 1], None).is_err());
        assert!(build_domain(2, &[1.0, 1.0], &[8, 8], Some(&[9, 8])).is_err());
    }

    #[test]
    fn eval_matches_nodes() {
        let d = build_domain(2, &[1.0, 2.0], &[8, 8], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coeffs: Vec<f64> = (0..d.num_modes())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let u = SpectralField::new(d.clone(), coeffs).unwrap();
        let f = u.to_nodal();
        for j in [0, 7, 33, 63] {
            assert!((u.eval(&d.node(j)) - f.values()[j]).abs() < 1e-12);
        }
    }
}
