//! Probability measures tabulated on a rectangular grid.
//!
//! A [`DensityField`] stores one nonnegative value per cell; the measure of a
//! cell is `value * cell_volume`. All quadratures use the midpoint rule, so the
//! total mass is exactly the sum of the cell values times the cell volume and
//! the solvers conserve it to summation roundoff.
//!
//! Weighted norms follow `‖μ‖_W = ‖W·μ‖_TV` with `W = V^γ` and the Lyapunov
//! family `V(x) = (1 + |x|²)^m`.

use serde::{Deserialize, Serialize};

use crate::error::{FpkError, Result};

/// Largest supported state-space dimension.
pub const MAX_DIM: usize = 2;

/// Cell-center coordinates; the second component is zero in 1D.
pub type Point = [f64; MAX_DIM];

/// Uniform rectangular grid truncating ℝ^d to a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let grid = GridSpec {
            lower,
            upper,
            cells,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn uniform_1d(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        Self::new(vec![lower], vec![upper], vec![cells])
    }

    /// Square 2D grid with identical axes.
    pub fn square_2d(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        Self::new(vec![lower; 2], vec![upper; 2], vec![cells; 2])
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || d > MAX_DIM {
            return Err(FpkError::InvalidGrid(format!(
                "dimension must be 1 or 2, got {d}"
            )));
        }
        if self.upper.len() != d || self.cells.len() != d {
            return Err(FpkError::InvalidGrid(
                "lower, upper and cells must have the same length".into(),
            ));
        }
        for axis in 0..d {
            let (lo, hi) = (self.lower[axis], self.upper[axis]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(FpkError::InvalidGrid(format!(
                    "axis {axis}: need finite upper > lower, got [{lo}, {hi}]"
                )));
            }
            if self.cells[axis] < 8 {
                return Err(FpkError::InvalidGrid(format!(
                    "axis {axis}: at least 8 cells required, got {}",
                    self.cells[axis]
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).product()
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of the center of cell `i` along `axis`.
    pub fn center(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i as f64 + 0.5) * self.width(axis)
    }

    /// Centers along one axis.
    pub fn axis_centers(&self, axis: usize) -> Vec<f64> {
        (0..self.cells[axis]).map(|i| self.center(axis, i)).collect()
    }

    /// Flat index of a multi-index; axis 0 is the slow (row) index.
    pub fn flat(&self, idx: &[usize]) -> usize {
        match self.dim() {
            1 => idx[0],
            _ => idx[0] * self.cells[1] + idx[1],
        }
    }

    /// Inverse of [`GridSpec::flat`].
    pub fn unflat(&self, flat: usize) -> [usize; MAX_DIM] {
        match self.dim() {
            1 => [flat, 0],
            _ => [flat / self.cells[1], flat % self.cells[1]],
        }
    }

    pub fn point(&self, flat: usize) -> Point {
        let idx = self.unflat(flat);
        let mut p = [0.0; MAX_DIM];
        for (axis, slot) in p.iter_mut().enumerate().take(self.dim()) {
            *slot = self.center(axis, idx[axis]);
        }
        p
    }

    /// All cell centers in flat order.
    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|a| x[a] >= self.lower[a] && x[a] <= self.upper[a])
    }

    /// Cell containing `x`, or `None` outside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; MAX_DIM];
        for axis in 0..self.dim() {
            let u = (x[axis] - self.lower[axis]) / self.width(axis);
            if !(u >= 0.0 && u <= self.cells[axis] as f64) {
                return None;
            }
            idx[axis] = (u.floor() as usize).min(self.cells[axis] - 1);
        }
        Some(self.flat(&idx[..self.dim()]))
    }

    pub(crate) fn require_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(FpkError::GridMismatch)
        }
    }
}

/// A probability density tabulated on a grid (density units: 1/volume).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl DensityField {
    /// Wraps raw cell values; values must be finite and nonnegative.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(FpkError::InvalidParameter(format!(
                "expected {} cell values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some((cell, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(FpkError::NegativeDensity { cell, value });
        }
        Ok(DensityField { grid, values })
    }

    /// Values assumed valid (solver internals).
    pub(crate) fn from_parts(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        DensityField { grid, values }
    }

    /// Tabulates `f` at cell centers.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|k| f(&grid.point(k)[..d]))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Probability weight of each cell (`value * volume`).
    pub fn cell_masses(&self) -> impl Iterator<Item = f64> + '_ {
        let vol = self.grid.cell_volume();
        self.values.iter().map(move |v| v * vol)
    }

    pub fn integrate(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        integrate_functional(self, phi)
    }

    /// Mean vector (length = dim).
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|a| self.integrate(|x| x[a])).collect()
    }

    /// Per-axis variance.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        (0..self.dim())
            .map(|a| self.integrate(|x| (x[a] - mean[a]).powi(2)))
            .collect()
    }

    /// Fraction of mass in the `band` outermost cells of every axis.
    pub fn boundary_band_mass(&self, band: usize) -> f64 {
        let g = &self.grid;
        let vol = g.cell_volume();
        let mut total = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let idx = g.unflat(k);
            let near = (0..g.dim())
                .any(|a| idx[a] < band || idx[a] + band >= g.cells[a]);
            if near {
                total += v * vol;
            }
        }
        total
    }
}

/// Returns the input rescaled to unit mass.
pub fn normalize(field: &DensityField) -> Result<DensityField> {
    let mass = field.mass();
    if !(mass >= 1e-300) {
        return Err(FpkError::ZeroMass(mass));
    }
    let scale = 1.0 / mass;
    let values = field.values.iter().map(|v| v * scale).collect();
    Ok(DensityField::from_parts(field.grid.clone(), values))
}

pub(crate) fn normalize_in_place(values: &mut [f64], cell_volume: f64) -> Result<()> {
    let mass = values.iter().sum::<f64>() * cell_volume;
    if !(mass >= 1e-300) {
        return Err(FpkError::ZeroMass(mass));
    }
    let scale = 1.0 / mass;
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}

/// Midpoint quadrature of `∫ φ dμ`.
pub fn integrate_functional(field: &DensityField, phi: impl Fn(&[f64]) -> f64) -> f64 {
    let g = &field.grid;
    let d = g.dim();
    let sum: f64 = field
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| v * phi(&g.point(k)[..d]))
        .sum();
    sum * g.cell_volume()
}

/// Lyapunov function `V(x) = (1 + |x|²)^m` and weight `W = V^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFunction {
    pub m: f64,
    pub gamma: f64,
}

impl WeightFunction {
    pub fn new(m: f64, gamma: f64) -> Result<Self> {
        if !(m >= 0.5 && m.is_finite()) {
            return Err(FpkError::InvalidParameter(format!(
                "moment order m must be >= 1/2, got {m}"
            )));
        }
        if !(gamma > 0.0 && gamma <= 0.5) {
            return Err(FpkError::InvalidParameter(format!(
                "gamma must lie in (0, 1/2], got {gamma}"
            )));
        }
        Ok(WeightFunction { m, gamma })
    }

    /// `V = 1 + |x|²`, `W = (1 + |x|²)^{1/2}`.
    pub fn quadratic() -> Self {
        WeightFunction { m: 1.0, gamma: 0.5 }
    }

    fn base(x: &[f64]) -> f64 {
        1.0 + x.iter().map(|c| c * c).sum::<f64>()
    }

    pub fn v(&self, x: &[f64]) -> f64 {
        Self::base(x).powf(self.m)
    }

    pub fn w(&self, x: &[f64]) -> f64 {
        Self::base(x).powf(self.m * self.gamma)
    }

    /// `V^p` for an arbitrary exponent (growth bounds in the H-conditions).
    pub fn v_pow(&self, x: &[f64], p: f64) -> f64 {
        Self::base(x).powf(self.m * p)
    }

    /// `∂V/∂x_axis = 2m x_axis (1+|x|²)^{m-1}`.
    pub fn dv(&self, x: &[f64], axis: usize) -> f64 {
        2.0 * self.m * x[axis] * Self::base(x).powf(self.m - 1.0)
    }

    /// `∂²V/∂x_axis²`.
    pub fn d2v(&self, x: &[f64], axis: usize) -> f64 {
        let s = Self::base(x);
        2.0 * self.m * s.powf(self.m - 1.0)
            + 4.0 * self.m * (self.m - 1.0) * x[axis] * x[axis] * s.powf(self.m - 2.0)
    }
}

/// Constant diagonal diffusion matrix `A = diag(a¹¹, …)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub diag: Vec<f64>,
}

impl DiffusionSpec {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || diag.len() > MAX_DIM {
            return Err(FpkError::InvalidParameter(
                "diffusion needs one entry per axis".into(),
            ));
        }
        if let Some(a) = diag.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(FpkError::InvalidParameter(format!(
                "diffusion entries must be positive, got {a}"
            )));
        }
        Ok(DiffusionSpec { diag })
    }

    pub fn identity(dim: usize) -> Self {
        DiffusionSpec {
            diag: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Smallest `K₁` with `K₁⁻¹ I ≤ A ≤ K₁ I`.
    pub fn ellipticity(&self) -> f64 {
        self.diag
            .iter()
            .map(|&a| a.max(1.0 / a))
            .fold(1.0, f64::max)
    }

    /// Lipschitz constant of `A(x)`; zero for constant coefficients.
    pub fn lipschitz(&self) -> f64 {
        0.0
    }

    pub fn is_identity(&self) -> bool {
        self.diag.iter().all(|&a| a == 1.0)
    }

    pub fn max_entry(&self) -> f64 {
        self.diag.iter().copied().fold(0.0, f64::max)
    }
}

/// `∫ W |ρ_μ − ρ_σ| dx`.
pub fn weighted_tv(mu: &DensityField, sigma: &DensityField, weight: &WeightFunction) -> Result<f64> {
    mu.grid.require_same(&sigma.grid)?;
    let g = &mu.grid;
    let d = g.dim();
    let sum: f64 = mu
        .values
        .iter()
        .zip(&sigma.values)
        .enumerate()
        .map(|(k, (a, b))| weight.w(&g.point(k)[..d]) * (a - b).abs())
        .sum();
    Ok(sum * g.cell_volume())
}

/// Plain total variation `∫ |ρ_μ − ρ_σ| dx` (the `W ≡ 1` case).
pub fn tv(mu: &DensityField, sigma: &DensityField) -> Result<f64> {
    mu.grid.require_same(&sigma.grid)?;
    let sum: f64 = mu
        .values
        .iter()
        .zip(&sigma.values)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum * mu.grid.cell_volume())
}

/// Kantorovich distance in 1D via `∫ |F_μ − F_σ| dx`.
///
/// The tabulated densities are piecewise constant, so the CDF difference is
/// piecewise linear and each cell is integrated exactly.
pub fn w1_1d(mu: &DensityField, sigma: &DensityField) -> Result<f64> {
    if mu.dim() != 1 {
        return Err(FpkError::DimensionUnsupported {
            supported: 1,
            got: mu.dim(),
        });
    }
    mu.grid.require_same(&sigma.grid)?;
    let h = mu.grid.width(0);
    let mut diff = 0.0;
    let mut total = 0.0;
    for (a, b) in mu.values.iter().zip(&sigma.values) {
        let next = diff + (a - b) * h;
        total += linear_abs_integral(diff, next) * h;
        diff = next;
    }
    Ok(total)
}

/// `∫₀¹ |(1−s)p + s q| ds`.
fn linear_abs_integral(p: f64, q: f64) -> f64 {
    if p * q >= 0.0 {
        0.5 * (p.abs() + q.abs())
    } else {
        0.5 * (p * p + q * q) / (p.abs() + q.abs())
    }
}

/// Standard normal CDF.
pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Normalized product Gaussian tabulated at cell centers.
///
/// Fails with [`FpkError::MassLeakage`] when more than `1e-8` of the analytic
/// mass falls outside the box.
pub fn make_gaussian(grid: &GridSpec, mean: &[f64], variance: &[f64]) -> Result<DensityField> {
    let d = grid.dim();
    if mean.len() != d || variance.len() != d {
        return Err(FpkError::InvalidParameter(format!(
            "mean and variance need {d} components"
        )));
    }
    if let Some(v) = variance.iter().find(|v| !(**v > 0.0)) {
        return Err(FpkError::InvalidParameter(format!(
            "variance must be positive, got {v}"
        )));
    }
    let mut inside = 1.0;
    for a in 0..d {
        let s = variance[a].sqrt();
        let lo = normal_cdf((grid.lower[a] - mean[a]) / s);
        let hi = normal_cdf((grid.upper[a] - mean[a]) / s);
        inside *= hi - lo;
    }
    let leaked = 1.0 - inside;
    if leaked > 1e-8 {
        return Err(FpkError::MassLeakage { leaked });
    }
    let norm: f64 = variance
        .iter()
        .map(|v| (2.0 * std::f64::consts::PI * v).sqrt())
        .product();
    let field = DensityField::from_fn(grid.clone(), |x| {
        let e: f64 = (0..d)
            .map(|a| (x[a] - mean[a]).powi(2) / (2.0 * variance[a]))
            .sum();
        (-e).exp() / norm
    })?;
    normalize(&field)
}

/// Uniform density on the axis-aligned box `[lo, hi]` (clipped to the grid).
pub fn make_uniform(grid: &GridSpec, lo: &[f64], hi: &[f64]) -> Result<DensityField> {
    let d = grid.dim();
    let field = DensityField::from_fn(grid.clone(), |x| {
        if (0..d).all(|a| x[a] >= lo[a] && x[a] <= hi[a]) {
            1.0
        } else {
            0.0
        }
    })?;
    normalize(&field)
}

/// Weighted sum of product Gaussians, normalized.
pub fn make_mixture(
    grid: &GridSpec,
    components: &[(f64, Vec<f64>, Vec<f64>)],
) -> Result<DensityField> {
    if components.is_empty() {
        return Err(FpkError::InvalidParameter("empty mixture".into()));
    }
    let mut values = vec![0.0; grid.len()];
    for (weight, mean, var) in components {
        if !(*weight >= 0.0) {
            return Err(FpkError::InvalidParameter(format!(
                "mixture weight must be nonnegative, got {weight}"
            )));
        }
        let g = make_gaussian(grid, mean, var)?;
        for (v, gv) in values.iter_mut().zip(g.values()) {
            *v += weight * gv;
        }
    }
    normalize(&DensityField::new(grid.clone(), values)?)
}
