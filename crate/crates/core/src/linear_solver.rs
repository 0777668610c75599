//! Finite-volume solver for the linear equation `∂_tρ = L*_σ ρ` with a frozen drift.
//!
//! Face fluxes use exponential fitting so that discrete Gibbs states of linear
//! and gradient drifts are reproduced; steps are backward Euler along each
//! axis (Strang splitting in 2D), which keeps the update an M-matrix solve.

use serde::{Deserialize, Serialize};

use crate::cauchy::{integrate, DriftSource, Trajectory};
use crate::error::{ConvergenceFailure, FpkError, Result};
use crate::functions::TestFunction;
use crate::measures::{
    normalize_in_place, weighted_tv, DensityField, DiffusionSpec, GridSpec, WeightFunction,
};
use crate::drift::DriftField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FluxScheme {
    /// Scharfetter–Gummel weights `B(∓w)` with `B(z) = z/(e^z − 1)`.
    #[default]
    ChangCooper,
    /// Symmetric exponential weights `e^{±w/2}`.
    ExponentialUpwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stepping {
    #[default]
    Implicit,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StationaryMode {
    LongTime,
    #[default]
    DirectNullSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// `None` selects `h / (2 max|b| + 1)`.
    pub dt: Option<f64>,
    pub horizon: f64,
    pub scheme: FluxScheme,
    pub stepping: Stepping,
    pub stationary_mode: StationaryMode,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub snapshot_stride: f64,
    /// Drift refresh period in steps for nonlinear evolutions.
    pub drift_lag: usize,
    pub weight: WeightFunction,
    pub functionals: Vec<TestFunction>,
    pub blowup_factor: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            dt: None,
            horizon: 1.0,
            scheme: FluxScheme::ChangCooper,
            stepping: Stepping::Implicit,
            stationary_mode: StationaryMode::DirectNullSpace,
            tolerance: 1e-10,
            max_iterations: 100_000,
            snapshot_stride: 0.1,
            drift_lag: 1,
            weight: WeightFunction::quadratic(),
            functionals: Vec::new(),
            blowup_factor: 1e6,
        }
    }
}

impl SolveConfig {
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FpkError::InvalidParameter(m.into()));
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("dt must be positive");
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be >= 0");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.snapshot_stride > 0.0) {
            return bad("snapshot stride must be positive");
        }
        if self.drift_lag == 0 {
            return bad("drift lag must be >= 1");
        }
        Ok(())
    }

    /// Step size for a drift field; explicit defaults are clipped to the stability bound.
    pub fn step_size(&self, b: &DriftField, diffusion: &DiffusionSpec) -> f64 {
        self.dt.unwrap_or_else(|| {
            let g = &b.grid;
            let h = (0..g.dim()).map(|a| g.width(a)).fold(f64::INFINITY, f64::min);
            let dt = h / (2.0 * b.max_abs() + 1.0);
            match self.stepping {
                Stepping::Implicit => dt,
                Stepping::Explicit => {
                    let op = FluxOperator::new(b, diffusion, self.scheme);
                    dt.min(0.9 * op.explicit_bound())
                }
            }
        })
    }
}

/// `B(z) = z / (e^z − 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Assembled face coefficients: flux `F = α ρ_L − β ρ_R` across each interior face.
#[derive(Debug, Clone)]
pub struct FluxOperator {
    grid: GridSpec,
    /// Per axis, indexed by the left cell; entries of the last layer are unused.
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

impl FluxOperator {
    pub fn new(b: &DriftField, diffusion: &DiffusionSpec, scheme: FluxScheme) -> Self {
        let g = &b.grid;
        let n = g.len();
        let mut alpha = Vec::with_capacity(g.dim());
        let mut beta = Vec::with_capacity(g.dim());
        for axis in 0..g.dim() {
            let h = g.width(axis);
            let a = diffusion.diag[axis];
            let stride = axis_stride(g, axis);
            let comp = &b.components[axis];
            let mut al = vec![0.0; n];
            let mut be = vec![0.0; n];
            for k in 0..n {
                if g.unflat(k)[axis] + 1 == g.cells[axis] {
                    continue;
                }
                let bf = 0.5 * (comp[k] + comp[k + stride]);
                let w = bf * h / a;
                let s = a / h;
                match scheme {
                    FluxScheme::ChangCooper => {
                        al[k] = s * bernoulli(-w);
                        be[k] = s * bernoulli(w);
                    }
                    FluxScheme::ExponentialUpwind => {
                        al[k] = s * (0.5 * w).exp();
                        be[k] = s * (-0.5 * w).exp();
                    }
                }
            }
            alpha.push(al);
            beta.push(be);
        }
        FluxOperator {
            grid: g.clone(),
            alpha,
            beta,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `dρ/dt = A ρ`.
    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let mut out = vec![0.0; rho.len()];
        for axis in 0..g.dim() {
            let h = g.width(axis);
            let stride = axis_stride(g, axis);
            for k in 0..rho.len() {
                if g.unflat(k)[axis] + 1 == g.cells[axis] {
                    continue;
                }
                let f = (self.alpha[axis][k] * rho[k] - self.beta[axis][k] * rho[k + stride]) / h;
                out[k] -= f;
                out[k + stride] += f;
            }
        }
        out
    }

    /// Largest explicit Euler step keeping the update nonnegative.
    pub fn explicit_bound(&self) -> f64 {
        let g = &self.grid;
        let mut rate = vec![0.0; g.len()];
        for axis in 0..g.dim() {
            let h = g.width(axis);
            let stride = axis_stride(g, axis);
            for k in 0..g.len() {
                if g.unflat(k)[axis] + 1 == g.cells[axis] {
                    continue;
                }
                rate[k] += self.alpha[axis][k] / h;
                rate[k + stride] += self.beta[axis][k] / h;
            }
        }
        1.0 / rate.iter().copied().fold(f64::MIN_POSITIVE, f64::max)
    }

    /// Backward Euler along one axis: `(I − τ A_axis) ρ' = ρ` on every grid line.
    fn implicit_axis(&self, rho: &mut [f64], axis: usize, tau: f64) {
        let g = &self.grid;
        let n = g.cells[axis];
        let stride = axis_stride(g, axis);
        let h = g.width(axis);
        let (al, be) = (&self.alpha[axis], &self.beta[axis]);
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut cp = vec![0.0; n];
        for start in 0..g.len() {
            if g.unflat(start)[axis] != 0 {
                continue;
            }
            for i in 0..n {
                let k = start + i * stride;
                diag[i] = 1.0;
                lower[i] = 0.0;
                upper[i] = 0.0;
                rhs[i] = rho[k];
                if i + 1 < n {
                    diag[i] += tau * al[k] / h;
                    upper[i] = -tau * be[k] / h;
                }
                if i > 0 {
                    let kl = k - stride;
                    diag[i] += tau * be[kl] / h;
                    lower[i] = -tau * al[kl] / h;
                }
            }
            // Thomas algorithm; all quantities keep their signs for this M-matrix.
            cp[0] = upper[0] / diag[0];
            rhs[0] /= diag[0];
            for i in 1..n {
                let denom = diag[i] - lower[i] * cp[i - 1];
                cp[i] = upper[i] / denom;
                rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
            }
            for i in (0..n - 1).rev() {
                rhs[i] -= cp[i] * rhs[i + 1];
            }
            for i in 0..n {
                rho[start + i * stride] = rhs[i];
            }
        }
    }

    /// One step of length `dt`.
    pub fn step(&self, rho: &mut [f64], dt: f64, stepping: Stepping) -> Result<()> {
        match stepping {
            Stepping::Explicit => {
                let bound = self.explicit_bound();
                if dt > bound * (1.0 + 1e-12) {
                    return Err(FpkError::StabilityViolation { dt, bound });
                }
                let d = self.apply(rho);
                for (r, v) in rho.iter_mut().zip(d) {
                    *r += dt * v;
                }
            }
            Stepping::Implicit => {
                if self.grid.dim() == 1 {
                    self.implicit_axis(rho, 0, dt);
                } else {
                    self.implicit_axis(rho, 0, 0.5 * dt);
                    self.implicit_axis(rho, 1, dt);
                    self.implicit_axis(rho, 0, 0.5 * dt);
                }
            }
        }
        if let Some((cell, &value)) = rho.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(FpkError::NegativeDensity { cell, value });
        }
        Ok(())
    }

    /// Normalized kernel of `A` by subtraction-free banded elimination.
    pub fn null_space(&self) -> Result<Vec<f64>> {
        let g = &self.grid;
        let n = g.len();
        let bw = if g.dim() == 1 { 1 } else { g.cells[1] };
        let width = 2 * bw + 1;
        // q[i][j - i + bw] = rate i → j = A[j][i] (off-diagonal only).
        let mut q = vec![0.0; n * width];
        let idx = |i: usize, j: usize| i * width + (j + bw - i);
        for axis in 0..g.dim() {
            let h = g.width(axis);
            let stride = axis_stride(g, axis);
            for k in 0..n {
                if g.unflat(k)[axis] + 1 == g.cells[axis] {
                    continue;
                }
                q[idx(k, k + stride)] += self.alpha[axis][k] / h;
                q[idx(k + stride, k)] += self.beta[axis][k] / h;
            }
        }
        let mut pivot = vec![0.0; n];
        for k in 0..n - 1 {
            let hi = (k + bw).min(n - 1);
            let p: f64 = (k + 1..=hi).map(|j| q[idx(k, j)]).sum();
            if !(p > 0.0) {
                return Err(FpkError::InvalidParameter(
                    "discrete stationary problem does not have a one-dimensional null space".into(),
                ));
            }
            pivot[k] = p;
            for i in k + 1..=hi {
                let qik = q[idx(i, k)];
                if qik == 0.0 {
                    continue;
                }
                let f = qik / p;
                for j in k + 1..=hi {
                    if j != i {
                        q[idx(i, j)] += f * q[idx(k, j)];
                    }
                }
            }
        }
        let mut pi = vec![0.0; n];
        pi[n - 1] = 1.0;
        for k in (0..n - 1).rev() {
            let hi = (k + bw).min(n - 1);
            let s: f64 = (k + 1..=hi).map(|i| pi[i] * q[idx(i, k)]).sum();
            pi[k] = s / pivot[k];
        }
        normalize_in_place(&mut pi, g.cell_volume())?;
        Ok(pi)
    }
}

pub(crate) fn axis_stride(g: &GridSpec, axis: usize) -> usize {
    if g.dim() == 2 && axis == 0 {
        g.cells[1]
    } else {
        1
    }
}

fn check_inputs(rho: &DensityField, b: &DriftField, diffusion: &DiffusionSpec) -> Result<()> {
    rho.grid().require_same(&b.grid)?;
    if diffusion.dim() != rho.dim() {
        return Err(FpkError::InvalidParameter("diffusion dimension mismatch".into()));
    }
    if b.components.iter().flatten().any(|v| !v.is_finite()) {
        return Err(FpkError::InvalidParameter("drift field is not finite".into()));
    }
    Ok(())
}

/// One conservative step of length `dt`.
pub fn step_linear(
    rho: &DensityField,
    b: &DriftField,
    diffusion: &DiffusionSpec,
    dt: f64,
    cfg: &SolveConfig,
) -> Result<DensityField> {
    check_inputs(rho, b, diffusion)?;
    if !(dt > 0.0) {
        return Err(FpkError::InvalidParameter("dt must be positive".into()));
    }
    let op = FluxOperator::new(b, diffusion, cfg.scheme);
    let mut values = rho.values().to_vec();
    op.step(&mut values, dt, cfg.stepping)?;
    Ok(DensityField::from_parts(rho.grid().clone(), values))
}

pub fn evolve_linear(
    rho0: &DensityField,
    b: &DriftField,
    diffusion: &DiffusionSpec,
    cfg: &SolveConfig,
) -> Result<Trajectory> {
    check_inputs(rho0, b, diffusion)?;
    integrate(rho0, DriftSource::Frozen(b), diffusion, cfg)
}

/// Stationary density of the frozen-drift problem.
pub fn solve_linear_stationary(
    b: &DriftField,
    diffusion: &DiffusionSpec,
    cfg: &SolveConfig,
) -> Result<DensityField> {
    cfg.validate()?;
    if diffusion.dim() != b.grid.dim() {
        return Err(FpkError::InvalidParameter("diffusion dimension mismatch".into()));
    }
    if let Some((axis, side)) = b.outward_boundary() {
        return Err(FpkError::NotConfining { axis, side });
    }
    let op = FluxOperator::new(b, diffusion, cfg.scheme);
    let g = b.grid.clone();
    match cfg.stationary_mode {
        StationaryMode::DirectNullSpace => Ok(DensityField::from_parts(g, op.null_space()?)),
        StationaryMode::LongTime => {
            let dt = cfg.step_size(b, diffusion);
            let mut rho = vec![1.0; g.len()];
            normalize_in_place(&mut rho, g.cell_volume())?;
            let mut residuals = Vec::new();
            let w = cfg.weight;
            for _ in 0..cfg.max_iterations {
                let mut next = rho.clone();
                op.step(&mut next, dt, cfg.stepping)?;
                let a = DensityField::from_parts(g.clone(), next);
                let prev = DensityField::from_parts(g.clone(), rho);
                let r = weighted_tv(&a, &prev, &w)? / dt;
                rho = a.into_values();
                if residuals.len() < 10_000 {
                    residuals.push(r);
                }
                if r < cfg.tolerance {
                    normalize_in_place(&mut rho, g.cell_volume())?;
                    return Ok(DensityField::from_parts(g, rho));
                }
            }
            Err(FpkError::NoConvergence(Box::new(ConvergenceFailure {
                context: "solve_linear_stationary",
                iterations: cfg.max_iterations,
                residuals,
                first_moments: Vec::new(),
                contraction: Vec::new(),
            })))
        }
    }
}
