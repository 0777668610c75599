//! Stationary solutions as fixed points of `T: σ ↦ μ` with `L*_σ μ = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::{drift_field, DriftModel, RvhModel};
use crate::error::{ConvergenceFailure, FpkError, Result};
use crate::functions::{project_constraints, Constraint, TestFunction};
use crate::linear_solver::{solve_linear_stationary, SolveConfig};
use crate::measures::{make_gaussian, weighted_tv, DensityField, DiffusionSpec, GridSpec};

/// Solution of the linear stationary problem with drift frozen at `σ`.
pub fn t_map(
    sigma: &DensityField,
    model: &DriftModel,
    diffusion: &DiffusionSpec,
    cfg: &SolveConfig,
) -> Result<DensityField> {
    model.validate(sigma.dim())?;
    solve_linear_stationary(&drift_field(model, sigma), diffusion, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub constraints: Vec<Constraint>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            damping: 1.0,
            tolerance: 1e-8,
            max_iterations: 200,
            constraints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub density: DensityField,
    /// `‖T(μ) − μ‖_W`.
    pub residual: f64,
    pub iterations: usize,
    /// `μ(h)` per constraint.
    pub constraint_values: Vec<f64>,
    pub moment_v: f64,
    pub mean: Vec<f64>,
    pub converged: bool,
    pub residuals: Vec<f64>,
    /// Max `|T(σ)(h) − σ(h)|` before re-projection, per iteration.
    pub constraint_drift: Vec<f64>,
    /// Damping in effect at termination.
    pub damping: f64,
}

/// Damped fixed-point iteration with constraint re-projection after every step.
pub fn find_stationary(
    model: &DriftModel,
    diffusion: &DiffusionSpec,
    cfg: &SolveConfig,
    options: &FixedPointOptions,
    guess: &DensityField,
) -> Result<StationaryResult> {
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(FpkError::InvalidParameter("damping must lie in (0, 1]".into()));
    }
    let weight = cfg.weight;
    let constraints = &options.constraints;
    let mut mu = project_constraints(guess, constraints)?;
    let mut theta = options.damping;
    let mut residuals = Vec::new();
    let mut drift_history = Vec::new();
    let mut first_moments = Vec::new();
    let mut increases = 0;
    for k in 1..=options.max_iterations {
        first_moments.push(mu.mean());
        let t = t_map(&mu, model, diffusion, cfg)?;
        let residual = weighted_tv(&t, &mu, &weight)?;
        if let Some(&prev) = residuals.last() {
            increases = if residual > prev { increases + 1 } else { 0 };
            if increases >= 2 && theta > 0.5 {
                theta = 0.5;
                increases = 0;
            }
        }
        residuals.push(residual);
        if residual < options.tolerance {
            let constraint_values = constraints.iter().map(|c| c.function.integrate(&mu)).collect();
            return Ok(StationaryResult {
                residual,
                iterations: k,
                constraint_values,
                moment_v: mu.integrate(|x| weight.v(x)),
                mean: mu.mean(),
                converged: true,
                residuals,
                constraint_drift: drift_history,
                damping: theta,
                density: mu,
            });
        }
        let drift = constraints
            .iter()
            .map(|c| (c.function.integrate(&t) - c.function.integrate(&mu)).abs())
            .fold(0.0, f64::max);
        drift_history.push(drift);
        let mixed: Vec<f64> = mu
            .values()
            .iter()
            .zip(t.values())
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        let next = crate::measures::normalize(&DensityField::from_parts(mu.grid().clone(), mixed))?;
        mu = project_constraints(&next, constraints)?;
    }
    Err(FpkError::NoConvergence(Box::new(ConvergenceFailure {
        context: "find_stationary",
        iterations: options.max_iterations,
        contraction: residuals
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect(),
        residuals,
        first_moments,
    })))
}

/// `2d/q + 1 + q⁻²(|h||Q| + sup|H|)²`: bound on `∫(1 + |x|²) dμ` for the branch with `⟨v, ·⟩ = Q`.
pub fn rvh_moment_bound(model: &RvhModel, q_value: f64) -> f64 {
    let d = model.dim() as f64;
    let hn = model.h.iter().map(|c| c * c).sum::<f64>().sqrt();
    let s = hn * q_value.abs() + model.field_sup();
    2.0 * d / model.q + 1.0 + s * s / (model.q * model.q)
}

/// One constrained stationary solve per `Q`, started from a Gaussian with `⟨v, mean⟩ = Q`.
pub fn branch_sweep(
    model: &RvhModel,
    diffusion: &DiffusionSpec,
    cfg: &SolveConfig,
    options: &FixedPointOptions,
    grid: &GridSpec,
    q_values: &[f64],
) -> Vec<Result<StationaryResult>> {
    let drift = DriftModel::Rvh(model.clone());
    let v = model.v.clone();
    let vv: f64 = v.iter().map(|c| c * c).sum();
    q_values
        .par_iter()
        .map(|&q| {
            let mean: Vec<f64> = v.iter().map(|c| q * c / vv).collect();
            let var: Vec<f64> = diffusion.diag.iter().map(|a| a / model.q).collect();
            let guess = make_gaussian(grid, &mean, &var)?;
            let mut opts = options.clone();
            opts.constraints = vec![Constraint::new(TestFunction::linear(v.clone()), q)];
            find_stationary(&drift, diffusion, cfg, &opts, &guess)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::tv;

    fn grid() -> GridSpec {
        GridSpec::uniform_1d(-12.0, 12.0, 384).unwrap()
    }

    #[test]
    fn t_map_shifts_by_epsilon_mean() {
        let g = grid();
        let sigma = make_gaussian(&g, &[2.0], &[1.0]).unwrap();
        let t = t_map(&sigma, &DriftModel::mean_field(0.5), &DiffusionSpec::identity(1), &SolveConfig::default())
            .unwrap();
        let expected = make_gaussian(&g, &[1.0], &[1.0]).unwrap();
        assert!(tv(&t, &expected).unwrap() < 1e-4);
    }

    #[test]
    fn contractive_case_converges() {
        let g = grid();
        let guess = make_gaussian(&g, &[1.5], &[2.0]).unwrap();
        let r = find_stationary(
            &DriftModel::mean_field(0.5),
            &DiffusionSpec::identity(1),
            &SolveConfig::default(),
            &FixedPointOptions::default(),
            &guess,
        )
        .unwrap();
        assert!(r.converged && r.iterations <= 30);
        assert!(r.mean[0].abs() < 1e-7);
    }

    #[test]
    fn shifted_critical_case_has_no_fixed_point() {
        let g = grid();
        let guess = make_gaussian(&g, &[0.0], &[1.0]).unwrap();
        let opts = FixedPointOptions {
            max_iterations: 30,
            ..Default::default()
        };
        let model = DriftModel::MeanFieldLinear {
            epsilon: 1.0,
            shift: 0.1,
        };
        match find_stationary(&model, &DiffusionSpec::identity(1), &SolveConfig::default(), &opts, &guess) {
            Err(FpkError::NoConvergence(f)) => {
                let means: Vec<f64> = f.first_moments.iter().map(|m| m[0]).collect();
                assert!(means.windows(2).all(|w| w[1] > w[0]));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn moment_bound_formula() {
        let m = RvhModel::standard(0.1, 0.0);
        assert!((rvh_moment_bound(&m, 0.0) - 3.0).abs() < 1e-12);
    }
}
