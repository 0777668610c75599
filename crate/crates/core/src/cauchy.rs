//! Nonlinear Cauchy problem: stepping with a drift recomputed from the
//! current density, and the frozen-path Picard construction.

use serde::{Deserialize, Serialize};

use crate::drift::{drift_field, DriftField, DriftModel};
use crate::error::{ConvergenceFailure, FpkError, Result};
use crate::functions::TestFunction;
use crate::linear_solver::{FluxOperator, SolveConfig};
use crate::measures::{weighted_tv, DensityField, DiffusionSpec, WeightFunction};

/// Scalar channel sampled at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>) -> Self {
        Series {
            name: name.into(),
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        self.times.push(t);
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<DensityField>,
    /// `mass`, `moment_v`, `mean_<axis>` and `psi:<name>` per configured functional.
    pub channels: Vec<Series>,
    pub warnings: Vec<String>,
    pub dt: f64,
}

impl Trajectory {
    pub fn initial(&self) -> Option<&DensityField> {
        self.snapshots.first()
    }

    pub fn last(&self) -> Option<&DensityField> {
        self.snapshots.last()
    }

    pub fn channel(&self, name: &str) -> Option<&Series> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// `μ_t(ψ)` at every snapshot.
    pub fn functional(&self, psi: &TestFunction) -> Series {
        let mut s = Series::new(format!("psi:{}", psi.name()));
        for (t, snap) in self.times.iter().zip(&self.snapshots) {
            s.push(*t, psi.integrate(snap));
        }
        s
    }
}

pub(crate) enum DriftSource<'a> {
    Frozen(&'a DriftField),
    Model(&'a DriftModel),
    /// Drift `b(·, σ_s)` evaluated along a stored path of states.
    Path {
        model: &'a DriftModel,
        states: &'a [Vec<f64>],
    },
}

/// Number of steps and step size covering `[0, horizon]` exactly.
fn plan(cfg: &SolveConfig, b0: &DriftField, diffusion: &DiffusionSpec) -> (usize, f64) {
    let dt = cfg.step_size(b0, diffusion);
    if cfg.horizon == 0.0 {
        return (0, dt);
    }
    let n = ((cfg.horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, cfg.horizon / n as f64)
}

struct Recorder {
    weight: WeightFunction,
    functionals: Vec<TestFunction>,
    channels: Vec<Series>,
}

impl Recorder {
    fn new(cfg: &SolveConfig, dim: usize) -> Self {
        let mut channels = vec![Series::new("mass"), Series::new("moment_v")];
        for a in 0..dim {
            channels.push(Series::new(format!("mean_{a}")));
        }
        for f in &cfg.functionals {
            channels.push(Series::new(format!("psi:{}", f.name())));
        }
        Recorder {
            weight: cfg.weight,
            functionals: cfg.functionals.clone(),
            channels,
        }
    }

    /// Records all channels; returns `∫V dμ_t`.
    fn record(&mut self, t: f64, rho: &DensityField) -> f64 {
        let d = rho.dim();
        let w = self.weight;
        let moment = rho.integrate(|x| w.v(x));
        self.channels[0].push(t, rho.mass());
        self.channels[1].push(t, moment);
        let mean = rho.mean();
        for a in 0..d {
            self.channels[2 + a].push(t, mean[a]);
        }
        for (i, f) in self.functionals.iter().enumerate() {
            self.channels[2 + d + i].push(t, f.integrate(rho));
        }
        moment
    }
}

const BAND_CELLS: usize = 10;
const BAND_MASS_WARNING: f64 = 1e-8;

pub(crate) fn integrate(
    nu: &DensityField,
    source: DriftSource<'_>,
    diffusion: &DiffusionSpec,
    cfg: &SolveConfig,
) -> Result<Trajectory> {
    integrate_path(nu, source, diffusion, cfg, None, false).map(|(t, _)| t)
}

fn integrate_path(
    nu: &DensityField,
    source: DriftSource<'_>,
    diffusion: &DiffusionSpec,
    cfg: &SolveConfig,
    steps: Option<(usize, f64)>,
    keep_path: bool,
) -> Result<(Trajectory, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if diffusion.dim() != nu.dim() {
        return Err(FpkError::InvalidParameter("diffusion dimension mismatch".into()));
    }
    let grid = nu.grid().clone();
    let b0 = match &source {
        DriftSource::Frozen(b) => (*b).clone(),
        DriftSource::Model(m) => drift_field(m, nu),
        DriftSource::Path { model, states } => {
            drift_field(model, &DensityField::from_parts(grid.clone(), states[0].clone()))
        }
    };
    let mut warnings = Vec::new();
    if let Some((axis, side)) = b0.outward_boundary() {
        warnings.push(format!(
            "initial drift points outward at the {side} boundary of axis {axis}"
        ));
    }
    let (n, dt) = steps.unwrap_or_else(|| plan(cfg, &b0, diffusion));
    let stride = ((cfg.snapshot_stride / dt).round() as usize).max(1);
    let lag = cfg.drift_lag;

    let mut recorder = Recorder::new(cfg, nu.dim());
    let v0 = recorder.record(0.0, nu);
    let mut times = vec![0.0];
    let mut snapshots = vec![nu.clone()];
    let mut path = Vec::new();
    if keep_path {
        path.push(nu.values().to_vec());
    }
    let mut band_warned = false;
    let mut rho = nu.values().to_vec();
    let mut op = FluxOperator::new(&b0, diffusion, cfg.scheme);

    for s in 0..n {
        if s > 0 && s % lag == 0 {
            match &source {
                DriftSource::Frozen(_) => {}
                DriftSource::Model(m) => {
                    let current = DensityField::from_parts(grid.clone(), rho.clone());
                    op = FluxOperator::new(&drift_field(m, &current), diffusion, cfg.scheme);
                }
                DriftSource::Path { model, states } => {
                    let current = DensityField::from_parts(grid.clone(), states[s].clone());
                    op = FluxOperator::new(&drift_field(model, &current), diffusion, cfg.scheme);
                }
            }
        }
        op.step(&mut rho, dt, cfg.stepping)?;
        let t = (s + 1) as f64 * dt;
        let field = DensityField::from_parts(grid.clone(), rho.clone());
        let moment = recorder.record(t, &field);
        if keep_path {
            path.push(rho.clone());
        }
        let snap = (s + 1) % stride == 0 || s + 1 == n;
        if snap && !band_warned && field.boundary_band_mass(BAND_CELLS) > BAND_MASS_WARNING {
            warnings.push(format!(
                "mass {:.3e} within {BAND_CELLS} cells of the boundary at t = {t}",
                field.boundary_band_mass(BAND_CELLS)
            ));
            band_warned = true;
        }
        let blown = !(moment <= cfg.blowup_factor * v0);
        if snap || blown {
            times.push(t);
            snapshots.push(field);
        }
        if blown {
            let partial = Trajectory {
                times,
                snapshots,
                channels: recorder.channels,
                warnings,
                dt,
            };
            return Err(FpkError::BlowUp {
                time: t,
                ratio: moment / v0,
                partial: Box::new(partial),
            });
        }
    }
    Ok((
        Trajectory {
            times,
            snapshots,
            channels: recorder.channels,
            warnings,
            dt,
        },
        path,
    ))
}

/// Solves the nonlinear equation with the drift refreshed every `cfg.drift_lag` steps.
pub fn evolve_nonlinear(
    nu: &DensityField,
    model: &DriftModel,
    diffusion: &DiffusionSpec,
    cfg: &SolveConfig,
) -> Result<Trajectory> {
    model.validate(nu.dim())?;
    integrate(nu, DriftSource::Model(model), diffusion, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PicardGuess {
    /// `σ⁽⁰⁾_t ≡ ν`.
    #[default]
    FrozenInitial,
    /// Path of the decoupled (`ε = 0`) linear equation started at `ν`.
    DecoupledFlow,
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub trajectory: Trajectory,
    pub sweeps: usize,
    /// `sup_t ‖σ⁽ᵏ⁺¹⁾_t − σ⁽ᵏ⁾_t‖_W` per sweep.
    pub residuals: Vec<f64>,
    /// Ratios of successive residuals.
    pub contraction: Vec<f64>,
}

fn contraction_factors(residuals: &[f64]) -> Vec<f64> {
    residuals
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect()
}

/// Iterates `σ ↦` (solution of the linear problem with path drift `b(·, σ_t)`).
pub fn picard_iterate(
    nu: &DensityField,
    model: &DriftModel,
    diffusion: &DiffusionSpec,
    cfg: &SolveConfig,
    max_sweeps: usize,
    guess: PicardGuess,
) -> Result<PicardOutcome> {
    model.validate(nu.dim())?;
    cfg.validate()?;
    let b0 = drift_field(model, nu);
    let steps = plan(cfg, &b0, diffusion);
    let (n, _) = steps;
    let mut old: Vec<Vec<f64>> = match guess {
        PicardGuess::FrozenInitial => vec![nu.values().to_vec(); n + 1],
        PicardGuess::DecoupledFlow => {
            let decoupled = model.with_epsilon(0.0);
            integrate_path(nu, DriftSource::Model(&decoupled), diffusion, cfg, Some(steps), true)?.1
        }
    };
    let grid = nu.grid();
    let mut residuals = Vec::new();
    for sweep in 1..=max_sweeps.max(1) {
        let source = DriftSource::Path { model, states: &old };
        let (trajectory, new) = integrate_path(nu, source, diffusion, cfg, Some(steps), true)?;
        if model.is_decoupled() {
            // The path drift does not depend on σ: one sweep is the fixed point.
            residuals.push(0.0);
            return Ok(PicardOutcome {
                trajectory,
                sweeps: sweep,
                residuals,
                contraction: Vec::new(),
            });
        }
        let mut res: f64 = 0.0;
        for (a, b) in new.iter().zip(&old) {
            let fa = DensityField::from_parts(grid.clone(), a.clone());
            let fb = DensityField::from_parts(grid.clone(), b.clone());
            res = res.max(weighted_tv(&fa, &fb, &cfg.weight)?);
        }
        residuals.push(res);
        if res < cfg.tolerance {
            return Ok(PicardOutcome {
                trajectory,
                sweeps: sweep,
                contraction: contraction_factors(&residuals),
                residuals,
            });
        }
        old = new;
    }
    Err(FpkError::NoConvergence(Box::new(ConvergenceFailure {
        context: "picard_iterate",
        iterations: residuals.len(),
        contraction: contraction_factors(&residuals),
        residuals,
        first_moments: Vec::new(),
    })))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentMargin {
    pub t: f64,
    pub moment: f64,
    pub bound: f64,
    pub margin: f64,
}

/// Gronwall bound `(∫V dν − C/Λ) e^{−Λ(1−δ)t} + C/Λ` against `∫V dμ_t` per snapshot.
pub fn moment_bound_check(
    traj: &Trajectory,
    weight: &WeightFunction,
    c: f64,
    lambda: f64,
    delta: f64,
) -> Result<Vec<MomentMargin>> {
    let nu = traj.initial().ok_or(FpkError::EmptyTrajectory)?;
    let v_nu = nu.integrate(|x| weight.v(x));
    let ratio = c / lambda;
    Ok(traj
        .times
        .iter()
        .zip(&traj.snapshots)
        .map(|(&t, snap)| {
            let moment = snap.integrate(|x| weight.v(x));
            let bound = if delta >= 1.0 {
                v_nu
            } else {
                (v_nu - ratio) * (-lambda * (1.0 - delta) * t).exp() + ratio
            };
            MomentMargin {
                t,
                moment,
                bound,
                margin: bound - moment,
            }
        })
        .collect())
}
