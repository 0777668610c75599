//! Interacting particle system `dX = b(X, μᴺ) dt + √(2a) dB` and its comparison with the PDE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cauchy::Trajectory;
use crate::drift::{DriftModel, Measure};
use crate::error::{FpkError, Result};
use crate::functions::TestFunction;
use crate::measures::{
    make_gaussian, make_mixture, make_uniform, DensityField, DiffusionSpec, GridSpec, Point, MAX_DIM,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Initial law `ν` to draw particles from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sampler {
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
    Mixture { components: Vec<MixtureComponent> },
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    Point { at: Vec<f64> },
}

impl Sampler {
    pub fn dim(&self) -> usize {
        match self {
            Sampler::Gaussian { mean, .. } => mean.len(),
            Sampler::Mixture { components } => components.first().map_or(0, |c| c.mean.len()),
            Sampler::Uniform { lower, .. } => lower.len(),
            Sampler::Point { at } => at.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let bad = |m: &str| Err(FpkError::InvalidParameter(format!("sampler: {m}")));
        if d == 0 || d > MAX_DIM {
            return bad("dimension must be 1 or 2");
        }
        match self {
            Sampler::Gaussian { mean, variance } => {
                if variance.len() != mean.len() || variance.iter().any(|v| !(*v > 0.0)) {
                    return bad("variances must be positive, one per axis");
                }
            }
            Sampler::Mixture { components } => {
                if components.iter().any(|c| {
                    c.mean.len() != d
                        || c.variance.len() != d
                        || c.variance.iter().any(|v| !(*v > 0.0))
                        || !(c.weight >= 0.0)
                }) || components.iter().map(|c| c.weight).sum::<f64>() <= 0.0
                {
                    return bad("mixture components are inconsistent");
                }
            }
            Sampler::Uniform { lower, upper } => {
                if upper.len() != d || lower.iter().zip(upper).any(|(l, u)| !(u > l)) {
                    return bad("uniform box needs upper > lower");
                }
            }
            Sampler::Point { .. } => {}
        }
        Ok(())
    }

    /// Grid density of the same law; point masses have none.
    pub fn density(&self, grid: &GridSpec) -> Result<DensityField> {
        self.validate()?;
        if grid.dim() != self.dim() {
            return Err(FpkError::InvalidParameter("initial law and grid dimensions differ".into()));
        }
        match self {
            Sampler::Gaussian { mean, variance } => make_gaussian(grid, mean, variance),
            Sampler::Mixture { components } => {
                let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = components
                    .iter()
                    .map(|c| (c.weight, c.mean.clone(), c.variance.clone()))
                    .collect();
                make_mixture(grid, &parts)
            }
            Sampler::Uniform { lower, upper } => make_uniform(grid, lower, upper),
            Sampler::Point { .. } => Err(FpkError::InvalidParameter(
                "a point mass has no grid density".into(),
            )),
        }
    }

    fn gaussian(rng: &mut ChaCha8Rng, mean: &[f64], variance: &[f64]) -> Point {
        let mut p = [0.0; MAX_DIM];
        for a in 0..mean.len() {
            let z: f64 = StandardNormal.sample(rng);
            p[a] = mean[a] + variance[a].sqrt() * z;
        }
        p
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        match self {
            Sampler::Gaussian { mean, variance } => Self::gaussian(rng, mean, variance),
            Sampler::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let mut u = rng.random_range(0.0..total);
                let mut chosen = &components[components.len() - 1];
                for c in components {
                    if u < c.weight {
                        chosen = c;
                        break;
                    }
                    u -= c.weight;
                }
                Self::gaussian(rng, &chosen.mean, &chosen.variance)
            }
            Sampler::Uniform { lower, upper } => {
                let mut p = [0.0; MAX_DIM];
                for a in 0..lower.len() {
                    p[a] = rng.random_range(lower[a]..upper[a]);
                }
                p
            }
            Sampler::Point { at } => {
                let mut p = [0.0; MAX_DIM];
                p[..at.len()].copy_from_slice(at);
                p
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub dim: usize,
    /// Identity of each particle; its noise stream follows the id.
    pub ids: Vec<u64>,
    pub positions: Vec<Point>,
    pub seed: u64,
    pub time: f64,
}

impl Measure for ParticleEnsemble {
    fn dim(&self) -> usize {
        self.dim
    }

    fn for_each_atom(&self, f: &mut dyn FnMut(&[f64], f64)) {
        for p in &self.positions {
            f(&p[..self.dim], 1.0);
        }
    }
}

impl ParticleEnsemble {
    pub fn from_positions(dim: usize, positions: Vec<Point>, seed: u64) -> Self {
        let ids = (0..positions.len() as u64).collect();
        ParticleEnsemble {
            dim,
            ids,
            positions,
            seed,
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Sample mean and standard error of `φ(X)`.
    pub fn estimate(&self, phi: impl Fn(&[f64]) -> f64) -> (f64, f64) {
        let n = self.len() as f64;
        let vals: Vec<f64> = self.positions.iter().map(|p| phi(&p[..self.dim])).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }

    pub fn mean(&self, axis: usize) -> f64 {
        self.estimate(|x| x[axis]).0
    }

    /// Unbiased sample variance along `axis`.
    pub fn variance(&self, axis: usize) -> f64 {
        let m = self.mean(axis);
        let n = self.len() as f64;
        self.positions.iter().map(|p| (p[axis] - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
    }

    /// Fourth central moment along `axis`.
    fn fourth_moment(&self, axis: usize) -> f64 {
        let m = self.mean(axis);
        self.positions.iter().map(|p| (p[axis] - m).powi(4)).sum::<f64>() / self.len() as f64
    }
}

/// Draws `n` particles from `sampler`.
pub fn sample_ensemble(sampler: &Sampler, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    sampler.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let positions = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    Ok(ParticleEnsemble::from_positions(sampler.dim(), positions, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleOptions {
    pub particles: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub snapshot_stride: f64,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        ParticleOptions {
            particles: 10_000,
            dt: 5e-3,
            horizon: 1.0,
            seed: 1,
            snapshot_stride: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    pub snapshots: Vec<ParticleEnsemble>,
    pub dt: f64,
    pub warnings: Vec<String>,
}

impl ParticleRun {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &ParticleEnsemble {
        self.snapshots.last().expect("a run holds at least its initial ensemble")
    }
}

pub fn simulate(
    sampler: &Sampler,
    model: &DriftModel,
    diffusion: &DiffusionSpec,
    options: &ParticleOptions,
) -> Result<ParticleRun> {
    if options.particles < 100 {
        return Err(FpkError::InvalidParameter("need at least 100 particles".into()));
    }
    let initial = sample_ensemble(sampler, options.particles, options.seed)?;
    simulate_from(initial, model, diffusion, options)
}

/// Euler–Maruyama from a given ensemble; `options.particles` is ignored.
pub fn simulate_from(
    initial: ParticleEnsemble,
    model: &DriftModel,
    diffusion: &DiffusionSpec,
    options: &ParticleOptions,
) -> Result<ParticleRun> {
    let d = initial.dim;
    model.validate(d)?;
    if diffusion.dim() != d || initial.is_empty() {
        return Err(FpkError::InvalidParameter("ensemble and diffusion disagree".into()));
    }
    if !(options.dt > 0.0) || !(options.horizon >= 0.0) || !(options.snapshot_stride > 0.0) {
        return Err(FpkError::InvalidParameter("dt, horizon and stride must be positive".into()));
    }
    let n_steps = if options.horizon == 0.0 {
        0
    } else {
        ((options.horizon / options.dt) - 1e-9).ceil().max(1.0) as usize
    };
    let dt = if n_steps == 0 { options.dt } else { options.horizon / n_steps as f64 };
    let stride = ((options.snapshot_stride / dt).round() as usize).max(1);
    let scale: Vec<f64> = diffusion.diag.iter().map(|a| (2.0 * a * dt).sqrt()).collect();
    let mut rngs: Vec<ChaCha8Rng> = initial
        .ids
        .iter()
        .map(|&id| {
            let mut r = ChaCha8Rng::seed_from_u64(initial.seed);
            r.set_stream(id);
            r
        })
        .collect();
    let mut current = initial;
    let mut snapshots = vec![current.clone()];
    let mut warnings = Vec::new();
    for s in 0..n_steps {
        let drifts: Vec<Point> = {
            let prepared = model.prepare(&current);
            current.positions.par_iter().map(|p| prepared.eval(&p[..d])).collect()
        };
        current
            .positions
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .zip(drifts.par_iter())
            .for_each(|((p, rng), b)| {
                for a in 0..d {
                    let z: f64 = StandardNormal.sample(rng);
                    p[a] += b[a] * dt + scale[a] * z;
                }
            });
        current.time = (s + 1) as f64 * dt;
        let finite = current.positions.iter().all(|p| p[..d].iter().all(|v| v.is_finite()));
        if (s + 1) % stride == 0 || s + 1 == n_steps || !finite {
            snapshots.push(current.clone());
        }
        if !finite {
            warnings.push(format!("particle positions diverged at t = {}", current.time));
            break;
        }
    }
    Ok(ParticleRun {
        snapshots,
        dt,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDensity {
    pub density: DensityField,
    /// Particles outside the grid box (excluded from the histogram).
    pub out_of_box: usize,
}

/// Normalized histogram, optionally smoothed with a Silverman-bandwidth Gaussian.
pub fn empirical_density(ensemble: &ParticleEnsemble, grid: &GridSpec, smooth: bool) -> Result<EmpiricalDensity> {
    grid.validate()?;
    if grid.dim() != ensemble.dim {
        return Err(FpkError::InvalidParameter("grid and ensemble dimensions differ".into()));
    }
    let mut counts = vec![0.0; grid.len()];
    let mut out = 0;
    for p in &ensemble.positions {
        match grid.locate(&p[..ensemble.dim]) {
            Some(k) => counts[k] += 1.0,
            None => out += 1,
        }
    }
    let inside = ensemble.len() - out;
    if inside == 0 {
        return Err(FpkError::ZeroMass(0.0));
    }
    if smooth && ensemble.len() > 1 {
        let n = ensemble.len() as f64;
        for axis in 0..grid.dim() {
            let bw = 1.06 * ensemble.variance(axis).sqrt() * n.powf(-0.2);
            let dx = grid.width(axis);
            if bw > 0.5 * dx {
                counts = smooth_axis(grid, &counts, axis, bw / dx);
            }
        }
    }
    let mut values = counts;
    crate::measures::normalize_in_place(&mut values, grid.cell_volume())?;
    Ok(EmpiricalDensity {
        density: DensityField::from_parts(grid.clone(), values),
        out_of_box: out,
    })
}

/// Gaussian convolution along one axis; `sigma` in cells.
fn smooth_axis(grid: &GridSpec, data: &[f64], axis: usize, sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    let stride = crate::linear_solver::axis_stride(grid, axis);
    let n = grid.cells[axis] as isize;
    let mut out = vec![0.0; data.len()];
    for (k, &v) in data.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let i = grid.unflat(k)[axis] as isize;
        let base = k as isize - i * stride as isize;
        for (j, w) in taps.iter().enumerate() {
            let target = i + j as isize - radius;
            if target >= 0 && target < n {
                out[(base + target * stride as isize) as usize] += v * w / total;
            }
        }
    }
    out
}

/// Scalar functional compared between particles and PDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ValidationFunctional {
    Mean { axis: usize },
    Variance { axis: usize },
    Expectation { function: TestFunction },
}

impl ValidationFunctional {
    pub fn name(&self) -> String {
        match self {
            ValidationFunctional::Mean { axis } => format!("mean_{axis}"),
            ValidationFunctional::Variance { axis } => format!("variance_{axis}"),
            ValidationFunctional::Expectation { function } => format!("psi:{}", function.name()),
        }
    }
}

/// Standard-error model for particle estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SeModel {
    /// Independent-sample standard errors.
    Iid,
    /// Mean fluctuations of `b = −x + shift + ε m` follow
    /// `dδm = −(1−ε)δm dt + √(2a/N) dW`, started from the initial sample variance.
    MeanFieldLinear { epsilon: f64, diffusion: f64 },
}

impl SeModel {
    pub fn for_model(model: &DriftModel, diffusion: &DiffusionSpec) -> Self {
        match model {
            DriftModel::MeanFieldLinear { epsilon, .. } => SeModel::MeanFieldLinear {
                epsilon: *epsilon,
                diffusion: diffusion.diag[0],
            },
            _ => SeModel::Iid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub functional: String,
    pub t: f64,
    pub particle: f64,
    pub pde: f64,
    pub se: f64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub rows: Vec<ValidationRow>,
    pub flagged: usize,
    pub max_z: f64,
}

pub const FLAG_Z: f64 = 3.0;

/// `|particle − PDE| / SE` per functional and snapshot.
pub fn cross_validate(
    run: &ParticleRun,
    traj: &Trajectory,
    functionals: &[ValidationFunctional],
    se_model: SeModel,
) -> Result<CrossValidation> {
    if run.snapshots.len() != traj.snapshots.len() {
        return Err(FpkError::TimeGridMismatch(format!(
            "{} particle snapshots vs {} PDE snapshots",
            run.snapshots.len(),
            traj.snapshots.len()
        )));
    }
    for (ens, &t) in run.snapshots.iter().zip(&traj.times) {
        if (ens.time - t).abs() > 1e-9 {
            return Err(FpkError::TimeGridMismatch(format!(
                "particle time {} vs PDE time {t}",
                ens.time
            )));
        }
    }
    let first = &run.snapshots[0];
    let t0 = first.time;
    let n = first.len() as f64;
    let mut rows = Vec::new();
    for (ens, field) in run.snapshots.iter().zip(&traj.snapshots) {
        let t = ens.time - t0;
        for f in functionals {
            let (particle, pde, se) = match f {
                ValidationFunctional::Mean { axis } => {
                    let (m, iid) = ens.estimate(|x| x[*axis]);
                    let se = match se_model {
                        SeModel::Iid => iid,
                        SeModel::MeanFieldLinear { epsilon, diffusion } => {
                            let v0 = first.variance(*axis);
                            let k = 1.0 - epsilon;
                            let var = if k.abs() < 1e-12 {
                                (v0 + 2.0 * diffusion * t) / n
                            } else {
                                let e = (-2.0 * k * t).exp();
                                e * v0 / n + diffusion * (1.0 - e) / (k * n)
                            };
                            var.sqrt()
                        }
                    };
                    (m, field.mean()[*axis], se)
                }
                ValidationFunctional::Variance { axis } => {
                    let v = ens.variance(*axis);
                    let m4 = ens.fourth_moment(*axis);
                    (v, field.variance()[*axis], ((m4 - v * v).max(0.0) / n).sqrt())
                }
                ValidationFunctional::Expectation { function } => {
                    let (m, se) = ens.estimate(|x| function.value(x));
                    (m, function.integrate(field), se)
                }
            };
            let z = if se > 0.0 {
                (particle - pde).abs() / se
            } else if particle == pde {
                0.0
            } else {
                f64::INFINITY
            };
            rows.push(ValidationRow {
                functional: f.name(),
                t: ens.time,
                particle,
                pde,
                se,
                z,
                flagged: z > FLAG_Z,
            });
        }
    }
    let flagged = rows.iter().filter(|r| r.flagged).count();
    let max_z = rows.iter().map(|r| r.z).fold(0.0, f64::max);
    Ok(CrossValidation {
        rows,
        flagged,
        max_z,
    })
}
