//! Exponential-rate fits, Lyapunov inequality checks and the 1D `W₁` contraction test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cauchy::Trajectory;
use crate::drift::{generator_v, DriftModel};
use crate::error::{FpkError, Result};
use crate::measures::{w1_1d, DensityField, DiffusionSpec, WeightFunction, MAX_DIM};

/// `value ≈ α₁ e^{−α₂ t}` on the fit window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha1: f64,
    pub alpha2: f64,
    pub r2: f64,
    pub window: (f64, f64),
    /// `log value − fitted line` at each point used.
    pub residuals: Vec<f64>,
}

const FLOOR: f64 = 1e-14;

/// Least-squares line through `(t, log value)`; the window defaults to the last half.
pub fn decay_rate_fit(times: &[f64], values: &[f64], window: Option<(f64, f64)>) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(FpkError::InvalidParameter("times and values differ in length".into()));
    }
    let (t_end, t_start) = match (times.last(), times.first()) {
        (Some(&e), Some(&s)) => (e, s),
        _ => return Err(FpkError::WindowTooShort { points: 0 }),
    };
    let (lo, hi) = window.unwrap_or((t_start + 0.5 * (t_end - t_start), t_end));
    let mut pts = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < lo - 1e-12 || t > hi + 1e-12 {
            continue;
        }
        // Values at the noise floor end the usable window.
        if !(v > FLOOR) {
            break;
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < 5 {
        return Err(FpkError::WindowTooShort { points: pts.len() });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let residuals: Vec<f64> = pts.iter().map(|p| p.1 - (intercept + slope * p.0)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(DecayFit {
        alpha1: intercept.exp(),
        alpha2: -slope,
        r2,
        window: (pts[0].0, pts[pts.len() - 1].0),
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// `max (L_μV − C₁ + C₂V)`; nonpositive when the inequality holds.
    pub max_margin: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
}

/// Samples `L_μV ≤ C₁ − C₂V` on random points of each measure's grid box.
pub fn lyapunov_check(
    model: &DriftModel,
    weight: &WeightFunction,
    diffusion: &DiffusionSpec,
    c1: f64,
    c2: f64,
    measures: &[DensityField],
    samples: usize,
    seed: u64,
) -> LyapunovReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_margin = f64::NEG_INFINITY;
    let mut worst = Vec::new();
    let mut count = 0;
    for mu in measures {
        let g = mu.grid();
        let d = g.dim();
        let prepared = model.prepare(mu);
        for _ in 0..samples {
            let mut x = [0.0; MAX_DIM];
            for a in 0..d {
                x[a] = rng.random_range(g.lower[a]..g.upper[a]);
            }
            let b = prepared.eval(&x[..d]);
            let lv = generator_v(weight, diffusion, &x[..d], &b[..d]);
            let margin = lv - (c1 - c2 * weight.v(&x[..d]));
            if margin > max_margin {
                max_margin = margin;
                worst = x[..d].to_vec();
            }
            count += 1;
        }
    }
    LyapunovReport {
        max_margin,
        worst_point: worst,
        samples: count,
    }
}

/// Monotonicity constant `κ` of `−b₀` and `W₁`-Lipschitz constant `C` of the interaction.
pub fn contraction_constants(model: &DriftModel) -> Option<(f64, f64)> {
    match model {
        DriftModel::MeanFieldLinear { epsilon, .. } => Some((1.0, *epsilon)),
        DriftModel::GradientConfining {
            epsilon, quadratic, ..
        } => Some((*quadratic, *epsilon)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W1Report {
    pub times: Vec<f64>,
    pub w1: Vec<f64>,
    pub bound: Vec<f64>,
    /// `bound − W₁(μ_t, μ)`.
    pub margins: Vec<f64>,
    pub min_margin: f64,
}

/// `e^{−(κ−C)t} W₁(ν, μ) − W₁(μ_t, μ)` per snapshot (1D only).
pub fn w1_contraction_check(traj: &Trajectory, mu: &DensityField, kappa: f64, c_lip: f64) -> Result<W1Report> {
    if c_lip >= kappa {
        return Err(FpkError::HypothesisViolated {
            kappa,
            lipschitz: c_lip,
        });
    }
    let nu = traj.initial().ok_or(FpkError::EmptyTrajectory)?;
    if mu.dim() != 1 {
        return Err(FpkError::DimensionUnsupported {
            supported: 1,
            got: mu.dim(),
        });
    }
    let w0 = w1_1d(nu, mu)?;
    let mut report = W1Report {
        times: Vec::new(),
        w1: Vec::new(),
        bound: Vec::new(),
        margins: Vec::new(),
        min_margin: f64::INFINITY,
    };
    for (&t, snap) in traj.times.iter().zip(&traj.snapshots) {
        let w = w1_1d(snap, mu)?;
        let b = (-(kappa - c_lip) * t).exp() * w0;
        report.times.push(t);
        report.w1.push(w);
        report.bound.push(b);
        report.margins.push(b - w);
        report.min_margin = report.min_margin.min(b - w);
    }
    Ok(report)
}
