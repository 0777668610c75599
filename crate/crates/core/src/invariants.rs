//! Conserved (`I₀`) and exponentially growing (`I₊`) functionals via the
//! pairwise kernel identities, with drift convention `b(x, μ) = −∫K(x, y) μ(dy)`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cauchy::{Series, Trajectory};
use crate::drift::{DriftModel, Kernel};
use crate::error::{FpkError, Result};
use crate::functions::{Constraint, TestFunction};
use crate::measures::{DensityField, DiffusionSpec, WeightFunction, MAX_DIM};

pub const MEMBERSHIP_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum InvariantClass {
    I0,
    Iplus { lambda: f64 },
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    /// `(radius, sup (|ψ| + |∇ψ| + |D²ψ|) / W)` over probe directions.
    pub ratios: Vec<(f64, f64)>,
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub psi: String,
    pub class: InvariantClass,
    /// Max residual of the conservation identity.
    pub residual_i0: f64,
    /// Max residual of the growth identity for `lambda`.
    pub residual_iplus: Option<f64>,
    pub lambda: Option<f64>,
    pub growth: GrowthCheck,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MembershipOptions {
    pub samples: usize,
    pub seed: u64,
    /// Pairs are drawn from `[−radius, radius]^d`.
    pub radius: f64,
}

impl Default for MembershipOptions {
    fn default() -> Self {
        MembershipOptions {
            samples: 1000,
            seed: 11,
            radius: 5.0,
        }
    }
}

fn require_derivatives(psi: &TestFunction) -> Result<()> {
    if psi.has_derivatives() {
        Ok(())
    } else {
        Err(FpkError::NonSmoothPsi(psi.name()))
    }
}

/// `Δψ(x) − ⟨K(x, y), ∇ψ(x)⟩`.
fn half_identity(psi: &TestFunction, kernel: &Kernel, x: &[f64], y: &[f64]) -> f64 {
    let d = x.len();
    let k = kernel.eval(x, y);
    let g = psi.gradient(x).unwrap_or_default();
    psi.laplacian(x).unwrap_or(f64::NAN) - (0..d).map(|i| k[i] * g[i]).sum::<f64>()
}

fn growth_check(psi: &TestFunction, weight: &WeightFunction, dim: usize) -> GrowthCheck {
    let mut dirs: Vec<[f64; MAX_DIM]> = Vec::new();
    for a in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = [0.0; MAX_DIM];
            e[a] = s;
            dirs.push(e);
        }
    }
    if dim == 2 {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        dirs.extend([[c, c], [-c, -c], [c, -c]]);
    }
    let ratios: Vec<(f64, f64)> = [1.0, 10.0, 100.0, 1000.0]
        .iter()
        .map(|&r| {
            let sup = dirs
                .iter()
                .map(|e| {
                    let x: Vec<f64> = e[..dim].iter().map(|c| c * r).collect();
                    let g = psi.gradient(&x).unwrap_or_default();
                    let gn = g[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
                    let h = psi.hessian_norm(&x).unwrap_or(f64::INFINITY);
                    (psi.value(&x).abs() + gn + h) / weight.w(&x)
                })
                .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });
            (r, sup)
        })
        .collect();
    let last = ratios[3].1;
    let earlier = ratios[1].1.max(ratios[2].1);
    GrowthCheck {
        bounded: last.is_finite() && last <= 2.0 * earlier + 1e-12,
        ratios,
    }
}

/// Classifies `ψ` for the kernel `K` (drift `b = −∫K dμ`, `A = I`).
pub fn check_membership(
    psi: &TestFunction,
    kernel: &Kernel,
    diffusion: &DiffusionSpec,
    weight: &WeightFunction,
    lambda: Option<f64>,
    options: &MembershipOptions,
) -> Result<InvariantReport> {
    require_derivatives(psi)?;
    if !diffusion.is_identity() {
        return Err(FpkError::AnisotropicDiffusion);
    }
    let d = diffusion.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let r = options.radius;
    let draw = |rng: &mut ChaCha8Rng| {
        let mut p = [0.0; MAX_DIM];
        for slot in p.iter_mut().take(d) {
            *slot = rng.random_range(-r..r);
        }
        p
    };
    let mut pairs = Vec::with_capacity(options.samples);
    for i in 0..options.samples.max(1) {
        let x = draw(&mut rng);
        // Every fifth pair sits on the diagonal.
        let y = if i % 5 == 0 { x } else { draw(&mut rng) };
        pairs.push((x, y));
    }
    let pair_sum = |x: &[f64], y: &[f64]| {
        half_identity(psi, kernel, x, y) + half_identity(psi, kernel, y, x)
    };
    let residual_i0 = pairs
        .iter()
        .map(|(x, y)| pair_sum(&x[..d], &y[..d]).abs())
        .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });

    let lambda = lambda.or_else(|| {
        // Least squares on the diagonal identity Δψ − ⟨K(x,x), ∇ψ⟩ = λψ.
        let mut num = 0.0;
        let mut den = 0.0;
        for _ in 0..50 {
            let x = draw(&mut rng);
            let lhs = half_identity(psi, kernel, &x[..d], &x[..d]);
            let v = psi.value(&x[..d]);
            num += lhs * v;
            den += v * v;
        }
        (den > 0.0).then(|| num / den)
    });
    let residual_iplus = lambda.map(|l| {
        pairs
            .iter()
            .map(|(x, y)| {
                let s = psi.value(&x[..d]) + psi.value(&y[..d]);
                (pair_sum(&x[..d], &y[..d]) - l * s).abs()
            })
            .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) })
    });

    let class = if residual_i0 <= MEMBERSHIP_THRESHOLD {
        InvariantClass::I0
    } else {
        match (lambda, residual_iplus) {
            (Some(l), Some(res)) if l > 0.0 && res <= MEMBERSHIP_THRESHOLD => {
                InvariantClass::Iplus { lambda: l }
            }
            _ => InvariantClass::Neither,
        }
    };
    Ok(InvariantReport {
        psi: psi.name(),
        class,
        residual_i0,
        residual_iplus,
        lambda,
        growth: growth_check(psi, weight, d),
        samples: pairs.len(),
    })
}

type Coefficients = Arc<dyn Fn(&DensityField) -> (f64, f64) + Send + Sync>;

/// `h` with `L_σψ = C₁(σ) h + C₂(σ)` for its generating `ψ ∈ I₀`.
#[derive(Clone)]
pub struct BasisEntry {
    pub psi: TestFunction,
    pub h: TestFunction,
    coefficients: Coefficients,
}

impl std::fmt::Debug for BasisEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BasisEntry")
            .field("psi", &self.psi)
            .field("h", &self.h)
            .finish()
    }
}

impl BasisEntry {
    /// `(C₁(σ), C₂(σ))`.
    pub fn coefficients(&self, sigma: &DensityField) -> (f64, f64) {
        (self.coefficients)(sigma)
    }
}

#[derive(Debug, Clone, Default)]
pub struct FunctionalSpace {
    pub entries: Vec<BasisEntry>,
}

impl FunctionalSpace {
    /// Catalogued affine decompositions; empty when the model has none.
    pub fn for_model(model: &DriftModel, dim: usize) -> Self {
        let mut entries = Vec::new();
        match model {
            DriftModel::MeanFieldLinear { epsilon, shift } if *epsilon == 1.0 && *shift == 0.0 => {
                for axis in 0..dim {
                    let mut coeffs = vec![0.0; dim];
                    coeffs[axis] = 1.0;
                    let f = TestFunction::linear(coeffs);
                    entries.push(BasisEntry {
                        psi: f.clone(),
                        h: f,
                        coefficients: Arc::new(move |s: &DensityField| (-1.0, s.mean()[axis])),
                    });
                }
            }
            DriftModel::Rvh(m) => {
                let f = TestFunction::linear(m.v.clone());
                let lambda = m.lambda_r;
                let v = m.v.clone();
                entries.push(BasisEntry {
                    psi: f.clone(),
                    h: f,
                    coefficients: Arc::new(move |s: &DensityField| {
                        let mean = s.mean();
                        let vm: f64 = v.iter().zip(&mean).map(|(a, b)| a * b).sum();
                        (-lambda, lambda * vm)
                    }),
                });
            }
            _ => {}
        }
        FunctionalSpace { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Constraints `σ(h_k) = targets[k]`.
    pub fn constraints(&self, targets: &[f64]) -> Vec<Constraint> {
        self.entries
            .iter()
            .zip(targets)
            .map(|(e, &q)| Constraint::new(e.h.clone(), q))
            .collect()
    }

    /// Max of `|L_σψ − C₁h − C₂|` over `samples` random points per measure.
    pub fn verify(
        &self,
        model: &DriftModel,
        diffusion: &DiffusionSpec,
        measures: &[DensityField],
        samples: usize,
        seed: u64,
    ) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for sigma in measures {
            let g = sigma.grid();
            let d = g.dim();
            let prepared = model.prepare(sigma);
            for e in &self.entries {
                require_derivatives(&e.psi)?;
                let (c1, c2) = e.coefficients(sigma);
                for _ in 0..samples {
                    let mut x = [0.0; MAX_DIM];
                    for a in 0..d {
                        x[a] = rng.random_range(g.lower[a]..g.upper[a]);
                    }
                    let b = prepared.eval(&x[..d]);
                    let l = e.psi.generator(&x[..d], &b[..d], diffusion).unwrap_or(f64::NAN);
                    worst = worst.max((l - c1 * e.h.value(&x[..d]) - c2).abs());
                }
            }
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum FittedLaw {
    Constant { value: f64 },
    Exponential { initial: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTrack {
    pub series: Series,
    pub law: FittedLaw,
    /// `max_t |μ_t(ψ) − law(t)| / max_t |law(t)|`.
    pub relative_deviation: f64,
}

/// `μ_t(ψ)` along a trajectory and the better fit among constant and `ν(ψ)e^{λt}`.
pub fn track_functional(traj: &Trajectory, psi: &TestFunction) -> Result<FunctionalTrack> {
    if traj.snapshots.is_empty() {
        return Err(FpkError::EmptyTrajectory);
    }
    let series = traj.functional(psi);
    let v0 = series.values[0];
    let deviation = |law: &dyn Fn(f64) -> f64| {
        let scale = series
            .times
            .iter()
            .map(|&t| law(t).abs())
            .fold(0.0, f64::max);
        let err = series
            .times
            .iter()
            .zip(&series.values)
            .map(|(&t, v)| (v - law(t)).abs())
            .fold(0.0, f64::max);
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    };
    let constant_dev = deviation(&|_| v0);
    let mut best = (FittedLaw::Constant { value: v0 }, constant_dev);
    let ratios_positive = v0 != 0.0 && series.values.iter().all(|v| v / v0 > 0.0);
    if ratios_positive && series.len() > 1 {
        // Least squares through the origin on log(μ_t(ψ)/ν(ψ)) = λt.
        let (num, den) = series
            .times
            .iter()
            .zip(&series.values)
            .fold((0.0, 0.0), |(n, d), (&t, v)| (n + t * (v / v0).ln(), d + t * t));
        if den > 0.0 {
            let rate = num / den;
            let dev = deviation(&|t| v0 * (rate * t).exp());
            if dev < constant_dev - 1e-12 {
                best = (FittedLaw::Exponential { initial: v0, rate }, dev);
            }
        }
    }
    Ok(FunctionalTrack {
        series,
        law: best.0,
        relative_deviation: best.1,
    })
}

/// First basis function separating `ν` from `μ`: an `I₀` function with
/// `|ν(ψ) − μ(ψ)| > tol` or an `I₊` function with `|ν(ψ)| > tol`.
pub fn nonconvergence_witness(
    nu: &DensityField,
    mu: &DensityField,
    basis: &[(TestFunction, InvariantClass)],
    tol: f64,
) -> Option<TestFunction> {
    basis.iter().find_map(|(psi, class)| {
        let hit = match class {
            InvariantClass::I0 => (psi.integrate(nu) - psi.integrate(mu)).abs() > tol,
            InvariantClass::Iplus { .. } => psi.integrate(nu).abs() > tol,
            InvariantClass::Neither => false,
        };
        hit.then(|| psi.clone())
    })
}
