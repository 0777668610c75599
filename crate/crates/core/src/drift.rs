//! Measure-dependent drifts `b_ε(x, μ)` and sampled checks of (H1)–(H3).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FpkError, Result};
use crate::functions::{project_constraints, Constraint};
use crate::measures::{
    make_mixture, weighted_tv, DensityField, DiffusionSpec, GridSpec, Point, WeightFunction,
    MAX_DIM,
};

/// Anything that can be integrated against: grid densities and particle ensembles.
pub trait Measure: Sync {
    fn dim(&self) -> usize;
    /// Visits every atom `(point, weight)`; weights need not be normalized.
    fn for_each_atom(&self, f: &mut dyn FnMut(&[f64], f64));
}

impl Measure for DensityField {
    fn dim(&self) -> usize {
        self.grid().dim()
    }

    fn for_each_atom(&self, f: &mut dyn FnMut(&[f64], f64)) {
        let g = self.grid();
        let d = g.dim();
        let vol = g.cell_volume();
        for (k, v) in self.values().iter().enumerate() {
            f(&g.point(k)[..d], v * vol);
        }
    }
}

/// Normalized `∫ φ dμ` for each component of a vector-valued `φ`.
fn moments<M: Measure + ?Sized, const K: usize>(mu: &M, phi: impl Fn(&[f64]) -> [f64; K]) -> [f64; K] {
    let mut acc = [0.0; K];
    let mut total = 0.0;
    mu.for_each_atom(&mut |x, w| {
        let v = phi(x);
        for k in 0..K {
            acc[k] += w * v[k];
        }
        total += w;
    });
    if total > 0.0 {
        acc.iter_mut().for_each(|a| *a /= total);
    }
    acc
}

fn mean_of<M: Measure + ?Sized>(mu: &M) -> Point {
    let d = mu.dim();
    moments(mu, |x| {
        let mut p = [0.0; MAX_DIM];
        p[..d].copy_from_slice(x);
        p
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Point {
    let mut out = [0.0; MAX_DIM];
    for (slot, row) in out.iter_mut().zip(m) {
        *slot = dot(row, x);
    }
    out
}

/// Interaction kernel `K(x, y)` from a fixed closed-form catalogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Kernel {
    /// `X x + Y y + c` with row-major matrices.
    Affine {
        x_coeff: Vec<Vec<f64>>,
        y_coeff: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Vec<f64>,
    },
    /// `scale · tanh(x − y)` componentwise.
    TanhDifference { scale: f64 },
    /// `amplitude · sin(⟨p, x⟩ − ⟨r, y⟩ + phase) · direction`.
    Trig {
        amplitude: f64,
        p: Vec<f64>,
        r: Vec<f64>,
        #[serde(default)]
        phase: f64,
        direction: Vec<f64>,
    },
    /// `scale · (y − x)³` componentwise.
    CubicAttraction { scale: f64 },
    Sum { terms: Vec<Kernel> },
}

impl Kernel {
    /// `K(x, y) = a·x + b·y` in one dimension.
    pub fn affine_1d(a: f64, b: f64) -> Self {
        Kernel::Affine {
            x_coeff: vec![vec![a]],
            y_coeff: vec![vec![b]],
            offset: vec![0.0],
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Point {
        let d = x.len();
        let mut out = [0.0; MAX_DIM];
        match self {
            Kernel::Affine {
                x_coeff,
                y_coeff,
                offset,
            } => {
                let a = mat_vec(x_coeff, x);
                let b = mat_vec(y_coeff, y);
                for i in 0..d {
                    out[i] = a[i] + b[i] + offset.get(i).copied().unwrap_or(0.0);
                }
            }
            Kernel::TanhDifference { scale } => {
                for i in 0..d {
                    out[i] = scale * (x[i] - y[i]).tanh();
                }
            }
            Kernel::Trig {
                amplitude,
                p,
                r,
                phase,
                direction,
            } => {
                let s = amplitude * (dot(p, x) - dot(r, y) + phase).sin();
                for i in 0..d {
                    out[i] = s * direction[i];
                }
            }
            Kernel::CubicAttraction { scale } => {
                for i in 0..d {
                    out[i] = scale * (y[i] - x[i]).powi(3);
                }
            }
            Kernel::Sum { terms } => {
                for t in terms {
                    let v = t.eval(x, y);
                    for i in 0..d {
                        out[i] += v[i];
                    }
                }
            }
        }
        out
    }

    /// `sup_{x,y} |K(x, y)|` when the kernel is bounded.
    pub fn sup_norm(&self, dim: usize) -> Option<f64> {
        match self {
            Kernel::Affine {
                x_coeff,
                y_coeff,
                offset,
            } => {
                let zero = |m: &Vec<Vec<f64>>| m.iter().flatten().all(|v| *v == 0.0);
                (zero(x_coeff) && zero(y_coeff)).then(|| dot(offset, offset).sqrt())
            }
            Kernel::TanhDifference { scale } => Some(scale.abs() * (dim as f64).sqrt()),
            Kernel::Trig {
                amplitude,
                direction,
                ..
            } => Some(amplitude.abs() * dot(direction, direction).sqrt()),
            Kernel::CubicAttraction { scale } => (*scale == 0.0).then_some(0.0),
            Kernel::Sum { terms } => terms.iter().map(|t| t.sup_norm(dim)).sum(),
        }
    }

    pub fn negated(&self) -> Kernel {
        match self {
            Kernel::Affine {
                x_coeff,
                y_coeff,
                offset,
            } => {
                let neg = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                    m.iter().map(|r| r.iter().map(|v| -v).collect()).collect()
                };
                Kernel::Affine {
                    x_coeff: neg(x_coeff),
                    y_coeff: neg(y_coeff),
                    offset: offset.iter().map(|v| -v).collect(),
                }
            }
            Kernel::TanhDifference { scale } => Kernel::TanhDifference { scale: -scale },
            Kernel::Trig {
                amplitude,
                p,
                r,
                phase,
                direction,
            } => Kernel::Trig {
                amplitude: -amplitude,
                p: p.clone(),
                r: r.clone(),
                phase: *phase,
                direction: direction.clone(),
            },
            Kernel::CubicAttraction { scale } => Kernel::CubicAttraction { scale: -scale },
            Kernel::Sum { terms } => Kernel::Sum {
                terms: terms.iter().map(Kernel::negated).collect(),
            },
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let bad = |what: &str| Err(FpkError::InvalidParameter(format!("kernel {what}")));
        match self {
            Kernel::Affine {
                x_coeff,
                y_coeff,
                offset,
            } => {
                let square = |m: &Vec<Vec<f64>>| m.len() == dim && m.iter().all(|r| r.len() == dim);
                if !square(x_coeff) || !square(y_coeff) || offset.len() > dim {
                    return bad("matrices must be dim x dim");
                }
            }
            Kernel::Trig {
                p, r, direction, ..
            } => {
                if p.len() != dim || r.len() != dim || direction.len() != dim {
                    return bad("vectors must have length dim");
                }
            }
            Kernel::Sum { terms } => {
                for t in terms {
                    t.validate(dim)?;
                }
            }
            Kernel::TanhDifference { .. } | Kernel::CubicAttraction { .. } => {}
        }
        Ok(())
    }

    fn prepare<M: Measure + ?Sized>(&self, mu: &M) -> PreparedKernel<'_> {
        match self {
            Kernel::Affine {
                x_coeff,
                y_coeff,
                offset,
            } => {
                let m = mean_of(mu);
                let d = mu.dim();
                let ym = mat_vec(y_coeff, &m[..d]);
                let mut constant = [0.0; MAX_DIM];
                for i in 0..d {
                    constant[i] = ym[i] + offset.get(i).copied().unwrap_or(0.0);
                }
                PreparedKernel::Affine {
                    x_coeff,
                    constant,
                }
            }
            Kernel::TanhDifference { .. } => {
                let mut atoms = Vec::new();
                let mut total = 0.0;
                mu.for_each_atom(&mut |y, w| {
                    total += w;
                    if w != 0.0 {
                        let mut p = [0.0; MAX_DIM];
                        p[..y.len()].copy_from_slice(y);
                        atoms.push((p, w));
                    }
                });
                if total > 0.0 {
                    atoms.iter_mut().for_each(|a| a.1 /= total);
                }
                PreparedKernel::Atoms { kernel: self, atoms }
            }
            Kernel::Trig {
                amplitude,
                p,
                r,
                phase,
                direction,
            } => {
                let [c, s] = moments(mu, |y| {
                    let a = dot(r, y);
                    [a.cos(), a.sin()]
                });
                PreparedKernel::Trig {
                    amplitude: *amplitude,
                    p,
                    phase: *phase,
                    direction,
                    cos_moment: c,
                    sin_moment: s,
                }
            }
            Kernel::CubicAttraction { scale } => {
                let d = mu.dim();
                let raw: [f64; 3 * MAX_DIM] = moments(mu, |y| {
                    let mut out = [0.0; 3 * MAX_DIM];
                    for i in 0..d {
                        out[3 * i] = y[i];
                        out[3 * i + 1] = y[i] * y[i];
                        out[3 * i + 2] = y[i] * y[i] * y[i];
                    }
                    out
                });
                let mut m = [[0.0; 3]; MAX_DIM];
                for i in 0..d {
                    m[i] = [raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]];
                }
                PreparedKernel::Cubic {
                    scale: *scale,
                    moments: m,
                }
            }
            Kernel::Sum { terms } => {
                PreparedKernel::Sum(terms.iter().map(|t| t.prepare(mu)).collect())
            }
        }
    }
}

/// Kernel with the measure-dependent integrals precomputed.
enum PreparedKernel<'a> {
    Affine {
        x_coeff: &'a [Vec<f64>],
        constant: Point,
    },
    Atoms {
        kernel: &'a Kernel,
        atoms: Vec<(Point, f64)>,
    },
    Trig {
        amplitude: f64,
        p: &'a [f64],
        phase: f64,
        direction: &'a [f64],
        cos_moment: f64,
        sin_moment: f64,
    },
    Cubic {
        scale: f64,
        moments: [[f64; 3]; MAX_DIM],
    },
    Sum(Vec<PreparedKernel<'a>>),
}

impl PreparedKernel<'_> {
    /// `∫ K(x, y) μ(dy)`.
    fn eval(&self, x: &[f64]) -> Point {
        let d = x.len();
        let mut out = [0.0; MAX_DIM];
        match self {
            PreparedKernel::Affine { x_coeff, constant } => {
                let a = mat_vec(x_coeff, x);
                for i in 0..d {
                    out[i] = a[i] + constant[i];
                }
            }
            PreparedKernel::Atoms { kernel, atoms } => {
                for (y, w) in atoms {
                    let k = kernel.eval(x, &y[..d]);
                    for i in 0..d {
                        out[i] += w * k[i];
                    }
                }
            }
            PreparedKernel::Trig {
                amplitude,
                p,
                phase,
                direction,
                cos_moment,
                sin_moment,
            } => {
                // sin(a − c) = sin a cos c − cos a sin c
                let a = dot(p, x) + phase;
                let s = amplitude * (a.sin() * cos_moment - a.cos() * sin_moment);
                for i in 0..d {
                    out[i] = s * direction[i];
                }
            }
            PreparedKernel::Cubic { scale, moments } => {
                // E(y − x)³ = m3 − 3x m2 + 3x² m1 − x³
                for i in 0..d {
                    let [m1, m2, m3] = moments[i];
                    let xi = x[i];
                    out[i] = scale * (m3 - 3.0 * xi * m2 + 3.0 * xi * xi * m1 - xi * xi * xi);
                }
            }
            PreparedKernel::Sum(terms) => {
                for t in terms {
                    let v = t.eval(x);
                    for i in 0..d {
                        out[i] += v[i];
                    }
                }
            }
        }
        out
    }
}

/// Measure-independent part `b₀` of a convolution drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseDrift {
    Zero,
    /// `−R x + c`.
    Linear {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Vec<f64>,
    },
    /// `−∇U` with `U = κ|x|²/2 + c|x|⁴/4`.
    Gradient {
        quadratic: f64,
        #[serde(default)]
        quartic: f64,
    },
}

impl BaseDrift {
    pub fn eval(&self, x: &[f64]) -> Point {
        let d = x.len();
        let mut out = [0.0; MAX_DIM];
        match self {
            BaseDrift::Zero => {}
            BaseDrift::Linear { matrix, offset } => {
                let rx = mat_vec(matrix, x);
                for i in 0..d {
                    out[i] = -rx[i] + offset.get(i).copied().unwrap_or(0.0);
                }
            }
            BaseDrift::Gradient { quadratic, quartic } => {
                let r2 = dot(x, x);
                for i in 0..d {
                    out[i] = -(quadratic + quartic * r2) * x[i];
                }
            }
        }
        out
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            BaseDrift::Linear { matrix, offset } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) || offset.len() > dim {
                    return Err(FpkError::InvalidParameter(
                        "base drift matrix must be dim x dim".into(),
                    ));
                }
            }
            BaseDrift::Gradient { quartic, .. } if *quartic < 0.0 => {
                return Err(FpkError::InvalidParameter("quartic coefficient must be >= 0".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Two-dimensional linear-plus-bounded model
/// `b(x, μ) = −R x + ⟨v, ∫y dμ⟩ h + ε ∫H(x, y) μ(dy)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RvhModel {
    pub epsilon: f64,
    pub r: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub h: Vec<f64>,
    pub lambda_r: f64,
    /// Bounded field `H` with `⟨H(x, y), v⟩ = 0`.
    pub field: Kernel,
    /// Lower bound `⟨R x, x⟩ ≥ q|x|²`.
    pub q: f64,
}

impl RvhModel {
    pub fn new(
        epsilon: f64,
        r: Vec<Vec<f64>>,
        v: Vec<f64>,
        h: Vec<f64>,
        lambda_r: f64,
        field: Kernel,
        q: f64,
    ) -> Result<Self> {
        let model = RvhModel {
            epsilon,
            r,
            v,
            h,
            lambda_r,
            field,
            q,
        };
        model.validate()?;
        Ok(model)
    }

    /// `R = 2I`, `v = h = (1, 1)`, `H = amplitude · sin(x₁ − y₂) · (1, −1)`.
    pub fn standard(epsilon: f64, amplitude: f64) -> Self {
        RvhModel {
            epsilon,
            r: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
            v: vec![1.0, 1.0],
            h: vec![1.0, 1.0],
            lambda_r: 2.0,
            field: Kernel::Trig {
                amplitude,
                p: vec![1.0, 0.0],
                r: vec![0.0, 1.0],
                phase: 0.0,
                direction: vec![1.0, -1.0],
            },
            q: 2.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let bad = |msg: String| Err(FpkError::InvalidParameter(msg));
        if d == 0 || d > MAX_DIM || self.h.len() != d {
            return bad("v and h must share the model dimension".into());
        }
        if self.r.len() != d || self.r.iter().any(|row| row.len() != d) {
            return bad("R must be d x d".into());
        }
        check_epsilon(self.epsilon)?;
        self.field.validate(d)?;
        if self.field.sup_norm(d).is_none() {
            return bad("field H must be bounded".into());
        }
        let scale = 1.0 + self.lambda_r.abs();
        // v is a left eigenvector: Rᵀv = λ v, so ⟨v, R x⟩ = λ⟨v, x⟩.
        for j in 0..d {
            let rtv: f64 = (0..d).map(|i| self.r[i][j] * self.v[i]).sum();
            if (rtv - self.lambda_r * self.v[j]).abs() > 1e-10 * scale {
                return bad(format!("v is not an eigenvector of R for eigenvalue {}", self.lambda_r));
            }
        }
        if (dot(&self.v, &self.h) - self.lambda_r).abs() > 1e-10 * scale {
            return bad("<v, h> must equal the eigenvalue".into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..100 {
            let mut x = [0.0; MAX_DIM];
            let mut y = [0.0; MAX_DIM];
            for i in 0..d {
                x[i] = rng.random_range(-10.0..10.0);
                y[i] = rng.random_range(-10.0..10.0);
            }
            let hv = dot(&self.field.eval(&x[..d], &y[..d])[..d], &self.v);
            if hv.abs() > 1e-10 {
                return bad(format!("<H(x, y), v> = {hv:e} is not zero"));
            }
            let rx = mat_vec(&self.r, &x[..d]);
            if dot(&rx[..d], &x[..d]) < self.q * dot(&x[..d], &x[..d]) - 1e-10 {
                return bad(format!("<Rx, x> >= q|x|^2 fails for q = {}", self.q));
            }
        }
        Ok(())
    }

    /// Pointwise kernel `−R x + ⟨v, y⟩ h + ε H(x, y)` whose integral is the drift.
    pub fn interaction_kernel(&self) -> Kernel {
        let d = self.dim();
        let neg_r = self.r.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
        let hv = (0..d).map(|i| (0..d).map(|j| self.h[i] * self.v[j]).collect()).collect();
        let field = scale_kernel(&self.field, self.epsilon);
        Kernel::Sum {
            terms: vec![
                Kernel::Affine {
                    x_coeff: neg_r,
                    y_coeff: hv,
                    offset: vec![0.0; d],
                },
                field,
            ],
        }
    }

    /// Operator norm of `R`.
    pub fn r_norm(&self) -> f64 {
        let d = self.dim();
        if d == 1 {
            return self.r[0][0].abs();
        }
        // Largest singular value from the eigenvalues of RᵀR.
        let (a, b, c, e) = (self.r[0][0], self.r[0][1], self.r[1][0], self.r[1][1]);
        let m11 = a * a + c * c;
        let m12 = a * b + c * e;
        let m22 = b * b + e * e;
        let tr = m11 + m22;
        let det = m11 * m22 - m12 * m12;
        ((tr + (tr * tr - 4.0 * det).max(0.0).sqrt()) / 2.0).sqrt()
    }

    pub fn field_sup(&self) -> f64 {
        self.field.sup_norm(self.dim()).unwrap_or(f64::INFINITY)
    }
}

fn scale_kernel(k: &Kernel, s: f64) -> Kernel {
    match k {
        Kernel::Trig {
            amplitude,
            p,
            r,
            phase,
            direction,
        } => Kernel::Trig {
            amplitude: amplitude * s,
            p: p.clone(),
            r: r.clone(),
            phase: *phase,
            direction: direction.clone(),
        },
        Kernel::TanhDifference { scale } => Kernel::TanhDifference { scale: scale * s },
        Kernel::CubicAttraction { scale } => Kernel::CubicAttraction { scale: scale * s },
        Kernel::Affine {
            x_coeff,
            y_coeff,
            offset,
        } => {
            let m = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                m.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
            };
            Kernel::Affine {
                x_coeff: m(x_coeff),
                y_coeff: m(y_coeff),
                offset: offset.iter().map(|v| v * s).collect(),
            }
        }
        Kernel::Sum { terms } => Kernel::Sum {
            terms: terms.iter().map(|t| scale_kernel(t, s)).collect(),
        },
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon >= 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(FpkError::InvalidParameter(format!(
            "coupling epsilon must be finite and >= 0, got {epsilon}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftModel {
    /// `b = −x + shift + ε ∫y dμ`.
    MeanFieldLinear {
        epsilon: f64,
        #[serde(default)]
        shift: f64,
    },
    /// `b = b₀(x) + ε ∫K(x, y) μ(dy)`.
    ConvolutionKernel {
        epsilon: f64,
        base: BaseDrift,
        kernel: Kernel,
    },
    Rvh(RvhModel),
    /// `b = −∇U(x) + ε ∫y dμ` with `U = κ|x|²/2 + c|x|⁴/4`.
    GradientConfining {
        epsilon: f64,
        quadratic: f64,
        #[serde(default)]
        quartic: f64,
    },
}

impl DriftModel {
    pub fn mean_field(epsilon: f64) -> Self {
        DriftModel::MeanFieldLinear {
            epsilon,
            shift: 0.0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            DriftModel::MeanFieldLinear { epsilon, .. }
            | DriftModel::ConvolutionKernel { epsilon, .. }
            | DriftModel::GradientConfining { epsilon, .. } => *epsilon,
            DriftModel::Rvh(m) => m.epsilon,
        }
    }

    pub fn with_epsilon(&self, value: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            DriftModel::MeanFieldLinear { epsilon, .. }
            | DriftModel::ConvolutionKernel { epsilon, .. }
            | DriftModel::GradientConfining { epsilon, .. } => *epsilon = value,
            DriftModel::Rvh(m) => m.epsilon = value,
        }
        out
    }

    /// Dimension fixed by the parameters, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            DriftModel::Rvh(m) => Some(m.dim()),
            DriftModel::ConvolutionKernel { base, kernel, .. } => {
                let from_base = match base {
                    BaseDrift::Linear { matrix, .. } => Some(matrix.len()),
                    _ => None,
                };
                from_base.or_else(|| kernel_dim(kernel))
            }
            _ => None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        check_epsilon(self.epsilon())?;
        if let Some(d) = self.fixed_dim() {
            if d != dim {
                return Err(FpkError::InvalidParameter(format!(
                    "model is {d}-dimensional but the grid is {dim}-dimensional"
                )));
            }
        }
        match self {
            DriftModel::MeanFieldLinear { shift, .. } if !shift.is_finite() => {
                Err(FpkError::InvalidParameter("shift must be finite".into()))
            }
            DriftModel::ConvolutionKernel { base, kernel, .. } => {
                base.validate(dim)?;
                kernel.validate(dim)
            }
            DriftModel::Rvh(m) => m.validate(),
            DriftModel::GradientConfining {
                quadratic, quartic, ..
            } if *quartic < 0.0 || (*quadratic <= 0.0 && *quartic == 0.0) => {
                Err(FpkError::InvalidParameter("potential must be confining".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether the drift is independent of the measure.
    pub fn is_decoupled(&self) -> bool {
        match self {
            DriftModel::Rvh(_) => false,
            DriftModel::ConvolutionKernel { kernel, epsilon, .. } => {
                *epsilon == 0.0 || kernel_is_constant_in_y(kernel)
            }
            other => other.epsilon() == 0.0,
        }
    }

    /// Kernel `K` with `b(x, μ) = −∫K(x, y) μ(dy)`, when the base drift is affine.
    pub fn membership_kernel(&self, dim: usize) -> Option<Kernel> {
        let eye = |s: f64| -> Vec<Vec<f64>> {
            (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { s } else { 0.0 }).collect())
                .collect()
        };
        let linear = |matrix: Vec<Vec<f64>>, offset: Vec<f64>, rest: Kernel| Kernel::Sum {
            terms: vec![
                Kernel::Affine {
                    x_coeff: matrix,
                    y_coeff: eye(0.0),
                    offset,
                },
                rest,
            ],
        };
        match self {
            DriftModel::MeanFieldLinear { epsilon, shift } => Some(Kernel::Affine {
                x_coeff: eye(1.0),
                y_coeff: eye(-epsilon),
                offset: vec![-shift; dim],
            }),
            DriftModel::GradientConfining {
                epsilon,
                quadratic,
                quartic,
            } => (*quartic == 0.0).then(|| Kernel::Affine {
                x_coeff: eye(*quadratic),
                y_coeff: eye(-epsilon),
                offset: vec![0.0; dim],
            }),
            DriftModel::ConvolutionKernel { epsilon, base, kernel } => {
                let rest = scale_kernel(kernel, -epsilon);
                match base {
                    BaseDrift::Zero => Some(rest),
                    BaseDrift::Linear { matrix, offset } => {
                        let c = (0..dim).map(|i| -offset.get(i).copied().unwrap_or(0.0)).collect();
                        Some(linear(matrix.clone(), c, rest))
                    }
                    BaseDrift::Gradient { quadratic, quartic } => {
                        (*quartic == 0.0).then(|| linear(eye(*quadratic), vec![0.0; dim], rest))
                    }
                }
            }
            DriftModel::Rvh(m) => Some(m.interaction_kernel().negated()),
        }
    }

    /// Precomputes the integrals against `μ`.
    pub fn prepare<'a, M: Measure + ?Sized>(&'a self, mu: &M) -> PreparedDrift<'a> {
        let eps = self.epsilon();
        let stats = match self {
            DriftModel::MeanFieldLinear { .. } | DriftModel::GradientConfining { .. } => {
                if eps == 0.0 {
                    Stats::None
                } else {
                    Stats::Mean(mean_of(mu))
                }
            }
            DriftModel::ConvolutionKernel { kernel, .. } => {
                if eps == 0.0 {
                    Stats::None
                } else {
                    Stats::Kernel(kernel.prepare(mu))
                }
            }
            DriftModel::Rvh(m) => Stats::Rvh {
                mean: mean_of(mu),
                field: (eps != 0.0).then(|| m.field.prepare(mu)),
            },
        };
        PreparedDrift { model: self, stats }
    }

    /// `b(x, μ)`.
    pub fn eval<M: Measure + ?Sized>(&self, x: &[f64], mu: &M) -> Point {
        self.prepare(mu).eval(x)
    }
}

fn kernel_dim(k: &Kernel) -> Option<usize> {
    match k {
        Kernel::Affine { x_coeff, .. } => Some(x_coeff.len()),
        Kernel::Trig { p, .. } => Some(p.len()),
        Kernel::Sum { terms } => terms.iter().find_map(kernel_dim),
        _ => None,
    }
}

fn kernel_is_constant_in_y(k: &Kernel) -> bool {
    match k {
        Kernel::Affine { y_coeff, .. } => y_coeff.iter().flatten().all(|v| *v == 0.0),
        Kernel::Trig { amplitude, r, .. } => *amplitude == 0.0 || r.iter().all(|v| *v == 0.0),
        Kernel::TanhDifference { scale } | Kernel::CubicAttraction { scale } => *scale == 0.0,
        Kernel::Sum { terms } => terms.iter().all(kernel_is_constant_in_y),
    }
}

enum Stats<'a> {
    None,
    Mean(Point),
    Kernel(PreparedKernel<'a>),
    Rvh {
        mean: Point,
        field: Option<PreparedKernel<'a>>,
    },
}

/// A drift model frozen against one measure.
pub struct PreparedDrift<'a> {
    model: &'a DriftModel,
    stats: Stats<'a>,
}

impl PreparedDrift<'_> {
    pub fn eval(&self, x: &[f64]) -> Point {
        let d = x.len();
        let mut out = [0.0; MAX_DIM];
        match (self.model, &self.stats) {
            (DriftModel::MeanFieldLinear { epsilon, shift }, stats) => {
                for i in 0..d {
                    out[i] = -x[i] + shift;
                    if let Stats::Mean(m) = stats {
                        out[i] += epsilon * m[i];
                    }
                }
            }
            (
                DriftModel::GradientConfining {
                    epsilon,
                    quadratic,
                    quartic,
                },
                stats,
            ) => {
                let r2 = dot(x, x);
                for i in 0..d {
                    out[i] = -(quadratic + quartic * r2) * x[i];
                    if let Stats::Mean(m) = stats {
                        out[i] += epsilon * m[i];
                    }
                }
            }
            (DriftModel::ConvolutionKernel { epsilon, base, .. }, stats) => {
                out = base.eval(x);
                if let Stats::Kernel(k) = stats {
                    let v = k.eval(x);
                    for i in 0..d {
                        out[i] += epsilon * v[i];
                    }
                }
            }
            (DriftModel::Rvh(m), Stats::Rvh { mean, field }) => {
                let rx = mat_vec(&m.r, x);
                let vm = dot(&m.v, &mean[..d]);
                for i in 0..d {
                    out[i] = -rx[i] + vm * m.h[i];
                }
                if let Some(f) = field {
                    let hv = f.eval(x);
                    for i in 0..d {
                        out[i] += m.epsilon * hv[i];
                    }
                }
            }
            (DriftModel::Rvh(_), _) => unreachable!("Rvh drift prepared without statistics"),
        }
        out
    }
}

pub fn eval_drift<M: Measure + ?Sized>(model: &DriftModel, x: &[f64], mu: &M) -> Point {
    model.eval(x, mu)
}

/// Drift tabulated at cell centers, one vector per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    pub grid: GridSpec,
    pub components: Vec<Vec<f64>>,
}

impl DriftField {
    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> Point + Sync) -> Self {
        let d = grid.dim();
        let values: Vec<Point> = (0..grid.len())
            .into_par_iter()
            .map(|k| f(&grid.point(k)[..d]))
            .collect();
        let components = (0..d).map(|a| values.iter().map(|v| v[a]).collect()).collect();
        DriftField {
            grid: grid.clone(),
            components,
        }
    }

    pub fn at(&self, cell: usize) -> Point {
        let mut out = [0.0; MAX_DIM];
        for (a, c) in self.components.iter().enumerate() {
            out[a] = c[cell];
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// First boundary side where the drift points outward, if any.
    pub fn outward_boundary(&self) -> Option<(usize, &'static str)> {
        let g = &self.grid;
        for k in 0..g.len() {
            let idx = g.unflat(k);
            for a in 0..g.dim() {
                let b = self.components[a][k];
                if idx[a] == 0 && b < 0.0 {
                    return Some((a, "lower"));
                }
                if idx[a] + 1 == g.cells[a] && b > 0.0 {
                    return Some((a, "upper"));
                }
            }
        }
        None
    }
}

/// `b(·, μ)` at every cell center of `μ`'s grid; integrals computed once.
pub fn drift_field(model: &DriftModel, mu: &DensityField) -> DriftField {
    let prepared = model.prepare(mu);
    DriftField::from_fn(mu.grid(), |x| prepared.eval(x))
}

/// Candidate constants for (H1)–(H3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HConstants {
    pub c: f64,
    pub lambda: f64,
    pub delta: f64,
    pub n1: f64,
    pub n2: f64,
    /// Exponent `e` in the growth bounds `N V^e`; `None` means `1/2 − γ`.
    #[serde(default)]
    pub growth_exponent: Option<f64>,
}

impl HConstants {
    /// Mean-field linear drift `−x + ε∫y dμ` on measures with mean `q`.
    pub fn mean_field(q: f64) -> Self {
        HConstants {
            c: 3.0 + q * q,
            lambda: 1.0,
            delta: 0.0,
            n1: 1.0 + q.abs(),
            n2: 0.0,
            growth_exponent: Some(0.5),
        }
    }

    /// Closed forms for the linear-plus-bounded model on `⟨v, ∫y dμ⟩ = q`.
    pub fn rvh(model: &RvhModel, q: f64) -> Self {
        let d = model.dim() as f64;
        let s = dot(&model.h, &model.h).sqrt() * q.abs() + model.field_sup();
        HConstants {
            c: 2.0 * d + model.q + s * s / model.q,
            lambda: 1.0,
            delta: 0.0,
            n1: model.r_norm() + s,
            n2: model.field_sup(),
            growth_exponent: Some(0.5),
        }
    }

    fn exponent(&self, weight: &WeightFunction) -> f64 {
        self.growth_exponent.unwrap_or(0.5 - weight.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HCheckOptions {
    pub samples: usize,
    pub seed: u64,
    pub auto_fit: bool,
    /// Sampling box; defaults to the first test measure's grid box.
    #[serde(default)]
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for HCheckOptions {
    fn default() -> Self {
        HCheckOptions {
            samples: 10_000,
            seed: 7,
            auto_fit: false,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HConditionsReport {
    pub constants: HConstants,
    pub c1: f64,
    pub c2: f64,
    pub theta: f64,
    pub margin_h1: f64,
    pub margin_h2: f64,
    pub margin_h3: f64,
    /// `min (C₁ − C₂V − L_μV)`.
    pub margin_lyapunov: f64,
    /// Sample point where the (H1) margin is smallest.
    pub worst_h1_point: Vec<f64>,
    pub sample_count: usize,
    pub violated: bool,
}

/// `L_μV(x) = trace(A D²V) + ⟨b, ∇V⟩`.
pub fn generator_v(weight: &WeightFunction, diffusion: &DiffusionSpec, x: &[f64], b: &[f64]) -> f64 {
    (0..x.len())
        .map(|a| diffusion.diag[a] * weight.d2v(x, a) + b[a] * weight.dv(x, a))
        .sum()
}

pub const H_TOLERANCE: f64 = 1e-9;

/// Samples (H1)–(H3) on random points × test measures.
pub fn check_h_conditions(
    model: &DriftModel,
    weight: &WeightFunction,
    diffusion: &DiffusionSpec,
    measures: &[DensityField],
    constants: Option<HConstants>,
    options: &HCheckOptions,
) -> Result<HConditionsReport> {
    if constants.is_none() && !options.auto_fit {
        return Err(FpkError::ConstantsMissing);
    }
    let first = measures
        .first()
        .ok_or_else(|| FpkError::InvalidParameter("need at least one test measure".into()))?;
    let grid = first.grid();
    let d = grid.dim();
    model.validate(d)?;
    if diffusion.dim() != d {
        return Err(FpkError::InvalidParameter("diffusion dimension mismatch".into()));
    }
    for m in measures {
        grid.require_same(m.grid())?;
    }
    let (lo, hi) = options
        .bounds
        .clone()
        .unwrap_or_else(|| (grid.lower.clone(), grid.upper.clone()));
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let points: Vec<Point> = (0..options.samples.max(1))
        .map(|_| {
            let mut p = [0.0; MAX_DIM];
            for a in 0..d {
                p[a] = rng.random_range(lo[a]..hi[a]);
            }
            p
        })
        .collect();

    let alphas: Vec<f64> = measures.iter().map(|m| m.integrate(|x| weight.v(x))).collect();
    // drifts[k][s] = b(x_s, μ_k)
    let drifts: Vec<Vec<Point>> = measures
        .iter()
        .map(|m| {
            let p = model.prepare(m);
            points.par_iter().map(|x| p.eval(&x[..d])).collect()
        })
        .collect();
    let vs: Vec<f64> = points.iter().map(|x| weight.v(&x[..d])).collect();
    let lv: Vec<Vec<f64>> = drifts
        .iter()
        .map(|bs| {
            points
                .iter()
                .zip(bs)
                .map(|(x, b)| generator_v(weight, diffusion, &x[..d], &b[..d]))
                .collect()
        })
        .collect();
    let mut pair_dist = Vec::new();
    for i in 0..measures.len() {
        for j in i + 1..measures.len() {
            pair_dist.push((i, j, weighted_tv(&measures[i], &measures[j], weight)?));
        }
    }
    let norm = |b: &Point| b[..d].iter().map(|c| c * c).sum::<f64>().sqrt();
    let eps = model.epsilon();

    let constants = match constants {
        Some(c) => c,
        None => {
            let exponent = 0.5;
            let growth: Vec<f64> = points.iter().map(|x| weight.v_pow(&x[..d], exponent)).collect();
            // Λ from the least-squares slope of L_μV against V, then the tightest C.
            let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for row in &lv {
                for (v, l) in vs.iter().zip(row) {
                    sx += v;
                    sy += l;
                    sxx += v * v;
                    sxy += v * l;
                    n += 1.0;
                }
            }
            let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            let lambda = (-slope).max(1e-6);
            let c = lv
                .iter()
                .flat_map(|row| row.iter().zip(&vs).map(|(l, v)| l + lambda * v))
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0);
            let n1 = drifts
                .iter()
                .flat_map(|bs| bs.iter().zip(&growth).map(|(b, g)| norm(b) / g))
                .fold(0.0, f64::max);
            let mut n2: f64 = 0.0;
            if eps > 0.0 {
                for &(i, j, dist) in &pair_dist {
                    if dist <= 0.0 {
                        continue;
                    }
                    for s in 0..points.len() {
                        let mut diff = [0.0; MAX_DIM];
                        for a in 0..d {
                            diff[a] = drifts[i][s][a] - drifts[j][s][a];
                        }
                        n2 = n2.max(norm(&diff) / (eps * growth[s] * dist));
                    }
                }
            }
            HConstants {
                c,
                lambda,
                delta: 0.0,
                n1,
                n2,
                growth_exponent: Some(exponent),
            }
        }
    };

    let e = constants.exponent(weight);
    let growth: Vec<f64> = points.iter().map(|x| weight.v_pow(&x[..d], e)).collect();
    let HConstants {
        c,
        lambda,
        delta,
        n1,
        n2,
        ..
    } = constants;
    let theta = alphas.iter().copied().fold(c / lambda + 1.0, f64::max);
    let c1 = (1.0 - delta) * c + lambda * delta * theta;
    let c2 = lambda;

    let mut margin_h1 = f64::INFINITY;
    let mut worst = points[0];
    let mut margin_h2 = f64::INFINITY;
    let mut margin_lyap = f64::INFINITY;
    for (k, row) in lv.iter().enumerate() {
        for s in 0..points.len() {
            let rhs = (1.0 - delta) * c + lambda * (delta * alphas[k] - vs[s]);
            let m1 = rhs - row[s];
            if m1 < margin_h1 {
                margin_h1 = m1;
                worst = points[s];
            }
            margin_h2 = margin_h2.min(n1 * growth[s] - norm(&drifts[k][s]));
            margin_lyap = margin_lyap.min(c1 - c2 * vs[s] - row[s]);
        }
    }
    let mut margin_h3 = f64::INFINITY;
    for &(i, j, dist) in &pair_dist {
        for s in 0..points.len() {
            let mut diff = [0.0; MAX_DIM];
            for a in 0..d {
                diff[a] = drifts[i][s][a] - drifts[j][s][a];
            }
            margin_h3 = margin_h3.min(eps * n2 * growth[s] * dist - norm(&diff));
        }
    }
    let violated = [margin_h1, margin_h2, margin_h3, margin_lyap]
        .iter()
        .any(|m| *m < -H_TOLERANCE);
    Ok(HConditionsReport {
        constants,
        c1,
        c2,
        theta,
        margin_h1,
        margin_h2,
        margin_h3,
        margin_lyapunov: margin_lyap,
        worst_h1_point: worst[..d].to_vec(),
        sample_count: points.len() * measures.len(),
        violated,
    })
}

/// Random Gaussian mixtures on `grid`, tilted onto the constraints.
pub fn sample_test_measures(
    grid: &GridSpec,
    constraints: &[Constraint],
    count: usize,
    seed: u64,
) -> Result<Vec<DensityField>> {
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let k = rng.random_range(1..=3usize);
        let mut components = Vec::with_capacity(k);
        for _ in 0..k {
            let w: f64 = rng.random_range(0.2..1.0);
            let mut mean = vec![0.0; d];
            let mut var = vec![0.0; d];
            for a in 0..d {
                let mid = 0.5 * (grid.lower[a] + grid.upper[a]);
                let width = grid.upper[a] - grid.lower[a];
                mean[a] = mid + rng.random_range(-0.15..0.15) * width;
                var[a] = rng.random_range(0.25..1.5) * (width / 24.0).powi(2);
            }
            components.push((w, mean, var));
        }
        let mixture = make_mixture(grid, &components)?;
        out.push(project_constraints(&mixture, constraints)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::TestFunction;
    use crate::measures::make_gaussian;

    fn grid1() -> GridSpec {
        GridSpec::uniform_1d(-12.0, 12.0, 480).unwrap()
    }

    #[test]
    fn mean_field_substitution() {
        let mu = make_gaussian(&grid1(), &[2.0], &[1.0]).unwrap();
        let b = eval_drift(&DriftModel::mean_field(0.5), &[1.0], &mu);
        assert!(b[0].abs() < 1e-12);
    }

    #[test]
    fn epsilon_zero_is_base_drift_exactly() {
        let mu = make_gaussian(&grid1(), &[2.0], &[1.0]).unwrap();
        let model = DriftModel::ConvolutionKernel {
            epsilon: 0.0,
            base: BaseDrift::Gradient {
                quadratic: 1.0,
                quartic: 0.1,
            },
            kernel: Kernel::TanhDifference { scale: 1.0 },
        };
        let x = [0.7];
        assert_eq!(eval_drift(&model, &x, &mu), BaseDrift::Gradient { quadratic: 1.0, quartic: 0.1 }.eval(&x));
        assert_eq!(eval_drift(&DriftModel::mean_field(0.0), &x, &mu)[0], -0.7);
    }

    #[test]
    fn tanh_kernel_odd_integrand() {
        let mu = make_gaussian(&grid1(), &[0.0], &[1.0]).unwrap();
        let model = DriftModel::ConvolutionKernel {
            epsilon: 1.0,
            base: BaseDrift::Zero,
            kernel: Kernel::TanhDifference { scale: 1.0 },
        };
        assert!(eval_drift(&model, &[0.0], &mu)[0].abs() < 1e-10);
    }

    #[test]
    fn drift_field_matches_pointwise() {
        let mu = make_gaussian(&grid1(), &[0.5], &[1.5]).unwrap();
        let model = DriftModel::ConvolutionKernel {
            epsilon: 0.7,
            base: BaseDrift::Linear {
                matrix: vec![vec![1.0]],
                offset: vec![0.2],
            },
            kernel: Kernel::Sum {
                terms: vec![
                    Kernel::TanhDifference { scale: 0.5 },
                    Kernel::CubicAttraction { scale: 0.1 },
                ],
            },
        };
        let field = drift_field(&model, &mu);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let k = rng.random_range(0..mu.grid().len());
            let x = mu.grid().point(k);
            let b = eval_drift(&model, &x[..1], &mu);
            assert!((b[0] - field.components[0][k]).abs() <= 1e-14 * (1.0 + b[0].abs()));
        }
    }

    #[test]
    fn cubic_moments_match_direct_quadrature() {
        let mu = make_gaussian(&grid1(), &[0.5], &[1.5]).unwrap();
        let k = Kernel::CubicAttraction { scale: 0.3 };
        let prepared = k.prepare(&mu);
        let x = [1.3];
        let direct = mu.integrate(|y| 0.3 * (y[0] - x[0]).powi(3));
        assert!((prepared.eval(&x)[0] - direct).abs() < 1e-10);
        let t = Kernel::Trig {
            amplitude: 0.8,
            p: vec![1.0],
            r: vec![0.5],
            phase: 0.3,
            direction: vec![1.0],
        };
        let direct = mu.integrate(|y| 0.8 * (x[0] - 0.5 * y[0] + 0.3).sin());
        assert!((t.prepare(&mu).eval(&x)[0] - direct).abs() < 1e-12);
    }

    #[test]
    fn rvh_without_field_is_linear() {
        let g = GridSpec::square_2d(-6.0, 6.0, 48).unwrap();
        let mu = make_gaussian(&g, &[0.4, -0.1], &[0.5, 0.5]).unwrap();
        let model = DriftModel::Rvh(RvhModel::standard(0.3, 0.0));
        let m = mu.mean();
        let vm = m[0] + m[1];
        let field = drift_field(&model, &mu);
        for k in [0usize, 100, 1000, 2303] {
            let x = g.point(k);
            assert!((field.components[0][k] - (-2.0 * x[0] + vm)).abs() < 1e-12);
            assert!((field.components[1][k] - (-2.0 * x[1] + vm)).abs() < 1e-12);
        }
    }

    #[test]
    fn rvh_rejects_broken_identities() {
        let mut m = RvhModel::standard(0.1, 1.0);
        m.h = vec![1.0, 2.0];
        assert!(m.validate().is_err());
        let mut m = RvhModel::standard(0.1, 1.0);
        m.field = Kernel::Trig {
            amplitude: 1.0,
            p: vec![1.0, 0.0],
            r: vec![0.0, 1.0],
            phase: 0.0,
            direction: vec![1.0, 0.0],
        };
        assert!(m.validate().is_err());
        assert!(RvhModel::standard(0.1, 1.0).validate().is_ok());
    }

    #[test]
    fn affine_in_epsilon() {
        let mu = make_gaussian(&grid1(), &[0.5], &[1.0]).unwrap();
        let model = DriftModel::ConvolutionKernel {
            epsilon: 0.0,
            base: BaseDrift::Gradient {
                quadratic: 1.0,
                quartic: 0.0,
            },
            kernel: Kernel::TanhDifference { scale: 1.0 },
        };
        let x = [0.9];
        let b0 = eval_drift(&model, &x, &mu)[0];
        let bh = eval_drift(&model.with_epsilon(0.5), &x, &mu)[0];
        let b1 = eval_drift(&model.with_epsilon(1.0 - 1e-12), &x, &mu)[0];
        let slope = (b1 - b0) / (1.0 - 1e-12);
        assert!((bh - (b0 + 0.5 * slope)).abs() < 1e-12);
    }

    #[test]
    fn h_conditions_mean_field_closed_form() {
        let g = grid1();
        let q = 0.8;
        let cons = [Constraint::new(TestFunction::identity(), q)];
        let ms = sample_test_measures(&g, &cons, 6, 3).unwrap();
        let opts = HCheckOptions {
            samples: 2000,
            ..Default::default()
        };
        let w = WeightFunction::quadratic();
        let a = DiffusionSpec::identity(1);
        let model = DriftModel::mean_field(1.0);
        let r = check_h_conditions(&model, &w, &a, &ms, Some(HConstants::mean_field(q)), &opts).unwrap();
        assert!(!r.violated, "{r:?}");
        let mut zero_c = HConstants::mean_field(q);
        zero_c.c = 0.0;
        let r = check_h_conditions(&model, &w, &a, &ms, Some(zero_c), &opts).unwrap();
        assert!(r.violated && r.margin_h1 < 0.0);
    }

    #[test]
    fn constants_missing_without_auto_fit() {
        let ms = vec![make_gaussian(&grid1(), &[0.0], &[1.0]).unwrap()];
        let err = check_h_conditions(
            &DriftModel::mean_field(0.5),
            &WeightFunction::quadratic(),
            &DiffusionSpec::identity(1),
            &ms,
            None,
            &HCheckOptions::default(),
        );
        assert!(matches!(err, Err(FpkError::ConstantsMissing)));
    }

    #[test]
    fn auto_fit_produces_non_violating_constants() {
        let g = grid1();
        let ms = sample_test_measures(&g, &[], 4, 9).unwrap();
        let opts = HCheckOptions {
            samples: 1000,
            auto_fit: true,
            ..Default::default()
        };
        let model = DriftModel::ConvolutionKernel {
            epsilon: 0.5,
            base: BaseDrift::Gradient {
                quadratic: 1.0,
                quartic: 0.0,
            },
            kernel: Kernel::TanhDifference { scale: 1.0 },
        };
        let r = check_h_conditions(
            &model,
            &WeightFunction::quadratic(),
            &DiffusionSpec::identity(1),
            &ms,
            None,
            &opts,
        )
        .unwrap();
        assert!(!r.violated, "{r:?}");
        assert!(r.constants.lambda > 0.5);
    }

    #[test]
    fn membership_kernel_reproduces_drift() {
        let g = grid1();
        let mu = make_gaussian(&g, &[0.4], &[0.7]).unwrap();
        let models = [
            DriftModel::MeanFieldLinear {
                epsilon: 0.6,
                shift: 0.2,
            },
            DriftModel::ConvolutionKernel {
                epsilon: 0.5,
                base: BaseDrift::Linear {
                    matrix: vec![vec![1.5]],
                    offset: vec![0.3],
                },
                kernel: Kernel::TanhDifference { scale: 1.0 },
            },
            DriftModel::GradientConfining {
                epsilon: 0.3,
                quadratic: 2.0,
                quartic: 0.0,
            },
        ];
        for m in &models {
            let k = m.membership_kernel(1).unwrap();
            for x in [-2.0, 0.1, 3.0] {
                let direct = -mu.integrate(|y| k.eval(&[x], y)[0]);
                assert!((direct - m.eval(&[x], &mu)[0]).abs() < 1e-10, "{m:?}");
            }
        }
        let quartic = DriftModel::GradientConfining {
            epsilon: 0.3,
            quadratic: 1.0,
            quartic: 0.1,
        };
        assert!(quartic.membership_kernel(1).is_none());
    }

    #[test]
    fn serde_tags() {
        let m = DriftModel::Rvh(RvhModel::standard(0.1, 1.0));
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"variant\":\"rvh\""));
        let back: DriftModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
