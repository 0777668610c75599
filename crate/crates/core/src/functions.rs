//! Closed-form test functions ψ and linear constraints `μ(h) = Q`.
//!
//! Every catalogue entry carries exact first and second derivatives so that
//! generator values `L_μψ = trace(A D²ψ) + ⟨b, ∇ψ⟩` are evaluated without
//! finite differences.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ConvergenceFailure, FpkError, Result};
use crate::measures::{DensityField, DiffusionSpec, Point, MAX_DIM};

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64]) -> Point + Send + Sync>;
type SecondFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

/// User-supplied function; derivative evaluators are optional.
#[derive(Clone)]
pub struct CustomFunction {
    pub name: String,
    pub value: ValueFn,
    pub gradient: Option<GradientFn>,
    /// Pure second derivative `∂²ψ/∂x_axis²`.
    pub second: Option<SecondFn>,
}

impl fmt::Debug for CustomFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFunction")
            .field("name", &self.name)
            .field("gradient", &self.gradient.is_some())
            .field("second", &self.second.is_some())
            .finish()
    }
}

impl PartialEq for CustomFunction {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.value, &other.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// `x_axis^power`.
    Monomial { axis: usize, power: u32 },
    /// `⟨v, x⟩ + offset`.
    LinearForm {
        coefficients: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `exp(rate · x_axis)`.
    Exponential { axis: usize, rate: f64 },
    /// `|x|²`.
    SquaredNorm,
    #[serde(skip)]
    Custom(CustomFunction),
}

impl TestFunction {
    pub fn identity() -> Self {
        TestFunction::LinearForm {
            coefficients: vec![1.0],
            offset: 0.0,
        }
    }

    pub fn linear(coefficients: Vec<f64>) -> Self {
        TestFunction::LinearForm {
            coefficients,
            offset: 0.0,
        }
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::Constant { value } => format!("const({value})"),
            TestFunction::Monomial { axis, power } => format!("x{axis}^{power}"),
            TestFunction::LinearForm {
                coefficients,
                offset,
            } => {
                let terms: Vec<String> = coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("{c}*x{i}"))
                    .collect();
                if *offset == 0.0 {
                    terms.join("+")
                } else {
                    format!("{}+{offset}", terms.join("+"))
                }
            }
            TestFunction::Exponential { axis, rate } => format!("exp({rate}*x{axis})"),
            TestFunction::SquaredNorm => "|x|^2".into(),
            TestFunction::Custom(c) => c.name.clone(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Monomial { axis, power } => x[*axis].powi(*power as i32),
            TestFunction::LinearForm {
                coefficients,
                offset,
            } => coefficients.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>() + offset,
            TestFunction::Exponential { axis, rate } => (rate * x[*axis]).exp(),
            TestFunction::SquaredNorm => x.iter().map(|c| c * c).sum(),
            TestFunction::Custom(c) => (c.value)(x),
        }
    }

    /// `∇ψ(x)`; `None` when no derivative evaluator exists.
    pub fn gradient(&self, x: &[f64]) -> Option<Point> {
        let mut g = [0.0; MAX_DIM];
        match self {
            TestFunction::Constant { .. } => {}
            TestFunction::Monomial { axis, power } => {
                g[*axis] = if *power == 0 {
                    0.0
                } else {
                    *power as f64 * x[*axis].powi(*power as i32 - 1)
                };
            }
            TestFunction::LinearForm { coefficients, .. } => {
                for (slot, c) in g.iter_mut().zip(coefficients) {
                    *slot = *c;
                }
            }
            TestFunction::Exponential { axis, rate } => g[*axis] = rate * (rate * x[*axis]).exp(),
            TestFunction::SquaredNorm => {
                for (slot, xi) in g.iter_mut().zip(x) {
                    *slot = 2.0 * xi;
                }
            }
            TestFunction::Custom(c) => return c.gradient.as_ref().map(|f| f(x)),
        }
        Some(g)
    }

    /// `∂²ψ/∂x_axis²`.
    pub fn second_derivative(&self, x: &[f64], axis: usize) -> Option<f64> {
        Some(match self {
            TestFunction::Constant { .. } | TestFunction::LinearForm { .. } => 0.0,
            TestFunction::Monomial { axis: a, power } => {
                if *a != axis || *power < 2 {
                    0.0
                } else {
                    let p = *power as f64;
                    p * (p - 1.0) * x[axis].powi(*power as i32 - 2)
                }
            }
            TestFunction::Exponential { axis: a, rate } => {
                if *a == axis {
                    rate * rate * (rate * x[axis]).exp()
                } else {
                    0.0
                }
            }
            TestFunction::SquaredNorm => 2.0,
            TestFunction::Custom(c) => return c.second.as_ref().map(|f| f(x, axis)),
        })
    }

    pub fn laplacian(&self, x: &[f64]) -> Option<f64> {
        (0..x.len()).map(|a| self.second_derivative(x, a)).sum()
    }

    /// Frobenius norm of the Hessian. Catalogue entries have diagonal
    /// Hessians; custom functions fall back to `|Δψ|`.
    pub fn hessian_norm(&self, x: &[f64]) -> Option<f64> {
        match self {
            TestFunction::Custom(_) => self.laplacian(x).map(f64::abs),
            _ => {
                let s: Option<f64> = (0..x.len())
                    .map(|a| self.second_derivative(x, a).map(|v| v * v))
                    .sum();
                s.map(f64::sqrt)
            }
        }
    }

    pub fn has_derivatives(&self) -> bool {
        match self {
            TestFunction::Custom(c) => c.gradient.is_some() && c.second.is_some(),
            _ => true,
        }
    }

    /// `trace(A D²ψ)(x) + ⟨b, ∇ψ(x)⟩` for a diagonal `A`.
    pub fn generator(&self, x: &[f64], drift: &[f64], diffusion: &DiffusionSpec) -> Option<f64> {
        let grad = self.gradient(x)?;
        let mut total = 0.0;
        for axis in 0..x.len() {
            total += diffusion.diag[axis] * self.second_derivative(x, axis)?;
            total += drift[axis] * grad[axis];
        }
        Some(total)
    }

    pub fn integrate(&self, field: &DensityField) -> f64 {
        field.integrate(|x| self.value(x))
    }
}

/// Linear constraint `μ(h) = target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub function: TestFunction,
    pub target: f64,
}

impl Constraint {
    pub fn new(function: TestFunction, target: f64) -> Self {
        Constraint { function, target }
    }

    pub fn violation(&self, field: &DensityField) -> f64 {
        self.function.integrate(field) - self.target
    }
}

/// Exponential tilt `ρ ∝ ρ₀ exp(⟨c, h⟩)` restoring `μ(h_k) = Q_k` for all
/// constraints.
///
/// `c` minimizes the convex dual `log Z(c) − ⟨c, Q⟩` by damped Newton steps;
/// the returned field meets every target to `1e-12` relative accuracy.
pub fn project_constraints(field: &DensityField, constraints: &[Constraint]) -> Result<DensityField> {
    if constraints.is_empty() {
        return crate::measures::normalize(field);
    }
    let k = constraints.len();
    let grid = field.grid().clone();
    let d = grid.dim();
    let base: Vec<f64> = field.cell_masses().collect();
    let support: Vec<usize> = (0..base.len()).filter(|&i| base[i] > 0.0).collect();
    let hvals: Vec<Vec<f64>> = support
        .iter()
        .map(|&i| {
            let p = grid.point(i);
            constraints.iter().map(|c| c.function.value(&p[..d])).collect()
        })
        .collect();
    let log_base: Vec<f64> = support.iter().map(|&i| base[i].ln()).collect();
    let targets: Vec<f64> = constraints.iter().map(|c| c.target).collect();

    // Log-weights, dual objective, mean and covariance of h under the tilt.
    let evaluate = |c: &[f64]| {
        let logs: Vec<f64> = log_base
            .iter()
            .zip(&hvals)
            .map(|(lb, h)| lb + h.iter().zip(c).map(|(hi, ci)| hi * ci).sum::<f64>())
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = weights.iter().sum();
        let mut mean = vec![0.0; k];
        for (w, h) in weights.iter().zip(&hvals) {
            for j in 0..k {
                mean[j] += w * h[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= z);
        let mut cov = vec![vec![0.0; k]; k];
        for (w, h) in weights.iter().zip(&hvals) {
            for a in 0..k {
                for b in 0..k {
                    cov[a][b] += w * (h[a] - mean[a]) * (h[b] - mean[b]);
                }
            }
        }
        cov.iter_mut().flatten().for_each(|v| *v /= z);
        let dual = top + z.ln() - c.iter().zip(&targets).map(|(ci, q)| ci * q).sum::<f64>();
        (weights, z, mean, cov, dual)
    };

    let scale: f64 = targets.iter().map(|q| q.abs()).fold(1.0, f64::max);
    let mut c = vec![0.0; k];
    let mut state = evaluate(&c);
    let mut history = Vec::new();
    for _ in 0..100 {
        let grad: Vec<f64> = state.2.iter().zip(&targets).map(|(m, q)| m - q).collect();
        let gnorm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        history.push(gnorm);
        if gnorm <= 1e-13 * scale {
            let vol = grid.cell_volume();
            let mut values = vec![0.0; grid.len()];
            for (w, &i) in state.0.iter().zip(&support) {
                values[i] = w / (state.1 * vol);
            }
            return Ok(DensityField::from_parts(grid, values));
        }
        let step = solve_small(&state.3, &grad).ok_or_else(|| {
            FpkError::InvalidParameter("constraint functions are linearly dependent".into())
        })?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = c.iter().zip(&step).map(|(ci, si)| ci - t * si).collect();
            let next = evaluate(&trial);
            let next_g = next
                .2
                .iter()
                .zip(&targets)
                .map(|(m, q)| (m - q).abs())
                .fold(0.0, f64::max);
            if next.4 < state.4 || next_g < gnorm || t < 1e-8 {
                c = trial;
                state = next;
                break;
            }
            t *= 0.5;
        }
    }
    Err(FpkError::NoConvergence(Box::new(ConvergenceFailure {
        context: "project_constraints",
        iterations: history.len(),
        residuals: history,
        first_moments: Vec::new(),
        contraction: Vec::new(),
    })))
}

/// Gaussian elimination with partial pivoting for the tiny Newton systems.
fn solve_small(matrix: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut b = rhs.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for j in col..n {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|j| a[row][j] * x[j]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{make_gaussian, GridSpec};

    #[test]
    fn catalogue_derivatives_match_finite_differences() {
        let fns = [
            TestFunction::Monomial { axis: 1, power: 3 },
            TestFunction::linear(vec![1.0, -2.0]),
            TestFunction::Exponential { axis: 0, rate: 0.7 },
            TestFunction::SquaredNorm,
        ];
        let x = [0.4, -0.9];
        let eps = 1e-5;
        for f in &fns {
            let g = f.gradient(&x).unwrap();
            for axis in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[axis] += eps;
                xm[axis] -= eps;
                let fd1 = (f.value(&xp) - f.value(&xm)) / (2.0 * eps);
                let fd2 = (f.value(&xp) - 2.0 * f.value(&x) + f.value(&xm)) / (eps * eps);
                assert!((fd1 - g[axis]).abs() < 1e-7, "{}", f.name());
                assert!((fd2 - f.second_derivative(&x, axis).unwrap()).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn custom_without_derivatives() {
        let f = TestFunction::Custom(CustomFunction {
            name: "abs".into(),
            value: Arc::new(|x| x[0].abs()),
            gradient: None,
            second: None,
        });
        assert!(!f.has_derivatives());
        assert!(f.gradient(&[1.0]).is_none());
        assert_eq!(f.value(&[-2.0]), 2.0);
    }

    #[test]
    fn projection_hits_mean_target() {
        let g = GridSpec::uniform_1d(-12.0, 12.0, 256).unwrap();
        let field = make_gaussian(&g, &[0.3], &[2.0]).unwrap();
        let c = Constraint::new(TestFunction::identity(), 1.25);
        let p = project_constraints(&field, &[c.clone()]).unwrap();
        assert!(c.violation(&p).abs() < 1e-12);
        assert!((p.mass() - 1.0).abs() < 1e-12);
        // A Gaussian tilted by exp(cx) is the shifted Gaussian.
        let expected = make_gaussian(&g, &[1.25], &[2.0]).unwrap();
        assert!(crate::measures::tv(&p, &expected).unwrap() < 1e-10);
    }

    #[test]
    fn projection_two_constraints_2d() {
        let g = GridSpec::square_2d(-6.0, 6.0, 48).unwrap();
        let field = make_gaussian(&g, &[0.0, 0.0], &[0.5, 0.5]).unwrap();
        let cs = [
            Constraint::new(TestFunction::linear(vec![1.0, 1.0]), 1.0),
            Constraint::new(TestFunction::linear(vec![1.0, -1.0]), 0.2),
        ];
        let p = project_constraints(&field, &cs).unwrap();
        for c in &cs {
            assert!(c.violation(&p).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_round_trip() {
        let f = TestFunction::linear(vec![1.0, 1.0]);
        let s = serde_json::to_string(&f).unwrap();
        let back: TestFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(f, back);
    }
}
