//! Error type shared by every solver and analysis in the crate.

use crate::cauchy::Trajectory;

/// Residual history attached to iterations that failed to converge.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceFailure {
    /// Which iteration gave up ("find_stationary", "picard_iterate", ...).
    pub context: &'static str,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    /// First moment of each iterate, one vector per iteration (empty when not tracked).
    pub first_moments: Vec<Vec<f64>>,
    /// Ratios of successive residuals.
    pub contraction: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum FpkError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("density has zero total mass ({0:e})")]
    ZeroMass(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("operation supports dimension {supported} only, got {got}")]
    DimensionUnsupported { supported: usize, got: usize },
    #[error("{leaked:e} of the analytic mass lies outside the grid")]
    MassLeakage { leaked: f64 },
    #[error("no candidate constants supplied and auto-fit disabled")]
    ConstantsMissing,
    #[error("test function `{0}` has no derivative evaluators")]
    NonSmoothPsi(String),
    #[error("membership identities require A = I")]
    AnisotropicDiffusion,
    #[error("time step {dt:e} exceeds the explicit stability bound {bound:e}")]
    StabilityViolation { dt: f64, bound: f64 },
    #[error("negative density {value:e} in cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },
    #[error("drift is not confining at the boundary (axis {axis}, {side} side)")]
    NotConfining { axis: usize, side: &'static str },
    #[error("{} did not converge after {} iterations (last residual {:e})",
        .0.context, .0.iterations, .0.residuals.last().copied().unwrap_or(f64::NAN))]
    NoConvergence(Box<ConvergenceFailure>),
    #[error("moment blow-up at t = {time}: integral of V grew by a factor {ratio:e}")]
    BlowUp {
        time: f64,
        ratio: f64,
        partial: Box<Trajectory>,
    },
    #[error("trajectory has no snapshots")]
    EmptyTrajectory,
    #[error("fit window holds {points} usable points, need at least 5")]
    WindowTooShort { points: usize },
    #[error("contraction hypothesis violated: C = {lipschitz} >= kappa = {kappa}")]
    HypothesisViolated { kappa: f64, lipschitz: f64 },
    #[error("time grids do not match: {0}")]
    TimeGridMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = FpkError> = std::result::Result<T, E>;

impl FpkError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        FpkError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
