//! Error types shared across the crate.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("metric is not Lorentzian at {point:?}: lambda = {lambda:.6e}")]
    NonLorentzian { point: Vec<f64>, lambda: f64 },

    #[error("point {point:?} is outside the chart domain (b = {b:.3e})")]
    OutOfDomain { point: Vec<f64>, b: f64 },

    #[error("degenerate metric at {point:?}")]
    DegenerateMetric { point: Vec<f64> },

    #[error("manifold spec validation failed: {0}")]
    InvalidSpec(String),

    #[error("point {point:?} is not on the boundary (b = {b:.3e})")]
    NotOnBoundary { point: Vec<f64>, b: f64 },

    #[error("boundary defining function degenerate at {point:?} (gradient norm {norm:.3e})")]
    DegenerateBoundary { point: Vec<f64>, norm: f64 },

    #[error("step size underflow at s = {s:.6e} (h = {h:.3e})")]
    StepSizeUnderflow { s: f64, h: f64 },

    #[error("non-finite state encountered at s = {s:.6e}")]
    NonFiniteState { s: f64 },

    #[error("momentum mismatch: J = {found:.12e}, expected {expected:.12e}")]
    MomentumMismatch { expected: f64, found: f64 },

    #[error("energy mismatch: E = {found:.12e}, expected {expected:.12e}")]
    EnergyMismatch { expected: f64, found: f64 },

    #[error("no boundary exit before horizon {horizon}")]
    NoExit { horizon: f64 },

    #[error("tangential boundary crossing at s = {s:.6e} (db/ds = {rate:.3e})")]
    GrazingExit { s: f64, rate: f64 },

    #[error("no inward realization with the requested invariants (c^2 = {c_squared:.6e})")]
    NoInwardSolution { c_squared: f64 },

    #[error("shooting failed after {attempts} starts: {reason}")]
    ShootingFailed { attempts: usize, reason: String },

    #[error("state is not null: H = {h:.3e}")]
    NotNull { h: f64 },

    #[error("lambda must be identically 1 for the lightlike mode (found {found:.6} at {point:?})")]
    LambdaNotOne { found: f64, point: Vec<f64> },

    #[error("gauge transform breaks the metric signature: lambda' = {lambda:.6e} at {point:?}")]
    GaugeBreaksSignature { point: Vec<f64>, lambda: f64 },

    #[error("gauge presentations disagree: max entrywise deviation {deviation:.3e}")]
    ConventionMismatch { deviation: f64 },

    #[error("boundary traces differ in {field}: max deviation {deviation:.3e}")]
    BoundaryTraceMismatch { field: String, deviation: f64 },

    #[error("hyperbolic angle undefined: |rho| = {rho_abs:.6} <= m sqrt(lambda) = {bound:.6}")]
    AngleUndefined { rho_abs: f64, bound: f64 },

    #[error("trajectory left the extended domain at s = {s:.6e}")]
    LeftDomain { s: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
