//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("LAPACK routine {routine} failed with info={info}")]
    Lapack { routine: &'static str, info: i32 },
    #[error("matrix is singular to working precision")]
    Singular,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {what}")]
    DimensionMismatch { what: String },
    #[error("potential matrix is not symmetric (max asymmetry {max_asym:.3e})")]
    NotSymmetric { max_asym: f64 },
    #[error("matrix must be positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { min_eig: f64 },
    #[error("potential matrix must be positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("coupling must be nonnegative, got {g}")]
    NegativeCoupling { g: f64 },
    #[error("invalid band specification: {what}")]
    InvalidBands { what: String },
    #[error("temperature must be nonnegative, got {t}")]
    NegativeTemperature { t: f64 },
    #[error("invalid Gaussian state: {what}")]
    InvalidState { what: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature tolerance not reached (estimated error {error:.3e}, requested {requested:.3e})")]
    ToleranceNotReached { error: f64, requested: f64 },
    #[error("Laplace transform requested on a reservoir band (s = i{y}); use boundary values instead")]
    OnBandEvaluation { y: f64 },
    #[error("evaluation too close to a band edge at {edge} (distance {distance:.3e})")]
    EdgeEvaluation { edge: f64, distance: f64 },
    #[error("series for the spectrum on [{lo}, {hi}] did not converge at depth {depth}")]
    PanelRefinementFailed { lo: f64, hi: f64, depth: usize },
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("eigenvalue curve tracking became ambiguous near y = {y} (best overlap {overlap:.3})")]
    TrackingAmbiguity { y: f64, overlap: f64 },
    #[error("model is unstable at coupling g = {g}")]
    UnstableModel { g: f64 },
    #[error("root bracketing failed: {what}")]
    RootBracketFailure { what: String },
    #[error("model goes unstable at g = {g_unstable:.6e} before curve {index} reaches its critical coupling")]
    UnstableBeforeCritical { index: usize, g_unstable: f64 },
    #[error("gap index {gap} out of range ({available} gaps)")]
    NoSuchGap { gap: usize, available: usize },
    #[error("curve index {index} out of range for {n} oscillators")]
    NoSuchCurve { index: usize, n: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum PerturbationError {
    #[error("effective frequencies {w1:.6e} and {w2:.6e} coincide; the non-degenerate expansion does not apply")]
    DegenerateSpectrum { w1: f64, w2: f64 },
    #[error("bare mode {index} at frequency {omega:.6e} lies on a reservoir band; no in-gap expansion exists")]
    ModeOutsideGap { index: usize, omega: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("time step {dt} too large: solution norm exceeded {bound:.3e} on a stable model")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("binned spectral-density increment at omega = {omega} is not positive semidefinite (eigenvalue {eig:.3e})")]
    NonPsdBin { omega: f64, eig: f64 },
    #[error("total quadratic form is indefinite; closed-system evolution is unbounded")]
    IndefiniteTotalForm,
    #[error("requested {requested} modes per band, need at least {minimum}")]
    TooFewModes { requested: usize, minimum: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Error)]
pub enum CovarianceError {
    #[error("time {t} is not on the computed grid (nearest {nearest}, spacing {spacing})")]
    GridMismatch { t: f64, nearest: f64, spacing: f64 },
    #[error("regression window [{lo}, {hi}] too short to separate frequencies {f1} and {f2}")]
    WindowTooShort { lo: f64, hi: f64, f1: f64, f2: f64 },
    #[error("window contains {n} samples, need at least {needed}")]
    TooFewSamples { n: usize, needed: usize },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum GreensError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
