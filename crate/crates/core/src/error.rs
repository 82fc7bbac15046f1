use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chart construction: {0}")]
    ChartConstruction(String),

    #[error("point has non-finite coordinate at axis {axis}: {value}")]
    NonFinitePoint { axis: usize, value: f64 },

    #[error("point {point:?} lies outside the chart domain")]
    OutsideChart { point: Vec<f64> },

    #[error("fields live on different charts")]
    ChartMismatch,

    #[error("valence mismatch: {0}")]
    ValenceMismatch(String),

    #[error("degree overflow: degree {degree} exceeds chart dimension {dim}")]
    DegreeOverflow { degree: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("integrator exceeded {0} steps")]
    MaxStepsExceeded(usize),

    #[error("invalid integrator configuration: {0}")]
    InvalidIntegratorConfig(String),

    #[error("no return to section within t = {searched} (hint {hint})")]
    NoReturn { searched: f64, hint: f64 },

    #[error("vector field is near-singular at {point:?} (|X| = {norm:.3e})")]
    NearSingular { point: Vec<f64>, norm: f64 },

    #[error("period refinement did not converge after {iterations} iterations")]
    PeriodRefinementFailed { iterations: usize },

    #[error("orbit closure failure at {point:?}: |Fl^(2pi) - base| = {defect:.3e} exceeds {tol:.3e}")]
    ClosureFailure {
        point: Vec<f64>,
        defect: f64,
        tol: f64,
    },

    #[error("frequency function must be positive; got {value:.3e} at {point:?}")]
    NonPositiveFrequency { point: Vec<f64>, value: f64 },

    #[error("frequency is not a first integral: |L_X omega| = {residual:.3e} at {point:?}")]
    FrequencyNotInvariant { point: Vec<f64>, residual: f64 },

    #[error("singular Jacobian along orbit (condition number {cond:.3e})")]
    SingularJacobian { cond: f64 },

    #[error("gauge field is not invariant: relative deviation {deviation:.3e} at {point:?}")]
    NonInvariantGauge { point: Vec<f64>, deviation: f64 },

    #[error("solution residual {residual:.3e} exceeds acceptance threshold {threshold:.3e}")]
    ResidualExceeded { residual: f64, threshold: f64 },

    #[error("input form is not closed: |d eta| = {residual:.3e} at {point:?}")]
    NotClosed { point: Vec<f64>, residual: f64 },

    #[error("nondegeneracy hypothesis violated at {point:?}: {what}")]
    Nondegenerate { point: Vec<f64>, what: String },

    #[error("frame is degenerate at {point:?}")]
    FrameDegenerate { point: Vec<f64> },

    #[error("solvability condition violated: {what} = {residual:.3e} at {point:?}")]
    SolvabilityViolated {
        what: String,
        point: Vec<f64>,
        residual: f64,
    },

    #[error("monodromy: {0}")]
    Monodromy(String),

    #[error("periodicity certificate failed: {0}")]
    CertificateFailed(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
