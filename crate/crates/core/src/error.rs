use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("null point: |grad psi| vanishes near (x, y) = ({x:.4}, {y:.4})")]
    NullPoint { x: f64, y: f64 },

    #[error("perturbation too large: sup |d_theta chi_1| = {sup:.6} >= 1")]
    PerturbationTooLarge { sup: f64 },

    #[error("d_theta chi_1 = {value:.3e} on boundary surface psi = {psi}")]
    BoundaryViolation { psi: f64, value: f64 },

    #[error("point psi = {psi} outside [{lo}, {hi}]")]
    OutOfDomain { psi: f64, lo: f64, hi: f64 },

    #[error("magnetic field vanishes at the evaluation point")]
    ZeroField,

    #[error("operation not defined for this field kind: {0}")]
    WrongKind(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("grid does not match field or profile: {0}")]
    GridMismatch(String),

    #[error("operation requires a {expected}D grid")]
    WrongDimension { expected: usize },

    #[error("degenerate surface weight Gamma = {gamma:.3e} at psi = {psi}")]
    DegenerateGamma { psi: f64, gamma: f64 },

    #[error("operator failed positive-definiteness probe: {0}")]
    NonSpd(String),

    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("rotational transform is not strictly monotone on the flux range")]
    NonMonotoneIota,

    #[error("source is not mean-free (mode (0,0) = {mean:.3e})")]
    NotSolvable { mean: f64 },

    #[error("small divisor |m + iota n| at mode (m, n) = ({m}, {n})")]
    SmallDivisor { m: i64, n: i64 },

    #[error("fit requires at least 3 strictly positive pairs")]
    NonPositiveData,

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
