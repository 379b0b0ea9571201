use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error)]
pub enum BslError {
    #[error("point {re}+{im}i lies outside the domain")]
    PointOutsideDomain { re: f64, im: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("capacity exceeded: {requested} > {cap}")]
    Capacity { requested: u64, cap: u64 },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e}")]
    QuadratureNonConvergence { estimate: f64, error_bound: f64 },
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("negative eigenvalue {value:e} exceeds clip threshold {threshold:e}")]
    AssemblyError { value: f64, threshold: f64 },
    #[error("truncation insufficient: {0}")]
    TruncationInsufficient(String),
    #[error("measures are not comparable: {0}")]
    IncomparableMeasures(String),
    #[error("fit degenerate: {0}")]
    FitDegenerate(String),
    #[error("spectrum shows no decay")]
    NoDecay,
    #[error("window too short: {len} points (need at least {min})")]
    WindowTooShort { len: usize, min: usize },
    #[error("value {y:e} below the range of the rate function (rho(1) = {floor:e})")]
    BelowRange { y: f64, floor: f64 },
    #[error("tail certificate failed: {0}")]
    TailCertificate(String),
    #[error("regularity not declared: {0}")]
    RegularityNotDeclared(String),
    #[error("symbol not evaluable: {0}")]
    SymbolNotEvaluable(String),
    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),
    #[error("non-compact profile: {0}")]
    NonCompactProfile(String),
    #[error("series truncation failed: {0}")]
    SeriesTruncation(String),
    #[error("step cap exceeded in {capped} of {walks} walks")]
    StepCapExceeded { capped: u64, walks: u64 },
    #[error("undersampled: {0}")]
    Undersampled(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BslError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(BslError::InvalidParameter(msg.into()))
}
