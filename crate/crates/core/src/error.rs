use alloc::string::String;

pub type Result<T, E = SteinError> = core::result::Result<T, E>;

/// Every failure the numerical layer can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SteinError {
    #[error("density is not strictly positive at interior point {x}")]
    NonPositiveDensity { x: f64 },
    #[error("variance integral does not converge under truncation refinement")]
    DivergentMoment,
    #[error("density integrates to {integral}, outside the normalization slack")]
    NotNormalizable { integral: f64 },
    #[error("point {x} is outside the open support ({lo}, {hi})")]
    SupportEdgeEvaluation { x: f64, lo: f64, hi: f64 },
    #[error("density underflows at {x}; a(x) is 0/0 and no log-density is available")]
    NumericallyDegenerate { x: f64 },
    #[error("point {x} is outside the operator or test-function domain")]
    OutOfSupport { x: f64 },
    #[error("finite-difference stencil around {x} leaves the function domain")]
    DerivativeUnavailable { x: f64 },
    #[error("sample is empty")]
    EmptySample,
    #[error("{excluded} of {n} sample points lie outside the support")]
    TooManyOutOfSupport { excluded: usize, n: usize },
    #[error("test function is unbounded or non-finite near {x}")]
    UnboundedTestFunction { x: f64 },
    #[error("quadrature on [{lo}, {hi}] did not converge (error estimate {error})")]
    QuadratureFailure { lo: f64, hi: f64, error: f64 },
    #[error("Stein residual {residual} at {x} exceeds the certificate tolerance")]
    CertificateFailure { x: f64, residual: f64 },
    #[error("dictionary would have {entries} entries (limit {cap})")]
    SizeTooLarge { entries: usize, cap: usize },
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error("no Y-group reaches the minimum group size")]
    NoRetainedGroups,
    #[error("Y has {distinct} distinct values, more than the countable limit {limit}")]
    UncountableY { distinct: usize, limit: usize },
    #[error("simulated path exploded at step {step}")]
    ExplodedPath { step: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error("invalid samples: {0}")]
    InvalidSamples(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl SteinError {
    /// Stable machine-readable code, used in CLI error payloads.
    pub fn code(&self) -> &'static str {
        match self {
            Self::NonPositiveDensity { .. } => "NON_POSITIVE_DENSITY",
            Self::DivergentMoment => "DIVERGENT_MOMENT",
            Self::NotNormalizable { .. } => "NOT_NORMALIZABLE",
            Self::SupportEdgeEvaluation { .. } => "SUPPORT_EDGE_EVALUATION",
            Self::NumericallyDegenerate { .. } => "NUMERICALLY_DEGENERATE",
            Self::OutOfSupport { .. } => "OUT_OF_SUPPORT",
            Self::DerivativeUnavailable { .. } => "DERIVATIVE_UNAVAILABLE",
            Self::EmptySample => "EMPTY_SAMPLE",
            Self::TooManyOutOfSupport { .. } => "TOO_MANY_OUT_OF_SUPPORT",
            Self::UnboundedTestFunction { .. } => "UNBOUNDED_TEST_FUNCTION",
            Self::QuadratureFailure { .. } => "QUADRATURE_FAILURE",
            Self::CertificateFailure { .. } => "CERTIFICATE_FAILURE",
            Self::SizeTooLarge { .. } => "SIZE_TOO_LARGE",
            Self::EmptyDictionary => "EMPTY_DICTIONARY",
            Self::NoRetainedGroups => "NO_RETAINED_GROUPS",
            Self::UncountableY { .. } => "UNCOUNTABLE_Y",
            Self::ExplodedPath { .. } => "EXPLODED_PATH",
            Self::InvalidConfig(_) => "INVALID_CONFIG",
            Self::UnknownScenario(_) => "UNKNOWN_SCENARIO",
            Self::InvalidParams(_) => "INVALID_PARAMS",
            Self::InvalidSamples(_) => "INVALID_SAMPLES",
            Self::InvalidArgument(_) => "INVALID_ARGUMENT",
        }
    }
}
