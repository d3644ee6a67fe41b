use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension n = {n} outside the supported range {min}..={max}")]
    Dimension { n: u32, min: u32, max: u32 },

    #[error("field value must be positive, got {value}")]
    NonPositive { value: f64 },

    #[error("orbit left the positive cone (v <= 0) at t = {t}")]
    PositivityLost { t: f64 },

    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("step size underflow at t = {t}")]
    StepFailure { t: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no shooting bracket found for eps = {eps}")]
    NoBracket { eps: f64 },

    #[error("necksize {eps} below the reliable cutoff {cutoff}")]
    Degenerate { eps: f64, cutoff: f64 },

    #[error("value {value} outside the admissible interval [{lo}, {hi})")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("slice quadrature under-resolved: doubling the order changed the result by {rel_change:e} (relative)")]
    QuadratureUnderResolved { rel_change: f64 },

    #[error("invalid tail samples: {0}")]
    InvalidSamples(String),

    #[error("fit did not converge: {detail}")]
    NoConvergence { detail: String },

    #[error("fitted necksize {eps} sits at the small-eps cutoff; the tail looks removable")]
    EpsAtBoundary { eps: f64 },

    #[error("decay window spans {span} t-units, need at least {required}")]
    WindowTooShort { span: f64, required: f64 },

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
