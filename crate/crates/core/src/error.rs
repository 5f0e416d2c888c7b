/// Crate-wide error type.
///
/// Variants map onto the CLI exit-code classes: configuration and argument
/// errors exit with 2, data/IO errors with 3, numerical degeneracies with 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Every element of the input is zero; no threshold is defined.
    #[error("input vector is all zeros; threshold undefined")]
    AllZeroInput,

    /// The input cannot support the requested estimate (too few usable
    /// elements, zero variance, non-positive moments, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A compression ratio outside its valid range.
    #[error("compression ratio {0} outside the supported range")]
    UnsupportedRatio(f64),

    /// A selection count outside `[1, dim]`.
    #[error("invalid k = {k} for dimension {dim}")]
    InvalidK { k: usize, dim: usize },

    /// Two vectors that must share a dimension do not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    /// A numeric inversion failed to bracket or converge.
    #[error("numeric inversion did not converge: {0}")]
    NonConvergence(String),

    /// A malformed trace file (bad magic, version, tag, length, or payload).
    #[error("trace format error: {0}")]
    Format(String),

    /// An invalid run configuration. The message lists every violation found.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class for this error.
    ///
    /// 2 = configuration/argument error, 3 = data error, 4 = numerical
    /// degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnsupportedRatio(_) | Error::InvalidK { .. } => 2,
            Error::Io(_) | Error::Format(_) | Error::DimMismatch { .. } => 3,
            Error::AllZeroInput | Error::DegenerateInput(_) | Error::NonConvergence(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
