use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry encountered: {0}")]
    NonFinite(String),
    #[error("user {user} has {found} sample(s); at least {required} required")]
    InsufficientSamples {
        user: usize,
        found: usize,
        required: usize,
    },
    #[error("degenerate spectral gap: lambda_k = lambda_k+1 = {0}")]
    DegenerateGap(f64),
    #[error("rank-deficient signal: sigma_k^2 = {0}")]
    RankDeficient(f64),
    #[error("singular covariance: eta must be positive")]
    SingularCovariance,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no usable users (all blocks have fewer than 2 samples)")]
    NoUsableUsers,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
