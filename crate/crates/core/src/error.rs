use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("invalid product-operator label: {0}")]
    InvalidLabel(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not traceless (|trace| = {0:.3e})")]
    NotTraceless(f64),

    #[error("coefficient for {label} is not finite")]
    NonFiniteCoefficient { label: String },

    #[error("evolution time must be non-negative, got {0} s")]
    NegativeTime(f64),

    #[error("pulse needs at least one target spin")]
    EmptyTargets,

    #[error("spin index {index} out of range for a {n}-spin system")]
    SpinOutOfRange { index: usize, n: usize },

    #[error("degenerate single-quantum transitions: {0}")]
    DegenerateTransitions(String),

    #[error("overlapping lines: {0}")]
    OverlappingLines(String),

    #[error(
        "Nyquist violation on {axis}: spectral width {width_hz:.3} Hz must exceed {required_hz:.3} Hz"
    )]
    Nyquist {
        axis: &'static str,
        width_hz: f64,
        required_hz: f64,
    },

    #[error("invalid acquisition parameters: {0}")]
    InvalidAcquisition(String),

    #[error("frequency {freq_hz} Hz lies outside the axis [{min_hz}, {max_hz}] Hz")]
    FrequencyOutOfRange {
        freq_hz: f64,
        min_hz: f64,
        max_hz: f64,
    },

    #[error(
        "design matrix is rank deficient (rank {rank} of {columns}); unresolved labels: {}",
        null_labels.join(", ")
    )]
    RankDeficient {
        rank: usize,
        columns: usize,
        null_labels: Vec<String>,
    },

    #[error("coefficient sets overlap on labels: {}", .0.join(", "))]
    OverlappingLabels(Vec<String>),

    #[error("matrix has zero norm")]
    ZeroNorm,

    #[error("design cache mismatch: {0}")]
    CacheMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
