use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("piecewise propagation needs a square-family model; term {term} is smooth")]
    SmoothWaveform { term: usize },

    #[error("Fourier decomposition needs a smooth-family model; term {term} is a square wave")]
    SquareWaveform { term: usize },

    #[error("non-finite value while propagating segment {segment}")]
    NonFinite { segment: usize },

    #[error("Floquet cutoff {cutoff} is below the largest drive multiplier {multiplier}")]
    CutoffTooSmall { cutoff: usize, multiplier: u32 },

    #[error("QR iteration did not converge after {iterations} iterations (dimension {dim})")]
    NoConvergence { iterations: usize, dim: usize },

    #[error("folded spectrum has {found} surviving eigenvalues, need at least 2")]
    TooFewClusters { found: usize },

    #[error("Hamiltonian is defective (single eigenvector)")]
    DefectivePoint,

    #[error("left/right overlap {overlap:.3e} too small to biorthonormalize")]
    NearEp { overlap: f64 },

    #[error("loop passes through an exceptional point at step {step}")]
    EpOnPath { step: usize },

    #[error("consecutive loop points {index} and {next} are antipodal")]
    AntipodalPoints { index: usize, next: usize },

    #[error("loop point {0} is the zero vector")]
    ZeroVector(usize),

    #[error("{failed} of {total} cells failed, exceeding the 1% budget")]
    FailureBudget { failed: usize, total: usize },

    #[error("file format version {found} does not match supported version {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
