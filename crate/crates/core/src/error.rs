use std::path::PathBuf;

/// Errors produced anywhere in the localization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scene placement infeasible after {attempts} attempts (over-constrained distribution?)")]
    PlacementInfeasible { attempts: usize },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error(
        "room too small for requested reverberation time: absorption {alpha:.4} is not in (0, 1)"
    )]
    InfeasibleAbsorption { alpha: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("channel {channel} is silent (zero power)")]
    SilentChannel { channel: usize },

    #[error("signal of {len} samples is shorter than the required {required}")]
    SignalTooShort { len: usize, required: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("at least 2 microphones are required, got {0}")]
    TooFewMics(usize),

    #[error("heatmap contains NaN at cell {0}")]
    NanInMap(usize),

    #[error("stale forward cache: {0}")]
    StaleCache(String),

    #[error("training diverged: loss is NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint checksum mismatch: header says {expected:08x}, blob hashes to {actual:08x}")]
    ChecksumMismatch { expected: u32, actual: u32 },

    #[error("corpus directory {0} contains no WAV files")]
    EmptyCorpus(PathBuf),

    #[error("unsupported WAV encoding in {path}: {reason}")]
    UnsupportedWav { path: PathBuf, reason: String },

    #[error("a trained checkpoint is required for method {0}")]
    MissingCheckpoint(String),

    #[error("invalid config at {pointer}: {message}")]
    ConfigSchema { pointer: String, message: String },

    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("cannot read {path}: {source}")]
    ReadFile { path: PathBuf, source: std::io::Error },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// [`std::fs::read`] with the path in the error.
pub fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::ReadFile { path: path.to_path_buf(), source })
}

/// [`std::fs::read_to_string`] with the path in the error.
pub fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::ReadFile { path: path.to_path_buf(), source })
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
