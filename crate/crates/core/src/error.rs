use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamp {time} outside trajectory span [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("field query {distance} m from the dipole is inside the exclusion radius")]
    Singularity { distance: f64 },

    #[error("capsule at z = {z} m is not at least 10 mm below the sensor plane")]
    BelowArrayViolation { z: f64 },

    #[error(
        "magnetic inversion did not converge after {iterations} iterations (residual {residual:e})"
    )]
    Divergence {
        iterations: usize,
        residual: f64,
        best_position: [f64; 3],
        best_heading: [f64; 3],
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("stream alignment failed: {0}")]
    Alignment(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("unsupported format version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
