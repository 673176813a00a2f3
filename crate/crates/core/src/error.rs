use std::path::PathBuf;

/// Every failure the library can report. Messages are prefixed with the
/// module that raised them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("scene-model: missing bundle file {0}")]
    MissingFile(PathBuf),
    #[error("scene-model: dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: String, expected: usize, found: usize },
    #[error("scene-model: mirror map is not an involution at vertex {0}")]
    MirrorNotInvolution(usize),
    #[error("scene-model: invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("scene-model: invalid scene parameters: {0}")]
    InvalidParams(String),
    #[error("scene-model: point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("sh-light: direction is not unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("sh-light: roughness {0} outside (0, 1]")]
    RoughnessOutOfRange(f64),
    #[error("shading: degenerate tangent frame")]
    DegenerateFrame,
    #[error("diff-engine: non-finite value {value} at node {node}")]
    NonFinite { node: u64, value: f64 },
    #[error("raster-renderer: no visible vertices (degenerate pose)")]
    NoVisibleVertices,
    #[error("raster-renderer: expected 68 landmarks, found {0}")]
    LandmarkCount(usize),
    #[error("{module}: image size mismatch: {expected:?} vs {found:?}")]
    ImageSize { module: &'static str, expected: (usize, usize), found: (usize, usize) },
    #[error("losses: resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(usize, usize),
    #[error("losses: landmarks are required when w_lm > 0")]
    MissingLandmarks,
    #[error("fit-pipeline: loss diverged in {stage} stage at iteration {iteration}")]
    Diverged { stage: String, iteration: usize },
    #[error("fit-pipeline: invalid plan: {0}")]
    InvalidPlan(String),
    #[error("metrics: empty mask")]
    EmptyMask,
    #[error("metrics: size mismatch: {0} vs {1}")]
    MetricSize(usize, usize),
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("io: {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }
}
