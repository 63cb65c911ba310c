use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: field `{field}`: {message}")]
    Record {
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("duplicate video_id `{video_id}` (line {line})")]
    DuplicateVideo { video_id: String, line: usize },

    #[error("input contains no records")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("video `{video_id}` carries tag `{tag}` that belongs to no component")]
    UnassignedTag { video_id: String, tag: String },

    #[error("unsorted event times at index {index}")]
    Unsorted { index: usize },

    #[error("need at least {required} events, got {got}")]
    TooFewEvents { required: usize, got: usize },

    #[error("all event times are identical")]
    DegenerateTimes,

    #[error("supercritical parameters: branching ratio {0:.4} >= 1")]
    Supercritical(f64),

    #[error("rate function value {value} exceeds bound {bound} at t = {t}")]
    RateBoundViolated { t: f64, value: f64, bound: f64 },

    #[error("no endogenous mass to attribute")]
    NoEndogenousMass,

    #[error("no fit supplied for cluster {0}")]
    MissingFit(usize),

    #[error("overlapping tag sets: `{0}` appears in more than one cluster")]
    OverlappingTags(String),

    #[error("series too short: need at least {required} points, got {got}")]
    SeriesTooShort { required: usize, got: usize },

    #[error("empty training window")]
    EmptyTrainingWindow,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
