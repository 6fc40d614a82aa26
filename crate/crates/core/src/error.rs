use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no ratings")]
    NoRatings,
    #[error("empty user: user {0} has no ratings")]
    EmptyUser(usize),
    #[error("no users in ratings matrix")]
    NoUsers,
    #[error("value off scale: {0}")]
    OffScale(f64),
    #[error("invalid scale: {0}")]
    InvalidScale(String),
    #[error("{kind} index {index} out of range (len {len})")]
    OutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },
    #[error("title not in NR: title {0} is already rated by the active user")]
    TitleRated(usize),
    #[error("already rated: title {0} cannot be queried")]
    AlreadyRated(usize),
    #[error("no predictions")]
    NoPredictions,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: rating {value} is off the scale")]
    OffScaleAt { line: u64, value: f64 },
    #[error("unknown items: {}", .0.join(", "))]
    UnknownItems(Vec<String>),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
