use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed tree document: {0}")]
    Malformed(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("duplicate node name `{0}`")]
    DuplicateName(String),

    #[error("missing prediction for node `{0}`")]
    MissingPrediction(String),

    #[error("missing ground-truth energy for node `{0}`")]
    MissingGroundTruth(String),

    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),

    #[error("ground truth must be positive, got {0}")]
    NonPositiveGroundTruth(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("leave-one-out needs at least two distinct model names, found {0}")]
    LooInfeasible(usize),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("no candidate fits within an energy budget of {0} J")]
    NoCandidate(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
