use crate::scene::ObjectId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("object count {0} outside 1..=30")]
    ObjectCount(usize),
    #[error("could not place object {index} after {retries} attempts (seed {seed})")]
    Placement { seed: u64, index: usize, retries: usize },
    #[error("object {0} is not in the scene")]
    NotFound(ObjectId),
    #[error("object {0} is a composite and cannot be removed")]
    Composite(ObjectId),
    #[error("scene document: {0}")]
    Document(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("object {0} owns no pixels")]
    EmptyRegion(ObjectId),
    #[error("direction between {0} and {1} is undefined")]
    UndefinedDirection(ObjectId, ObjectId),
    #[error("unknown reference direction {0:?}")]
    UnknownDirection(String),
    #[error("a composite needs at least two members, got {0}")]
    TooFewMembers(usize),
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported lexicon format {0:?}")]
    Format(String),
    #[error("entry {word:?} ({category}): arity {arity} not accepted by {kind}")]
    Arity {
        word: String,
        category: String,
        arity: usize,
        kind: &'static str,
    },
    #[error("entry {word:?} ({category}): {message}")]
    Entry {
        word: String,
        category: String,
        message: String,
    },
    #[error("duplicate entry {word:?} ({category}, {kind})")]
    Duplicate {
        word: String,
        category: String,
        kind: &'static str,
    },
    #[error("entry {word:?} references unknown colour model {model:?}")]
    DanglingModel { word: String, model: String },
    #[error("colour model {name:?}: {message}")]
    Model { name: String, message: String },
    #[error("grammar rule {index}: {message}")]
    Grammar { index: usize, message: String },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("channel {0} has zero variance")]
    ZeroVariance(usize),
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
}

/// Why a composer did not yield a concept. The parser treats all of these as
/// "the rule does not succeed".
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("concept has no referents")]
    EmptyConcept,
    #[error("argument does not refer to objects")]
    NotReferring,
    #[error("composer expects {expected} argument(s), got {got}")]
    Arity { expected: usize, got: usize },
    #[error("no anaphoric antecedent: nothing has been removed yet")]
    AnaphoraUnavailable,
    #[error("unknown colour model {0:?}")]
    UnknownModel(String),
    #[error("no groups satisfy the request")]
    NoGroups,
    #[error("no target remains once landmarks are excluded")]
    NoTargets,
    #[error("nothing to bridge: the modifier carries no pending composition")]
    NothingToBridge,
    #[error(transparent)]
    Vision(#[from] VisionError),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error("corpus {0} contains no records")]
    Empty(String),
    #[error("session {session:?} record {index}: {message}")]
    Replay {
        session: String,
        index: usize,
        message: String,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
