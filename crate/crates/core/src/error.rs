use thiserror::Error;

/// Everything that can go wrong across parsing, labeling, fragmentation,
/// routing, and reassembly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("unsupported construct at byte {offset}: {construct}")]
    Unsupported { construct: String, offset: u64 },

    #[error("bad address `{input}`: {message}")]
    AddressSyntax { input: String, message: String },

    #[error("bad pattern `{input}`: {message}")]
    PatternSyntax { input: String, message: String },

    #[error("bad predicate `{input}`: {message}")]
    PredicateSyntax { input: String, message: String },

    #[error("element {path} already carries attribute `{attr}`")]
    LabelingConflict { path: String, attr: String },

    #[error("bad label at {path}: {message}")]
    Label { path: String, message: String },

    #[error("selector `{0}` matches no element")]
    EmptyProjection(String),

    #[error("invalid selector: {0}")]
    InvalidSelector(String),

    #[error("unknown element `{0}`")]
    UnknownElement(String),

    #[error("bad workload: {0}")]
    Workload(String),

    #[error("cannot form {requested} groups from {available} elements")]
    InvalidGroupCount { requested: usize, available: usize },

    #[error("fragment `{0}` is not allocated to any node")]
    AllocationIncomplete(String),

    #[error("allocation strategy mismatch: {0}")]
    StrategyMismatch(String),

    #[error("unknown path `{0}`")]
    UnknownPath(String),

    #[error("missing fragments: {}", .0.join(", "))]
    IncompleteSet(Vec<String>),

    #[error("unresolved link: {0}")]
    LinkResolution(String),

    #[error("invalid cut: {0}")]
    InvalidCut(String),

    #[error("duplicate cut at {0}")]
    DuplicateCut(String),

    #[error("incomplete filler stream, missing: {}", .0.join(", "))]
    IncompleteStream(Vec<String>),

    #[error("duplicate filler id `{0}`")]
    DuplicateFiller(String),

    #[error("filler reference cycle: {}", .0.join(" -> "))]
    FillerCycle(Vec<String>),

    #[error("hole tag `{0}` already occurs in the document")]
    HoleTagTaken(String),

    #[error("empty input")]
    EmptyInput,

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("cluster error: {0}")]
    Cluster(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
