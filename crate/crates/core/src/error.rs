use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // corpus
    #[error("call {call_id}: invalid {kind} span [{start}, {end}): {reason}")]
    InvalidSpan {
        call_id: String,
        kind: &'static str,
        start: usize,
        end: usize,
        reason: String,
    },
    #[error("call {call_id}: invalid word alignment #{index}: {reason}")]
    InvalidAlignment {
        call_id: String,
        index: usize,
        reason: String,
    },
    #[error("call {call_id}: sentence [{start}, {end}) has no aligned words")]
    UnalignedSentence {
        call_id: String,
        start: usize,
        end: usize,
    },
    #[error("duplicate sample id {0}")]
    DuplicateSampleId(String),
    #[error("speaker {0} is not in the partition")]
    UnknownSpeaker(String),

    // splitter
    #[error("need at least 3 speakers to split, got {0}")]
    TooFewSpeakers(usize),
    #[error("split needs both positive and negative samples")]
    NoPositiveSamples,

    // feature store
    #[error("{path}: bad magic bytes {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: unsupported format version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{context}: {rows} matrix rows but {ids} sample ids")]
    RowCountMismatch {
        context: String,
        rows: usize,
        ids: usize,
    },
    #[error("{context}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("{context}: non-finite value at row {row}, column {col}")]
    NonFinite {
        context: String,
        row: usize,
        col: usize,
    },
    #[error("{context}: truncated data ({found} bytes, expected {expected})")]
    Truncated {
        context: String,
        found: usize,
        expected: usize,
    },
    #[error("sample {0} is missing from the feature pack")]
    MissingSample(String),
    #[error("layer {layer} not present in pack {model_id}")]
    MissingLayer { model_id: String, layer: i64 },
    #[error("sample id sets differ between packs {first} and {other}")]
    IdMismatch { first: String, other: String },
    #[error("duplicate model id {0}")]
    DuplicateModelId(String),
    #[error("{context}: score {value} for {sample_id} outside [0, 1]")]
    ScoreOutOfRange {
        context: String,
        sample_id: String,
        value: f64,
    },

    // svm
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("labels must be +1 or -1, found {0}")]
    InvalidLabel(i64),
    #[error("invalid svm configuration: {0}")]
    InvalidConfig(String),

    // probe / fusion
    #[error("grid expands to no configurations")]
    EmptyGrid,
    #[error("empty partition: {0}")]
    EmptyPartition(&'static str),
    #[error("score sources cover different samples: {0}")]
    CoverageMismatch(String),
    #[error("fusion weights sum to zero")]
    ZeroWeights,

    // metrics
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("labels contain a single class; recall is undefined")]
    SingleClassLabels,
    #[error("reference is empty after normalization")]
    EmptyReference,
    #[error("sample #{0} has no group")]
    UnmappedSample(usize),
    #[error("reports have different structure: {0}")]
    HeterogeneousReports(String),
    #[error("no reports to aggregate")]
    NoReports,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, line: usize, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            line,
            source,
        }
    }
}
