//! Error types, one enum per subsystem plus a crate-level umbrella.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} does not match {len} values")]
    ShapeValues { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("operation requires a 2-d tensor, got shape {shape:?}")]
    NotTwoDim { shape: Vec<usize> },
    #[error("axis {axis} out of range for {ndim}-d tensor")]
    BadAxis { axis: usize, ndim: usize },
    #[error("slice [{start}, {start}+{len}) out of range for extent {extent}")]
    SliceRange { start: usize, len: usize, extent: usize },
    #[error("index {index} out of range for extent {extent}")]
    IndexOutOfRange { index: usize, extent: usize },
    #[error("non-finite value produced by a forward op")]
    NonFinite,
    #[error("dropout probability {p} outside [0, 1)")]
    BadProbability { p: f64 },
    #[error("backward root must be scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("backward root was not produced on this tape")]
    DetachedRoot,
    #[error("tape already consumed by a backward pass; reset before reuse")]
    TapeConsumed,
    #[error("input tensor belongs to a different recording tape")]
    CrossTape,
    #[error("cannot reduce an empty tensor")]
    EmptyReduce,
    #[error("concat requires at least one input")]
    EmptyConcat,
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("vocab size {requested} too small: need > {minimum} (characters + reserved)")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("malformed vocabulary file: {0}")]
    MalformedVocab(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("malformed manifest line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("malformed feature file {path}: {reason}")]
    MalformedFeatures { path: String, reason: String },
    #[error("batch pool for task {task} is empty")]
    EmptyPool { task: &'static str },
    #[error("utterance {id}: {reason}")]
    BadUtterance { id: String, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input too short: {got} frames, subsampler needs at least {min}")]
    InputTooShort { got: usize, min: usize },
    #[error("target length {got} exceeds configured maximum {max}")]
    TargetTooLong { got: usize, max: usize },
    #[error("targets must begin with sos")]
    MissingSos,
    #[error("cross-connected forward requires both target streams")]
    MissingTargetStream,
    #[error("model has no cross-connections")]
    NoCrossConnections,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error)]
pub enum LossError {
    #[error("ctc target too long: extended sequence needs {needed} frames, got {got}")]
    CtcTargetTooLong { needed: usize, got: usize },
    #[error("ctc target contains reserved id {id}")]
    CtcReservedId { id: usize },
    #[error("loss over zero positions")]
    Empty,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("empty encoder output")]
    EmptyEncoderOutput,
    #[error("beam size must be at least 1")]
    ZeroBeam,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty reference corpus")]
    EmptyReference,
    #[error("hypothesis for id {0} not found")]
    MissingHypothesis(String),
    #[error("malformed hypothesis file: {0}")]
    MalformedHyp(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    BadVersion(u32),
    #[error("checkpoint dtype {found:?} does not match requested {expected:?}")]
    DtypeMismatch { expected: crate::tensor::Dtype, found: crate::tensor::Dtype },
    #[error("model config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("checkpoint missing tensor {0}")]
    MissingTensor(String),
    #[error("truncated or corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("vocabulary mismatch between model ({model}) and corpus ({corpus})")]
    VocabMismatch { model: usize, corpus: usize },
    #[error("checkpoint averaging needs at least one checkpoint")]
    NothingToAverage,
    #[error("manifest is not fully parallel: utterance {0} lacks a target")]
    NotParallel(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("malformed config line {line}: expected `key = value`")]
    MalformedLine { line: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Umbrella error for pipeline-level code (experiments, CLI).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing prerequisite: {what}; {hint}")]
    MissingPrerequisite { what: String, hint: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable one-word category for machine-parsable CLI errors.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Tensor(_) => "tensor",
            Error::Tokenizer(_) => "tokenizer",
            Error::Corpus(_) => "data",
            Error::Model(_) => "model",
            Error::Loss(_) => "loss",
            Error::Decode(_) => "decode",
            Error::Metrics(_) => "metrics",
            Error::Checkpoint(_) => "checkpoint",
            Error::Train(_) => "train",
            Error::Config(_) => "config",
            Error::MissingPrerequisite { .. } => "prereq",
            Error::Io(_) => "io",
        }
    }
}
