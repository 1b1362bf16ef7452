//! Sentence-level flattery detection toolkit: corpus assembly from annotated
//! calls, speaker-independent splitting, layer-wise SVM probing of frozen
//! embeddings, early and late multimodal fusion, and UAR/WER evaluation.

pub mod corpus;
pub mod error;
pub mod features;
pub mod fusion;
pub mod jsonl;
pub mod metrics;
pub mod probe;
pub mod report;
pub mod splitter;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
