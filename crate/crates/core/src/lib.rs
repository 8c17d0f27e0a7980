//! Joint verbatim speech recognition and subtitle generation with a
//! dual-decoder transformer.
//!
//! The crate bundles everything needed to reproduce the multitask setup on a
//! synthetic corpus: a small autodiff tensor library, a BPE tokenizer, corpus
//! generation with subtitle-editing phenomena, the shared-encoder /
//! dual-decoder model with optional cross-connections, hybrid CTC/attention
//! losses and beam search (including synchronous tuple search), WER/BLEU
//! scoring, the training loop with checkpoint averaging, and the pseudo-label
//! finetuning pipeline.

pub mod config;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod metrics;
pub mod tensor;
pub mod tokenizer;
pub mod training;
pub mod transformer;

pub use error::Error;
pub use tensor::{Scalar, Tape, Tensor};
