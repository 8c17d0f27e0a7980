//! Synthetic paired corpus: generation, feature synthesis, subtitle editing,
//! manifests, normalization, SpecAugment and task-mixed batching.
//!
//! The corpus stands in for a real speech database plus a broadcast-subtitle
//! collection: every utterance is a sequence of word prototype vectors with
//! additive noise, verbatim transcripts are the exact spoken words, and
//! subtitle transcripts are the spoken words after deterministic readability
//! edits (fillers dropped, stammers collapsed, dialect and contractions
//! normalized, light compression). Subtitle segments also get boundary jitter
//! so their features may include frames of neighboring speech, mimicking
//! inaccurate on-screen timings.

mod augment;
mod batch;
mod edit;
mod features;
mod generate;
mod lexicon;
mod manifest;

pub use augment::{spec_augment, SpecAugmentConfig};
pub use batch::{load_dataset, make_batches, Batch, LoadedUtterance, MixingMode};
pub use edit::subtitle_edit;
pub use features::{
    normalize_utterance, read_feature_file, synthesize_features, write_feature_file, Features,
};
pub use generate::{generate_corpus, CorpusConfig, GeneratedCorpus};
pub use lexicon::Lexicon;
pub use manifest::{read_manifest, write_manifest, ManifestEntry, PseudoSource};

/// Which target(s) an utterance carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Task {
    /// Verbatim transcript only (speech-recognition data).
    Verbatim,
    /// Subtitle transcript only (broadcast-subtitle data).
    Subtitled,
    /// Both targets present (pseudo-labeled or evaluation data).
    Parallel,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Verbatim => "verbatim",
            Task::Subtitled => "subtitled",
            Task::Parallel => "parallel",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "verbatim" => Some(Task::Verbatim),
            "subtitled" => Some(Task::Subtitled),
            "parallel" => Some(Task::Parallel),
            _ => None,
        }
    }

    pub fn has_verbatim(self) -> bool {
        matches!(self, Task::Verbatim | Task::Parallel)
    }

    pub fn has_subtitle(self) -> bool {
        matches!(self, Task::Subtitled | Task::Parallel)
    }
}

/// Splitmix-style stream derivation so per-utterance work is a pure function
/// of (corpus seed, stream tag, index).
pub(crate) fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
