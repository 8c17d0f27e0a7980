use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    derive_seed, normalize_utterance, read_feature_file, read_manifest, spec_augment, Features,
    SpecAugmentConfig, Task,
};
use crate::error::CorpusError;
use crate::tokenizer::{Vocabulary, PAD_ID};

/// An utterance after loading: normalized features and tokenized targets.
#[derive(Debug, Clone)]
pub struct LoadedUtterance {
    pub id: String,
    pub task: Task,
    pub feats: Features,
    pub verbatim_ids: Option<Vec<usize>>,
    pub subtitle_ids: Option<Vec<usize>>,
    pub verbatim_text: Option<String>,
    pub subtitle_text: Option<String>,
}

/// Loads a manifest, reads and mean-variance normalizes every feature file,
/// and tokenizes the targets against one vocabulary.
pub fn load_dataset(
    manifest_path: &Path,
    vocab: &Vocabulary,
) -> Result<Vec<Arc<LoadedUtterance>>, CorpusError> {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let entries = read_manifest(manifest_path)?;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let raw = read_feature_file(&base.join(&e.feature_path))?;
        if raw.frames == 0 {
            return Err(CorpusError::BadUtterance { id: e.id.clone(), reason: "zero frames".into() });
        }
        let feats = normalize_utterance(&raw);
        out.push(Arc::new(LoadedUtterance {
            id: e.id,
            task: e.task,
            feats,
            verbatim_ids: e.verbatim.as_deref().map(|t| vocab.encode(t)),
            subtitle_ids: e.subtitle.as_deref().map(|t| vocab.encode(t)),
            verbatim_text: e.verbatim,
            subtitle_text: e.subtitle,
        }));
    }
    Ok(out)
}

/// Task composition of training batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MixingMode {
    VerbatimOnly,
    SubtitleOnly,
    EqualMix,
}

impl MixingMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "verbatim-only" => Some(MixingMode::VerbatimOnly),
            "subtitle-only" => Some(MixingMode::SubtitleOnly),
            "equal-mix" => Some(MixingMode::EqualMix),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MixingMode::VerbatimOnly => "verbatim-only",
            MixingMode::SubtitleOnly => "subtitle-only",
            MixingMode::EqualMix => "equal-mix",
        }
    }
}

/// A batch: per-utterance views for the model plus the padded block form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub utterances: Vec<Arc<LoadedUtterance>>,
    /// `[batch, max_frames, d_feat]` zero-padded features.
    pub feats: Vec<f64>,
    pub max_frames: usize,
    pub d_feat: usize,
    pub frame_lens: Vec<usize>,
    /// `[batch, max_verbatim_len]` pad-id padded target ids.
    pub verbatim: Vec<usize>,
    pub max_verbatim_len: usize,
    /// Per-utterance presence of a verbatim target.
    pub verbatim_present: Vec<bool>,
    pub subtitle: Vec<usize>,
    pub max_subtitle_len: usize,
    pub subtitle_present: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Pads a fixed utterance list into block form (the batch builders call
    /// this; it is also the hook for hand-assembled test batches).
    pub fn from_utterances(utterances: Vec<Arc<LoadedUtterance>>) -> Batch {
        let b = utterances.len();
        let d_feat = utterances.first().map(|u| u.feats.dim).unwrap_or(0);
        let max_frames = utterances.iter().map(|u| u.feats.frames).max().unwrap_or(0);
        let mut feats = vec![0.0; b * max_frames * d_feat];
        let mut frame_lens = Vec::with_capacity(b);
        for (i, u) in utterances.iter().enumerate() {
            let n = u.feats.data.len();
            feats[i * max_frames * d_feat..i * max_frames * d_feat + n]
                .copy_from_slice(&u.feats.data);
            frame_lens.push(u.feats.frames);
        }
        let pad_block = |get: fn(&LoadedUtterance) -> Option<&Vec<usize>>| {
            let max_len =
                utterances.iter().filter_map(|u| get(u).map(|v| v.len())).max().unwrap_or(0);
            let mut block = vec![PAD_ID; b * max_len];
            let mut present = vec![false; b];
            for (i, u) in utterances.iter().enumerate() {
                if let Some(ids) = get(u) {
                    block[i * max_len..i * max_len + ids.len()].copy_from_slice(ids);
                    present[i] = true;
                }
            }
            (block, max_len, present)
        };
        let (verbatim, max_verbatim_len, verbatim_present) =
            pad_block(|u| u.verbatim_ids.as_ref());
        let (subtitle, max_subtitle_len, subtitle_present) =
            pad_block(|u| u.subtitle_ids.as_ref());
        Batch {
            utterances,
            feats,
            max_frames,
            d_feat,
            frame_lens,
            verbatim,
            max_verbatim_len,
            verbatim_present,
            subtitle,
            max_subtitle_len,
            subtitle_present,
        }
    }
}

fn augment_utterance(
    u: &Arc<LoadedUtterance>,
    cfg: &SpecAugmentConfig,
    rng: &mut ChaCha8Rng,
) -> Arc<LoadedUtterance> {
    if cfg.is_disabled() {
        return Arc::clone(u);
    }
    let feats = spec_augment(&u.feats, cfg, rng);
    Arc::new(LoadedUtterance { feats, ..(**u).clone() })
}

/// Cycling shuffled pool: reshuffles with a derived seed on each pass.
struct Pool<'a> {
    items: &'a [Arc<LoadedUtterance>],
    order: Vec<usize>,
    pos: usize,
    pass: u64,
    seed: u64,
}

impl<'a> Pool<'a> {
    fn new(items: &'a [Arc<LoadedUtterance>], seed: u64) -> Pool<'a> {
        let mut p = Pool { items, order: (0..items.len()).collect(), pos: 0, pass: 0, seed };
        p.shuffle();
        p
    }

    fn shuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 20, self.pass));
        self.order.shuffle(&mut rng);
        self.pos = 0;
        self.pass += 1;
    }

    fn next(&mut self) -> Arc<LoadedUtterance> {
        if self.pos >= self.order.len() {
            self.shuffle();
        }
        let item = Arc::clone(&self.items[self.order[self.pos]]);
        self.pos += 1;
        item
    }
}

/// Builds one epoch of batches.
///
/// `EqualMix` fills batch `i` with `ceil(B/2)` verbatim and `floor(B/2)`
/// subtitled utterances for even `i` and the transpose for odd `i`, so odd
/// batch sizes alternate which task gets the extra slot and the per-batch
/// counts never differ by more than one. The number of batches per epoch is
/// `ceil(total / B)`; the smaller pool cycles with a reshuffle.
pub fn make_batches(
    data: &[Arc<LoadedUtterance>],
    batch_size: usize,
    mixing: MixingMode,
    seed: u64,
    augment: &SpecAugmentConfig,
) -> Result<Vec<Batch>, CorpusError> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let verbatim: Vec<Arc<LoadedUtterance>> =
        data.iter().filter(|u| u.task == Task::Verbatim).cloned().collect();
    let subtitled: Vec<Arc<LoadedUtterance>> =
        data.iter().filter(|u| u.task == Task::Subtitled).cloned().collect();
    let parallel: Vec<Arc<LoadedUtterance>> =
        data.iter().filter(|u| u.task == Task::Parallel).cloned().collect();

    let mut aug_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 21, 0));
    let mut batches = Vec::new();

    // Pseudo-labeled data carries both targets, so task mixing is moot:
    // plain shuffled batches. Mixing parallel data with single-target data
    // in one training stream is not supported.
    if !parallel.is_empty() {
        if !verbatim.is_empty() || !subtitled.is_empty() {
            return Err(CorpusError::InvalidConfig(
                "cannot batch parallel and single-target utterances together".into(),
            ));
        }
        let mut pool = Pool::new(&parallel, seed);
        let n_batches = parallel.len().div_ceil(batch_size);
        for _ in 0..n_batches {
            let items: Vec<_> = (0..batch_size.min(parallel.len()))
                .map(|_| augment_utterance(&pool.next(), augment, &mut aug_rng))
                .collect();
            batches.push(Batch::from_utterances(items));
        }
        return Ok(batches);
    }
    match mixing {
        MixingMode::VerbatimOnly | MixingMode::SubtitleOnly => {
            let pool_items = if mixing == MixingMode::VerbatimOnly { &verbatim } else { &subtitled };
            if pool_items.is_empty() {
                return Err(CorpusError::EmptyPool {
                    task: if mixing == MixingMode::VerbatimOnly { "verbatim" } else { "subtitled" },
                });
            }
            let mut pool = Pool::new(pool_items, seed);
            let n_batches = pool_items.len().div_ceil(batch_size);
            for _ in 0..n_batches {
                let items: Vec<_> = (0..batch_size.min(pool_items.len()))
                    .map(|_| augment_utterance(&pool.next(), augment, &mut aug_rng))
                    .collect();
                batches.push(Batch::from_utterances(items));
            }
        }
        MixingMode::EqualMix => {
            if verbatim.is_empty() {
                return Err(CorpusError::EmptyPool { task: "verbatim" });
            }
            if subtitled.is_empty() {
                return Err(CorpusError::EmptyPool { task: "subtitled" });
            }
            let mut vpool = Pool::new(&verbatim, derive_seed(seed, 22, 0));
            let mut spool = Pool::new(&subtitled, derive_seed(seed, 23, 0));
            let n_batches = (verbatim.len() + subtitled.len()).div_ceil(batch_size);
            for i in 0..n_batches {
                let n_verb = if i % 2 == 0 { batch_size.div_ceil(2) } else { batch_size / 2 };
                let n_subs = batch_size - n_verb;
                let mut items = Vec::with_capacity(batch_size);
                for _ in 0..n_verb {
                    items.push(augment_utterance(&vpool.next(), augment, &mut aug_rng));
                }
                for _ in 0..n_subs {
                    items.push(augment_utterance(&spool.next(), augment, &mut aug_rng));
                }
                batches.push(Batch::from_utterances(items));
            }
        }
    }
    Ok(batches)
}
