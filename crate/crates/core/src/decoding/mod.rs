//! Beam search: hybrid CTC/attention single-stream search, CTC prefix
//! scoring, and synchronous tuple search for the cross-connected model.
//!
//! Decoding is read-only on the model and fully deterministic: score ties are
//! broken by lexicographic token-id order.

mod beam;
mod prefix;
mod tuple;

pub use beam::{beam_search, greedy_decode, BeamConfig, ScoredSeq};
pub use prefix::{CtcPrefixScorer, PrefixState};
pub use tuple::{tuple_beam_search, TupleConfig, TuplePair};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::corpus::LoadedUtterance;
use crate::error::{DecodeError, MetricsError};
use crate::tensor::Scalar;
use crate::tokenizer::Vocabulary;
use crate::transformer::{DecoderKind, DualDecoderModel};

/// N-best decode of every utterance in a dataset on one decoder.
/// Utterances that fail to decode are skipped with a warning.
pub fn decode_dataset<S: Scalar>(
    model: &DualDecoderModel<S>,
    which: DecoderKind,
    data: &[Arc<LoadedUtterance>],
    vocab: &Vocabulary,
    cfg: &BeamConfig,
) -> Vec<(String, Vec<(f64, String)>)> {
    let mut out = Vec::with_capacity(data.len());
    for utt in data {
        match beam_search(model, which, &utt.feats, cfg) {
            Ok(nbest) => {
                let block: Vec<(f64, String)> =
                    nbest.iter().map(|s| (s.score, vocab.decode(&s.tokens))).collect();
                out.push((utt.id.clone(), block));
            }
            Err(e) => log::warn!("decode failed for {}: {e}; skipped", utt.id),
        }
    }
    out
}

/// Tuple decode of a dataset: returns (id, asr n-best, subtitle n-best)
/// blocks where entry i of each list comes from the i-th best tuple.
pub fn decode_dataset_tuple<S: Scalar>(
    model: &DualDecoderModel<S>,
    data: &[Arc<LoadedUtterance>],
    vocab: &Vocabulary,
    cfg: &TupleConfig,
) -> Vec<(String, Vec<(f64, String)>, Vec<(f64, String)>)> {
    let mut out = Vec::with_capacity(data.len());
    for utt in data {
        match tuple_beam_search(model, &utt.feats, cfg) {
            Ok(pairs) => {
                let asr: Vec<(f64, String)> =
                    pairs.iter().map(|p| (p.score, vocab.decode(&p.asr.tokens))).collect();
                let subs: Vec<(f64, String)> =
                    pairs.iter().map(|p| (p.score, vocab.decode(&p.subtitle.tokens))).collect();
                out.push((utt.id.clone(), asr, subs));
            }
            Err(e) => log::warn!("tuple decode failed for {}: {e}; skipped", utt.id),
        }
    }
    out
}

/// Hypothesis file: `id<TAB>score<TAB>text` lines, n-best blocks separated by
/// a blank line.
pub fn write_nbest(path: &Path, blocks: &[(String, Vec<(f64, String)>)]) -> std::io::Result<()> {
    let mut out = String::new();
    for (i, (id, nbest)) in blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (score, text) in nbest {
            writeln!(out, "{id}\t{score:.6}\t{text}").unwrap();
        }
    }
    std::fs::write(path, out)
}

/// Reads a hypothesis file back into n-best blocks.
pub fn read_nbest(path: &Path) -> Result<Vec<(String, Vec<(f64, String)>)>, MetricsError> {
    let text = std::fs::read_to_string(path)?;
    let mut blocks: Vec<(String, Vec<(f64, String)>)> = Vec::new();
    let mut current: Option<(String, Vec<(f64, String)>)> = None;
    for line in text.lines() {
        if line.is_empty() {
            if let Some(b) = current.take() {
                blocks.push(b);
            }
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let id = fields.next().unwrap_or_default().to_string();
        let score: f64 = fields
            .next()
            .ok_or_else(|| MetricsError::MalformedHyp(format!("missing score: {line:?}")))?
            .parse()
            .map_err(|_| MetricsError::MalformedHyp(format!("bad score: {line:?}")))?;
        let text = fields.next().unwrap_or("").to_string();
        match &mut current {
            Some((cur_id, list)) if *cur_id == id => list.push((score, text)),
            Some(_) => {
                blocks.push(current.take().unwrap());
                current = Some((id, vec![(score, text)]));
            }
            None => current = Some((id, vec![(score, text)])),
        }
    }
    if let Some(b) = current.take() {
        blocks.push(b);
    }
    Ok(blocks)
}

/// 1-best text per utterance id from n-best blocks.
pub fn best_map(blocks: &[(String, Vec<(f64, String)>)]) -> BTreeMap<String, String> {
    blocks
        .iter()
        .filter_map(|(id, nbest)| nbest.first().map(|(_, t)| (id.clone(), t.clone())))
        .collect()
}

/// Convenience wrapper returning a structured error for empty input.
pub fn require_nonempty<T>(items: Vec<T>) -> Result<Vec<T>, DecodeError> {
    if items.is_empty() {
        Err(DecodeError::EmptyEncoderOutput)
    } else {
        Ok(items)
    }
}

#[cfg(test)]
mod tests;
