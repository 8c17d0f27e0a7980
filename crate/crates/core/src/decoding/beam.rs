use super::prefix::{CtcPrefixScorer, PrefixState};
use crate::corpus::Features;
use crate::error::DecodeError;
use crate::tensor::{Scalar, Tape, Tensor};
use crate::tokenizer::{BLANK_ID, EOS_ID, PAD_ID, SOS_ID};
use crate::transformer::{DecoderKind, DualDecoderModel, FwdCtx};

/// Joint-score beam search parameters. `lambda_ctc` mirrors the training
/// interpolation; `max_len_ratio` caps hypothesis length at
/// `ratio * subsampled_frames` tokens.
#[derive(Debug, Clone, Copy)]
pub struct BeamConfig {
    pub beam: usize,
    pub lambda_ctc: f64,
    pub max_len_ratio: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        // desk default; the reference setting at publication scale is beam 20
        BeamConfig { beam: 4, lambda_ctc: 0.3, max_len_ratio: 1.5 }
    }
}

/// A finished hypothesis: tokens exclude sos/eos.
#[derive(Debug, Clone)]
pub struct ScoredSeq {
    pub tokens: Vec<usize>,
    pub score: f64,
    pub att_score: f64,
    pub ctc_score: f64,
}

struct Hyp {
    tokens: Vec<usize>,
    att: f64,
    ctc_state: Option<PrefixState>,
    ctc_psi: f64,
    score: f64,
    finished: bool,
}

/// Score ordering used everywhere: higher score first, ties broken by
/// lexicographic token-id order (smaller sequence first).
pub(crate) fn rank(
    score_a: f64,
    toks_a: &[usize],
    score_b: f64,
    toks_b: &[usize],
) -> std::cmp::Ordering {
    score_b.total_cmp(&score_a).then_with(|| toks_a.cmp(toks_b))
}

/// Next-token log-probabilities for a prefix, in f64.
pub(crate) fn step_logprobs<S: Scalar>(
    model: &DualDecoderModel<S>,
    ctx: &FwdCtx<S>,
    which: DecoderKind,
    prefix: &[usize],
    enc: &Tensor<S>,
) -> Result<Vec<f64>, DecodeError> {
    let mut input = Vec::with_capacity(prefix.len() + 1);
    input.push(SOS_ID);
    input.extend_from_slice(prefix);
    let logits = model.decode_teacher_forced(ctx, which, &input, enc)?;
    Ok(last_row_log_softmax(&logits))
}

pub(crate) fn last_row_log_softmax<S: Scalar>(logits: &Tensor<S>) -> Vec<f64> {
    let v = logits.cols();
    let last = logits.rows() - 1;
    let row: Vec<f64> =
        logits.values()[last * v..(last + 1) * v].iter().map(|x| x.to_f64c()).collect();
    log_softmax_f64(&row)
}

pub(crate) fn log_softmax_f64(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = row.iter().map(|x| (x - m).exp()).sum::<f64>().ln() + m;
    row.iter().map(|x| x - z).collect()
}

/// Token ids a decoder may emit: everything except blank, sos and pad.
pub(crate) fn is_candidate(id: usize) -> bool {
    id != BLANK_ID && id != SOS_ID && id != PAD_ID
}

pub(crate) fn combined(lambda: f64, att: f64, ctc: f64, use_ctc: bool) -> f64 {
    if use_ctc {
        (1.0 - lambda) * att + lambda * ctc
    } else {
        att
    }
}

pub(crate) fn frame_log_probs<S: Scalar>(
    model: &DualDecoderModel<S>,
    ctx: &FwdCtx<S>,
    enc: &Tensor<S>,
) -> Result<CtcPrefixScorer, DecodeError> {
    let logits = model.ctc_projection(ctx, enc)?;
    let v = logits.cols();
    let mut lp = Vec::with_capacity(logits.numel());
    for t in 0..logits.rows() {
        let row: Vec<f64> =
            logits.values()[t * v..(t + 1) * v].iter().map(|x| x.to_f64c()).collect();
        lp.extend(log_softmax_f64(&row));
    }
    Ok(CtcPrefixScorer::new(lp, logits.rows(), v))
}

/// Joint CTC/attention beam search over a single decoder.
///
/// Every step extends every live hypothesis with every emittable token plus
/// eos; candidates are scored by `(1-lambda)*attention + lambda*ctc` (the CTC
/// term is the prefix score while live and the exact full-sequence
/// log-likelihood on eos; the subtitle decoder uses pure attention). The
/// pooled candidates are pruned to the beam; eos survivors retire to the
/// finished set and the search ends when nothing is live or the length cap
/// closes the survivors with forced eos. Returns up to `beam` sequences,
/// best first.
pub fn beam_search<S: Scalar>(
    model: &DualDecoderModel<S>,
    which: DecoderKind,
    feats: &Features,
    cfg: &BeamConfig,
) -> Result<Vec<ScoredSeq>, DecodeError> {
    if cfg.beam == 0 {
        return Err(DecodeError::ZeroBeam);
    }
    let tape = Tape::inference();
    let ctx = FwdCtx::eval(&tape);
    let enc = model.encode(&ctx, feats)?;
    if enc.rows() == 0 {
        return Err(DecodeError::EmptyEncoderOutput);
    }
    let use_ctc = which == DecoderKind::Asr && cfg.lambda_ctc > 0.0;
    let scorer = if use_ctc { Some(frame_log_probs(model, &ctx, &enc)?) } else { None };
    let max_len = ((cfg.max_len_ratio * enc.rows() as f64).floor() as usize).max(1);

    let mut live: Vec<Hyp> = vec![Hyp {
        tokens: Vec::new(),
        att: 0.0,
        ctc_state: scorer.as_ref().map(|s| s.initial()),
        ctc_psi: 0.0,
        score: 0.0,
        finished: false,
    }];
    let mut finished: Vec<ScoredSeq> = Vec::new();

    for step in 0..max_len {
        let mut pool: Vec<Hyp> = Vec::new();
        for hyp in &live {
            let lp = step_logprobs(model, &ctx, which, &hyp.tokens, &enc)?;
            for (c, &lp_c) in lp.iter().enumerate() {
                if c == EOS_ID {
                    let att = hyp.att + lp_c;
                    let ctc = match (&scorer, &hyp.ctc_state) {
                        (Some(s), Some(st)) => s.full_log_likelihood(st),
                        _ => 0.0,
                    };
                    pool.push(Hyp {
                        tokens: hyp.tokens.clone(),
                        att,
                        ctc_state: None,
                        ctc_psi: ctc,
                        score: combined(cfg.lambda_ctc, att, ctc, use_ctc),
                        finished: true,
                    });
                } else if is_candidate(c) {
                    let (psi, state) = match (&scorer, &hyp.ctc_state) {
                        (Some(s), Some(st)) => {
                            let (delta, next) = s.extend(st, c);
                            (hyp.ctc_psi + delta, Some(next))
                        }
                        _ => (0.0, None),
                    };
                    let att = hyp.att + lp_c;
                    let mut tokens = hyp.tokens.clone();
                    tokens.push(c);
                    pool.push(Hyp {
                        tokens,
                        att,
                        ctc_state: state,
                        ctc_psi: psi,
                        score: combined(cfg.lambda_ctc, att, psi, use_ctc),
                        finished: false,
                    });
                }
            }
        }
        pool.sort_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens));
        pool.truncate(cfg.beam);
        live = Vec::new();
        for h in pool {
            if h.finished {
                finished.push(ScoredSeq {
                    tokens: h.tokens,
                    score: h.score,
                    att_score: h.att,
                    ctc_score: h.ctc_psi,
                });
            } else {
                live.push(h);
            }
        }
        if live.is_empty() {
            break;
        }
        if step + 1 == max_len {
            // length cap: close out the survivors with forced eos
            for hyp in &live {
                let lp = step_logprobs(model, &ctx, which, &hyp.tokens, &enc)?;
                let att = hyp.att + lp[EOS_ID];
                let ctc = match (&scorer, &hyp.ctc_state) {
                    (Some(s), Some(st)) => s.full_log_likelihood(st),
                    _ => 0.0,
                };
                finished.push(ScoredSeq {
                    tokens: hyp.tokens.clone(),
                    score: combined(cfg.lambda_ctc, att, ctc, use_ctc),
                    att_score: att,
                    ctc_score: ctc,
                });
            }
        }
    }

    finished.sort_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens));
    finished.dedup_by(|a, b| a.tokens == b.tokens);
    finished.truncate(cfg.beam);
    Ok(finished)
}

/// Greedy decoding: the argmax of the combined incremental score each step,
/// eos included; stops at eos or the length cap. An independent reference
/// path equivalent to beam size 1.
pub fn greedy_decode<S: Scalar>(
    model: &DualDecoderModel<S>,
    which: DecoderKind,
    feats: &Features,
    lambda_ctc: f64,
    max_len_ratio: f64,
) -> Result<ScoredSeq, DecodeError> {
    let tape = Tape::inference();
    let ctx = FwdCtx::eval(&tape);
    let enc = model.encode(&ctx, feats)?;
    if enc.rows() == 0 {
        return Err(DecodeError::EmptyEncoderOutput);
    }
    let use_ctc = which == DecoderKind::Asr && lambda_ctc > 0.0;
    let scorer = if use_ctc { Some(frame_log_probs(model, &ctx, &enc)?) } else { None };
    let max_len = ((max_len_ratio * enc.rows() as f64).floor() as usize).max(1);

    let mut tokens: Vec<usize> = Vec::new();
    let mut att = 0.0;
    let mut state = scorer.as_ref().map(|s| s.initial());
    let mut psi = 0.0;
    loop {
        let lp = step_logprobs(model, &ctx, which, &tokens, &enc)?;
        let full_ctc = match (&scorer, &state) {
            (Some(s), Some(st)) => s.full_log_likelihood(st),
            _ => 0.0,
        };
        let eos_score = combined(lambda_ctc, att + lp[EOS_ID], full_ctc, use_ctc);
        // eos wins ties: its id is below every emittable token
        let mut best: Option<(f64, usize, Option<PrefixState>, f64)> = None;
        for (c, &lp_c) in lp.iter().enumerate() {
            if !is_candidate(c) || c == EOS_ID {
                continue;
            }
            let (delta, next) = match (&scorer, &state) {
                (Some(s), Some(st)) => {
                    let (d, n) = s.extend(st, c);
                    (d, Some(n))
                }
                _ => (0.0, None),
            };
            let score = combined(lambda_ctc, att + lp_c, psi + delta, use_ctc);
            if best.as_ref().map_or(true, |(s, ..)| score > *s) {
                best = Some((score, c, next, psi + delta));
            }
        }
        let finish = match &best {
            None => true,
            Some((s, ..)) => eos_score >= *s || tokens.len() == max_len,
        };
        if finish {
            return Ok(ScoredSeq {
                tokens,
                score: eos_score,
                att_score: att + lp[EOS_ID],
                ctc_score: full_ctc,
            });
        }
        let (_, c, next, new_psi) = best.unwrap();
        tokens.push(c);
        att += lp[c];
        state = next;
        psi = new_psi;
    }
}
