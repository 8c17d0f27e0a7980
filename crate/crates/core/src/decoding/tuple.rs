use super::beam::{combined, frame_log_probs, is_candidate, last_row_log_softmax, rank, ScoredSeq};
use super::prefix::PrefixState;
use crate::corpus::Features;
use crate::error::DecodeError;
use crate::tensor::{Scalar, Tape};
use crate::tokenizer::{EOS_ID, SOS_ID};
use crate::transformer::{CrossMode, DualDecoderModel, FwdCtx};

/// Synchronous tuple search parameters. Stream weights default to 0.5/0.5;
/// CTC prefix scoring applies to the ASR stream only.
#[derive(Debug, Clone, Copy)]
pub struct TupleConfig {
    pub beam: usize,
    pub w_asr: f64,
    pub w_subs: f64,
    pub lambda_ctc: f64,
    pub max_len_ratio: f64,
    /// Per-stream candidate count before the cross product; defaults to the
    /// beam size.
    pub per_stream_k: Option<usize>,
}

impl Default for TupleConfig {
    fn default() -> Self {
        TupleConfig { beam: 4, w_asr: 0.5, w_subs: 0.5, lambda_ctc: 0.3, max_len_ratio: 1.5, per_stream_k: None }
    }
}

/// A finished (ASR, subtitle) pair with the weighted tuple score.
#[derive(Debug, Clone)]
pub struct TuplePair {
    pub asr: ScoredSeq,
    pub subtitle: ScoredSeq,
    pub score: f64,
}

#[derive(Clone)]
struct Stream {
    tokens: Vec<usize>,
    att: f64,
    score: f64,
    done: bool,
}

struct TupleHyp {
    asr: Stream,
    subtitle: Stream,
    a_ctc_state: Option<PrefixState>,
    a_psi: f64,
    score: f64,
}

enum StreamCand {
    Frozen,
    Eos { att: f64, ctc: f64, score: f64 },
    Token { id: usize, att: f64, psi: f64, state: Option<PrefixState>, score: f64 },
}

/// Synchronous tuple beam search over the cross-connected dual decoder.
///
/// Both streams expand one token per step; each stream's next-token
/// distribution is conditioned on both prefixes through the cross
/// connections. Candidate tuples are the cross product of each stream's
/// top-k extensions (eos included; a finished stream is frozen and only
/// pairs with no-extension, which is the "valid combinations" rule), pruned
/// by `w_asr * score_asr + w_subs * score_subs`. A frozen stream's states
/// remain attendable by the other stream.
pub fn tuple_beam_search<S: Scalar>(
    model: &DualDecoderModel<S>,
    feats: &Features,
    cfg: &TupleConfig,
) -> Result<Vec<TuplePair>, DecodeError> {
    if cfg.beam == 0 {
        return Err(DecodeError::ZeroBeam);
    }
    if model.config.cross_mode == CrossMode::None {
        return Err(DecodeError::Model(crate::error::ModelError::NoCrossConnections));
    }
    let tape = Tape::inference();
    let ctx = FwdCtx::eval(&tape);
    let enc = model.encode(&ctx, feats)?;
    if enc.rows() == 0 {
        return Err(DecodeError::EmptyEncoderOutput);
    }
    let use_ctc = cfg.lambda_ctc > 0.0;
    let scorer = if use_ctc { Some(frame_log_probs(model, &ctx, &enc)?) } else { None };
    let max_len = ((cfg.max_len_ratio * enc.rows() as f64).floor() as usize).max(1);
    let k = cfg.per_stream_k.unwrap_or(cfg.beam).max(1);

    let mut live = vec![TupleHyp {
        asr: Stream { tokens: Vec::new(), att: 0.0, score: 0.0, done: false },
        subtitle: Stream { tokens: Vec::new(), att: 0.0, score: 0.0, done: false },
        a_ctc_state: scorer.as_ref().map(|s| s.initial()),
        a_psi: 0.0,
        score: 0.0,
    }];
    let mut finished: Vec<TuplePair> = Vec::new();
    let retire = |h: TupleHyp, finished: &mut Vec<TuplePair>| {
        finished.push(TuplePair {
            asr: ScoredSeq {
                tokens: h.asr.tokens,
                score: h.asr.score,
                att_score: h.asr.att,
                ctc_score: h.a_psi,
            },
            subtitle: ScoredSeq {
                tokens: h.subtitle.tokens,
                score: h.subtitle.score,
                att_score: h.subtitle.att,
                ctc_score: 0.0,
            },
            score: h.score,
        });
    };

    for step in 0..max_len {
        let mut pool: Vec<TupleHyp> = Vec::new();
        for hyp in &live {
            let mut a_in = Vec::with_capacity(hyp.asr.tokens.len() + 1);
            a_in.push(SOS_ID);
            a_in.extend_from_slice(&hyp.asr.tokens);
            let mut s_in = Vec::with_capacity(hyp.subtitle.tokens.len() + 1);
            s_in.push(SOS_ID);
            s_in.extend_from_slice(&hyp.subtitle.tokens);
            let (la, ls) = model.decode_cross_connected(&ctx, &a_in, &s_in, &enc)?;

            let a_cands = if hyp.asr.done {
                vec![StreamCand::Frozen]
            } else {
                let lp = last_row_log_softmax(&la);
                let mut cands: Vec<StreamCand> = Vec::new();
                let full_ctc = match (&scorer, &hyp.a_ctc_state) {
                    (Some(s), Some(st)) => s.full_log_likelihood(st),
                    _ => 0.0,
                };
                cands.push(StreamCand::Eos {
                    att: hyp.asr.att + lp[EOS_ID],
                    ctc: full_ctc,
                    score: combined(cfg.lambda_ctc, hyp.asr.att + lp[EOS_ID], full_ctc, use_ctc),
                });
                for (c, &lp_c) in lp.iter().enumerate() {
                    if c == EOS_ID || !is_candidate(c) {
                        continue;
                    }
                    let (psi, state) = match (&scorer, &hyp.a_ctc_state) {
                        (Some(s), Some(st)) => {
                            let (d, n) = s.extend(st, c);
                            (hyp.a_psi + d, Some(n))
                        }
                        _ => (0.0, None),
                    };
                    cands.push(StreamCand::Token {
                        id: c,
                        att: hyp.asr.att + lp_c,
                        psi,
                        state,
                        score: combined(cfg.lambda_ctc, hyp.asr.att + lp_c, psi, use_ctc),
                    });
                }
                prune_stream(cands, k)
            };
            let s_cands = if hyp.subtitle.done {
                vec![StreamCand::Frozen]
            } else {
                let lp = last_row_log_softmax(&ls);
                let mut cands: Vec<StreamCand> = Vec::new();
                cands.push(StreamCand::Eos {
                    att: hyp.subtitle.att + lp[EOS_ID],
                    ctc: 0.0,
                    score: hyp.subtitle.att + lp[EOS_ID],
                });
                for (c, &lp_c) in lp.iter().enumerate() {
                    if c == EOS_ID || !is_candidate(c) {
                        continue;
                    }
                    cands.push(StreamCand::Token {
                        id: c,
                        att: hyp.subtitle.att + lp_c,
                        psi: 0.0,
                        state: None,
                        score: hyp.subtitle.att + lp_c,
                    });
                }
                prune_stream(cands, k)
            };

            for ac in &a_cands {
                for sc in &s_cands {
                    let (asr, a_state, a_psi) = apply_cand(&hyp.asr, ac, hyp.a_ctc_state.clone(), hyp.a_psi);
                    let (subtitle, _, _) = apply_cand(&hyp.subtitle, sc, None, 0.0);
                    let score = cfg.w_asr * asr.score + cfg.w_subs * subtitle.score;
                    pool.push(TupleHyp { asr, subtitle, a_ctc_state: a_state, a_psi, score });
                }
            }
        }
        pool.sort_by(|a, b| {
            rank(a.score, &a.asr.tokens, b.score, &b.asr.tokens)
                .then_with(|| a.subtitle.tokens.cmp(&b.subtitle.tokens))
        });
        pool.truncate(cfg.beam);
        live = Vec::new();
        for h in pool {
            if h.asr.done && h.subtitle.done {
                retire(h, &mut finished);
            } else {
                live.push(h);
            }
        }
        if live.is_empty() {
            break;
        }
        if step + 1 == max_len {
            // close unfinished streams with forced eos
            for hyp in live.drain(..) {
                let mut a_in = Vec::with_capacity(hyp.asr.tokens.len() + 1);
                a_in.push(SOS_ID);
                a_in.extend_from_slice(&hyp.asr.tokens);
                let mut s_in = Vec::with_capacity(hyp.subtitle.tokens.len() + 1);
                s_in.push(SOS_ID);
                s_in.extend_from_slice(&hyp.subtitle.tokens);
                let (la, ls) = model.decode_cross_connected(&ctx, &a_in, &s_in, &enc)?;
                let mut h = hyp;
                if !h.asr.done {
                    let lp = last_row_log_softmax(&la);
                    let full_ctc = match (&scorer, &h.a_ctc_state) {
                        (Some(s), Some(st)) => s.full_log_likelihood(st),
                        _ => 0.0,
                    };
                    h.asr.att += lp[EOS_ID];
                    h.asr.score = combined(cfg.lambda_ctc, h.asr.att, full_ctc, use_ctc);
                    h.asr.done = true;
                    h.a_psi = full_ctc;
                }
                if !h.subtitle.done {
                    let lp = last_row_log_softmax(&ls);
                    h.subtitle.att += lp[EOS_ID];
                    h.subtitle.score = h.subtitle.att;
                    h.subtitle.done = true;
                }
                h.score = cfg.w_asr * h.asr.score + cfg.w_subs * h.subtitle.score;
                retire(h, &mut finished);
            }
        }
    }

    finished.sort_by(|a, b| {
        rank(a.score, &a.asr.tokens, b.score, &b.asr.tokens)
            .then_with(|| a.subtitle.tokens.cmp(&b.subtitle.tokens))
    });
    finished.dedup_by(|a, b| a.asr.tokens == b.asr.tokens && a.subtitle.tokens == b.subtitle.tokens);
    finished.truncate(cfg.beam);
    Ok(finished)
}

fn prune_stream(mut cands: Vec<StreamCand>, k: usize) -> Vec<StreamCand> {
    cands.sort_by(|a, b| {
        let (sa, ia) = cand_key(a);
        let (sb, ib) = cand_key(b);
        sb.total_cmp(&sa).then_with(|| ia.cmp(&ib))
    });
    cands.truncate(k);
    cands
}

/// (score, tie-break id); eos sorts before any emittable token on ties.
fn cand_key(c: &StreamCand) -> (f64, usize) {
    match c {
        StreamCand::Frozen => (f64::INFINITY, 0),
        StreamCand::Eos { score, .. } => (*score, EOS_ID),
        StreamCand::Token { score, id, .. } => (*score, *id),
    }
}

fn apply_cand(
    stream: &Stream,
    cand: &StreamCand,
    ctc_state: Option<PrefixState>,
    psi: f64,
) -> (Stream, Option<PrefixState>, f64) {
    match cand {
        StreamCand::Frozen => (stream.clone(), ctc_state, psi),
        StreamCand::Eos { att, ctc, score } => (
            Stream { tokens: stream.tokens.clone(), att: *att, score: *score, done: true },
            ctc_state,
            *ctc,
        ),
        StreamCand::Token { id, att, psi: new_psi, state, score } => {
            let mut tokens = stream.tokens.clone();
            tokens.push(*id);
            (
                Stream { tokens, att: *att, score: *score, done: false },
                state.clone().or(ctc_state),
                if state.is_some() { *new_psi } else { psi },
            )
        }
    }
}
