//! Hybrid CTC/attention objective with per-task masking.
//!
//! The total loss is a weighted sum of the two decoders' attention losses and
//! the CTC objective: verbatim-task utterances drive the ASR terms, subtitled
//! ones the subtitle term, parallel ones both. Because the excluded task's
//! branch is simply never evaluated for an utterance, the masking is exact:
//! on a subtitle-only batch every ASR-decoder and CTC-projection gradient is
//! identically zero.

mod ctc;

pub use ctc::{ctc_loss, ctc_loss_brute_force, ctc_min_frames};

use crate::corpus::Batch;
use crate::error::LossError;
use crate::tensor::{Scalar, Tape, Tensor};
use crate::tokenizer::{EOS_ID, SOS_ID};
use crate::transformer::{CrossMode, DualDecoderModel, FwdCtx};

/// Objective weights and the label-smoothing factor.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub lambda_ctc: f64,
    pub lambda_asr: f64,
    pub lambda_subs: f64,
    pub label_smoothing: f64,
}

impl LossWeights {
    /// Single-decoder speech recognition: the subtitle branch is off.
    pub fn baseline_asr() -> Self {
        LossWeights { lambda_ctc: 0.3, lambda_asr: 1.0, lambda_subs: 0.0, label_smoothing: 0.1 }
    }

    /// The best multitask setting: equal decoder weights.
    pub fn multitask() -> Self {
        LossWeights { lambda_ctc: 0.3, lambda_asr: 0.5, lambda_subs: 0.5, label_smoothing: 0.1 }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::multitask()
    }
}

/// Scalar loss components of one batch. Components recombine:
/// `l_asr = (1-l_ctc_weight)*l_att_asr + l_ctc_weight*l_ctc` and
/// `l_tot = lambda_asr*l_asr + lambda_subs*l_att_subs`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossReport {
    pub l_tot: f64,
    pub l_asr: f64,
    pub l_att_asr: f64,
    pub l_ctc: f64,
    pub l_att_subs: f64,
    pub n_verbatim: usize,
    pub n_subtitled: usize,
    /// Utterances dropped from the ASR terms because their target cannot be
    /// aligned within the subsampled frame count.
    pub n_dropped_ctc: usize,
}

/// Batch loss as a differentiable scalar plus the report.
pub struct LossOutput<S: Scalar> {
    pub total: Tensor<S>,
    pub report: LossReport,
}

/// Label-smoothed cross entropy, mean over non-pad positions.
///
/// The smoothed target distribution puts `1 - eps` on the gold label and
/// `eps/(V-1)` on every other label. Pad positions are excluded from the
/// mean; an all-pad target is an error.
pub fn label_smoothed_ce<S: Scalar>(
    tape: &Tape<S>,
    logits: &Tensor<S>,
    targets: &[usize],
    eps: f64,
    pad_id: usize,
) -> Result<Tensor<S>, LossError> {
    let [l, v] = *logits.shape() else {
        return Err(LossError::Tensor(crate::error::TensorError::NotTwoDim {
            shape: logits.shape().to_vec(),
        }));
    };
    if targets.len() != l {
        return Err(LossError::Tensor(crate::error::TensorError::ShapeValues {
            shape: logits.shape().to_vec(),
            len: targets.len(),
        }));
    }
    let n_live = targets.iter().filter(|&&t| t != pad_id).count();
    if n_live == 0 {
        return Err(LossError::Empty);
    }
    let on = S::from_f64c(1.0 - eps);
    let off = S::from_f64c(eps / (v - 1) as f64);
    let mut q = vec![S::zero(); l * v];
    for (i, &t) in targets.iter().enumerate() {
        if t == pad_id {
            continue;
        }
        for j in 0..v {
            q[i * v + j] = if j == t { on } else { off };
        }
    }
    let q = Tensor::constant(&[l, v], q).map_err(LossError::Tensor)?;
    let lsm = tape.log_softmax(logits, 1)?;
    let weighted = tape.mul(&lsm, &q)?;
    let total = tape.sum(&weighted)?;
    Ok(tape.scale(&total, S::from_f64c(-1.0 / n_live as f64))?)
}

/// Eq.-style combination of the two ASR components.
pub fn asr_loss<S: Scalar>(
    tape: &Tape<S>,
    att: &Tensor<S>,
    ctc: &Tensor<S>,
    lambda_ctc: f64,
) -> Result<Tensor<S>, LossError> {
    let a = tape.scale(att, S::from_f64c(1.0 - lambda_ctc))?;
    let c = tape.scale(ctc, S::from_f64c(lambda_ctc))?;
    Ok(tape.add(&a, &c)?)
}

fn mean_of<S: Scalar>(tape: &Tape<S>, terms: &[Tensor<S>]) -> Result<Tensor<S>, LossError> {
    if terms.is_empty() {
        return Ok(Tensor::scalar(S::zero()));
    }
    let mut acc = terms[0].clone();
    for t in &terms[1..] {
        acc = tape.add(&acc, t)?;
    }
    Ok(tape.scale(&acc, S::from_f64c(1.0 / terms.len() as f64))?)
}

/// Decoder input ([sos] + y) and cross-entropy target (y + [eos]).
pub fn shift_targets(y: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut input = Vec::with_capacity(y.len() + 1);
    input.push(SOS_ID);
    input.extend_from_slice(y);
    let mut target = Vec::with_capacity(y.len() + 1);
    target.extend_from_slice(y);
    target.push(EOS_ID);
    (input, target)
}

/// The weighted multitask objective over one batch.
///
/// Per-task reduction: every utterance contributes a per-sequence mean
/// (cross entropy) or raw negative log-likelihood (CTC); the per-task mean of
/// those is taken before weighting, so the lambda semantics do not depend on
/// sequence lengths. A task with no utterances (or zero weight) contributes
/// an exact zero. ASR-side utterances whose target cannot be aligned within
/// the subsampled frame count are dropped from the ASR terms with a warning.
pub fn total_loss<S: Scalar>(
    ctx: &FwdCtx<S>,
    model: &DualDecoderModel<S>,
    batch: &Batch,
    weights: &LossWeights,
) -> Result<LossOutput<S>, LossError> {
    let tape = ctx.tape;
    let mut att_asr_terms: Vec<Tensor<S>> = Vec::new();
    let mut ctc_terms: Vec<Tensor<S>> = Vec::new();
    let mut att_subs_terms: Vec<Tensor<S>> = Vec::new();
    let mut n_verbatim = 0;
    let mut n_subtitled = 0;
    let mut n_dropped = 0;

    let want_asr = weights.lambda_asr != 0.0;
    let want_subs = weights.lambda_subs != 0.0;

    for utt in &batch.utterances {
        let asr_target = utt.verbatim_ids.as_ref().filter(|_| want_asr);
        let sub_target = utt.subtitle_ids.as_ref().filter(|_| want_subs);
        if asr_target.is_none() && sub_target.is_none() {
            continue;
        }
        if let Some(y) = asr_target {
            n_verbatim += 1;
            // an unalignable target poisons the CTC term; skip the utterance
            if model.subsampled_len(utt.feats.frames) < ctc_min_frames(y) {
                n_dropped += 1;
                log::warn!(
                    "utterance {}: target needs {} subsampled frames, have {}; dropped from ASR loss",
                    utt.id,
                    ctc_min_frames(y),
                    model.subsampled_len(utt.feats.frames)
                );
                continue;
            }
        }
        let enc = model.encode(ctx, &utt.feats)?;

        // the cross-connected model trains both streams jointly
        let cross_pair = if model.config.cross_mode != CrossMode::None {
            if let (Some(ya), Some(ys)) = (asr_target, sub_target) {
                let (ia, ta) = shift_targets(ya);
                let (is, ts) = shift_targets(ys);
                let (la, ls) = model.decode_cross_connected(ctx, &ia, &is, &enc)?;
                Some(((la, ta), (ls, ts)))
            } else {
                None
            }
        } else {
            None
        };

        if let Some(y) = asr_target {
            let (logits, ce_target) = match &cross_pair {
                Some(((la, ta), _)) => (la.clone(), ta.clone()),
                None => {
                    let (input, target) = shift_targets(y);
                    let logits =
                        model.decode_teacher_forced(ctx, crate::transformer::DecoderKind::Asr, &input, &enc)?;
                    (logits, target)
                }
            };
            att_asr_terms.push(label_smoothed_ce(
                tape,
                &logits,
                &ce_target,
                weights.label_smoothing,
                crate::tokenizer::PAD_ID,
            )?);
            let frame_logits = model.ctc_projection(ctx, &enc)?;
            let frame_lp = tape.log_softmax(&frame_logits, 1)?;
            ctc_terms.push(ctc_loss(tape, &frame_lp, y)?);
        }
        if let Some(y) = sub_target {
            n_subtitled += 1;
            let (logits, ce_target) = match &cross_pair {
                Some((_, (ls, ts))) => (ls.clone(), ts.clone()),
                None => {
                    let (input, target) = shift_targets(y);
                    let logits = model.decode_teacher_forced(
                        ctx,
                        crate::transformer::DecoderKind::Subtitle,
                        &input,
                        &enc,
                    )?;
                    (logits, target)
                }
            };
            att_subs_terms.push(label_smoothed_ce(
                tape,
                &logits,
                &ce_target,
                weights.label_smoothing,
                crate::tokenizer::PAD_ID,
            )?);
        }
    }

    let l_att_asr = mean_of(tape, &att_asr_terms)?;
    let l_ctc = mean_of(tape, &ctc_terms)?;
    let l_att_subs = mean_of(tape, &att_subs_terms)?;
    let l_asr = asr_loss(tape, &l_att_asr, &l_ctc, weights.lambda_ctc)?;
    let weighted_asr = tape.scale(&l_asr, S::from_f64c(weights.lambda_asr))?;
    let weighted_subs = tape.scale(&l_att_subs, S::from_f64c(weights.lambda_subs))?;
    let total = tape.add(&weighted_asr, &weighted_subs)?;

    let report = LossReport {
        l_tot: total.item().to_f64c(),
        l_asr: l_asr.item().to_f64c(),
        l_att_asr: l_att_asr.item().to_f64c(),
        l_ctc: l_ctc.item().to_f64c(),
        l_att_subs: l_att_subs.item().to_f64c(),
        n_verbatim,
        n_subtitled,
        n_dropped_ctc: n_dropped,
    };
    Ok(LossOutput { total, report })
}
