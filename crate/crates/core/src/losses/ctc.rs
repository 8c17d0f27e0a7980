//! Connectionist temporal classification loss.
//!
//! Forward dynamic program over the blank-extended label sequence in log
//! space; the gradient with respect to the per-frame log-probabilities comes
//! from the full forward-backward recursion and is recorded on the tape.

use crate::error::LossError;
use crate::tensor::{Scalar, Tape, Tensor};
use crate::tokenizer::{BLANK_ID, NUM_RESERVED};

pub(crate) fn log_sum_exp<S: Scalar>(terms: &[S]) -> S {
    let mut max = S::neg_infinity();
    for &t in terms {
        if t > max {
            max = t;
        }
    }
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = terms.iter().map(|&t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Blank-extended label sequence: blank, y1, blank, y2, ..., blank.
fn extend(target: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK_ID);
    for &y in target {
        ext.push(y);
        ext.push(BLANK_ID);
    }
    ext
}

/// Minimum frame count a target needs: its length plus one mandatory blank
/// between each pair of repeated labels.
pub fn ctc_min_frames(target: &[usize]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

fn validate(target: &[usize], frames: usize) -> Result<(), LossError> {
    for &y in target {
        if y < NUM_RESERVED {
            return Err(LossError::CtcReservedId { id: y });
        }
    }
    let needed = ctc_min_frames(target);
    if frames < needed || frames == 0 {
        return Err(LossError::CtcTargetTooLong { needed, got: frames });
    }
    Ok(())
}

fn alpha_dp<S: Scalar>(lp: &[S], t_len: usize, v: usize, ext: &[usize]) -> Vec<S> {
    let s_len = ext.len();
    let ninf = S::neg_infinity();
    let mut alpha = vec![ninf; t_len * s_len];
    alpha[0] = lp[ext[0]];
    if s_len > 1 {
        alpha[1] = lp[ext[1]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let emit = lp[t * v + ext[s]];
            let mut terms = vec![alpha[(t - 1) * s_len + s]];
            if s >= 1 {
                terms.push(alpha[(t - 1) * s_len + s - 1]);
            }
            if s >= 2 && ext[s] != BLANK_ID && ext[s] != ext[s - 2] {
                terms.push(alpha[(t - 1) * s_len + s - 2]);
            }
            alpha[t * s_len + s] = emit + log_sum_exp(&terms);
        }
    }
    alpha
}

fn beta_dp<S: Scalar>(lp: &[S], t_len: usize, v: usize, ext: &[usize]) -> Vec<S> {
    let s_len = ext.len();
    let ninf = S::neg_infinity();
    let mut beta = vec![ninf; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = lp[(t_len - 1) * v + ext[s_len - 1]];
    if s_len > 1 {
        beta[(t_len - 1) * s_len + s_len - 2] = lp[(t_len - 1) * v + ext[s_len - 2]];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let emit = lp[t * v + ext[s]];
            let mut terms = vec![beta[(t + 1) * s_len + s]];
            if s + 1 < s_len {
                terms.push(beta[(t + 1) * s_len + s + 1]);
            }
            if s + 2 < s_len && ext[s] != BLANK_ID && ext[s + 2] != ext[s] {
                terms.push(beta[(t + 1) * s_len + s + 2]);
            }
            beta[t * s_len + s] = emit + log_sum_exp(&terms);
        }
    }
    beta
}

/// Negative log-likelihood of `target` given per-frame log-probabilities
/// `log_probs` (`[frames x vocab]`, blank id 0 included in vocab).
///
/// The target must not contain reserved ids, and the frame count must cover
/// the extended label sequence; an infeasible target is a distinct error,
/// never an infinite loss value.
pub fn ctc_loss<S: Scalar>(
    tape: &Tape<S>,
    log_probs: &Tensor<S>,
    target: &[usize],
) -> Result<Tensor<S>, LossError> {
    let [t_len, v] = *log_probs.shape() else {
        return Err(LossError::Tensor(crate::error::TensorError::NotTwoDim {
            shape: log_probs.shape().to_vec(),
        }));
    };
    validate(target, t_len)?;
    let ext = extend(target);
    let s_len = ext.len();
    let lp = log_probs.values();

    let alpha = alpha_dp(lp, t_len, v, &ext);
    let mut final_terms = vec![alpha[(t_len - 1) * s_len + s_len - 1]];
    if s_len > 1 {
        final_terms.push(alpha[(t_len - 1) * s_len + s_len - 2]);
    }
    let log_p = log_sum_exp(&final_terms);
    let loss_val = -log_p;
    if !loss_val.is_finite() {
        return Err(LossError::Tensor(crate::error::TensorError::NonFinite));
    }

    let mut out = Tensor::scalar(loss_val);
    if tape.should_record(&[log_probs]).map_err(LossError::Tensor)? {
        // d(-logP)/d u_t(k) = -exp(LSE_{s: ext_s = k}(alpha + beta) - u - logP)
        let beta = beta_dp(lp, t_len, v, &ext);
        let mut grad = vec![S::zero(); t_len * v];
        for t in 0..t_len {
            let mut per_label: std::collections::HashMap<usize, Vec<S>> =
                std::collections::HashMap::new();
            for s in 0..s_len {
                per_label
                    .entry(ext[s])
                    .or_default()
                    .push(alpha[t * s_len + s] + beta[t * s_len + s]);
            }
            for (&k, terms) in &per_label {
                let lse = log_sum_exp(terms);
                grad[t * v + k] = -(lse - lp[t * v + k] - log_p).exp();
            }
        }
        let src = log_probs.clone();
        tape.record(
            &mut out,
            Box::new(move |dout| {
                if src.wants_grad() {
                    let scaled: Vec<S> = grad.iter().map(|&g| g * dout[0]).collect();
                    src.storage().accumulate_grad(&scaled);
                }
            }),
        );
    }
    Ok(out)
}

/// Exhaustive reference: sums every alignment path of length `frames` whose
/// collapse (merge repeats, drop blanks) equals the target. Exponential in
/// the frame count; only for oracle tests on tiny instances.
pub fn ctc_loss_brute_force<S: Scalar>(log_probs: &Tensor<S>, target: &[usize]) -> S {
    let [t_len, v] = *log_probs.shape() else { panic!("need 2-d log probs") };
    let lp = log_probs.values();
    let mut total_terms: Vec<S> = Vec::new();
    let mut path = vec![0usize; t_len];
    loop {
        // collapse
        let mut collapsed = Vec::new();
        let mut prev = usize::MAX;
        for &p in &path {
            if p != prev && p != BLANK_ID {
                collapsed.push(p);
            }
            prev = p;
        }
        if collapsed == target {
            let score: S = path.iter().enumerate().map(|(t, &p)| lp[t * v + p]).sum();
            total_terms.push(score);
        }
        // next path in lexicographic order
        let mut i = t_len;
        loop {
            if i == 0 {
                return -log_sum_exp(&total_terms);
            }
            i -= 1;
            path[i] += 1;
            if path[i] < v {
                break;
            }
            path[i] = 0;
        }
    }
}
