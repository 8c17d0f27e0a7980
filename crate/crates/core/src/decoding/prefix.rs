//! CTC prefix scoring for hybrid beam search.
//!
//! For a prefix g and frame log-probabilities, the scorer tracks the
//! probability of emitting exactly g by each frame, split by whether the path
//! tail is blank or the last label. The prefix score psi(g) is the log
//! probability that the CTC output *starts with* g; completing with eos
//! yields the exact full-sequence CTC log-likelihood of g.

use crate::tokenizer::BLANK_ID;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-hypothesis running state; extension is O(frames).
#[derive(Debug, Clone)]
pub struct PrefixState {
    /// log P(emitted prefix by t, path tail is the prefix's last label)
    r_nonblank: Vec<f64>,
    /// log P(emitted prefix by t, path tail is blank)
    r_blank: Vec<f64>,
    last: Option<usize>,
    /// log P(prefix is a prefix of the output)
    psi: f64,
}

impl PrefixState {
    pub fn prefix_score(&self) -> f64 {
        self.psi
    }
}

/// Scorer over one utterance's frame log-probabilities.
pub struct CtcPrefixScorer {
    lp: Vec<f64>,
    frames: usize,
    vocab: usize,
}

impl CtcPrefixScorer {
    pub fn new(lp: Vec<f64>, frames: usize, vocab: usize) -> Self {
        debug_assert_eq!(lp.len(), frames * vocab);
        CtcPrefixScorer { lp, frames, vocab }
    }

    fn lp(&self, t: usize, k: usize) -> f64 {
        self.lp[t * self.vocab + k]
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    /// State of the empty prefix: blank-only paths, psi = 0 (probability 1).
    pub fn initial(&self) -> PrefixState {
        let mut r_blank = vec![f64::NEG_INFINITY; self.frames];
        let mut acc = 0.0;
        for t in 0..self.frames {
            acc += self.lp(t, BLANK_ID);
            r_blank[t] = acc;
        }
        PrefixState {
            r_nonblank: vec![f64::NEG_INFINITY; self.frames],
            r_blank,
            last: None,
            psi: 0.0,
        }
    }

    /// Extends the prefix with token `c`, returning the incremental score
    /// `psi(g.c) - psi(g)` and the new state.
    pub fn extend(&self, st: &PrefixState, c: usize) -> (f64, PrefixState) {
        debug_assert_ne!(c, BLANK_ID);
        let t_len = self.frames;
        let mut r_nb = vec![f64::NEG_INFINITY; t_len];
        let mut r_b = vec![f64::NEG_INFINITY; t_len];
        // phi_t: paths of g at t that a fresh c at t+1 may follow
        let phi = |t: isize| -> f64 {
            if t < 0 {
                // before the first frame only the empty prefix exists
                return if st.last.is_none() { 0.0 } else { f64::NEG_INFINITY };
            }
            let t = t as usize;
            if st.last == Some(c) {
                st.r_blank[t]
            } else {
                log_add(st.r_blank[t], st.r_nonblank[t])
            }
        };
        let mut psi_new = f64::NEG_INFINITY;
        for t in 0..t_len {
            let start = phi(t as isize - 1);
            let prev_nb = if t == 0 { f64::NEG_INFINITY } else { r_nb[t - 1] };
            r_nb[t] = self.lp(t, c) + log_add(start, prev_nb);
            let prev_b = if t == 0 { f64::NEG_INFINITY } else { r_b[t - 1] };
            let prev_nb_for_blank = if t == 0 { f64::NEG_INFINITY } else { r_nb[t - 1] };
            r_b[t] = self.lp(t, BLANK_ID) + log_add(prev_b, prev_nb_for_blank);
            psi_new = log_add(psi_new, self.lp(t, c) + start);
        }
        let delta = psi_new - st.psi;
        (delta, PrefixState { r_nonblank: r_nb, r_blank: r_b, last: Some(c), psi: psi_new })
    }

    /// Exact CTC log-likelihood of the prefix as a complete output.
    pub fn full_log_likelihood(&self, st: &PrefixState) -> f64 {
        let t = self.frames - 1;
        log_add(st.r_nonblank[t], st.r_blank[t])
    }
}
