//! Word Error Rate and smoothed BLEU-4 scoring.

use std::collections::HashMap;

use crate::error::MetricsError;

/// Lowercases, strips punctuation (apostrophes are kept: they are part of
/// contraction word forms) and splits on whitespace.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(|c| c.to_lowercase())
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Edit counts from one Levenshtein alignment with unit costs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn total_edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn add(&mut self, other: &EditCounts) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.ref_len += other.ref_len;
    }

    /// WER as a percentage: (S+I+D) / N over the reference length.
    pub fn wer_percent(&self) -> f64 {
        if self.ref_len == 0 {
            if self.total_edits() == 0 {
                0.0
            } else {
                100.0
            }
        } else {
            100.0 * self.total_edits() as f64 / self.ref_len as f64
        }
    }
}

/// Levenshtein alignment of hypothesis to reference with unit costs,
/// returning substitution/insertion/deletion counts. On cost ties the
/// backtrace prefers match, then substitution, then deletion, then insertion,
/// so counts are deterministic.
pub fn wer_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let n = reference.len();
    let m = hypothesis.len();
    // cell = (cost, subs, ins, dels)
    let mut dp = vec![(0usize, 0usize, 0usize, 0usize); (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for j in 1..=m {
        dp[idx(0, j)] = (j, 0, j, 0);
    }
    for i in 1..=n {
        dp[idx(i, 0)] = (i, 0, 0, i);
    }
    for i in 1..=n {
        for j in 1..=m {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = dp[idx(i - 1, j - 1)];
            let up = dp[idx(i - 1, j)]; // deletion (ref word dropped)
            let left = dp[idx(i, j - 1)]; // insertion (extra hyp word)
            let cand_diag = if same {
                diag
            } else {
                (diag.0 + 1, diag.1 + 1, diag.2, diag.3)
            };
            let cand_del = (up.0 + 1, up.1, up.2, up.3 + 1);
            let cand_ins = (left.0 + 1, left.1, left.2 + 1, left.3);
            let mut best = cand_diag;
            if cand_del.0 < best.0 {
                best = cand_del;
            }
            if cand_ins.0 < best.0 {
                best = cand_ins;
            }
            dp[idx(i, j)] = best;
        }
    }
    let (_, s, i, d) = dp[idx(n, m)];
    EditCounts { substitutions: s, insertions: i, deletions: d, ref_len: n }
}

/// Corpus WER over (reference, hypothesis) text pairs: counts are aggregated
/// over utterances, not averaged per utterance.
pub fn corpus_wer(pairs: &[(String, String)]) -> Result<(EditCounts, Vec<EditCounts>), MetricsError> {
    if pairs.is_empty() || pairs.iter().all(|(r, _)| normalize_words(r).is_empty()) {
        return Err(MetricsError::EmptyReference);
    }
    let mut total = EditCounts::default();
    let mut per_utt = Vec::with_capacity(pairs.len());
    for (r, h) in pairs {
        let c = wer_counts(&normalize_words(r), &normalize_words(h));
        total.add(&c);
        per_utt.push(c);
    }
    Ok((total, per_utt))
}

/// Corpus-level smoothed BLEU-4 report.
#[derive(Debug, Clone)]
pub struct BleuReport {
    /// Score in percent.
    pub bleu: f64,
    /// Modified n-gram precisions after smoothing, n = 1..4.
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(words: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut map: HashMap<&[String], usize> = HashMap::new();
    if words.len() >= n {
        for i in 0..=(words.len() - n) {
            *map.entry(&words[i..i + n]).or_insert(0) += 1;
        }
    }
    map
}

/// Smoothed BLEU-4 with uniform weights and a single reference per segment.
///
/// Exact formula: modified (clipped) n-gram precisions are accumulated over
/// the corpus; p1 = m1/t1 unsmoothed; for n >= 2, pn = (mn + 1)/(tn + 1)
/// (add-one on numerator and denominator, so a perfect match keeps pn = 1 and
/// a zero overlap stays positive); BLEU = BP * exp(sum_n ln(pn)/4) with
/// BP = min(1, exp(1 - ref_len/hyp_len)).
pub fn bleu4_smoothed(pairs: &[(String, String)]) -> Result<BleuReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (r, h) in pairs {
        let rw = normalize_words(r);
        let hw = normalize_words(h);
        hyp_len += hw.len();
        ref_len += rw.len();
        for n in 1..=4 {
            let rc = ngram_counts(&rw, n);
            let hc = ngram_counts(&hw, n);
            for (gram, &count) in &hc {
                let clip = rc.get(gram).copied().unwrap_or(0);
                matched[n - 1] += count.min(clip);
            }
            total[n - 1] += hw.len().saturating_sub(n - 1);
        }
    }
    let mut precisions = [0.0f64; 4];
    precisions[0] = if total[0] == 0 { 0.0 } else { matched[0] as f64 / total[0] as f64 };
    for n in 2..=4 {
        precisions[n - 1] = (matched[n - 1] + 1) as f64 / (total[n - 1] + 1) as f64;
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let bleu = if precisions[0] == 0.0 || hyp_len == 0 {
        0.0
    } else {
        100.0
            * brevity_penalty
            * (precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0).exp()
    };
    Ok(BleuReport { bleu, precisions, brevity_penalty, hyp_len, ref_len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(r: &str, h: &str) -> (String, String) {
        (r.to_string(), h.to_string())
    }

    #[test]
    fn wer_exact_match_is_zero() {
        let (total, _) = corpus_wer(&[pair("a b c", "a b c")]).unwrap();
        assert_eq!(total.wer_percent(), 0.0);
    }

    #[test]
    fn wer_single_substitution() {
        let (total, _) = corpus_wer(&[pair("a b c", "a x c")]).unwrap();
        assert_eq!(total.substitutions, 1);
        assert_eq!(total.insertions, 0);
        assert_eq!(total.deletions, 0);
        assert!((total.wer_percent() - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn wer_deletion_of_everything() {
        let (total, _) = corpus_wer(&[pair("a", "")]).unwrap();
        assert_eq!(total.deletions, 1);
        assert_eq!(total.wer_percent(), 100.0);
    }

    #[test]
    fn wer_insertion() {
        let c = wer_counts(&["a", "b"], &["a", "x", "b"]);
        assert_eq!((c.substitutions, c.insertions, c.deletions), (0, 1, 0));
    }

    #[test]
    fn wer_aggregates_counts_not_rates() {
        // 1 error / 1 word and 0 errors / 9 words: aggregate is 10%, the mean
        // of the per-utterance rates would be 50%.
        let (total, per) = corpus_wer(&[
            pair("a", "b"),
            pair("c c c c c c c c c", "c c c c c c c c c"),
        ])
        .unwrap();
        assert_eq!(per.len(), 2);
        assert!((total.wer_percent() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn wer_empty_reference_corpus_rejected() {
        assert!(matches!(corpus_wer(&[]), Err(MetricsError::EmptyReference)));
        assert!(matches!(corpus_wer(&[pair("", "x")]), Err(MetricsError::EmptyReference)));
    }

    #[test]
    fn wer_normalization() {
        let (total, _) = corpus_wer(&[pair("Het IS, goed.", "het is goed")]).unwrap();
        assert_eq!(total.total_edits(), 0);
        // apostrophes survive normalization
        assert_eq!(normalize_words("'t is"), vec!["'t", "is"]);
    }

    #[test]
    fn bleu_perfect_match_is_100() {
        let r = bleu4_smoothed(&[pair("a b c d e", "a b c d e"), pair("f g h i", "f g h i")])
            .unwrap();
        assert!((r.bleu - 100.0).abs() < 1e-9, "got {}", r.bleu);
        for p in r.precisions {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bleu_zero_fourgram_overlap_still_positive() {
        let r = bleu4_smoothed(&[pair("a b c d e", "a x c y e")]).unwrap();
        assert!(r.bleu > 0.0);
    }

    #[test]
    fn bleu_hand_computed_short_hypothesis() {
        // ref "the cat sat", hyp "the cat": p1 = 2/2, p2 = (1+1)/(1+1) = 1,
        // p3 = p4 = (0+1)/(0+1) = 1, BP = exp(1 - 3/2).
        let r = bleu4_smoothed(&[pair("the cat sat", "the cat")]).unwrap();
        let expect = 100.0 * (-0.5f64).exp();
        assert!((r.bleu - expect).abs() < 1e-9, "got {} want {}", r.bleu, expect);
    }

    #[test]
    fn bleu_empty_hypothesis_is_zero() {
        let r = bleu4_smoothed(&[pair("a b c", "")]).unwrap();
        assert_eq!(r.bleu, 0.0);
    }

    proptest! {
        /// WER is invariant under relabeling of the word alphabet.
        #[test]
        fn wer_relabel_invariance(
            r in proptest::collection::vec(0usize..5, 1..10),
            h in proptest::collection::vec(0usize..5, 0..10),
        ) {
            let name = |i: usize| format!("w{i}");
            let relabel = |i: usize| format!("w{}", (i + 3) % 5 + 10);
            let c1 = wer_counts(
                &r.iter().map(|&i| name(i)).collect::<Vec<_>>(),
                &h.iter().map(|&i| name(i)).collect::<Vec<_>>(),
            );
            let c2 = wer_counts(
                &r.iter().map(|&i| relabel(i)).collect::<Vec<_>>(),
                &h.iter().map(|&i| relabel(i)).collect::<Vec<_>>(),
            );
            prop_assert_eq!(c1, c2);
        }

        /// Self-scoring is perfect; corpus WER does not depend on utterance order.
        #[test]
        fn wer_self_and_order(
            lines in proptest::collection::vec("[a-d]( [a-d]){0,6}", 1..6),
            wrong in "[a-d]( [a-d]){0,6}",
        ) {
            let pairs: Vec<(String, String)> =
                lines.iter().map(|l| (l.clone(), l.clone())).collect();
            let (total, _) = corpus_wer(&pairs).unwrap();
            prop_assert_eq!(total.total_edits(), 0);
            let b = bleu4_smoothed(&pairs).unwrap();
            prop_assert!((b.bleu - 100.0).abs() < 1e-9);

            let mut mixed = pairs.clone();
            mixed.push((lines[0].clone(), wrong));
            let (t1, _) = corpus_wer(&mixed).unwrap();
            let mut rev = mixed.clone();
            rev.reverse();
            let (t2, _) = corpus_wer(&rev).unwrap();
            prop_assert_eq!(t1, t2);
        }
    }
}
