//! Subword vocabulary shared by both decoders.
//!
//! Training is classical frequency-based BPE over whitespace-split words with
//! a `▁` word-boundary marker fused onto each word-initial character. Merge
//! ties are broken by lexicographic pair order, so training is a pure
//! function of the corpus. Encoding is greedy longest-match against the token
//! set, which makes `decode(encode(x)) == x` for any text over characters
//! seen in training.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::TokenizerError;

/// Word-boundary marker prepended to every word before matching.
pub const BOUNDARY: char = '\u{2581}'; // ▁

pub const BLANK_ID: usize = 0;
pub const SOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const PAD_ID: usize = 4;
pub const NUM_RESERVED: usize = 5;

const RESERVED_TOKENS: [&str; NUM_RESERVED] = ["<blank>", "<sos>", "<eos>", "<unk>", "<pad>"];

/// Token-string / id bijection with fixed reserved ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
    merges: Vec<(String, String)>,
    max_token_chars: usize,
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).copied()
    }

    /// Merge list recorded at training time (empty for loaded vocabularies).
    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    fn from_tokens(tokens: Vec<String>, merges: Vec<(String, String)>) -> Self {
        let lookup: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let max_token_chars =
            tokens.iter().skip(NUM_RESERVED).map(|t| t.chars().count()).max().unwrap_or(1);
        Vocabulary { tokens, lookup, merges, max_token_chars }
    }

    /// Encode text to subword ids. Words are boundary-marked and matched
    /// greedily longest-first; characters not covered by any token become
    /// `<unk>` (which breaks the round-trip, by contract).
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            let marked: Vec<char> = std::iter::once(BOUNDARY).chain(word.chars()).collect();
            let mut pos = 0;
            while pos < marked.len() {
                let limit = (marked.len() - pos).min(self.max_token_chars);
                let mut matched = 0;
                for len in (1..=limit).rev() {
                    let cand: String = marked[pos..pos + len].iter().collect();
                    if let Some(&id) = self.lookup.get(&cand) {
                        if id >= NUM_RESERVED {
                            ids.push(id);
                            matched = len;
                            break;
                        }
                    }
                }
                if matched == 0 {
                    ids.push(UNK_ID);
                    // skip the marker together with its character
                    pos += if marked[pos] == BOUNDARY { 2 } else { 1 };
                } else {
                    pos += matched;
                }
            }
        }
        ids
    }

    /// Decode subword ids back to text. Reserved ids other than `<unk>` are
    /// dropped; `<unk>` renders literally.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut buf = String::new();
        for &id in ids {
            match id {
                BLANK_ID | SOS_ID | EOS_ID | PAD_ID => {}
                UNK_ID => buf.push_str("<unk>"),
                _ => {
                    if let Some(tok) = self.tokens.get(id) {
                        buf.push_str(tok);
                    }
                }
            }
        }
        let text: String =
            buf.chars().map(|c| if c == BOUNDARY { ' ' } else { c }).collect();
        text.trim_start().to_string()
    }

    /// Plain-text vocabulary file: reserved tokens first, then one token per
    /// line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let mut out = String::new();
        for tok in &self.tokens {
            writeln!(out, "{tok}").unwrap();
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = std::fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        if tokens.len() < NUM_RESERVED {
            return Err(TokenizerError::MalformedVocab(format!(
                "only {} lines, need at least {NUM_RESERVED} reserved tokens",
                tokens.len()
            )));
        }
        for (i, expect) in RESERVED_TOKENS.iter().enumerate() {
            if tokens[i] != *expect {
                return Err(TokenizerError::MalformedVocab(format!(
                    "line {i} is {:?}, expected reserved token {expect:?}",
                    tokens[i]
                )));
            }
        }
        let mut seen = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if let Some(prev) = seen.insert(t.clone(), i) {
                return Err(TokenizerError::MalformedVocab(format!(
                    "duplicate token {t:?} at lines {prev} and {i}"
                )));
            }
        }
        Ok(Vocabulary::from_tokens(tokens, Vec::new()))
    }
}

/// Initial symbol alphabet of a corpus: for every character in any word, both
/// its plain and boundary-fused form. This guarantees that every seen
/// character is encodable regardless of word position.
pub fn alphabet(lines: &[String]) -> Vec<String> {
    let mut set = std::collections::BTreeSet::new();
    for line in lines {
        for word in line.split_whitespace() {
            for ch in word.chars() {
                set.insert(ch.to_string());
                set.insert(format!("{BOUNDARY}{ch}"));
            }
        }
    }
    set.into_iter().collect()
}

/// Train a BPE vocabulary on verbatim and subtitle text jointly.
///
/// `vocab_size` counts everything: reserved ids, the initial alphabet and the
/// learned merges. `vocab_size == reserved + alphabet` yields a
/// character-level vocabulary with zero merges.
pub fn train_bpe(
    corpus_verbatim: &[String],
    corpus_subtitle: &[String],
    vocab_size: usize,
) -> Result<Vocabulary, TokenizerError> {
    let mut lines: Vec<String> = Vec::new();
    lines.extend(corpus_verbatim.iter().cloned());
    lines.extend(corpus_subtitle.iter().cloned());
    if lines.iter().all(|l| l.split_whitespace().next().is_none()) {
        return Err(TokenizerError::EmptyCorpus);
    }

    let alpha = alphabet(&lines);
    let minimum = NUM_RESERVED + alpha.len();
    if vocab_size < minimum {
        return Err(TokenizerError::VocabTooSmall { requested: vocab_size, minimum });
    }
    let n_merges = vocab_size - minimum;

    // Word list in first-appearance order with counts; symbol sequences start
    // as boundary-fused first char + remaining chars.
    let mut word_index: HashMap<String, usize> = HashMap::new();
    let mut words: Vec<(Vec<String>, u64)> = Vec::new();
    for line in &lines {
        for word in line.split_whitespace() {
            if let Some(&i) = word_index.get(word) {
                words[i].1 += 1;
            } else {
                let chars: Vec<char> = word.chars().collect();
                let mut syms = Vec::with_capacity(chars.len());
                syms.push(format!("{BOUNDARY}{}", chars[0]));
                for &c in &chars[1..] {
                    syms.push(c.to_string());
                }
                word_index.insert(word.to_string(), words.len());
                words.push((syms, 1));
            }
        }
    }

    let mut merges: Vec<(String, String)> = Vec::new();
    for _ in 0..n_merges {
        // Count every adjacent pair occurrence (overlaps included).
        let mut pair_counts: HashMap<(String, String), u64> = HashMap::new();
        for (syms, count) in &words {
            for w in syms.windows(2) {
                *pair_counts.entry((w[0].clone(), w[1].clone())).or_insert(0) += count;
            }
        }
        // Highest count wins; ties broken by lexicographically smallest pair.
        let best = pair_counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((left, right), count)) = best else { break };
        if count == 0 {
            break;
        }
        let joined = format!("{left}{right}");
        for (syms, _) in &mut words {
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
                    out.push(joined.clone());
                    i += 2;
                } else {
                    out.push(syms[i].clone());
                    i += 1;
                }
            }
            *syms = out;
        }
        merges.push((left, right));
    }

    let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(alpha);
    tokens.extend(merges.iter().map(|(l, r)| format!("{l}{r}")));
    // A merge can recreate a string that is already a token (e.g. different
    // split of the same surface form); deduplicate keeping the first id.
    let mut seen = std::collections::HashSet::new();
    tokens.retain(|t| seen.insert(t.clone()));

    Ok(Vocabulary::from_tokens(tokens, merges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lines(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reserved_ids_fixed() {
        let v = train_bpe(&lines(&["ab"]), &[], 64).unwrap();
        assert_eq!(v.id("<blank>"), Some(BLANK_ID));
        assert_eq!(v.id("<sos>"), Some(SOS_ID));
        assert_eq!(v.id("<eos>"), Some(EOS_ID));
        assert_eq!(v.id("<unk>"), Some(UNK_ID));
        assert_eq!(v.id("<pad>"), Some(PAD_ID));
    }

    #[test]
    fn first_merge_by_hand_count() {
        // "aaab" twice: pairs (▁a,a)=2, (a,a)=2, (a,b)=2; lexicographic
        // tie-break picks ("a","a").
        let corpus = lines(&["aaab", "aaab"]);
        let alpha_n = alphabet(&corpus).len();
        let v = train_bpe(&corpus, &[], NUM_RESERVED + alpha_n + 1).unwrap();
        assert_eq!(v.merges(), &[("a".to_string(), "a".to_string())]);
    }

    #[test]
    fn zero_merges_character_vocab() {
        let corpus = lines(&["abc cba"]);
        let alpha_n = alphabet(&corpus).len();
        let v = train_bpe(&corpus, &[], NUM_RESERVED + alpha_n).unwrap();
        assert_eq!(v.merges().len(), 0);
        assert_eq!(v.size(), NUM_RESERVED + alpha_n);
        assert!(matches!(
            train_bpe(&corpus, &[], NUM_RESERVED + alpha_n - 1),
            Err(TokenizerError::VocabTooSmall { .. })
        ));
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            train_bpe(&lines(&["", "  "]), &[], 100),
            Err(TokenizerError::EmptyCorpus)
        ));
    }

    #[test]
    fn boundary_marker_convention() {
        let v = train_bpe(&lines(&["a b"]), &[], 64).unwrap();
        let ids = v.encode("a b");
        let toks: Vec<&str> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(toks, vec!["\u{2581}a", "\u{2581}b"]);
    }

    #[test]
    fn empty_text_round_trip() {
        let v = train_bpe(&lines(&["ab"]), &[], 64).unwrap();
        assert_eq!(v.encode(""), Vec::<usize>::new());
        assert_eq!(v.decode(&[]), "");
    }

    #[test]
    fn unseen_character_becomes_unk() {
        let v = train_bpe(&lines(&["ab"]), &[], 64).unwrap();
        let ids = v.encode("aq");
        assert!(ids.contains(&UNK_ID));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = train_bpe(&lines(&["hallo wereld", "het is goed"]), &lines(&["het is"]), 80)
            .unwrap();
        v.save(&path).unwrap();
        let v2 = Vocabulary::load(&path).unwrap();
        assert_eq!(v.size(), v2.size());
        let text = "het is goed";
        assert_eq!(v.encode(text), v2.encode(text));
        assert_eq!(v2.decode(&v2.encode(text)), text);
    }

    proptest! {
        /// Round-trip identity over text drawn from seen characters.
        #[test]
        fn round_trip_over_seen_chars(words in proptest::collection::vec("[abcdeg]{1,8}", 1..12)) {
            let corpus = lines(&["abcde gab ed", "badge cage", "gece bead"]);
            let v = train_bpe(&corpus, &[], 120).unwrap();
            let text = words.join(" ");
            let ids = v.encode(&text);
            prop_assert_eq!(v.decode(&ids), text);
        }
    }
}
