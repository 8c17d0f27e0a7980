use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Word inventory of the synthetic language.
///
/// Function words, fillers, dialect pairs and contraction pairs are a small
/// fixed Dutch-flavored core; content words are generated syllable strings.
/// Dialect and contraction maps send spoken variants into the standard word
/// set, which is what subtitle editing normalizes to.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub content_words: Vec<String>,
    pub function_words: Vec<String>,
    pub fillers: Vec<String>,
    /// dialect variant -> standard form
    pub dialect: BTreeMap<String, String>,
    /// contraction -> full form
    pub contractions: BTreeMap<String, String>,
}

const FUNCTION_WORDS: &[&str] =
    &["de", "het", "een", "en", "dat", "is", "er", "op", "in", "van", "ik", "je", "jij", "wat", "ja"];
const FILLERS: &[&str] = &["uh", "euh", "hm"];
const DIALECT_PAIRS: &[(&str, &str)] = &[("gij", "jij"), ("ge", "je"), ("da", "dat"), ("wa", "wat")];
const CONTRACTION_PAIRS: &[(&str, &str)] = &[("'t", "het"), ("'n", "een"), ("'k", "ik")];

const ONSETS: &[&str] = &["b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z"];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "aa", "ee", "oo", "oe"];
const CODAS: &[&str] = &["", "k", "l", "m", "n", "p", "r", "s", "t"];

impl Lexicon {
    /// Builds the fixed core plus `n_content` generated content words.
    pub fn generate(n_content: usize, rng: &mut ChaCha8Rng) -> Lexicon {
        let function_words: Vec<String> = FUNCTION_WORDS.iter().map(|s| s.to_string()).collect();
        let fillers: Vec<String> = FILLERS.iter().map(|s| s.to_string()).collect();
        let dialect: BTreeMap<String, String> =
            DIALECT_PAIRS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let contractions: BTreeMap<String, String> =
            CONTRACTION_PAIRS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();

        let mut taken: std::collections::BTreeSet<String> = function_words
            .iter()
            .chain(&fillers)
            .cloned()
            .chain(dialect.keys().cloned())
            .chain(contractions.keys().cloned())
            .collect();
        let mut content_words = Vec::with_capacity(n_content);
        while content_words.len() < n_content {
            let syllables = if rng.gen::<f64>() < 0.6 { 1 } else { 2 };
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).unwrap());
                w.push_str(NUCLEI.choose(rng).unwrap());
                w.push_str(CODAS.choose(rng).unwrap());
            }
            if taken.insert(w.clone()) {
                content_words.push(w);
            }
        }
        Lexicon { content_words, function_words, fillers, dialect, contractions }
    }

    pub fn is_filler(&self, word: &str) -> bool {
        self.fillers.iter().any(|f| f == word)
    }

    pub fn is_function_word(&self, word: &str) -> bool {
        self.function_words.iter().any(|f| f == word)
    }

    /// Every spoken surface form, sorted: the prototype table is built over
    /// exactly this set.
    pub fn all_spoken_forms(&self) -> Vec<String> {
        let mut set: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        set.extend(self.content_words.iter().cloned());
        set.extend(self.function_words.iter().cloned());
        set.extend(self.fillers.iter().cloned());
        set.extend(self.dialect.keys().cloned());
        set.extend(self.contractions.keys().cloned());
        set.into_iter().collect()
    }
}
