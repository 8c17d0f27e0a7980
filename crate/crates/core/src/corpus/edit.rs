use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Lexicon;

/// Turns a spoken word sequence into its subtitle form.
///
/// Edits are applied in order: (1) fillers removed, (2) immediate repetitions
/// collapsed, (3) dialect variants and contractions mapped to standard forms,
/// (4) each function word dropped with probability `p_compress`. Every edit
/// removes a word or substitutes one-for-one, so the output is never longer
/// than the input. The result may be empty when everything was filler; the
/// generator regenerates such utterances.
pub fn subtitle_edit(
    spoken: &[String],
    lexicon: &Lexicon,
    p_compress: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let no_fillers: Vec<&String> = spoken.iter().filter(|w| !lexicon.is_filler(w)).collect();

    let mut collapsed: Vec<&String> = Vec::with_capacity(no_fillers.len());
    for w in no_fillers {
        if collapsed.last().map(|p| *p == w) != Some(true) {
            collapsed.push(w);
        }
    }

    let standardized: Vec<String> = collapsed
        .into_iter()
        .map(|w| {
            lexicon
                .dialect
                .get(w)
                .or_else(|| lexicon.contractions.get(w))
                .unwrap_or(w)
                .clone()
        })
        .collect();

    standardized
        .into_iter()
        .filter(|w| !(lexicon.is_function_word(w) && rng.gen::<f64>() < p_compress))
        .collect()
}
