use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    derive_seed, edit::subtitle_edit, features::synthesize_features, features::write_feature_file,
    manifest::write_manifest, manifest::ManifestEntry, Lexicon, Task,
};
use rand::SeedableRng;

use crate::error::CorpusError;

/// Knobs of the synthetic corpus. Everything downstream is a pure function of
/// this struct plus the seed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub d_feat: usize,
    pub n_content_words: usize,
    pub n_verbatim_train: usize,
    pub n_subtitle_train: usize,
    pub n_clean_dev: usize,
    pub n_spont_annot: usize,
    /// Fraction of verbatim-train utterances generated in spontaneous style.
    pub spont_fraction: f64,
    pub words_min: usize,
    pub words_max: usize,
    pub dur_min: usize,
    pub dur_max: usize,
    pub noise_clean: f64,
    pub noise_spont: f64,
    /// Max boundary jitter (frames per side) for subtitle segments.
    pub jitter: usize,
    /// Per-gap probability of inserting a filler in spontaneous speech.
    pub p_filler: f64,
    /// Per-word probability of stammering (immediate repetition).
    pub p_repeat: f64,
    /// Probability of using the dialect variant of an eligible word.
    pub p_dialect: f64,
    /// Probability of contracting an eligible word.
    pub p_contract: f64,
    /// Per-function-word drop probability in subtitle editing.
    pub p_compress: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 0,
            d_feat: 16,
            n_content_words: 36,
            n_verbatim_train: 600,
            n_subtitle_train: 900,
            n_clean_dev: 120,
            n_spont_annot: 160,
            spont_fraction: 0.25,
            words_min: 3,
            words_max: 7,
            dur_min: 6,
            dur_max: 10,
            noise_clean: 0.3,
            noise_spont: 0.6,
            jitter: 3,
            p_filler: 0.22,
            p_repeat: 0.12,
            p_dialect: 0.5,
            p_contract: 0.5,
            p_compress: 0.15,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidConfig(m.to_string()));
        if self.d_feat == 0 {
            return bad("d_feat must be positive");
        }
        if self.n_content_words == 0 {
            return bad("n_content_words must be positive");
        }
        if self.words_min == 0 || self.words_min > self.words_max {
            return bad("need 1 <= words_min <= words_max");
        }
        if self.dur_min == 0 || self.dur_min > self.dur_max {
            return bad("need 1 <= dur_min <= dur_max");
        }
        for (name, p) in [
            ("spont_fraction", self.spont_fraction),
            ("p_filler", self.p_filler),
            ("p_repeat", self.p_repeat),
            ("p_dialect", self.p_dialect),
            ("p_contract", self.p_contract),
            ("p_compress", self.p_compress),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::InvalidConfig(format!("{name} must be in [0,1]")));
            }
        }
        if self.noise_clean < 0.0 || self.noise_spont < 0.0 {
            return bad("noise sigmas must be non-negative");
        }
        Ok(())
    }
}

/// In-memory summary of a generated corpus.
pub struct GeneratedCorpus {
    pub lexicon: Lexicon,
    pub prototypes: BTreeMap<String, Vec<f64>>,
    pub manifests: BTreeMap<&'static str, PathBuf>,
}

/// Names of the generated manifests.
pub const VERBATIM_TRAIN: &str = "verbatim-train";
pub const SUBTITLE_TRAIN: &str = "subtitle-train";
pub const CLEAN_DEV: &str = "clean-dev";
pub const SPONT_ANNOT: &str = "spont-annot";

#[derive(Clone, Copy, PartialEq)]
enum Style {
    Clean,
    Spontaneous,
}

/// One spoken utterance: the word sequence actually "said".
fn spoken_utterance(lex: &Lexicon, cfg: &CorpusConfig, style: Style, rng: &mut ChaCha8Rng) -> Vec<String> {
    let n_words = rng.gen_range(cfg.words_min..=cfg.words_max);
    let mut spoken: Vec<String> = Vec::new();
    for _ in 0..n_words {
        if style == Style::Spontaneous && rng.gen::<f64>() < cfg.p_filler {
            spoken.push(lex.fillers[rng.gen_range(0..lex.fillers.len())].clone());
        }
        let base = if rng.gen::<f64>() < 0.4 {
            lex.function_words[rng.gen_range(0..lex.function_words.len())].clone()
        } else {
            lex.content_words[rng.gen_range(0..lex.content_words.len())].clone()
        };
        let word = if style == Style::Spontaneous {
            let dialect_variant = lex.dialect.iter().find(|(_, std)| **std == base);
            let contraction = lex.contractions.iter().find(|(_, full)| **full == base);
            if let Some((var, _)) = dialect_variant.filter(|_| rng.gen::<f64>() < cfg.p_dialect) {
                var.clone()
            } else if let Some((c, _)) = contraction.filter(|_| rng.gen::<f64>() < cfg.p_contract) {
                c.clone()
            } else {
                base
            }
        } else {
            base
        };
        spoken.push(word.clone());
        if style == Style::Spontaneous && rng.gen::<f64>() < cfg.p_repeat {
            spoken.push(word);
        }
    }
    spoken
}

/// Generates the four splits and writes manifests plus one feature file per
/// utterance under `out_dir`. Deterministic: same config and seed give
/// byte-identical output.
pub fn generate_corpus(cfg: &CorpusConfig, out_dir: &Path) -> Result<GeneratedCorpus, CorpusError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir.join("feats"))?;

    let mut lex_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, 0));
    let lexicon = Lexicon::generate(cfg.n_content_words, &mut lex_rng);

    let mut proto_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2, 0));
    let mut prototypes: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for word in lexicon.all_spoken_forms() {
        let proto: Vec<f64> =
            (0..cfg.d_feat).map(|_| StandardNormal.sample(&mut proto_rng)).collect();
        prototypes.insert(word, proto);
    }

    // (manifest name, prefix, count, style, task, stream tag)
    let splits: [(&'static str, &str, usize, Style, Task, u64); 4] = [
        (VERBATIM_TRAIN, "vt", cfg.n_verbatim_train, Style::Clean, Task::Verbatim, 10),
        (SUBTITLE_TRAIN, "st", cfg.n_subtitle_train, Style::Spontaneous, Task::Subtitled, 11),
        (CLEAN_DEV, "cd", cfg.n_clean_dev, Style::Clean, Task::Verbatim, 12),
        (SPONT_ANNOT, "sa", cfg.n_spont_annot, Style::Spontaneous, Task::Parallel, 13),
    ];

    let mut manifests = BTreeMap::new();
    for (name, prefix, count, base_style, task, tag) in splits {
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tag, i as u64));
            // part of verbatim-train mirrors the spontaneous portion of the
            // speech database
            let style = if name == VERBATIM_TRAIN && rng.gen::<f64>() < cfg.spont_fraction {
                Style::Spontaneous
            } else {
                base_style
            };
            // regenerate until the subtitle edit leaves something behind
            let (spoken, subtitle) = loop {
                let spoken = spoken_utterance(&lexicon, cfg, style, &mut rng);
                if !task.has_subtitle() {
                    break (spoken, None);
                }
                let subtitle = subtitle_edit(&spoken, &lexicon, cfg.p_compress, &mut rng);
                if !subtitle.is_empty() {
                    break (spoken, Some(subtitle));
                }
            };
            let sigma = match style {
                Style::Clean => cfg.noise_clean,
                Style::Spontaneous => cfg.noise_spont,
            };
            // subtitle segments carry boundary jitter; verbatim ones are cut
            // exactly
            let jitter = if task == Task::Subtitled { cfg.jitter } else { 0 };
            let feats = synthesize_features(
                &spoken,
                &prototypes,
                cfg.dur_min,
                cfg.dur_max,
                sigma,
                jitter,
                &mut rng,
            )?;
            let id = format!("{prefix}-{i:05}");
            let rel_path = format!("feats/{id}.bin");
            write_feature_file(&out_dir.join(&rel_path), &feats)?;
            entries.push(ManifestEntry {
                id,
                feature_path: rel_path,
                task,
                verbatim: task.has_verbatim().then(|| spoken.join(" ")),
                subtitle: subtitle.map(|s| s.join(" ")),
                pseudo: None,
            });
        }
        let path = out_dir.join(format!("{name}.tsv"));
        write_manifest(&path, &entries)?;
        manifests.insert(name, path);
    }

    Ok(GeneratedCorpus { lexicon, prototypes, manifests })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> CorpusConfig {
        CorpusConfig {
            n_verbatim_train: 12,
            n_subtitle_train: 12,
            n_clean_dev: 6,
            n_spont_annot: 6,
            n_content_words: 12,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn deterministic_output() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_corpus(&tiny_cfg(), d1.path()).unwrap();
        generate_corpus(&tiny_cfg(), d2.path()).unwrap();
        for name in [VERBATIM_TRAIN, SUBTITLE_TRAIN, CLEAN_DEV, SPONT_ANNOT] {
            let a = std::fs::read(d1.path().join(format!("{name}.tsv"))).unwrap();
            let b = std::fs::read(d2.path().join(format!("{name}.tsv"))).unwrap();
            assert_eq!(a, b, "manifest {name} differs between runs");
        }
        // spot-check a feature file byte-for-byte
        let a = std::fs::read(d1.path().join("feats/vt-00000.bin")).unwrap();
        let b = std::fs::read(d2.path().join("feats/vt-00000.bin")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_shapes_and_tasks() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate_corpus(&tiny_cfg(), dir.path()).unwrap();
        let vt = super::super::read_manifest(&out.manifests[VERBATIM_TRAIN]).unwrap();
        assert_eq!(vt.len(), 12);
        assert!(vt.iter().all(|e| e.task == Task::Verbatim && e.subtitle.is_none()));
        let st = super::super::read_manifest(&out.manifests[SUBTITLE_TRAIN]).unwrap();
        assert!(st.iter().all(|e| e.task == Task::Subtitled && e.verbatim.is_none()));
        let sa = super::super::read_manifest(&out.manifests[SPONT_ANNOT]).unwrap();
        assert!(sa.iter().all(|e| e.task == Task::Parallel));
        // features exist and parse
        for e in vt.iter().chain(&st) {
            let f = super::super::read_feature_file(&dir.path().join(&e.feature_path)).unwrap();
            assert!(f.frames >= 1);
            assert_eq!(f.dim, 16);
            assert!(f.data.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn subtitle_text_is_edited_spoken_text() {
        // spontaneous eval split carries both the spoken words and their
        // subtitle edit, so the pair must be consistent with the operators
        let dir = tempfile::tempdir().unwrap();
        let out = generate_corpus(&tiny_cfg(), dir.path()).unwrap();
        let sa = super::super::read_manifest(&out.manifests[SPONT_ANNOT]).unwrap();
        for e in &sa {
            let spoken: Vec<&str> = e.verbatim.as_deref().unwrap().split(' ').collect();
            let sub: Vec<&str> = e.subtitle.as_deref().unwrap().split(' ').collect();
            assert!(sub.len() <= spoken.len());
            for w in &sub {
                assert!(!out.lexicon.is_filler(w), "filler {w} survived editing");
                assert!(!out.lexicon.dialect.contains_key(*w), "dialect form {w} survived");
                assert!(!out.lexicon.contractions.contains_key(*w), "contraction {w} survived");
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = CorpusConfig { words_min: 5, words_max: 3, ..CorpusConfig::default() };
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            generate_corpus(&cfg, dir.path()),
            Err(CorpusError::InvalidConfig(_))
        ));
    }
}
