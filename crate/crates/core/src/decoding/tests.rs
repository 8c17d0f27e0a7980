use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::Features;
use crate::losses::ctc_loss_brute_force;
use crate::tensor::{Tape, Tensor};
use crate::tokenizer::{EOS_ID, SOS_ID, UNK_ID};
use crate::transformer::{CrossMode, FwdCtx, ModelConfig};

const V: usize = 8; // 5 reserved + tokens {5,6,7}; unk is also emittable

fn tiny_config(cross: CrossMode) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        enc_layers: 1,
        dec_layers: 1,
        d_ff: 12,
        dropout: 0.0,
        vocab_size: V,
        d_feat: 4,
        subsample_factor: 4,
        cross_mode: cross,
        max_target_len: 64,
    }
}

fn model(cross: CrossMode, seed: u64) -> DualDecoderModel<f64> {
    DualDecoderModel::new(tiny_config(cross), seed).unwrap()
}

fn feats(frames: usize, seed: u64) -> Features {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Features { frames, dim: 4, data: (0..frames * 4).map(|_| rng.gen_range(-1.0..1.0)).collect() }
}

/// All emittable sequences up to `max_len` over the non-reserved alphabet
/// (plus unk, which decoders may produce).
fn all_sequences(max_len: usize) -> Vec<Vec<usize>> {
    let alphabet = [UNK_ID, 5, 6, 7];
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            for &c in &alphabet {
                let mut s = seq.clone();
                s.push(c);
                out.push(s.clone());
                next.push(s);
            }
        }
        frontier = next;
    }
    out
}

/// Independent complete-sequence score: teacher-forced attention log-prob sum
/// (eos included) plus the brute-force CTC full-sequence log-likelihood.
fn oracle_score(
    m: &DualDecoderModel<f64>,
    which: DecoderKind,
    f: &Features,
    seq: &[usize],
    lambda: f64,
) -> f64 {
    let tape = Tape::inference();
    let ctx = FwdCtx::eval(&tape);
    let enc = m.encode(&ctx, f).unwrap();
    let mut input = vec![SOS_ID];
    input.extend_from_slice(seq);
    let logits = m.decode_teacher_forced(&ctx, which, &input, &enc).unwrap();
    let mut att = 0.0;
    for (i, &target) in seq.iter().chain(std::iter::once(&EOS_ID)).enumerate() {
        let row: Vec<f64> = logits.values()[i * V..(i + 1) * V].to_vec();
        att += beam::log_softmax_f64(&row)[target];
    }
    if which != DecoderKind::Asr || lambda == 0.0 {
        return att;
    }
    let frame_logits = m.ctc_projection(&ctx, &enc).unwrap();
    let mut lp = Vec::new();
    for t in 0..frame_logits.rows() {
        let row: Vec<f64> = frame_logits.values()[t * V..(t + 1) * V].to_vec();
        lp.extend(beam::log_softmax_f64(&row));
    }
    let lp_t = Tensor::constant(&[frame_logits.rows(), V], lp).unwrap();
    let ctc_full = -ctc_loss_brute_force(&lp_t, seq);
    (1.0 - lambda) * att + lambda * ctc_full
}

use super::beam;
use crate::transformer::{DecoderKind, DualDecoderModel};

#[test]
fn beam_one_equals_greedy() {
    for seed in 0..8 {
        let m = model(CrossMode::None, seed);
        let f = feats(10 + (seed as usize % 3) * 4, seed + 100);
        for which in [DecoderKind::Asr, DecoderKind::Subtitle] {
            let cfg = BeamConfig { beam: 1, lambda_ctc: 0.3, max_len_ratio: 1.5 };
            let beam = beam_search(&m, which, &f, &cfg).unwrap();
            let greedy = greedy_decode(&m, which, &f, 0.3, 1.5).unwrap();
            assert_eq!(beam[0].tokens, greedy.tokens, "seed {seed} {which:?}");
            assert!((beam[0].score - greedy.score).abs() < 1e-9);
        }
    }
}

#[test]
fn exhaustive_beam_matches_enumeration() {
    // frames 8..11 subsample to 2, so the cap is 3 tokens; an over-wide beam
    // must return the true argmax over every sequence
    for seed in 0..4 {
        let m = model(CrossMode::None, seed + 40);
        let f = feats(8 + seed as usize, seed + 200);
        let lambda = 0.3;
        let cfg = BeamConfig { beam: 4096, lambda_ctc: lambda, max_len_ratio: 1.5 };
        let result = beam_search(&m, DecoderKind::Asr, &f, &cfg).unwrap();

        let mut scored: Vec<(f64, Vec<usize>)> = all_sequences(3)
            .into_iter()
            .map(|seq| (oracle_score(&m, DecoderKind::Asr, &f, &seq, lambda), seq))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

        assert_eq!(result[0].tokens, scored[0].1, "seed {seed}");
        assert!((result[0].score - scored[0].0).abs() < 1e-6, "seed {seed}");
        // the top of the returned list agrees with the enumeration ranking
        for (r, s) in result.iter().zip(scored.iter()).take(3) {
            assert_eq!(r.tokens, s.1);
            assert!((r.score - s.0).abs() < 1e-6);
        }
    }
}

#[test]
fn beam_growth_never_hurts_best_score() {
    for seed in 0..6 {
        let m = model(CrossMode::None, seed + 70);
        let f = feats(12, seed + 300);
        let mut prev = f64::NEG_INFINITY;
        for beam in [1, 2, 4, 8, 16] {
            let cfg = BeamConfig { beam, lambda_ctc: 0.3, max_len_ratio: 1.5 };
            let best = beam_search(&m, DecoderKind::Asr, &f, &cfg).unwrap()[0].score;
            assert!(
                best >= prev - 1e-12,
                "seed {seed}: beam {beam} best {best} < previous {prev}"
            );
            prev = best;
        }
    }
}

#[test]
fn decoding_is_deterministic() {
    let m = model(CrossMode::None, 5);
    let f = feats(14, 55);
    let cfg = BeamConfig { beam: 4, lambda_ctc: 0.3, max_len_ratio: 1.5 };
    let a = beam_search(&m, DecoderKind::Asr, &f, &cfg).unwrap();
    let b = beam_search(&m, DecoderKind::Asr, &f, &cfg).unwrap();
    let ta: Vec<_> = a.iter().map(|s| (s.tokens.clone(), s.score)).collect();
    let tb: Vec<_> = b.iter().map(|s| (s.tokens.clone(), s.score)).collect();
    assert_eq!(ta, tb);
}

#[test]
fn subtitle_decoding_uses_pure_attention() {
    let m = model(CrossMode::None, 6);
    let f = feats(12, 66);
    let cfg = BeamConfig { beam: 3, lambda_ctc: 0.3, max_len_ratio: 1.5 };
    let subs = beam_search(&m, DecoderKind::Subtitle, &f, &cfg).unwrap();
    for s in &subs {
        assert_eq!(s.ctc_score, 0.0);
        assert!((s.score - s.att_score).abs() < 1e-12);
    }
}

#[test]
fn zero_beam_rejected() {
    let m = model(CrossMode::None, 7);
    let cfg = BeamConfig { beam: 0, lambda_ctc: 0.3, max_len_ratio: 1.5 };
    assert!(matches!(
        beam_search(&m, DecoderKind::Asr, &feats(8, 1), &cfg),
        Err(DecodeError::ZeroBeam)
    ));
}

// -- tuple search ------------------------------------------------------------

/// Independent tuple score: teacher-forced synchronous forward, per-position
/// log-prob pickup with eos, brute-force CTC for the ASR stream.
fn oracle_tuple_score(
    m: &DualDecoderModel<f64>,
    f: &Features,
    a_seq: &[usize],
    s_seq: &[usize],
    cfg: &TupleConfig,
) -> f64 {
    let tape = Tape::inference();
    let ctx = FwdCtx::eval(&tape);
    let enc = m.encode(&ctx, f).unwrap();
    let mut a_in = vec![SOS_ID];
    a_in.extend_from_slice(a_seq);
    let mut s_in = vec![SOS_ID];
    s_in.extend_from_slice(s_seq);
    let (la, ls) = m.decode_cross_connected(&ctx, &a_in, &s_in, &enc).unwrap();
    let pick = |logits: &Tensor<f64>, seq: &[usize]| -> f64 {
        let mut total = 0.0;
        for (i, &target) in seq.iter().chain(std::iter::once(&EOS_ID)).enumerate() {
            let row: Vec<f64> = logits.values()[i * V..(i + 1) * V].to_vec();
            total += beam::log_softmax_f64(&row)[target];
        }
        total
    };
    let att_a = pick(&la, a_seq);
    let att_s = pick(&ls, s_seq);
    let frame_logits = m.ctc_projection(&ctx, &enc).unwrap();
    let mut lp = Vec::new();
    for t in 0..frame_logits.rows() {
        let row: Vec<f64> = frame_logits.values()[t * V..(t + 1) * V].to_vec();
        lp.extend(beam::log_softmax_f64(&row));
    }
    let lp_t = Tensor::constant(&[frame_logits.rows(), V], lp).unwrap();
    let ctc_full = -ctc_loss_brute_force(&lp_t, a_seq);
    let score_a = (1.0 - cfg.lambda_ctc) * att_a + cfg.lambda_ctc * ctc_full;
    cfg.w_asr * score_a + cfg.w_subs * att_s
}

fn opened_cross_model(seed: u64) -> DualDecoderModel<f64> {
    let mut m = model(CrossMode::Sum, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    m.visit_params_mut(&mut |name, t| {
        if name.contains(".cross.attn.wo.") {
            let values: Vec<f64> = (0..t.numel()).map(|_| rng.gen_range(-0.4..0.4)).collect();
            *t = t.reparam(values).unwrap();
        }
    });
    m
}

#[test]
fn exhaustive_tuple_search_matches_enumeration() {
    for seed in 0..3 {
        let m = opened_cross_model(seed + 20);
        // 4..=7 frames subsample to 1; ratio 2 caps both streams at 2 tokens
        let f = feats(5 + seed as usize, seed + 400);
        let cfg = TupleConfig {
            beam: 4096,
            w_asr: 0.5,
            w_subs: 0.5,
            lambda_ctc: 0.3,
            max_len_ratio: 2.0,
            per_stream_k: Some(8),
        };
        let result = tuple_beam_search(&m, &f, &cfg).unwrap();

        let seqs = all_sequences(2);
        let mut scored: Vec<(f64, Vec<usize>, Vec<usize>)> = Vec::new();
        for a in &seqs {
            for s in &seqs {
                scored.push((oracle_tuple_score(&m, &f, a, s, &cfg), a.clone(), s.clone()));
            }
        }
        scored.sort_by(|x, y| {
            y.0.total_cmp(&x.0).then_with(|| x.1.cmp(&y.1)).then_with(|| x.2.cmp(&y.2))
        });

        assert_eq!(result[0].asr.tokens, scored[0].1, "seed {seed}");
        assert_eq!(result[0].subtitle.tokens, scored[0].2, "seed {seed}");
        assert!((result[0].score - scored[0].0).abs() < 1e-6, "seed {seed}");
    }
}

#[test]
fn tuple_with_zero_subtitle_weight_ranks_like_single_stream() {
    // on a fresh cross model (zero-initialized connections) the ASR stream's
    // distributions are independent of the companion, so with w_subs = 0 the
    // distinct ASR sequences must come out in single-stream order
    let m = model(CrossMode::Sum, 31);
    let f = feats(9, 77);
    let tuple_cfg = TupleConfig {
        beam: 4096,
        w_asr: 1.0,
        w_subs: 0.0,
        lambda_ctc: 0.3,
        max_len_ratio: 1.5,
        per_stream_k: Some(8),
    };
    let tuples = tuple_beam_search(&m, &f, &tuple_cfg).unwrap();
    let beam_cfg = BeamConfig { beam: 4096, lambda_ctc: 0.3, max_len_ratio: 1.5 };
    let single = beam_search(&m, DecoderKind::Asr, &f, &beam_cfg).unwrap();

    let mut seen = std::collections::HashSet::new();
    let distinct_asr: Vec<Vec<usize>> = tuples
        .iter()
        .filter(|p| seen.insert(p.asr.tokens.clone()))
        .map(|p| p.asr.tokens.clone())
        .collect();
    assert_eq!(distinct_asr[0], single[0].tokens, "argmax must agree");
    for (t, s) in distinct_asr.iter().zip(single.iter()).take(3) {
        assert_eq!(t, &s.tokens);
    }
}

#[test]
fn tuple_both_streams_eos_immediately() {
    let mut m = model(CrossMode::Sum, 32);
    // bias both output layers hard toward eos
    m.visit_params_mut(&mut |name, t| {
        if name.ends_with(".out.b") {
            let mut values = t.values().to_vec();
            values[EOS_ID] = 50.0;
            *t = t.reparam(values).unwrap();
        }
    });
    let cfg = TupleConfig { beam: 1, ..TupleConfig::default() };
    let result = tuple_beam_search(&m, &feats(10, 88), &cfg).unwrap();
    assert_eq!(result.len(), 1);
    assert!(result[0].asr.tokens.is_empty());
    assert!(result[0].subtitle.tokens.is_empty());
    // wider beams still rank the empty tuple first
    let wide = tuple_beam_search(&m, &feats(10, 88), &TupleConfig::default()).unwrap();
    assert!(wide[0].asr.tokens.is_empty() && wide[0].subtitle.tokens.is_empty());
}

#[test]
fn tuple_requires_cross_connections() {
    let m = model(CrossMode::None, 33);
    assert!(matches!(
        tuple_beam_search(&m, &feats(8, 1), &TupleConfig::default()),
        Err(DecodeError::Model(crate::error::ModelError::NoCrossConnections))
    ));
}

#[test]
fn tuple_freezes_finished_stream() {
    // rig the subtitle decoder to finish immediately; the asr stream must
    // still produce output and the subtitle stay empty
    let mut m = opened_cross_model(35);
    m.visit_params_mut(&mut |name, t| {
        if name == "subtitle_decoder.out.b" {
            let mut values = t.values().to_vec();
            values[EOS_ID] = 50.0;
            *t = t.reparam(values).unwrap();
        }
    });
    let cfg = TupleConfig { beam: 4, ..TupleConfig::default() };
    let result = tuple_beam_search(&m, &feats(16, 99), &cfg).unwrap();
    assert!(result[0].subtitle.tokens.is_empty());
}

#[test]
fn nbest_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hyp.txt");
    let blocks = vec![
        ("utt-1".to_string(), vec![(-1.25, "het is goed".to_string()), (-2.5, "het is".to_string())]),
        ("utt-2".to_string(), vec![(-0.5, "".to_string())]),
    ];
    write_nbest(&path, &blocks).unwrap();
    let back = read_nbest(&path).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].0, "utt-1");
    assert_eq!(back[0].1.len(), 2);
    assert_eq!(back[0].1[1].1, "het is");
    assert_eq!(back[1].1[0].1, "");
    let best = best_map(&back);
    assert_eq!(best["utt-1"], "het is goed");
}
