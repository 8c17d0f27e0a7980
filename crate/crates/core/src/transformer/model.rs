use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::blocks::{positional_encoding, AttnMask, FeedForward, LayerNorm, Linear, MultiHeadAttn};
use super::config::{CrossMode, ModelConfig};
use crate::corpus::Features;
use crate::error::ModelError;
use crate::tensor::{Scalar, Tape, Tensor};
use crate::tokenizer::SOS_ID;

/// Forward-pass context: the tape plus dropout state. Evaluation passes use
/// [`FwdCtx::eval`]; training passes carry a seeded RNG so dropout masks are
/// reproducible.
pub struct FwdCtx<'a, S: Scalar> {
    pub tape: &'a Tape<S>,
    dropout_p: f64,
    rng: Option<&'a RefCell<ChaCha8Rng>>,
}

impl<'a, S: Scalar> FwdCtx<'a, S> {
    pub fn eval(tape: &'a Tape<S>) -> Self {
        FwdCtx { tape, dropout_p: 0.0, rng: None }
    }

    pub fn train(tape: &'a Tape<S>, dropout_p: f64, rng: &'a RefCell<ChaCha8Rng>) -> Self {
        FwdCtx { tape, dropout_p, rng: Some(rng) }
    }

    fn dropout(&self, x: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        match self.rng {
            Some(rng) if self.dropout_p > 0.0 => {
                Ok(self.tape.dropout(x, self.dropout_p, &mut rng.borrow_mut())?)
            }
            _ => Ok(x.clone()),
        }
    }
}

/// Which decoder a single-stream operation addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    Asr,
    Subtitle,
}

struct Subsampler<S: Scalar> {
    stage1: Linear<S>,
    stage2: Linear<S>,
    proj: Linear<S>,
}

impl<S: Scalar> Subsampler<S> {
    fn new(d_feat: usize, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Subsampler {
            stage1: Linear::new(2 * d_feat, d, rng),
            stage2: Linear::new(2 * d, d, rng),
            proj: Linear::new(d, d, rng),
        }
    }

    /// One stride-2 stage: adjacent frame pairs are stacked and projected,
    /// so the output length is floor(len/2); an odd trailing frame is dropped.
    fn stage(
        &self,
        ctx: &FwdCtx<S>,
        lin: &Linear<S>,
        x: &Tensor<S>,
    ) -> Result<Tensor<S>, ModelError> {
        let (t, d) = (x.rows(), x.cols());
        let pairs = t / 2;
        let head = ctx.tape.slice(x, 0, 0, pairs * 2)?;
        let stacked = ctx.tape.reshape(&head, &[pairs, 2 * d])?;
        Ok(ctx.tape.relu(&lin.forward(ctx, &stacked)?)?)
    }

    fn forward(&self, ctx: &FwdCtx<S>, feats: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        let h1 = self.stage(ctx, &self.stage1, feats)?;
        let h2 = self.stage(ctx, &self.stage2, &h1)?;
        self.proj.forward(ctx, &h2)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.stage1.visit(&format!("{prefix}.stage1"), f);
        self.stage2.visit(&format!("{prefix}.stage2"), f);
        self.proj.visit(&format!("{prefix}.proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.stage1.visit_mut(&format!("{prefix}.stage1"), f);
        self.stage2.visit_mut(&format!("{prefix}.stage2"), f);
        self.proj.visit_mut(&format!("{prefix}.proj"), f);
    }
}

struct EncoderLayer<S: Scalar> {
    ln1: LayerNorm<S>,
    self_attn: MultiHeadAttn<S>,
    ln2: LayerNorm<S>,
    ffn: FeedForward<S>,
}

impl<S: Scalar> EncoderLayer<S> {
    fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        EncoderLayer {
            ln1: LayerNorm::new(cfg.d_model),
            self_attn: MultiHeadAttn::new(cfg.d_model, cfg.n_heads, rng),
            ln2: LayerNorm::new(cfg.d_model),
            ffn: FeedForward::new(cfg.d_model, cfg.d_ff, rng),
        }
    }

    fn forward(&self, ctx: &FwdCtx<S>, x: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        let h = self.ln1.forward(ctx, x)?;
        let sa = self.self_attn.forward(ctx, &h, &h, None)?;
        let a = ctx.tape.add(x, &ctx.dropout(&sa)?)?;
        let h2 = self.ln2.forward(ctx, &a)?;
        let ff = self.ffn.forward(ctx, &h2)?;
        Ok(ctx.tape.add(&a, &ctx.dropout(&ff)?)?)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.ln1.visit(&format!("{prefix}.ln1"), f);
        self.self_attn.visit(&format!("{prefix}.self_attn"), f);
        self.ln2.visit(&format!("{prefix}.ln2"), f);
        self.ffn.visit(&format!("{prefix}.ffn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.ln1.visit_mut(&format!("{prefix}.ln1"), f);
        self.self_attn.visit_mut(&format!("{prefix}.self_attn"), f);
        self.ln2.visit_mut(&format!("{prefix}.ln2"), f);
        self.ffn.visit_mut(&format!("{prefix}.ffn"), f);
    }
}

struct CrossBlock<S: Scalar> {
    attn: MultiHeadAttn<S>,
    /// Present for concat merge only.
    merge: Option<Linear<S>>,
}

struct DecoderLayer<S: Scalar> {
    ln1: LayerNorm<S>,
    self_attn: MultiHeadAttn<S>,
    ln2: LayerNorm<S>,
    enc_attn: MultiHeadAttn<S>,
    ln3: LayerNorm<S>,
    ffn: FeedForward<S>,
    cross: Option<CrossBlock<S>>,
}

impl<S: Scalar> DecoderLayer<S> {
    fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let cross = match cfg.cross_mode {
            CrossMode::None => None,
            CrossMode::Sum => {
                let mut attn = MultiHeadAttn::new(cfg.d_model, cfg.n_heads, rng);
                // output projection starts at zero so a fresh cross model
                // computes exactly the independent-decoder function
                attn.wo = Linear::zeros(cfg.d_model, cfg.d_model);
                Some(CrossBlock { attn, merge: None })
            }
            CrossMode::Concat => {
                let attn = MultiHeadAttn::new(cfg.d_model, cfg.n_heads, rng);
                let merge = Linear::identity_top(2 * cfg.d_model, cfg.d_model);
                Some(CrossBlock { attn, merge: Some(merge) })
            }
        };
        DecoderLayer {
            ln1: LayerNorm::new(cfg.d_model),
            self_attn: MultiHeadAttn::new(cfg.d_model, cfg.n_heads, rng),
            ln2: LayerNorm::new(cfg.d_model),
            enc_attn: MultiHeadAttn::new(cfg.d_model, cfg.n_heads, rng),
            ln3: LayerNorm::new(cfg.d_model),
            ffn: FeedForward::new(cfg.d_model, cfg.d_ff, rng),
            cross: cross,
        }
    }

    /// `other`: the companion decoder's states entering the same layer depth,
    /// attended at synchronously-previous positions and merged with the
    /// self-attention output.
    fn forward(
        &self,
        ctx: &FwdCtx<S>,
        x: &Tensor<S>,
        enc: &Tensor<S>,
        other: Option<&Tensor<S>>,
    ) -> Result<Tensor<S>, ModelError> {
        let len = x.rows();
        let h = self.ln1.forward(ctx, x)?;
        let sa = self.self_attn.forward(ctx, &h, &h, Some(&AttnMask::causal(len)))?;
        let merged = match (&self.cross, other) {
            (Some(block), Some(other_states)) if other_states.rows() > 0 => {
                let mask = AttnMask::sync_cross(len, other_states.rows());
                let ca = block.attn.forward(ctx, &h, other_states, Some(&mask))?;
                match &block.merge {
                    None => ctx.tape.add(&sa, &ca)?,
                    Some(proj) => {
                        let cat = ctx.tape.concat(1, &[&sa, &ca])?;
                        proj.forward(ctx, &cat)?
                    }
                }
            }
            (Some(block), _) => {
                // companion stream absent: the cross contribution is empty
                match &block.merge {
                    None => sa,
                    Some(proj) => {
                        let zeros = Tensor::zeros(&[len, x.cols()]);
                        let cat = ctx.tape.concat(1, &[&sa, &zeros])?;
                        proj.forward(ctx, &cat)?
                    }
                }
            }
            (None, _) => sa,
        };
        let a = ctx.tape.add(x, &ctx.dropout(&merged)?)?;
        let h2 = self.ln2.forward(ctx, &a)?;
        let ea = self.enc_attn.forward(ctx, &h2, enc, None)?;
        let b = ctx.tape.add(&a, &ctx.dropout(&ea)?)?;
        let h3 = self.ln3.forward(ctx, &b)?;
        let ff = self.ffn.forward(ctx, &h3)?;
        Ok(ctx.tape.add(&b, &ctx.dropout(&ff)?)?)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.ln1.visit(&format!("{prefix}.ln1"), f);
        self.self_attn.visit(&format!("{prefix}.self_attn"), f);
        self.ln2.visit(&format!("{prefix}.ln2"), f);
        self.enc_attn.visit(&format!("{prefix}.enc_attn"), f);
        self.ln3.visit(&format!("{prefix}.ln3"), f);
        self.ffn.visit(&format!("{prefix}.ffn"), f);
        if let Some(c) = &self.cross {
            c.attn.visit(&format!("{prefix}.cross.attn"), f);
            if let Some(m) = &c.merge {
                m.visit(&format!("{prefix}.cross.merge"), f);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.ln1.visit_mut(&format!("{prefix}.ln1"), f);
        self.self_attn.visit_mut(&format!("{prefix}.self_attn"), f);
        self.ln2.visit_mut(&format!("{prefix}.ln2"), f);
        self.enc_attn.visit_mut(&format!("{prefix}.enc_attn"), f);
        self.ln3.visit_mut(&format!("{prefix}.ln3"), f);
        self.ffn.visit_mut(&format!("{prefix}.ffn"), f);
        if let Some(c) = &mut self.cross {
            c.attn.visit_mut(&format!("{prefix}.cross.attn"), f);
            if let Some(m) = &mut c.merge {
                m.visit_mut(&format!("{prefix}.cross.merge"), f);
            }
        }
    }
}

struct Decoder<S: Scalar> {
    embed: Tensor<S>,
    layers: Vec<DecoderLayer<S>>,
    final_ln: LayerNorm<S>,
    out: Linear<S>,
}

impl<S: Scalar> Decoder<S> {
    fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (cfg.vocab_size + cfg.d_model) as f64).sqrt();
        let values: Vec<S> = (0..cfg.vocab_size * cfg.d_model)
            .map(|_| S::from_f64c(rand::Rng::gen_range(rng, -limit..limit)))
            .collect();
        Decoder {
            embed: Tensor::param(&[cfg.vocab_size, cfg.d_model], values).unwrap(),
            layers: (0..cfg.dec_layers).map(|_| DecoderLayer::new(cfg, rng)).collect(),
            final_ln: LayerNorm::new(cfg.d_model),
            out: Linear::new(cfg.d_model, cfg.vocab_size, rng),
        }
    }

    fn embed_tokens(&self, ctx: &FwdCtx<S>, tokens: &[usize]) -> Result<Tensor<S>, ModelError> {
        let d = self.embed.cols();
        let e = ctx.tape.embedding_lookup(&self.embed, tokens)?;
        let scaled = ctx.tape.scale(&e, S::from_f64c((d as f64).sqrt()))?;
        let pe = positional_encoding::<S>(tokens.len(), d);
        let x = ctx.tape.add(&scaled, &pe)?;
        ctx.dropout(&x)
    }

    fn project(&self, ctx: &FwdCtx<S>, h: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        let n = self.final_ln.forward(ctx, h)?;
        self.out.forward(ctx, &n)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        f(format!("{prefix}.embed"), &self.embed);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&format!("{prefix}.layer{i}"), f);
        }
        self.final_ln.visit(&format!("{prefix}.final_ln"), f);
        self.out.visit(&format!("{prefix}.out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        f(format!("{prefix}.embed"), &mut self.embed);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&format!("{prefix}.layer{i}"), f);
        }
        self.final_ln.visit_mut(&format!("{prefix}.final_ln"), f);
        self.out.visit_mut(&format!("{prefix}.out"), f);
    }
}

/// Shared encoder, ASR decoder, subtitle decoder, CTC projection, and the
/// optional cross-connections between the decoders.
pub struct DualDecoderModel<S: Scalar> {
    pub config: ModelConfig,
    subsample: Subsampler<S>,
    enc_layers: Vec<EncoderLayer<S>>,
    enc_final_ln: LayerNorm<S>,
    asr_decoder: Decoder<S>,
    subtitle_decoder: Decoder<S>,
    ctc: Linear<S>,
    encoder_frozen: bool,
}

impl<S: Scalar> DualDecoderModel<S> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subsample = Subsampler::new(config.d_feat, config.d_model, &mut rng);
        let enc_layers = (0..config.enc_layers).map(|_| EncoderLayer::new(&config, &mut rng)).collect();
        let enc_final_ln = LayerNorm::new(config.d_model);
        let asr_decoder = Decoder::new(&config, &mut rng);
        let subtitle_decoder = Decoder::new(&config, &mut rng);
        let ctc = Linear::new(config.d_model, config.vocab_size, &mut rng);
        Ok(DualDecoderModel {
            config,
            subsample,
            enc_layers,
            enc_final_ln,
            asr_decoder,
            subtitle_decoder,
            ctc,
            encoder_frozen: false,
        })
    }

    /// Output length of the two stride-2 input stages: floor(frames / 4).
    pub fn subsampled_len(&self, frames: usize) -> usize {
        frames / 4
    }

    /// Minimum input length the subsampler accepts.
    pub fn min_frames(&self) -> usize {
        4
    }

    /// Runs the input stages and the self-attention stack on one utterance.
    /// Only the first `feats.frames` rows exist, so padding cannot leak in.
    pub fn encode(&self, ctx: &FwdCtx<S>, feats: &Features) -> Result<Tensor<S>, ModelError> {
        if feats.frames < self.min_frames() {
            return Err(ModelError::InputTooShort { got: feats.frames, min: self.min_frames() });
        }
        let values: Vec<S> = feats.data.iter().map(|&v| S::from_f64c(v)).collect();
        let x = Tensor::constant(&[feats.frames, feats.dim], values).map_err(ModelError::Tensor)?;
        let sub = self.subsample.forward(ctx, &x)?;
        let scaled = ctx.tape.scale(&sub, S::from_f64c((self.config.d_model as f64).sqrt()))?;
        let pe = positional_encoding::<S>(scaled.rows(), self.config.d_model);
        let mut h = ctx.dropout(&ctx.tape.add(&scaled, &pe)?)?;
        for layer in &self.enc_layers {
            h = layer.forward(ctx, &h)?;
        }
        self.enc_final_ln.forward(ctx, &h)
    }

    fn decoder(&self, which: DecoderKind) -> &Decoder<S> {
        match which {
            DecoderKind::Asr => &self.asr_decoder,
            DecoderKind::Subtitle => &self.subtitle_decoder,
        }
    }

    fn check_target(&self, input: &[usize]) -> Result<(), ModelError> {
        if input.first() != Some(&SOS_ID) {
            return Err(ModelError::MissingSos);
        }
        if input.len() > self.config.max_target_len {
            return Err(ModelError::TargetTooLong {
                got: input.len(),
                max: self.config.max_target_len,
            });
        }
        Ok(())
    }

    /// Teacher-forced single-decoder pass: causal self-attention over the
    /// sos-prefixed input, cross-attention to the encoder states, one logit
    /// row per input position. Cross-connections (if built) see an absent
    /// companion stream.
    pub fn decode_teacher_forced(
        &self,
        ctx: &FwdCtx<S>,
        which: DecoderKind,
        input: &[usize],
        enc: &Tensor<S>,
    ) -> Result<Tensor<S>, ModelError> {
        self.check_target(input)?;
        let dec = self.decoder(which);
        let mut h = dec.embed_tokens(ctx, input)?;
        for layer in &dec.layers {
            h = layer.forward(ctx, &h, enc, None)?;
        }
        dec.project(ctx, &h)
    }

    /// Synchronous pass through both decoders: at every layer depth each
    /// stream additionally cross-attends to the other stream's states from
    /// the previous depth, restricted to synchronously previous positions.
    /// Requires both target streams (parallel or pseudo-labeled data).
    pub fn decode_cross_connected(
        &self,
        ctx: &FwdCtx<S>,
        asr_input: &[usize],
        subtitle_input: &[usize],
        enc: &Tensor<S>,
    ) -> Result<(Tensor<S>, Tensor<S>), ModelError> {
        if self.config.cross_mode == CrossMode::None {
            return Err(ModelError::NoCrossConnections);
        }
        if asr_input.is_empty() || subtitle_input.is_empty() {
            return Err(ModelError::MissingTargetStream);
        }
        self.check_target(asr_input)?;
        self.check_target(subtitle_input)?;
        let mut ha = self.asr_decoder.embed_tokens(ctx, asr_input)?;
        let mut hs = self.subtitle_decoder.embed_tokens(ctx, subtitle_input)?;
        for (la, ls) in self.asr_decoder.layers.iter().zip(&self.subtitle_decoder.layers) {
            let next_a = la.forward(ctx, &ha, enc, Some(&hs))?;
            let next_s = ls.forward(ctx, &hs, enc, Some(&ha))?;
            ha = next_a;
            hs = next_s;
        }
        Ok((self.asr_decoder.project(ctx, &ha)?, self.subtitle_decoder.project(ctx, &hs)?))
    }

    /// Per-frame vocabulary logits from the encoder states (blank included).
    pub fn ctc_projection(&self, ctx: &FwdCtx<S>, enc: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        self.ctc.forward(ctx, enc)
    }

    /// Frozen parameters receive no optimizer updates; gradients may still be
    /// computed and are discarded.
    pub fn freeze_encoder(&mut self) {
        self.encoder_frozen = true;
    }

    pub fn unfreeze_encoder(&mut self) {
        self.encoder_frozen = false;
    }

    pub fn is_frozen(&self, param_name: &str) -> bool {
        self.encoder_frozen && param_name.starts_with("encoder.")
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.subsample.visit("encoder.subsample", f);
        for (i, l) in self.enc_layers.iter().enumerate() {
            l.visit(&format!("encoder.layer{i}"), f);
        }
        self.enc_final_ln.visit("encoder.final_ln", f);
        self.asr_decoder.visit("asr_decoder", f);
        self.subtitle_decoder.visit("subtitle_decoder", f);
        self.ctc.visit("ctc_proj", f);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.subsample.visit_mut("encoder.subsample", f);
        for (i, l) in self.enc_layers.iter_mut().enumerate() {
            l.visit_mut(&format!("encoder.layer{i}"), f);
        }
        self.enc_final_ln.visit_mut("encoder.final_ln", f);
        self.asr_decoder.visit_mut("asr_decoder", f);
        self.subtitle_decoder.visit_mut("subtitle_decoder", f);
        self.ctc.visit_mut("ctc_proj", f);
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t| out.push((name, t.clone())));
        out
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, t| n += t.numel());
        n
    }

    /// Zero every parameter gradient (between optimizer steps).
    pub fn zero_grads(&self) {
        self.visit_params(&mut |_, t| t.zero_grad());
    }

    /// Loads values for every parameter name present in `source`; names
    /// missing from `source` keep their current (fresh) initialization.
    /// Returns the names that were loaded.
    pub fn load_overlapping(
        &mut self,
        source: &std::collections::BTreeMap<String, (Vec<usize>, Vec<S>)>,
    ) -> Result<Vec<String>, ModelError> {
        let mut loaded = Vec::new();
        let mut err: Option<ModelError> = None;
        self.visit_params_mut(&mut |name, t| {
            if err.is_some() {
                return;
            }
            if let Some((shape, values)) = source.get(&name) {
                if shape != t.shape() {
                    err = Some(ModelError::InvalidConfig(format!(
                        "parameter {name}: checkpoint shape {shape:?} vs model {:?}",
                        t.shape()
                    )));
                    return;
                }
                match t.reparam(values.clone()) {
                    Ok(fresh) => {
                        *t = fresh;
                        loaded.push(name);
                    }
                    Err(e) => err = Some(ModelError::Tensor(e)),
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(loaded),
        }
    }

    /// Initialization from a single-decoder speech-recognition model: the
    /// encoder, CTC projection and ASR decoder load exactly; with
    /// `subtitle_from_asr` the subtitle decoder is seeded from the same ASR
    /// decoder weights; cross-connection parameters always keep their fresh
    /// initialization.
    pub fn init_from_asr_params(
        &mut self,
        source: &std::collections::BTreeMap<String, (Vec<usize>, Vec<S>)>,
        subtitle_from_asr: bool,
    ) -> Result<Vec<String>, ModelError> {
        let mut mapped = std::collections::BTreeMap::new();
        for (name, v) in source {
            if name.contains(".cross.") {
                continue;
            }
            if name.starts_with("encoder.") || name.starts_with("ctc_proj.") || name.starts_with("asr_decoder.") {
                mapped.insert(name.clone(), v.clone());
            }
            if subtitle_from_asr {
                if let Some(rest) = name.strip_prefix("asr_decoder.") {
                    mapped.insert(format!("subtitle_decoder.{rest}"), v.clone());
                }
            }
        }
        self.load_overlapping(&mapped)
    }

    /// Snapshot of every parameter as (shape, values).
    pub fn export_params(&self) -> std::collections::BTreeMap<String, (Vec<usize>, Vec<S>)> {
        let mut out = std::collections::BTreeMap::new();
        self.visit_params(&mut |name, t| {
            out.insert(name, (t.shape().to_vec(), t.values().to_vec()));
        });
        out
    }
}
