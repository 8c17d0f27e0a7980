use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// How the cross-decoder attention output is merged with the decoder's own
/// self-attention output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossMode {
    None,
    Sum,
    Concat,
}

impl CrossMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(CrossMode::None),
            "sum" => Some(CrossMode::Sum),
            "concat" => Some(CrossMode::Concat),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CrossMode::None => "none",
            CrossMode::Sum => "sum",
            CrossMode::Concat => "concat",
        }
    }
}

/// Architecture hyperparameters. Checkpoints embed this struct and refuse to
/// load into a different one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub enc_layers: usize,
    /// Layers per decoder.
    pub dec_layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub d_feat: usize,
    /// Total time subsampling of the two stride-2 input stages.
    pub subsample_factor: usize,
    pub cross_mode: CrossMode,
    pub max_target_len: usize,
}

impl ModelConfig {
    /// Desk-scale defaults: small enough to train in minutes on a CPU.
    pub fn desk_default(vocab_size: usize, d_feat: usize) -> Self {
        ModelConfig {
            d_model: 32,
            n_heads: 2,
            enc_layers: 2,
            dec_layers: 2,
            d_ff: 64,
            dropout: 0.1,
            vocab_size,
            d_feat,
            subsample_factor: 4,
            cross_mode: CrossMode::None,
            max_target_len: 256,
        }
    }

    /// Reference configuration at publication scale: 12 encoder layers, two
    /// 6-layer decoders, d_model 256, 4 heads, 2048 linear units, 83-dim
    /// input features, 5000 subword targets. Recorded for documentation; not
    /// used by the desk pipeline.
    pub fn paper_reference() -> Self {
        ModelConfig {
            d_model: 256,
            n_heads: 4,
            enc_layers: 12,
            dec_layers: 6,
            d_ff: 2048,
            dropout: 0.1,
            vocab_size: 5000,
            d_feat: 83,
            subsample_factor: 4,
            cross_mode: CrossMode::None,
            max_target_len: 512,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} must be a positive multiple of n_heads {}", self.d_model, self.n_heads));
        }
        if self.subsample_factor != 4 {
            return bad(format!(
                "subsample_factor {} unsupported: the input layer is two stride-2 stages (factor 4)",
                self.subsample_factor
            ));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return bad("need at least one encoder and one decoder layer".into());
        }
        if self.d_ff == 0 || self.d_feat == 0 {
            return bad("d_ff and d_feat must be positive".into());
        }
        if self.vocab_size < crate::tokenizer::NUM_RESERVED {
            return bad(format!("vocab_size {} smaller than reserved id count", self.vocab_size));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.max_target_len == 0 {
            return bad("max_target_len must be positive".into());
        }
        Ok(())
    }

    /// Closed-form parameter count; kept in sync with the registry by test.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let v = self.vocab_size;
        let linear = |i: usize, o: usize| i * o + o;
        let attn = 4 * linear(d, d);
        let ln = 2 * d;
        let ffn = linear(d, self.d_ff) + linear(self.d_ff, d);
        let enc_layer = attn + ffn + 2 * ln;
        let subsample = linear(2 * self.d_feat, d) + linear(2 * d, d) + linear(d, d);
        let encoder = subsample + self.enc_layers * enc_layer + ln;
        let cross_extra = match self.cross_mode {
            CrossMode::None => 0,
            CrossMode::Sum => attn,
            CrossMode::Concat => attn + linear(2 * d, d),
        };
        let dec_layer = 2 * attn + ffn + 3 * ln + cross_extra;
        let decoder = v * d + self.dec_layers * dec_layer + ln + linear(d, v);
        encoder + 2 * decoder + linear(d, v)
    }
}
