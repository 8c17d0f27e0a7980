//! Parameter containers and sublayer forward passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::model::FwdCtx;
use crate::error::ModelError;
use crate::tensor::{Scalar, Tensor};

pub(crate) const LN_EPS: f64 = 1e-5;
/// Additive mask value: large enough that softmax zeroes the position, small
/// enough to stay finite in 32-bit mode.
pub(crate) const MASK_FILL: f64 = -1e9;

fn xavier<S: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let values: Vec<S> =
        (0..rows * cols).map(|_| S::from_f64c(rng.gen_range(-limit..limit))).collect();
    Tensor::param(&[rows, cols], values).expect("finite init")
}

pub(crate) struct Linear<S: Scalar> {
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: xavier(d_in, d_out, rng),
            b: Tensor::param(&[d_out], vec![S::zero(); d_out]).unwrap(),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Linear {
            w: Tensor::param(&[d_in, d_out], vec![S::zero(); d_in * d_out]).unwrap(),
            b: Tensor::param(&[d_out], vec![S::zero(); d_out]).unwrap(),
        }
    }

    /// Identity on the first `d_out` input dims, zeros on the rest: the
    /// fresh-initialization contract of the concat merge projection.
    pub fn identity_top(d_in: usize, d_out: usize) -> Self {
        let mut values = vec![S::zero(); d_in * d_out];
        for i in 0..d_out.min(d_in) {
            values[i * d_out + i] = S::one();
        }
        Linear {
            w: Tensor::param(&[d_in, d_out], values).unwrap(),
            b: Tensor::param(&[d_out], vec![S::zero(); d_out]).unwrap(),
        }
    }

    pub fn forward(&self, ctx: &FwdCtx<S>, x: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        Ok(ctx.tape.add_row(&ctx.tape.matmul(x, &self.w)?, &self.b)?)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        f(format!("{prefix}.w"), &self.w);
        f(format!("{prefix}.b"), &self.b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        f(format!("{prefix}.w"), &mut self.w);
        f(format!("{prefix}.b"), &mut self.b);
    }
}

pub(crate) struct LayerNorm<S: Scalar> {
    pub gain: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> LayerNorm<S> {
    pub fn new(d: usize) -> Self {
        LayerNorm {
            gain: Tensor::param(&[d], vec![S::one(); d]).unwrap(),
            bias: Tensor::param(&[d], vec![S::zero(); d]).unwrap(),
        }
    }

    pub fn forward(&self, ctx: &FwdCtx<S>, x: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        Ok(ctx.tape.layer_norm(x, &self.gain, &self.bias, S::from_f64c(LN_EPS))?)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        f(format!("{prefix}.gain"), &self.gain);
        f(format!("{prefix}.bias"), &self.bias);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        f(format!("{prefix}.gain"), &mut self.gain);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

/// `true` entries are blocked from attending.
pub(crate) struct AttnMask {
    pub blocked: Vec<bool>,
    pub q_len: usize,
    pub kv_len: usize,
}

impl AttnMask {
    /// Causal self-attention: position i sees positions <= i.
    pub fn causal(len: usize) -> AttnMask {
        let mut blocked = vec![false; len * len];
        for i in 0..len {
            for j in i + 1..len {
                blocked[i * len + j] = true;
            }
        }
        AttnMask { blocked, q_len: len, kv_len: len }
    }

    /// Synchronous cross-decoder attention: emission position i sees the
    /// other stream's positions <= i (its sos plus strictly previous tokens).
    pub fn sync_cross(q_len: usize, kv_len: usize) -> AttnMask {
        let mut blocked = vec![false; q_len * kv_len];
        for i in 0..q_len {
            for j in 0..kv_len {
                if j > i {
                    blocked[i * kv_len + j] = true;
                }
            }
        }
        AttnMask { blocked, q_len, kv_len }
    }

    fn fully_blocked_rows(&self) -> Vec<usize> {
        (0..self.q_len)
            .filter(|&i| self.blocked[i * self.kv_len..(i + 1) * self.kv_len].iter().all(|&b| b))
            .collect()
    }
}

pub(crate) struct MultiHeadAttn<S: Scalar> {
    pub wq: Linear<S>,
    pub wk: Linear<S>,
    pub wv: Linear<S>,
    pub wo: Linear<S>,
    pub n_heads: usize,
}

impl<S: Scalar> MultiHeadAttn<S> {
    pub fn new(d: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Self {
        MultiHeadAttn {
            wq: Linear::new(d, d, rng),
            wk: Linear::new(d, d, rng),
            wv: Linear::new(d, d, rng),
            wo: Linear::new(d, d, rng),
            n_heads,
        }
    }

    /// Scaled dot-product attention over `n_heads` column blocks.
    /// An empty key set or a fully masked query row yields a zero output row.
    pub fn forward(
        &self,
        ctx: &FwdCtx<S>,
        q_in: &Tensor<S>,
        kv_in: &Tensor<S>,
        mask: Option<&AttnMask>,
    ) -> Result<Tensor<S>, ModelError> {
        let tape = ctx.tape;
        let d = q_in.cols();
        let lq = q_in.rows();
        let lkv = kv_in.rows();
        if lkv == 0 {
            return Ok(Tensor::zeros(&[lq, d]));
        }
        let dh = d / self.n_heads;
        let q = self.wq.forward(ctx, q_in)?;
        let k = self.wk.forward(ctx, kv_in)?;
        let v = self.wv.forward(ctx, kv_in)?;
        let scale = S::from_f64c(1.0 / (dh as f64).sqrt());
        let dead_rows = mask.map(|m| m.fully_blocked_rows()).unwrap_or_default();
        let row_keep: Option<Tensor<S>> = if dead_rows.is_empty() {
            None
        } else {
            let mut keep = vec![S::one(); lq * lkv];
            for &i in &dead_rows {
                for j in 0..lkv {
                    keep[i * lkv + j] = S::zero();
                }
            }
            Some(Tensor::constant(&[lq, lkv], keep).unwrap())
        };
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = tape.slice(&q, 1, h * dh, dh)?;
            let kh = tape.slice(&k, 1, h * dh, dh)?;
            let vh = tape.slice(&v, 1, h * dh, dh)?;
            let scores = tape.scale(&tape.matmul(&qh, &tape.transpose(&kh)?)?, scale)?;
            let scores = match mask {
                Some(m) => tape.masked_fill(&scores, &m.blocked, S::from_f64c(MASK_FILL))?,
                None => scores,
            };
            let mut attn = tape.softmax(&scores, 1)?;
            if let Some(keep) = &row_keep {
                attn = tape.mul(&attn, keep)?;
            }
            heads.push(tape.matmul(&attn, &vh)?);
        }
        let refs: Vec<&Tensor<S>> = heads.iter().collect();
        let ctx_all = tape.concat(1, &refs)?;
        self.wo.forward(ctx, &ctx_all)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.wq.visit(&format!("{prefix}.wq"), f);
        self.wk.visit(&format!("{prefix}.wk"), f);
        self.wv.visit(&format!("{prefix}.wv"), f);
        self.wo.visit(&format!("{prefix}.wo"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.wq.visit_mut(&format!("{prefix}.wq"), f);
        self.wk.visit_mut(&format!("{prefix}.wk"), f);
        self.wv.visit_mut(&format!("{prefix}.wv"), f);
        self.wo.visit_mut(&format!("{prefix}.wo"), f);
    }
}

pub(crate) struct FeedForward<S: Scalar> {
    pub lin1: Linear<S>,
    pub lin2: Linear<S>,
}

impl<S: Scalar> FeedForward<S> {
    pub fn new(d: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward { lin1: Linear::new(d, d_ff, rng), lin2: Linear::new(d_ff, d, rng) }
    }

    pub fn forward(&self, ctx: &FwdCtx<S>, x: &Tensor<S>) -> Result<Tensor<S>, ModelError> {
        let h = ctx.tape.relu(&self.lin1.forward(ctx, x)?)?;
        self.lin2.forward(ctx, &h)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.lin1.visit(&format!("{prefix}.lin1"), f);
        self.lin2.visit(&format!("{prefix}.lin2"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.lin1.visit_mut(&format!("{prefix}.lin1"), f);
        self.lin2.visit_mut(&format!("{prefix}.lin2"), f);
    }
}

/// Fixed sinusoidal positional encodings for `len` positions.
pub(crate) fn positional_encoding<S: Scalar>(len: usize, d: usize) -> Tensor<S> {
    let mut values = vec![S::zero(); len * d];
    for pos in 0..len {
        for i in 0..d {
            let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            values[pos * d + i] = S::from_f64c(v);
        }
    }
    Tensor::constant(&[len, d], values).unwrap()
}
