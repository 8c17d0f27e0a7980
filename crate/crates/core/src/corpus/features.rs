use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::CorpusError;

/// Frame matrix `[frames x dim]`, row-major. Kept in f64 once loaded;
/// the on-disk format is 32-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// Emits `dur` noisy copies of each word's prototype vector, `dur` drawn
/// uniformly from `dur_min..=dur_max` per word. With `jitter > 0` the segment
/// is extended on both sides by up to `jitter` frames of other words'
/// prototypes, modeling subtitle segment boundaries that cut into
/// neighboring speech.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_features(
    spoken: &[String],
    prototypes: &BTreeMap<String, Vec<f64>>,
    dur_min: usize,
    dur_max: usize,
    noise_sigma: f64,
    jitter: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Features, CorpusError> {
    let dim = prototypes
        .values()
        .next()
        .map(|p| p.len())
        .ok_or_else(|| CorpusError::InvalidConfig("empty prototype table".into()))?;
    let proto_list: Vec<&Vec<f64>> = prototypes.values().collect();
    let mut data: Vec<f64> = Vec::new();
    let mut emit = |proto: &[f64], n: usize, rng: &mut ChaCha8Rng, data: &mut Vec<f64>| {
        for _ in 0..n {
            for &p in proto {
                let noise: f64 = StandardNormal.sample(rng);
                data.push(p + noise * noise_sigma);
            }
        }
    };

    if jitter > 0 {
        let lead = rng.gen_range(0..=jitter);
        let neighbor = proto_list[rng.gen_range(0..proto_list.len())].clone();
        emit(&neighbor, lead, rng, &mut data);
    }
    for word in spoken {
        let proto = prototypes
            .get(word)
            .ok_or_else(|| CorpusError::BadUtterance {
                id: word.clone(),
                reason: "word has no prototype".into(),
            })?;
        let dur = rng.gen_range(dur_min..=dur_max);
        emit(proto, dur, rng, &mut data);
    }
    if jitter > 0 {
        let tail = rng.gen_range(0..=jitter);
        let neighbor = proto_list[rng.gen_range(0..proto_list.len())].clone();
        emit(&neighbor, tail, rng, &mut data);
    }

    let frames = data.len() / dim;
    Ok(Features { frames, dim, data })
}

/// Utterance-level mean-variance normalization: per dimension, zero mean and
/// unit variance over the utterance. The variance is floored at `VAR_FLOOR`
/// so constant dimensions map to zero and the operation is idempotent.
pub fn normalize_utterance(feats: &Features) -> Features {
    const VAR_FLOOR: f64 = 1e-12;
    let (t, d) = (feats.frames, feats.dim);
    let mut out = vec![0.0; feats.data.len()];
    if t == 0 {
        return Features { frames: 0, dim: d, data: out };
    }
    for j in 0..d {
        let mut mean = 0.0;
        for i in 0..t {
            mean += feats.data[i * d + j];
        }
        mean /= t as f64;
        let mut var = 0.0;
        for i in 0..t {
            let x = feats.data[i * d + j] - mean;
            var += x * x;
        }
        var /= t as f64;
        let inv_std = 1.0 / var.max(VAR_FLOOR).sqrt();
        for i in 0..t {
            out[i * d + j] = (feats.data[i * d + j] - mean) * inv_std;
        }
    }
    Features { frames: t, dim: d, data: out }
}

/// Flat binary feature file: header `frames: u32 LE`, `dim: u32 LE`,
/// then `frames * dim` little-endian f32 values.
pub fn write_feature_file(path: &Path, feats: &Features) -> Result<(), CorpusError> {
    let mut buf = Vec::with_capacity(8 + feats.data.len() * 4);
    buf.extend_from_slice(&(feats.frames as u32).to_le_bytes());
    buf.extend_from_slice(&(feats.dim as u32).to_le_bytes());
    for &v in &feats.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<Features, CorpusError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |reason: &str| CorpusError::MalformedFeatures {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if buf.len() < 8 {
        return Err(bad("shorter than header"));
    }
    let frames = u32::from_le_bytes(buf[0..4].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    if buf.len() != 8 + frames * dim * 4 {
        return Err(bad("payload length does not match header"));
    }
    let mut data = Vec::with_capacity(frames * dim);
    for chunk in buf[8..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(bad("non-finite feature value"));
        }
        data.push(v as f64);
    }
    Ok(Features { frames, dim, data })
}
