//! Versioned binary checkpoints: little-endian, embedded model config, named
//! tensor directory. Save/load round-trips are bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CheckpointError;
use crate::tensor::{Dtype, Scalar};
use crate::transformer::{DualDecoderModel, ModelConfig};

const MAGIC: &[u8; 8] = b"DSUBCKPT";
const VERSION: u32 = 1;

/// Bookkeeping stored alongside the tensors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub epoch: usize,
    /// Teacher-forced ASR token accuracy on the validation set.
    pub val_token_accuracy: f64,
    pub val_loss: f64,
    pub train_loss: f64,
    pub optimizer_step: u64,
    pub diverged: bool,
}

impl Default for CheckpointMeta {
    fn default() -> Self {
        CheckpointMeta {
            epoch: 0,
            val_token_accuracy: f64::NAN,
            val_loss: f64::NAN,
            train_loss: f64::NAN,
            optimizer_step: 0,
            diverged: false,
        }
    }
}

pub type NamedTensors<S> = BTreeMap<String, (Vec<usize>, Vec<S>)>;

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    config: &ModelConfig,
    meta: &CheckpointMeta,
    tensors: &NamedTensors<S>,
) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(S::DTYPE.tag());
    let config_json = serde_json::to_vec(config)?;
    buf.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config_json);
    let meta_json = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, (shape, values)) in tensors {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(shape.len() as u8);
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in values {
            v.write_le(&mut buf);
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub struct Checkpoint<S: Scalar> {
    pub config: ModelConfig,
    pub meta: CheckpointMeta,
    pub tensors: NamedTensors<S>,
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>, CheckpointError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if *pos + n > buf.len() {
            return Err(CheckpointError::Corrupt(format!(
                "need {n} bytes at offset {pos}, file has {}",
                buf.len()
            )));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let tag = take(&mut pos, 1)?[0];
    let dtype = Dtype::from_tag(tag)
        .ok_or_else(|| CheckpointError::Corrupt(format!("unknown dtype tag {tag}")))?;
    if dtype != S::DTYPE {
        return Err(CheckpointError::DtypeMismatch { expected: S::DTYPE, found: dtype });
    }
    let clen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let config: ModelConfig = serde_json::from_slice(take(&mut pos, clen)?)?;
    let mlen = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let meta: CheckpointMeta = serde_json::from_slice(take(&mut pos, mlen)?)?;
    let n_tensors = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let width = S::DTYPE.byte_width();
    let mut tensors = BTreeMap::new();
    for _ in 0..n_tensors {
        let nlen = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, nlen)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("non-utf8 tensor name".into()))?;
        let ndim = take(&mut pos, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = take(&mut pos, numel * width)?;
        let values: Vec<S> = raw.chunks_exact(width).map(S::read_le).collect();
        tensors.insert(name, (shape, values));
    }
    if pos != buf.len() {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    Ok(Checkpoint { config, meta, tensors })
}

/// Model parameters only (optimizer entries filtered out).
pub fn model_tensors<S: Scalar>(ckpt: &Checkpoint<S>) -> NamedTensors<S> {
    ckpt.tensors
        .iter()
        .filter(|(n, _)| !n.starts_with("optim."))
        .map(|(n, v)| (n.clone(), v.clone()))
        .collect()
}

/// Strict restore: every model parameter must be present in the checkpoint
/// and the configs must match exactly.
pub fn restore_model<S: Scalar>(
    model: &mut DualDecoderModel<S>,
    ckpt: &Checkpoint<S>,
) -> Result<(), CheckpointError> {
    if ckpt.config != model.config {
        return Err(CheckpointError::ConfigMismatch(format!(
            "checkpoint {:?} vs model {:?}",
            ckpt.config, model.config
        )));
    }
    let mut missing = Vec::new();
    model.visit_params(&mut |name, _| {
        if !ckpt.tensors.contains_key(&name) {
            missing.push(name);
        }
    });
    if let Some(name) = missing.into_iter().next() {
        return Err(CheckpointError::MissingTensor(name));
    }
    let params = model_tensors(ckpt);
    model
        .load_overlapping(&params)
        .map_err(|e| CheckpointError::ConfigMismatch(e.to_string()))?;
    Ok(())
}

/// Builds a model directly from a checkpoint.
pub fn model_from_checkpoint<S: Scalar>(
    ckpt: &Checkpoint<S>,
) -> Result<DualDecoderModel<S>, CheckpointError> {
    let mut model = DualDecoderModel::new(ckpt.config.clone(), 0)
        .map_err(|e| CheckpointError::ConfigMismatch(e.to_string()))?;
    restore_model(&mut model, ckpt)?;
    Ok(model)
}

/// Elementwise mean of the model parameters of several checkpoints;
/// optimizer state is dropped. All inputs must share one ModelConfig.
pub fn average_checkpoints<S: Scalar>(
    paths: &[std::path::PathBuf],
) -> Result<Checkpoint<S>, CheckpointError> {
    if paths.is_empty() {
        return Err(CheckpointError::Corrupt("no checkpoints to average".into()));
    }
    let first = load_checkpoint::<S>(&paths[0])?;
    let config = first.config.clone();
    let mut sums: BTreeMap<String, (Vec<usize>, Vec<f64>)> = model_tensors(&first)
        .into_iter()
        .map(|(n, (shape, v))| (n, (shape, v.iter().map(|x| x.to_f64c()).collect())))
        .collect();
    for path in &paths[1..] {
        let ck = load_checkpoint::<S>(path)?;
        if ck.config != config {
            return Err(CheckpointError::ConfigMismatch(format!(
                "{} differs from {}",
                path.display(),
                paths[0].display()
            )));
        }
        for (name, (shape, values)) in model_tensors(&ck) {
            let entry = sums.get_mut(&name).ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
            if entry.0 != shape {
                return Err(CheckpointError::ConfigMismatch(format!("shape of {name} differs")));
            }
            for (s, v) in entry.1.iter_mut().zip(values.iter()) {
                *s += v.to_f64c();
            }
        }
    }
    let k = paths.len() as f64;
    let tensors: NamedTensors<S> = sums
        .into_iter()
        .map(|(n, (shape, v))| (n, (shape, v.into_iter().map(|x| S::from_f64c(x / k)).collect())))
        .collect();
    let meta = CheckpointMeta { epoch: first.meta.epoch, ..CheckpointMeta::default() };
    Ok(Checkpoint { config, meta, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::CrossMode;

    fn cfg() -> ModelConfig {
        ModelConfig {
            d_model: 4,
            n_heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            d_ff: 6,
            dropout: 0.0,
            vocab_size: 7,
            d_feat: 3,
            subsample_factor: 4,
            cross_mode: CrossMode::None,
            max_target_len: 16,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = DualDecoderModel::<f32>::new(cfg(), 3).unwrap();
        let meta = CheckpointMeta {
            epoch: 7,
            val_token_accuracy: 0.83,
            val_loss: 1.25,
            train_loss: 0.9,
            optimizer_step: 420,
            diverged: false,
        };
        save_checkpoint(&path, &cfg(), &meta, &model.export_params()).unwrap();
        let back = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(back.meta, meta);
        assert_eq!(back.config, cfg());
        let orig = model.export_params();
        for (name, (shape, values)) in &orig {
            let (s2, v2) = &back.tensors[name];
            assert_eq!(shape, s2);
            // bit-exact
            for (a, b) in values.iter().zip(v2) {
                assert_eq!(a.to_bits(), b.to_bits(), "{name}");
            }
        }
        // and restores into a fresh model exactly
        let restored = model_from_checkpoint::<f32>(&back).unwrap();
        assert_eq!(restored.export_params(), orig);
    }

    #[test]
    fn dtype_and_config_guards() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = DualDecoderModel::<f32>::new(cfg(), 3).unwrap();
        save_checkpoint(&path, &cfg(), &CheckpointMeta::default(), &model.export_params()).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(CheckpointError::DtypeMismatch { .. })
        ));
        let ck = load_checkpoint::<f32>(&path).unwrap();
        let mut other_cfg = cfg();
        other_cfg.d_ff = 8;
        let mut other = DualDecoderModel::<f32>::new(other_cfg, 0).unwrap();
        assert!(matches!(restore_model(&mut other, &ck), Err(CheckpointError::ConfigMismatch(_))));
        // corrupt magic
        let garbage = dir.path().join("bad.ckpt");
        std::fs::write(&garbage, b"not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint::<f32>(&garbage), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn averaging_identity_and_opposites() {
        let dir = tempfile::tempdir().unwrap();
        let model = DualDecoderModel::<f32>::new(cfg(), 5).unwrap();
        let params = model.export_params();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&p1, &cfg(), &CheckpointMeta::default(), &params).unwrap();
        save_checkpoint(&p2, &cfg(), &CheckpointMeta::default(), &params).unwrap();
        // k copies of one checkpoint: identical parameters
        let avg = average_checkpoints::<f32>(&[p1.clone(), p2.clone(), p1.clone()]).unwrap();
        for (name, (_, values)) in &avg.tensors {
            assert_eq!(values, &params[name].1, "{name}");
        }
        // p and -p average to zeros
        let neg: NamedTensors<f32> = params
            .iter()
            .map(|(n, (s, v))| (n.clone(), (s.clone(), v.iter().map(|x| -x).collect())))
            .collect();
        let p3 = dir.path().join("n.ckpt");
        save_checkpoint(&p3, &cfg(), &CheckpointMeta::default(), &neg).unwrap();
        let avg2 = average_checkpoints::<f32>(&[p1.clone(), p3]).unwrap();
        for (name, (_, values)) in &avg2.tensors {
            assert!(values.iter().all(|&x| x == 0.0), "{name}");
        }
        // optimizer state dropped
        assert!(avg.tensors.keys().all(|k| !k.starts_with("optim.")));
    }
}
