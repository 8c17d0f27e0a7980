use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Features;

/// SpecAugment-style masking. Applied to normalized features during training
/// only; masked regions are set to the utterance mean.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpecAugmentConfig {
    pub time_masks: usize,
    pub max_time_width: usize,
    pub freq_masks: usize,
    pub max_freq_width: usize,
}

impl SpecAugmentConfig {
    pub fn disabled() -> Self {
        SpecAugmentConfig { time_masks: 0, max_time_width: 0, freq_masks: 0, max_freq_width: 0 }
    }

    pub fn is_disabled(&self) -> bool {
        self.time_masks == 0 && self.freq_masks == 0
    }
}

/// Masks random time and frequency bands, filling with the utterance mean.
/// Widths are drawn uniformly from `0..=max_width` and clamped to the
/// corresponding dimension; shape is unchanged.
pub fn spec_augment(feats: &Features, cfg: &SpecAugmentConfig, rng: &mut ChaCha8Rng) -> Features {
    if cfg.is_disabled() || feats.frames == 0 {
        return feats.clone();
    }
    let (t, d) = (feats.frames, feats.dim);
    let mean = feats.data.iter().sum::<f64>() / feats.data.len() as f64;
    let mut out = feats.data.clone();
    for _ in 0..cfg.time_masks {
        let w = rng.gen_range(0..=cfg.max_time_width.min(t));
        if w == 0 {
            continue;
        }
        let start = rng.gen_range(0..=t - w);
        for i in start..start + w {
            for j in 0..d {
                out[i * d + j] = mean;
            }
        }
    }
    for _ in 0..cfg.freq_masks {
        let w = rng.gen_range(0..=cfg.max_freq_width.min(d));
        if w == 0 {
            continue;
        }
        let start = rng.gen_range(0..=d - w);
        for i in 0..t {
            for j in start..start + w {
                out[i * d + j] = mean;
            }
        }
    }
    Features { frames: t, dim: d, data: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample() -> Features {
        let data: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        Features { frames: 8, dim: 5, data }
    }

    #[test]
    fn zero_masks_is_identity() {
        let f = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = spec_augment(&f, &SpecAugmentConfig::disabled(), &mut rng);
        assert_eq!(out, f);
    }

    #[test]
    fn single_time_mask_bounds_altered_cells() {
        let f = sample();
        let cfg = SpecAugmentConfig { time_masks: 1, max_time_width: 3, freq_masks: 0, max_freq_width: 0 };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = spec_augment(&f, &cfg, &mut rng);
            let altered = out.data.iter().zip(&f.data).filter(|(a, b)| a != b).count();
            assert!(altered <= 3 * f.dim, "altered {altered}");
            assert_eq!(out.frames, f.frames);
            assert_eq!(out.dim, f.dim);
        }
    }

    #[test]
    fn fixed_seed_fixed_masks() {
        let f = sample();
        let cfg =
            SpecAugmentConfig { time_masks: 2, max_time_width: 3, freq_masks: 1, max_freq_width: 2 };
        let a = spec_augment(&f, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = spec_augment(&f, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn masked_cells_equal_utterance_mean() {
        let f = sample();
        let mean = f.data.iter().sum::<f64>() / f.data.len() as f64;
        let cfg = SpecAugmentConfig { time_masks: 1, max_time_width: 8, freq_masks: 0, max_freq_width: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = spec_augment(&f, &cfg, &mut rng);
        for (a, b) in out.data.iter().zip(&f.data) {
            if a != b {
                assert_eq!(*a, mean);
            }
        }
    }
}
