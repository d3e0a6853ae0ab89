//! Label-preserving data augmentation: circular time shifts and additive
//! noise at a drawn SNR.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DetectError;
use crate::audio::AudioClip;
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Output size = input size * factor; originals are always included.
    pub factor: usize,
    pub time_shift: bool,
    pub noise_mix: bool,
    /// SNR range in dB for noise mixing, low..=high.
    pub snr_range_db: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { factor: 2, time_shift: true, noise_mix: true, snr_range_db: (6.0, 30.0), seed: 0 }
    }
}

/// Circular shift by `offset` samples; the label is unchanged.
pub fn time_shift(clip: &AudioClip, offset: usize, new_id: &str) -> AudioClip {
    let n = clip.samples.len();
    let off = if n == 0 { 0 } else { offset % n };
    let mut samples = Vec::with_capacity(n);
    samples.extend_from_slice(&clip.samples[n - off..]);
    samples.extend_from_slice(&clip.samples[..n - off]);
    AudioClip { id: new_id.to_string(), samples, sample_rate_hz: clip.sample_rate_hz }
}

/// Add white noise so the clip-to-noise RMS ratio equals `snr_db`.
pub fn noise_mix(clip: &AudioClip, snr_db: f64, noise_seed: u64, new_id: &str) -> AudioClip {
    let mut rng = seed::rng(noise_seed);
    let signal_rms = clip.rms();
    let noise: Vec<f64> = (0..clip.samples.len()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let noise_rms =
        (noise.iter().map(|x| x * x).sum::<f64>() / noise.len().max(1) as f64).sqrt();
    let target_noise_rms = signal_rms / 10f64.powf(snr_db / 20.0);
    let gain = if noise_rms > 0.0 { target_noise_rms / noise_rms } else { 0.0 };
    let samples = clip.samples.iter().zip(&noise).map(|(s, n)| s + n * gain).collect();
    AudioClip { id: new_id.to_string(), samples, sample_rate_hz: clip.sample_rate_hz }
}

/// Enlarge a labeled clip set by `cfg.factor`. Originals are kept; each
/// synthetic clip applies one enabled op to a source clip drawn in order.
pub fn augment(
    clips: &[AudioClip],
    labels: &[bool],
    cfg: &AugmentConfig,
) -> Result<(Vec<AudioClip>, Vec<bool>), DetectError> {
    if cfg.factor < 1 {
        return Err(DetectError::InvalidConfig("augmentation factor must be >= 1".into()));
    }
    if clips.len() != labels.len() {
        return Err(DetectError::DimMismatch(format!(
            "{} clips vs {} labels",
            clips.len(),
            labels.len()
        )));
    }
    if !cfg.time_shift && !cfg.noise_mix {
        return Err(DetectError::InvalidConfig("no augmentation ops enabled".into()));
    }
    if cfg.snr_range_db.0 > cfg.snr_range_db.1 {
        return Err(DetectError::InvalidConfig("snr range must be ordered".into()));
    }
    let mut out_clips: Vec<AudioClip> = clips.to_vec();
    let mut out_labels: Vec<bool> = labels.to_vec();
    let mut rng = seed::rng(seed::derive_seed(cfg.seed, "augment"));
    for round in 1..cfg.factor {
        for (i, (clip, &label)) in clips.iter().zip(labels).enumerate() {
            let use_shift = match (cfg.time_shift, cfg.noise_mix) {
                (true, false) => true,
                (false, true) => false,
                _ => rng.gen::<bool>(),
            };
            let new_id = format!("{}_aug{round}", clip.id);
            let augmented = if use_shift {
                let off = rng.gen_range(0..clip.samples.len().max(1));
                time_shift(clip, off, &new_id)
            } else {
                let snr = rng.gen_range(cfg.snr_range_db.0..=cfg.snr_range_db.1);
                let noise_seed = seed::derive_seed_indexed(cfg.seed, "augment-noise", (round * clips.len() + i) as u64);
                noise_mix(clip, snr, noise_seed, &new_id)
            };
            out_clips.push(augmented);
            out_labels.push(label);
        }
    }
    Ok((out_clips, out_labels))
}
