//! Deterministic synthetic-soundscape generation: labeled datasets with
//! controllable noise profiles, event mixes, and SNR ranges, so
//! matched/mismatched-conditions experiments run without any real corpus.
//!
//! Two event kinds count as "bird" (chirp, chink); rain, insect, and
//! speech-like events are distractors that occur in positives and negatives
//! alike.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioClip};
use crate::manifest::{DatasetManifest, Label, ManifestItem};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("audio error: {0}")]
    Audio(#[from] audio::AudioError),
    #[error("manifest error: {0}")]
    Manifest(#[from] crate::manifest::ManifestError),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("invalid event spec: {0}")]
    BadSpec(String),
    #[error("invalid profile: {0}")]
    BadProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Chirp,
    Chink,
    Rain,
    Insect,
    SpeechLike,
}

impl EventKind {
    pub fn is_bird(self) -> bool {
        matches!(self, EventKind::Chirp | EventKind::Chink)
    }
}

/// Kind-specific waveform parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventParams {
    Chirp { start_hz: f64, end_hz: f64 },
    Chink { center_hz: f64, burst_ms: f64 },
    Rain { drop_density_hz: f64 },
    Insect { carrier_hz: f64, am_rate_hz: f64 },
    SpeechLike { formant_hz: f64 },
}

impl EventParams {
    pub fn kind(&self) -> EventKind {
        match self {
            EventParams::Chirp { .. } => EventKind::Chirp,
            EventParams::Chink { .. } => EventKind::Chink,
            EventParams::Rain { .. } => EventKind::Rain,
            EventParams::Insect { .. } => EventKind::Insect,
            EventParams::SpeechLike { .. } => EventKind::SpeechLike,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub onset_s: f64,
    pub duration_s: f64,
    pub snr_db: f64,
    pub params: EventParams,
    /// Seed for stochastic kinds (rain drops); fixed by the spec so the
    /// same spec always renders identical samples.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseColor {
    White,
    Pink,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteProfile {
    pub name: String,
    pub noise_color: NoiseColor,
    pub noise_level_dbfs: f64,
    /// Mix weights over event kinds; must sum to 1.
    pub event_mix: Vec<(EventKind, f64)>,
    pub positive_rate: f64,
    pub snr_range_db: (f64, f64),
    pub reverb_tail_s: f64,
    /// Distractor events per clip, drawn uniformly from this range.
    pub distractors_per_clip: (usize, usize),
}

impl SiteProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let total: f64 = self.event_mix.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SynthError::BadProfile(format!("event mix weights sum to {total}")));
        }
        if self.event_mix.iter().any(|(_, w)| *w < 0.0) {
            return Err(SynthError::BadProfile("negative mix weight".into()));
        }
        if !(0.0..=1.0).contains(&self.positive_rate) {
            return Err(SynthError::BadProfile("positive rate outside [0,1]".into()));
        }
        if self.snr_range_db.0 > self.snr_range_db.1 {
            return Err(SynthError::BadProfile("SNR range not ordered".into()));
        }
        if self.reverb_tail_s < 0.0 {
            return Err(SynthError::BadProfile("negative reverb tail".into()));
        }
        Ok(())
    }

    /// Quiet site: low pink noise, high SNR, chirp-dominated.
    pub fn site_a() -> Self {
        Self {
            name: "siteA".into(),
            noise_color: NoiseColor::Pink,
            noise_level_dbfs: -36.0,
            event_mix: vec![
                (EventKind::Chirp, 0.50),
                (EventKind::Chink, 0.20),
                (EventKind::Rain, 0.10),
                (EventKind::Insect, 0.10),
                (EventKind::SpeechLike, 0.10),
            ],
            positive_rate: 0.5,
            snr_range_db: (12.0, 24.0),
            reverb_tail_s: 0.04,
            distractors_per_clip: (0, 1),
        }
    }

    /// Harsh site: heavy broadband noise, low SNR, insect-heavy.
    pub fn site_b() -> Self {
        Self {
            name: "siteB".into(),
            noise_color: NoiseColor::White,
            noise_level_dbfs: -22.0,
            event_mix: vec![
                (EventKind::Chirp, 0.18),
                (EventKind::Chink, 0.07),
                (EventKind::Rain, 0.13),
                (EventKind::Insect, 0.52),
                (EventKind::SpeechLike, 0.10),
            ],
            positive_rate: 0.5,
            snr_range_db: (-5.0, 5.0),
            reverb_tail_s: 0.15,
            distractors_per_clip: (1, 3),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "siteA" => Some(Self::site_a()),
            "siteB" => Some(Self::site_b()),
            _ => None,
        }
    }
}

/// Render one event's unit-scale waveform (before SNR gain and reverb).
pub fn synth_event(spec: &EventSpec, sample_rate: u32) -> Result<Vec<f64>, SynthError> {
    if spec.duration_s <= 0.0 {
        return Err(SynthError::BadSpec("duration must be > 0".into()));
    }
    if spec.onset_s < 0.0 {
        return Err(SynthError::BadSpec("onset must be >= 0".into()));
    }
    let rate = sample_rate as f64;
    let n = (spec.duration_s * rate).round() as usize;
    if n == 0 {
        return Err(SynthError::BadSpec("duration rounds to zero samples".into()));
    }
    let mut out = vec![0.0; n];
    match &spec.params {
        EventParams::Chirp { start_hz, end_hz } => {
            if *start_hz <= 0.0 || *end_hz <= 0.0 || *start_hz >= rate / 2.0 || *end_hz >= rate / 2.0 {
                return Err(SynthError::BadSpec("chirp frequencies outside (0, nyquist)".into()));
            }
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / rate;
                let frac = t / spec.duration_s;
                // linear FM sweep: phase = 2pi (f0 t + (f1-f0) t^2 / (2 T))
                let phase = 2.0 * std::f64::consts::PI
                    * (start_hz * t + (end_hz - start_hz) * t * t / (2.0 * spec.duration_s));
                let env = raised_cosine(frac);
                *o = env * phase.sin();
            }
        }
        EventParams::Chink { center_hz, burst_ms } => {
            if *burst_ms <= 0.0 || *burst_ms > 30.0 {
                return Err(SynthError::BadSpec("chink burst must be in (0, 30] ms".into()));
            }
            if *center_hz <= 0.0 || *center_hz >= rate / 2.0 {
                return Err(SynthError::BadSpec("chink center outside (0, nyquist)".into()));
            }
            // band-passed impulse: gaussian-windowed tone burst
            let burst_n = ((burst_ms / 1000.0) * rate).round().max(1.0) as usize;
            let mid = burst_n as f64 / 2.0;
            let sigma = burst_n as f64 / 6.0;
            for i in 0..burst_n.min(n) {
                let t = i as f64 / rate;
                let g = (-(i as f64 - mid).powi(2) / (2.0 * sigma * sigma)).exp();
                out[i] = g * (2.0 * std::f64::consts::PI * center_hz * t).sin();
            }
        }
        EventParams::Rain { drop_density_hz } => {
            if *drop_density_hz <= 0.0 {
                return Err(SynthError::BadSpec("rain density must be > 0".into()));
            }
            let mut rng = seed::rng(spec.seed);
            let n_drops = (drop_density_hz * spec.duration_s).round().max(1.0) as usize;
            for _ in 0..n_drops {
                let at = rng.gen_range(0..n);
                // each drop: a few ms of decaying noise
                let drop_len = ((0.002 + rng.gen::<f64>() * 0.004) * rate) as usize;
                let amp = 0.5 + 0.5 * rng.gen::<f64>();
                for j in 0..drop_len {
                    if at + j >= n {
                        break;
                    }
                    let decay = (-(j as f64) / (0.0015 * rate)).exp();
                    out[at + j] += amp * decay * (rng.gen::<f64>() * 2.0 - 1.0);
                }
            }
        }
        EventParams::Insect { carrier_hz, am_rate_hz } => {
            if *carrier_hz <= 0.0 || *carrier_hz >= rate / 2.0 || *am_rate_hz <= 0.0 {
                return Err(SynthError::BadSpec("insect parameters out of range".into()));
            }
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / rate;
                let am = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * am_rate_hz * t).sin();
                let env = raised_cosine(t / spec.duration_s);
                *o = env * am * (2.0 * std::f64::consts::PI * carrier_hz * t).sin();
            }
        }
        EventParams::SpeechLike { formant_hz } => {
            if *formant_hz <= 0.0 || *formant_hz >= rate / 2.0 {
                return Err(SynthError::BadSpec("formant outside (0, nyquist)".into()));
            }
            let f0 = 120.0;
            let n_harm = ((rate / 2.0 - 1.0) / f0).min(25.0) as usize;
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / rate;
                let mut v = 0.0;
                for h in 1..=n_harm {
                    let f = f0 * h as f64;
                    let w = (-(f - formant_hz).powi(2) / (2.0 * (formant_hz * 0.25).powi(2))).exp();
                    v += w * (2.0 * std::f64::consts::PI * f * t).sin();
                }
                // slow syllabic modulation
                let syll = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * 3.0 * t).sin();
                *o = syll * raised_cosine(t / spec.duration_s) * v;
            }
        }
    }
    Ok(out)
}

fn raised_cosine(frac: f64) -> f64 {
    if !(0.0..=1.0).contains(&frac) {
        return 0.0;
    }
    0.5 - 0.5 * (2.0 * std::f64::consts::PI * frac).cos()
}

/// Exponential-decay reverb tail convolution.
fn reverb(samples: &[f64], tail_s: f64, rate: f64) -> Vec<f64> {
    let tail_n = (tail_s * rate) as usize;
    if tail_n < 2 {
        return samples.to_vec();
    }
    // sparse kernel keeps this cheap: direct path + decaying taps
    let n_taps = 12.min(tail_n);
    let taps: Vec<(usize, f64)> = (1..=n_taps)
        .map(|k| {
            let delay = k * tail_n / n_taps;
            let gain = 0.4 * (-(3.0 * delay as f64) / tail_n as f64).exp();
            (delay, gain)
        })
        .collect();
    let mut out = vec![0.0; samples.len() + tail_n];
    for (i, &s) in samples.iter().enumerate() {
        out[i] += s;
        for &(d, g) in &taps {
            out[i + d] += s * g;
        }
    }
    out
}

/// One rendered event: its spec, placement, applied gain, and the exact
/// contribution added to the mix.
#[derive(Debug, Clone)]
pub struct RenderedEvent {
    pub spec: EventSpec,
    pub start_sample: usize,
    pub gain: f64,
    pub contribution: Vec<f64>,
}

/// A synthesized clip with its full construction record.
#[derive(Debug, Clone)]
pub struct SynthClip {
    pub clip: AudioClip,
    pub label: bool,
    pub events: Vec<EventSpec>,
    pub noise_rms: f64,
    pub rendered: Vec<RenderedEvent>,
}

fn gen_noise(color: NoiseColor, level_dbfs: f64, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let mut noise: Vec<f64> = match color {
        NoiseColor::White => (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
        NoiseColor::Pink => {
            // Paul Kellet's economy pink filter
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..n)
                .map(|_| {
                    let white = rng.gen::<f64>() * 2.0 - 1.0;
                    b0 = 0.99765 * b0 + white * 0.0990460;
                    b1 = 0.96300 * b1 + white * 0.2965164;
                    b2 = 0.57000 * b2 + white * 1.0526913;
                    b0 + b1 + b2 + white * 0.1848
                })
                .collect()
        }
    };
    let rms = (noise.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    let target = 10f64.powf(level_dbfs / 20.0);
    let gain = if rms > 0.0 { target / rms } else { 0.0 };
    for v in noise.iter_mut() {
        *v *= gain;
    }
    noise
}

fn draw_kind(
    rng: &mut rand_chacha::ChaCha8Rng,
    mix: &[(EventKind, f64)],
    bird: bool,
) -> Option<EventKind> {
    let pool: Vec<(EventKind, f64)> =
        mix.iter().filter(|(k, w)| k.is_bird() == bird && *w > 0.0).copied().collect();
    let total: f64 = pool.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return None;
    }
    let mut t = rng.gen::<f64>() * total;
    for (k, w) in &pool {
        t -= w;
        if t <= 0.0 {
            return Some(*k);
        }
    }
    pool.last().map(|(k, _)| *k)
}

fn draw_event(
    rng: &mut rand_chacha::ChaCha8Rng,
    kind: EventKind,
    profile: &SiteProfile,
    clip_len_s: f64,
    rate: f64,
) -> EventSpec {
    let snr_db = rng.gen_range(profile.snr_range_db.0..=profile.snr_range_db.1);
    let event_seed = rng.gen::<u64>();
    let (duration_s, params) = match kind {
        EventKind::Chirp => {
            let d = rng.gen_range(0.08..0.4f64).min(clip_len_s * 0.8);
            let lo = rng.gen_range(1500.0..3500.0f64).min(rate / 2.0 * 0.6);
            let hi = (lo + rng.gen_range(500.0..2500.0)).min(rate / 2.0 * 0.9);
            (d, EventParams::Chirp { start_hz: lo, end_hz: hi })
        }
        EventKind::Chink => {
            let burst_ms = rng.gen_range(5.0..25.0);
            let center = rng.gen_range(2500.0..6000.0f64).min(rate / 2.0 * 0.8);
            (0.03, EventParams::Chink { center_hz: center, burst_ms })
        }
        EventKind::Rain => {
            let d = (clip_len_s * 0.8).max(0.2);
            (d, EventParams::Rain { drop_density_hz: rng.gen_range(8.0..40.0) })
        }
        EventKind::Insect => {
            let d = (clip_len_s * rng.gen_range(0.4..0.9)).max(0.2);
            let carrier = rng.gen_range(3500.0..7000.0f64).min(rate / 2.0 * 0.85);
            (d, EventParams::Insect { carrier_hz: carrier, am_rate_hz: rng.gen_range(15.0..60.0) })
        }
        EventKind::SpeechLike => {
            let d = (clip_len_s * rng.gen_range(0.3..0.7)).max(0.2);
            (d, EventParams::SpeechLike { formant_hz: rng.gen_range(400.0..1200.0) })
        }
    };
    let max_onset = (clip_len_s - duration_s).max(0.0);
    let onset_s = rng.gen::<f64>() * max_onset;
    EventSpec { onset_s, duration_s, snr_db, params, seed: event_seed }
}

/// Synthesize one labeled clip. Background noise at the profile level; a
/// positive clip gets at least one bird event; distractors are drawn per
/// the mix regardless of the label. Each event is scaled so its measured
/// RMS over its support sits exactly `snr_db` above the noise RMS.
pub fn synth_clip(
    profile: &SiteProfile,
    has_bird: bool,
    clip_len_s: f64,
    sample_rate: u32,
    clip_seed: u64,
    id: &str,
) -> Result<SynthClip, SynthError> {
    profile.validate()?;
    let rate = sample_rate as f64;
    let n = (clip_len_s * rate).round() as usize;
    if n == 0 {
        return Err(SynthError::BadSpec("clip length rounds to zero samples".into()));
    }
    let mut rng = seed::rng(clip_seed);
    let mut samples = gen_noise(profile.noise_color, profile.noise_level_dbfs, n, &mut rng);
    let noise_rms = (samples.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();

    let mut specs = Vec::new();
    if has_bird {
        let n_bird = rng.gen_range(1..=2);
        for _ in 0..n_bird {
            if let Some(kind) = draw_kind(&mut rng, &profile.event_mix, true) {
                specs.push(draw_event(&mut rng, kind, profile, clip_len_s, rate));
            }
        }
        if specs.is_empty() {
            // profile without bird weight cannot make positives
            return Err(SynthError::BadProfile("no bird kinds in event mix".into()));
        }
    }
    let n_distract =
        rng.gen_range(profile.distractors_per_clip.0..=profile.distractors_per_clip.1);
    for _ in 0..n_distract {
        if let Some(kind) = draw_kind(&mut rng, &profile.event_mix, false) {
            specs.push(draw_event(&mut rng, kind, profile, clip_len_s, rate));
        }
    }

    let mut rendered = Vec::with_capacity(specs.len());
    for spec in &specs {
        let raw = synth_event(spec, sample_rate)?;
        let wet = reverb(&raw, profile.reverb_tail_s, rate);
        let support = wet.len();
        let rms = (wet.iter().map(|x| x * x).sum::<f64>() / support as f64).sqrt();
        if rms <= 0.0 {
            continue;
        }
        let target_rms = noise_rms * 10f64.powf(spec.snr_db / 20.0);
        let gain = target_rms / rms;
        let start = (spec.onset_s * rate).round() as usize;
        let mut contribution = vec![0.0; wet.len()];
        for (j, &v) in wet.iter().enumerate() {
            if start + j >= n {
                break;
            }
            let scaled = v * gain;
            samples[start + j] += scaled;
            contribution[j] = scaled;
        }
        rendered.push(RenderedEvent { spec: spec.clone(), start_sample: start, gain, contribution });
    }

    Ok(SynthClip {
        clip: AudioClip { id: id.to_string(), samples, sample_rate_hz: sample_rate },
        label: has_bird,
        events: specs,
        noise_rms,
        rendered,
    })
}

/// Ground-truth event log sidecar: item id -> event list.
pub type EventLog = BTreeMap<String, Vec<EventSpec>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_items: usize,
    pub clip_len_s: f64,
    pub sample_rate_hz: u32,
    pub seed: u64,
}

/// Generate a labeled dataset: WAV files plus `manifest.csv` and
/// `events.json` under `out_dir`. Exactly `round(n * positive_rate)` items
/// are positive. Fully deterministic from `(profile, spec)`; per-item seeds
/// make parallel generation identical to serial.
pub fn generate_dataset(
    profile: &SiteProfile,
    spec: &DatasetSpec,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, SynthError> {
    use rayon::prelude::*;
    profile.validate()?;
    let out_dir = out_dir.as_ref();
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;

    let n = spec.n_items;
    let n_pos = (n as f64 * profile.positive_rate).round() as usize;
    // deterministic label assignment: seeded shuffle of the label vector
    let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    let mut rng = seed::rng(seed::derive_seed(spec.seed, "dataset-labels"));
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }

    let results: Result<Vec<(ManifestItem, (String, Vec<EventSpec>))>, SynthError> = (0..n)
        .into_par_iter()
        .map(|i| {
            let item_id = format!("{}_{i:05}", profile.name);
            let clip_seed = seed::derive_seed_indexed(spec.seed, "dataset-clip", i as u64);
            let sc = synth_clip(
                profile,
                labels[i],
                spec.clip_len_s,
                spec.sample_rate_hz,
                clip_seed,
                &item_id,
            )?;
            let rel_path = format!("audio/{item_id}.wav");
            audio::write_wav(&sc.clip, out_dir.join(&rel_path))?;
            Ok((
                ManifestItem {
                    item_id: item_id.clone(),
                    label: if sc.label { Label::Positive } else { Label::Negative },
                    site: Some(profile.name.clone()),
                    path: rel_path,
                },
                (item_id, sc.events),
            ))
        })
        .collect();
    let results = results?;
    let (items, log_entries): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let manifest = DatasetManifest::new(items)?;
    crate::manifest::write_manifest(&manifest, out_dir.join("manifest.csv"))?;
    let log: EventLog = log_entries.into_iter().collect();
    std::fs::write(out_dir.join("events.json"), serde_json::to_vec_pretty(&log)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features;

    #[test]
    fn chirp_ridge_sweeps_upward() {
        let spec = EventSpec {
            onset_s: 0.0,
            duration_s: 0.5,
            snr_db: 0.0,
            params: EventParams::Chirp { start_hz: 2000.0, end_hz: 4000.0 },
            seed: 0,
        };
        let samples = synth_event(&spec, 44100).unwrap();
        let clip = AudioClip::new("chirp", samples, 44100);
        let sg = features::stft(&clip, 1024, 256).unwrap();
        // per-frame argmax bin should increase from start to end
        let interior = &sg.frames[2..sg.frames.len() - 2];
        let argmax = |frame: &Vec<f64>| {
            frame.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
        };
        let first = argmax(&interior[0]);
        let last = argmax(&interior[interior.len() - 1]);
        assert!(last > first + 10, "ridge {first} -> {last}");
    }

    #[test]
    fn zero_duration_rejected() {
        let spec = EventSpec {
            onset_s: 0.0,
            duration_s: 0.0,
            snr_db: 0.0,
            params: EventParams::Chirp { start_hz: 2000.0, end_hz: 4000.0 },
            seed: 0,
        };
        assert!(synth_event(&spec, 44100).is_err());
    }

    #[test]
    fn same_spec_identical_samples() {
        for params in [
            EventParams::Rain { drop_density_hz: 20.0 },
            EventParams::Insect { carrier_hz: 4000.0, am_rate_hz: 30.0 },
            EventParams::SpeechLike { formant_hz: 800.0 },
        ] {
            let spec = EventSpec { onset_s: 0.0, duration_s: 0.3, snr_db: 0.0, params, seed: 99 };
            let a = synth_event(&spec, 22050).unwrap();
            let b = synth_event(&spec, 22050).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn negative_clip_has_no_bird_events() {
        let sc = synth_clip(&SiteProfile::site_a(), false, 1.0, 22050, 7, "c").unwrap();
        assert!(sc.events.iter().all(|e| !e.params.kind().is_bird()));
        assert!(!sc.label);
    }

    #[test]
    fn positive_clip_has_bird_event() {
        let sc = synth_clip(&SiteProfile::site_a(), true, 1.0, 22050, 8, "c").unwrap();
        assert!(sc.events.iter().any(|e| e.params.kind().is_bird()));
    }

    #[test]
    fn snr_achieved_within_one_db() {
        for seed_val in [1u64, 2, 3, 4, 5] {
            let sc = synth_clip(&SiteProfile::site_a(), true, 1.0, 22050, seed_val, "c").unwrap();
            for ev in &sc.rendered {
                let m = ev.contribution.len() as f64;
                let rms = (ev.contribution.iter().map(|x| x * x).sum::<f64>() / m).sqrt();
                let achieved_db = 20.0 * (rms / sc.noise_rms).log10();
                // events truncated at the clip edge lose tail energy
                let truncated = ev.start_sample + ev.contribution.len()
                    > sc.clip.samples.len();
                if !truncated {
                    assert!(
                        (achieved_db - ev.spec.snr_db).abs() <= 1.0,
                        "seed {seed_val}: drawn {} achieved {achieved_db}",
                        ev.spec.snr_db
                    );
                }
            }
        }
    }

    #[test]
    fn fixed_seed_bit_identical() {
        let a = synth_clip(&SiteProfile::site_b(), true, 0.5, 22050, 123, "c").unwrap();
        let b = synth_clip(&SiteProfile::site_b(), true, 0.5, 22050, 123, "c").unwrap();
        let wa = audio::wav_bytes(&a.clip).unwrap();
        let wb = audio::wav_bytes(&b.clip).unwrap();
        assert_eq!(wa, wb);
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let tmp = tempfile::tempdir().unwrap();
        let profile = SiteProfile { positive_rate: 0.5, ..SiteProfile::site_a() };
        let spec = DatasetSpec { n_items: 20, clip_len_s: 0.3, sample_rate_hz: 8000, seed: 5 };
        let m1 = generate_dataset(&profile, &spec, tmp.path().join("d1")).unwrap();
        assert_eq!(m1.len(), 20);
        assert_eq!(m1.n_positive(), 10);
        let m2 = generate_dataset(&profile, &spec, tmp.path().join("d2")).unwrap();
        assert_eq!(
            crate::manifest::manifest_csv(&m1),
            crate::manifest::manifest_csv(&m2)
        );
        // byte-identical audio
        let f1 = std::fs::read(tmp.path().join("d1/audio").join(format!("{}.wav", m1.items[0].item_id))).unwrap();
        let f2 = std::fs::read(tmp.path().join("d2/audio").join(format!("{}.wav", m1.items[0].item_id))).unwrap();
        assert_eq!(f1, f2);
        // event log only lists bird events for positives
        let log: EventLog =
            serde_json::from_slice(&std::fs::read(tmp.path().join("d1/events.json")).unwrap())
                .unwrap();
        for it in &m1.items {
            let has_bird = log[&it.item_id].iter().any(|e| e.params.kind().is_bird());
            assert_eq!(has_bird, it.label == Label::Positive);
        }
    }

    #[test]
    fn imbalanced_rate_count() {
        let tmp = tempfile::tempdir().unwrap();
        let profile = SiteProfile { positive_rate: 0.032, ..SiteProfile::site_a() };
        let spec = DatasetSpec { n_items: 125, clip_len_s: 0.2, sample_rate_hz: 8000, seed: 6 };
        let m = generate_dataset(&profile, &spec, tmp.path().join("d")).unwrap();
        assert_eq!(m.n_positive(), 4); // round(125 * 0.032)
    }
}
