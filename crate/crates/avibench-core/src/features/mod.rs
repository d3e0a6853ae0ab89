//! Spectrogram-domain features: STFT, log-mel, MFCC, per-dimension
//! standardization, and the two-layer learned-dictionary representation
//! (see [`dict`]).

pub mod dict;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip shorter than one frame ({len} < {frame_len})")]
    ClipTooShort { len: usize, frame_len: usize },
    #[error("frame_len must be a power of two, got {0}")]
    BadFrameLen(usize),
    #[error("hop must be in 1..=frame_len, got {0}")]
    BadHop(usize),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("wrong feature kind: expected {expected:?}, got {got:?}")]
    WrongKind { expected: FeatureKind, got: FeatureKind },
    #[error("n_coeffs {0} exceeds number of mel bands {1}")]
    TooManyCoeffs(usize, usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Magnitude spectrogram of Hann-windowed frames.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// `[n_frames][n_bins]` magnitudes, `n_bins = frame_len/2 + 1`.
    pub frames: Vec<Vec<f64>>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate_hz: u32,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    LogMel,
    Mfcc,
    LearnedLayer1,
    LearnedLayer2,
}

/// A matrix of per-frame feature vectors of a single kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureFrames {
    pub vectors: Vec<Vec<f64>>,
    pub kind: FeatureKind,
}

impl FeatureFrames {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }
}

/// Short-time Fourier transform with a Hann window.
pub fn stft(
    clip: &AudioClip,
    frame_len: usize,
    hop: usize,
) -> Result<Spectrogram, FeatureError> {
    if frame_len == 0 || !frame_len.is_power_of_two() {
        return Err(FeatureError::BadFrameLen(frame_len));
    }
    if hop == 0 || hop > frame_len {
        return Err(FeatureError::BadHop(hop));
    }
    if clip.samples.len() < frame_len {
        return Err(FeatureError::ClipTooShort { len: clip.samples.len(), frame_len });
    }
    let window: Vec<f64> = (0..frame_len)
        .map(|i| {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame_len as f64).cos()
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(frame_len);
    let n_bins = frame_len / 2 + 1;
    let n_frames = 1 + (clip.samples.len() - frame_len) / hop;
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_len];
    for f in 0..n_frames {
        let start = f * hop;
        for i in 0..frame_len {
            buf[i] = Complex::new(clip.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..n_bins].iter().map(|c| c.norm()).collect());
    }
    Ok(Spectrogram { frames, frame_len, hop, sample_rate_hz: clip.sample_rate_hz })
}

/// Triangular mel filterbank, peak-normalized to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MelBank {
    /// `[n_mels][n_bins]` weights.
    pub weights: Vec<Vec<f64>>,
    pub center_freqs_hz: Vec<f64>,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl MelBank {
    pub fn new(
        n_mels: usize,
        frame_len: usize,
        sample_rate_hz: u32,
        fmin_hz: f64,
        fmax_hz: f64,
    ) -> Result<Self, FeatureError> {
        if n_mels == 0 {
            return Err(FeatureError::InvalidConfig("n_mels must be > 0".into()));
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        let fmax = if fmax_hz <= 0.0 { nyquist } else { fmax_hz.min(nyquist) };
        if fmin_hz < 0.0 || fmin_hz >= fmax {
            return Err(FeatureError::InvalidConfig(format!(
                "bad mel range [{fmin_hz}, {fmax}]"
            )));
        }
        let n_bins = frame_len / 2 + 1;
        let mel_lo = hz_to_mel(fmin_hz);
        let mel_hi = hz_to_mel(fmax);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate_hz as f64 / frame_len as f64;
        let mut weights = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut row = vec![0.0; n_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                if f > left && f < center {
                    *w = (f - left) / (center - left);
                } else if (f - center).abs() < 1e-12 {
                    *w = 1.0;
                } else if f > center && f < right {
                    *w = (right - f) / (right - center);
                }
            }
            // peak-normalize so every row tops out at exactly 1
            let peak = row.iter().cloned().fold(0.0f64, f64::max);
            if peak > 0.0 {
                for w in row.iter_mut() {
                    *w /= peak;
                }
            }
            weights.push(row);
        }
        Ok(Self { weights, center_freqs_hz: edges[1..=n_mels].to_vec(), fmin_hz, fmax_hz: fmax })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }
}

/// Log mel-band energies: `log(sum_k w[m][k] * mag[k]^2 + floor)`.
pub fn log_mel(
    spec: &Spectrogram,
    bank: &MelBank,
    floor: f64,
) -> Result<FeatureFrames, FeatureError> {
    let n_bins = spec.n_bins();
    if bank.weights.iter().any(|row| row.len() != n_bins) {
        return Err(FeatureError::DimMismatch(format!(
            "mel bank built for {} bins, spectrogram has {}",
            bank.weights.first().map_or(0, |r| r.len()),
            n_bins
        )));
    }
    let vectors = spec
        .frames
        .iter()
        .map(|frame| {
            bank.weights
                .iter()
                .map(|row| {
                    let e: f64 = row.iter().zip(frame).map(|(w, m)| w * m * m).sum();
                    (e + floor).ln()
                })
                .collect()
        })
        .collect();
    Ok(FeatureFrames { vectors, kind: FeatureKind::LogMel })
}

/// First `n_coeffs` coefficients (c0 included) of the orthonormal DCT-II of
/// each log-mel frame.
pub fn mfcc(logmel: &FeatureFrames, n_coeffs: usize) -> Result<FeatureFrames, FeatureError> {
    if logmel.kind != FeatureKind::LogMel {
        return Err(FeatureError::WrongKind { expected: FeatureKind::LogMel, got: logmel.kind });
    }
    let n_mels = logmel.dim();
    if n_coeffs > n_mels {
        return Err(FeatureError::TooManyCoeffs(n_coeffs, n_mels));
    }
    let basis = dct2_basis(n_mels, n_coeffs);
    let vectors = logmel
        .vectors
        .iter()
        .map(|frame| basis.iter().map(|row| row.iter().zip(frame).map(|(b, x)| b * x).sum()).collect())
        .collect();
    Ok(FeatureFrames { vectors, kind: FeatureKind::Mfcc })
}

/// Orthonormal DCT-II basis rows, `[n_coeffs][n]`.
pub fn dct2_basis(n: usize, n_coeffs: usize) -> Vec<Vec<f64>> {
    let mut basis = Vec::with_capacity(n_coeffs);
    for j in 0..n_coeffs {
        let scale = if j == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        basis.push(
            (0..n)
                .map(|i| {
                    scale * (std::f64::consts::PI * j as f64 * (i as f64 + 0.5) / n as f64).cos()
                })
                .collect(),
        );
    }
    basis
}

/// Per-dimension mean/std computed on training data, reusable on test data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const VAR_EPS: f64 = 1e-8;

/// Standardize rows to zero mean, unit variance per dimension. With
/// `stats = None` the statistics are computed from the input; pass the
/// returned stats to apply the same transform to held-out data.
pub fn standardize(
    rows: &[Vec<f64>],
    stats: Option<&StandardizeStats>,
) -> Result<(Vec<Vec<f64>>, StandardizeStats), FeatureError> {
    if rows.is_empty() {
        return Err(FeatureError::InsufficientData("no rows to standardize".into()));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(FeatureError::DimMismatch("ragged rows".into()));
    }
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != dim {
                return Err(FeatureError::DimMismatch(format!(
                    "stats dim {} vs data dim {}",
                    s.mean.len(),
                    dim
                )));
            }
            s.clone()
        }
        None => {
            let n = rows.len() as f64;
            let mut mean = vec![0.0; dim];
            for r in rows {
                for (m, x) in mean.iter_mut().zip(r) {
                    *m += x;
                }
            }
            for m in mean.iter_mut() {
                *m /= n;
            }
            let mut var = vec![0.0; dim];
            for r in rows {
                for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                    let d = x - m;
                    *v += d * d;
                }
            }
            let std = var.iter().map(|v| (v / n).max(VAR_EPS).sqrt()).collect();
            StandardizeStats { mean, std }
        }
    };
    let out = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&stats.mean)
                .zip(&stats.std)
                .map(|((x, m), s)| (x - m) / s)
                .collect()
        })
        .collect();
    Ok((out, stats))
}
