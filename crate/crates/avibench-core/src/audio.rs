//! WAV reading/writing, peak normalization, and fixed-length segmentation.
//!
//! Audio is represented as mono sample buffers in `[-1, 1)`, obtained from
//! 16-bit PCM by dividing by 32768. The canonical challenge format is
//! single-channel 44.1 kHz, but any rate is carried through unchanged.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One 16-bit quantization step; tolerances on normalized audio use this.
pub const QUANT_STEP: f64 = 1.0 / 32768.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a wav file: {0}")]
    NotAWav(String),
    #[error("unsupported bit depth: {0} (only 16-bit PCM supported)")]
    UnsupportedBitDepth(u16),
    #[error("unsupported wav format tag {0} (only integer PCM supported)")]
    UnsupportedFormat(u16),
    #[error("multi-channel file ({0} channels); pass downmix=true to average")]
    MultiChannel(u16),
    #[error("empty clip")]
    EmptyClip,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Fixed-rate mono sample buffer with identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(id: impl Into<String>, samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        assert!(sample_rate_hz > 0, "sample rate must be positive");
        Self { id: id.into(), samples, sample_rate_hz }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

/// Read a RIFF/WAVE file with 16-bit integer PCM samples.
///
/// Samples are scaled to `[-1, 1)` by dividing by 32768. The clip id is the
/// file stem. Multi-channel files are an error unless `downmix` is set, in
/// which case channels are averaged.
pub fn read_wav(path: impl AsRef<Path>, downmix: bool) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".to_string());
    read_wav_bytes(&bytes, &id, downmix)
}

/// Decode a WAV byte buffer. Entry point used by `read_wav` and the fuzz
/// targets.
pub fn read_wav_bytes(bytes: &[u8], id: &str, downmix: bool) -> Result<AudioClip, AudioError> {
    let mut cur = Cursor::new(bytes);
    let mut tag = [0u8; 4];
    cur.read_exact(&mut tag).map_err(|_| AudioError::NotAWav("truncated header".into()))?;
    if &tag != b"RIFF" {
        return Err(AudioError::NotAWav("missing RIFF tag".into()));
    }
    let _riff_len = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| AudioError::NotAWav("truncated header".into()))?;
    cur.read_exact(&mut tag).map_err(|_| AudioError::NotAWav("truncated header".into()))?;
    if &tag != b"WAVE" {
        return Err(AudioError::NotAWav("missing WAVE tag".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<Vec<u8>> = None;
    loop {
        let mut chunk_id = [0u8; 4];
        match cur.read_exact(&mut chunk_id) {
            Ok(()) => {}
            Err(_) => break,
        }
        let chunk_len = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| AudioError::NotAWav("truncated chunk header".into()))?;
        let pos = cur.position() as usize;
        let end = pos
            .checked_add(chunk_len as usize)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| AudioError::NotAWav("chunk overruns file".into()))?;
        match &chunk_id {
            b"fmt " => {
                if chunk_len < 16 {
                    return Err(AudioError::NotAWav("fmt chunk too short".into()));
                }
                let format = cur.read_u16::<LittleEndian>()?;
                let channels = cur.read_u16::<LittleEndian>()?;
                let rate = cur.read_u32::<LittleEndian>()?;
                let _byte_rate = cur.read_u32::<LittleEndian>()?;
                let _block_align = cur.read_u16::<LittleEndian>()?;
                let bits = cur.read_u16::<LittleEndian>()?;
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                data = Some(bytes[pos..end].to_vec());
            }
            _ => {} // skip unknown chunks
        }
        // chunks are word-aligned
        let skip = end + (chunk_len as usize & 1);
        if skip > bytes.len() {
            break;
        }
        cur.set_position(skip as u64);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| AudioError::NotAWav("missing fmt chunk".into()))?;
    if format != 1 {
        return Err(AudioError::UnsupportedFormat(format));
    }
    if bits != 16 {
        return Err(AudioError::UnsupportedBitDepth(bits));
    }
    if channels == 0 {
        return Err(AudioError::NotAWav("zero channels".into()));
    }
    if channels > 1 && !downmix {
        return Err(AudioError::MultiChannel(channels));
    }
    if rate == 0 {
        return Err(AudioError::NotAWav("zero sample rate".into()));
    }
    let data = data.ok_or_else(|| AudioError::NotAWav("missing data chunk".into()))?;

    let n_frames = data.len() / (2 * channels as usize);
    let mut samples = Vec::with_capacity(n_frames);
    let mut rd = Cursor::new(&data);
    for _ in 0..n_frames {
        let mut acc = 0.0f64;
        for _ in 0..channels {
            let v = rd.read_i16::<LittleEndian>()?;
            acc += v as f64 * QUANT_STEP;
        }
        samples.push(acc / channels as f64);
    }
    Ok(AudioClip { id: id.to_string(), samples, sample_rate_hz: rate })
}

/// Write a mono clip as 16-bit PCM RIFF/WAVE. Samples are clamped to
/// `[-1, 1)` and rounded to the nearest 16-bit step.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let bytes = wav_bytes(clip)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn wav_bytes(clip: &AudioClip) -> Result<Vec<u8>, AudioError> {
    if clip.samples.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.write_all(b"RIFF")?;
    out.write_u32::<LittleEndian>(36 + data_len as u32)?;
    out.write_all(b"WAVE")?;
    out.write_all(b"fmt ")?;
    out.write_u32::<LittleEndian>(16)?;
    out.write_u16::<LittleEndian>(1)?; // PCM
    out.write_u16::<LittleEndian>(1)?; // mono
    out.write_u32::<LittleEndian>(clip.sample_rate_hz)?;
    out.write_u32::<LittleEndian>(clip.sample_rate_hz * 2)?;
    out.write_u16::<LittleEndian>(2)?;
    out.write_u16::<LittleEndian>(16)?;
    out.write_all(b"data")?;
    out.write_u32::<LittleEndian>(data_len as u32)?;
    for &s in &clip.samples {
        out.write_i16::<LittleEndian>(sample_to_i16(s))?;
    }
    Ok(out)
}

fn sample_to_i16(s: f64) -> i16 {
    let v = (s * 32768.0).round();
    v.clamp(-32768.0, 32767.0) as i16
}

/// Result of [`normalize_peak`]: the clip plus a flag for all-silent input,
/// which is passed through unchanged rather than treated as an error.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub clip: AudioClip,
    pub silent: bool,
}

/// Scale a clip so its peak sits `headroom_db` below full scale
/// (default 2 dB, the same convention as `sox gain -n -2`).
pub fn normalize_peak(clip: &AudioClip, headroom_db: f64) -> Result<Normalized, AudioError> {
    if clip.samples.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    let peak = clip.peak();
    if peak == 0.0 {
        return Ok(Normalized { clip: clip.clone(), silent: true });
    }
    let target = 10f64.powf(-headroom_db / 20.0);
    let gain = target / peak;
    let samples = clip.samples.iter().map(|s| s * gain).collect();
    Ok(Normalized {
        clip: AudioClip { id: clip.id.clone(), samples, sample_rate_hz: clip.sample_rate_hz },
        silent: false,
    })
}

/// Split a clip into consecutive non-overlapping `clip_len_s` segments.
///
/// A trailing remainder is kept (zero-padded) iff it covers at least half a
/// segment; shorter remainders are dropped. Child ids append a zero-padded
/// index to the parent id.
pub fn segment(clip: &AudioClip, clip_len_s: f64) -> Result<Vec<AudioClip>, AudioError> {
    if clip_len_s <= 0.0 {
        return Err(AudioError::InvalidArgument("clip_len_s must be > 0".into()));
    }
    let seg_len = (clip_len_s * clip.sample_rate_hz as f64).round() as usize;
    if seg_len == 0 {
        return Err(AudioError::InvalidArgument("clip_len_s rounds to zero samples".into()));
    }
    let n_full = clip.samples.len() / seg_len;
    let rem = clip.samples.len() - n_full * seg_len;
    let keep_rem = rem * 2 >= seg_len;
    let total = n_full + usize::from(keep_rem);
    let width = index_width(total);
    let mut out = Vec::with_capacity(total);
    for i in 0..n_full {
        let start = i * seg_len;
        out.push(AudioClip {
            id: format!("{}_{:0width$}", clip.id, i, width = width),
            samples: clip.samples[start..start + seg_len].to_vec(),
            sample_rate_hz: clip.sample_rate_hz,
        });
    }
    if keep_rem {
        let mut samples = clip.samples[n_full * seg_len..].to_vec();
        samples.resize(seg_len, 0.0);
        out.push(AudioClip {
            id: format!("{}_{:0width$}", clip.id, n_full, width = width),
            samples,
            sample_rate_hz: clip.sample_rate_hz,
        });
    }
    Ok(out)
}

fn index_width(n: usize) -> usize {
    std::cmp::max(4, n.saturating_sub(1).to_string().len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(id: &str, freq: f64, amp: f64, n: usize, rate: u32) -> AudioClip {
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(id, samples, rate)
    }

    #[test]
    fn silence_roundtrip() {
        let clip = AudioClip::new("quiet", vec![0.0; 44100], 44100);
        let bytes = wav_bytes(&clip).unwrap();
        let back = read_wav_bytes(&bytes, "quiet", false).unwrap();
        assert_eq!(back.samples.len(), 44100);
        assert!(back.samples.iter().all(|&s| s == 0.0));
        assert_eq!(back.sample_rate_hz, 44100);
    }

    #[test]
    fn full_scale_negative_maps_to_minus_one() {
        let mut bytes = wav_bytes(&AudioClip::new("x", vec![0.0; 4], 44100)).unwrap();
        // overwrite the first data sample with -32768
        let data_off = bytes.len() - 8;
        bytes[data_off] = 0x00;
        bytes[data_off + 1] = 0x80;
        let clip = read_wav_bytes(&bytes, "x", false).unwrap();
        assert_eq!(clip.samples[0], -1.0);
    }

    #[test]
    fn stereo_without_downmix_errors() {
        // hand-build a stereo wav
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36u32 + 8).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes()); // stereo
        out.extend_from_slice(&44100u32.to_le_bytes());
        out.extend_from_slice(&(44100u32 * 4).to_le_bytes());
        out.extend_from_slice(&4u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&8u32.to_le_bytes());
        out.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            read_wav_bytes(&out, "s", false),
            Err(AudioError::MultiChannel(2))
        ));
        let clip = read_wav_bytes(&out, "s", true).unwrap();
        assert_eq!(clip.samples.len(), 2);
    }

    #[test]
    fn normalize_hits_target_peak() {
        let clip = sine("s", 440.0, 0.1, 44100, 44100);
        let norm = normalize_peak(&clip, 2.0).unwrap();
        assert!(!norm.silent);
        let target = 10f64.powf(-0.1);
        assert!((norm.clip.peak() - target).abs() < QUANT_STEP, "peak {}", norm.clip.peak());
    }

    #[test]
    fn normalize_idempotent() {
        let clip = sine("s", 440.0, 0.3, 22050, 44100);
        let once = normalize_peak(&clip, 2.0).unwrap().clip;
        let twice = normalize_peak(&once, 2.0).unwrap().clip;
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            assert!((a - b).abs() <= QUANT_STEP);
        }
    }

    #[test]
    fn normalize_silent_flagged() {
        let clip = AudioClip::new("z", vec![0.0; 100], 44100);
        let norm = normalize_peak(&clip, 2.0).unwrap();
        assert!(norm.silent);
        assert_eq!(norm.clip.samples, clip.samples);
    }

    #[test]
    fn segment_exact_division() {
        let clip = AudioClip::new("rec", vec![0.1; 1800 * 1000], 1000);
        let segs = segment(&clip, 1.0).unwrap();
        assert_eq!(segs.len(), 1800);
    }

    #[test]
    fn segment_remainder_padded() {
        // 25 s at 1 kHz, 10 s segments: remainder 5 s == 50%, kept and padded
        let clip = AudioClip::new("rec", (0..25_000).map(|i| i as f64 * 1e-6).collect(), 1000);
        let segs = segment(&clip, 10.0).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[2].samples.len(), 10_000);
        assert!(segs[2].samples[5_000..].iter().all(|&s| s == 0.0));
        assert_eq!(segs[0].id, "rec_0000");
        assert_eq!(segs[2].id, "rec_0002");
    }

    #[test]
    fn segment_short_clip_empty() {
        let clip = AudioClip::new("rec", vec![0.5; 4000], 1000);
        assert!(segment(&clip, 10.0).unwrap().is_empty());
    }

    #[test]
    fn segments_concatenate_to_prefix() {
        let clip = AudioClip::new("rec", (0..23_456).map(|i| (i as f64).sin() * 0.5).collect(), 1000);
        let segs = segment(&clip, 10.0).unwrap();
        let cat: Vec<f64> = segs.iter().flat_map(|s| s.samples.iter().copied()).collect();
        let n = clip.samples.len().min(cat.len());
        assert_eq!(&cat[..n], &clip.samples[..n]);
    }

    #[test]
    fn wav_roundtrip_bit_identical() {
        // in-range values on the 16-bit grid survive a write/read cycle exactly
        let samples: Vec<f64> = (-100i32..100).map(|v| v as f64 * 77.0 * QUANT_STEP).collect();
        let clip = AudioClip::new("grid", samples, 44100);
        let bytes = wav_bytes(&clip).unwrap();
        let back = read_wav_bytes(&bytes, "grid", false).unwrap();
        assert_eq!(clip.samples, back.samples);
    }

    #[test]
    fn garbage_is_not_a_wav() {
        assert!(matches!(read_wav_bytes(b"hello", "h", false), Err(AudioError::NotAWav(_))));
        assert!(matches!(read_wav_bytes(b"RIFFxxxxWAVk", "h", false), Err(AudioError::NotAWav(_))));
    }
}
