//! Feature cache file: a small binary container for per-clip feature
//! matrices so expensive extraction runs once.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "AVFC"
//! 4       2     version (currently 1)
//! 6       1     kind tag (0 log-mel, 1 mfcc, 2 learned-layer1, 3 learned-layer2)
//! 7       8     feature-config hash
//! 15      4     n_rows (u32)
//! 19      4     dim (u32)
//! 23      ...   n_rows * dim f32 values, row-major
//! ```

use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::features::{FeatureFrames, FeatureKind};

const MAGIC: &[u8; 4] = b"AVFC";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a feature cache file: {0}")]
    BadFile(String),
    #[error("unsupported cache version {0}")]
    BadVersion(u16),
}

fn kind_tag(kind: FeatureKind) -> u8 {
    match kind {
        FeatureKind::LogMel => 0,
        FeatureKind::Mfcc => 1,
        FeatureKind::LearnedLayer1 => 2,
        FeatureKind::LearnedLayer2 => 3,
    }
}

fn tag_kind(tag: u8) -> Option<FeatureKind> {
    match tag {
        0 => Some(FeatureKind::LogMel),
        1 => Some(FeatureKind::Mfcc),
        2 => Some(FeatureKind::LearnedLayer1),
        3 => Some(FeatureKind::LearnedLayer2),
        _ => None,
    }
}

pub fn encode_features(frames: &FeatureFrames, config_hash: u64) -> Result<Vec<u8>, CacheError> {
    let n_rows = frames.vectors.len();
    let dim = frames.dim();
    if frames.vectors.iter().any(|v| v.len() != dim) {
        return Err(CacheError::BadFile("ragged feature rows".into()));
    }
    let mut out = Vec::with_capacity(23 + n_rows * dim * 4);
    out.extend_from_slice(MAGIC);
    out.write_u16::<LittleEndian>(VERSION)?;
    out.push(kind_tag(frames.kind));
    out.write_u64::<LittleEndian>(config_hash)?;
    out.write_u32::<LittleEndian>(n_rows as u32)?;
    out.write_u32::<LittleEndian>(dim as u32)?;
    for row in &frames.vectors {
        for &v in row {
            out.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(out)
}

/// Decode a feature cache buffer. Entry point shared with the fuzz targets.
pub fn decode_features(bytes: &[u8]) -> Result<(FeatureFrames, u64), CacheError> {
    if bytes.len() < 23 {
        return Err(CacheError::BadFile("truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(CacheError::BadFile("bad magic".into()));
    }
    let mut cur = std::io::Cursor::new(&bytes[4..]);
    let version = cur.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(CacheError::BadVersion(version));
    }
    let tag = cur.read_u8()?;
    let kind = tag_kind(tag).ok_or_else(|| CacheError::BadFile(format!("bad kind tag {tag}")))?;
    let config_hash = cur.read_u64::<LittleEndian>()?;
    let n_rows = cur.read_u32::<LittleEndian>()? as usize;
    let dim = cur.read_u32::<LittleEndian>()? as usize;
    let need = n_rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| CacheError::BadFile("size overflow".into()))?;
    if bytes.len() - 23 < need {
        return Err(CacheError::BadFile("payload shorter than header claims".into()));
    }
    let mut vectors = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            row.push(cur.read_f32::<LittleEndian>()? as f64);
        }
        vectors.push(row);
    }
    Ok((FeatureFrames { vectors, kind }, config_hash))
}

pub fn write_features(
    frames: &FeatureFrames,
    config_hash: u64,
    path: impl AsRef<Path>,
) -> Result<(), CacheError> {
    std::fs::write(path, encode_features(frames, config_hash)?)?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<(FeatureFrames, u64), CacheError> {
    decode_features(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_f32_precision() {
        let frames = FeatureFrames {
            vectors: vec![vec![1.5, -2.25, 0.0], vec![1e-3, 7.0, -0.5]],
            kind: FeatureKind::Mfcc,
        };
        let bytes = encode_features(&frames, 42).unwrap();
        let (back, h) = decode_features(&bytes).unwrap();
        assert_eq!(h, 42);
        assert_eq!(back.kind, FeatureKind::Mfcc);
        // values chosen exactly representable in f32
        assert_eq!(back.vectors[0], vec![1.5, -2.25, 0.0]);
        assert_eq!(back.vectors[1][1], 7.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_features(b"nope").is_err());
        assert!(decode_features(&[0u8; 64]).is_err());
        // header claiming more rows than the payload holds
        let frames = FeatureFrames { vectors: vec![vec![1.0; 4]], kind: FeatureKind::LogMel };
        let mut bytes = encode_features(&frames, 0).unwrap();
        bytes[15] = 0xFF; // inflate n_rows
        assert!(decode_features(&bytes).is_err());
    }
}
