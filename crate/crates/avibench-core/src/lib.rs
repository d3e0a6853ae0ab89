//! Core toolkit for general-purpose "bird present / absent" audio detection
//! benchmarks: audio I/O and segmentation, spectral features, baseline
//! detectors (MFCC+GMM and learned-feature+random-forest), synthetic
//! soundscape generation, and the evaluation suite (AUC, bootstrap,
//! calibration, Platt scaling, site stratification).

pub mod audio;
pub mod cache;
pub mod detect;
pub mod eval;
pub mod features;
pub mod figures;
pub mod manifest;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use audio::AudioClip;
pub use manifest::{DatasetManifest, Label, ManifestItem};
