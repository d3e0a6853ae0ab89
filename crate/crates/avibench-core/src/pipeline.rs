//! End-to-end wiring: a single feature configuration (hashed into model and
//! cache files), front-end fitting, and train / predict / adapt / crossgrid
//! runs that the command-line tool delegates to.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::{self, AudioClip};
use crate::detect::forest::{ForestConfig, RandomForest};
use crate::detect::gmm::{GmmFitConfig, GmmPair};
use crate::detect::{self, ClipFeatures, DetectError, DetectorModel, TrainItem};
use crate::eval::{self, EvalError, SubmissionSet};
use crate::features::dict::{self, DictConfig, FeatureDictionary};
use crate::features::{self, FeatureError, FeatureFrames, MelBank, StandardizeStats};
use crate::manifest::{DatasetManifest, Label, ManifestError};
use crate::seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Audio(#[from] audio::AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty manifest: {0}")]
    EmptyManifest(String),
}

/// Everything that determines feature values for a clip. Hashed into model
/// files and feature caches so mismatched artifacts are refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub frame_len: usize,
    pub hop: usize,
    /// Mel bands for the MFCC path.
    pub n_mels: usize,
    /// Mel bands for the learned-dictionary path.
    pub dict_mels: usize,
    pub fmin_hz: f64,
    /// 0 means Nyquist.
    pub fmax_hz: f64,
    pub log_floor: f64,
    pub n_mfcc: usize,
    /// Peak normalization headroom; normalized peak = 10^(-h/20).
    pub normalize_headroom_db: f64,
    pub dict: DictConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 512,
            n_mels: 40,
            dict_mels: 32,
            fmin_hz: 50.0,
            fmax_hz: 0.0,
            log_floor: 1e-10,
            n_mfcc: 13,
            normalize_headroom_db: 2.0,
            dict: DictConfig::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_mfcc > self.n_mels {
            return Err(PipelineError::InvalidConfig(format!(
                "n_mfcc {} exceeds n_mels {}",
                self.n_mfcc, self.n_mels
            )));
        }
        if self.frame_len == 0 || !self.frame_len.is_power_of_two() {
            return Err(PipelineError::InvalidConfig("frame_len must be a power of two".into()));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(PipelineError::InvalidConfig("hop must be in 1..=frame_len".into()));
        }
        Ok(())
    }

    /// 64-bit digest of the canonical JSON encoding.
    pub fn hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("feature config serializes");
        let digest = Sha256::digest(&json);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Gmm,
    Forest,
}

/// Detector choice plus its training hyperparameters. The `seed` fields
/// inside the sub-configs are ignored; stage seeds are derived from the run
/// seed instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub detector: DetectorKind,
    pub gmm: GmmFitConfig,
    pub gmm_temperature: f64,
    pub forest: ForestConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            detector: DetectorKind::Gmm,
            gmm: GmmFitConfig::default(),
            gmm_temperature: 1.0,
            forest: ForestConfig::default(),
            seed: 0,
        }
    }
}

/// Per-clip preparation shared by every path: peak normalization with the
/// configured headroom (silent clips pass through unchanged).
pub fn prep_clip(clip: &AudioClip, cfg: &FeatureConfig) -> Result<AudioClip, PipelineError> {
    Ok(audio::normalize_peak(clip, cfg.normalize_headroom_db)?.clip)
}

fn logmel_frames(
    clip: &AudioClip,
    cfg: &FeatureConfig,
    n_mels: usize,
) -> Result<FeatureFrames, PipelineError> {
    let sg = features::stft(clip, cfg.frame_len, cfg.hop)?;
    let bank = MelBank::new(n_mels, cfg.frame_len, clip.sample_rate_hz, cfg.fmin_hz, cfg.fmax_hz)?;
    Ok(features::log_mel(&sg, &bank, cfg.log_floor)?)
}

/// MFCC frame matrix for one (already prepared) clip.
pub fn mfcc_frames(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureFrames, PipelineError> {
    let lm = logmel_frames(clip, cfg, cfg.n_mels)?;
    Ok(features::mfcc(&lm, cfg.n_mfcc)?)
}

/// Dictionary-path log-mel frames for one (already prepared) clip.
pub fn dict_logmel(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureFrames, PipelineError> {
    logmel_frames(clip, cfg, cfg.dict_mels)
}

/// Fitted learned-feature state for the forest path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnedFrontEnd {
    pub dictionary: FeatureDictionary,
    pub stats: StandardizeStats,
}

/// The feature front end a trained model was fitted with. GMM models use
/// the stateless MFCC path (`learned = None`); forest models carry the
/// fitted dictionary and standardization statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontEnd {
    pub config: FeatureConfig,
    pub learned: Option<LearnedFrontEnd>,
}

impl FrontEnd {
    /// Features the associated detector scores, for one raw clip.
    pub fn features(&self, clip: &AudioClip) -> Result<ClipFeatures, PipelineError> {
        let prepped = prep_clip(clip, &self.config)?;
        match &self.learned {
            None => Ok(ClipFeatures::Frames(mfcc_frames(&prepped, &self.config)?.vectors)),
            Some(l) => {
                let lm = dict_logmel(&prepped, &self.config)?;
                let vec = dict::encode_pool(&lm, &l.dictionary)?;
                let (rows, _) = features::standardize(&[vec], Some(&l.stats))?;
                Ok(ClipFeatures::Vector(rows.into_iter().next().unwrap()))
            }
        }
    }
}

/// A trained detector with everything needed to score raw audio.
#[derive(Debug, Clone)]
pub struct DetectorBundle {
    pub frontend: FrontEnd,
    pub model: DetectorModel,
}

impl DetectorBundle {
    pub fn score_clip(&self, clip: &AudioClip) -> Result<f64, PipelineError> {
        let f = self.frontend.features(clip)?;
        Ok(self.model.score(&f)?)
    }

    /// Write the model container (`model.avbm`) and the front-end state
    /// (`frontend.json`) under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        detect::save_model(&self.model, self.frontend.config.hash(), dir.join("model.avbm"))?;
        std::fs::write(dir.join("frontend.json"), serde_json::to_vec_pretty(&self.frontend)?)?;
        Ok(())
    }

    /// Load a saved bundle, refusing a model whose feature-config hash does
    /// not match the stored front end.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = dir.as_ref();
        let (model, model_hash) = detect::load_model(dir.join("model.avbm"))?;
        let frontend: FrontEnd =
            serde_json::from_slice(&std::fs::read(dir.join("frontend.json"))?)?;
        detect::check_feature_hash(model_hash, frontend.config.hash())?;
        Ok(Self { frontend, model })
    }
}

/// A manifest with its audio loaded into memory, labels attached.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub clips: Vec<AudioClip>,
}

impl LoadedDataset {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Load every clip referenced by a manifest file; relative audio paths
/// resolve against the manifest's directory.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<LoadedDataset, PipelineError> {
    let manifest_path = manifest_path.as_ref();
    let manifest = crate::manifest::load_manifest(manifest_path)?;
    let base: PathBuf = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let clips: Result<Vec<AudioClip>, PipelineError> = manifest
        .items
        .par_iter()
        .map(|it| {
            let p = base.join(&it.path);
            let mut clip = audio::read_wav(&p, true)?;
            clip.id = it.item_id.clone();
            Ok(clip)
        })
        .collect();
    Ok(LoadedDataset { manifest, clips: clips? })
}

fn labeled_items(ds: &LoadedDataset) -> Vec<(usize, bool)> {
    ds.manifest
        .items
        .iter()
        .enumerate()
        .filter_map(|(i, it)| match it.label {
            Label::Positive => Some((i, true)),
            Label::Negative => Some((i, false)),
            Label::Unknown => None,
        })
        .collect()
}

/// Fit the front end on training clips: identity for the MFCC path, learned
/// dictionary plus standardization statistics for the forest path.
pub fn fit_frontend(
    cfg: &PipelineConfig,
    train_clips: &[AudioClip],
) -> Result<FrontEnd, PipelineError> {
    cfg.features.validate()?;
    match cfg.detector {
        DetectorKind::Gmm => Ok(FrontEnd { config: cfg.features.clone(), learned: None }),
        DetectorKind::Forest => {
            let melspecs: Result<Vec<FeatureFrames>, PipelineError> = train_clips
                .par_iter()
                .map(|c| dict_logmel(&prep_clip(c, &cfg.features)?, &cfg.features))
                .collect();
            let melspecs = melspecs?;
            let dict_cfg =
                DictConfig { seed: seed::derive_seed(cfg.seed, "dict"), ..cfg.features.dict.clone() };
            let dictionary = dict::learn_dictionary(&melspecs, &dict_cfg)?;
            let vectors: Result<Vec<Vec<f64>>, PipelineError> = melspecs
                .par_iter()
                .map(|lm| Ok(dict::encode_pool(lm, &dictionary)?))
                .collect();
            let (_, stats) = features::standardize(&vectors?, None)?;
            Ok(FrontEnd {
                config: FeatureConfig { dict: dict_cfg, ..cfg.features.clone() },
                learned: Some(LearnedFrontEnd { dictionary, stats }),
            })
        }
    }
}

/// Refit the configured detector on already-extracted training items. Also
/// the retrain step used by self-adaptation.
pub fn fit_from_items(
    cfg: &PipelineConfig,
    items: &[TrainItem],
) -> Result<DetectorModel, DetectError> {
    match cfg.detector {
        DetectorKind::Gmm => {
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for it in items {
                let frames = match &it.features {
                    ClipFeatures::Frames(f) => f,
                    ClipFeatures::Vector(_) => {
                        return Err(DetectError::FeatureKindMismatch("frame sequences"))
                    }
                };
                if it.label {
                    pos.extend(frames.iter().cloned());
                } else {
                    neg.extend(frames.iter().cloned());
                }
            }
            let fit = GmmFitConfig { seed: seed::derive_seed(cfg.seed, "gmm"), ..cfg.gmm.clone() };
            Ok(DetectorModel::Gmm(GmmPair::fit(&pos, &neg, &fit, cfg.gmm_temperature)?))
        }
        DetectorKind::Forest => {
            let mut vectors = Vec::with_capacity(items.len());
            let mut labels = Vec::with_capacity(items.len());
            for it in items {
                match &it.features {
                    ClipFeatures::Vector(v) => vectors.push(v.clone()),
                    ClipFeatures::Frames(_) => {
                        return Err(DetectError::FeatureKindMismatch("summary vectors"))
                    }
                }
                labels.push(it.label);
            }
            let fcfg =
                ForestConfig { seed: seed::derive_seed(cfg.seed, "forest"), ..cfg.forest.clone() };
            Ok(DetectorModel::Forest(RandomForest::fit(&vectors, &labels, &fcfg)?))
        }
    }
}

/// Extract detector features for every clip through a fitted front end.
pub fn extract_features(
    frontend: &FrontEnd,
    clips: &[AudioClip],
) -> Result<Vec<ClipFeatures>, PipelineError> {
    clips.par_iter().map(|c| frontend.features(c)).collect()
}

/// Train the configured detector on a loaded dataset. Unknown-label items
/// are skipped.
pub fn train(cfg: &PipelineConfig, ds: &LoadedDataset) -> Result<DetectorBundle, PipelineError> {
    let labeled = labeled_items(ds);
    if labeled.is_empty() {
        return Err(PipelineError::EmptyManifest("no labeled items to train on".into()));
    }
    let train_clips: Vec<AudioClip> =
        labeled.iter().map(|&(i, _)| ds.clips[i].clone()).collect();
    let frontend = fit_frontend(cfg, &train_clips)?;
    let feats = extract_features(&frontend, &train_clips)?;
    let items: Vec<TrainItem> = labeled
        .iter()
        .zip(feats)
        .map(|(&(i, label), features)| TrainItem {
            id: ds.manifest.items[i].item_id.clone(),
            features,
            label,
        })
        .collect();
    let model = fit_from_items(cfg, &items)?;
    Ok(DetectorBundle { frontend, model })
}

/// Score every clip in a dataset; item ids map to scores in `[0, 1]`.
pub fn predict(
    bundle: &DetectorBundle,
    ds: &LoadedDataset,
) -> Result<SubmissionSet, PipelineError> {
    let scores: Result<Vec<f64>, PipelineError> =
        ds.clips.par_iter().map(|c| bundle.score_clip(c)).collect();
    let preds = ds
        .manifest
        .items
        .iter()
        .map(|it| it.item_id.clone())
        .zip(scores?)
        .collect();
    Ok(SubmissionSet::new(preds)?)
}

/// Train on the labeled training set, then run pseudo-label self-adaptation
/// against the unlabeled pool and return both stages.
pub fn train_and_adapt(
    cfg: &PipelineConfig,
    train_ds: &LoadedDataset,
    pool_ds: &LoadedDataset,
    adapt_cfg: &detect::AdaptationConfig,
) -> Result<(DetectorBundle, DetectorBundle), PipelineError> {
    let initial = train(cfg, train_ds)?;
    let labeled = labeled_items(train_ds);
    let train_clips: Vec<AudioClip> =
        labeled.iter().map(|&(i, _)| train_ds.clips[i].clone()).collect();
    let feats = extract_features(&initial.frontend, &train_clips)?;
    let items: Vec<TrainItem> = labeled
        .iter()
        .zip(feats)
        .map(|(&(i, label), features)| TrainItem {
            id: train_ds.manifest.items[i].item_id.clone(),
            features,
            label,
        })
        .collect();
    let pool_feats = extract_features(&initial.frontend, &pool_ds.clips)?;
    let pool: Vec<(String, ClipFeatures)> = pool_ds
        .manifest
        .items
        .iter()
        .map(|it| it.item_id.clone())
        .zip(pool_feats)
        .collect();
    let adapted_model = detect::self_adapt(
        initial.model.clone(),
        &items,
        &pool,
        adapt_cfg,
        |aug| fit_from_items(cfg, aug),
    )?;
    let adapted = DetectorBundle { frontend: initial.frontend.clone(), model: adapted_model };
    Ok((initial, adapted))
}

/// AUC matrix over every (train dataset, test dataset) pair. Diagonal cells
/// are matched conditions, off-diagonal mismatched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossGrid {
    pub train_names: Vec<String>,
    pub test_names: Vec<String>,
    /// `auc[i][j]` = trained on `train_names[i]`, tested on `test_names[j]`.
    pub auc: Vec<Vec<f64>>,
}

pub fn crossgrid(
    cfg: &PipelineConfig,
    train_sets: &[(String, LoadedDataset)],
    test_sets: &[(String, LoadedDataset)],
) -> Result<CrossGrid, PipelineError> {
    if train_sets.is_empty() || test_sets.is_empty() {
        return Err(PipelineError::EmptyManifest("crossgrid needs train and test sets".into()));
    }
    let mut auc = Vec::with_capacity(train_sets.len());
    for (_, tr) in train_sets {
        if tr.is_empty() {
            return Err(PipelineError::EmptyManifest("empty train manifest".into()));
        }
        let bundle = train(cfg, tr)?;
        let mut row = Vec::with_capacity(test_sets.len());
        for (_, te) in test_sets {
            let sub = predict(&bundle, te)?;
            row.push(eval::auc(&sub, &te.manifest)?);
        }
        auc.push(row);
    }
    Ok(CrossGrid {
        train_names: train_sets.iter().map(|(n, _)| n.clone()).collect(),
        test_names: test_sets.iter().map(|(n, _)| n.clone()).collect(),
        auc,
    })
}
