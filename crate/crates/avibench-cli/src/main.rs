//! `avibench`: command-line front end for the bird-detection benchmark
//! toolkit. Every subcommand delegates to a library operation; all
//! randomness flows from `--seed` through documented stage-name derivation,
//! so identical invocations produce byte-identical outputs (timestamps are
//! confined to the `provenance` block).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use avibench_core::detect::AdaptationConfig;
use avibench_core::eval::{self, platt};
use avibench_core::figures;
use avibench_core::pipeline::{
    self, crossgrid, load_dataset, predict, train, DetectorBundle, DetectorKind, LoadedDataset,
    PipelineConfig,
};
use avibench_core::synth::{self, DatasetSpec, SiteProfile};
use avibench_core::{audio, manifest};
use avibench_server::{open_challenge, ServerConfig};

#[derive(Parser)]
#[command(name = "avibench", version, about = "Bird audio detection benchmark toolkit")]
struct Cli {
    /// Pipeline configuration JSON file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results are identical for any
    /// value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file or directory (default: stdout for JSON payloads).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Payload format for stdout output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorArg {
    Gmm,
    Forest,
}

impl From<DetectorArg> for DetectorKind {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::Gmm => DetectorKind::Gmm,
            DetectorArg::Forest => DetectorKind::Forest,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic labeled dataset (WAVs + manifest + event log).
    Synth {
        /// Shipped profile name (siteA, siteB) or a profile JSON file.
        #[arg(long, default_value = "siteA")]
        profile: String,
        /// Number of clips.
        #[arg(long)]
        n: usize,
        /// Clip length in seconds.
        #[arg(long, default_value_t = 1.0)]
        clip_len: f64,
        /// Sample rate in Hz.
        #[arg(long, default_value_t = 22050)]
        rate: u32,
    },
    /// Split a long recording into fixed-length clips.
    Segment {
        /// Input WAV file.
        #[arg(long)]
        input: PathBuf,
        /// Segment length in seconds.
        #[arg(long)]
        clip_len: f64,
    },
    /// Extract features for every manifest item into cache files.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        /// Feature kind to cache.
        #[arg(long, value_enum, default_value_t = FeatKind::Mfcc)]
        kind: FeatKind,
    },
    /// Train a detector on a labeled manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = DetectorArg::Gmm)]
        detector: DetectorArg,
    },
    /// Score every clip in a manifest with a trained model.
    Predict {
        /// Model directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train, then self-adapt on an unlabeled pool; writes both stages.
    Adapt {
        #[arg(long)]
        manifest: PathBuf,
        /// Unlabeled pool manifest (labels, if any, are ignored).
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_enum, default_value_t = DetectorArg::Gmm)]
        detector: DetectorArg,
        #[arg(long, default_value_t = 0.1)]
        low_threshold: f64,
        #[arg(long, default_value_t = 0.9)]
        high_threshold: f64,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        /// Cap on pseudo-labeled items added per class per round.
        #[arg(long)]
        max_added: Option<usize>,
    },
    /// Full evaluation: AUC, bootstrap CI, ROC, calibration, per-site.
    Evaluate {
        /// Submission CSV (`itemid,prediction`).
        #[arg(long)]
        sub: PathBuf,
        /// Ground-truth manifest CSV.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n_boot: usize,
        #[arg(long, default_value_t = 10)]
        n_bins: usize,
    },
    /// Train-on-one, test-on-every dataset AUC matrix.
    Crossgrid {
        /// Training manifests as name=path pairs.
        #[arg(long = "train", required = true)]
        train_manifests: Vec<String>,
        /// Test manifests as name=path pairs (default: the train sets).
        #[arg(long = "test")]
        test_manifests: Vec<String>,
        #[arg(long, value_enum, default_value_t = DetectorArg::Gmm)]
        detector: DetectorArg,
    },
    /// Fit Platt scaling on one split and remap a submission.
    Calibrate {
        /// Submission to calibrate.
        #[arg(long)]
        sub: PathBuf,
        /// Labeled calibration manifest.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Items whose ensembled score disagrees with the recorded label.
    Revalidate {
        /// One or more submission CSVs; their mean drives the rule.
        #[arg(long = "sub", required = true)]
        subs: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        /// Flag positives whose mean score is below this.
        #[arg(long, default_value_t = 0.2)]
        neg_threshold: f64,
        /// Flag negatives whose mean score is above this.
        #[arg(long, default_value_t = 0.3)]
        pos_threshold: f64,
    },
    /// Annotation sheet for the most mismatched predictions.
    MismatchReport {
        #[arg(long)]
        sub: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Number of items to list.
        #[arg(long, default_value_t = 50)]
        k: usize,
    },
    /// Run the challenge HTTP service.
    Serve {
        /// Test manifest with private labels.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        preview_fraction: Option<f64>,
        /// Server configuration JSON (flags override its fields).
        #[arg(long = "server-config")]
        server_config: Option<PathBuf>,
    },
    /// Quick AUC of a submission file against a truth manifest.
    ScoreFile {
        #[arg(long)]
        sub: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeatKind {
    Mfcc,
    Logmel,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Resolve a user-supplied path against `AVIBENCH_DATA_DIR` when it is
/// relative and does not exist as given.
fn resolve(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Ok(root) = std::env::var("AVIBENCH_DATA_DIR") {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn load_pipeline_config(cli_config: &Option<PathBuf>, cli_seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match cli_config {
        Some(p) => {
            let text = std::fs::read_to_string(resolve(p))
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).context("parsing pipeline config")?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli_seed {
        cfg.seed = s;
    }
    cfg.features.validate()?;
    Ok(cfg)
}

/// Wrap a result payload with the provenance block (the only place
/// timestamps appear) and emit it to `--out` or stdout.
fn emit_json(out: &Option<PathBuf>, payload: serde_json::Value, cfg_json: serde_json::Value) -> Result<()> {
    let doc = json!({
        "result": payload,
        "provenance": {
            "tool": "avibench",
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp": avibench_server::state::now_utc_rfc3339(),
            "config": cfg_json,
        },
    });
    let text = serde_json::to_string_pretty(&doc)?;
    match out {
        Some(p) => {
            let target = if p.is_dir() { p.join("result.json") } else { p.clone() };
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(target, text)?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn write_or_print(out: &Option<PathBuf>, default_name: &str, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            let target = if p.extension().is_none() && (p.is_dir() || default_name.contains('.')) {
                std::fs::create_dir_all(p)?;
                p.join(default_name)
            } else {
                if let Some(parent) = p.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                p.clone()
            };
            std::fs::write(target, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_named(pairs: &[String]) -> Result<Vec<(String, PathBuf)>> {
    pairs
        .iter()
        .map(|p| match p.split_once('=') {
            Some((name, path)) => Ok((name.to_string(), resolve(Path::new(path)))),
            None => {
                // bare path: derive the name from the file stem or parent dir
                let path = resolve(Path::new(p));
                let name = path
                    .parent()
                    .and_then(|d| d.file_name())
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.clone());
                Ok((name, path))
            }
        })
        .collect()
}

fn load_named(pairs: &[(String, PathBuf)]) -> Result<Vec<(String, LoadedDataset)>> {
    pairs
        .iter()
        .map(|(name, path)| {
            let ds = load_dataset(path)
                .with_context(|| format!("loading dataset {}", path.display()))?;
            Ok((name.clone(), ds))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let cfg = load_pipeline_config(&cli.config, cli.seed)?;
    let cfg_json = serde_json::to_value(&cfg)?;
    let seed_val = cfg.seed;

    match cli.cmd {
        Cmd::Synth { profile, n, clip_len, rate } => {
            let profile = if let Some(p) = SiteProfile::by_name(&profile) {
                p
            } else {
                let text = std::fs::read_to_string(resolve(Path::new(&profile)))
                    .with_context(|| format!("profile {profile} is neither shipped nor a readable file"))?;
                serde_json::from_str(&text).context("parsing profile JSON")?
            };
            let out = cli.out.clone().context("synth requires --out <dir>")?;
            let spec = DatasetSpec { n_items: n, clip_len_s: clip_len, sample_rate_hz: rate, seed: seed_val };
            let m = synth::generate_dataset(&profile, &spec, &out)?;
            emit_json(
                &None,
                json!({
                    "out_dir": out,
                    "n_items": m.len(),
                    "n_positive": m.n_positive(),
                    "profile": profile.name,
                }),
                cfg_json,
            )?;
        }
        Cmd::Segment { input, clip_len } => {
            let clip = audio::read_wav(resolve(&input), true)?;
            let segments = audio::segment(&clip, clip_len)?;
            let out = cli.out.clone().context("segment requires --out <dir>")?;
            std::fs::create_dir_all(&out)?;
            let mut ids = Vec::new();
            for s in &segments {
                audio::write_wav(s, out.join(format!("{}.wav", s.id)))?;
                ids.push(s.id.clone());
            }
            emit_json(&None, json!({ "out_dir": out, "segments": ids }), cfg_json)?;
        }
        Cmd::Featurize { manifest: manifest_path, kind } => {
            let ds = load_dataset(resolve(&manifest_path))?;
            let out = cli.out.clone().context("featurize requires --out <dir>")?;
            std::fs::create_dir_all(&out)?;
            let hash = cfg.features.hash();
            let mut files = Vec::new();
            for clip in &ds.clips {
                let prepped = pipeline::prep_clip(clip, &cfg.features)?;
                let frames = match kind {
                    FeatKind::Mfcc => pipeline::mfcc_frames(&prepped, &cfg.features)?,
                    FeatKind::Logmel => pipeline::dict_logmel(&prepped, &cfg.features)?,
                };
                let path = out.join(format!("{}.avfc", clip.id));
                std::fs::write(&path, avibench_core::cache::encode_features(&frames, hash)?)?;
                files.push(path);
            }
            emit_json(
                &None,
                json!({ "out_dir": out, "n_files": files.len(), "config_hash": hash }),
                cfg_json,
            )?;
        }
        Cmd::Train { manifest: manifest_path, detector } => {
            let mut cfg = cfg.clone();
            cfg.detector = detector.into();
            let ds = load_dataset(resolve(&manifest_path))?;
            let bundle = train(&cfg, &ds)?;
            let out = cli.out.clone().context("train requires --out <dir>")?;
            bundle.save(&out)?;
            emit_json(
                &None,
                json!({
                    "model_dir": out,
                    "detector": bundle.model.variant_name(),
                    "n_train": ds.len(),
                    "config_hash": bundle.frontend.config.hash(),
                }),
                serde_json::to_value(&cfg)?,
            )?;
        }
        Cmd::Predict { model, manifest: manifest_path } => {
            let bundle = DetectorBundle::load(resolve(&model))?;
            let ds = load_dataset(resolve(&manifest_path))?;
            let sub = predict(&bundle, &ds)?;
            match cli.format {
                Format::Csv => write_or_print(&cli.out, "predictions.csv", &eval::submission_csv(&sub))?,
                Format::Json => emit_json(&cli.out, json!({ "predictions": sub.predictions }), cfg_json)?,
            }
        }
        Cmd::Adapt {
            manifest: manifest_path,
            pool,
            detector,
            low_threshold,
            high_threshold,
            rounds,
            max_added,
        } => {
            let mut cfg = cfg.clone();
            cfg.detector = detector.into();
            let train_ds = load_dataset(resolve(&manifest_path))?;
            let pool_ds = load_dataset(resolve(&pool))?;
            let acfg = AdaptationConfig {
                low_threshold,
                high_threshold,
                rounds,
                max_added: max_added.unwrap_or(usize::MAX),
            };
            let (initial, adapted) = pipeline::train_and_adapt(&cfg, &train_ds, &pool_ds, &acfg)?;
            let out = cli.out.clone().context("adapt requires --out <dir>")?;
            initial.save(out.join("initial"))?;
            adapted.save(out.join("adapted"))?;
            emit_json(
                &None,
                json!({
                    "out_dir": out,
                    "detector": initial.model.variant_name(),
                    "pool_size": pool_ds.len(),
                    "rounds": rounds,
                }),
                serde_json::to_value(&cfg)?,
            )?;
        }
        Cmd::Evaluate { sub, truth, n_boot, n_bins } => {
            let sub = eval::load_submission(resolve(&sub))?;
            let truth = manifest::load_manifest(resolve(&truth))?;
            let rcfg = eval::report::ReportConfig { n_boot, n_bins, seed: seed_val };
            let rep = eval::report::evaluate(&sub, &truth, &rcfg)?;
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("roc.csv"), rep.roc_csv())?;
                std::fs::write(dir.join("calibration.csv"), rep.calibration_csv())?;
                let roc_series = figures::Series {
                    label: "ROC",
                    points: rep.roc.points.iter().map(|&(f, t, _)| (f, t)).collect(),
                    draw_line: true,
                };
                std::fs::write(
                    dir.join("roc.svg"),
                    figures::plot_svg("ROC", "false positive rate", "true positive rate", (0.0, 1.0), (0.0, 1.0), &[roc_series]),
                )?;
                let cal_series = figures::Series {
                    label: "calibration",
                    points: rep
                        .calibration
                        .bins
                        .iter()
                        .filter_map(|b| Some((b.mean_predicted?, b.empirical_rate?)))
                        .collect(),
                    draw_line: true,
                };
                std::fs::write(
                    dir.join("calibration.svg"),
                    figures::plot_svg("Calibration", "mean predicted", "empirical rate", (0.0, 1.0), (0.0, 1.0), &[cal_series]),
                )?;
                emit_json(&Some(dir.join("report.json")), serde_json::to_value(&rep)?, cfg_json)?;
            } else {
                match cli.format {
                    Format::Json => emit_json(&None, serde_json::to_value(&rep)?, cfg_json)?,
                    Format::Csv => print!("{}", rep.roc_csv()),
                }
            }
        }
        Cmd::Crossgrid { train_manifests, test_manifests, detector } => {
            let mut cfg = cfg.clone();
            cfg.detector = detector.into();
            let train_named = parse_named(&train_manifests)?;
            let test_named = if test_manifests.is_empty() {
                train_named.clone()
            } else {
                parse_named(&test_manifests)?
            };
            let train_sets = load_named(&train_named)?;
            let test_sets = load_named(&test_named)?;
            let grid = crossgrid(&cfg, &train_sets, &test_sets)?;
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(
                    dir.join("grid.svg"),
                    figures::grid_svg("Train x test AUC", &grid.train_names, &grid.test_names, &grid.auc),
                )?;
                let mut csv = String::from("train\\test");
                for t in &grid.test_names {
                    csv.push_str(&format!(",{t}"));
                }
                csv.push('\n');
                for (name, row) in grid.train_names.iter().zip(&grid.auc) {
                    csv.push_str(name);
                    for v in row {
                        csv.push_str(&format!(",{v}"));
                    }
                    csv.push('\n');
                }
                std::fs::write(dir.join("grid.csv"), csv)?;
                emit_json(&Some(dir.join("grid.json")), serde_json::to_value(&grid)?, serde_json::to_value(&cfg)?)?;
            } else {
                emit_json(&None, serde_json::to_value(&grid)?, serde_json::to_value(&cfg)?)?;
            }
        }
        Cmd::Calibrate { sub, truth } => {
            let sub = eval::load_submission(resolve(&sub))?;
            let truth = manifest::load_manifest(resolve(&truth))?;
            let params = platt::platt_fit(&sub, &truth)?;
            let mapped = platt::platt_apply(&sub, params);
            match cli.format {
                Format::Csv => write_or_print(&cli.out, "calibrated.csv", &eval::submission_csv(&mapped))?,
                Format::Json => emit_json(
                    &cli.out,
                    json!({ "platt": params, "predictions": mapped.predictions }),
                    cfg_json,
                )?,
            }
        }
        Cmd::Revalidate { subs, truth, neg_threshold, pos_threshold } => {
            let loaded: Result<Vec<_>> = subs
                .iter()
                .map(|p| Ok(eval::load_submission(resolve(p))?))
                .collect();
            let mean = eval::ensemble_mean(&loaded?)?;
            let truth = manifest::load_manifest(resolve(&truth))?;
            let candidates = eval::revalidation_candidates(&mean, &truth, neg_threshold, pos_threshold)?;
            emit_json(
                &cli.out,
                json!({
                    "neg_threshold": neg_threshold,
                    "pos_threshold": pos_threshold,
                    "candidates": candidates,
                }),
                cfg_json,
            )?;
        }
        Cmd::MismatchReport { sub, truth, k } => {
            let sub = eval::load_submission(resolve(&sub))?;
            let truth = manifest::load_manifest(resolve(&truth))?;
            let sheet = eval::top_mismatched(&sub, &truth, k)?;
            emit_json(&cli.out, serde_json::to_value(&sheet)?, cfg_json)?;
        }
        Cmd::Serve { manifest, bind, data_dir, preview_fraction, server_config } => {
            let mut scfg: ServerConfig = match server_config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(resolve(&p))?)?,
                None => ServerConfig::default(),
            };
            if let Some(m) = manifest {
                scfg.test_manifest = resolve(&m);
            }
            if let Some(b) = bind {
                scfg.bind = b;
            }
            if let Some(d) = data_dir {
                scfg.data_dir = d;
            }
            if let Some(f) = preview_fraction {
                scfg.preview_fraction = f;
            }
            if cli.seed.is_some() {
                scfg.seed = seed_val;
            }
            let challenge = Arc::new(open_challenge(&scfg)?);
            eprintln!("serving on {}", scfg.bind);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(avibench_server::serve(challenge, &scfg.bind))?;
        }
        Cmd::ScoreFile { sub, truth } => {
            let sub = eval::load_submission(resolve(&sub))?;
            let truth = manifest::load_manifest(resolve(&truth))?;
            let auc = eval::auc(&sub, &truth)?;
            match cli.format {
                Format::Json => emit_json(&cli.out, json!({ "auc": auc, "n_items": sub.len() }), cfg_json)?,
                Format::Csv => write_or_print(&cli.out, "score.csv", &format!("auc\n{auc}\n"))?,
            }
        }
    }
    Ok(())
}
