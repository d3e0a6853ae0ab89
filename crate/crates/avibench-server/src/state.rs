//! Challenge state machine: team registration, rate-limited submissions
//! scored against a private test manifest, preview/final leaderboards, and
//! an append-only JSON-lines event log that replays to identical state.
//!
//! All mutation goes through one mutex; the rate-limit decision, scoring,
//! and log append happen under the same lock, so concurrent duplicate
//! submissions admit exactly one.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use avibench_core::eval::report::{EvalReport, ReportConfig};
use avibench_core::eval::{self, BootstrapCi, SubmissionSet};
use avibench_core::manifest::{DatasetManifest, Label, ManifestItem};
use avibench_core::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error(transparent)]
    Manifest(#[from] avibench_core::manifest::ManifestError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
}

/// Client-facing rejection: HTTP status plus machine code and detail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rejection {
    pub status: u16,
    pub code: String,
    pub detail: String,
}

impl Rejection {
    fn new(status: u16, code: &str, detail: impl Into<String>) -> Self {
        Self { status, code: code.into(), detail: detail.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Open,
    Closed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeamRecord {
    pub team_id: String,
    pub name: String,
    pub token: String,
    /// UTC calendar date (YYYY-MM-DD) of the last accepted submission.
    pub last_accepted_date: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub submission_id: String,
    pub team_id: String,
    pub timestamp: String,
    pub preview_auc: f64,
    /// Never exposed while the phase is open.
    pub final_auc: f64,
    pub predictions: BTreeMap<String, f64>,
}

/// Append-only persisted events; replay reconstructs identical state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum LogEvent {
    ChallengeCreated {
        preview_fraction: f64,
        seed: u64,
        preview_ids: Vec<String>,
    },
    TeamRegistered {
        team_id: String,
        name: String,
        token: String,
        timestamp: String,
    },
    SubmissionAccepted {
        submission_id: String,
        team_id: String,
        timestamp: String,
        date: String,
        preview_auc: f64,
        final_auc: f64,
        predictions: BTreeMap<String, f64>,
    },
    ChallengeClosed {
        timestamp: String,
    },
}

struct Inner {
    truth: DatasetManifest,
    test_ids: BTreeSet<String>,
    preview_ids: BTreeSet<String>,
    preview_fraction: f64,
    seed: u64,
    phase: Phase,
    teams: Vec<TeamRecord>,
    submissions: Vec<SubmissionRecord>,
}

pub struct Challenge {
    inner: Mutex<Inner>,
    log_path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChallengeInfo {
    pub phase: Phase,
    pub n_test: usize,
    pub preview_fraction: f64,
    pub preview_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub team_id: String,
    pub name: String,
    pub best_auc: f64,
    pub n_submissions: usize,
    pub best_submission_id: String,
    /// Bootstrap error bar, final mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_bar: Option<BootstrapCi>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaderboardMode {
    Preview,
    Final,
}

pub fn now_utc_rfc3339() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).expect("UTC formats")
}

fn date_of(timestamp: &str) -> Result<String, Rejection> {
    let t = OffsetDateTime::parse(timestamp, &Rfc3339)
        .map_err(|e| Rejection::new(422, "bad-timestamp", e.to_string()))?;
    Ok(t.date().to_string())
}

fn fresh_id(prefix: &str) -> String {
    let mut rng = rand::thread_rng();
    let suffix: String = (0..12)
        .map(|_| char::from_digit(rng.gen_range(0..36), 36).unwrap())
        .collect();
    format!("{prefix}-{suffix}")
}

fn fresh_token() -> String {
    let mut rng = rand::thread_rng();
    (0..32).map(|_| char::from_digit(rng.gen_range(0..16), 16).unwrap()).collect()
}

impl Challenge {
    /// Create a fresh challenge; the preview subset is a seeded shuffle of
    /// the labeled test items, size `floor(preview_fraction * n_test)`.
    pub fn create(
        truth: DatasetManifest,
        preview_fraction: f64,
        seed_val: u64,
        log_path: impl AsRef<Path>,
    ) -> Result<Self, ServiceError> {
        if !(0.0 < preview_fraction && preview_fraction < 1.0) {
            return Err(ServiceError::InvalidConfig(
                "preview_fraction must be in (0, 1)".into(),
            ));
        }
        if truth.items.iter().any(|it| it.label == Label::Unknown) {
            return Err(ServiceError::InvalidConfig(
                "test manifest contains unlabeled items".into(),
            ));
        }
        if truth.items.is_empty() {
            return Err(ServiceError::InvalidConfig("empty test manifest".into()));
        }
        let mut ids: Vec<String> = truth.items.iter().map(|it| it.item_id.clone()).collect();
        ids.sort();
        let mut rng = seed::rng(seed::derive_seed(seed_val, "preview-subset"));
        for i in (1..ids.len()).rev() {
            let j = rng.gen_range(0..=i);
            ids.swap(i, j);
        }
        let preview_size = (preview_fraction * truth.items.len() as f64).floor() as usize;
        let preview_ids: Vec<String> = ids[..preview_size].to_vec();

        let log_path = log_path.as_ref().to_path_buf();
        if let Some(parent) = log_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let me = Self {
            inner: Mutex::new(Inner {
                test_ids: truth.items.iter().map(|it| it.item_id.clone()).collect(),
                preview_ids: preview_ids.iter().cloned().collect(),
                preview_fraction,
                seed: seed_val,
                phase: Phase::Open,
                teams: Vec::new(),
                submissions: Vec::new(),
                truth,
            }),
            log_path,
        };
        me.append(&LogEvent::ChallengeCreated { preview_fraction, seed: seed_val, preview_ids })?;
        Ok(me)
    }

    /// Rebuild state by replaying the event log against the same test
    /// manifest.
    pub fn replay(
        truth: DatasetManifest,
        log_path: impl AsRef<Path>,
    ) -> Result<Self, ServiceError> {
        let log_path = log_path.as_ref().to_path_buf();
        let text = std::fs::read_to_string(&log_path)?;
        let mut inner = Inner {
            test_ids: truth.items.iter().map(|it| it.item_id.clone()).collect(),
            preview_ids: BTreeSet::new(),
            preview_fraction: 0.0,
            seed: 0,
            phase: Phase::Open,
            teams: Vec::new(),
            submissions: Vec::new(),
            truth,
        };
        let mut created = false;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ev: LogEvent = serde_json::from_str(line)
                .map_err(|e| ServiceError::CorruptLog(format!("line {}: {e}", lineno + 1)))?;
            match ev {
                LogEvent::ChallengeCreated { preview_fraction, seed, preview_ids } => {
                    inner.preview_fraction = preview_fraction;
                    inner.seed = seed;
                    inner.preview_ids = preview_ids.into_iter().collect();
                    created = true;
                }
                LogEvent::TeamRegistered { team_id, name, token, .. } => {
                    inner.teams.push(TeamRecord {
                        team_id,
                        name,
                        token,
                        last_accepted_date: None,
                    });
                }
                LogEvent::SubmissionAccepted {
                    submission_id,
                    team_id,
                    timestamp,
                    date,
                    preview_auc,
                    final_auc,
                    predictions,
                } => {
                    if let Some(t) = inner.teams.iter_mut().find(|t| t.team_id == team_id) {
                        t.last_accepted_date = Some(date);
                    }
                    inner.submissions.push(SubmissionRecord {
                        submission_id,
                        team_id,
                        timestamp,
                        preview_auc,
                        final_auc,
                        predictions,
                    });
                }
                LogEvent::ChallengeClosed { .. } => {
                    inner.phase = Phase::Closed;
                }
            }
        }
        if !created {
            return Err(ServiceError::CorruptLog("no challenge-created event".into()));
        }
        Ok(Self { inner: Mutex::new(inner), log_path })
    }

    fn append(&self, ev: &LogEvent) -> Result<(), ServiceError> {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.log_path)?;
        f.write_all(serde_json::to_string(ev)?.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_data()?;
        Ok(())
    }

    pub fn info(&self) -> ChallengeInfo {
        let g = self.inner.lock().unwrap();
        ChallengeInfo {
            phase: g.phase,
            n_test: g.test_ids.len(),
            preview_fraction: g.preview_fraction,
            preview_size: g.preview_ids.len(),
        }
    }

    pub fn preview_ids(&self) -> Vec<String> {
        self.inner.lock().unwrap().preview_ids.iter().cloned().collect()
    }

    pub fn register_team(&self, name: &str) -> Result<TeamRecord, ServiceError> {
        let name = name.trim();
        let record = TeamRecord {
            team_id: fresh_id("team"),
            name: name.to_string(),
            token: fresh_token(),
            last_accepted_date: None,
        };
        let mut g = self.inner.lock().unwrap();
        self.append(&LogEvent::TeamRegistered {
            team_id: record.team_id.clone(),
            name: record.name.clone(),
            token: record.token.clone(),
            timestamp: now_utc_rfc3339(),
        })?;
        g.teams.push(record.clone());
        Ok(record)
    }

    /// Submit a prediction CSV at the current time.
    pub fn submit(&self, token: &str, csv_body: &str) -> Result<(String, f64), Rejection> {
        self.submit_at(token, csv_body, &now_utc_rfc3339())
    }

    /// Submit with an explicit RFC 3339 timestamp (drives the UTC-day rate
    /// limit; exposed for deterministic testing).
    pub fn submit_at(
        &self,
        token: &str,
        csv_body: &str,
        timestamp: &str,
    ) -> Result<(String, f64), Rejection> {
        let date = date_of(timestamp)?;
        let mut g = self.inner.lock().unwrap();
        if g.phase == Phase::Closed {
            return Err(Rejection::new(422, "challenge-closed", "the challenge has closed"));
        }
        let team_idx = g
            .teams
            .iter()
            .position(|t| t.token == token)
            .ok_or_else(|| Rejection::new(401, "bad-token", "unknown API token"))?;
        // rate limit first: one accepted submission per team per UTC day
        if g.teams[team_idx].last_accepted_date.as_deref() == Some(date.as_str()) {
            return Err(Rejection::new(
                429,
                "rate-limited",
                format!("one submission per UTC day; already accepted on {date}"),
            ));
        }
        let predictions = validate_csv(csv_body, &g.test_ids)?;
        let sub = SubmissionSet {
            predictions,
            team: Some(g.teams[team_idx].team_id.clone()),
            timestamp: Some(timestamp.to_string()),
        };
        let preview_truth = filter_truth(&g.truth, &g.preview_ids);
        let preview_auc = eval::auc(&sub, &preview_truth)
            .map_err(|e| Rejection::new(422, "scoring-failed", e.to_string()))?;
        let final_auc = eval::auc(&sub, &g.truth)
            .map_err(|e| Rejection::new(422, "scoring-failed", e.to_string()))?;
        let record = SubmissionRecord {
            submission_id: fresh_id("sub"),
            team_id: g.teams[team_idx].team_id.clone(),
            timestamp: timestamp.to_string(),
            preview_auc,
            final_auc,
            predictions: sub.predictions,
        };
        self.append(&LogEvent::SubmissionAccepted {
            submission_id: record.submission_id.clone(),
            team_id: record.team_id.clone(),
            timestamp: record.timestamp.clone(),
            date: date.clone(),
            preview_auc,
            final_auc,
            predictions: record.predictions.clone(),
        })
        .map_err(|e| Rejection::new(500, "persist-failed", e.to_string()))?;
        g.teams[team_idx].last_accepted_date = Some(date);
        let id = record.submission_id.clone();
        g.submissions.push(record);
        Ok((id, preview_auc))
    }

    pub fn leaderboard(&self, mode: LeaderboardMode) -> Result<Vec<LeaderboardEntry>, Rejection> {
        let g = self.inner.lock().unwrap();
        if mode == LeaderboardMode::Final && g.phase == Phase::Open {
            return Err(Rejection::new(
                422,
                "phase-open",
                "final scores are released only after the challenge closes",
            ));
        }
        let mut by_team: BTreeMap<&str, Vec<&SubmissionRecord>> = BTreeMap::new();
        for s in &g.submissions {
            by_team.entry(&s.team_id).or_default().push(s);
        }
        let mut entries = Vec::new();
        for (team_id, subs) in by_team {
            let team = g.teams.iter().find(|t| t.team_id == team_id);
            let best = subs
                .iter()
                .max_by(|a, b| {
                    let (ka, kb) = match mode {
                        LeaderboardMode::Preview => (a.preview_auc, b.preview_auc),
                        LeaderboardMode::Final => (a.final_auc, b.final_auc),
                    };
                    ka.partial_cmp(&kb)
                        .unwrap()
                        .then_with(|| b.submission_id.cmp(&a.submission_id))
                })
                .unwrap();
            let (best_auc, error_bar) = match mode {
                LeaderboardMode::Preview => (best.preview_auc, None),
                LeaderboardMode::Final => {
                    let sub = SubmissionSet {
                        predictions: best.predictions.clone(),
                        team: None,
                        timestamp: None,
                    };
                    let ci = eval::bootstrap_auc(&sub, &g.truth, 200, g.seed)
                        .map_err(|e| Rejection::new(500, "scoring-failed", e.to_string()))?;
                    (best.final_auc, Some(ci))
                }
            };
            entries.push(LeaderboardEntry {
                team_id: team_id.to_string(),
                name: team.map_or_else(String::new, |t| t.name.clone()),
                best_auc,
                n_submissions: subs.len(),
                best_submission_id: best.submission_id.clone(),
                error_bar,
            });
        }
        entries.sort_by(|a, b| {
            b.best_auc.partial_cmp(&a.best_auc).unwrap().then_with(|| a.team_id.cmp(&b.team_id))
        });
        Ok(entries)
    }

    /// Close the challenge (idempotent); later submissions are rejected and
    /// final scores become visible.
    pub fn close(&self) -> Result<(), ServiceError> {
        let mut g = self.inner.lock().unwrap();
        if g.phase == Phase::Closed {
            return Ok(());
        }
        self.append(&LogEvent::ChallengeClosed { timestamp: now_utc_rfc3339() })?;
        g.phase = Phase::Closed;
        Ok(())
    }

    /// Full evaluation report for every submission; closed phase only.
    pub fn final_reports(&self) -> Result<Vec<(String, EvalReport)>, Rejection> {
        let g = self.inner.lock().unwrap();
        if g.phase == Phase::Open {
            return Err(Rejection::new(422, "phase-open", "reports release at close"));
        }
        let mut out = Vec::new();
        for s in &g.submissions {
            let sub = SubmissionSet {
                predictions: s.predictions.clone(),
                team: None,
                timestamp: None,
            };
            let rep = eval::report::evaluate(
                &sub,
                &g.truth,
                &ReportConfig { n_boot: 200, n_bins: 10, seed: g.seed },
            )
            .map_err(|e| Rejection::new(500, "scoring-failed", e.to_string()))?;
            out.push((s.submission_id.clone(), rep));
        }
        Ok(out)
    }

    /// All accepted submissions with their private final AUCs. Server-side
    /// only; never serialized into open-phase responses.
    pub fn submissions(&self) -> Vec<SubmissionRecord> {
        self.inner.lock().unwrap().submissions.clone()
    }
}

fn filter_truth(truth: &DatasetManifest, keep: &BTreeSet<String>) -> DatasetManifest {
    let items: Vec<ManifestItem> =
        truth.items.iter().filter(|it| keep.contains(&it.item_id)).cloned().collect();
    DatasetManifest { items }
}

/// Validate a submission CSV against the test item ids: strict header,
/// exactly one prediction per test item, all values in [0, 1]. The
/// rejection detail lists at most the first 10 offending rows or ids.
fn validate_csv(
    body: &str,
    test_ids: &BTreeSet<String>,
) -> Result<BTreeMap<String, f64>, Rejection> {
    let mut lines = body.lines();
    match lines.next() {
        Some(h) if h.trim() == "itemid,prediction" => {}
        other => {
            return Err(Rejection::new(
                422,
                "bad-header",
                format!("expected header 'itemid,prediction', got {:?}", other.unwrap_or("")),
            ))
        }
    }
    let mut predictions = BTreeMap::new();
    let mut offenders: Vec<String> = Vec::new();
    let offend = |list: &mut Vec<String>, what: String| {
        if list.len() < 10 {
            list.push(what);
        }
    };
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((id, val)) = line.split_once(',') else {
            offend(&mut offenders, format!("row {}: not two fields", lineno + 2));
            continue;
        };
        let id = id.trim();
        let Ok(v) = val.trim().parse::<f64>() else {
            offend(&mut offenders, format!("row {}: unparseable prediction", lineno + 2));
            continue;
        };
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            offend(&mut offenders, format!("row {}: prediction {v} outside [0,1]", lineno + 2));
            continue;
        }
        if !test_ids.contains(id) {
            offend(&mut offenders, format!("unknown item id {id}"));
            continue;
        }
        if predictions.insert(id.to_string(), v).is_some() {
            offend(&mut offenders, format!("duplicate item id {id}"));
        }
    }
    if offenders.is_empty() {
        for id in test_ids {
            if !predictions.contains_key(id) {
                offend(&mut offenders, format!("missing item id {id}"));
            }
        }
    }
    if !offenders.is_empty() {
        return Err(Rejection::new(422, "invalid-submission", offenders.join("; ")));
    }
    Ok(predictions)
}
