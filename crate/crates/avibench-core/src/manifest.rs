//! Dataset manifests: the item id -> {label, site, path} tables that define
//! a train or test split.
//!
//! On disk a manifest is CSV with header `itemid,hasbird,site,path`,
//! `hasbird` in {0, 1, ?}, UTF-8, LF line endings.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("duplicate item id: {0}")]
    DuplicateId(String),
    #[error("malformed label token {token:?} for item {item}")]
    BadLabel { item: String, token: String },
    #[error("bad header: expected itemid,hasbird,site,path")]
    BadHeader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
    Unknown,
}

impl Label {
    pub fn token(self) -> &'static str {
        match self {
            Label::Positive => "1",
            Label::Negative => "0",
            Label::Unknown => "?",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "1" => Some(Label::Positive),
            "0" => Some(Label::Negative),
            "?" => Some(Label::Unknown),
            _ => None,
        }
    }

    /// Ground-truth numeric value; `None` for unknown labels.
    pub fn as_f64(self) -> Option<f64> {
        match self {
            Label::Positive => Some(1.0),
            Label::Negative => Some(0.0),
            Label::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub item_id: String,
    pub label: Label,
    pub site: Option<String>,
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub items: Vec<ManifestItem>,
}

impl DatasetManifest {
    pub fn new(items: Vec<ManifestItem>) -> Result<Self, ManifestError> {
        let mut seen = HashMap::new();
        for it in &items {
            if seen.insert(it.item_id.clone(), ()).is_some() {
                return Err(ManifestError::DuplicateId(it.item_id.clone()));
            }
        }
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&ManifestItem> {
        self.items.iter().find(|it| it.item_id == item_id)
    }

    /// item_id -> label map for evaluation.
    pub fn labels(&self) -> HashMap<&str, Label> {
        self.items.iter().map(|it| (it.item_id.as_str(), it.label)).collect()
    }

    pub fn n_positive(&self) -> usize {
        self.items.iter().filter(|it| it.label == Label::Positive).count()
    }

    pub fn n_negative(&self) -> usize {
        self.items.iter().filter(|it| it.label == Label::Negative).count()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let bytes = std::fs::read(path)?;
    parse_manifest(&bytes)
}

/// Parse manifest CSV bytes. Entry point shared with the fuzz targets.
pub fn parse_manifest(bytes: &[u8]) -> Result<DatasetManifest, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(bytes);
    {
        let hdr = rdr.headers()?;
        let expect = ["itemid", "hasbird", "site", "path"];
        if hdr.len() != 4 || hdr.iter().zip(expect).any(|(a, b)| a != b) {
            return Err(ManifestError::BadHeader);
        }
    }
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let item_id = rec.get(0).unwrap_or("").to_string();
        let tok = rec.get(1).unwrap_or("");
        let label = Label::from_token(tok).ok_or_else(|| ManifestError::BadLabel {
            item: item_id.clone(),
            token: tok.to_string(),
        })?;
        let site = match rec.get(2).unwrap_or("") {
            "" => None,
            s => Some(s.to_string()),
        };
        let path = rec.get(3).unwrap_or("").to_string();
        items.push(ManifestItem { item_id, label, site, path });
    }
    DatasetManifest::new(items)
}

pub fn write_manifest(
    manifest: &DatasetManifest,
    path: impl AsRef<Path>,
) -> Result<(), ManifestError> {
    std::fs::write(path, manifest_csv(manifest))?;
    Ok(())
}

pub fn manifest_csv(manifest: &DatasetManifest) -> String {
    let mut out = String::from("itemid,hasbird,site,path\n");
    for it in &manifest.items {
        out.push_str(&format!(
            "{},{},{},{}\n",
            it.item_id,
            it.label.token(),
            it.site.as_deref().unwrap_or(""),
            it.path
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_basic_row() {
        let m = parse_manifest(b"itemid,hasbird,site,path\nclip007,1,,audio/clip007.wav\n").unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.items[0].label, Label::Positive);
        assert_eq!(m.items[0].site, None);
        assert_eq!(m.items[0].path, "audio/clip007.wav");
    }

    #[test]
    fn roundtrip_identity() {
        let m = DatasetManifest::new(vec![
            ManifestItem {
                item_id: "a".into(),
                label: Label::Positive,
                site: Some("siteA".into()),
                path: "a.wav".into(),
            },
            ManifestItem {
                item_id: "b".into(),
                label: Label::Unknown,
                site: None,
                path: "b.wav".into(),
            },
        ])
        .unwrap();
        let back = parse_manifest(manifest_csv(&m).as_bytes()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn duplicate_id_rejected() {
        let res = parse_manifest(
            b"itemid,hasbird,site,path\nclip007,1,,a.wav\nclip007,0,,b.wav\n",
        );
        assert!(matches!(res, Err(ManifestError::DuplicateId(id)) if id == "clip007"));
    }

    #[test]
    fn bad_label_rejected() {
        let res = parse_manifest(b"itemid,hasbird,site,path\nclip,2,,a.wav\n");
        assert!(matches!(res, Err(ManifestError::BadLabel { .. })));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(
            parse_manifest(b"id,label,site,path\n"),
            Err(ManifestError::BadHeader)
        ));
    }
}
