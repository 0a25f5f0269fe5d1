use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SeededRng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
            Label::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "anomalous" => Ok(Label::Anomalous),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(Error::Validation(format!(
                "unknown label {other:?}, expected normal, anomalous or unlabeled"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub label: Label,
}

/// `path,label` listing of an image corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Validation(format!("duplicate manifest path {:?}", e.path)));
            }
        }
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn parse(text: &str, root: PathBuf) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Validation(format!("manifest header: {e}")))?;
        if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
            return Err(Error::Validation(format!(
                "manifest header must be `path,label`, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut entries = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::Validation(format!("manifest row {}: {e}", i + 2)))?;
            if row.len() != 2 {
                return Err(Error::Validation(format!("manifest row {} needs 2 fields", i + 2)));
            }
            entries.push(ManifestEntry {
                path: row[0].to_string(),
                label: row[1].parse()?,
            });
        }
        Self::new(root, entries)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(["path", "label"]).expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.path.as_str(), e.label.as_str()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
}

fn floor_share(n: usize, ratio: f64) -> usize {
    ((n as f64 * ratio) + 1e-9).floor() as usize
}

/// Seeded train/val/test partition.
///
/// Normal entries are split by floor allocation with the remainder going to
/// train. Anomalous and unlabeled entries never enter train; they are divided
/// between val and test in proportion to those two ratios.
pub fn split_manifest(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "split ratios {ratios:?} must be in [0,1] and sum to 1"
        )));
    }
    let mut normals: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.label == Label::Normal).collect();
    let mut others: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| e.label != Label::Normal).collect();
    if normals.is_empty() {
        return Err(Error::Validation("manifest has no normal entries to train on".into()));
    }
    SeededRng::derive(seed, 0).shuffle(&mut normals);
    SeededRng::derive(seed, 1).shuffle(&mut others);

    let n = normals.len();
    let n_val = floor_share(n, ratios[1]);
    let n_test = floor_share(n, ratios[2]);
    let n_train = n - n_val - n_test;

    let held = ratios[1] + ratios[2];
    if !others.is_empty() && held <= 0.0 {
        return Err(Error::Validation(
            "anomalous or unlabeled entries need a non-zero val or test ratio".into(),
        ));
    }
    let o_val = if others.is_empty() {
        0
    } else {
        floor_share(others.len(), ratios[1] / held)
    };

    let part = |items: &[&ManifestEntry]| {
        DatasetManifest::new(
            manifest.root.clone(),
            items.iter().map(|&e| e.clone()).collect(),
        )
    };
    let mut val: Vec<&ManifestEntry> = normals[n_train..n_train + n_val].to_vec();
    val.extend_from_slice(&others[..o_val]);
    let mut test: Vec<&ManifestEntry> = normals[n_train + n_val..].to_vec();
    test.extend_from_slice(&others[o_val..]);
    Ok(Splits {
        train: part(&normals[..n_train])?,
        val: part(&val)?,
        test: part(&test)?,
    })
}
