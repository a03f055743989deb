//! Dataset manifest (JSON).
//!
//! ```json
//! {"version": 1, "entries": [
//!   {"video_id": "a", "trajectory": "a/traj.txt", "depth_dir": "a/depth",
//!    "flow_dir": "a/flow", "mask_dir": "a/mask", "features": "a/clip.ctrw"}
//! ]}
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FormatError;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub video_id: String,
    pub trajectory: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), FormatError> {
        if self.version != MANIFEST_VERSION {
            return Err(FormatError::Manifest(format!(
                "unsupported version {}, expected {MANIFEST_VERSION}",
                self.version
            )));
        }
        let mut seen = BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.video_id.is_empty() {
                return Err(FormatError::Manifest(format!("entry {i}: empty video_id")));
            }
            if !seen.insert(e.video_id.as_str()) {
                return Err(FormatError::Manifest(format!("duplicate video_id {:?}", e.video_id)));
            }
            let paths = [
                ("trajectory", Some(&e.trajectory)),
                ("depth_dir", e.depth_dir.as_ref()),
                ("flow_dir", e.flow_dir.as_ref()),
                ("mask_dir", e.mask_dir.as_ref()),
                ("features", e.features.as_ref()),
            ];
            for (name, p) in paths {
                if p.is_some_and(|p| p.is_empty()) {
                    return Err(FormatError::Manifest(format!("{:?}: empty {name} path", e.video_id)));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        self.root.join(p)
    }

    /// Entries sorted by `video_id`.
    pub fn sorted_entries(&self) -> Vec<&ManifestEntry> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        v
    }
}

pub fn parse_manifest(text: &str, root: &Path) -> Result<DatasetManifest, FormatError> {
    let mut m: DatasetManifest = serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
    m.root = root.to_path_buf();
    m.validate()?;
    Ok(m)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}
