use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Pending,
    Done,
}

/// One completed (or pending) piece of a stage: its files with line counts,
/// plus named tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub status: UnitStatus,
    pub files: BTreeMap<String, usize>,
    #[serde(default)]
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub units: BTreeMap<String, UnitRecord>,
    /// Sum of every unit's `dropped_*` counts.
    pub drops: BTreeMap<String, u64>,
}

impl StageRecord {
    fn refresh_drops(&mut self) {
        let mut drops = BTreeMap::new();
        for unit in self.units.values() {
            for (k, v) in &unit.counts {
                if let Some(reason) = k.strip_prefix("dropped_") {
                    *drops.entry(reason.to_string()).or_insert(0) += v;
                }
            }
        }
        self.drops = drops;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub shard_count: usize,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: String, shard_count: usize) -> Self {
        Self {
            config_hash,
            shard_count,
            stages: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>, PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(PipelineError::io(&path, e)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn unit(&self, stage: Stage, unit: &str) -> Option<&UnitRecord> {
        self.stages.get(&stage)?.units.get(unit)
    }

    pub fn is_done(&self, stage: Stage, unit: &str) -> bool {
        self.unit(stage, unit)
            .is_some_and(|u| u.status == UnitStatus::Done)
    }

    pub fn record(&mut self, stage: Stage, unit: &str, record: UnitRecord) {
        let s = self.stages.entry(stage).or_default();
        s.units.insert(unit.to_string(), record);
        s.refresh_drops();
    }

    pub fn mark_pending(&mut self, stage: Stage, unit: &str) {
        if let Some(u) = self
            .stages
            .get_mut(&stage)
            .and_then(|s| s.units.get_mut(unit))
        {
            u.status = UnitStatus::Pending;
        }
    }

    /// A done unit whose files are missing or have the wrong line count.
    pub fn verify_unit(&self, dir: &Path, stage: Stage, unit: &str) -> Result<(), String> {
        let Some(u) = self.unit(stage, unit) else {
            return Err("not recorded".into());
        };
        for (file, &expected) in &u.files {
            match std::fs::read(dir.join(file)) {
                Ok(bytes) => {
                    let got = count_lines(&bytes);
                    if got != expected {
                        return Err(format!("{file}: {got} lines, manifest says {expected}"));
                    }
                }
                Err(e) => return Err(format!("{file}: {e}")),
            }
        }
        Ok(())
    }
}

pub fn count_lines(bytes: &[u8]) -> usize {
    let newlines = bytes.iter().filter(|&&b| b == b'\n').count();
    if bytes.last().is_some_and(|&b| b != b'\n') {
        newlines + 1
    } else {
        newlines
    }
}

pub(crate) fn temp_path(path: &Path) -> std::path::PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes to a sibling temp file, syncs, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    let tmp = temp_path(path);
    let mut f = std::fs::File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| PipelineError::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}
