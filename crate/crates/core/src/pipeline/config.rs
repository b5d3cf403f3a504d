use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::anonymize::AnonymizationPolicy;
use crate::corpus::QualityPolicy;
use crate::llmclient::ProviderConfig;
use crate::mixer::MixPolicy;
use crate::promptgen::TaskCategory;
use crate::selection::SelectionPolicy;
use crate::text::content_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    /// Share of mock replies wrapped in prose and a code fence.
    pub mock_fenced_rate: f64,
    /// Share of mock replies that contain no JSON.
    pub mock_invalid_rate: f64,
    #[serde(flatten)]
    pub client: ProviderConfig,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            mock_fenced_rate: 0.15,
            mock_invalid_rate: 0.03,
            client: ProviderConfig::default(),
        }
    }
}

/// Everything a run needs. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Drives every seeded decision; sub-policy seeds are overridden by it.
    pub seed: u64,
    #[serde(default)]
    pub input_paths: Vec<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_shards")]
    pub shard_count: usize,
    /// Parallel shard workers. Not part of the config hash.
    #[serde(default = "default_workers", skip_serializing)]
    pub workers: usize,
    #[serde(default)]
    pub registry_path: Option<PathBuf>,
    #[serde(default)]
    pub detector_rules: Option<PathBuf>,
    #[serde(default = "default_templates")]
    pub templates_per_transcript: usize,
    #[serde(default)]
    pub category_weights: Option<BTreeMap<TaskCategory, f64>>,
    #[serde(default = "default_retain")]
    pub retain_fraction: f64,
    #[serde(default)]
    pub eval_input: Option<PathBuf>,
    #[serde(default)]
    pub quality: QualityPolicy,
    #[serde(default)]
    pub selection: SelectionPolicy,
    #[serde(default)]
    pub anonymization: AnonymizationPolicy,
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub mix: MixPolicy,
}

fn default_shards() -> usize {
    4
}

fn default_workers() -> usize {
    4
}

fn default_templates() -> usize {
    2
}

fn default_retain() -> f64 {
    0.10
}

impl PipelineConfig {
    /// Minimal config with defaults everywhere else.
    pub fn new(seed: u64, input_paths: Vec<PathBuf>, output_dir: PathBuf) -> Self {
        let mut c: Self =
            toml::from_str(&format!("seed = {seed}\noutput_dir = \"\"")).expect("defaults parse");
        c.input_paths = input_paths;
        c.output_dir = output_dir;
        c.sync_seeds();
        c
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut c: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.resolve_paths(base_dir);
        c.sync_seeds();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.input_paths.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
        for p in [
            &mut self.registry_path,
            &mut self.detector_rules,
            &mut self.eval_input,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn sync_seeds(&mut self) {
        self.anonymization.seed = self.seed;
        self.mix.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.shard_count < 1 {
            return bad("shard_count must be >= 1".into());
        }
        if self.workers < 1 {
            return bad("workers must be >= 1".into());
        }
        if self.templates_per_transcript < 1 {
            return bad("templates_per_transcript must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.retain_fraction) {
            return bad(format!(
                "retain_fraction {} outside [0, 1]",
                self.retain_fraction
            ));
        }
        for (name, rate) in [
            ("mock_fenced_rate", self.provider.mock_fenced_rate),
            ("mock_invalid_rate", self.provider.mock_invalid_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} {rate} outside [0, 1]"));
            }
        }
        self.quality.validate().map_err(PipelineError::Config)?;
        self.selection
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.anonymization
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.provider
            .client
            .validate()
            .map_err(PipelineError::Config)?;
        self.mix
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    /// Digest of the canonical serialized config.
    pub fn hash(&self) -> String {
        content_id(&[&serde_json::to_string(self).expect("config serializes")])
    }
}
