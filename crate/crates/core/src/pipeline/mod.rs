//! Resumable, sharded batch runs over the whole pipeline.
//!
//! Every stage is split into units: one per shard, plus global units where a
//! stage needs the whole corpus (entropy scores, the final dataset, the eval
//! report). A unit's outputs are written atomically and the manifest is
//! updated after them, so an interrupted run resumes by redoing only the
//! units that are not marked done.

mod config;
mod manifest;
mod stages;
pub use stages::{rendered_text, DATASET_FILE, REPORT_FILE, STATS_FILE};

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicIsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{PipelineConfig, ProviderKind, ProviderSection};
pub use manifest::{
    count_lines, write_atomic, RunManifest, StageRecord, UnitRecord, UnitStatus, MANIFEST_FILE,
};

use crate::anonymize::{default_detectors, load_detector_rules, DetectorRule};
use crate::llmclient::{HttpProvider, MockProvider, Provider};
use crate::promptgen::Registry;
use crate::text::stable_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Select,
    Anonymize,
    Generate,
    Parse,
    Mix,
    Stats,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Select,
        Stage::Anonymize,
        Stage::Generate,
        Stage::Parse,
        Stage::Mix,
        Stage::Stats,
        Stage::Eval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Select => "select",
            Stage::Anonymize => "anonymize",
            Stage::Generate => "generate",
            Stage::Parse => "parse",
            Stage::Mix => "mix",
            Stage::Stats => "stats",
            Stage::Eval => "eval",
        }
    }

    /// The stage whose outputs this one reads. Eval reads only its own input file.
    pub fn upstream(self) -> Option<Stage> {
        match self {
            Stage::Ingest | Stage::Eval => None,
            Stage::Select => Some(Stage::Ingest),
            Stage::Anonymize => Some(Stage::Select),
            Stage::Generate => Some(Stage::Anonymize),
            Stage::Parse => Some(Stage::Generate),
            Stage::Mix => Some(Stage::Parse),
            Stage::Stats => Some(Stage::Mix),
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config changed since this run started (manifest {manifest}, config {config}); use a fresh output directory")]
    ConfigHashMismatch { manifest: String, config: String },
    #[error("{dir} already holds a run; pass --resume to continue it")]
    ExistingRun { dir: PathBuf },
    #[error("stage {stage}: upstream stage {upstream} is incomplete")]
    UpstreamIncomplete { stage: Stage, upstream: Stage },
    #[error("stage {stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("stage {stage} interrupted")]
    Interrupted { stage: Stage },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::ConfigHashMismatch { .. }
            | PipelineError::ExistingRun { .. } => 2,
            _ => 3,
        }
    }
}

pub fn shard_name(shard: usize) -> String {
    format!("shard-{shard:03}")
}

/// Stable shard of a transcript id; independent of the seed and of other ids.
pub fn shard_of(transcript_id: &str, shard_count: usize) -> usize {
    (stable_hash(0, &["shard", transcript_id]) % shard_count as u64) as usize
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue an existing run in the output directory.
    pub resume: bool,
    /// Stop `run_all` after this stage.
    pub stop_after: Option<Stage>,
    /// Abort after this many units have been committed in this invocation.
    /// The next unit leaves a half-written temp file behind, as a killed
    /// process would. For crash-recovery testing.
    pub unit_budget: Option<usize>,
}

/// One line of a dry-run plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedUnit {
    pub stage: Stage,
    pub unit: String,
    pub done: bool,
}

pub(crate) struct UnitOutput {
    pub files: Vec<(String, String)>,
    pub counts: std::collections::BTreeMap<String, u64>,
}

type UnitFn<'a> = Box<dyn Fn() -> Result<UnitOutput, PipelineError> + Send + Sync + 'a>;

pub(crate) struct Unit<'a> {
    pub name: String,
    pub run: UnitFn<'a>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub registry: Registry,
    pub detectors: Vec<DetectorRule>,
    provider: Box<dyn Provider>,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let mut config = config;
        config.sync_seeds();
        config.validate()?;
        let registry = match &config.registry_path {
            Some(p) => Registry::load(p)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?,
            None => Registry::bundled(),
        };
        let detectors = match &config.detector_rules {
            Some(p) => load_detector_rules(p).map_err(|e| PipelineError::Config(e.to_string()))?,
            None => default_detectors(),
        };
        let provider: Box<dyn Provider> = match config.provider.kind {
            ProviderKind::Mock => Box::new(MockProvider::new(&registry, config.seed).with_rates(
                config.provider.mock_fenced_rate,
                config.provider.mock_invalid_rate,
            )),
            ProviderKind::Http => Box::new(
                HttpProvider::from_env(&config.provider.client)
                    .map_err(|e| PipelineError::Config(e.to_string()))?,
            ),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self {
            config,
            registry,
            detectors,
            provider,
            pool,
        })
    }

    /// Uses a caller-supplied provider instead of the configured one.
    pub fn with_provider(mut self, provider: Box<dyn Provider>) -> Self {
        self.provider = provider;
        self
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }

    pub(crate) fn provider(&self) -> &dyn Provider {
        self.provider.as_ref()
    }

    /// Unit names of a stage, in execution order.
    pub fn unit_names(&self, stage: Stage) -> Vec<String> {
        let shards = (0..self.config.shard_count).map(shard_name);
        match stage {
            Stage::Select => std::iter::once("scores".to_string())
                .chain(shards)
                .collect(),
            Stage::Stats => vec!["dataset".into()],
            Stage::Eval => vec!["report".into()],
            _ => shards.collect(),
        }
    }

    fn open_manifest(&self, resume: bool) -> Result<RunManifest, PipelineError> {
        let hash = self.config.hash();
        match RunManifest::load(self.output_dir())? {
            Some(m) if !resume => {
                let _ = m;
                Err(PipelineError::ExistingRun {
                    dir: self.output_dir().to_path_buf(),
                })
            }
            Some(m) if m.config_hash != hash => Err(PipelineError::ConfigHashMismatch {
                manifest: m.config_hash,
                config: hash,
            }),
            Some(m) => Ok(m),
            None => {
                let m = RunManifest::new(hash, self.config.shard_count);
                m.save(self.output_dir())?;
                Ok(m)
            }
        }
    }

    fn stage_complete(&self, manifest: &RunManifest, stage: Stage) -> bool {
        self.unit_names(stage)
            .iter()
            .all(|u| manifest.is_done(stage, u))
    }

    /// Runs one stage, skipping units already done. Continues an existing run.
    pub fn run_stage(&self, stage: Stage) -> Result<RunManifest, PipelineError> {
        self.run_stage_with(
            stage,
            &RunOptions {
                resume: true,
                ..Default::default()
            },
        )
    }

    pub fn run_stage_with(
        &self,
        stage: Stage,
        opts: &RunOptions,
    ) -> Result<RunManifest, PipelineError> {
        let manifest = self.open_manifest(opts.resume)?;
        let budget = opts.unit_budget.map(|b| AtomicIsize::new(b as isize));
        self.execute_stage(stage, manifest, budget.as_ref())
    }

    /// Every stage in dependency order.
    pub fn run_all(&self, opts: &RunOptions) -> Result<RunManifest, PipelineError> {
        let mut manifest = self.open_manifest(opts.resume)?;
        let budget = opts.unit_budget.map(|b| AtomicIsize::new(b as isize));
        for stage in Stage::ALL {
            manifest = self.execute_stage(stage, manifest, budget.as_ref())?;
            if opts.stop_after == Some(stage) {
                break;
            }
        }
        Ok(manifest)
    }

    /// What a run would do, without touching the output directory.
    pub fn plan(&self, stages: &[Stage]) -> Result<Vec<PlannedUnit>, PipelineError> {
        let manifest = RunManifest::load(self.output_dir())?;
        if let Some(m) = &manifest {
            if m.config_hash != self.config.hash() {
                return Err(PipelineError::ConfigHashMismatch {
                    manifest: m.config_hash.clone(),
                    config: self.config.hash(),
                });
            }
        }
        Ok(stages
            .iter()
            .flat_map(|&stage| {
                self.unit_names(stage)
                    .into_iter()
                    .map(move |unit| (stage, unit))
            })
            .map(|(stage, unit)| {
                let done = manifest.as_ref().is_some_and(|m| m.is_done(stage, &unit));
                PlannedUnit { stage, unit, done }
            })
            .collect())
    }

    fn execute_stage(
        &self,
        stage: Stage,
        mut manifest: RunManifest,
        budget: Option<&AtomicIsize>,
    ) -> Result<RunManifest, PipelineError> {
        if let Some(up) = stage.upstream() {
            if !self.stage_complete(&manifest, up) {
                return Err(PipelineError::UpstreamIncomplete {
                    stage,
                    upstream: up,
                });
            }
        }
        let dir = self.output_dir().to_path_buf();
        // Done units whose files no longer match are redone.
        for name in self.unit_names(stage) {
            if manifest.is_done(stage, &name) {
                if let Err(why) = manifest.verify_unit(&dir, stage, &name) {
                    log::warn!("{stage}/{name}: {why}; redoing");
                    manifest.mark_pending(stage, &name);
                }
            }
        }
        let phases = stages::build(self, stage);
        let shared = Mutex::new(manifest);
        for phase in phases {
            let pending: Vec<&Unit> = {
                let m = shared.lock().expect("manifest lock");
                phase
                    .iter()
                    .filter(|u| !m.is_done(stage, &u.name))
                    .collect()
            };
            if pending.is_empty() {
                continue;
            }
            log::info!("{stage}: {} unit(s) to run", pending.len());
            let results: Vec<Result<(), PipelineError>> = self.pool.install(|| {
                pending
                    .par_iter()
                    .map(|u| self.commit(stage, u, &shared, budget))
                    .collect()
            });
            if let Some(err) = results.into_iter().find_map(Result::err) {
                return Err(err);
            }
        }
        Ok(shared.into_inner().expect("manifest lock"))
    }

    fn commit(
        &self,
        stage: Stage,
        unit: &Unit,
        manifest: &Mutex<RunManifest>,
        budget: Option<&AtomicIsize>,
    ) -> Result<(), PipelineError> {
        let out = (unit.run)()?;
        let dir = self.output_dir();
        if let Some(b) = budget {
            if b.fetch_sub(1, Ordering::SeqCst) <= 0 {
                if let Some((rel, body)) = out.files.first() {
                    let path = manifest::temp_path(&dir.join(rel));
                    if let Some(parent) = path.parent() {
                        std::fs::create_dir_all(parent)
                            .map_err(|e| PipelineError::io(parent, e))?;
                    }
                    std::fs::write(&path, &body.as_bytes()[..body.len() / 2])
                        .map_err(|e| PipelineError::io(&path, e))?;
                }
                return Err(PipelineError::Interrupted { stage });
            }
        }
        let mut files = std::collections::BTreeMap::new();
        for (rel, body) in &out.files {
            write_atomic(&dir.join(rel), body.as_bytes())?;
            files.insert(rel.clone(), count_lines(body.as_bytes()));
        }
        let mut m = manifest.lock().expect("manifest lock");
        m.record(
            stage,
            &unit.name,
            UnitRecord {
                status: UnitStatus::Done,
                files,
                counts: out.counts,
            },
        );
        m.save(dir)
    }
}
