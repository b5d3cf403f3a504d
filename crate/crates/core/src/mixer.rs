//! Assembly of task pairs into pretraining records, plus dataset statistics.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parsing::{ParseOutcome, ParseResult, TaskPair};
use crate::promptgen::TaskCategory;
use crate::scalar::Real;
use crate::text::{content_id, keyed_rng, unit_draw, whitespace_len};

pub const TRANSCRIPT_START: &str = "=== Transcript Start ===";
pub const TRANSCRIPT_END: &str = "=== Transcript End ===";
pub const MULTI_HEADER: &str = "Provide responses for the following questions:";
pub const MAX_MULTI_TASKS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixError {
    #[error("multi-task prompt needs at least 2 pairs, got {0}")]
    TooFewTasks(usize),
    #[error("multi-task prompt allows at most {max} pairs, got {got}")]
    TooManyTasks { got: usize, max: usize },
    #[error("pairs come from different transcripts ({0} and {1})")]
    MixedTranscript(String, String),
    #[error("invalid mix policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Single,
    Multi,
    RawJson,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Single => "single",
            RecordKind::Multi => "multi",
            RecordKind::RawJson => "raw_json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub transcript_id: String,
    pub kind: RecordKind,
    pub n_tasks: usize,
    pub placement: Placement,
    pub categories: Vec<TaskCategory>,
    pub templates: Vec<String>,
}

/// One training example. `prompt`/`response` is the loss-mask boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecord {
    #[serde(rename = "id")]
    pub record_id: String,
    pub prompt: String,
    pub response: String,
    pub meta: RecordMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixPolicy {
    pub single_fraction: f64,
    pub multi_max_tasks: usize,
    pub placement_before_fraction: f64,
    pub seed: u64,
}

impl Default for MixPolicy {
    fn default() -> Self {
        Self {
            single_fraction: 0.70,
            multi_max_tasks: MAX_MULTI_TASKS,
            placement_before_fraction: 0.50,
            seed: 0,
        }
    }
}

impl MixPolicy {
    pub fn validate(&self) -> Result<(), MixError> {
        for (name, v) in [
            ("single_fraction", self.single_fraction),
            ("placement_before_fraction", self.placement_before_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MixError::Policy(format!(
                    "{name} must be in [0,1], got {v}"
                )));
            }
        }
        if !(2..=MAX_MULTI_TASKS).contains(&self.multi_max_tasks) {
            return Err(MixError::Policy(format!(
                "multi_max_tasks must be in [2,{MAX_MULTI_TASKS}]"
            )));
        }
        Ok(())
    }
}

fn delimited(transcript: &str) -> String {
    format!("{TRANSCRIPT_START}\n{transcript}\n{TRANSCRIPT_END}")
}

fn place(transcript: &str, instructions: &str, placement: Placement) -> String {
    match placement {
        Placement::After => format!("{}\n\n{instructions}", delimited(transcript)),
        Placement::Before => format!("{instructions}\n\n{}", delimited(transcript)),
    }
}

fn finish(prompt: String, response: String, meta: RecordMeta) -> PretrainRecord {
    PretrainRecord {
        record_id: content_id(&[&prompt, &response]),
        prompt,
        response,
        meta,
    }
}

pub fn assemble_single(
    pair: &TaskPair,
    transcript_text: &str,
    placement: Placement,
) -> PretrainRecord {
    let prompt = place(transcript_text, &pair.instruction, placement);
    let meta = RecordMeta {
        transcript_id: pair.transcript_id.clone(),
        kind: RecordKind::Single,
        n_tasks: 1,
        placement,
        categories: vec![pair.category],
        templates: vec![pair.template_id.clone()],
    };
    finish(prompt, pair.response.clone(), meta)
}

fn numbered<'a>(items: impl Iterator<Item = &'a str>) -> String {
    items
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn dedup_keep_order<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

pub fn assemble_multi(
    pairs: &[TaskPair],
    transcript_text: &str,
    placement: Placement,
) -> Result<PretrainRecord, MixError> {
    if pairs.len() < 2 {
        return Err(MixError::TooFewTasks(pairs.len()));
    }
    if pairs.len() > MAX_MULTI_TASKS {
        return Err(MixError::TooManyTasks {
            got: pairs.len(),
            max: MAX_MULTI_TASKS,
        });
    }
    let tid = &pairs[0].transcript_id;
    if let Some(other) = pairs.iter().find(|p| &p.transcript_id != tid) {
        return Err(MixError::MixedTranscript(
            tid.clone(),
            other.transcript_id.clone(),
        ));
    }
    let instructions = format!(
        "{MULTI_HEADER}\n\n{}",
        numbered(pairs.iter().map(|p| p.instruction.as_str()))
    );
    let response = numbered(pairs.iter().map(|p| p.response.as_str()));
    let meta = RecordMeta {
        transcript_id: tid.clone(),
        kind: RecordKind::Multi,
        n_tasks: pairs.len(),
        placement,
        categories: dedup_keep_order(pairs.iter().map(|p| p.category)),
        templates: dedup_keep_order(pairs.iter().map(|p| p.template_id.clone())),
    };
    Ok(finish(
        place(transcript_text, &instructions, placement),
        response,
        meta,
    ))
}

/// A meta prompt and its JSON output kept verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct RawJsonItem {
    pub template_id: String,
    pub category: TaskCategory,
    pub meta_prompt: String,
    pub json: String,
}

pub fn assemble_raw(transcript_id: &str, item: &RawJsonItem) -> PretrainRecord {
    let meta = RecordMeta {
        transcript_id: transcript_id.to_string(),
        kind: RecordKind::RawJson,
        n_tasks: 1,
        placement: Placement::After,
        categories: vec![item.category],
        templates: vec![item.template_id.clone()],
    };
    finish(item.meta_prompt.clone(), item.json.clone(), meta)
}

/// Everything the mixer needs for one transcript.
#[derive(Debug, Clone, Default)]
pub struct MixGroup {
    pub transcript_id: String,
    pub transcript_text: String,
    pub pairs: Vec<TaskPair>,
    pub raw: Vec<RawJsonItem>,
}

impl MixGroup {
    pub fn new(transcript_id: &str, transcript_text: &str) -> Self {
        Self {
            transcript_id: transcript_id.into(),
            transcript_text: transcript_text.into(),
            ..Default::default()
        }
    }

    /// Adds the usable part of a parse outcome; dropped outcomes contribute nothing.
    pub fn push_outcome(&mut self, outcome: &ParseOutcome) {
        match &outcome.result {
            ParseResult::Parsed { pairs } => self.pairs.extend(pairs.iter().cloned()),
            ParseResult::RetainedRaw { json, category, .. } => self.raw.push(RawJsonItem {
                template_id: outcome.record.template_id.clone(),
                category: *category,
                meta_prompt: outcome.record.prompt_text.clone(),
                json: json.clone(),
            }),
            ParseResult::Dropped { .. } => {}
        }
    }
}

fn pair_key(p: &TaskPair, index: usize) -> [String; 3] {
    [
        p.transcript_id.clone(),
        p.template_id.clone(),
        index.to_string(),
    ]
}

fn draw(seed: u64, tag: &str, key: &[String; 3]) -> f64 {
    unit_draw(seed, &[tag, &key[0], &key[1], &key[2]])
}

/// Routes each pair of one transcript to single or multi assembly.
///
/// Pairs go multi with probability `1 - single_fraction`. Multi pairs are cut
/// into groups of uniform size in `[2, min(available, max)]`; a group grows by
/// one instead of stranding a single leftover. A lone leftover pair flips a
/// fair coin: it either falls back to single, or recruits one single-routed
/// pair into a group of two. The two branches cancel in expectation, so the
/// pair-level single share stays at `single_fraction`.
pub fn mix_group(group: &MixGroup, policy: &MixPolicy) -> Vec<PretrainRecord> {
    let keys: Vec<[String; 3]> = group
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| pair_key(p, i))
        .collect();
    let (mut singles, mut multis): (Vec<usize>, Vec<usize>) = (0..group.pairs.len())
        .partition(|&i| draw(policy.seed, "route", &keys[i]) < policy.single_fraction);

    let mut rng = keyed_rng(policy.seed, &["multi", &group.transcript_id]);
    let max = policy.multi_max_tasks.clamp(2, MAX_MULTI_TASKS);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut rest = multis.as_slice();
    while rest.len() >= 2 {
        let mut size = rng.gen_range(2..=rest.len().min(max));
        if rest.len() - size == 1 && size < max {
            size += 1;
        }
        groups.push(rest[..size].to_vec());
        rest = &rest[size..];
    }
    if let [lone] = rest {
        let recruit = unit_draw(
            policy.seed,
            &["lone", &keys[*lone][0], &keys[*lone][1], &keys[*lone][2]],
        ) < 0.5;
        match singles.pop() {
            Some(partner) if recruit => {
                let mut g = vec![partner, *lone];
                g.sort_unstable();
                groups.push(g);
            }
            partner => {
                singles.extend(partner);
                singles.push(*lone);
                singles.sort_unstable();
            }
        }
    }
    multis.clear();

    let placement_for = |key: &[String; 3], kind: &str| {
        let d = unit_draw(policy.seed, &["placement", kind, &key[0], &key[1], &key[2]]);
        if d < policy.placement_before_fraction {
            Placement::Before
        } else {
            Placement::After
        }
    };

    let mut out = Vec::with_capacity(singles.len() + groups.len() + group.raw.len());
    for i in singles {
        out.push(assemble_single(
            &group.pairs[i],
            &group.transcript_text,
            placement_for(&keys[i], "single"),
        ));
    }
    for g in groups {
        let pairs: Vec<TaskPair> = g.iter().map(|&i| group.pairs[i].clone()).collect();
        let placement = placement_for(&keys[g[0]], "multi");
        out.push(
            assemble_multi(&pairs, &group.transcript_text, placement)
                .expect("group size and transcript checked"),
        );
    }
    out.extend(
        group
            .raw
            .iter()
            .map(|r| assemble_raw(&group.transcript_id, r)),
    );
    out
}

/// Mixes transcript groups in order. Each group's routing depends only on the
/// seed and its own ids, so groups can be processed in any partition.
pub fn mix<'a, I>(groups: I, policy: &'a MixPolicy) -> impl Iterator<Item = PretrainRecord> + 'a
where
    I: IntoIterator<Item = &'a MixGroup>,
    I::IntoIter: 'a,
{
    groups.into_iter().flat_map(move |g| mix_group(g, policy))
}

/// Pluggable token counting for statistics.
pub trait TokenCounter {
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> usize {
        whitespace_len(text)
    }
}

impl<F: Fn(&str) -> usize> TokenCounter for F {
    fn count(&self, text: &str) -> usize {
        self(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats<F> {
    pub record_count: u64,
    pub prompt_tokens: u64,
    pub response_tokens: u64,
    pub mean_prompt_tokens: F,
    pub mean_response_tokens: F,
    pub total_tokens: u64,
    pub kind_histogram: BTreeMap<String, u64>,
}

impl<F: Real> Default for DatasetStats<F> {
    fn default() -> Self {
        Self {
            record_count: 0,
            prompt_tokens: 0,
            response_tokens: 0,
            mean_prompt_tokens: F::zero(),
            mean_response_tokens: F::zero(),
            total_tokens: 0,
            kind_histogram: BTreeMap::new(),
        }
    }
}

impl<F: Real> DatasetStats<F> {
    fn refresh_means(&mut self) {
        let n = self.record_count as usize;
        self.mean_prompt_tokens = F::ratio(self.prompt_tokens as usize, n);
        self.mean_response_tokens = F::ratio(self.response_tokens as usize, n);
        self.total_tokens = self.prompt_tokens + self.response_tokens;
    }

    pub fn add(&mut self, record: &PretrainRecord, counter: &impl TokenCounter) {
        self.record_count += 1;
        self.prompt_tokens += counter.count(&record.prompt) as u64;
        self.response_tokens += counter.count(&record.response) as u64;
        *self
            .kind_histogram
            .entry(record.meta.kind.as_str().to_string())
            .or_insert(0) += 1;
        self.refresh_means();
    }

    /// Associative merge of two partial statistics.
    pub fn merge(mut self, other: &Self) -> Self {
        self.record_count += other.record_count;
        self.prompt_tokens += other.prompt_tokens;
        self.response_tokens += other.response_tokens;
        for (k, v) in &other.kind_histogram {
            *self.kind_histogram.entry(k.clone()).or_insert(0) += v;
        }
        self.refresh_means();
        self
    }
}

pub fn compute_stats<'a, F: Real>(
    records: impl IntoIterator<Item = &'a PretrainRecord>,
    counter: &impl TokenCounter,
) -> DatasetStats<F> {
    let mut stats = DatasetStats::default();
    for r in records {
        stats.add(r, counter);
    }
    stats
}

/// Pair-level summary of a mixed dataset, used to check the routing constants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MixSummary {
    pub single_pairs: usize,
    pub multi_pairs: usize,
    pub multi_records: usize,
    pub raw_records: usize,
    pub before: usize,
    pub placed: usize,
}

impl MixSummary {
    pub fn add(&mut self, r: &PretrainRecord) {
        match r.meta.kind {
            RecordKind::Single => self.single_pairs += 1,
            RecordKind::Multi => {
                self.multi_pairs += r.meta.n_tasks;
                self.multi_records += 1;
            }
            RecordKind::RawJson => {
                self.raw_records += 1;
                return;
            }
        }
        self.placed += 1;
        if r.meta.placement == Placement::Before {
            self.before += 1;
        }
    }

    pub fn single_share(&self) -> f64 {
        f64::ratio(self.single_pairs, self.single_pairs + self.multi_pairs)
    }

    pub fn before_share(&self) -> f64 {
        f64::ratio(self.before, self.placed)
    }

    /// Σ n_tasks with raw records counted once.
    pub fn task_total(&self) -> usize {
        self.single_pairs + self.multi_pairs + self.raw_records
    }
}
