use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{shard_name, shard_of, Pipeline, PipelineError, Stage, Unit, UnitOutput};
use crate::anonymize::{apply_anonymization, detect_pii};
use crate::corpus::{
    parse_transcript_file, quality_filter, render_transcript, sample_style, Decision, InputFormat,
    Transcript,
};
use crate::evalkit::{evaluate, parse_eval_jsonl};
use crate::llmclient::{complete_batch, GenerationRecord};
use crate::mixer::{compute_stats, mix_group, MixGroup, PretrainRecord, WhitespaceCounter};
use crate::parsing::{parse_record, partition_retained, ParseOutcome, ParseResult};
use crate::promptgen::{render_meta_prompt, RenderedPrompt};
use crate::selection::{select_documents, EntropyScore};
use crate::text::keyed_rng;

pub const DATASET_FILE: &str = "out/dataset.jsonl";
pub const STATS_FILE: &str = "out/stats.json";
pub const REPORT_FILE: &str = "eval/report.json";
const SCORES_FILE: &str = "select/scores.jsonl";

fn stage_err(stage: Stage, message: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage,
        message: message.to_string(),
    }
}

fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn read_jsonl<T: DeserializeOwned>(stage: Stage, path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| stage_err(stage, format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn shard_file(stage_dir: &str, prefix: &str, shard: usize) -> String {
    format!("{stage_dir}/{prefix}-{shard:03}.jsonl")
}

fn input_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| PipelineError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.is_file()
                        && matches!(
                            f.extension().and_then(|x| x.to_str()),
                            Some("jsonl" | "json" | "txt")
                        )
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(PipelineError::Config(format!(
                "input path {} does not exist",
                p.display()
            )));
        }
    }
    Ok(files)
}

/// All input transcripts bucketed by shard, each bucket sorted by id.
fn load_shards(
    paths: &[PathBuf],
    shard_count: usize,
) -> Result<Vec<Vec<Transcript>>, PipelineError> {
    let mut seen = HashSet::new();
    let mut shards: Vec<Vec<Transcript>> = vec![Vec::new(); shard_count];
    for file in input_files(paths)? {
        let bytes = std::fs::read(&file).map_err(|e| PipelineError::io(&file, e))?;
        let format = InputFormat::from_extension(file.extension().and_then(|x| x.to_str()));
        let ts = parse_transcript_file(&bytes, format)
            .map_err(|e| stage_err(Stage::Ingest, format!("{}: {e}", file.display())))?;
        for t in ts {
            if !seen.insert(t.id.clone()) {
                return Err(stage_err(
                    Stage::Ingest,
                    format!("{}: duplicate transcript id {:?}", file.display(), t.id),
                ));
            }
            shards[shard_of(&t.id, shard_count)].push(t);
        }
    }
    for s in &mut shards {
        s.sort_by(|a, b| a.id.cmp(&b.id));
    }
    Ok(shards)
}

fn plain_text(t: &Transcript) -> String {
    t.turns
        .iter()
        .map(|turn| turn.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// The transcript as the generator and the final records see it. The style
/// is a pure function of the seed and id, so every stage renders identically.
pub fn rendered_text(seed: u64, t: &Transcript) -> String {
    let style = sample_style(&mut keyed_rng(seed, &["style", &t.id]));
    render_transcript(t, &style)
}

fn bump(counts: &mut BTreeMap<String, u64>, key: impl Into<String>) {
    *counts.entry(key.into()).or_insert(0) += 1;
}

fn drop_reason(outcome: &ParseOutcome) -> &'static str {
    match &outcome.result {
        ParseResult::Dropped { reason } => {
            if outcome.record.status != crate::llmclient::GenerationStatus::Ok {
                outcome.record.status.as_str()
            } else if reason.starts_with("schema mismatch") {
                "schema_mismatch"
            } else if reason.starts_with("unknown template") {
                "unknown_template"
            } else {
                "invalid_json"
            }
        }
        _ => "",
    }
}

pub(crate) fn build<'a>(p: &'a Pipeline, stage: Stage) -> Vec<Vec<Unit<'a>>> {
    let shards = 0..p.config.shard_count;
    let per_shard =
        |f: fn(&'a Pipeline, usize) -> Result<UnitOutput, PipelineError>| -> Vec<Unit<'a>> {
            shards
                .clone()
                .map(|s| Unit {
                    name: shard_name(s),
                    run: Box::new(move || f(p, s)),
                })
                .collect()
        };
    match stage {
        Stage::Ingest => {
            // inputs are read once, on first use, and shared by every shard unit
            let loaded: Arc<OnceLock<Result<Vec<Vec<Transcript>>, String>>> =
                Arc::new(OnceLock::new());
            let units = shards
                .clone()
                .map(|s| {
                    let loaded = Arc::clone(&loaded);
                    Unit {
                        name: shard_name(s),
                        run: Box::new(move || {
                            let all = loaded.get_or_init(|| {
                                load_shards(&p.config.input_paths, p.config.shard_count)
                                    .map_err(|e| e.to_string())
                            });
                            match all {
                                Ok(all) => ingest_shard(p, s, &all[s]),
                                Err(e) => Err(stage_err(Stage::Ingest, e)),
                            }
                        }),
                    }
                })
                .collect();
            vec![units]
        }
        Stage::Select => {
            let scores = Unit {
                name: "scores".into(),
                run: Box::new(move || select_scores(p)),
            };
            vec![vec![scores], per_shard(select_shard)]
        }
        Stage::Anonymize => vec![per_shard(anonymize_shard)],
        Stage::Generate => vec![per_shard(generate_shard)],
        Stage::Parse => vec![per_shard(parse_shard)],
        Stage::Mix => vec![per_shard(mix_shard)],
        Stage::Stats => vec![vec![Unit {
            name: "dataset".into(),
            run: Box::new(move || stats_unit(p)),
        }]],
        Stage::Eval => vec![vec![Unit {
            name: "report".into(),
            run: Box::new(move || eval_unit(p)),
        }]],
    }
}

fn ingest_shard(
    p: &Pipeline,
    shard: usize,
    transcripts: &[Transcript],
) -> Result<UnitOutput, PipelineError> {
    let policy = &p.config.quality;
    let mut counts = BTreeMap::new();
    let mut kept = Vec::new();
    let mut rejects = Vec::new();
    for t in transcripts {
        match quality_filter(t, policy) {
            Decision::Keep => {
                if t.duration_seconds().is_none() {
                    bump(&mut counts, "duration_unknown");
                }
                kept.push(t);
            }
            Decision::Reject(reason) => {
                bump(&mut counts, format!("dropped_{}", reason.as_str()));
                rejects.push(serde_json::json!({"id": t.id, "reason": reason.as_str()}));
            }
        }
    }
    counts.insert("kept".into(), kept.len() as u64);
    Ok(UnitOutput {
        files: vec![
            (shard_file("ingest", "shard", shard), to_jsonl(kept)),
            (shard_file("ingest", "rejects", shard), to_jsonl(rejects)),
        ],
        counts,
    })
}

fn select_scores(p: &Pipeline) -> Result<UnitOutput, PipelineError> {
    let mut scores = Vec::new();
    let mut counts = BTreeMap::new();
    for s in 0..p.config.shard_count {
        let ts: Vec<Transcript> = read_jsonl(
            Stage::Select,
            &p.output_dir().join(shard_file("ingest", "shard", s)),
        )?;
        for t in ts {
            match EntropyScore::from_text(&t.id, &plain_text(&t)) {
                Ok(score) => scores.push(score),
                Err(_) => bump(&mut counts, "dropped_empty_text"),
            }
        }
    }
    scores.sort_by(|a, b| a.transcript_id.cmp(&b.transcript_id));
    counts.insert("scored".into(), scores.len() as u64);
    Ok(UnitOutput {
        files: vec![(SCORES_FILE.into(), to_jsonl(&scores))],
        counts,
    })
}

fn select_shard(p: &Pipeline, shard: usize) -> Result<UnitOutput, PipelineError> {
    let scores: Vec<EntropyScore> = read_jsonl(Stage::Select, &p.output_dir().join(SCORES_FILE))?;
    let keep: BTreeSet<String> = if scores.is_empty() {
        BTreeSet::new()
    } else {
        select_documents(&scores, &p.config.selection)
            .map_err(|e| stage_err(Stage::Select, e))?
            .into_iter()
            .collect()
    };
    let ts: Vec<Transcript> = read_jsonl(
        Stage::Select,
        &p.output_dir().join(shard_file("ingest", "shard", shard)),
    )?;
    let total = ts.len();
    let kept: Vec<Transcript> = ts.into_iter().filter(|t| keep.contains(&t.id)).collect();
    let mut counts = BTreeMap::from([("selected".to_string(), kept.len() as u64)]);
    if total > kept.len() {
        counts.insert("dropped_low_entropy".into(), (total - kept.len()) as u64);
    }
    Ok(UnitOutput {
        files: vec![(shard_file("select", "shard", shard), to_jsonl(kept))],
        counts,
    })
}

fn anonymize_shard(p: &Pipeline, shard: usize) -> Result<UnitOutput, PipelineError> {
    let ts: Vec<Transcript> = read_jsonl(
        Stage::Anonymize,
        &p.output_dir().join(shard_file("select", "shard", shard)),
    )?;
    let mut counts = BTreeMap::new();
    let mut out = Vec::with_capacity(ts.len());
    for t in &ts {
        let spans = detect_pii(t, &p.detectors);
        for s in &spans {
            bump(&mut counts, format!("spans_{}", s.entity_type.as_str()));
        }
        out.push(
            apply_anonymization(t, &spans, &p.config.anonymization)
                .map_err(|e| stage_err(Stage::Anonymize, format!("{}: {e}", t.id)))?,
        );
    }
    counts.insert("transcripts".into(), out.len() as u64);
    Ok(UnitOutput {
        files: vec![(shard_file("anonymize", "shard", shard), to_jsonl(&out))],
        counts,
    })
}

fn prompts_for(p: &Pipeline, t: &Transcript) -> Result<Vec<RenderedPrompt>, PipelineError> {
    let text = rendered_text(p.config.seed, t);
    let mut rng = keyed_rng(p.config.seed, &["templates", &t.id]);
    let templates = p
        .registry
        .sample_distinct(
            &mut rng,
            p.config.category_weights.as_ref(),
            p.config.templates_per_transcript,
        )
        .map_err(|e| stage_err(Stage::Generate, e))?;
    Ok(templates
        .into_iter()
        .map(|tpl| render_meta_prompt(tpl, &t.id, &text))
        .collect())
}

fn generate_shard(p: &Pipeline, shard: usize) -> Result<UnitOutput, PipelineError> {
    let ts: Vec<Transcript> = read_jsonl(
        Stage::Generate,
        &p.output_dir().join(shard_file("anonymize", "shard", shard)),
    )?;
    let mut prompts = Vec::new();
    for t in &ts {
        prompts.extend(prompts_for(p, t)?);
    }
    let mut records: Vec<GenerationRecord> = Vec::with_capacity(prompts.len());
    complete_batch(prompts, &p.config.provider.client, p.provider(), |r| {
        records.push(r)
    });
    let mut counts = BTreeMap::new();
    for r in &records {
        bump(&mut counts, format!("status_{}", r.status.as_str()));
    }
    Ok(UnitOutput {
        files: vec![(shard_file("generate", "shard", shard), to_jsonl(&records))],
        counts,
    })
}

fn parse_shard(p: &Pipeline, shard: usize) -> Result<UnitOutput, PipelineError> {
    let records: Vec<GenerationRecord> = read_jsonl(
        Stage::Parse,
        &p.output_dir().join(shard_file("generate", "shard", shard)),
    )?;
    let parsed = records.into_iter().map(|r| parse_record(r, &p.registry));
    let outcomes: Vec<ParseOutcome> =
        partition_retained(parsed, p.config.retain_fraction, p.config.seed).collect();
    let mut counts = BTreeMap::new();
    for o in &outcomes {
        match &o.result {
            ParseResult::Parsed { pairs } => {
                bump(&mut counts, "parsed");
                *counts.entry("pairs".into()).or_insert(0) += pairs.len() as u64;
            }
            ParseResult::RetainedRaw { .. } => bump(&mut counts, "retained_raw"),
            ParseResult::Dropped { .. } => bump(&mut counts, format!("dropped_{}", drop_reason(o))),
        }
    }
    Ok(UnitOutput {
        files: vec![
            (shard_file("parse", "shard", shard), to_jsonl(&outcomes)),
            (
                shard_file("parse", "audit", shard),
                to_jsonl(outcomes.iter().map(ParseOutcome::audit)),
            ),
        ],
        counts,
    })
}

fn mix_shard(p: &Pipeline, shard: usize) -> Result<UnitOutput, PipelineError> {
    let dir = p.output_dir();
    let ts: Vec<Transcript> = read_jsonl(
        Stage::Mix,
        &dir.join(shard_file("anonymize", "shard", shard)),
    )?;
    let outcomes: Vec<ParseOutcome> =
        read_jsonl(Stage::Mix, &dir.join(shard_file("parse", "shard", shard)))?;
    let mut by_id: BTreeMap<&str, Vec<&ParseOutcome>> = BTreeMap::new();
    for o in &outcomes {
        by_id
            .entry(o.record.transcript_id.as_str())
            .or_default()
            .push(o);
    }
    let mut records: Vec<PretrainRecord> = Vec::new();
    let mut counts = BTreeMap::new();
    for t in &ts {
        let Some(group_outcomes) = by_id.get(t.id.as_str()) else {
            continue;
        };
        let mut group = MixGroup::new(&t.id, &rendered_text(p.config.seed, t));
        for o in group_outcomes {
            group.push_outcome(o);
        }
        for r in mix_group(&group, &p.config.mix) {
            bump(&mut counts, r.meta.kind.as_str());
            records.push(r);
        }
    }
    counts.insert("records".into(), records.len() as u64);
    Ok(UnitOutput {
        files: vec![(shard_file("mix", "shard", shard), to_jsonl(&records))],
        counts,
    })
}

fn stats_unit(p: &Pipeline) -> Result<UnitOutput, PipelineError> {
    let mut dataset = String::new();
    let mut records: Vec<PretrainRecord> = Vec::new();
    for s in 0..p.config.shard_count {
        let path = p.output_dir().join(shard_file("mix", "shard", s));
        dataset.push_str(&std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?);
        records.extend(read_jsonl::<PretrainRecord>(Stage::Stats, &path)?);
    }
    let stats: crate::Stats = compute_stats(&records, &WhitespaceCounter);
    let mut stats_json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    stats_json.push('\n');
    let counts = BTreeMap::from([("records".to_string(), records.len() as u64)]);
    Ok(UnitOutput {
        files: vec![
            (DATASET_FILE.into(), dataset),
            (STATS_FILE.into(), stats_json),
        ],
        counts,
    })
}

fn eval_unit(p: &Pipeline) -> Result<UnitOutput, PipelineError> {
    let Some(path) = &p.config.eval_input else {
        return Ok(UnitOutput {
            files: vec![],
            counts: BTreeMap::from([("skipped".to_string(), 1)]),
        });
    };
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let examples = parse_eval_jsonl(&text)
        .map_err(|e| stage_err(Stage::Eval, format!("{}: {e}", path.display())))?;
    let report = evaluate(&examples).map_err(|e| stage_err(Stage::Eval, e))?;
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    let counts = BTreeMap::from([("examples".to_string(), examples.len() as u64)]);
    Ok(UnitOutput {
        files: vec![(REPORT_FILE.into(), body)],
        counts,
    })
}
