//! Extraction of task/answer pairs from raw generator outputs.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llmclient::{GenerationRecord, GenerationStatus};
use crate::promptgen::{ExpectedSchema, MetaPromptTemplate, Registry, TaskCategory};
use crate::text::unit_draw;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no parseable JSON found")]
    InvalidJson,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

fn mismatch(index: Option<usize>, message: impl AsRef<str>) -> ParseError {
    match index {
        Some(i) => ParseError::SchemaMismatch(format!("element {i}: {}", message.as_ref())),
        None => ParseError::SchemaMismatch(message.as_ref().to_string()),
    }
}

/// Strict parse, then the first fenced block, then the longest balanced
/// bracket prefix from the first `[` or `{`. Returns the value and the
/// source slice it came from.
pub fn extract_json_source(raw: &str) -> Result<(Value, &str), ParseError> {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok((v, trimmed));
    }
    if let Some(inner) = first_fenced_block(raw) {
        if let Ok(v) = serde_json::from_str(inner) {
            return Ok((v, inner));
        }
    }
    if let Some(start) = raw.find(['[', '{']) {
        let tail = &raw[start..];
        for end in balanced_prefix_ends(tail).into_iter().rev() {
            let candidate = &tail[..end];
            if let Ok(v) = serde_json::from_str(candidate) {
                return Ok((v, candidate));
            }
        }
    }
    Err(ParseError::InvalidJson)
}

pub fn extract_json(raw: &str) -> Result<Value, ParseError> {
    extract_json_source(raw).map(|(v, _)| v)
}

fn first_fenced_block(raw: &str) -> Option<&str> {
    let open = raw.find("```")?;
    let after = &raw[open + 3..];
    // skip the info string (e.g. "json") up to the end of the line
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(body[..close].trim())
}

/// Byte offsets where bracket depth returns to zero, scanning string-aware.
fn balanced_prefix_ends(s: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut stack: Vec<u8> = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, b) in s.bytes().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' | b'{' => stack.push(b),
            b']' | b'}' => {
                let want = if b == b']' { b'[' } else { b'{' };
                if stack.pop() != Some(want) {
                    break;
                }
                if stack.is_empty() {
                    ends.push(i + 1);
                }
            }
            _ => {}
        }
    }
    ends
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPair {
    pub transcript_id: String,
    pub template_id: String,
    pub category: TaskCategory,
    pub instruction: String,
    pub response: String,
}

/// Identifiers attached to every pair pulled from one generation.
#[derive(Debug, Clone)]
pub struct PairContext {
    pub transcript_id: String,
    pub template_id: String,
    pub category: TaskCategory,
    pub meta_instruction: String,
}

impl PairContext {
    pub fn for_template(transcript_id: &str, t: &MetaPromptTemplate) -> Self {
        Self {
            transcript_id: transcript_id.to_string(),
            template_id: t.template_id.clone(),
            category: t.category,
            meta_instruction: t.meta_instruction.clone(),
        }
    }

    fn pair(&self, instruction: String, response: String) -> TaskPair {
        TaskPair {
            transcript_id: self.transcript_id.clone(),
            template_id: self.template_id.clone(),
            category: self.category,
            instruction,
            response,
        }
    }
}

fn text_field(
    obj: &serde_json::Map<String, Value>,
    key: &str,
    index: usize,
    allow_list: bool,
) -> Result<String, ParseError> {
    let value = obj
        .get(key)
        .ok_or_else(|| mismatch(Some(index), format!("missing {key:?}")))?;
    let text = match value {
        Value::String(s) => s.clone(),
        Value::Array(items) if allow_list => {
            let parts: Option<Vec<&str>> = items.iter().map(Value::as_str).collect();
            parts
                .ok_or_else(|| mismatch(Some(index), format!("{key:?} list must hold strings")))?
                .join("\n")
        }
        _ => return Err(mismatch(Some(index), format!("{key:?} has the wrong type"))),
    };
    if text.trim().is_empty() {
        return Err(mismatch(Some(index), format!("{key:?} is empty")));
    }
    Ok(text)
}

fn list_pairs(
    value: &Value,
    keys: (&str, &str),
    ctx: &PairContext,
) -> Result<Vec<TaskPair>, ParseError> {
    let items = value
        .as_array()
        .ok_or_else(|| mismatch(None, "expected a JSON list"))?;
    if items.is_empty() {
        return Err(mismatch(None, "empty list"));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let obj = item
                .as_object()
                .ok_or_else(|| mismatch(Some(i), "expected an object"))?;
            let instruction = text_field(obj, keys.0, i, false)?;
            let response = text_field(obj, keys.1, i, true)?;
            Ok(ctx.pair(instruction, response))
        })
        .collect()
}

/// Pairs for one parsed output. List schemas yield one pair per element;
/// free JSON yields one pair whose instruction is the template's meta instruction.
pub fn parse_task_pairs(
    value: &Value,
    schema: ExpectedSchema,
    ctx: &PairContext,
) -> Result<Vec<TaskPair>, ParseError> {
    match schema {
        ExpectedSchema::QaList => list_pairs(value, ("question", "answer"), ctx),
        ExpectedSchema::OrderedTaskList => list_pairs(value, ("task", "output"), ctx),
        ExpectedSchema::FreeJson => {
            if value.is_null() {
                return Err(mismatch(None, "null output"));
            }
            Ok(vec![
                ctx.pair(ctx.meta_instruction.clone(), value.to_string())
            ])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum ParseResult {
    Parsed {
        pairs: Vec<TaskPair>,
    },
    Dropped {
        reason: String,
    },
    /// Kept whole: the original meta prompt plus its JSON output become one record.
    RetainedRaw {
        json: String,
        pairs: usize,
        category: TaskCategory,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub record: GenerationRecord,
    #[serde(flatten)]
    pub result: ParseResult,
}

impl ParseOutcome {
    pub fn label(&self) -> &'static str {
        match self.result {
            ParseResult::Parsed { .. } => "parsed",
            ParseResult::Dropped { .. } => "dropped",
            ParseResult::RetainedRaw { .. } => "retained_raw",
        }
    }

    /// Audit line: `{"transcript_id", "template_id", "result", "pairs", "reason"?}`.
    pub fn audit(&self) -> AuditEntry {
        let (pairs, reason) = match &self.result {
            ParseResult::Parsed { pairs } => (pairs.len(), None),
            ParseResult::Dropped { reason } => (0, Some(reason.clone())),
            ParseResult::RetainedRaw { pairs, .. } => (*pairs, None),
        };
        AuditEntry {
            transcript_id: self.record.transcript_id.clone(),
            template_id: self.record.template_id.clone(),
            result: self.label().to_string(),
            pairs,
            reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub transcript_id: String,
    pub template_id: String,
    pub result: String,
    pub pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Parses one generation record; failures become `Dropped`, never pairs.
pub fn parse_record(record: GenerationRecord, registry: &Registry) -> ParseOutcome {
    let result = match record.status {
        GenerationStatus::Ok => match registry.get(&record.template_id) {
            None => ParseResult::Dropped {
                reason: format!("unknown template {:?}", record.template_id),
            },
            Some(t) => {
                let ctx = PairContext::for_template(&record.transcript_id, t);
                match extract_json(&record.raw_output)
                    .and_then(|v| parse_task_pairs(&v, t.expected_schema, &ctx))
                {
                    Ok(pairs) => ParseResult::Parsed { pairs },
                    Err(e) => ParseResult::Dropped {
                        reason: e.to_string(),
                    },
                }
            }
        },
        other => ParseResult::Dropped {
            reason: other.as_str().to_string(),
        },
    };
    ParseOutcome { record, result }
}

/// Whether a parsed record is kept as raw JSON; a pure function of `(seed, ids)`.
pub fn retain_raw(seed: u64, transcript_id: &str, template_id: &str, fraction: f64) -> bool {
    unit_draw(seed, &["retain", transcript_id, template_id]) < fraction
}

/// Marks a seeded Bernoulli(`fraction`) share of parsed outcomes as retained raw.
pub fn partition_retained(
    outcomes: impl IntoIterator<Item = ParseOutcome>,
    fraction: f64,
    seed: u64,
) -> impl Iterator<Item = ParseOutcome> {
    let fraction = fraction.clamp(0.0, 1.0);
    outcomes.into_iter().map(move |mut o| {
        if let ParseResult::Parsed { pairs } = &o.result {
            if retain_raw(
                seed,
                &o.record.transcript_id,
                &o.record.template_id,
                fraction,
            ) {
                let json = extract_json_source(&o.record.raw_output)
                    .map(|(_, src)| src.to_string())
                    .unwrap_or_else(|_| o.record.raw_output.trim().to_string());
                let category = pairs[0].category;
                o.result = ParseResult::RetainedRaw {
                    json,
                    pairs: pairs.len(),
                    category,
                };
            }
        }
        o
    })
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    fn ctx() -> PairContext {
        PairContext {
            transcript_id: "t1".into(),
            template_id: "tpl".into(),
            category: TaskCategory::Scanning,
            meta_instruction: "Describe it.".into(),
        }
    }

    fn record(raw: &str, template_id: &str) -> GenerationRecord {
        GenerationRecord {
            transcript_id: "t1".into(),
            template_id: template_id.into(),
            prompt_text: "prompt".into(),
            raw_output: raw.into(),
            status: GenerationStatus::Ok,
            attempt_count: 1,
        }
    }

    #[test]
    fn strict_parse() {
        let v = extract_json(r#"[{"question":"Q","answer":"A"}]"#).unwrap();
        assert_eq!(v, json!([{"question": "Q", "answer": "A"}]));
    }

    #[test]
    fn fenced_block_matches_inner_strict_parse() {
        let inner = r#"[{"question":"Q","answer":"A"}]"#;
        let raw = format!("Here you go:\n```json\n{inner}\n```");
        assert_eq!(extract_json(&raw).unwrap(), extract_json(inner).unwrap());
        let (_, src) = extract_json_source(&raw).unwrap();
        assert_eq!(src, inner);
    }

    #[test]
    fn balanced_prefix_with_trailing_chatter() {
        let raw = r#"Sure! [{"question":"Q ] tricky","answer":"A"}] Let me know if you need more [help]."#;
        assert_eq!(
            extract_json(raw).unwrap(),
            json!([{"question": "Q ] tricky", "answer": "A"}])
        );
        let raw = r#"Result: {"summary": "s"} and then {"x": 1}"#;
        assert_eq!(extract_json(raw).unwrap(), json!({"summary": "s"}));
    }

    #[test]
    fn prose_is_invalid() {
        assert_eq!(
            extract_json("I cannot help with that."),
            Err(ParseError::InvalidJson)
        );
        assert_eq!(extract_json("[1, 2"), Err(ParseError::InvalidJson));
        assert_eq!(
            extract_json(r#"[{"a": 'single'}]"#),
            Err(ParseError::InvalidJson)
        );
    }

    #[test]
    fn qa_pair_from_example() {
        let v = json!([{"question": "When?", "answer": "Wednesday at 2 PM"}]);
        let pairs = parse_task_pairs(&v, ExpectedSchema::QaList, &ctx()).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].response, "Wednesday at 2 PM");
        assert_eq!(pairs[0].instruction, "When?");
        assert_eq!(pairs[0].transcript_id, "t1");
    }

    #[test]
    fn empty_list_mismatch() {
        assert!(matches!(
            parse_task_pairs(&json!([]), ExpectedSchema::QaList, &ctx()),
            Err(ParseError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn missing_answer_names_index() {
        let err = parse_task_pairs(&json!([{"question": "Q"}]), ExpectedSchema::QaList, &ctx())
            .unwrap_err();
        assert_eq!(
            err,
            ParseError::SchemaMismatch("element 0: missing \"answer\"".into())
        );
        let err = parse_task_pairs(
            &json!([{"question": "Q", "answer": "A"}, {"question": 3, "answer": "A"}]),
            ExpectedSchema::QaList,
            &ctx(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("element 1"));
    }

    #[test]
    fn list_answers_joined_by_newline() {
        let v = json!([{"question": "Steps?", "answer": ["one", "two"]}]);
        assert_eq!(
            parse_task_pairs(&v, ExpectedSchema::QaList, &ctx()).unwrap()[0].response,
            "one\ntwo"
        );
    }

    #[test]
    fn ordered_tasks_and_free_json() {
        let v =
            json!([{"task": "Write", "output": "Done"}, {"task": "Summarize", "output": "Short"}]);
        assert_eq!(
            parse_task_pairs(&v, ExpectedSchema::OrderedTaskList, &ctx())
                .unwrap()
                .len(),
            2
        );
        assert!(parse_task_pairs(&v, ExpectedSchema::QaList, &ctx()).is_err());
        let obj = json!({"intents": ["a"], "turn_taking": "b"});
        let pairs = parse_task_pairs(&obj, ExpectedSchema::FreeJson, &ctx()).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].instruction, "Describe it.");
        assert_eq!(
            serde_json::from_str::<Value>(&pairs[0].response).unwrap(),
            obj
        );
    }

    #[test]
    fn failed_records_never_yield_pairs() {
        let registry = Registry::bundled();
        let o = parse_record(record("nope", "scanning_wh_questions"), &registry);
        assert_eq!(o.label(), "dropped");
        let mut r = record(
            r#"[{"question":"Q","answer":"A"}]"#,
            "scanning_wh_questions",
        );
        r.status = GenerationStatus::Timeout;
        assert_eq!(
            parse_record(r, &registry).result,
            ParseResult::Dropped {
                reason: "timeout".into()
            }
        );
        let o = parse_record(
            record(r#"[{"question":"Q","answer":"A"}]"#, "missing"),
            &registry,
        );
        assert_eq!(o.label(), "dropped");
    }

    #[test]
    fn retention_extremes() {
        let registry = Registry::bundled();
        let outcomes: Vec<ParseOutcome> = (0..50)
            .map(|i| {
                let mut r = record(
                    r#"[{"question":"Q","answer":"A"}]"#,
                    "scanning_wh_questions",
                );
                r.transcript_id = format!("t{i}");
                parse_record(r, &registry)
            })
            .collect();
        assert!(partition_retained(outcomes.clone(), 0.0, 1).all(|o| o.label() == "parsed"));
        assert!(partition_retained(outcomes, 1.0, 1).all(|o| o.label() == "retained_raw"));
    }

    #[test]
    fn retention_share_near_fraction() {
        let n = 20_000;
        let kept = (0..n)
            .filter(|i| retain_raw(42, &format!("t{i}"), "tpl", 0.10))
            .count();
        assert!((kept as f64 / n as f64 - 0.10).abs() <= 0.01, "{kept}");
    }

    #[test]
    fn outcome_serialization_round_trips() {
        let registry = Registry::bundled();
        let o = parse_record(
            record(
                "```json\n[{\"question\":\"Q\",\"answer\":\"A\"}]\n```",
                "scanning_wh_questions",
            ),
            &registry,
        );
        let o = partition_retained([o], 1.0, 0).next().unwrap();
        assert_eq!(
            o.result,
            ParseResult::RetainedRaw {
                json: r#"[{"question":"Q","answer":"A"}]"#.into(),
                pairs: 1,
                category: TaskCategory::Scanning
            }
        );
        let line = serde_json::to_string(&o).unwrap();
        assert_eq!(serde_json::from_str::<ParseOutcome>(&line).unwrap(), o);
        let audit = serde_json::to_value(o.audit()).unwrap();
        assert_eq!(
            audit,
            json!({"transcript_id": "t1", "template_id": "scanning_wh_questions", "result": "retained_raw", "pairs": 1})
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn list_length_preserved(items in prop::collection::vec(("[a-z]{1,8}", "[a-z ]{0,8}[a-z]"), 1..12)) {
                let v = Value::Array(items.iter().map(|(q, a)| json!({"question": q, "answer": a})).collect());
                let pairs = parse_task_pairs(&v, ExpectedSchema::QaList, &ctx()).unwrap();
                prop_assert_eq!(pairs.len(), items.len());
            }

            #[test]
            fn strict_json_survives_wrapping(items in prop::collection::vec("[a-z]{1,6}", 1..5), prefix in "[A-Za-z .:]{0,20}", suffix in "[A-Za-z .]{0,20}") {
                let v = json!(items);
                let raw = format!("{prefix}{v}{suffix}");
                prop_assert_eq!(extract_json(&raw).unwrap(), v);
            }
        }
    }
}
