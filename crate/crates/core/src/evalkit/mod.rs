//! Downstream scoring: ROUGE, classification F1, structured-output checks
//! and the bundled evaluation prompts.

mod metrics;
mod schema;
mod templates;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{
    classification_f1, rouge_l, rouge_n, Averaging, ClassScore, ClassificationReport, MetricScore,
};
pub use schema::{validate_schema, OutputSchemaKind, SchemaViolation};
pub use templates::{
    render_eval_prompt, EvalTaskId, EvalTaskTemplate, CALL_OUTCOME_LABELS, PURPOSE_OF_CALL_LABELS,
    SUMMARY_LENGTHS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("n must be >= 1")]
    InvalidN,
    #[error("{predictions} predictions but {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("no examples")]
    EmptyInput,
    #[error("gold label {0:?} is not in the label set")]
    UnknownGoldLabel(String),
    #[error("unknown option {0:?}")]
    UnknownOption(String),
    #[error("line {line}: {message}")]
    Input { line: usize, message: String },
}

/// One line of evaluation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalExample {
    pub task_id: EvalTaskId,
    pub prediction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<OutputSchemaKind>,
}

pub fn parse_eval_jsonl(text: &str) -> Result<Vec<EvalExample>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Input {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaTally {
    pub checked: usize,
    pub valid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub examples: usize,
    /// Examples with no reference, which metrics skip.
    pub unscored: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_1: Option<MetricScore<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_2: Option<MetricScore<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<MetricScore<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaTally>,
    /// Left empty for scores computed by external models.
    pub external: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: BTreeMap<EvalTaskId, TaskReport>,
}

fn external_columns() -> BTreeMap<String, Option<f64>> {
    ["bertscore", "llm_judge"]
        .into_iter()
        .map(|k| (k.to_string(), None))
        .collect()
}

/// Scores a batch of examples grouped by task. Generation tasks get ROUGE-1/2/L,
/// classification tasks get per-class and averaged F1.
pub fn evaluate(examples: &[EvalExample]) -> Result<EvalReport, EvalError> {
    let mut by_task: BTreeMap<EvalTaskId, Vec<&EvalExample>> = BTreeMap::new();
    for e in examples {
        by_task.entry(e.task_id).or_default().push(e);
    }
    let mut tasks = BTreeMap::new();
    for (task_id, items) in by_task {
        let template = EvalTaskTemplate::bundled(task_id);
        let scored: Vec<(&str, &str)> = items
            .iter()
            .filter_map(|e| e.reference.as_deref().map(|r| (e.prediction.as_str(), r)))
            .collect();
        let mut report = TaskReport {
            examples: items.len(),
            unscored: items.len() - scored.len(),
            rouge_1: None,
            rouge_2: None,
            rouge_l: None,
            classification: None,
            schema: None,
            external: external_columns(),
        };
        if let Some(labels) = &template.label_set {
            if !scored.is_empty() {
                let preds: Vec<&str> = scored.iter().map(|(p, _)| *p).collect();
                let golds: Vec<&str> = scored.iter().map(|(_, g)| *g).collect();
                report.classification = Some(classification_f1(&preds, &golds, labels)?);
            }
        } else if !scored.is_empty() {
            let mut r1 = Vec::new();
            let mut r2 = Vec::new();
            let mut rl = Vec::new();
            for (p, r) in &scored {
                r1.push(rouge_n::<f64>(p, r, 1)?);
                r2.push(rouge_n::<f64>(p, r, 2)?);
                rl.push(rouge_l::<f64>(p, r));
            }
            report.rouge_1 = Some(MetricScore::mean(&r1));
            report.rouge_2 = Some(MetricScore::mean(&r2));
            report.rouge_l = Some(MetricScore::mean(&rl));
        }
        let with_schema: Vec<_> = items
            .iter()
            .filter_map(|e| e.schema.map(|k| (e, k)))
            .collect();
        if !with_schema.is_empty() {
            report.schema = Some(SchemaTally {
                checked: with_schema.len(),
                valid: with_schema
                    .iter()
                    .filter(|(e, k)| validate_schema(&e.prediction, *k).is_ok())
                    .count(),
            });
        }
        tasks.insert(task_id, report);
    }
    Ok(EvalReport { tasks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_covers_both_task_kinds() {
        let input = r#"
{"task_id":"summarization","prediction":"the cat sat","reference":"the cat"}
{"task_id":"action_items","prediction":"{\"summary\":\"s\",\"action_items\":[]}","schema":"summary_action_items"}
{"task_id":"call_outcome","prediction":"Call back","reference":"call back"}
{"task_id":"call_outcome","prediction":"Other","reference":"Cancellation"}
"#;
        let examples = parse_eval_jsonl(input).unwrap();
        let report = evaluate(&examples).unwrap();
        let summ = &report.tasks[&EvalTaskId::Summarization];
        assert!((summ.rouge_2.unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
        let ai = &report.tasks[&EvalTaskId::ActionItems];
        assert_eq!((ai.unscored, ai.schema.as_ref().unwrap().valid), (1, 1));
        let co = report.tasks[&EvalTaskId::CallOutcome]
            .classification
            .as_ref()
            .unwrap();
        assert_eq!(co.examples, 2);
        assert_eq!(co.per_class["Call back"].score.f1, 1.0);
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["tasks"]["call_outcome"]["external"]["bertscore"].is_null());
    }

    #[test]
    fn bad_input_names_line() {
        let err = parse_eval_jsonl("\n{\"task_id\":\"nope\",\"prediction\":\"x\"}").unwrap_err();
        assert!(matches!(err, EvalError::Input { line: 2, .. }));
    }

    #[test]
    fn unknown_gold_is_error() {
        let e = vec![EvalExample {
            task_id: EvalTaskId::PurposeOfCall,
            prediction: "Claim".into(),
            reference: Some("Other".into()),
            schema: None,
        }];
        assert!(matches!(evaluate(&e), Err(EvalError::UnknownGoldLabel(_))));
    }
}
