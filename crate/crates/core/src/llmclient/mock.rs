use std::collections::HashMap;

use rand::Rng;
use serde_json::{json, Value};

use super::{Provider, ProviderConfig, ProviderFailure};
use crate::promptgen::{ExpectedSchema, MetaPromptTemplate, Registry, RenderedPrompt};
use crate::text::keyed_rng;

#[derive(Debug, Clone)]
struct TemplateShape {
    schema: ExpectedSchema,
    tasks_min: u32,
    tasks_max: u32,
    start: String,
    end: String,
}

impl From<&MetaPromptTemplate> for TemplateShape {
    fn from(t: &MetaPromptTemplate) -> Self {
        Self {
            schema: t.expected_schema,
            tasks_min: t.tasks_min,
            tasks_max: t.tasks_max,
            start: t.conversation_start.clone(),
            end: t.conversation_end.clone(),
        }
    }
}

/// Offline provider. Output is a pure function of the seed, the template id
/// and the prompt text, and follows the template's schema.
///
/// A configurable share of replies are wrapped in prose and a code fence, and
/// another share are refusals with no JSON at all.
#[derive(Debug, Clone)]
pub struct MockProvider {
    shapes: HashMap<String, TemplateShape>,
    seed: u64,
    fenced_rate: f64,
    invalid_rate: f64,
}

impl MockProvider {
    pub fn new(registry: &Registry, seed: u64) -> Self {
        let shapes = registry
            .templates()
            .iter()
            .map(|t| (t.template_id.clone(), TemplateShape::from(t)))
            .collect();
        Self {
            shapes,
            seed,
            fenced_rate: 0.15,
            invalid_rate: 0.03,
        }
    }

    pub fn with_rates(mut self, fenced_rate: f64, invalid_rate: f64) -> Self {
        self.fenced_rate = fenced_rate.clamp(0.0, 1.0);
        self.invalid_rate = invalid_rate.clamp(0.0, 1.0);
        self
    }

    /// The reply for a prompt, without going through the retry loop.
    pub fn reply(&self, prompt: &RenderedPrompt) -> Result<String, ProviderFailure> {
        let shape =
            self.shapes
                .get(&prompt.template_id)
                .ok_or_else(|| ProviderFailure::Status {
                    code: 404,
                    body: format!("unknown template {}", prompt.template_id),
                })?;
        let mut rng = keyed_rng(self.seed, &["mock", &prompt.template_id, &prompt.text]);
        let turns = conversation_turns(&prompt.text, &shape.start, &shape.end);
        let roll: f64 = rng.gen();
        if roll < self.invalid_rate {
            return Ok("I'm sorry, but I can't produce that output for this conversation.".into());
        }
        let n = rng.gen_range(shape.tasks_min..=shape.tasks_max) as usize;
        let body = match shape.schema {
            ExpectedSchema::QaList => qa_list(&turns, n, &mut rng),
            ExpectedSchema::OrderedTaskList => task_list(&turns, n),
            ExpectedSchema::FreeJson => free_json(&turns),
        };
        let body = serde_json::to_string_pretty(&body).expect("serializable");
        if roll < self.invalid_rate + self.fenced_rate {
            Ok(format!(
                "Here is the requested output:\n\n```json\n{body}\n```\n"
            ))
        } else {
            Ok(body)
        }
    }
}

impl Provider for MockProvider {
    fn send(&self, prompt: &RenderedPrompt, _: &ProviderConfig) -> Result<String, ProviderFailure> {
        self.reply(prompt)
    }
}

/// `(speaker, text)` pairs from the rendered transcript between the delimiters.
fn conversation_turns(prompt: &str, start: &str, end: &str) -> Vec<(String, String)> {
    let body = prompt
        .split_once(start)
        .map(|(_, rest)| rest)
        .unwrap_or(prompt);
    let body = body.rsplit_once(end).map(|(head, _)| head).unwrap_or(body);
    body.lines()
        .filter_map(|line| {
            let line = line.trim();
            let line = match line.strip_prefix('[') {
                Some(rest) => rest.split_once("] ").map(|(_, r)| r).unwrap_or(line),
                None => line,
            };
            let (speaker, text) = line.split_once(": ")?;
            let text = text.trim();
            (!speaker.is_empty() && !text.is_empty())
                .then(|| (speaker.trim().to_string(), text.to_string()))
        })
        .collect()
}

fn opening(text: &str, words: usize) -> String {
    text.split_whitespace()
        .take(words)
        .collect::<Vec<_>>()
        .join(" ")
}

fn pick(turns: &[(String, String)], i: usize) -> Option<&(String, String)> {
    (!turns.is_empty()).then(|| &turns[i % turns.len()])
}

fn qa_list(turns: &[(String, String)], n: usize, rng: &mut impl Rng) -> Value {
    let offset = rng.gen_range(0..turns.len().max(1));
    let items: Vec<Value> = (0..n)
        .map(|i| match pick(turns, offset + i) {
            Some((speaker, text)) => json!({
                "question": format!("What does {speaker} say in the turn that begins \"{}\"?", opening(text, 4)),
                "answer": text,
            }),
            None => {
                json!({"question": "What was discussed?", "answer": "The conversation was empty."})
            }
        })
        .collect();
    Value::Array(items)
}

fn task_list(turns: &[(String, String)], n: usize) -> Value {
    let items: Vec<Value> = (0..n)
        .map(|i| match pick(turns, i) {
            Some((speaker, text)) => json!({
                "task": format!("Task {}: Summarize the point {speaker} makes starting with \"{}\".", i + 1, opening(text, 3)),
                "output": format!("{speaker} says: {text}"),
            }),
            None => json!({"task": format!("Task {}: Summarize the conversation.", i + 1), "output": "Nothing was said."}),
        })
        .collect();
    Value::Array(items)
}

fn free_json(turns: &[(String, String)]) -> Value {
    let mut speakers: Vec<&str> = Vec::new();
    for (s, _) in turns {
        if !speakers.contains(&s.as_str()) {
            speakers.push(s);
        }
    }
    let intents: serde_json::Map<String, Value> = speakers
        .iter()
        .map(|s| {
            let first = turns
                .iter()
                .find(|(sp, _)| sp == s)
                .map(|(_, t)| opening(t, 6))
                .unwrap_or_default();
            (s.to_string(), json!(format!("opens with \"{first}\"")))
        })
        .collect();
    json!({ "speakers": speakers, "intents": intents, "turns": turns.len() })
}
