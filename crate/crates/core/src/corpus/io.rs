use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Transcript, TranscriptTurn};
use crate::text::content_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// One JSON transcript per line.
    JsonlTurns,
    /// `# id: ...` headers followed by `NAME: text` lines.
    TaggedText,
}

impl InputFormat {
    /// Guess from a file extension: `.txt` is tagged text, everything else JSONL.
    pub fn from_extension(ext: Option<&str>) -> Self {
        match ext {
            Some("txt") => InputFormat::TaggedText,
            _ => InputFormat::JsonlTurns,
        }
    }
}

/// Parses a whole input file into transcripts, preserving file order.
pub fn parse_transcript_file(
    bytes: &[u8],
    format: InputFormat,
) -> Result<Vec<Transcript>, CorpusError> {
    let text = std::str::from_utf8(bytes)?;
    let parsed = match format {
        InputFormat::JsonlTurns => parse_jsonl(text)?,
        InputFormat::TaggedText => parse_tagged(text)?,
    };
    let mut seen = HashSet::new();
    for (line, t) in &parsed {
        if !seen.insert(t.id.as_str()) {
            return Err(CorpusError::schema(
                *line,
                format!("duplicate transcript id {:?}", t.id),
            ));
        }
    }
    Ok(parsed.into_iter().map(|(_, t)| t).collect())
}

fn parse_jsonl(text: &str) -> Result<Vec<(usize, Transcript)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let t: Transcript =
            serde_json::from_str(line).map_err(|e| CorpusError::schema(line_no, e.to_string()))?;
        t.validate().map_err(|e| CorpusError::schema(line_no, e))?;
        out.push((line_no, t));
    }
    Ok(out)
}

fn parse_tagged(text: &str) -> Result<Vec<(usize, Transcript)>, CorpusError> {
    struct Pending {
        line: usize,
        id: Option<String>,
        metadata: BTreeMap<String, String>,
        turns: Vec<TranscriptTurn>,
    }

    fn finish(p: Pending, out: &mut Vec<(usize, Transcript)>) -> Result<(), CorpusError> {
        if p.turns.is_empty() && p.id.is_none() && p.metadata.is_empty() {
            return Ok(());
        }
        let id = p.id.unwrap_or_else(|| {
            let body: Vec<&str> = p
                .turns
                .iter()
                .flat_map(|t| [t.speaker_label.as_str(), t.text.as_str()])
                .collect();
            format!("tagged-{}", &content_id(&body)[..12])
        });
        let t = Transcript {
            id,
            metadata: p.metadata,
            turns: p.turns,
        };
        t.validate().map_err(|e| CorpusError::schema(p.line, e))?;
        out.push((p.line, t));
        Ok(())
    }

    let mut out = Vec::new();
    let mut cur = Pending {
        line: 1,
        id: None,
        metadata: BTreeMap::new(),
        turns: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let (key, value) = header.split_once(':').ok_or_else(|| {
                CorpusError::schema(line_no, "header lines must look like `# key: value`")
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key == "id" {
                let prev = std::mem::replace(
                    &mut cur,
                    Pending {
                        line: line_no,
                        id: Some(value.to_string()),
                        metadata: BTreeMap::new(),
                        turns: Vec::new(),
                    },
                );
                finish(prev, &mut out)?;
            } else {
                cur.metadata.insert(key.to_string(), value.to_string());
            }
            continue;
        }
        match line.split_once(':') {
            Some((name, body)) if is_speaker_tag(name) => {
                cur.turns
                    .push(TranscriptTurn::untimed(name.trim(), body.trim()));
            }
            _ => match cur.turns.last_mut() {
                // continuation of the previous turn
                Some(last) => {
                    last.text.push(' ');
                    last.text.push_str(line);
                }
                None => {
                    return Err(CorpusError::schema(
                        line_no,
                        "text before any `NAME:` speaker tag",
                    ))
                }
            },
        }
    }
    finish(cur, &mut out)?;
    Ok(out)
}

fn is_speaker_tag(name: &str) -> bool {
    let name = name.trim();
    !name.is_empty()
        && name.chars().count() <= 40
        && name
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, ' ' | '_' | '-' | '.'))
}

/// Canonical single-line JSON for a transcript.
pub fn write_transcript_line(t: &Transcript) -> String {
    serde_json::to_string(t).expect("transcript serializes")
}

/// Canonical JSONL for a sequence of transcripts.
pub fn write_jsonl<'a>(ts: impl IntoIterator<Item = &'a Transcript>) -> String {
    let mut s = String::new();
    for t in ts {
        s.push_str(&write_transcript_line(t));
        s.push('\n');
    }
    s
}
