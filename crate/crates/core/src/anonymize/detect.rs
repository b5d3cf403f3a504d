use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use super::lexicon::{first_names, COMPANY_NAMES, PERSON_NAMES};
use super::{AnonymizeError, EntityType, PiiSpan};
use crate::corpus::Transcript;

/// A single detector: a pattern that proposes spans of one entity type.
#[derive(Debug, Clone)]
pub struct DetectorRule {
    pub entity_type: EntityType,
    matcher: Regex,
}

impl DetectorRule {
    pub fn regex(entity_type: EntityType, pattern: &str) -> Result<Self, AnonymizeError> {
        let matcher =
            Regex::new(pattern).map_err(|e| AnonymizeError::Rule(format!("{entity_type}: {e}")))?;
        Ok(Self {
            entity_type,
            matcher,
        })
    }

    /// Whole-word, case-sensitive match against any of `terms`, preferring longer terms.
    pub fn dictionary<S: AsRef<str>>(
        entity_type: EntityType,
        terms: &[S],
    ) -> Result<Self, AnonymizeError> {
        let mut terms: Vec<&str> = terms
            .iter()
            .map(AsRef::as_ref)
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        if terms.is_empty() {
            return Err(AnonymizeError::Rule(format!(
                "{entity_type}: empty dictionary"
            )));
        }
        terms.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        terms.dedup();
        let alternation = terms
            .iter()
            .map(|t| regex::escape(t))
            .collect::<Vec<_>>()
            .join("|");
        Self::regex(entity_type, &format!(r"\b(?:{alternation})\b"))
    }

    fn candidates<'a>(&'a self, text: &'a str) -> impl Iterator<Item = (usize, usize)> + 'a {
        self.matcher
            .find_iter(text)
            .filter(|m| !m.is_empty())
            .map(|m| (m.start(), m.end()))
    }
}

/// The bundled rule set, in tie-breaking priority order.
pub fn default_detectors() -> Vec<DetectorRule> {
    let mut persons: Vec<&str> = PERSON_NAMES.to_vec();
    persons.extend(first_names());
    let company_roots: Vec<&str> = COMPANY_NAMES
        .iter()
        .filter_map(|c| c.split(' ').next())
        .collect();
    let mut companies: Vec<&str> = COMPANY_NAMES.to_vec();
    companies.extend(
        company_roots
            .into_iter()
            .filter(|r| *r != "Pied" && *r != "Massive"),
    );
    vec![
        DetectorRule::regex(EntityType::Email, r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}").unwrap(),
        DetectorRule::regex(EntityType::PhoneNumber, r"(?:\(\d{3}\)\s?|\b\d{3}[-.\s])\d{3}[-.]\d{4}\b").unwrap(),
        DetectorRule::regex(
            EntityType::Address,
            r"\b\d{1,5}(?:\s+[A-Z][A-Za-z]*)+\s+(?:Street|St|Avenue|Ave|Road|Rd|Boulevard|Blvd|Lane|Ln|Drive|Dr|Way|Court|Ct|Plaza|Parkway)\b",
        )
        .unwrap(),
        DetectorRule::regex(EntityType::AccountNumber, r"\b\d{8,16}\b").unwrap(),
        DetectorRule::dictionary(EntityType::CompanyName, &companies).unwrap(),
        DetectorRule::dictionary(EntityType::PersonName, &persons).unwrap(),
    ]
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RuleKind {
    Regex,
    Dictionary,
}

#[derive(Debug, Deserialize)]
struct RuleEntry {
    entity_type: EntityType,
    kind: RuleKind,
    pattern_or_path: String,
}

#[derive(Debug, Deserialize)]
struct RuleFile {
    #[serde(rename = "rule", default)]
    rules: Vec<RuleEntry>,
}

/// Parses a TOML rule file (`[[rule]]` tables). Dictionary paths resolve against `base_dir`.
pub fn parse_detector_rules(
    text: &str,
    base_dir: &Path,
) -> Result<Vec<DetectorRule>, AnonymizeError> {
    let file: RuleFile = toml::from_str(text).map_err(|e| AnonymizeError::Rule(e.to_string()))?;
    file.rules
        .into_iter()
        .map(|entry| match entry.kind {
            RuleKind::Regex => DetectorRule::regex(entry.entity_type, &entry.pattern_or_path),
            RuleKind::Dictionary => {
                let path = base_dir.join(&entry.pattern_or_path);
                let body = std::fs::read_to_string(&path)
                    .map_err(|e| AnonymizeError::Rule(format!("{}: {e}", path.display())))?;
                let terms: Vec<&str> = body.lines().collect();
                DetectorRule::dictionary(entry.entity_type, &terms)
            }
        })
        .collect()
}

pub fn load_detector_rules(path: &Path) -> Result<Vec<DetectorRule>, AnonymizeError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AnonymizeError::Rule(format!("{}: {e}", path.display())))?;
    parse_detector_rules(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Non-overlapping spans sorted by `(turn_index, start)`.
///
/// Overlaps resolve in favour of the longer span, then the earlier rule.
pub fn detect_pii(t: &Transcript, detectors: &[DetectorRule]) -> Vec<PiiSpan> {
    let mut spans = Vec::new();
    for (turn_index, turn) in t.turns.iter().enumerate() {
        let text = turn.text.as_str();
        // (len, rule, start, end)
        let mut cands: Vec<(usize, usize, usize, usize)> = detectors
            .iter()
            .enumerate()
            .flat_map(|(ri, rule)| rule.candidates(text).map(move |(s, e)| (e - s, ri, s, e)))
            .collect();
        cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut kept: Vec<(usize, usize, usize)> = Vec::new();
        for (_, ri, s, e) in cands {
            if kept.iter().all(|&(ks, ke, _)| e <= ks || s >= ke) {
                kept.push((s, e, ri));
            }
        }
        kept.sort();
        spans.extend(kept.into_iter().map(|(s, e, ri)| PiiSpan {
            turn_index,
            start: s,
            end: e,
            entity_type: detectors[ri].entity_type,
            surface: text[s..e].to_string(),
        }));
    }
    spans
}
