//! Sensitive-span detection and replacement with masking tokens or
//! consistent surrogates.

mod detect;
pub mod lexicon;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Transcript;
use crate::text::stable_hash;

pub use detect::{
    default_detectors, detect_pii, load_detector_rules, parse_detector_rules, DetectorRule,
};

#[derive(Debug, Error, PartialEq)]
pub enum AnonymizeError {
    #[error("span {index} no longer matches turn text: expected {expected:?}")]
    SpanMismatch { index: usize, expected: String },
    #[error("detector rule: {0}")]
    Rule(String),
    #[error("invalid anonymization policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityType {
    PersonName,
    CompanyName,
    PhoneNumber,
    Email,
    Address,
    AccountNumber,
}

impl EntityType {
    pub const ALL: [EntityType; 6] = [
        EntityType::PersonName,
        EntityType::CompanyName,
        EntityType::PhoneNumber,
        EntityType::Email,
        EntityType::Address,
        EntityType::AccountNumber,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::PersonName => "PERSON_NAME",
            EntityType::CompanyName => "COMPANY_NAME",
            EntityType::PhoneNumber => "PHONE_NUMBER",
            EntityType::Email => "EMAIL",
            EntityType::Address => "ADDRESS",
            EntityType::AccountNumber => "ACCOUNT_NUMBER",
        }
    }

    /// Masking token such as `<COMPANY_NAME_1>`.
    pub fn mask_token(self, k: usize) -> String {
        format!("<{}_{k}>", self.as_str())
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A detected span; `start..end` are UTF-8 byte offsets into the turn text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiSpan {
    pub turn_index: usize,
    pub start: usize,
    pub end: usize,
    pub entity_type: EntityType,
    pub surface: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Mask,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnonymizationPolicy {
    pub actions: BTreeMap<EntityType, Action>,
    pub noise_dictionaries: BTreeMap<EntityType, Vec<String>>,
    pub seed: u64,
}

impl Default for AnonymizationPolicy {
    /// Person names are noised; every other type is masked.
    fn default() -> Self {
        let mut actions: BTreeMap<EntityType, Action> =
            EntityType::ALL.iter().map(|&t| (t, Action::Mask)).collect();
        actions.insert(EntityType::PersonName, Action::Noise);
        let noise_dictionaries = BTreeMap::from([
            (
                EntityType::PersonName,
                lexicon::NOISE_PERSON_NAMES
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            ),
            (
                EntityType::CompanyName,
                lexicon::NOISE_COMPANY_NAMES
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            ),
        ]);
        Self {
            actions,
            noise_dictionaries,
            seed: 0,
        }
    }
}

impl AnonymizationPolicy {
    pub fn mask_all(seed: u64) -> Self {
        Self {
            actions: EntityType::ALL.iter().map(|&t| (t, Action::Mask)).collect(),
            seed,
            ..Default::default()
        }
    }

    /// Types without an explicit action are masked.
    pub fn action(&self, t: EntityType) -> Action {
        self.actions.get(&t).copied().unwrap_or(Action::Mask)
    }

    pub fn validate(&self) -> Result<(), AnonymizeError> {
        for (&t, &a) in &self.actions {
            if a == Action::Noise && self.noise_dictionaries.get(&t).is_none_or(|d| d.is_empty()) {
                return Err(AnonymizeError::Policy(format!(
                    "{t} is noised but has no replacement dictionary"
                )));
            }
        }
        Ok(())
    }

    fn surrogate(&self, t: EntityType, transcript_id: &str, surface: &str) -> String {
        let dict = &self.noise_dictionaries[&t];
        let start = (stable_hash(self.seed, &[transcript_id, t.as_str(), surface])
            % dict.len() as u64) as usize;
        // never "replace" a surface with itself
        (0..dict.len())
            .map(|i| &dict[(start + i) % dict.len()])
            .find(|c| c.as_str() != surface)
            .unwrap_or(&dict[start])
            .clone()
    }
}

/// Rewrites every span; text outside spans is left byte-identical.
///
/// Masks number distinct surfaces per type in first-appearance order, and
/// noise surrogates depend only on `(seed, transcript id, surface)`.
pub fn apply_anonymization(
    t: &Transcript,
    spans: &[PiiSpan],
    policy: &AnonymizationPolicy,
) -> Result<Transcript, AnonymizeError> {
    policy.validate()?;
    for (index, s) in spans.iter().enumerate() {
        let ok = t
            .turns
            .get(s.turn_index)
            .and_then(|turn| turn.text.get(s.start..s.end))
            .is_some_and(|slice| s.start < s.end && slice == s.surface);
        if !ok {
            return Err(AnonymizeError::SpanMismatch {
                index,
                expected: s.surface.clone(),
            });
        }
    }
    let mut order: Vec<&PiiSpan> = spans.iter().collect();
    order.sort_by_key(|s| (s.turn_index, s.start));
    for w in order.windows(2) {
        if w[0].turn_index == w[1].turn_index && w[1].start < w[0].end {
            let index = spans
                .iter()
                .position(|s| std::ptr::eq(s, w[1]))
                .unwrap_or(0);
            return Err(AnonymizeError::SpanMismatch {
                index,
                expected: w[1].surface.clone(),
            });
        }
    }

    let mut numbering: HashMap<(EntityType, &str), usize> = HashMap::new();
    let mut next_index: HashMap<EntityType, usize> = HashMap::new();
    let mut replacements: Vec<String> = Vec::with_capacity(order.len());
    for s in &order {
        let r = match policy.action(s.entity_type) {
            Action::Mask => {
                let k = *numbering
                    .entry((s.entity_type, s.surface.as_str()))
                    .or_insert_with(|| {
                        let n = next_index.entry(s.entity_type).or_insert(0);
                        *n += 1;
                        *n
                    });
                s.entity_type.mask_token(k)
            }
            Action::Noise => policy.surrogate(s.entity_type, &t.id, &s.surface),
        };
        replacements.push(r);
    }

    let mut out = t.clone();
    // rewrite right-to-left so earlier offsets stay valid
    for (s, r) in order.iter().zip(&replacements).rev() {
        out.turns[s.turn_index]
            .text
            .replace_range(s.start..s.end, r);
    }
    Ok(out)
}
