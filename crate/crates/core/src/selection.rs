//! Token-type entropy scoring and entropy-based document selection.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::text::word_types;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("no scores to select from")]
    EmptyInput,
    #[error("duplicate transcript id {0:?}")]
    DuplicateId(String),
    #[error("invalid selection policy: {0}")]
    InvalidPolicy(String),
}

/// Shannon entropy (bits) of the token-type distribution of one text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenEntropy<F> {
    pub entropy_bits: F,
    pub type_count: usize,
    pub token_count: usize,
}

/// Entropy of a count vector, `-Σ p log2 p`.
///
/// Counts are summed in the order given; callers wanting reproducible bits
/// across runs should pass them in a fixed order.
pub fn entropy_of_counts<F: Real>(counts: &[usize]) -> F {
    let total: usize = counts.iter().sum();
    let nonzero = counts.iter().filter(|&&c| c > 0).count();
    if total == 0 || nonzero <= 1 {
        return F::zero();
    }
    let n = F::from_count(total);
    let mut h = F::zero();
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = F::from_count(c) / n;
        h = h - p * p.log2();
    }
    // rounding can nudge a uniform distribution past its ceiling
    h.min(F::from_count(nonzero).log2()).max(F::zero())
}

/// Entropy over lowercased word types of `text`.
pub fn token_type_entropy<F: Real>(text: &str) -> Result<TokenEntropy<F>, SelectionError> {
    let tokens = word_types(text);
    if tokens.is_empty() {
        return Err(SelectionError::EmptyText);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let cv: Vec<usize> = counts.values().copied().collect();
    Ok(TokenEntropy {
        entropy_bits: entropy_of_counts(&cv),
        type_count: cv.len(),
        token_count: tokens.len(),
    })
}

/// Persisted score line: `{"id", "entropy_bits", "types", "tokens"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyScore {
    #[serde(rename = "id")]
    pub transcript_id: String,
    pub entropy_bits: f64,
    #[serde(rename = "types")]
    pub type_count: usize,
    #[serde(rename = "tokens")]
    pub token_count: usize,
}

impl EntropyScore {
    pub fn from_text(transcript_id: &str, text: &str) -> Result<Self, SelectionError> {
        let e = token_type_entropy::<f64>(text)?;
        Ok(Self {
            transcript_id: transcript_id.to_string(),
            entropy_bits: e.entropy_bits,
            type_count: e.type_count,
            token_count: e.token_count,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Keep the `ceil(fraction * N)` highest-entropy documents.
    TopFraction { top_fraction: f64 },
    /// Keep every document at or above the threshold.
    MinEntropy { min_entropy_bits: f64 },
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy::TopFraction { top_fraction: 1.0 }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<(), SelectionError> {
        match *self {
            SelectionPolicy::TopFraction { top_fraction }
                if !(top_fraction > 0.0 && top_fraction <= 1.0) =>
            {
                Err(SelectionError::InvalidPolicy(format!(
                    "top_fraction {top_fraction} outside (0, 1]"
                )))
            }
            SelectionPolicy::MinEntropy { min_entropy_bits }
                if min_entropy_bits.is_nan() || min_entropy_bits < 0.0 =>
            {
                Err(SelectionError::InvalidPolicy(format!(
                    "min_entropy_bits {min_entropy_bits} < 0"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Selected ids, sorted ascending.
///
/// Ties at the top-fraction cut go to the lexicographically smaller id.
pub fn select_documents(
    scores: &[EntropyScore],
    policy: &SelectionPolicy,
) -> Result<Vec<String>, SelectionError> {
    if scores.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    policy.validate()?;
    let mut seen = HashSet::with_capacity(scores.len());
    for s in scores {
        if !seen.insert(s.transcript_id.as_str()) {
            return Err(SelectionError::DuplicateId(s.transcript_id.clone()));
        }
    }
    let mut picked: Vec<String> = match *policy {
        SelectionPolicy::TopFraction { top_fraction } => {
            let keep =
                ((top_fraction * scores.len() as f64).ceil() as usize).clamp(1, scores.len());
            let mut ranked: Vec<&EntropyScore> = scores.iter().collect();
            ranked.sort_by(|a, b| {
                b.entropy_bits
                    .partial_cmp(&a.entropy_bits)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| a.transcript_id.cmp(&b.transcript_id))
            });
            ranked
                .into_iter()
                .take(keep)
                .map(|s| s.transcript_id.clone())
                .collect()
        }
        SelectionPolicy::MinEntropy { min_entropy_bits } => scores
            .iter()
            .filter(|s| s.entropy_bits >= min_entropy_bits)
            .map(|s| s.transcript_id.clone())
            .collect(),
    };
    picked.sort();
    Ok(picked)
}
