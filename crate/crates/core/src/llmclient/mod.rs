//! Completion providers, retry/backoff and bounded-concurrency batching.

mod http;
mod mock;

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptgen::RenderedPrompt;
use crate::text::unit_draw;

pub use http::{HttpProvider, API_KEY_ENV};
pub use mock::MockProvider;

const MAX_BACKOFF_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_seconds: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// First retry delay; later retries double it.
    pub backoff_base_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".into(),
            model_name: "gpt-4o-mini".into(),
            temperature: 0.7,
            max_output_tokens: 2048,
            timeout_seconds: 120,
            max_retries: 3,
            max_in_flight: 8,
            backoff_base_ms: 1000,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_in_flight < 1 {
            return Err("max_in_flight must be >= 1".into());
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err("temperature must be >= 0".into());
        }
        if self.timeout_seconds == 0 {
            return Err("timeout_seconds must be >= 1".into());
        }
        Ok(())
    }

    /// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`, with
    /// the upper half jittered by a draw keyed on `jitter_key`.
    pub fn backoff(&self, retry: u32, jitter_key: &str) -> Duration {
        let full = self
            .backoff_base_ms
            .saturating_mul(1u64 << (retry.saturating_sub(1)).min(20))
            .min(MAX_BACKOFF_MS);
        let jitter = unit_draw(u64::from(retry), &["backoff", jitter_key]);
        Duration::from_millis(full / 2 + ((full / 2) as f64 * jitter) as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStatus {
    Ok,
    ProviderError,
    Timeout,
}

impl GenerationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationStatus::Ok => "ok",
            GenerationStatus::ProviderError => "provider_error",
            GenerationStatus::Timeout => "timeout",
        }
    }
}

/// One provider call and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub transcript_id: String,
    pub template_id: String,
    pub prompt_text: String,
    pub raw_output: String,
    pub status: GenerationStatus,
    pub attempt_count: u32,
}

/// Why a single request failed.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderFailure {
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl ProviderFailure {
    /// Transport failures, timeouts and 5xx are transient; 4xx and malformed bodies are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderFailure::Status { code, .. } => (500..600).contains(code),
            ProviderFailure::Transport(_) | ProviderFailure::Timeout => true,
            ProviderFailure::Malformed(_) => false,
        }
    }
}

/// A completion backend. Implementations are shared across worker threads.
pub trait Provider: Send + Sync {
    fn send(
        &self,
        prompt: &RenderedPrompt,
        cfg: &ProviderConfig,
    ) -> Result<String, ProviderFailure>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn send(
        &self,
        prompt: &RenderedPrompt,
        cfg: &ProviderConfig,
    ) -> Result<String, ProviderFailure> {
        (**self).send(prompt, cfg)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn send(
        &self,
        prompt: &RenderedPrompt,
        cfg: &ProviderConfig,
    ) -> Result<String, ProviderFailure> {
        (**self).send(prompt, cfg)
    }
}

/// Sends one prompt, retrying transient failures up to `max_retries` times.
pub fn complete<P: Provider + ?Sized>(
    prompt: &RenderedPrompt,
    cfg: &ProviderConfig,
    provider: &P,
) -> GenerationRecord {
    let mut attempt = 0u32;
    let (raw_output, status) = loop {
        attempt += 1;
        match provider.send(prompt, cfg) {
            Ok(text) if !text.trim().is_empty() => break (text, GenerationStatus::Ok),
            Ok(_) => {
                log::warn!(
                    "{}/{}: empty completion",
                    prompt.transcript_id,
                    prompt.template_id
                );
                break (String::new(), GenerationStatus::ProviderError);
            }
            Err(failure) => {
                if failure.is_retryable() && attempt <= cfg.max_retries {
                    let delay = cfg.backoff(attempt, &prompt.text);
                    log::debug!(
                        "{}/{}: {failure}; retry {attempt} in {delay:?}",
                        prompt.transcript_id,
                        prompt.template_id
                    );
                    std::thread::sleep(delay);
                    continue;
                }
                log::warn!(
                    "{}/{}: giving up after {attempt} attempt(s): {failure}",
                    prompt.transcript_id,
                    prompt.template_id
                );
                let status = match failure {
                    ProviderFailure::Timeout => GenerationStatus::Timeout,
                    _ => GenerationStatus::ProviderError,
                };
                break (String::new(), status);
            }
        }
    };
    GenerationRecord {
        transcript_id: prompt.transcript_id.clone(),
        template_id: prompt.template_id.clone(),
        prompt_text: prompt.text.clone(),
        raw_output,
        status,
        attempt_count: attempt,
    }
}

/// Runs prompts with at most `max_in_flight` outstanding requests and hands
/// records to `sink` in input order. Failures are per record; the batch
/// always runs to completion.
pub fn complete_batch<I, P>(
    prompts: I,
    cfg: &ProviderConfig,
    provider: &P,
    mut sink: impl FnMut(GenerationRecord),
) where
    I: IntoIterator<Item = RenderedPrompt>,
    I::IntoIter: Send,
    P: Provider + ?Sized,
{
    let source = Mutex::new(prompts.into_iter().enumerate());
    let workers = cfg.max_in_flight.max(1);
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, GenerationRecord)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let source = &source;
            scope.spawn(move || loop {
                let next = source.lock().expect("prompt source poisoned").next();
                let Some((index, prompt)) = next else { break };
                if tx.send((index, complete(&prompt, cfg, provider))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending: BTreeMap<usize, GenerationRecord> = BTreeMap::new();
        let mut next = 0usize;
        for (index, record) in rx {
            pending.insert(index, record);
            while let Some(r) = pending.remove(&next) {
                sink(r);
                next += 1;
            }
        }
    });
}

/// [`complete_batch`] collected into a vector.
pub fn complete_all<P: Provider + ?Sized>(
    prompts: Vec<RenderedPrompt>,
    cfg: &ProviderConfig,
    provider: &P,
) -> Vec<GenerationRecord> {
    let mut out = Vec::with_capacity(prompts.len());
    complete_batch(prompts, cfg, provider, |r| out.push(r));
    out
}
