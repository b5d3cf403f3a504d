use std::time::Duration;

use serde_json::{json, Value};

use super::{Provider, ProviderConfig, ProviderFailure};
use crate::promptgen::RenderedPrompt;

pub const API_KEY_ENV: &str = "DACIP_API_KEY";

/// OpenAI-compatible chat completions over HTTP.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpProvider {
    pub fn new(cfg: &ProviderConfig, api_key: Option<String>) -> Result<Self, ProviderFailure> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_seconds))
            .build()
            .map_err(|e| ProviderFailure::Transport(e.to_string()))?;
        Ok(Self { client, api_key })
    }

    /// Reads the key from `DACIP_API_KEY`; requests go out unauthenticated when it is unset.
    pub fn from_env(cfg: &ProviderConfig) -> Result<Self, ProviderFailure> {
        Self::new(
            cfg,
            std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        )
    }

    fn endpoint(cfg: &ProviderConfig) -> String {
        format!("{}/v1/chat/completions", cfg.base_url.trim_end_matches('/'))
    }
}

fn transport(e: reqwest::Error) -> ProviderFailure {
    if e.is_timeout() {
        ProviderFailure::Timeout
    } else {
        ProviderFailure::Transport(e.to_string())
    }
}

impl Provider for HttpProvider {
    fn send(
        &self,
        prompt: &RenderedPrompt,
        cfg: &ProviderConfig,
    ) -> Result<String, ProviderFailure> {
        let body = json!({
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
        });
        let mut req = self.client.post(Self::endpoint(cfg)).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(transport)?;
        let code = resp.status().as_u16();
        let text = resp.text().map_err(transport)?;
        if !(200..300).contains(&code) {
            return Err(ProviderFailure::Status {
                code,
                body: text.chars().take(500).collect(),
            });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| ProviderFailure::Malformed(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderFailure::Malformed("missing choices[0].message.content".into()))
    }
}
