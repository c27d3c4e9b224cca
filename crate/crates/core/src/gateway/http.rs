//! Chat-completion HTTP provider.
//!
//! Sends `POST <endpoint>` with an OpenAI-style body:
//! `{"model", "messages": [{"role":"system",..},{"role":"user",..}],
//! "temperature", "response_format": {"type":"json_object"}}` and reads
//! `choices[0].message.content` from the reply.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Provider, ProviderCall, ProviderConfig, ProviderError};

#[derive(Debug)]
pub struct ChatCompletionProvider {
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl ChatCompletionProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, String> {
        config.check()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .new_agent();
        Ok(Self { config, agent })
    }

    fn body(&self, call: &ProviderCall<'_>) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": call.system},
                {"role": "user", "content": call.user},
            ],
        })
    }
}

impl Provider for ChatCompletionProvider {
    fn complete(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError> {
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(self.body(call)).map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderError::Timeout,
            other => ProviderError::Transport(other.to_string()),
        })?;
        let reply: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Transport(format!("unreadable reply: {e}")))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Transport("reply has no message content".into()))
    }
}
