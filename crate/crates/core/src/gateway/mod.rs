//! The single path from the pipeline to a language model.
//!
//! Every stage call goes through [`Gateway::complete_structured`], which
//! renders the stage prompt, sends it to the configured [`Provider`], parses
//! the reply against the stage's response type and runs repair round trips
//! when the reply does not validate.

mod http;
mod mock;
pub mod schema;
mod templates;

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use http::ChatCompletionProvider;
pub use mock::{MockCall, MockProvider, MockScript, ScriptEntry, When};
pub use templates::{RenderedPrompt, TemplateError, Templates, BUILTIN_LOCALE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    EventExtract,
    QuestionArticulation,
    StoryAnalyze,
    QuestionElaboration,
    Reconstruct,
    Modify,
    Wrapup,
    Titles,
    SceneElements,
    SceneTopology,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::EventExtract,
        Stage::QuestionArticulation,
        Stage::StoryAnalyze,
        Stage::QuestionElaboration,
        Stage::Reconstruct,
        Stage::Modify,
        Stage::Wrapup,
        Stage::Titles,
        Stage::SceneElements,
        Stage::SceneTopology,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::EventExtract => "event_extract",
            Stage::QuestionArticulation => "question_articulation",
            Stage::StoryAnalyze => "story_analyze",
            Stage::QuestionElaboration => "question_elaboration",
            Stage::Reconstruct => "reconstruct",
            Stage::Modify => "modify",
            Stage::Wrapup => "wrapup",
            Stage::Titles => "titles",
            Stage::SceneElements => "scene_elements",
            Stage::SceneTopology => "scene_topology",
        }
    }

    pub fn schema_id(self) -> &'static str {
        schema::schema_id(self)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Connection settings for a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_repair_retries: u32,
    #[serde(default)]
    pub api_key: Option<String>,
    /// Sampling temperature; 0 keeps providers that honor it deterministic.
    #[serde(default)]
    pub temperature: f32,
}

fn default_timeout() -> u64 {
    30
}

fn default_retries() -> u32 {
    1
}

impl ProviderConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.timeout_secs == 0 {
            return Err("timeout must be positive".into());
        }
        if self.endpoint.trim().is_empty() {
            return Err("endpoint is empty".into());
        }
        Ok(())
    }
}

/// Knobs the gateway itself needs, independent of the provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayConfig {
    pub timeout: Duration,
    pub max_repair_retries: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(default_timeout()),
            max_repair_retries: default_retries(),
        }
    }
}

/// One provider round trip as the provider sees it.
#[derive(Debug, Clone)]
pub struct ProviderCall<'a> {
    pub stage: Stage,
    pub schema_id: &'a str,
    pub system: &'a str,
    pub user: &'a str,
    pub match_key: &'a str,
    /// 1 for the first try, 2+ for repair round trips.
    pub attempt: u32,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
}

pub trait Provider: Send + Sync {
    fn complete(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("{stage}: provider timed out")]
    Timeout { stage: Stage },
    #[error("{stage}: {message}")]
    Transport { stage: Stage, message: String },
    #[error("{stage}: response failed schema {schema_id} after {attempts} attempts: {message}")]
    Schema {
        stage: Stage,
        schema_id: String,
        attempts: u32,
        message: String,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl GatewayError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            GatewayError::Timeout { stage }
            | GatewayError::Transport { stage, .. }
            | GatewayError::Schema { stage, .. } => Some(*stage),
            GatewayError::Template(_) => None,
        }
    }
}

/// A rendered stage call, ready to send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRequest {
    pub stage: Stage,
    pub rendered_prompt: RenderedPrompt,
    pub response_schema_id: &'static str,
    pub match_key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Ok,
    Timeout,
    Transport,
    Schema,
}

/// Accounting for one `complete_structured` call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub stage: Stage,
    pub attempts: u32,
    pub latency_ms: u64,
    pub outcome: CallOutcome,
}

/// Key the mock provider matches on.
///
/// First 16 hex digits of SHA-256 over the normalized subject (trimmed,
/// lowercased, whitespace collapsed), a 0x1f separator, and the missing tags
/// sorted and joined with commas.
pub fn match_key(subject: &str, missing: &[String]) -> String {
    let normalized = subject
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    let mut tags: Vec<&str> = missing.iter().map(String::as_str).collect();
    tags.sort_unstable();
    tags.dedup();
    let mut hasher = Sha256::new();
    hasher.update(normalized.as_bytes());
    hasher.update([0x1f]);
    hasher.update(tags.join(",").as_bytes());
    hex::encode(hasher.finalize())[..16].to_string()
}

pub struct Gateway {
    provider: Arc<dyn Provider>,
    templates: Arc<Templates>,
    locale: String,
    config: GatewayConfig,
    records: Mutex<Vec<CallRecord>>,
}

impl Gateway {
    pub fn new(
        provider: Arc<dyn Provider>,
        templates: Arc<Templates>,
        locale: impl Into<String>,
        config: GatewayConfig,
    ) -> Result<Self, TemplateError> {
        let locale = locale.into();
        templates.ensure_locale(&locale)?;
        Ok(Self {
            provider,
            templates,
            locale,
            config,
            records: Mutex::new(Vec::new()),
        })
    }

    /// Gateway over the built-in templates with default settings.
    pub fn with_provider(provider: Arc<dyn Provider>) -> Self {
        Self::new(
            provider,
            Arc::new(Templates::builtin()),
            BUILTIN_LOCALE,
            GatewayConfig::default(),
        )
        .expect("built-in templates cover the built-in locale")
    }

    pub fn locale(&self) -> &str {
        &self.locale
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    /// Renders the prompt for `stage` and computes its match key.
    pub fn render_prompt(
        &self,
        stage: Stage,
        vars: serde_json::Map<String, serde_json::Value>,
        subject: &str,
        missing: &[String],
    ) -> Result<StageRequest, GatewayError> {
        let rendered_prompt = self.templates.render(&self.locale, stage, vars)?;
        Ok(StageRequest {
            stage,
            rendered_prompt,
            response_schema_id: stage.schema_id(),
            match_key: match_key(subject, missing),
        })
    }

    /// Sends `request` and returns a value that parsed and passed `check`.
    ///
    /// Parse or check failures trigger up to `max_repair_retries` repair
    /// round trips, each carrying the validation error back to the model.
    /// Timeouts and transport failures are returned immediately.
    pub fn complete_structured<T, F>(&self, request: &StageRequest, check: F) -> Result<T, GatewayError>
    where
        T: DeserializeOwned,
        F: Fn(&T) -> Result<(), String>,
    {
        let started = Instant::now();
        let stage = request.stage;
        let max_attempts = 1 + self.config.max_repair_retries;
        let mut user = request.rendered_prompt.user.clone();
        let mut attempt = 0;
        let result = loop {
            attempt += 1;
            let call = ProviderCall {
                stage,
                schema_id: request.response_schema_id,
                system: &request.rendered_prompt.system,
                user: &user,
                match_key: &request.match_key,
                attempt,
                timeout: self.config.timeout,
            };
            let raw = match self.provider.complete(&call) {
                Ok(raw) => raw,
                Err(ProviderError::Timeout) => break Err(GatewayError::Timeout { stage }),
                Err(ProviderError::Transport(message)) => {
                    break Err(GatewayError::Transport { stage, message })
                }
            };
            let problem = match serde_json::from_str::<T>(strip_fences(&raw)) {
                Ok(value) => match check(&value) {
                    Ok(()) => break Ok(value),
                    Err(e) => e,
                },
                Err(e) => format!("invalid JSON for {}: {e}", request.response_schema_id),
            };
            if attempt >= max_attempts {
                break Err(GatewayError::Schema {
                    stage,
                    schema_id: request.response_schema_id.to_string(),
                    attempts: attempt,
                    message: problem,
                });
            }
            tracing::debug!(%stage, attempt, %problem, "repairing stage response");
            user = repair_message(&request.rendered_prompt.user, &problem);
        };
        let outcome = match &result {
            Ok(_) => CallOutcome::Ok,
            Err(GatewayError::Timeout { .. }) => CallOutcome::Timeout,
            Err(GatewayError::Schema { .. }) => CallOutcome::Schema,
            Err(_) => CallOutcome::Transport,
        };
        self.records.lock().expect("records poisoned").push(CallRecord {
            stage,
            attempts: attempt,
            latency_ms: started.elapsed().as_millis() as u64,
            outcome,
        });
        result
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.records.lock().expect("records poisoned").clone()
    }

    /// Total provider round trips made so far, repairs included.
    pub fn attempts_total(&self) -> u32 {
        self.records().iter().map(|r| r.attempts).sum()
    }
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("locale", &self.locale)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

fn repair_message(original: &str, problem: &str) -> String {
    format!(
        "{original}\n\nYour previous reply was rejected: {problem}\n\
         Reply again with only a JSON object that matches the schema."
    )
}

/// Drops a surrounding Markdown code fence, which chat models often add.
fn strip_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    #[derive(Debug, Deserialize)]
    struct Titles {
        titles: Vec<String>,
    }

    fn three(t: &Titles) -> Result<(), String> {
        if t.titles.len() == 3 {
            Ok(())
        } else {
            Err(format!("expected 3 titles, got {}", t.titles.len()))
        }
    }

    fn gateway(script: MockScript) -> (Gateway, Arc<MockProvider>) {
        let mock = Arc::new(MockProvider::new(script));
        (Gateway::with_provider(mock.clone()), mock)
    }

    fn request(gw: &Gateway) -> StageRequest {
        gw.render_prompt(Stage::Titles, Default::default(), "Yes", &[]).unwrap()
    }

    #[test]
    fn match_key_normalizes() {
        let a = match_key("  I played   With Oliver. ", &["B:cause".into(), "E:emotion".into()]);
        let b = match_key("i played with oliver.", &["E:emotion".into(), "B:cause".into()]);
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert_ne!(a, match_key("i played with oliver.", &[]));
    }

    #[test]
    fn fenced_json_is_accepted() {
        assert_eq!(strip_fences("```json\n{\"a\":1}\n```"), "{\"a\":1}");
        assert_eq!(strip_fences(" {\"a\":1} "), "{\"a\":1}");
    }

    #[test]
    fn malformed_then_repaired() {
        let script = MockScript::default().fallback(
            Stage::Titles,
            vec![json!("not json"), json!({"titles": ["a", "b", "c"]})],
        );
        let (gw, mock) = gateway(script);
        let t: Titles = gw.complete_structured(&request(&gw), three).unwrap();
        assert_eq!(t.titles, ["a", "b", "c"]);
        assert_eq!(mock.calls().len(), 2);
        assert!(mock.calls()[1].user.contains("previous reply was rejected"));
        assert_eq!(gw.records()[0].attempts, 2);
        assert_eq!(gw.records()[0].outcome, CallOutcome::Ok);
    }

    #[test]
    fn persistent_malformed_exhausts() {
        let script = MockScript::default().fallback(Stage::Titles, vec![json!({"titles": ["only one"]})]);
        let (gw, mock) = gateway(script);
        let err = gw.complete_structured::<Titles, _>(&request(&gw), three).unwrap_err();
        assert!(matches!(err, GatewayError::Schema { attempts: 2, .. }), "{err:?}");
        assert_eq!(mock.calls().len(), 2);
    }

    #[test]
    fn transport_errors_are_typed() {
        let script = MockScript::default()
            .fallback(Stage::Titles, vec![json!({"$error": "timeout"})])
            .fallback(Stage::Wrapup, vec![json!({"$error": "transport"})]);
        let (gw, mock) = gateway(script);
        let err = gw.complete_structured::<Titles, _>(&request(&gw), three).unwrap_err();
        assert_eq!(err, GatewayError::Timeout { stage: Stage::Titles });
        let req = gw.render_prompt(Stage::Wrapup, Default::default(), "x", &[]).unwrap();
        let err = gw.complete_structured::<Titles, _>(&req, three).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { stage: Stage::Wrapup, .. }));
        assert_eq!(mock.calls().len(), 2);
    }
}
