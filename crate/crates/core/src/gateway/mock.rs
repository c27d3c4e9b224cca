//! Scripted provider for tests and replays.
//!
//! A script is a JSON document:
//!
//! ```json
//! {
//!   "entries": [
//!     { "stage": "event_extract",
//!       "when": { "subject": "We went to the pool. It was cold.", "missing": [] },
//!       "responses": [ { "events": [ { "text": "We went to the pool." } ] } ] },
//!     { "stage": "titles", "key": "3f1c0a9be2d4c771", "responses": [ "not json", { "titles": ["a", "b", "c"] } ] },
//!     { "stage": "wrapup", "responses": [ { "$error": "timeout" } ] }
//!   ]
//! }
//! ```
//!
//! An entry matches a call when its stage matches and either its `key` equals
//! the call's match key, or the key computed from `when` does (see
//! [`match_key`](super::match_key)). An entry with neither is the stage's
//! fallback, used when nothing more specific matches.
//!
//! Responses are served in order and the last one repeats. A JSON string is
//! sent as raw text, which is how malformed replies are scripted; an object
//! `{"$error": "timeout"}` or `{"$error": "transport"}` simulates a failure;
//! anything else is serialized and sent.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{match_key, Provider, ProviderCall, ProviderError, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct When {
    pub subject: String,
    #[serde(default)]
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<When>,
    pub responses: Vec<Value>,
}

impl ScriptEntry {
    fn resolved_key(&self) -> Option<String> {
        self.key
            .clone()
            .or_else(|| self.when.as_ref().map(|w| match_key(&w.subject, &w.missing)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    pub entries: Vec<ScriptEntry>,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Adds an entry keyed on subject and missing tags.
    pub fn on(mut self, stage: Stage, subject: &str, missing: &[&str], responses: Vec<Value>) -> Self {
        self.entries.push(ScriptEntry {
            stage,
            key: None,
            when: Some(When {
                subject: subject.to_string(),
                missing: missing.iter().map(|s| s.to_string()).collect(),
            }),
            responses,
        });
        self
    }

    /// Adds a fallback entry for `stage`.
    pub fn fallback(mut self, stage: Stage, responses: Vec<Value>) -> Self {
        self.entries.push(ScriptEntry {
            stage,
            key: None,
            when: None,
            responses,
        });
        self
    }
}

/// A call the mock received.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockCall {
    pub stage: Stage,
    pub match_key: String,
    pub attempt: u32,
    pub user: String,
    pub matched: bool,
}

#[derive(Debug)]
struct Cursor {
    responses: Vec<Value>,
    next: usize,
}

impl Cursor {
    fn take(&mut self) -> Option<Value> {
        let last = self.responses.len().checked_sub(1)?;
        let v = self.responses[self.next.min(last)].clone();
        self.next += 1;
        Some(v)
    }
}

#[derive(Debug, Default)]
struct State {
    keyed: BTreeMap<(Stage, String), Cursor>,
    fallback: BTreeMap<Stage, Cursor>,
    calls: Vec<MockCall>,
}

#[derive(Debug)]
pub struct MockProvider {
    state: Mutex<State>,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        let mut state = State::default();
        for entry in script.entries {
            let key = entry.resolved_key();
            let cursor = Cursor {
                responses: entry.responses,
                next: 0,
            };
            match key {
                Some(key) => {
                    state.keyed.insert((entry.stage, key), cursor);
                }
                None => {
                    state.fallback.insert(entry.stage, cursor);
                }
            }
        }
        Self {
            state: Mutex::new(state),
        }
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.state.lock().expect("mock poisoned").calls.clone()
    }

    /// Per-stage call counts, repairs included.
    pub fn call_counts(&self) -> BTreeMap<Stage, usize> {
        let mut out = BTreeMap::new();
        for c in self.calls() {
            *out.entry(c.stage).or_insert(0) += 1;
        }
        out
    }
}

impl Provider for MockProvider {
    fn complete(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError> {
        let mut state = self.state.lock().expect("mock poisoned");
        let keyed = state
            .keyed
            .get_mut(&(call.stage, call.match_key.to_string()))
            .and_then(Cursor::take);
        let response = match keyed {
            Some(v) => Some(v),
            None => state.fallback.get_mut(&call.stage).and_then(Cursor::take),
        };
        state.calls.push(MockCall {
            stage: call.stage,
            match_key: call.match_key.to_string(),
            attempt: call.attempt,
            user: call.user.to_string(),
            matched: response.is_some(),
        });
        let Some(response) = response else {
            return Err(ProviderError::Transport(format!(
                "mock has no response for {} key {}",
                call.stage, call.match_key
            )));
        };
        match response {
            Value::String(raw) => Ok(raw),
            Value::Object(ref map) if map.len() == 1 && map.contains_key("$error") => {
                match map["$error"].as_str() {
                    Some("timeout") => Err(ProviderError::Timeout),
                    other => Err(ProviderError::Transport(format!(
                        "scripted failure {}",
                        other.unwrap_or("transport")
                    ))),
                }
            }
            other => Ok(other.to_string()),
        }
    }
}
