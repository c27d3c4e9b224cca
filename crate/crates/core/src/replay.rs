//! Scripted end-to-end sessions against the mock provider.
//!
//! A replay script fixes everything a session depends on: registries, the
//! clock, the provider script and the adolescent's inputs. Running it twice
//! gives byte-identical transcripts, which is what the checked-in goldens
//! compare against.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::{SequentialIds, SteppingClock};
use crate::engine::{Engine, EngineConfig, EngineError};
use crate::gateway::{Gateway, GatewayConfig, MockProvider, MockScript, Stage, Templates, BUILTIN_LOCALE};
use crate::model::{
    AdolescentProfile, JournalEntry, PeerProfile, PersonEntry, Phase, PlaceEntry, Session, SystemAction, UserInput,
};
use crate::store::{Store, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockSpec {
    pub start: DateTime<Utc>,
    /// Seconds between consecutive clock readings.
    pub step_secs: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub clock: ClockSpec,
    pub profile: AdolescentProfile,
    pub peer: PeerProfile,
    #[serde(default)]
    pub places: Vec<PlaceEntry>,
    #[serde(default)]
    pub people: Vec<PersonEntry>,
    #[serde(default)]
    pub config: EngineConfig,
    #[serde(default = "default_retries")]
    pub max_repair_retries: u32,
    pub mock: MockScript,
    pub inputs: Vec<UserInput>,
}

fn default_retries() -> u32 {
    1
}

impl ReplayScript {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// One engine call and what came of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    /// `None` for session creation.
    pub input: Option<UserInput>,
    pub phase: Phase,
    pub actions: Vec<SystemAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A provider round trip, without timing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayCall {
    pub stage: Stage,
    pub match_key: String,
    pub attempt: u32,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps: Vec<ReplayStep>,
    pub calls: Vec<ReplayCall>,
    pub call_counts: BTreeMap<Stage, usize>,
    /// Gateway-level calls, each counting its repair attempts.
    pub gateway_attempts: u32,
    pub session: Session,
    pub journal: Option<JournalEntry>,
}

impl ReplayReport {
    /// Pretty JSON with a trailing newline; the golden file format.
    pub fn to_golden(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("registering fixtures: {0}")]
    Setup(#[from] StoreError),
    #[error("creating session: {0}")]
    Create(EngineError),
}

/// Everything a replay runs on; exposed so tests can drive sessions by hand.
pub struct Harness {
    pub engine: Engine,
    pub mock: Arc<MockProvider>,
}

impl Harness {
    pub fn new(script: &ReplayScript, store: Store) -> Result<Self, ReplayError> {
        store.put_profile(&script.profile)?;
        store.put_peer(&script.peer)?;
        for p in &script.places {
            store.put_place(p)?;
        }
        for p in &script.people {
            store.put_person(p)?;
        }
        let mock = Arc::new(MockProvider::new(script.mock.clone()));
        let gateway = Gateway::new(
            mock.clone(),
            Arc::new(Templates::builtin()),
            BUILTIN_LOCALE,
            GatewayConfig {
                max_repair_retries: script.max_repair_retries,
                ..GatewayConfig::default()
            },
        )
        .expect("built-in locale");
        let engine = Engine::new(
            Arc::new(gateway),
            store,
            Arc::new(SteppingClock::new(script.clock.start, Duration::seconds(script.clock.step_secs))),
            Arc::new(SequentialIds::default()),
            script.config.clone(),
        );
        Ok(Self { engine, mock })
    }
}

/// Runs `script` on a fresh in-memory store. Engine errors on individual
/// inputs are recorded in the step and the replay continues.
pub fn run(script: &ReplayScript) -> Result<ReplayReport, ReplayError> {
    run_with_store(script, Store::in_memory())
}

pub fn run_with_store(script: &ReplayScript, store: Store) -> Result<ReplayReport, ReplayError> {
    let h = Harness::new(script, store)?;
    let created = h
        .engine
        .create_session(&script.profile.id, &script.peer.id)
        .map_err(ReplayError::Create)?;
    let id = created.session.id.clone();
    let mut steps = vec![ReplayStep {
        input: None,
        phase: created.session.phase,
        actions: created.actions,
        error: None,
    }];
    let mut journal = None;
    for input in &script.inputs {
        match h.engine.handle_input(&id, input.clone()) {
            Ok(out) => {
                journal = journal.or(out.journal);
                steps.push(ReplayStep {
                    input: Some(input.clone()),
                    phase: out.session.phase,
                    actions: out.actions,
                    error: None,
                });
            }
            Err(e) => {
                let phase = h.engine.session(&id).map(|s| s.phase).unwrap_or(Phase::Preparation);
                let actions = match &e {
                    EngineError::Stage { notice, .. } => vec![notice.clone()],
                    _ => Vec::new(),
                };
                steps.push(ReplayStep {
                    input: Some(input.clone()),
                    phase,
                    actions,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let session = h.engine.session(&id).map_err(ReplayError::Create)?;
    Ok(ReplayReport {
        steps,
        calls: h
            .mock
            .calls()
            .into_iter()
            .map(|c| ReplayCall {
                stage: c.stage,
                match_key: c.match_key,
                attempt: c.attempt,
                matched: c.matched,
            })
            .collect(),
        call_counts: h.mock.call_counts(),
        gateway_attempts: h.engine.gateway().attempts_total(),
        session,
        journal,
    })
}
