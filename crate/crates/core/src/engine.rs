//! The six-phase session state machine.
//!
//! [`Engine::handle_input`] loads a session, applies one input to a working
//! copy and saves the copy only when every stage call succeeded and the
//! result validates. A failed stage therefore leaves the stored session
//! untouched and surfaces as [`EngineError::Stage`], carrying the notice the
//! client should show. Inputs for one session are processed one at a time;
//! distinct sessions run concurrently.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::analytics::session_metrics;
use crate::clock::{Clock, IdSource};
use crate::gateway::Gateway;
use crate::model::validate;
use crate::model::{
    Button, Choice, Emotion, EventFragment, Focus, JournalEntry, JournalPanel, MissingTag, Modality, PanelSlot,
    Pending, Phase, PromptType, Question, QuestionKind, Role, Session, SystemAction, TtsRequest, Turn, UserInput,
};
use crate::phrases::Phrases;
use crate::pipeline::{self, PipelineContext, PipelineError, ReconstructInput};
use crate::scene::compose_strip;
use crate::store::{Store, StoreError};

/// Iteration limits that guarantee every session terminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    /// Adolescent turns per Articulation round before the engine moves on.
    pub articulation_turns: u32,
    /// Question and answer cycles in Elaboration.
    pub elaboration_cycles: u32,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            articulation_turns: 5,
            elaboration_cycles: 12,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub caps: Caps,
    pub phrases: Phrases,
    /// Attach a speech request to every peer line.
    pub tts: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("{0}")]
    NotFound(String),
    #[error("`{got}` is not accepted in {phase:?}; expected one of: {}", expected.join(", "))]
    Protocol {
        phase: Phase,
        got: String,
        expected: Vec<String>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("illegal state: {0}")]
    IllegalState(String),
    /// A provider-backed stage failed; the session was not changed.
    #[error("stage failed: {message}")]
    Stage { message: String, notice: SystemAction },
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for EngineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } => EngineError::NotFound(e.to_string()),
            other => EngineError::Store(other),
        }
    }
}

/// What one engine call produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub session: Session,
    /// Actions emitted by this call, in order; also appended to `session.actions`.
    pub actions: Vec<SystemAction>,
    /// Set when this call finalized the session.
    pub journal: Option<JournalEntry>,
}

pub struct Engine {
    gateway: Arc<Gateway>,
    store: Store,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
    config: EngineConfig,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("gateway", &self.gateway)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(
        gateway: Arc<Gateway>,
        store: Store,
        clock: Arc<dyn Clock>,
        ids: Arc<dyn IdSource>,
        config: EngineConfig,
    ) -> Self {
        Self {
            gateway,
            store,
            clock,
            ids,
            config,
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn session(&self, id: &str) -> Result<Session, EngineError> {
        Ok(self.store.load_session(id)?)
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table poisoned")
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn context(&self, s: &Session) -> Result<PipelineContext, EngineError> {
        Ok(PipelineContext {
            adolescent: self.store.profile(&s.profile_id)?,
            peer: self.store.peer(&s.peer_id)?,
            place: s.selected_place.clone(),
            people: s.selected_people.clone(),
            prompt_type: s.prompt_type,
        })
    }

    /// Starts a session: greets, then offers the prompt types and the
    /// profile's registered places and people.
    pub fn create_session(&self, profile_id: &str, peer_id: &str) -> Result<Outcome, EngineError> {
        let profile = self.store.profile(profile_id)?;
        let peer = self.store.peer(peer_id)?;
        let session = Session::new(
            self.ids.next_id("session"),
            profile.id.clone(),
            peer.id.clone(),
            self.clock.now(),
        );
        let ctx = PipelineContext {
            adolescent: profile,
            peer,
            place: None,
            people: Vec::new(),
            prompt_type: None,
        };
        let mut w = Work::new(self, session, ctx);
        let greeting = self.config.phrases.greeting_for(&w.ctx.peer.name);
        w.say(greeting);
        w.emit(SystemAction::ShowSelection {
            prompt_types: PromptType::ALL.to_vec(),
            places: self.store.places(Some(profile_id))?,
            people: self.store.people(Some(profile_id))?,
        });
        w.commit()
    }

    /// Applies one input to the session and persists the result.
    pub fn handle_input(&self, session_id: &str, input: UserInput) -> Result<Outcome, EngineError> {
        input.check().map_err(EngineError::InvalidInput)?;
        let lock = self.lock_for(session_id);
        let _guard = lock.lock().expect("session lock poisoned");
        let session = self.store.load_session(session_id)?;
        let ctx = self.context(&session)?;
        let mut w = Work::new(self, session, ctx);
        w.dispatch(input)?;
        w.commit()
    }

    /// Finalizes a session in Wrapup whose title has been chosen.
    pub fn finalize(&self, session_id: &str) -> Result<Outcome, EngineError> {
        let lock = self.lock_for(session_id);
        let _guard = lock.lock().expect("session lock poisoned");
        let session = self.store.load_session(session_id)?;
        let ctx = self.context(&session)?;
        let mut w = Work::new(self, session, ctx);
        w.finalize()?;
        w.commit()
    }
}

/// The inputs a session currently accepts, as `variant` or `button(name)`.
pub fn expected_inputs(s: &Session) -> Vec<String> {
    let v = |names: &[&str]| names.iter().map(|n| n.to_string()).collect();
    match (s.phase, &s.progress.pending) {
        (Phase::Preparation, _) => v(&["selection"]),
        (Phase::Articulation, _) => v(&["utterance"]),
        (Phase::Verification, _) => v(&["button(all_correct)", "button(something_to_fix)", "utterance"]),
        (Phase::Elaboration, Pending::Answer { question }) if question.kind == QuestionKind::Emotion => {
            v(&["emotion_choice", "utterance", "button(something_to_fix)"])
        }
        (Phase::Elaboration, Pending::FixRequest) => v(&["utterance"]),
        (Phase::Elaboration, _) => v(&["utterance", "button(something_to_fix)"]),
        (Phase::Revision, Pending::FixRequest) => v(&["utterance"]),
        (Phase::Revision, Pending::Answer { .. }) => v(&["emotion_choice", "button(something_to_fix)"]),
        (Phase::Revision, _) => v(&[
            "button(all_correct)",
            "button(yes)",
            "button(something_to_fix)",
            "button(no)",
        ]),
        (Phase::Wrapup, _) if s.progress.title_choice.is_some() => v(&["button(title_index)", "button(next)"]),
        (Phase::Wrapup, _) => v(&["button(title_index)"]),
        (Phase::Finalized, _) => Vec::new(),
    }
}

fn selection_text(prompt_type: PromptType, place: Option<&str>, people: &[String]) -> String {
    let mut text = prompt_type.as_str().to_string();
    if let Some(p) = place {
        text.push_str(": ");
        text.push_str(p);
    }
    if !people.is_empty() {
        text.push_str("; ");
        text.push_str(&people.join(", "));
    }
    text
}

fn emotion_labels(emotions: &[Emotion]) -> String {
    emotions.iter().map(|e| e.label()).collect::<Vec<_>>().join(", ")
}

/// Marks each panel complete when it has sentences and the current analysis
/// does not flag it.
fn refresh_complete(s: &mut Session) {
    for (slot, panel) in s.panels.iter_mut() {
        let flagged = s.progress.analysis.as_ref().is_some_and(|a| a.is_missing(*slot));
        panel.complete = !panel.is_empty() && !flagged;
    }
}

/// A session being changed by one engine call.
struct Work<'e> {
    engine: &'e Engine,
    s: Session,
    ctx: PipelineContext,
    out: Vec<SystemAction>,
    journal: Option<JournalEntry>,
}

impl<'e> Work<'e> {
    fn new(engine: &'e Engine, s: Session, ctx: PipelineContext) -> Self {
        Self {
            engine,
            s,
            ctx,
            out: Vec::new(),
            journal: None,
        }
    }

    fn gw(&self) -> &'e Gateway {
        &self.engine.gateway
    }

    fn phrases(&self) -> &'e Phrases {
        &self.engine.config.phrases
    }

    fn caps(&self) -> Caps {
        self.engine.config.caps
    }

    fn stage_error(&self, e: impl fmt::Display) -> EngineError {
        EngineError::Stage {
            message: e.to_string(),
            notice: SystemAction::ErrorNotice {
                text: self.phrases().stage_failure.clone(),
                retryable: true,
            },
        }
    }

    fn pipeline_error(&self, e: PipelineError) -> EngineError {
        match e {
            PipelineError::IllegalState(m) => EngineError::IllegalState(m),
            other => self.stage_error(other),
        }
    }

    fn emit(&mut self, action: SystemAction) {
        self.s.actions.push(action.clone());
        self.out.push(action);
    }

    fn say(&mut self, text: String) {
        let now = self.engine.clock.now();
        self.s.turns.push(Turn {
            role: Role::System,
            text: text.clone(),
            phase: self.s.phase,
            modality: Modality::Typed,
            timestamp: now,
            choice: None,
        });
        let tts_request = (self.engine.config.tts && !self.ctx.peer.voice_id.is_empty()).then(|| TtsRequest {
            voice_id: self.ctx.peer.voice_id.clone(),
            text: text.clone(),
        });
        self.emit(SystemAction::Say { text, tts_request });
    }

    fn record(&mut self, text: String, modality: Modality, choice: Option<Choice>) -> usize {
        let now = self.engine.clock.now();
        self.s.turns.push(Turn {
            role: Role::Adolescent,
            text,
            phase: self.s.phase,
            modality,
            timestamp: now,
            choice,
        });
        self.s.turns.len() - 1
    }

    fn record_button(&mut self, b: Button) -> usize {
        let text = match b {
            Button::TitleIndex(i) => self
                .s
                .title_candidates
                .get(i as usize)
                .cloned()
                .unwrap_or_else(|| format!("title {i}")),
            other => other.name().to_string(),
        };
        self.record(text, Modality::Button, Some(Choice::Button { choice: b }))
    }

    fn sync_context(&mut self) {
        self.ctx.place = self.s.selected_place.clone();
        self.ctx.people = self.s.selected_people.clone();
        self.ctx.prompt_type = self.s.prompt_type;
    }

    fn protocol(&self, input: &UserInput) -> EngineError {
        EngineError::Protocol {
            phase: self.s.phase,
            got: input.variant_name(),
            expected: expected_inputs(&self.s),
        }
    }

    fn commit(mut self) -> Result<Outcome, EngineError> {
        refresh_complete(&mut self.s);
        let problems = validate(&self.s);
        if !problems.is_empty() {
            return Err(EngineError::IllegalState(problems.join("; ")));
        }
        if let Some(j) = &self.journal {
            self.engine.store.save_journal(j)?;
        }
        self.engine.store.save_session(&self.s)?;
        Ok(Outcome {
            session: self.s,
            actions: self.out,
            journal: self.journal,
        })
    }

    fn dispatch(&mut self, input: UserInput) -> Result<(), EngineError> {
        let pending = self.s.progress.pending.clone();
        let emotion_pending = matches!(&pending, Pending::Answer { question } if question.kind == QuestionKind::Emotion);
        match (self.s.phase, input) {
            (
                Phase::Preparation,
                UserInput::Selection {
                    prompt_type,
                    place_id,
                    people_ids,
                },
            ) => self.on_selection(prompt_type, place_id, people_ids),
            (Phase::Articulation, UserInput::Utterance { text, modality }) => self.on_articulation(text, modality),

            (Phase::Verification, UserInput::Button { choice: Button::AllCorrect }) => {
                self.record_button(Button::AllCorrect);
                self.start_elaboration()
            }
            (Phase::Verification, UserInput::Button { choice: Button::SomethingToFix }) => {
                self.record_button(Button::SomethingToFix);
                self.s.progress.pending = Pending::FixRequest;
                self.say(self.phrases().outline_fix_ask.clone());
                Ok(())
            }
            (Phase::Verification, UserInput::Utterance { text, modality }) => self.on_outline_fix(text, modality),

            (Phase::Elaboration, UserInput::Button { choice: Button::SomethingToFix })
                if pending != Pending::FixRequest =>
            {
                self.record_button(Button::SomethingToFix);
                self.s.progress.pending = Pending::FixRequest;
                self.say(self.phrases().fix_ask.clone());
                Ok(())
            }
            (Phase::Elaboration, UserInput::Utterance { text, modality }) => match pending {
                Pending::Answer { question } => self.on_answer(question, text, modality),
                Pending::FixRequest => self.on_late_fix(text, modality),
                Pending::Nothing => Err(EngineError::IllegalState("elaboration without a pending question".into())),
            },
            (Phase::Elaboration, UserInput::EmotionChoice { emotions }) if emotion_pending => {
                self.on_emotions(&emotions);
                self.recompose_and_show();
                self.elaborate()
            }

            (Phase::Revision, UserInput::Button { choice: b @ (Button::AllCorrect | Button::Yes) })
                if pending == Pending::Nothing =>
            {
                self.record_button(b);
                if self.s.panels[&PanelSlot::E].is_empty() {
                    self.ask_emotion();
                    Ok(())
                } else {
                    self.start_wrapup()
                }
            }
            (Phase::Revision, UserInput::Button { choice: b @ (Button::SomethingToFix | Button::No) })
                if pending != Pending::FixRequest =>
            {
                self.record_button(b);
                self.s.progress.pending = Pending::FixRequest;
                self.say(self.phrases().fix_ask.clone());
                Ok(())
            }
            (Phase::Revision, UserInput::Utterance { text, modality }) if pending == Pending::FixRequest => {
                self.on_revision_fix(text, modality)
            }
            (Phase::Revision, UserInput::EmotionChoice { emotions }) if emotion_pending => {
                self.on_emotions(&emotions);
                self.s.progress.pending = Pending::Nothing;
                self.recompose();
                self.say(self.phrases().fixed_recheck.clone());
                self.show_strip();
                Ok(())
            }

            (Phase::Wrapup, UserInput::Button { choice: Button::TitleIndex(i) }) => {
                if i as usize >= self.s.title_candidates.len() {
                    return Err(EngineError::InvalidInput(format!("no title candidate {i}")));
                }
                self.record_button(Button::TitleIndex(i));
                self.s.progress.title_choice = Some(i);
                Ok(())
            }
            (Phase::Wrapup, UserInput::Button { choice: Button::Next }) if self.s.progress.title_choice.is_some() => {
                self.record_button(Button::Next);
                self.finalize()
            }

            (_, other) => Err(self.protocol(&other)),
        }
    }

    fn on_selection(
        &mut self,
        prompt_type: PromptType,
        place_id: Option<String>,
        people_ids: Vec<String>,
    ) -> Result<(), EngineError> {
        let store = &self.engine.store;
        let owner = self.s.profile_id.clone();
        let place = match &place_id {
            Some(id) => {
                let p = store
                    .place(id)
                    .map_err(|_| EngineError::InvalidInput(format!("unknown place `{id}`")))?;
                if p.profile_id != owner {
                    return Err(EngineError::InvalidInput(format!("place `{id}` belongs to another profile")));
                }
                Some(p)
            }
            None if prompt_type == PromptType::PlacePeopleSelection => {
                return Err(EngineError::InvalidInput("place_people_selection needs a place".into()));
            }
            None => None,
        };
        let mut people = Vec::new();
        for id in &people_ids {
            let p = store
                .person(id)
                .map_err(|_| EngineError::InvalidInput(format!("unknown person `{id}`")))?;
            if p.profile_id != owner {
                return Err(EngineError::InvalidInput(format!("person `{id}` belongs to another profile")));
            }
            if !people.contains(&p) {
                people.push(p);
            }
        }
        let labels: Vec<String> = people.iter().map(|p| p.label.clone()).collect();
        let text = selection_text(prompt_type, place.as_ref().map(|p| p.label.as_str()), &labels);
        self.record(
            text,
            Modality::Button,
            Some(Choice::Selection {
                prompt_type,
                place_id,
                people_ids: people.iter().map(|p| p.id.clone()).collect(),
            }),
        );
        self.s.prompt_type = Some(prompt_type);
        self.s.selected_place = place;
        self.s.selected_people = people;
        self.sync_context();
        self.s.phase = Phase::Articulation;
        self.ask_articulation()
    }

    fn ask_articulation(&mut self) -> Result<(), EngineError> {
        let q = pipeline::generate_question_articulation(self.gw(), &self.s.turns, &self.ctx, &self.s.events)
            .map_err(|e| self.pipeline_error(e))?;
        self.say(q.text);
        Ok(())
    }

    fn on_articulation(&mut self, text: String, modality: Modality) -> Result<(), EngineError> {
        self.record(text, modality, None);
        self.s.progress.articulation_turns += 1;
        let events = pipeline::extract_events(self.gw(), &self.s.turns, &self.ctx).map_err(|e| self.pipeline_error(e))?;
        self.s.events = events;
        let turns = self.s.progress.articulation_turns;
        let cap = self.caps().articulation_turns;
        let has_events = !self.s.events.is_empty();
        if pipeline::articulation_gate(&self.s.events) || (turns >= cap && has_events) {
            self.start_verification();
            Ok(())
        } else if !has_events && turns > cap {
            if self.s.progress.restarted {
                self.start_verification();
            } else {
                self.s.progress.restarted = true;
                self.s.progress.articulation_turns = 0;
                self.s.prompt_type = Some(PromptType::OpenEnded);
                self.s.selected_place = None;
                self.s.selected_people.clear();
                self.sync_context();
                self.say(self.phrases().restart.clone());
            }
            Ok(())
        } else {
            self.ask_articulation()
        }
    }

    fn start_verification(&mut self) {
        self.s.phase = Phase::Verification;
        self.s.progress.pending = Pending::Nothing;
        self.say(self.phrases().outline_intro.clone());
        self.emit(SystemAction::ShowOutline {
            lines: pipeline::compose_preliminary_outline(&self.s.events),
        });
    }

    fn on_outline_fix(&mut self, text: String, modality: Modality) -> Result<(), EngineError> {
        let idx = self.record(text.clone(), modality, None);
        let lines = pipeline::apply_outline_modification(self.gw(), &self.s.turns, &self.ctx, &self.s.events, &text)
            .map_err(|e| self.pipeline_error(e))?;
        let old = std::mem::take(&mut self.s.events);
        self.s.events = lines
            .into_iter()
            .enumerate()
            .map(|(i, text)| EventFragment {
                text,
                source_turn: old.get(i).map_or(idx, |e| e.source_turn),
            })
            .collect();
        self.s.progress.pending = Pending::Nothing;
        self.say(self.phrases().outline_updated.clone());
        self.emit(SystemAction::ShowOutline {
            lines: pipeline::compose_preliminary_outline(&self.s.events),
        });
        Ok(())
    }

    fn start_elaboration(&mut self) -> Result<(), EngineError> {
        self.s.phase = Phase::Elaboration;
        self.s.progress.pending = Pending::Nothing;
        if !self.s.events.is_empty() {
            let lines: Vec<String> = self.s.events.iter().map(|e| e.text.clone()).collect();
            self.s.panels = pipeline::reconstruct_descriptions(
                self.gw(),
                &self.s.turns,
                &self.ctx,
                &self.s.panels,
                ReconstructInput::Outline(&lines),
                None,
                &[],
            )
            .map_err(|e| self.pipeline_error(e))?;
        }
        self.recompose();
        self.say(self.phrases().strip_intro.clone());
        self.show_strip();
        self.elaborate()
    }

    /// Recomposes changed scenes; a slot that fails keeps its old scene and
    /// gets a notice.
    fn recompose(&mut self) -> bool {
        let up = compose_strip(
            self.gw(),
            &self.s.panels,
            &self.s.scenes,
            &self.s.progress.scene_sources,
            &self.ctx,
            &self.s.turns,
        );
        self.s.scenes = up.scenes;
        self.s.progress.scene_sources = up.sources;
        for (slot, _) in &up.failures {
            self.emit(SystemAction::ErrorNotice {
                text: format!("{} ({slot})", self.phrases().stage_failure),
                retryable: true,
            });
        }
        !up.recomposed.is_empty()
    }

    fn show_strip(&mut self) {
        self.emit(SystemAction::ShowStrip {
            scenes: self.s.scenes.clone(),
        });
    }

    fn recompose_and_show(&mut self) {
        if self.recompose() {
            self.show_strip();
        }
    }

    /// Runs the analyzer and folds in the settled slots.
    fn analyze(&mut self) -> Result<crate::model::AnalysisResult, EngineError> {
        let mut a = pipeline::analyze_story(self.gw(), &self.s.turns, &self.ctx, &self.s.panels)
            .map_err(|e| self.pipeline_error(e))?;
        for slot in &self.s.progress.settled {
            if !self.s.panels[slot].is_empty() {
                a.missing.insert(*slot, Vec::new());
            }
        }
        for slot in PanelSlot::ALL {
            if !self.s.panels[&slot].is_empty() && !a.is_missing(slot) && !self.s.progress.settled.contains(&slot) {
                self.s.progress.settled.push(slot);
            }
        }
        self.s.progress.settled.sort();
        self.s.progress.analysis = Some(a.clone());
        Ok(a)
    }

    /// Analyze, then either ask the next question or move to Revision.
    fn elaborate(&mut self) -> Result<(), EngineError> {
        loop {
            let a = self.analyze()?;
            if a.is_clean() {
                return self.start_revision();
            }
            if self.s.progress.elaboration_cycles >= self.caps().elaboration_cycles {
                self.fill_after_cap();
                return self.start_revision();
            }
            self.s.progress.elaboration_cycles += 1;
            if !a.has_missing() {
                self.s.panels = pipeline::reconstruct_descriptions(
                    self.gw(),
                    &self.s.turns,
                    &self.ctx,
                    &self.s.panels,
                    ReconstructInput::Reorder,
                    Some(&a),
                    &self.s.progress.settled,
                )
                .map_err(|e| self.pipeline_error(e))?;
                self.recompose_and_show();
                continue;
            }
            let q = pipeline::generate_question_elaboration(self.gw(), &self.s.turns, &self.ctx, &self.s.panels, &a)
                .map_err(|e| self.pipeline_error(e))?;
            self.say(q.text.clone());
            if q.kind == QuestionKind::Emotion {
                self.emit(SystemAction::ShowEmotionButtons {
                    emotions: Emotion::ALL.to_vec(),
                });
            }
            self.s.progress.pending = Pending::Answer { question: q };
            return Ok(());
        }
    }

    fn fill_after_cap(&mut self) {
        let placeholder = self.phrases().placeholder_sentence.clone();
        for slot in [PanelSlot::A, PanelSlot::B, PanelSlot::C] {
            let panel = self.s.panels.get_mut(&slot).expect("panels cover every slot");
            if panel.is_empty() {
                panel.sentences = vec![placeholder.clone()];
            }
        }
        if self.s.panels[&PanelSlot::E].is_empty() {
            self.say(self.phrases().emotion_unknown.clone());
        }
        self.recompose();
    }

    fn on_answer(&mut self, question: Question, text: String, modality: Modality) -> Result<(), EngineError> {
        self.record(text.clone(), modality, None);
        let analysis = self.s.progress.analysis.clone();
        self.s.panels = pipeline::reconstruct_descriptions(
            self.gw(),
            &self.s.turns,
            &self.ctx,
            &self.s.panels,
            ReconstructInput::Answer {
                question: &question,
                answer: &text,
            },
            analysis.as_ref(),
            &self.s.progress.settled,
        )
        .map_err(|e| self.pipeline_error(e))?;
        self.s.progress.pending = Pending::Nothing;
        self.recompose_and_show();
        self.elaborate()
    }

    fn on_emotions(&mut self, emotions: &[Emotion]) {
        self.record(
            emotion_labels(emotions),
            Modality::Button,
            Some(Choice::Emotions {
                emotions: emotions.to_vec(),
            }),
        );
        self.s.panels = pipeline::apply_emotion_answer(&self.s.panels, emotions);
        self.s.progress.pending = Pending::Nothing;
    }

    fn on_late_fix(&mut self, text: String, modality: Modality) -> Result<(), EngineError> {
        self.record(text.clone(), modality, None);
        let (panels, changed) =
            pipeline::apply_panel_modification(self.gw(), &self.s.turns, &self.ctx, &self.s.panels, &text)
                .map_err(|e| self.pipeline_error(e))?;
        self.s.panels = panels;
        self.s.progress.settled.retain(|s| !changed.contains(s));
        self.s.progress.review_flags.push(format!(
            "correction during elaboration (turn {}): {text}",
            self.s.turns.len() - 1
        ));
        self.s.progress.pending = Pending::Nothing;
        self.recompose_and_show();
        self.elaborate()
    }

    fn start_revision(&mut self) -> Result<(), EngineError> {
        self.s.phase = Phase::Revision;
        self.s.progress.pending = Pending::Nothing;
        if let Some(a) = self.s.progress.analysis.as_mut() {
            for tags in a.missing.values_mut() {
                tags.clear();
            }
            a.order_defects.clear();
        }
        self.say(self.phrases().revision_intro.clone());
        // The loop may have just shown this exact strip.
        let shown = self.out.iter().rev().find_map(|a| match a {
            SystemAction::ShowStrip { scenes } => Some(scenes == &self.s.scenes),
            _ => None,
        });
        if shown != Some(true) {
            self.show_strip();
        }
        Ok(())
    }

    fn ask_emotion(&mut self) {
        let question = Question {
            text: self.phrases().emotion_question.clone(),
            kind: QuestionKind::Emotion,
            target_slot: Some(PanelSlot::E),
            target_tag: Some(MissingTag::Emotion),
            focus: Focus::None,
        };
        self.say(question.text.clone());
        self.emit(SystemAction::ShowEmotionButtons {
            emotions: Emotion::ALL.to_vec(),
        });
        self.s.progress.pending = Pending::Answer { question };
    }

    fn on_revision_fix(&mut self, text: String, modality: Modality) -> Result<(), EngineError> {
        self.record(text.clone(), modality, None);
        let (panels, _) = pipeline::apply_panel_modification(self.gw(), &self.s.turns, &self.ctx, &self.s.panels, &text)
            .map_err(|e| self.pipeline_error(e))?;
        self.s.panels = panels;
        self.s.progress.pending = Pending::Nothing;
        self.recompose();
        self.say(self.phrases().fixed_recheck.clone());
        self.show_strip();
        Ok(())
    }

    fn start_wrapup(&mut self) -> Result<(), EngineError> {
        self.s.phase = Phase::Wrapup;
        self.s.progress.pending = Pending::Nothing;
        let trouble = self.s.progress.analysis.as_ref().is_some_and(|a| a.trouble);
        let closing = pipeline::wrapup_response(
            self.gw(),
            &self.s.turns,
            &self.ctx,
            &self.s.panels,
            trouble,
            &self.phrases().wrapup_fallback,
        );
        self.say(closing);
        let titles = pipeline::suggest_titles(self.gw(), &self.s.turns, &self.ctx, &self.s.panels)
            .map_err(|e| self.pipeline_error(e))?;
        self.s.title_candidates = titles.clone();
        self.say(self.phrases().titles_prompt.clone());
        self.emit(SystemAction::ShowTitles { titles });
        Ok(())
    }

    fn finalize(&mut self) -> Result<(), EngineError> {
        if self.s.phase != Phase::Wrapup {
            return Err(EngineError::IllegalState(format!("cannot finalize in {:?}", self.s.phase)));
        }
        let Some(title) = self.s.chosen_title().map(str::to_string) else {
            return Err(EngineError::IllegalState("no title chosen".into()));
        };
        if let Some(slot) = PanelSlot::ALL.into_iter().find(|s| self.s.panels[s].is_empty()) {
            return Err(EngineError::IllegalState(format!("panel {slot} is empty")));
        }
        let Some(prompt_type) = self.s.prompt_type else {
            return Err(EngineError::IllegalState("prompt type unset".into()));
        };
        self.s.phase = Phase::Finalized;
        self.s.title = Some(title.clone());
        self.s.stamps_awarded = 3;
        self.say(self.phrases().closing.clone());
        self.emit(SystemAction::AwardStamps { count: 3 });
        refresh_complete(&mut self.s);
        let finalized_at = self.s.turns.last().map_or_else(|| self.engine.clock.now(), |t| t.timestamp);
        self.journal = Some(JournalEntry {
            id: self.engine.ids.next_id("journal"),
            session_id: self.s.id.clone(),
            profile_id: self.s.profile_id.clone(),
            title,
            date: finalized_at.date_naive(),
            finalized_at,
            prompt_type,
            panels: PanelSlot::ALL
                .into_iter()
                .map(|slot| JournalPanel {
                    description: self.s.panels[&slot].clone(),
                    scene: self.s.scenes[&slot].clone(),
                })
                .collect(),
            metrics: session_metrics(&self.s.turns),
        });
        Ok(())
    }
}
