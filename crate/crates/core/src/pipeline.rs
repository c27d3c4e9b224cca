//! Provider-backed narrative stages: event extraction, questions, story
//! analysis, description reconstruction, modifications and wrap-up.
//!
//! Every stage here is a function of its inputs plus the gateway. Each one
//! renders the stage template with the full transcript and context, checks
//! the structured reply, and maps it onto domain types. Semantic checks that
//! fail go back to the model as repair requests.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};

use crate::gateway::schema::{
    AnalysisReply, EventsReply, ModifyReply, PanelUpdatesReply, QuestionReply, TextReply, TitlesReply,
};
use crate::gateway::{Gateway, GatewayError, Stage};
use crate::model::{
    AdolescentProfile, AnalysisResult, Emotion, EventFragment, Focus, MissingTag, PanelSlot, Panels,
    PeerProfile, PersonEntry, PlaceEntry, PromptType, Question, QuestionKind, Role, Turn,
};

/// Who is writing, with whom, and about what; sent with every stage call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineContext {
    pub adolescent: AdolescentProfile,
    pub peer: PeerProfile,
    pub place: Option<PlaceEntry>,
    pub people: Vec<PersonEntry>,
    pub prompt_type: Option<PromptType>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Stage(#[from] GatewayError),
    #[error("illegal state: {0}")]
    IllegalState(String),
}

/// A dialogue as the stages see it.
pub type Dialogue<'a> = &'a [Turn];

pub(crate) fn stage_vars(ctx: &PipelineContext, dialogue: Dialogue<'_>) -> Map<String, Value> {
    let mut vars = Map::new();
    vars.insert(
        "adolescent".into(),
        json!({
            "age": ctx.adolescent.age,
            "gender": ctx.adolescent.gender,
            "interests": ctx.adolescent.interests,
        }),
    );
    vars.insert("peer".into(), json!({ "name": ctx.peer.name }));
    if let Some(place) = &ctx.place {
        vars.insert("place".into(), json!(place.label));
    }
    vars.insert(
        "people".into(),
        json!(ctx.people.iter().map(|p| p.label.as_str()).collect::<Vec<_>>()),
    );
    if let Some(pt) = ctx.prompt_type {
        vars.insert("prompt_type".into(), json!(pt.as_str()));
    }
    vars.insert(
        "dialogue".into(),
        Value::Array(
            dialogue
                .iter()
                .map(|t| {
                    let role = match t.role {
                        Role::Adolescent => "writer",
                        Role::System => "peer",
                    };
                    json!({ "role": role, "text": t.text })
                })
                .collect(),
        ),
    );
    vars
}

fn panels_var(panels: &Panels) -> Value {
    Value::Array(
        panels
            .values()
            .map(|p| json!({ "slot": p.slot.as_str(), "sentences": p.sentences }))
            .collect(),
    )
}

fn analysis_var(a: &AnalysisResult) -> Value {
    json!({
        "trouble": a.trouble,
        "missing": a.missing.iter().map(|(s, t)| json!({"slot": s.as_str(), "tags": t})).collect::<Vec<_>>(),
        "order_defects": a.order_defects.iter().map(|d| json!({"slot": d.slot.as_str(), "description": d.description})).collect::<Vec<_>>(),
    })
}

fn latest_utterance(dialogue: Dialogue<'_>) -> &str {
    dialogue
        .iter()
        .rev()
        .find(|t| t.role == Role::Adolescent)
        .map(|t| t.text.as_str())
        .unwrap_or("")
}

/// Trims and collapses internal whitespace.
pub fn clean_sentence(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True when the sentence ends with `.`, `!`, `?` or `…`, optionally followed
/// by a closing quote or bracket.
pub fn has_terminal_punctuation(s: &str) -> bool {
    let trimmed = s.trim_end_matches(['"', '\'', ')', '”', '’']);
    trimmed.ends_with(['.', '!', '?', '…'])
}

fn check_sentences<'a>(slot: &str, sentences: impl IntoIterator<Item = &'a String>) -> Result<(), String> {
    for s in sentences {
        if s.trim().is_empty() {
            return Err(format!("{slot}: empty sentence"));
        }
        if !has_terminal_punctuation(s.trim()) {
            return Err(format!("{slot}: sentence `{}` lacks terminal punctuation", s.trim()));
        }
    }
    Ok(())
}

/// Pulls the narrated events out of the dialogue.
///
/// Returns the complete event list for the dialogue so far, in narration
/// order. Fragments without a source turn are attributed to the latest
/// adolescent turn.
pub fn extract_events(
    gw: &Gateway,
    dialogue: Dialogue<'_>,
    ctx: &PipelineContext,
) -> Result<Vec<EventFragment>, PipelineError> {
    let Some(latest) = dialogue.iter().rposition(|t| t.role == Role::Adolescent) else {
        return Err(PipelineError::IllegalState("no adolescent turn to extract from".into()));
    };
    let req = gw.render_prompt(
        Stage::EventExtract,
        stage_vars(ctx, dialogue),
        latest_utterance(dialogue),
        &[],
    )?;
    let reply: EventsReply = gw.complete_structured(&req, |r: &EventsReply| {
        for e in &r.events {
            if e.text.trim().is_empty() {
                return Err("event text is empty".into());
            }
            if let Some(i) = e.source_turn {
                if dialogue.get(i).map(|t| t.role) != Some(Role::Adolescent) {
                    return Err(format!("source_turn {i} is not a writer message"));
                }
            }
        }
        Ok(())
    })?;
    Ok(reply
        .events
        .into_iter()
        .map(|e| EventFragment {
            text: ensure_period(&clean_sentence(&e.text)),
            source_turn: e.source_turn.unwrap_or(latest),
        })
        .collect())
}

fn ensure_period(s: &str) -> String {
    if has_terminal_punctuation(s) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

/// True once at least two events have been collected.
pub fn articulation_gate(events: &[EventFragment]) -> bool {
    events.len() >= 2
}

pub fn generate_question_articulation(
    gw: &Gateway,
    dialogue: Dialogue<'_>,
    ctx: &PipelineContext,
    events: &[EventFragment],
) -> Result<Question, PipelineError> {
    let mut vars = stage_vars(ctx, dialogue);
    vars.insert(
        "events".into(),
        json!(events.iter().map(|e| e.text.as_str()).collect::<Vec<_>>()),
    );
    let req = gw.render_prompt(Stage::QuestionArticulation, vars, latest_utterance(dialogue), &[])?;
    let reply: QuestionReply = gw.complete_structured(&req, check_question)?;
    Ok(Question {
        text: clean_sentence(&reply.text),
        kind: match reply.kind {
            Some(QuestionKind::OptionsInText) => QuestionKind::OptionsInText,
            _ => QuestionKind::Open,
        },
        target_slot: None,
        target_tag: None,
        focus: Focus::None,
    })
}

fn check_question(q: &QuestionReply) -> Result<(), String> {
    if q.text.trim().is_empty() {
        return Err("question text is empty".into());
    }
    if q.kind == Some(QuestionKind::Emotion) {
        return Err("kind must be open or options_in_text".into());
    }
    Ok(())
}

/// Runs the story analyzer over the current panels.
///
/// The result always covers all four slots with sorted, de-duplicated tags.
/// A slot with no sentences is missing by definition and gets its default
/// tag when the analyzer reported nothing for it.
pub fn analyze_story(
    gw: &Gateway,
    dialogue: Dialogue<'_>,
    ctx: &PipelineContext,
    panels: &Panels,
) -> Result<AnalysisResult, PipelineError> {
    let mut vars = stage_vars(ctx, dialogue);
    vars.insert("panels".into(), panels_var(panels));
    let req = gw.render_prompt(Stage::StoryAnalyze, vars, latest_utterance(dialogue), &[])?;
    let reply: AnalysisReply = gw.complete_structured(&req, |_: &AnalysisReply| Ok(()))?;
    Ok(normalize_analysis(reply, panels))
}

fn normalize_analysis(reply: AnalysisReply, panels: &Panels) -> AnalysisResult {
    let mut missing = BTreeMap::new();
    for slot in PanelSlot::ALL {
        let mut tags: Vec<MissingTag> = reply.missing.get(&slot).cloned().unwrap_or_default();
        tags.sort();
        tags.dedup();
        if tags.is_empty() && panels.get(&slot).is_none_or(|p| p.is_empty()) {
            tags.push(MissingTag::default_for(slot));
        }
        missing.insert(slot, tags);
    }
    AnalysisResult {
        trouble: reply.trouble,
        missing,
        order_defects: reply.order_defects,
    }
}

/// The (slot, tag) the next elaboration question should target: the lowest
/// slot with anything missing, and its first tag in canonical order.
pub fn elaboration_target(analysis: &AnalysisResult) -> Option<(PanelSlot, MissingTag)> {
    analysis
        .missing
        .iter()
        .find_map(|(slot, tags)| tags.iter().min().map(|t| (*slot, *t)))
}

pub fn generate_question_elaboration(
    gw: &Gateway,
    dialogue: Dialogue<'_>,
    ctx: &PipelineContext,
    panels: &Panels,
    analysis: &AnalysisResult,
) -> Result<Question, PipelineError> {
    let Some((slot, tag)) = elaboration_target(analysis) else {
        return Err(PipelineError::IllegalState(
            "elaboration question requested with nothing missing".into(),
        ));
    };
    let focus = if analysis.trouble { Focus::Why } else { Focus::How };
    let mut vars = stage_vars(ctx, dialogue);
    vars.insert("panels".into(), panels_var(panels));
    vars.insert("analysis".into(), analysis_var(analysis));
    vars.insert("target_slot".into(), json!(slot.as_str()));
    vars.insert("target_tag".into(), json!(tag.as_str()));
    vars.insert("focus".into(), json!(if focus == Focus::Why { "why" } else { "how" }));
    let req = gw.render_prompt(
        Stage::QuestionElaboration,
        vars,
        latest_utterance(dialogue),
        &analysis.missing_keys(),
    )?;
    let reply: QuestionReply = gw.complete_structured(&req, check_question)?;
    let kind = if slot == PanelSlot::E && tag == MissingTag::Emotion {
        QuestionKind::Emotion
    } else if reply.kind == Some(QuestionKind::OptionsInText) {
        QuestionKind::OptionsInText
    } else {
        QuestionKind::Open
    };
    Ok(Question {
        text: clean_sentence(&reply.text),
        kind,
        target_slot: Some(slot),
        target_tag: Some(tag),
        focus,
    })
}

/// What the reconstructor is merging.
#[derive(Debug, Clone, Copy)]
pub enum ReconstructInput<'a> {
    /// The confirmed preliminary outline, distributed into empty panels.
    Outline(&'a [String]),
    /// The latest question and the adolescent's answer.
    Answer { question: &'a Question, answer: &'a str },
    /// No new content; fix the reported order defects only.
    Reorder,
}

/// Updates panel descriptions through the provider.
///
/// Only slots present in the reply change. `protected` slots may be rewritten
/// but never emptied; a reply that empties one is sent back for repair.
pub fn reconstruct_descriptions(
    gw: &Gateway,
    dialogue: Dialogue<'_>,
    ctx: &PipelineContext,
    panels: &Panels,
    input: ReconstructInput<'_>,
    analysis: Option<&AnalysisResult>,
    protected: &[PanelSlot],
) -> Result<Panels, PipelineError> {
    let mut vars = stage_vars(ctx, dialogue);
    vars.insert("panels".into(), panels_var(panels));
    if let Some(a) = analysis {
        vars.insert("analysis".into(), analysis_var(a));
    }
    let missing = analysis.map(AnalysisResult::missing_keys).unwrap_or_default();
    match input {
        ReconstructInput::Outline(lines) => {
            vars.insert("mode".into(), json!("outline"));
            vars.insert("outline".into(), json!(lines));
        }
        ReconstructInput::Answer { question, answer } => {
            vars.insert("mode".into(), json!("answer"));
            vars.insert("question".into(), json!(question.text));
            vars.insert("answer".into(), json!(answer));
        }
        ReconstructInput::Reorder => {
            vars.insert("mode".into(), json!("reorder"));
        }
    }
    let req = gw.render_prompt(Stage::Reconstruct, vars, latest_utterance(dialogue), &missing)?;
    let reply: PanelUpdatesReply = gw.complete_structured(&req, |r: &PanelUpdatesReply| {
        for (slot, sentences) in &r.panels {
            check_sentences(slot.as_str(), sentences)?;
            if sentences.is_empty() && protected.contains(slot) {
                return Err(format!("panel {slot} is already complete and must not be emptied"));
            }
        }
        Ok(())
    })?;
    Ok(apply_updates(panels, reply.panels))
}

fn apply_updates(panels: &Panels, updates: BTreeMap<PanelSlot, Vec<String>>) -> Panels {
    let mut out = panels.clone();
    for (slot, sentences) in updates {
        let cleaned: Vec<String> = sentences.iter().map(|s| clean_sentence(s)).collect();
        if let Some(p) = out.get_mut(&slot) {
            if p.sentences != cleaned {
                p.sentences = cleaned;
            }
        }
    }
    out
}

/// `I was sad.`, `I was sad and scared.`, `I was sad, scared, and bored.`
pub fn emotion_sentence(emotions: &[Emotion]) -> String {
    let labels: Vec<&str> = emotions.iter().map(|e| e.label()).collect();
    let list = match labels.as_slice() {
        [] => String::new(),
        [one] => one.to_string(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    };
    format!("I was {list}.")
}

fn mentions_emotion(sentence: &str) -> bool {
    sentence
        .split(|c: char| !c.is_alphabetic())
        .any(|w| w.parse::<Emotion>().is_ok())
}

/// Writes an emotion-card answer into panel E.
///
/// The chosen labels become one sentence that replaces any earlier sentence
/// naming an emotion; other E sentences are kept after it.
pub fn apply_emotion_answer(panels: &Panels, emotions: &[Emotion]) -> Panels {
    let mut out = panels.clone();
    let e = out.get_mut(&PanelSlot::E).expect("panels cover E");
    let mut sentences = vec![emotion_sentence(emotions)];
    sentences.extend(e.sentences.iter().filter(|s| !mentions_emotion(s)).cloned());
    e.sentences = sentences;
    out
}

/// `N: sentence` per event, numbered from 1 in extraction order.
pub fn compose_preliminary_outline(events: &[EventFragment]) -> Vec<String> {
    events
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}: {}", i + 1, e.text))
        .collect()
}

/// Strips a leading `N:` or `N.` numbering from an outline line.
fn strip_numbering(line: &str) -> &str {
    let trimmed = line.trim();
    let digits = trimmed.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return trimmed;
    }
    let rest = &trimmed[digits..];
    rest.strip_prefix(':')
        .or_else(|| rest.strip_prefix('.'))
        .map(str::trim_start)
        .unwrap_or(trimmed)
}

/// Applies a spoken correction to the preliminary outline (Verification).
pub fn apply_outline_modification(
    gw: &Gateway,
    dialogue: Dialogue<'_>,
    ctx: &PipelineContext,
    events: &[EventFragment],
    request: &str,
) -> Result<Vec<String>, PipelineError> {
    let mut vars = stage_vars(ctx, dialogue);
    vars.insert("target".into(), json!("outline"));
    vars.insert("outline".into(), json!(compose_preliminary_outline(events)));
    vars.insert("request".into(), json!(request));
    let req = gw.render_prompt(Stage::Modify, vars, request, &[])?;
    let reply: ModifyReply = gw.complete_structured(&req, |r: &ModifyReply| match &r.outline {
        None => Err("`outline` is required when modifying the outline".into()),
        Some(lines) if lines.iter().any(|l| strip_numbering(l).is_empty()) => {
            Err("outline has an empty line".into())
        }
        Some(_) => Ok(()),
    })?;
    Ok(reply
        .outline
        .unwrap_or_default()
        .iter()
        .map(|l| ensure_period(&clean_sentence(strip_numbering(l))))
        .collect())
}

/// Applies a spoken correction to the panels (Revision, or a late fix in
/// Elaboration). Returns the updated panels and the slots whose sentences
/// changed; every other slot is returned byte-identical.
pub fn apply_panel_modification(
    gw: &Gateway,
    dialogue: Dialogue<'_>,
    ctx: &PipelineContext,
    panels: &Panels,
    request: &str,
) -> Result<(Panels, Vec<PanelSlot>), PipelineError> {
    let mut vars = stage_vars(ctx, dialogue);
    vars.insert("target".into(), json!("panels"));
    vars.insert("panels".into(), panels_var(panels));
    vars.insert("request".into(), json!(request));
    let req = gw.render_prompt(Stage::Modify, vars, request, &[])?;
    let reply: ModifyReply = gw.complete_structured(&req, |r: &ModifyReply| {
        let Some(edits) = &r.edits else {
            return Err("`edits` is required when modifying panels".into());
        };
        for (slot, sentences) in edits {
            if sentences.is_empty() {
                return Err(format!("edit would empty panel {slot}"));
            }
            check_sentences(slot.as_str(), sentences)?;
        }
        Ok(())
    })?;
    let edits = reply.edits.unwrap_or_default();
    let updated = apply_updates(panels, edits);
    let changed = PanelSlot::ALL
        .into_iter()
        .filter(|s| updated[s].sentences != panels[s].sentences)
        .collect();
    Ok((updated, changed))
}

/// Closing message from the peer. Never fails: provider trouble yields
/// `fallback`.
pub fn wrapup_response(
    gw: &Gateway,
    dialogue: Dialogue<'_>,
    ctx: &PipelineContext,
    panels: &Panels,
    trouble: bool,
    fallback: &str,
) -> String {
    let mut vars = stage_vars(ctx, dialogue);
    vars.insert("panels".into(), panels_var(panels));
    vars.insert("trouble".into(), json!(trouble));
    let reply = gw
        .render_prompt(Stage::Wrapup, vars, latest_utterance(dialogue), &[])
        .and_then(|req| {
            gw.complete_structured(&req, |r: &TextReply| {
                if r.text.trim().is_empty() {
                    Err("text is empty".into())
                } else {
                    Ok(())
                }
            })
        });
    match reply {
        Ok(r) => clean_sentence(&r.text),
        Err(e) => {
            tracing::warn!(error = %e, "wrapup fell back to the fixed message");
            fallback.to_string()
        }
    }
}

/// Exactly three distinct, non-empty titles, in the provider's order.
pub fn suggest_titles(
    gw: &Gateway,
    dialogue: Dialogue<'_>,
    ctx: &PipelineContext,
    panels: &Panels,
) -> Result<Vec<String>, PipelineError> {
    let mut vars = stage_vars(ctx, dialogue);
    vars.insert("panels".into(), panels_var(panels));
    let req = gw.render_prompt(Stage::Titles, vars, latest_utterance(dialogue), &[])?;
    let reply: TitlesReply = gw.complete_structured(&req, |r: &TitlesReply| {
        if r.titles.len() != 3 {
            return Err(format!("expected exactly 3 titles, got {}", r.titles.len()));
        }
        let mut seen = BTreeSet::new();
        for t in &r.titles {
            let key = clean_sentence(t).to_lowercase();
            if key.is_empty() {
                return Err("empty title".into());
            }
            if !seen.insert(key) {
                return Err(format!("duplicate title `{}`", t.trim()));
            }
        }
        Ok(())
    })?;
    Ok(reply.titles.iter().map(|t| clean_sentence(t)).collect())
}

#[cfg(test)]
pub(crate) fn test_context() -> PipelineContext {
    PipelineContext {
        adolescent: AdolescentProfile {
            id: "p1".into(),
            age: 12,
            gender: "boy".into(),
            interests: vec!["soccer".into()],
        },
        peer: PeerProfile {
            id: "peer".into(),
            name: "Sunny".into(),
            voice_id: "v1".into(),
            avatar_ref: "sun".into(),
        },
        place: None,
        people: vec![],
        prompt_type: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emotion_sentences() {
        assert_eq!(emotion_sentence(&[Emotion::Sad]), "I was sad.");
        assert_eq!(emotion_sentence(&[Emotion::Sad, Emotion::Scared]), "I was sad and scared.");
        assert_eq!(
            emotion_sentence(&[Emotion::Sad, Emotion::Scared, Emotion::Bored]),
            "I was sad, scared, and bored."
        );
    }

    #[test]
    fn outline_numbering() {
        let ev = |t: &str| EventFragment { text: t.into(), source_turn: 1 };
        let events: Vec<EventFragment> = (1..=5).map(|i| ev(&format!("Event {i}."))).collect();
        let outline = compose_preliminary_outline(&events);
        let expected: Vec<String> = (1..=5).map(|i| format!("{i}: Event {i}.")).collect();
        assert_eq!(outline, expected);
        assert_eq!(compose_preliminary_outline(&events[..1]), vec!["1: Event 1.".to_string()]);
    }

    #[test]
    fn numbering_is_stripped() {
        assert_eq!(strip_numbering("2: The bus was late."), "The bus was late.");
        assert_eq!(strip_numbering("3. Something."), "Something.");
        assert_eq!(strip_numbering("2024 was fun."), "2024 was fun.");
    }

    #[test]
    fn punctuation() {
        assert!(has_terminal_punctuation("I was sad."));
        assert!(has_terminal_punctuation("He said \"stop!\""));
        assert!(!has_terminal_punctuation("I was sad"));
    }

    #[test]
    fn gate() {
        let ev = EventFragment { text: "x.".into(), source_turn: 0 };
        assert!(!articulation_gate(&[]));
        assert!(!articulation_gate(std::slice::from_ref(&ev)));
        assert!(articulation_gate(&[ev.clone(), ev]));
    }

    #[test]
    fn target_is_lowest_slot_then_first_tag() {
        let mut a = AnalysisResult::clean(true);
        a.missing.insert(PanelSlot::E, vec![MissingTag::Emotion]);
        a.missing.insert(PanelSlot::B, vec![MissingTag::Reaction, MissingTag::Cause]);
        assert_eq!(elaboration_target(&a), Some((PanelSlot::B, MissingTag::Cause)));
        assert_eq!(elaboration_target(&AnalysisResult::clean(false)), None);
    }
}
