use std::collections::{BTreeMap, BTreeSet};

use super::{Cell, Modality, Phase, PromptType, Role, SceneDocument, Session};

/// One broken invariant, as a short human-readable message.
pub type Violation = String;

/// Checks every session invariant and returns the violations found.
///
/// An empty list means the session is consistent. Nothing here panics or
/// errors; malformed sessions simply produce more messages.
pub fn validate(session: &Session) -> Vec<Violation> {
    let mut out = Vec::new();
    check_phase_fields(session, &mut out);
    check_turns(session, &mut out);
    check_events(session, &mut out);
    check_panels(session, &mut out);
    for (slot, scene) in &session.scenes {
        if scene.slot != *slot {
            out.push(format!("scene keyed {slot} carries slot {}", scene.slot));
        }
        check_scene(scene, &mut out);
    }
    if session.scenes.len() != 4 {
        out.push(format!("strip has {} scenes", session.scenes.len()));
    }
    out
}

fn check_phase_fields(s: &Session, out: &mut Vec<Violation>) {
    let finalized = s.phase == Phase::Finalized;
    match (&s.title, finalized) {
        (Some(_), false) => out.push("title before finalization".into()),
        (None, true) => out.push("finalized without title".into()),
        _ => {}
    }
    if finalized && s.stamps_awarded != 3 {
        out.push(format!("finalized with {} stamps", s.stamps_awarded));
    }
    if !finalized && s.stamps_awarded != 0 {
        out.push("stamps before finalization".into());
    }
    if s.title_candidates.len() > 3 {
        out.push(format!("{} title candidates", s.title_candidates.len()));
    }
    if s.phase != Phase::Preparation && s.prompt_type.is_none() {
        out.push("prompt type unset after preparation".into());
    }
    if s.phase != Phase::Preparation
        && s.prompt_type == Some(PromptType::PlacePeopleSelection)
        && s.selected_place.is_none()
    {
        out.push("place selection prompt without a place".into());
    }
    if let Some(i) = s.progress.title_choice {
        if i as usize >= s.title_candidates.len() {
            out.push(format!("title choice {i} out of range"));
        }
    }
}

fn check_turns(s: &Session, out: &mut Vec<Violation>) {
    for (i, pair) in s.turns.windows(2).enumerate() {
        if pair[1].timestamp < pair[0].timestamp {
            out.push(format!("turn timestamps decrease at {}", i + 1));
        }
    }
    for (i, t) in s.turns.iter().enumerate() {
        if t.modality == Modality::Button && t.choice.is_none() {
            out.push(format!("button turn {i} without choice payload"));
        }
        if t.phase > s.phase {
            out.push(format!("turn {i} tagged with future phase {:?}", t.phase));
        }
    }
}

fn check_events(s: &Session, out: &mut Vec<Violation>) {
    for (i, e) in s.events.iter().enumerate() {
        if e.text.trim().is_empty() {
            out.push(format!("event {i} empty"));
        }
        match s.turns.get(e.source_turn) {
            Some(t) if t.role == Role::Adolescent => {}
            _ => out.push(format!("event {i} source turn {} is not an adolescent turn", e.source_turn)),
        }
    }
}

fn check_panels(s: &Session, out: &mut Vec<Violation>) {
    if s.panels.len() != 4 {
        out.push(format!("{} panels instead of 4", s.panels.len()));
    }
    for (slot, panel) in &s.panels {
        if panel.slot != *slot {
            out.push(format!("panel keyed {slot} carries slot {}", panel.slot));
        }
        let flagged = s
            .progress
            .analysis
            .as_ref()
            .is_some_and(|a| a.is_missing(*slot));
        let expected = !(panel.sentences.is_empty() || flagged);
        if panel.complete != expected {
            out.push(format!("panel {slot} complete flag is {} but should be {expected}", panel.complete));
        }
        if panel.sentences.iter().any(|t| t.trim().is_empty()) {
            out.push(format!("panel {slot} has a blank sentence"));
        }
    }
    if s.phase == Phase::Finalized && s.panels.values().any(|p| !p.complete) {
        out.push("finalized with incomplete panel".into());
    }
    if let Some(a) = &s.progress.analysis {
        for slot in super::PanelSlot::ALL {
            if !a.missing.contains_key(&slot) {
                out.push(format!("analysis does not cover slot {slot}"));
            }
        }
    }
}

fn check_scene(scene: &SceneDocument, out: &mut Vec<Violation>) {
    let slot = scene.slot;
    let mut ids = BTreeSet::new();
    for el in &scene.elements {
        if !ids.insert(el.id.as_str()) {
            out.push(format!("duplicate element id {slot}:{}", el.id));
        }
        if el.kind != super::ElementKind::Actor && el.has_actor_attributes() {
            out.push(format!("non-actor {slot}:{} carries actor attributes", el.id));
        }
    }
    if scene.blank && !scene.elements.is_empty() {
        out.push(format!("blank scene {slot} has elements"));
    }
    for id in &ids {
        if !scene.placements.contains_key(*id) {
            out.push(format!("element {slot}:{id} not placed"));
        }
    }
    let mut occupied: BTreeMap<Cell, &str> = BTreeMap::new();
    for (id, cell) in &scene.placements {
        if !ids.contains(id.as_str()) {
            out.push(format!("placement for unknown element {slot}:{id}"));
        }
        if !cell.in_bounds() {
            out.push(format!("placement out of bounds {slot}:{cell}"));
        }
        if occupied.insert(*cell, id).is_some() {
            out.push(format!("cell collision {slot}:{cell}"));
        }
    }
    for (a, b) in &scene.adjacencies {
        if a == b {
            out.push(format!("self adjacency {slot}:{a}"));
        }
        if !ids.contains(a.as_str()) || !ids.contains(b.as_str()) {
            out.push(format!("adjacency over unknown element {slot}:({a},{b})"));
        }
    }
}

#[cfg(test)]
mod tests {
    use chrono::{TimeZone, Utc};

    use super::*;
    use crate::model::{ElementKind, PanelSlot, SceneElement};

    fn fresh() -> Session {
        let t0 = Utc.with_ymd_and_hms(2025, 7, 1, 19, 0, 0).unwrap();
        Session::new("s1".into(), "p1".into(), "milo".into(), t0)
    }

    fn actor(label: &str) -> SceneElement {
        SceneElement {
            id: crate::model::element_slug(ElementKind::Actor, label),
            kind: ElementKind::Actor,
            label: label.into(),
            action: None,
            dialogue_line: None,
            thought: None,
            emotion: None,
        }
    }

    #[test]
    fn fresh_session_is_valid() {
        assert!(validate(&fresh()).is_empty());
    }

    #[test]
    fn stamps_before_finalization() {
        let mut s = fresh();
        s.phase = Phase::Elaboration;
        s.prompt_type = Some(PromptType::OpenEnded);
        s.stamps_awarded = 3;
        assert_eq!(validate(&s), vec!["stamps before finalization".to_string()]);
    }

    #[test]
    fn cell_collision_reported() {
        let mut s = fresh();
        let scene = s.scenes.get_mut(&PanelSlot::A).unwrap();
        scene.blank = false;
        scene.elements = vec![actor("Oliver"), actor("Teacher")];
        scene.placements.insert("actor-oliver".into(), Cell::new(2, 2));
        scene.placements.insert("actor-teacher".into(), Cell::new(2, 2));
        assert_eq!(validate(&s), vec!["cell collision A:(2,2)".to_string()]);
    }

    #[test]
    fn complete_flag_must_track_sentences() {
        let mut s = fresh();
        s.panels.get_mut(&PanelSlot::B).unwrap().complete = true;
        assert_eq!(validate(&s).len(), 1);
    }
}
