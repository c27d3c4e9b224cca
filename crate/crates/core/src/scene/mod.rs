//! Panel descriptions to scene documents: element extraction, topology and
//! grid placement.

mod place;
pub mod svg;

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

pub use place::{place_elements, Placement, PlacementError, EXACT_LIMIT};

use crate::gateway::schema::{ElementsReply, TopologyReply};
use crate::gateway::{Gateway, GatewayError, Stage};
use crate::model::{
    element_slug, ElementKind, PanelDescription, PanelSlot, Panels, SceneDocument, SceneElement, Strip, Turn,
};
use crate::pipeline::{clean_sentence, PipelineContext};

/// Most elements kept per panel; actors are kept first.
pub const ELEMENT_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SceneError {
    #[error(transparent)]
    Stage(#[from] GatewayError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("panel {0} has no sentences")]
    EmptyPanel(PanelSlot),
}

fn subject(panel: &PanelDescription) -> String {
    panel.sentences.join(" ")
}

fn scene_vars(ctx: &PipelineContext, dialogue: &[Turn], slot: PanelSlot) -> serde_json::Map<String, serde_json::Value> {
    let mut vars = crate::pipeline::stage_vars(ctx, dialogue);
    vars.insert("slot".into(), json!(slot.as_str()));
    vars
}

/// Asks the provider for the panel's setting and elements.
///
/// Ids are `<kind>-<label slug>`, with `-2`, `-3`… appended on collisions.
pub fn extract_elements(
    gw: &Gateway,
    panel: &PanelDescription,
    ctx: &PipelineContext,
    dialogue: &[Turn],
) -> Result<(Option<String>, Vec<SceneElement>), SceneError> {
    if panel.is_empty() {
        return Err(SceneError::EmptyPanel(panel.slot));
    }
    let mut vars = scene_vars(ctx, dialogue, panel.slot);
    vars.insert("sentences".into(), json!(panel.sentences));
    let req = gw.render_prompt(Stage::SceneElements, vars, &subject(panel), &[])?;
    let reply: ElementsReply = gw.complete_structured(&req, |r: &ElementsReply| {
        for e in &r.elements {
            if e.label.trim().is_empty() {
                return Err("element label is empty".into());
            }
            let has_attrs =
                e.action.is_some() || e.dialogue_line.is_some() || e.thought.is_some() || e.emotion.is_some();
            if e.kind != ElementKind::Actor && has_attrs {
                return Err(format!("{} `{}` carries actor attributes", e.kind.as_str(), e.label));
            }
        }
        Ok(())
    })?;

    let mut raw = reply.elements;
    raw.sort_by_key(|e| e.kind != ElementKind::Actor);
    raw.truncate(ELEMENT_CAP);
    let mut used = BTreeSet::new();
    let elements = raw
        .into_iter()
        .map(|e| {
            let label = clean_sentence(&e.label);
            let base = element_slug(e.kind, &label);
            let mut id = base.clone();
            let mut n = 2;
            while !used.insert(id.clone()) {
                id = format!("{base}-{n}");
                n += 1;
            }
            let attr = |s: Option<String>| s.map(|s| clean_sentence(&s)).filter(|s| !s.is_empty());
            SceneElement {
                id,
                kind: e.kind,
                label,
                action: attr(e.action),
                dialogue_line: attr(e.dialogue_line),
                thought: attr(e.thought),
                emotion: e.emotion,
            }
        })
        .collect();
    let setting = reply.setting.map(|s| clean_sentence(&s)).filter(|s| !s.is_empty());
    Ok((setting, elements))
}

/// Asks the provider which elements belong next to each other.
///
/// Pairs are unordered; duplicates (in either orientation) are dropped and
/// the first orientation seen is kept. Fewer than two elements need no call.
pub fn compute_topology(
    gw: &Gateway,
    slot: PanelSlot,
    panel_subject: &str,
    elements: &[SceneElement],
    ctx: &PipelineContext,
    dialogue: &[Turn],
) -> Result<Vec<(String, String)>, SceneError> {
    if elements.len() < 2 {
        return Ok(Vec::new());
    }
    let ids: BTreeSet<&str> = elements.iter().map(|e| e.id.as_str()).collect();
    let mut vars = scene_vars(ctx, dialogue, slot);
    vars.insert(
        "elements".into(),
        json!(elements
            .iter()
            .map(|e| json!({"id": e.id, "kind": e.kind.as_str(), "label": e.label, "action": e.action}))
            .collect::<Vec<_>>()),
    );
    let req = gw.render_prompt(Stage::SceneTopology, vars, panel_subject, &[])?;
    let reply: TopologyReply = gw.complete_structured(&req, |r: &TopologyReply| {
        for (a, b) in &r.pairs {
            for id in [a, b] {
                if !ids.contains(id.as_str()) {
                    return Err(format!("unknown element id `{id}`"));
                }
            }
            if a == b {
                return Err(format!("self pair `{a}`"));
            }
        }
        Ok(())
    })?;
    let mut seen = BTreeSet::new();
    Ok(reply
        .pairs
        .into_iter()
        .filter(|(a, b)| seen.insert(if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) }))
        .collect())
}

/// Builds the scene for one panel; empty panels give a blank marker.
pub fn compose_scene(
    gw: &Gateway,
    panel: &PanelDescription,
    ctx: &PipelineContext,
    dialogue: &[Turn],
) -> Result<SceneDocument, SceneError> {
    if panel.is_empty() {
        return Ok(SceneDocument::blank(panel.slot));
    }
    let (setting, elements) = extract_elements(gw, panel, ctx, dialogue)?;
    let adjacencies = compute_topology(gw, panel.slot, &subject(panel), &elements, ctx, dialogue)?;
    let Placement { cells, unsatisfied } = place_elements(&elements, &adjacencies)?;
    Ok(SceneDocument {
        slot: panel.slot,
        blank: false,
        setting,
        elements,
        adjacencies,
        placements: cells,
        unsatisfied,
    })
}

/// Result of recomposing a strip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripUpdate {
    pub scenes: Strip,
    /// Sentences each scene now reflects.
    pub sources: BTreeMap<PanelSlot, Vec<String>>,
    pub recomposed: Vec<PanelSlot>,
    /// Slots whose composition failed; their previous scene is kept.
    pub failures: Vec<(PanelSlot, SceneError)>,
}

/// Recomposes the slots whose sentences changed since they were last
/// composed. Slots are composed in A, B, C, E order so provider calls are
/// reproducible; a failing slot keeps its previous scene and is retried on
/// the next call.
pub fn compose_strip(
    gw: &Gateway,
    panels: &Panels,
    previous: &Strip,
    sources: &BTreeMap<PanelSlot, Vec<String>>,
    ctx: &PipelineContext,
    dialogue: &[Turn],
) -> StripUpdate {
    let mut update = StripUpdate {
        scenes: previous.clone(),
        sources: sources.clone(),
        recomposed: Vec::new(),
        failures: Vec::new(),
    };
    for slot in PanelSlot::ALL {
        let empty = PanelDescription::empty(slot);
        let panel = panels.get(&slot).unwrap_or(&empty);
        let up_to_date = match sources.get(&slot) {
            Some(s) => *s == panel.sentences,
            None => panel.is_empty() && previous.get(&slot).is_some_and(|d| d.blank),
        };
        if up_to_date && previous.contains_key(&slot) {
            continue;
        }
        match compose_scene(gw, panel, ctx, dialogue) {
            Ok(doc) => {
                update.scenes.insert(slot, doc);
                update.sources.insert(slot, panel.sentences.clone());
                update.recomposed.push(slot);
            }
            Err(e) => {
                tracing::warn!(%slot, error = %e, "scene composition failed");
                update.scenes.entry(slot).or_insert_with(|| SceneDocument::blank(slot));
                update.failures.push((slot, e));
            }
        }
    }
    update
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use serde_json::json;

    use super::*;
    use crate::gateway::{MockProvider, MockScript};
    use crate::model::{blank_strip, empty_panels, Emotion};

    fn ctx() -> PipelineContext {
        crate::pipeline::test_context()
    }

    fn panel(slot: PanelSlot, s: &[&str]) -> PanelDescription {
        PanelDescription {
            slot,
            sentences: s.iter().map(|s| s.to_string()).collect(),
            complete: true,
        }
    }

    fn gw(script: MockScript) -> (Gateway, Arc<MockProvider>) {
        let mock = Arc::new(MockProvider::new(script));
        (Gateway::with_provider(mock.clone()), mock)
    }

    const C_TEXT: &str = "Oliver got angry and told the teacher.";

    fn c_script() -> MockScript {
        MockScript::default()
            .on(
                Stage::SceneElements,
                C_TEXT,
                &[],
                vec![json!({"setting": "Classroom", "elements": [
                    {"kind": "actor", "label": "Oliver", "emotion": "angry", "action": "told the teacher"},
                    {"kind": "actor", "label": "Teacher"}
                ]})],
            )
            .on(
                Stage::SceneTopology,
                C_TEXT,
                &[],
                vec![json!({"pairs": [["actor-oliver", "actor-teacher"], ["actor-teacher", "actor-oliver"]]})],
            )
    }

    #[test]
    fn panel_c_scene() {
        let (gw, _) = gw(c_script());
        let doc = compose_scene(&gw, &panel(PanelSlot::C, &[C_TEXT]), &ctx(), &[]).unwrap();
        assert_eq!(doc.setting.as_deref(), Some("Classroom"));
        let oliver = &doc.elements[0];
        assert_eq!(oliver.id, "actor-oliver");
        assert_eq!(oliver.emotion, Some(Emotion::Angry));
        assert_eq!(oliver.action.as_deref(), Some("told the teacher"));
        assert_eq!(doc.adjacencies, vec![("actor-oliver".to_string(), "actor-teacher".to_string())]);
        assert_eq!(doc.placements["actor-oliver"].manhattan(doc.placements["actor-teacher"]), 1);
    }

    #[test]
    fn single_element_skips_topology_call() {
        let script = MockScript::default().fallback(
            Stage::SceneElements,
            vec![json!({"elements": [{"kind": "actor", "label": "Me", "emotion": "sad"}]})],
        );
        let (gw, mock) = gw(script);
        let doc = compose_scene(&gw, &panel(PanelSlot::E, &["I was sad."]), &ctx(), &[]).unwrap();
        assert_eq!(doc.elements.len(), 1);
        assert!(doc.adjacencies.is_empty());
        assert_eq!(doc.placements["actor-me"], crate::model::Cell::CENTER);
        assert_eq!(mock.calls().len(), 1);
    }

    #[test]
    fn object_with_attributes_is_repaired() {
        let script = MockScript::default().fallback(
            Stage::SceneElements,
            vec![
                json!({"elements": [{"kind": "object", "label": "ball", "emotion": "happy"}]}),
                json!({"elements": [{"kind": "object", "label": "ball"}]}),
            ],
        );
        let (gw, mock) = gw(script);
        let (_, els) = extract_elements(&gw, &panel(PanelSlot::A, &["A ball."]), &ctx(), &[]).unwrap();
        assert_eq!(els[0].id, "object-ball");
        assert_eq!(mock.calls().len(), 2);
    }

    #[test]
    fn cap_keeps_actors_and_dedupes_ids() {
        let mut elements = vec![json!({"kind": "object", "label": "chair"})];
        for _ in 0..9 {
            elements.push(json!({"kind": "actor", "label": "Kid"}));
        }
        let script = MockScript::default().fallback(Stage::SceneElements, vec![json!({ "elements": elements })]);
        let (gw, _) = gw(script);
        let (_, els) = extract_elements(&gw, &panel(PanelSlot::A, &["Kids."]), &ctx(), &[]).unwrap();
        assert_eq!(els.len(), ELEMENT_CAP);
        assert!(els.iter().all(|e| e.kind == ElementKind::Actor));
        assert_eq!(els[0].id, "actor-kid");
        assert_eq!(els[1].id, "actor-kid-2");
    }

    #[test]
    fn unknown_topology_id_exhausts_to_stage_error() {
        let script = MockScript::default()
            .fallback(
                Stage::SceneElements,
                vec![json!({"elements": [{"kind": "actor", "label": "Oliver"}, {"kind": "actor", "label": "Teacher"}]})],
            )
            .fallback(Stage::SceneTopology, vec![json!({"pairs": [["actor-oliver", "actor-ghost"]]})]);
        let (gw, _) = gw(script);
        let err = compose_scene(&gw, &panel(PanelSlot::C, &["Oliver and the teacher talked."]), &ctx(), &[]);
        assert!(matches!(err, Err(SceneError::Stage(GatewayError::Schema { .. }))), "{err:?}");
    }

    #[test]
    fn strip_recomposes_only_changed_slots() {
        let script = c_script()
            .fallback(Stage::SceneElements, vec![json!({"elements": [{"kind": "actor", "label": "Me"}]})]);
        let (gw, mock) = gw(script);
        let mut panels = empty_panels();
        panels.insert(PanelSlot::A, panel(PanelSlot::A, &["I went to school."]));
        let first = compose_strip(&gw, &panels, &blank_strip(), &BTreeMap::new(), &ctx(), &[]);
        assert!(first.failures.is_empty());
        assert!(!first.scenes[&PanelSlot::A].blank);
        assert!(first.scenes[&PanelSlot::B].blank && first.scenes[&PanelSlot::E].blank);
        let calls = mock.calls().len();

        let again = compose_strip(&gw, &panels, &first.scenes, &first.sources, &ctx(), &[]);
        assert_eq!(again.scenes, first.scenes);
        assert!(again.recomposed.is_empty());
        assert_eq!(mock.calls().len(), calls);

        panels.insert(PanelSlot::C, panel(PanelSlot::C, &[C_TEXT]));
        let edited = compose_strip(&gw, &panels, &first.scenes, &first.sources, &ctx(), &[]);
        let differing: Vec<PanelSlot> = PanelSlot::ALL
            .into_iter()
            .filter(|s| edited.scenes[s] != first.scenes[s])
            .collect();
        assert_eq!(differing, vec![PanelSlot::C]);
    }

    #[test]
    fn failing_slot_keeps_previous_scene() {
        let script = MockScript::default().fallback(Stage::SceneElements, vec![json!({"$error": "timeout"})]);
        let (gw, _) = gw(script);
        let mut panels = empty_panels();
        panels.insert(PanelSlot::B, panel(PanelSlot::B, &["I threw it."]));
        let up = compose_strip(&gw, &panels, &blank_strip(), &BTreeMap::new(), &ctx(), &[]);
        assert_eq!(up.failures.len(), 1);
        assert!(up.scenes[&PanelSlot::B].blank);
        assert!(!up.sources.contains_key(&PanelSlot::B));
    }
}
