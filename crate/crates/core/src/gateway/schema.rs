//! Response schemas, one per stage.
//!
//! Each stage has a schema id, a JSON Schema document (sent to the model in the
//! system message) and a Rust type the reply is parsed into. Semantic checks
//! that JSON Schema cannot express (ids that must exist, sentence endings)
//! live with the stage that issues the call.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Stage;
use crate::model::{ElementKind, Emotion, MissingTag, OrderDefect, PanelSlot, QuestionKind};

pub fn schema_id(stage: Stage) -> &'static str {
    match stage {
        Stage::EventExtract => "event_extract.v1",
        Stage::QuestionArticulation => "question.v1",
        Stage::StoryAnalyze => "story_analyze.v1",
        Stage::QuestionElaboration => "question.v1",
        Stage::Reconstruct => "panel_updates.v1",
        Stage::Modify => "modify.v1",
        Stage::Wrapup => "wrapup.v1",
        Stage::Titles => "titles.v1",
        Stage::SceneElements => "scene_elements.v1",
        Stage::SceneTopology => "scene_topology.v1",
    }
}

const SLOT_LISTS: &str = r#"{"type":"object","properties":{"A":{"type":"array","items":{"type":"string"}},"B":{"type":"array","items":{"type":"string"}},"C":{"type":"array","items":{"type":"string"}},"E":{"type":"array","items":{"type":"string"}}},"additionalProperties":false}"#;

/// JSON Schema text for the stage's reply.
pub fn schema_json(stage: Stage) -> String {
    match stage {
        Stage::EventExtract => r#"{"type":"object","required":["events"],"properties":{"events":{"type":"array","items":{"type":"object","required":["text"],"properties":{"text":{"type":"string","minLength":1},"source_turn":{"type":"integer","minimum":0}}}}}}"#.to_string(),
        Stage::QuestionArticulation | Stage::QuestionElaboration => r#"{"type":"object","required":["text"],"properties":{"text":{"type":"string","minLength":1},"kind":{"enum":["open","options_in_text"]}}}"#.to_string(),
        Stage::StoryAnalyze => r##"{"type":"object","required":["trouble","missing"],"properties":{"trouble":{"type":"boolean"},"missing":{"type":"object","properties":{"A":{"$ref":"#/$defs/tags"},"B":{"$ref":"#/$defs/tags"},"C":{"$ref":"#/$defs/tags"},"E":{"$ref":"#/$defs/tags"}}},"order_defects":{"type":"array","items":{"type":"object","required":["slot","description"],"properties":{"slot":{"enum":["A","B","C","E"]},"description":{"type":"string"}}}}},"$defs":{"tags":{"type":"array","items":{"enum":["actor","action","cause","reaction","emotion"]}}}}"##.to_string(),
        Stage::Reconstruct => format!(r#"{{"type":"object","required":["panels"],"properties":{{"panels":{SLOT_LISTS}}}}}"#),
        Stage::Modify => format!(r#"{{"type":"object","properties":{{"outline":{{"type":"array","items":{{"type":"string"}}}},"edits":{SLOT_LISTS}}}}}"#),
        Stage::Wrapup => r#"{"type":"object","required":["text"],"properties":{"text":{"type":"string","minLength":1}}}"#.to_string(),
        Stage::Titles => r#"{"type":"object","required":["titles"],"properties":{"titles":{"type":"array","minItems":3,"maxItems":3,"items":{"type":"string","minLength":1}}}}"#.to_string(),
        Stage::SceneElements => r#"{"type":"object","required":["elements"],"properties":{"setting":{"type":"string"},"elements":{"type":"array","items":{"type":"object","required":["kind","label"],"properties":{"kind":{"enum":["actor","object","concept"]},"label":{"type":"string","minLength":1},"action":{"type":"string"},"dialogue_line":{"type":"string"},"thought":{"type":"string"},"emotion":{"enum":["joyful","glad","happy","excited","sad","angry","upset","scared","afraid","surprised","amazed","bored"]}}}}}}"#.to_string(),
        Stage::SceneTopology => r#"{"type":"object","required":["pairs"],"properties":{"pairs":{"type":"array","items":{"type":"array","minItems":2,"maxItems":2,"items":{"type":"string"}}}}}"#.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub text: String,
    #[serde(default)]
    pub source_turn: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventsReply {
    pub events: Vec<RawEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionReply {
    pub text: String,
    #[serde(default)]
    pub kind: Option<QuestionKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReply {
    pub trouble: bool,
    #[serde(default)]
    pub missing: BTreeMap<PanelSlot, Vec<MissingTag>>,
    #[serde(default)]
    pub order_defects: Vec<OrderDefect>,
}

/// Replacement sentence lists for the slots a stage changed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelUpdatesReply {
    pub panels: BTreeMap<PanelSlot, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifyReply {
    #[serde(default)]
    pub outline: Option<Vec<String>>,
    #[serde(default)]
    pub edits: Option<BTreeMap<PanelSlot, Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextReply {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitlesReply {
    pub titles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawElement {
    pub kind: ElementKind,
    pub label: String,
    #[serde(default)]
    pub action: Option<String>,
    #[serde(default)]
    pub dialogue_line: Option<String>,
    #[serde(default)]
    pub thought: Option<String>,
    #[serde(default)]
    pub emotion: Option<Emotion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementsReply {
    #[serde(default)]
    pub setting: Option<String>,
    pub elements: Vec<RawElement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReply {
    pub pairs: Vec<(String, String)>,
}
