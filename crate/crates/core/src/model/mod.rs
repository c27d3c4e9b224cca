//! Shared domain types for journaling sessions.
//!
//! Everything here is plain data. Behavior lives in the engine, pipeline and
//! scene modules; the only logic in this module is parsing and
//! [`validate`](validate::validate).

mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

pub use validate::{validate, Violation};

/// Side length of the scene grid.
pub const GRID_SIZE: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdolescentProfile {
    pub id: String,
    pub age: u8,
    pub gender: String,
    #[serde(default)]
    pub interests: Vec<String>,
}

impl AdolescentProfile {
    pub const MIN_AGE: u8 = 10;
    pub const MAX_AGE: u8 = 19;

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(Self::MIN_AGE..=Self::MAX_AGE).contains(&self.age) {
            out.push(format!("age {} outside [10, 19]", self.age));
        }
        if self.interests.iter().any(|i| i.trim().is_empty()) {
            out.push("blank interest".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerProfile {
    pub id: String,
    pub name: String,
    pub voice_id: String,
    pub avatar_ref: String,
}

impl PeerProfile {
    pub fn violations(&self) -> Vec<String> {
        if self.name.trim().is_empty() {
            vec!["peer name empty".to_string()]
        } else {
            Vec::new()
        }
    }
}

/// A regular place registered for one adolescent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceEntry {
    pub id: String,
    pub profile_id: String,
    pub label: String,
    #[serde(default)]
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonCategory {
    Teacher,
    Friend,
    Family,
    Other,
}

/// A regular person registered for one adolescent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonEntry {
    pub id: String,
    pub profile_id: String,
    pub label: String,
    pub category: PersonCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptType {
    PlacePeopleSelection,
    OpenEnded,
    ScheduleBased,
}

impl PromptType {
    pub const ALL: [PromptType; 3] = [
        PromptType::PlacePeopleSelection,
        PromptType::OpenEnded,
        PromptType::ScheduleBased,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptType::PlacePeopleSelection => "place_people_selection",
            PromptType::OpenEnded => "open_ended",
            PromptType::ScheduleBased => "schedule_based",
        }
    }
}

/// One of the four comic panels: antecedent, behavior, consequence, emotion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PanelSlot {
    A,
    B,
    C,
    E,
}

impl PanelSlot {
    pub const ALL: [PanelSlot; 4] = [PanelSlot::A, PanelSlot::B, PanelSlot::C, PanelSlot::E];

    pub fn as_str(self) -> &'static str {
        match self {
            PanelSlot::A => "A",
            PanelSlot::B => "B",
            PanelSlot::C => "C",
            PanelSlot::E => "E",
        }
    }
}

impl fmt::Display for PanelSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PanelSlot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(PanelSlot::A),
            "B" => Ok(PanelSlot::B),
            "C" => Ok(PanelSlot::C),
            "E" => Ok(PanelSlot::E),
            other => Err(format!("unknown panel slot `{other}`")),
        }
    }
}

/// The closed set of emotions offered as answer cards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Joyful,
    Glad,
    Happy,
    Excited,
    Sad,
    Angry,
    Upset,
    Scared,
    Afraid,
    Surprised,
    Amazed,
    Bored,
}

impl Emotion {
    pub const ALL: [Emotion; 12] = [
        Emotion::Joyful,
        Emotion::Glad,
        Emotion::Happy,
        Emotion::Excited,
        Emotion::Sad,
        Emotion::Angry,
        Emotion::Upset,
        Emotion::Scared,
        Emotion::Afraid,
        Emotion::Surprised,
        Emotion::Amazed,
        Emotion::Bored,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Emotion::Joyful => "joyful",
            Emotion::Glad => "glad",
            Emotion::Happy => "happy",
            Emotion::Excited => "excited",
            Emotion::Sad => "sad",
            Emotion::Angry => "angry",
            Emotion::Upset => "upset",
            Emotion::Scared => "scared",
            Emotion::Afraid => "afraid",
            Emotion::Surprised => "surprised",
            Emotion::Amazed => "amazed",
            Emotion::Bored => "bored",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{0}` is not one of the 12 emotion labels")]
pub struct UnknownEmotion(pub String);

impl FromStr for Emotion {
    type Err = UnknownEmotion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.label() == s)
            .ok_or_else(|| UnknownEmotion(s.to_string()))
    }
}

/// Element an analysis can flag as missing or underdeveloped in a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingTag {
    Actor,
    Action,
    Cause,
    Reaction,
    Emotion,
}

impl MissingTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MissingTag::Actor => "actor",
            MissingTag::Action => "action",
            MissingTag::Cause => "cause",
            MissingTag::Reaction => "reaction",
            MissingTag::Emotion => "emotion",
        }
    }

    /// Tag assumed for a slot that has no sentences at all.
    pub fn default_for(slot: PanelSlot) -> MissingTag {
        match slot {
            PanelSlot::A => MissingTag::Actor,
            PanelSlot::B => MissingTag::Action,
            PanelSlot::C => MissingTag::Reaction,
            PanelSlot::E => MissingTag::Emotion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Preparation,
    Articulation,
    Verification,
    Elaboration,
    Revision,
    Wrapup,
    Finalized,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Preparation,
        Phase::Articulation,
        Phase::Verification,
        Phase::Elaboration,
        Phase::Revision,
        Phase::Wrapup,
        Phase::Finalized,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Adolescent,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    SpeechTranscript,
    Typed,
    Button,
}

/// Button presses the client can send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Button {
    AllCorrect,
    SomethingToFix,
    Yes,
    No,
    TitleIndex(u8),
    Next,
}

impl Button {
    pub fn name(self) -> &'static str {
        match self {
            Button::AllCorrect => "all_correct",
            Button::SomethingToFix => "something_to_fix",
            Button::Yes => "yes",
            Button::No => "no",
            Button::TitleIndex(_) => "title_index",
            Button::Next => "next",
        }
    }
}

/// Machine-readable payload carried by button-modality turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Choice {
    Selection {
        prompt_type: PromptType,
        place_id: Option<String>,
        people_ids: Vec<String>,
    },
    Emotions {
        emotions: Vec<Emotion>,
    },
    Button {
        choice: Button,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub phase: Phase,
    pub modality: Modality,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<Choice>,
}

/// A single declarative clause pulled out of the adolescent's narration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFragment {
    pub text: String,
    pub source_turn: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelDescription {
    pub slot: PanelSlot,
    pub sentences: Vec<String>,
    pub complete: bool,
}

impl PanelDescription {
    pub fn empty(slot: PanelSlot) -> Self {
        Self {
            slot,
            sentences: Vec::new(),
            complete: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

pub type Panels = BTreeMap<PanelSlot, PanelDescription>;

/// Four empty panels, one per slot.
pub fn empty_panels() -> Panels {
    PanelSlot::ALL
        .into_iter()
        .map(|s| (s, PanelDescription::empty(s)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderDefect {
    pub slot: PanelSlot,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub trouble: bool,
    pub missing: BTreeMap<PanelSlot, Vec<MissingTag>>,
    #[serde(default)]
    pub order_defects: Vec<OrderDefect>,
}

impl AnalysisResult {
    /// Result with nothing missing and no defects.
    pub fn clean(trouble: bool) -> Self {
        Self {
            trouble,
            missing: PanelSlot::ALL.into_iter().map(|s| (s, Vec::new())).collect(),
            order_defects: Vec::new(),
        }
    }

    pub fn is_missing(&self, slot: PanelSlot) -> bool {
        self.missing.get(&slot).is_some_and(|t| !t.is_empty())
    }

    pub fn has_missing(&self) -> bool {
        self.missing.values().any(|t| !t.is_empty())
    }

    pub fn is_clean(&self) -> bool {
        !self.has_missing() && self.order_defects.is_empty()
    }

    /// Missing tags rendered as `SLOT:tag`, sorted.
    pub fn missing_keys(&self) -> Vec<String> {
        self.missing
            .iter()
            .flat_map(|(slot, tags)| tags.iter().map(move |t| format!("{slot}:{}", t.as_str())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Actor,
    Object,
    Concept,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Actor => "actor",
            ElementKind::Object => "object",
            ElementKind::Concept => "concept",
        }
    }
}

/// Stable element id: `<kind>-<label slug>`.
pub fn element_slug(kind: ElementKind, label: &str) -> String {
    let mut slug = String::from(kind.as_str());
    slug.push('-');
    let mut last_dash = true;
    for ch in label.trim().chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            if !last_dash {
                slug.push('-');
                last_dash = true;
            }
        } else {
            slug.push(ch);
            last_dash = ch == '-';
        }
    }
    while slug.ends_with('-') && slug.len() > kind.as_str().len() + 1 {
        slug.pop();
    }
    slug
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneElement {
    pub id: String,
    pub kind: ElementKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_line: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<Emotion>,
}

impl SceneElement {
    pub fn has_actor_attributes(&self) -> bool {
        self.action.is_some()
            || self.dialogue_line.is_some()
            || self.thought.is_some()
            || self.emotion.is_some()
    }
}

/// Grid cell; row 0 is the top row, col 0 the left column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: u8,
    pub col: u8,
}

impl Cell {
    pub const CENTER: Cell = Cell { row: 2, col: 2 };

    pub fn new(row: u8, col: u8) -> Self {
        Self { row, col }
    }

    pub fn in_bounds(self) -> bool {
        self.row < GRID_SIZE && self.col < GRID_SIZE
    }

    pub fn manhattan(self, other: Cell) -> u8 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub slot: PanelSlot,
    /// Set for slots with no description yet; such scenes render as blank panels.
    #[serde(default)]
    pub blank: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<String>,
    pub elements: Vec<SceneElement>,
    pub adjacencies: Vec<(String, String)>,
    pub placements: BTreeMap<String, Cell>,
    /// Adjacency pairs the placer could not satisfy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unsatisfied: Vec<(String, String)>,
}

impl SceneDocument {
    pub fn blank(slot: PanelSlot) -> Self {
        Self {
            slot,
            blank: true,
            setting: None,
            elements: Vec::new(),
            adjacencies: Vec::new(),
            placements: BTreeMap::new(),
            unsatisfied: Vec::new(),
        }
    }
}

pub type Strip = BTreeMap<PanelSlot, SceneDocument>;

/// Strip of four blank scenes.
pub fn blank_strip() -> Strip {
    PanelSlot::ALL
        .into_iter()
        .map(|s| (s, SceneDocument::blank(s)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Open,
    OptionsInText,
    Emotion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Why,
    How,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub kind: QuestionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_slot: Option<PanelSlot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_tag: Option<MissingTag>,
    pub focus: Focus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtsRequest {
    pub voice_id: String,
    pub text: String,
}

/// Everything the engine tells the client to show or say.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemAction {
    Say {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tts_request: Option<TtsRequest>,
    },
    /// Registries the adolescent picks from in Preparation.
    ShowSelection {
        prompt_types: Vec<PromptType>,
        places: Vec<PlaceEntry>,
        people: Vec<PersonEntry>,
    },
    ShowEmotionButtons {
        emotions: Vec<Emotion>,
    },
    ShowOutline {
        lines: Vec<String>,
    },
    ShowStrip {
        scenes: Strip,
    },
    ShowTitles {
        titles: Vec<String>,
    },
    AwardStamps {
        count: u8,
    },
    ErrorNotice {
        text: String,
        retryable: bool,
    },
}

impl SystemAction {
    pub fn kind(&self) -> &'static str {
        match self {
            SystemAction::Say { .. } => "say",
            SystemAction::ShowSelection { .. } => "show_selection",
            SystemAction::ShowEmotionButtons { .. } => "show_emotion_buttons",
            SystemAction::ShowOutline { .. } => "show_outline",
            SystemAction::ShowStrip { .. } => "show_strip",
            SystemAction::ShowTitles { .. } => "show_titles",
            SystemAction::AwardStamps { .. } => "award_stamps",
            SystemAction::ErrorNotice { .. } => "error_notice",
        }
    }
}

/// Input the adolescent (through the client) sends to a live session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UserInput {
    Selection {
        prompt_type: PromptType,
        #[serde(default)]
        place_id: Option<String>,
        #[serde(default)]
        people_ids: Vec<String>,
    },
    Utterance {
        text: String,
        #[serde(default = "default_modality")]
        modality: Modality,
    },
    EmotionChoice {
        emotions: Vec<Emotion>,
    },
    Button {
        choice: Button,
    },
}

fn default_modality() -> Modality {
    Modality::Typed
}

impl UserInput {
    pub fn utterance(text: impl Into<String>) -> Self {
        UserInput::Utterance {
            text: text.into(),
            modality: Modality::Typed,
        }
    }

    pub fn button(choice: Button) -> Self {
        UserInput::Button { choice }
    }

    /// Shape checks that do not depend on session state.
    pub fn check(&self) -> Result<(), String> {
        match self {
            UserInput::EmotionChoice { emotions } => {
                if emotions.is_empty() {
                    return Err("emotion_choice must not be empty".into());
                }
                if emotions.len() > Emotion::ALL.len() {
                    return Err("emotion_choice has more than 12 entries".into());
                }
                let mut seen = emotions.clone();
                seen.sort();
                seen.dedup();
                if seen.len() != emotions.len() {
                    return Err("emotion_choice contains duplicates".into());
                }
                Ok(())
            }
            UserInput::Utterance { text, .. } if text.trim().is_empty() => {
                Err("utterance text is empty".into())
            }
            UserInput::Button {
                choice: Button::TitleIndex(i),
            } if *i > 2 => Err(format!("title_index {i} outside 0..=2")),
            _ => Ok(()),
        }
    }

    pub fn variant_name(&self) -> String {
        match self {
            UserInput::Selection { .. } => "selection".into(),
            UserInput::Utterance { .. } => "utterance".into(),
            UserInput::EmotionChoice { .. } => "emotion_choice".into(),
            UserInput::Button { choice } => format!("button({})", choice.name()),
        }
    }
}

/// What the engine is waiting on besides the phase's default inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Pending {
    Nothing,
    Answer { question: Question },
    FixRequest,
}

/// Engine bookkeeping carried with a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub articulation_turns: u32,
    pub restarted: bool,
    pub elaboration_cycles: u32,
    pub pending: Pending,
    pub analysis: Option<AnalysisResult>,
    /// Slots an analysis has reported complete; they only reopen after a modification.
    pub settled: Vec<PanelSlot>,
    /// Sentences each scene was last composed from.
    pub scene_sources: BTreeMap<PanelSlot, Vec<String>>,
    pub title_choice: Option<u8>,
    /// Notes for human review, such as late corrections during Elaboration.
    pub review_flags: Vec<String>,
}

impl Default for Progress {
    fn default() -> Self {
        Self {
            articulation_turns: 0,
            restarted: false,
            elaboration_cycles: 0,
            pending: Pending::Nothing,
            analysis: None,
            settled: Vec::new(),
            scene_sources: BTreeMap::new(),
            title_choice: None,
            review_flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub profile_id: String,
    pub peer_id: String,
    pub created_at: DateTime<Utc>,
    pub phase: Phase,
    pub prompt_type: Option<PromptType>,
    pub selected_place: Option<PlaceEntry>,
    pub selected_people: Vec<PersonEntry>,
    pub turns: Vec<Turn>,
    pub events: Vec<EventFragment>,
    pub panels: Panels,
    pub scenes: Strip,
    pub title_candidates: Vec<String>,
    pub title: Option<String>,
    pub stamps_awarded: u8,
    pub progress: Progress,
    /// Every action emitted so far, in order; the event channel replays this.
    pub actions: Vec<SystemAction>,
}

impl Session {
    pub fn new(id: String, profile_id: String, peer_id: String, now: DateTime<Utc>) -> Self {
        Self {
            id,
            profile_id,
            peer_id,
            created_at: now,
            phase: Phase::Preparation,
            prompt_type: None,
            selected_place: None,
            selected_people: Vec::new(),
            turns: Vec::new(),
            events: Vec::new(),
            panels: empty_panels(),
            scenes: blank_strip(),
            title_candidates: Vec::new(),
            title: None,
            stamps_awarded: 0,
            progress: Progress::default(),
            actions: Vec::new(),
        }
    }

    pub fn adolescent_turns(&self) -> impl Iterator<Item = (usize, &Turn)> {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.role == Role::Adolescent)
    }

    pub fn latest_adolescent_text(&self) -> &str {
        self.adolescent_turns()
            .last()
            .map(|(_, t)| t.text.as_str())
            .unwrap_or("")
    }

    /// The title currently picked in Wrapup, before finalization.
    pub fn chosen_title(&self) -> Option<&str> {
        self.progress
            .title_choice
            .and_then(|i| self.title_candidates.get(i as usize))
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub duration_secs: i64,
    pub turns: u32,
}

/// Turn and duration accounting for one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub total_duration_secs: i64,
    pub turns_total: u32,
    pub turns_adolescent: u32,
    pub turns_system: u32,
    pub phases: BTreeMap<Phase, PhaseStats>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalPanel {
    pub description: PanelDescription,
    pub scene: SceneDocument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub id: String,
    pub session_id: String,
    pub profile_id: String,
    pub title: String,
    pub date: NaiveDate,
    pub finalized_at: DateTime<Utc>,
    pub prompt_type: PromptType,
    pub panels: Vec<JournalPanel>,
    pub metrics: SessionMetrics,
}

impl JournalEntry {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let slots: Vec<PanelSlot> = self.panels.iter().map(|p| p.description.slot).collect();
        if slots != PanelSlot::ALL {
            out.push("journal panels must be A, B, C, E in order".to_string());
        }
        for p in &self.panels {
            if !p.description.complete || p.description.sentences.is_empty() {
                out.push(format!("panel {} incomplete", p.description.slot));
            }
        }
        if self.title.trim().is_empty() {
            out.push("journal title empty".to_string());
        }
        out
    }
}
