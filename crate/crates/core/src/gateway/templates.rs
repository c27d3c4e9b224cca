//! Per-locale prompt templates.
//!
//! Layout on disk: `<dir>/<locale>/<stage>.txt` for each of the ten stages plus
//! `<dir>/<locale>/system.txt`. Templates use minijinja syntax. Every variable a
//! template references must be declared for its stage (see
//! [`declared_variables`]); this is checked when templates load, so a typo in
//! a template fails at startup rather than mid-session.
//!
//! Variables shared by all stage templates:
//!
//! | name          | shape                                             |
//! |---------------|---------------------------------------------------|
//! | `adolescent`  | `{age, gender, interests: [string]}`              |
//! | `peer`        | `{name}`                                          |
//! | `place`       | string or absent                                  |
//! | `people`      | `[string]`                                        |
//! | `prompt_type` | `place_people_selection`, `open_ended`, `schedule_based` |
//! | `dialogue`    | `[{role, text}]`, full transcript                 |
//!
//! Stage-specific variables are listed in [`declared_variables`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use minijinja::Environment;
use serde_json::{Map, Value};

use super::{schema, Stage};

pub const BUILTIN_LOCALE: &str = "en";

const COMMON_VARIABLES: &[&str] = &["adolescent", "peer", "place", "people", "prompt_type", "dialogue"];
const SYSTEM_VARIABLES: &[&str] = &["peer", "stage", "schema"];

/// Variables a stage template may use beyond the common set.
pub fn declared_variables(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::EventExtract => &[],
        Stage::QuestionArticulation => &["events"],
        Stage::StoryAnalyze => &["panels"],
        Stage::QuestionElaboration => &["panels", "analysis", "target_slot", "target_tag", "focus"],
        Stage::Reconstruct => &["panels", "analysis", "question", "answer", "outline", "mode"],
        Stage::Modify => &["target", "outline", "panels", "request"],
        Stage::Wrapup => &["panels", "trouble"],
        Stage::Titles => &["panels"],
        Stage::SceneElements => &["slot", "sentences"],
        Stage::SceneTopology => &["slot", "elements"],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("no templates for locale `{0}`")]
    UnknownLocale(String),
    #[error("locale `{locale}` is missing template `{name}`")]
    MissingTemplate { locale: String, name: String },
    #[error("template {locale}/{name} uses undeclared variable(s): {variables}")]
    UndeclaredVariable {
        locale: String,
        name: String,
        variables: String,
    },
    #[error("template {locale}/{name}: {message}")]
    Syntax {
        locale: String,
        name: String,
        message: String,
    },
    #[error("rendering {name}: {message}")]
    Render { name: String, message: String },
    #[error("reading templates: {0}")]
    Io(String),
}

/// System and user message text for one call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// Both messages joined, as stored in goldens and logs.
    pub fn joined(&self) -> String {
        format!("[system]\n{}\n[user]\n{}", self.system, self.user)
    }
}

#[derive(Debug)]
pub struct Templates {
    env: Environment<'static>,
    locales: BTreeSet<String>,
}

macro_rules! builtin {
    ($name:literal) => {
        ($name, include_str!(concat!("../../templates/en/", $name, ".txt")))
    };
}

const BUILTIN_EN: &[(&str, &str)] = &[
    builtin!("system"),
    builtin!("event_extract"),
    builtin!("question_articulation"),
    builtin!("story_analyze"),
    builtin!("question_elaboration"),
    builtin!("reconstruct"),
    builtin!("modify"),
    builtin!("wrapup"),
    builtin!("titles"),
    builtin!("scene_elements"),
    builtin!("scene_topology"),
];

fn template_names() -> impl Iterator<Item = &'static str> {
    std::iter::once("system").chain(Stage::ALL.into_iter().map(Stage::as_str))
}

fn new_env() -> Environment<'static> {
    let mut env = Environment::new();
    env.set_trim_blocks(true);
    env.set_lstrip_blocks(true);
    env.set_undefined_behavior(minijinja::UndefinedBehavior::Chainable);
    env
}

impl Templates {
    /// The English templates compiled into the crate.
    pub fn builtin() -> Self {
        let sources: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::from([(
            BUILTIN_LOCALE.to_string(),
            BUILTIN_EN
                .iter()
                .map(|(n, s)| (n.to_string(), s.to_string()))
                .collect(),
        )]);
        Self::from_sources(sources).expect("built-in templates are valid")
    }

    /// Loads every `<locale>/<name>.txt` under `dir`, on top of the built-ins.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut sources: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        sources.insert(
            BUILTIN_LOCALE.to_string(),
            BUILTIN_EN
                .iter()
                .map(|(n, s)| (n.to_string(), s.to_string()))
                .collect(),
        );
        let io = |e: std::io::Error| TemplateError::Io(e.to_string());
        for locale_dir in std::fs::read_dir(dir).map_err(io)? {
            let locale_dir = locale_dir.map_err(io)?;
            if !locale_dir.file_type().map_err(io)?.is_dir() {
                continue;
            }
            let locale = locale_dir.file_name().to_string_lossy().into_owned();
            let entry = sources.entry(locale.clone()).or_default();
            if locale != BUILTIN_LOCALE {
                entry.clear();
            }
            for file in std::fs::read_dir(locale_dir.path()).map_err(io)? {
                let path = file.map_err(io)?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let name = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_string();
                entry.insert(name, std::fs::read_to_string(&path).map_err(io)?);
            }
        }
        Self::from_sources(sources)
    }

    /// Builds from `locale -> name -> source`, validating everything.
    pub fn from_sources(
        sources: BTreeMap<String, BTreeMap<String, String>>,
    ) -> Result<Self, TemplateError> {
        let mut env = new_env();
        let mut locales = BTreeSet::new();
        for (locale, files) in sources {
            for name in template_names() {
                let Some(source) = files.get(name) else {
                    return Err(TemplateError::MissingTemplate {
                        locale,
                        name: name.to_string(),
                    });
                };
                let key = format!("{locale}/{name}");
                env.add_template_owned(key.clone(), source.clone())
                    .map_err(|e| TemplateError::Syntax {
                        locale: locale.clone(),
                        name: name.to_string(),
                        message: e.to_string(),
                    })?;
                let allowed: BTreeSet<&str> = if name == "system" {
                    SYSTEM_VARIABLES.iter().copied().collect()
                } else {
                    let stage = Stage::ALL.into_iter().find(|s| s.as_str() == name).expect("stage name");
                    COMMON_VARIABLES
                        .iter()
                        .chain(declared_variables(stage))
                        .copied()
                        .collect()
                };
                let used = env
                    .get_template(&key)
                    .expect("just added")
                    .undeclared_variables(false);
                let mut unknown: Vec<String> = used
                    .into_iter()
                    .filter(|v| !allowed.contains(v.as_str()))
                    .collect();
                if !unknown.is_empty() {
                    unknown.sort();
                    return Err(TemplateError::UndeclaredVariable {
                        locale,
                        name: name.to_string(),
                        variables: unknown.join(", "),
                    });
                }
            }
            locales.insert(locale);
        }
        Ok(Self { env, locales })
    }

    pub fn locales(&self) -> impl Iterator<Item = &str> {
        self.locales.iter().map(String::as_str)
    }

    pub fn ensure_locale(&self, locale: &str) -> Result<(), TemplateError> {
        if self.locales.contains(locale) {
            Ok(())
        } else {
            Err(TemplateError::UnknownLocale(locale.to_string()))
        }
    }

    /// Renders the system and user messages for `stage`.
    ///
    /// Variables absent from `vars` render as undefined, which templates treat
    /// as empty; optional sections are written with `{% if %}` guards.
    pub fn render(
        &self,
        locale: &str,
        stage: Stage,
        vars: Map<String, Value>,
    ) -> Result<RenderedPrompt, TemplateError> {
        self.ensure_locale(locale)?;
        let render = |name: &str, ctx: &Value| {
            let key = format!("{locale}/{name}");
            self.env
                .get_template(&key)
                .and_then(|t| t.render(ctx))
                .map_err(|e| TemplateError::Render {
                    name: key.clone(),
                    message: e.to_string(),
                })
        };
        let system_ctx = serde_json::json!({
            "peer": vars.get("peer").cloned().unwrap_or(Value::Null),
            "stage": stage.as_str(),
            "schema": schema::schema_json(stage),
        });
        let system = render("system", &system_ctx)?;
        let user = render(stage.as_str(), &Value::Object(vars))?;
        Ok(RenderedPrompt {
            system: system.trim_end().to_string(),
            user: user.trim_end().to_string(),
        })
    }
}
