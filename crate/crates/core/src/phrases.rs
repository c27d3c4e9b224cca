//! Fixed lines the peer says without a provider call.

use serde::{Deserialize, Serialize};

/// Every fixed line, overridable per deployment locale. `{peer}` in
/// `greeting` is replaced with the peer's name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Phrases {
    pub greeting: String,
    pub restart: String,
    pub outline_intro: String,
    pub outline_fix_ask: String,
    pub outline_updated: String,
    pub strip_intro: String,
    pub fix_ask: String,
    pub fixed_recheck: String,
    pub emotion_question: String,
    pub emotion_unknown: String,
    pub placeholder_sentence: String,
    pub revision_intro: String,
    pub wrapup_fallback: String,
    pub titles_prompt: String,
    pub closing: String,
    pub stage_failure: String,
}

impl Default for Phrases {
    fn default() -> Self {
        Self {
            greeting: "Hi, I'm {peer}! Let's write today's journal together. \
                       Where did today's story happen?"
                .into(),
            restart: "That's okay. Let's start over. Tell me about anything that happened today.".into(),
            outline_intro: "Here is what you told me. Is everything correct?".into(),
            outline_fix_ask: "Which part should I fix?".into(),
            outline_updated: "I changed it. Is everything correct now?".into(),
            strip_intro: "I started drawing your comic.".into(),
            fix_ask: "What would you like to change?".into(),
            fixed_recheck: "Is everything correct now?".into(),
            emotion_question: "How did you feel? Pick the cards that fit.".into(),
            emotion_unknown: "We can leave the feeling panel empty for now.".into(),
            placeholder_sentence: "Something happened.".into(),
            revision_intro: "Here is your whole comic. Is everything correct?".into(),
            wrapup_fallback: "You did a great job telling your story today!".into(),
            titles_prompt: "Which title do you like best?".into(),
            closing: "Your journal is saved. Here are three stamps!".into(),
            stage_failure: "Sorry, something went wrong on my side. Please try again.".into(),
        }
    }
}

impl Phrases {
    pub fn greeting_for(&self, peer_name: &str) -> String {
        self.greeting.replace("{peer}", peer_name)
    }
}
