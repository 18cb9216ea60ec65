//! Prompt assembly and the three model roles: chatbot, classifier, userbot.

pub mod http;
pub mod prompt;
pub mod scripted;

pub use http::HttpBackend;
pub use prompt::{
    build_chat_prompt, build_classifier_prompt, build_userbot_prompt, format_mc, history_text, ChatPrompt, ClassifierPrompt,
};
pub use scripted::{Rule, Script, ScriptedBackend};

use crate::config::{BackendKind, BackendSettings};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("scripted {0} responses exhausted")]
    ScriptExhausted(&'static str),
    #[error("HTTP error status {0}")]
    HttpError(u16),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("{0} choices exceed the 26 answer letters")]
    TooManyChoices(usize),
    #[error("instruction template is missing `{0}`")]
    TemplateMissingPlaceholder(&'static str),
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingCredential(String),
}

/// A model endpoint usable in any of the three roles.
pub trait LlmBackend: Send {
    fn generate(&mut self, prompt: &ChatPrompt) -> Result<String, LlmError>;

    /// Raw single-letter answer; mapped to an index by [`classify`].
    fn classify_raw(&mut self, prompt: &ClassifierPrompt) -> Result<String, LlmError>;

    /// Resumable state, for backends that have any.
    fn state(&self) -> Option<serde_json::Value> {
        None
    }

    fn restore_state(&mut self, _state: &serde_json::Value) -> Result<(), LlmError> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub index: usize,
    /// The raw answer was not a valid letter and was clamped to 0.
    pub clamped: bool,
}

/// Maps a raw answer to an index in `[0, k)`. Anything that is not one of the
/// first `k` letters clamps to 0 with a warning.
pub fn answer_to_index(raw: &str, k: usize) -> Classification {
    let t = raw.trim().trim_end_matches(['.', ')', ':']);
    let mut chars = t.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        let c = c.to_ascii_uppercase();
        if c.is_ascii_uppercase() {
            let idx = (c as u8 - b'A') as usize;
            if idx < k {
                return Classification { index: idx, clamped: false };
            }
        }
    }
    log::warn!("classifier answer {raw:?} is not one of {k} choices; using A");
    Classification { index: 0, clamped: true }
}

pub fn classify(backend: &mut dyn LlmBackend, prompt: &ClassifierPrompt) -> Result<Classification, LlmError> {
    if prompt.num_choices > 26 {
        return Err(LlmError::TooManyChoices(prompt.num_choices));
    }
    let raw = backend.classify_raw(prompt)?;
    Ok(answer_to_index(&raw, prompt.num_choices.max(1)))
}

/// Generates and applies the prefix reply-start rule: an echoed reply start
/// is removed so the recorded output is the continuation only.
pub fn generate(backend: &mut dyn LlmBackend, prompt: &ChatPrompt) -> Result<String, LlmError> {
    let out = backend.generate(prompt)?;
    Ok(match prompt.start_type {
        crate::config::ReplyStartType::Prefix if !prompt.reply_start.is_empty() => out
            .strip_prefix(prompt.reply_start.as_str())
            .map(|s| s.trim_start().to_string())
            .unwrap_or(out),
        _ => out,
    })
}

/// Backends for the three roles. The userbot shares the chatbot when unset.
pub struct Backends {
    pub chatbot: Box<dyn LlmBackend>,
    pub classifier: Box<dyn LlmBackend>,
    pub userbot: Option<Box<dyn LlmBackend>>,
}

impl Backends {
    pub fn new(chatbot: Box<dyn LlmBackend>, classifier: Box<dyn LlmBackend>) -> Self {
        Backends { chatbot, classifier, userbot: None }
    }

    pub fn with_userbot(mut self, userbot: Box<dyn LlmBackend>) -> Self {
        self.userbot = Some(userbot);
        self
    }

    pub fn userbot(&mut self) -> &mut dyn LlmBackend {
        match &mut self.userbot {
            Some(u) => u.as_mut(),
            None => self.chatbot.as_mut(),
        }
    }

    /// One scripted backend per role from a fixture.
    pub fn scripted(fixture: &scripted::Fixture) -> Self {
        let mut b = Backends::new(
            Box::new(ScriptedBackend::new(fixture.chatbot.clone())),
            Box::new(ScriptedBackend::new(fixture.classifier.clone())),
        );
        if let Some(u) = &fixture.userbot {
            b.userbot = Some(Box::new(ScriptedBackend::new(u.clone())));
        }
        b
    }

    /// Live backends for roles configured as HTTP; scripted roles use the
    /// corresponding fixture section (or an empty script).
    pub fn from_settings(
        chatbot: &BackendSettings,
        classifier: &BackendSettings,
        userbot: Option<&BackendSettings>,
        fixture: Option<&scripted::Fixture>,
    ) -> Result<Self, LlmError> {
        fn make(s: &BackendSettings, script: Option<Script>) -> Result<Box<dyn LlmBackend>, LlmError> {
            Ok(match s.kind {
                BackendKind::Http => Box::new(HttpBackend::from_settings(s)?),
                BackendKind::Scripted => Box::new(ScriptedBackend::new(script.unwrap_or_default())),
            })
        }
        let mut b = Backends::new(
            make(chatbot, fixture.map(|f| f.chatbot.clone()))?,
            make(classifier, fixture.map(|f| f.classifier.clone()))?,
        );
        match userbot {
            Some(u) => b.userbot = Some(make(u, fixture.and_then(|f| f.userbot.clone()))?),
            None => {
                if let Some(u) = fixture.and_then(|f| f.userbot.clone()) {
                    b.userbot = Some(Box::new(ScriptedBackend::new(u)));
                }
            }
        }
        Ok(b)
    }

    pub fn state(&self) -> serde_json::Value {
        serde_json::json!({
            "chatbot": self.chatbot.state(),
            "classifier": self.classifier.state(),
            "userbot": self.userbot.as_ref().and_then(|u| u.state()),
        })
    }

    pub fn restore_state(&mut self, state: &serde_json::Value) -> Result<(), LlmError> {
        if let Some(s) = state.get("chatbot").filter(|s| !s.is_null()) {
            self.chatbot.restore_state(s)?;
        }
        if let Some(s) = state.get("classifier").filter(|s| !s.is_null()) {
            self.classifier.restore_state(s)?;
        }
        if let (Some(u), Some(s)) = (&mut self.userbot, state.get("userbot").filter(|s| !s.is_null())) {
            u.restore_state(s)?;
        }
        Ok(())
    }
}
