use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatPrompt, ClassifierPrompt, LlmBackend, LlmError};

/// `contains` → `response`. When several rules match, the one whose text
/// occurs latest in the prompt wins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub contains: String,
    pub response: String,
}

impl Rule {
    pub fn new(contains: impl Into<String>, response: impl Into<String>) -> Self {
        Rule { contains: contains.into(), response: response.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Script {
    /// Queue consumed by `generate` when no rule matches.
    pub responses: VecDeque<String>,
    /// Queue consumed by classification when no answer rule matches.
    pub answers: VecDeque<String>,
    pub rules: Vec<Rule>,
    pub answer_rules: Vec<Rule>,
    /// Exhaustion is an error instead of falling back to the defaults.
    pub strict: bool,
    pub default_response: Option<String>,
    pub default_answer: Option<String>,
}

impl Script {
    pub fn responses<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Self {
        Script { responses: items.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn answers<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Self {
        Script { answers: items.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn rule(mut self, contains: &str, response: &str) -> Self {
        self.rules.push(Rule::new(contains, response));
        self
    }

    pub fn answer_rule(mut self, contains: &str, answer: &str) -> Self {
        self.answer_rules.push(Rule::new(contains, answer));
        self
    }
}

/// Scripts for each role, as stored in fixture files.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fixture {
    pub chatbot: Script,
    pub classifier: Script,
    pub userbot: Option<Script>,
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Fixture, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::BackendUnavailable(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Fixture, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::BackendUnavailable(format!("bad fixture: {e}")))
    }
}

fn best_rule<'r>(rules: &'r [Rule], text: &str) -> Option<&'r Rule> {
    let mut best: Option<(usize, &Rule)> = None;
    for r in rules {
        if let Some(pos) = text.rfind(r.contains.as_str()) {
            let end = pos + r.contains.len();
            if best.map(|(b, _)| end > b).unwrap_or(true) {
                best = Some((end, r));
            }
        }
    }
    best.map(|(_, r)| r)
}

/// Deterministic backend driven by a [`Script`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ScriptedBackend {
    pub script: Script,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        ScriptedBackend { script }
    }
}

impl LlmBackend for ScriptedBackend {
    fn generate(&mut self, prompt: &ChatPrompt) -> Result<String, LlmError> {
        if let Some(r) = best_rule(&self.script.rules, &prompt.text()) {
            return Ok(r.response.clone());
        }
        match self.script.responses.pop_front() {
            Some(r) => Ok(r),
            None if self.script.strict => Err(LlmError::ScriptExhausted("generate")),
            None => Ok(self.script.default_response.clone().unwrap_or_default()),
        }
    }

    fn classify_raw(&mut self, prompt: &ClassifierPrompt) -> Result<String, LlmError> {
        if let Some(r) = best_rule(&self.script.answer_rules, &prompt.text()) {
            return Ok(r.response.clone());
        }
        match self.script.answers.pop_front() {
            Some(a) => Ok(a),
            None if self.script.strict => Err(LlmError::ScriptExhausted("classify")),
            None => Ok(self.script.default_answer.clone().unwrap_or_else(|| "A".into())),
        }
    }

    fn state(&self) -> Option<serde_json::Value> {
        serde_json::to_value(&self.script).ok()
    }

    fn restore_state(&mut self, state: &serde_json::Value) -> Result<(), LlmError> {
        self.script = serde_json::from_value(state.clone())
            .map_err(|e| LlmError::BackendUnavailable(format!("bad scripted state: {e}")))?;
        Ok(())
    }
}
