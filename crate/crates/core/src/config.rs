//! Engine configuration, loaded from JSON with documented defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::expr::{DollarPolicy, DEFAULT_BUILTINS};

pub const DEFAULT_INSTRUCTION_TEMPLATE: &str = "<last_response> Instruction for <agent_name>: <instruction>";
pub const DEFAULT_REPLY_START_TEMPLATE: &str = "<agent_name>'s reply:";
pub const DEFAULT_INTERJECTION_QUESTION: &str = "Which of the following is True?";
pub const DEFAULT_INTERJECTION_LAST_CHOICE: &str = "None of the above.";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("instruction_template must contain `{0}` exactly once")]
    TemplateMissingPlaceholder(&'static str),
    #[error("unknown host function `{0}`")]
    UnknownHostFunction(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyStartType {
    #[default]
    Suffix,
    Prefix,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemPromptMode {
    /// Initial prompt stays prepended to the first user message.
    #[default]
    Inline,
    /// Initial prompt is sent as a separate system message.
    System,
}

fn default_timeout() -> u64 {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSettings {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Name of the environment variable holding the API credential.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// JSON file mapping answer letters to token ids for logit bias.
    #[serde(default)]
    pub token_map_path: Option<PathBuf>,
    #[serde(default)]
    pub system_prompt_mode: SystemPromptMode,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        BackendSettings {
            kind: BackendKind::Scripted,
            endpoint: None,
            model: None,
            api_key_env: None,
            timeout_secs: default_timeout(),
            token_map_path: None,
            system_prompt_mode: SystemPromptMode::Inline,
            max_tokens: None,
        }
    }
}

fn s(v: &str) -> String {
    v.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutogramConfig {
    pub agent_name: String,
    pub instruction_template: String,
    pub reply_start_template: String,
    pub reply_start_type: ReplyStartType,
    pub default_interjection_question: String,
    pub default_interjection_last_choice: String,
    pub interjection_question_override: Option<String>,
    pub self_referential: bool,
    pub allowed_builtins: Vec<String>,
    pub host_function_names: Vec<String>,
    pub chatbot: BackendSettings,
    pub classifier: BackendSettings,
    /// Falls back to the chatbot backend when absent.
    pub userbot: Option<BackendSettings>,
    pub undefined_dollar_policy: DollarPolicy,
    pub start_node: Option<String>,
    pub initial_prompt: String,
    pub max_steps_per_reply: usize,
    /// Cap for apply_fn and run-to-end execution, which may legitimately
    /// take many more steps than a conversational reply.
    pub max_steps_per_call: usize,
}

impl Default for AutogramConfig {
    fn default() -> Self {
        AutogramConfig {
            agent_name: s("Agent"),
            instruction_template: s(DEFAULT_INSTRUCTION_TEMPLATE),
            reply_start_template: s(DEFAULT_REPLY_START_TEMPLATE),
            reply_start_type: ReplyStartType::Suffix,
            default_interjection_question: s(DEFAULT_INTERJECTION_QUESTION),
            default_interjection_last_choice: s(DEFAULT_INTERJECTION_LAST_CHOICE),
            interjection_question_override: None,
            self_referential: false,
            allowed_builtins: DEFAULT_BUILTINS.iter().map(|b| s(b)).collect(),
            host_function_names: Vec::new(),
            chatbot: BackendSettings::default(),
            classifier: BackendSettings::default(),
            userbot: None,
            undefined_dollar_policy: DollarPolicy::Error,
            start_node: None,
            initial_prompt: String::new(),
            max_steps_per_reply: 1000,
            max_steps_per_call: 1_000_000,
        }
    }
}

impl AutogramConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: AutogramConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        for p in ["<last_response>", "<agent_name>", "<instruction>"] {
            if self.instruction_template.matches(p).count() != 1 {
                return Err(ConfigError::TemplateMissingPlaceholder(p));
            }
        }
        Ok(())
    }

    pub fn interjection_question(&self) -> &str {
        self.interjection_question_override.as_deref().unwrap_or(&self.default_interjection_question)
    }

    pub fn reply_start(&self) -> String {
        self.reply_start_template.replace("<agent_name>", &self.agent_name)
    }

    pub fn userbot_settings(&self) -> &BackendSettings {
        self.userbot.as_ref().unwrap_or(&self.chatbot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = AutogramConfig::from_json_str("{}").unwrap();
        assert_eq!(c, AutogramConfig::default());
        assert_eq!(c.reply_start(), "Agent's reply:");
        assert_eq!(c.interjection_question(), "Which of the following is True?");
    }

    #[test]
    fn bad_enum_is_parse_error() {
        assert!(matches!(
            AutogramConfig::from_json_str(r#"{"reply_start_type": "middle"}"#),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn template_placeholders_checked() {
        let r = AutogramConfig::from_json_str(r#"{"instruction_template": "<instruction>"}"#);
        assert!(matches!(r, Err(ConfigError::TemplateMissingPlaceholder("<last_response>"))));
    }
}
