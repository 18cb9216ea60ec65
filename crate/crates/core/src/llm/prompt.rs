use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::config::{AutogramConfig, ReplyStartType};
use crate::memory::{MemoryObject, TurnRecord};
use crate::model::ActionKind;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatPrompt {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub reply_start: String,
    pub start_type: ReplyStartType,
    /// The initial prompt already prepended to `inputs[0]`; kept separately
    /// so a client can send it as a system message instead.
    #[serde(default)]
    pub initial_prompt: String,
}

impl ChatPrompt {
    /// Flat text of the whole prompt, used for scripted matching and logs.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for (i, input) in self.inputs.iter().enumerate() {
            out.push_str(input);
            out.push('\n');
            if let Some(o) = self.outputs.get(i) {
                out.push_str(o);
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierPrompt {
    pub history_text: String,
    pub mc_text: String,
    pub num_choices: usize,
}

impl ClassifierPrompt {
    /// The single turn sent to the classifier.
    pub fn text(&self) -> String {
        if self.history_text.is_empty() {
            self.mc_text.clone()
        } else {
            format!("{}\n\n{}", self.history_text, self.mc_text)
        }
    }
}

/// `<question> A. <c1> B. <c2> ...`
pub fn format_mc(question: &str, choices: &[String]) -> Result<String, LlmError> {
    if choices.len() > 26 {
        return Err(LlmError::TooManyChoices(choices.len()));
    }
    let mut out = question.trim_end().to_string();
    for (i, c) in choices.iter().enumerate() {
        out.push(' ');
        out.push((b'A' + i as u8) as char);
        out.push_str(". ");
        out.push_str(c);
    }
    Ok(out)
}

const PLACEHOLDERS: [&str; 3] = ["<last_response>", "<agent_name>", "<instruction>"];

/// Substitutes the three placeholders in one pass, so placeholder-like text
/// inside the substituted values is left alone.
pub fn fill_template(template: &str, last_response: &str, agent_name: &str, instruction: &str) -> Result<String, LlmError> {
    for p in PLACEHOLDERS {
        if !template.contains(p) {
            return Err(LlmError::TemplateMissingPlaceholder(p));
        }
    }
    let mut out = String::with_capacity(template.len() + instruction.len() + last_response.len());
    let mut rest = template;
    loop {
        let next = PLACEHOLDERS
            .iter()
            .filter_map(|p| rest.find(p).map(|i| (i, *p)))
            .min_by_key(|(i, _)| *i);
        match next {
            None => {
                out.push_str(rest);
                break;
            }
            Some((i, p)) => {
                out.push_str(&rest[..i]);
                out.push_str(match p {
                    "<last_response>" => last_response,
                    "<agent_name>" => agent_name,
                    _ => instruction,
                });
                rest = &rest[i + p.len()..];
            }
        }
    }
    Ok(out.trim().to_string())
}

fn past_input(turn: &TurnRecord, config: &AutogramConfig) -> Result<String, LlmError> {
    let after_user = !turn.user_reply.is_empty();
    Ok(match (turn.node_action, after_user) {
        (ActionKind::Thought, true) => {
            fill_template(&config.instruction_template, &turn.user_reply, &config.agent_name, &turn.instruction_rendered)?
        }
        (_, true) => turn.user_reply.clone(),
        (_, false) => turn.instruction_rendered.clone(),
    })
}

/// Chat-completion prompt for a chat or thought node with the given
/// (already rendered) instruction.
pub fn build_chat_prompt(memory: &MemoryObject, instruction: &str, config: &AutogramConfig) -> Result<ChatPrompt, LlmError> {
    let turns = memory.visible_turns();
    build_chat_prompt_from(&turns, memory.pending_user_reply.as_deref(), &memory.current_initial_prompt, instruction, config)
}

pub fn build_chat_prompt_from(
    turns: &[&TurnRecord],
    pending_user_reply: Option<&str>,
    initial_prompt: &str,
    instruction: &str,
    config: &AutogramConfig,
) -> Result<ChatPrompt, LlmError> {
    let mut inputs = Vec::with_capacity(turns.len() + 1);
    let mut outputs = Vec::with_capacity(turns.len());
    for t in turns.iter().filter(|t| t.node_action.is_chat() || t.node_action == ActionKind::Thought) {
        inputs.push(past_input(t, config)?);
        outputs.push(t.model_output.clone());
    }
    let last_response = pending_user_reply.unwrap_or("");
    let mut last = fill_template(&config.instruction_template, last_response, &config.agent_name, instruction)?;
    let reply_start = config.reply_start();
    if config.reply_start_type == ReplyStartType::Suffix && !reply_start.is_empty() {
        last.push('\n');
        last.push_str(&reply_start);
    }
    inputs.push(last);
    if !initial_prompt.is_empty() {
        inputs[0] = format!("{initial_prompt}\n\n{}", inputs[0]);
    }
    Ok(ChatPrompt {
        inputs,
        outputs,
        reply_start,
        start_type: config.reply_start_type,
        initial_prompt: initial_prompt.to_string(),
    })
}

/// Conversation so far as one block of `User:` / `<agent>:` lines.
pub fn history_text(turns: &[&TurnRecord], pending_user_reply: Option<&str>, agent_name: &str) -> String {
    let mut lines = Vec::new();
    for t in turns {
        if !t.user_reply.is_empty() {
            lines.push(format!("User: {}", t.user_reply));
        }
        if t.is_reply_to_user {
            lines.push(format!("{agent_name}: {}", t.model_output));
        }
    }
    if let Some(u) = pending_user_reply {
        lines.push(format!("User: {u}"));
    }
    lines.join("\n")
}

pub fn build_classifier_prompt(
    memory: &MemoryObject,
    question: &str,
    choices: &[String],
    config: &AutogramConfig,
) -> Result<ClassifierPrompt, LlmError> {
    let turns = memory.visible_turns();
    Ok(ClassifierPrompt {
        history_text: history_text(&turns, memory.pending_user_reply.as_deref(), &config.agent_name),
        mc_text: format_mc(question, choices)?,
        num_choices: choices.len(),
    })
}

/// Prompt for the userbot: the conversation so far followed by the
/// user-side instruction for the sampled transition.
pub fn build_userbot_prompt(memory: &MemoryObject, instruction: &str, config: &AutogramConfig) -> ChatPrompt {
    let turns = memory.visible_turns();
    let history = history_text(&turns, None, &config.agent_name);
    let mut input = if history.is_empty() { String::new() } else { format!("{history}\n\n") };
    input.push_str(&format!("Instruction for User: {instruction}\nUser's reply:"));
    ChatPrompt {
        inputs: vec![input],
        outputs: Vec::new(),
        reply_start: "User's reply:".into(),
        start_type: ReplyStartType::Suffix,
        initial_prompt: String::new(),
    }
}
