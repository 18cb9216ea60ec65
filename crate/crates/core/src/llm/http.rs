use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::{json, Value as Json};

use super::{ChatPrompt, ClassifierPrompt, LlmBackend, LlmError};
use crate::config::{BackendSettings, SystemPromptMode};

/// Bias added to each allowed answer letter.
pub const ANSWER_LOGIT_BIAS: i64 = 100;

/// Chat-completions request body for a generation call.
pub fn build_chat_body(model: &str, prompt: &ChatPrompt, mode: SystemPromptMode, max_tokens: Option<u32>) -> Json {
    let mut messages = Vec::new();
    let mut inputs = prompt.inputs.clone();
    if mode == SystemPromptMode::System && !prompt.initial_prompt.is_empty() {
        messages.push(json!({"role": "system", "content": prompt.initial_prompt}));
        let prefix = format!("{}\n\n", prompt.initial_prompt);
        if let Some(first) = inputs.first_mut() {
            if let Some(rest) = first.strip_prefix(&prefix) {
                *first = rest.to_string();
            }
        }
    }
    for (i, input) in inputs.iter().enumerate() {
        messages.push(json!({"role": "user", "content": input}));
        if let Some(out) = prompt.outputs.get(i) {
            messages.push(json!({"role": "assistant", "content": out}));
        }
    }
    let mut body = json!({"model": model, "messages": messages});
    if let Some(m) = max_tokens {
        body["max_tokens"] = json!(m);
    }
    body
}

/// Single-token classification request with a logit bias on exactly the
/// allowed answer letters. `token_map` maps letters to token ids; letters
/// without an entry are keyed by the letter itself.
pub fn build_classifier_body(model: &str, prompt: &ClassifierPrompt, token_map: &BTreeMap<String, Json>) -> Json {
    let mut bias = serde_json::Map::new();
    for i in 0..prompt.num_choices.min(26) {
        let letter = ((b'A' + i as u8) as char).to_string();
        let key = match token_map.get(&letter) {
            Some(Json::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => letter,
        };
        bias.insert(key, json!(ANSWER_LOGIT_BIAS));
    }
    json!({
        "model": model,
        "messages": [{"role": "user", "content": prompt.text()}],
        "max_tokens": 1,
        "temperature": 0,
        "logit_bias": bias,
    })
}

pub fn parse_response(body: &Json) -> Result<String, LlmError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::MalformedResponse("no choices".into()))?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| choice.get("text"))
        .and_then(Json::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::MalformedResponse("choice has no text content".into()))
}

/// Blocking client for an OpenAI-style chat-completions endpoint.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    mode: SystemPromptMode,
    max_tokens: Option<u32>,
    token_map: BTreeMap<String, Json>,
}

impl HttpBackend {
    pub fn from_settings(s: &BackendSettings) -> Result<Self, LlmError> {
        let endpoint = s
            .endpoint
            .clone()
            .ok_or_else(|| LlmError::BackendUnavailable("http backend needs an endpoint".into()))?;
        let api_key = match &s.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| LlmError::MissingCredential(var.clone()))?),
            None => None,
        };
        let token_map = match &s.token_map_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| LlmError::BackendUnavailable(format!("token map {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| LlmError::BackendUnavailable(format!("token map: {e}")))?
            }
            None => BTreeMap::new(),
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(s.timeout_secs))
            .build()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint,
            model: s.model.clone().unwrap_or_default(),
            api_key,
            mode: s.system_prompt_mode,
            max_tokens: s.max_tokens,
            token_map,
        })
    }

    fn post(&self, body: &Json) -> Result<Json, LlmError> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::BackendUnavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::HttpError(status.as_u16()));
        }
        resp.json::<Json>().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::MalformedResponse(e.to_string())
            }
        })
    }
}

impl LlmBackend for HttpBackend {
    fn generate(&mut self, prompt: &ChatPrompt) -> Result<String, LlmError> {
        let body = build_chat_body(&self.model, prompt, self.mode, self.max_tokens);
        parse_response(&self.post(&body)?)
    }

    fn classify_raw(&mut self, prompt: &ClassifierPrompt) -> Result<String, LlmError> {
        let body = build_classifier_body(&self.model, prompt, &self.token_map);
        parse_response(&self.post(&body)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ReplyStartType;

    fn prompt() -> ChatPrompt {
        ChatPrompt {
            inputs: vec!["init\n\nhello".into(), "Instruction for Agent: x".into()],
            outputs: vec!["hi".into()],
            reply_start: "Agent's reply:".into(),
            start_type: ReplyStartType::Suffix,
            initial_prompt: "init".into(),
        }
    }

    #[test]
    fn messages_alternate() {
        let b = build_chat_body("m", &prompt(), SystemPromptMode::Inline, None);
        let roles: Vec<&str> = b["messages"].as_array().unwrap().iter().map(|m| m["role"].as_str().unwrap()).collect();
        assert_eq!(roles, ["user", "assistant", "user"]);
        assert_eq!(b["messages"][0]["content"], "init\n\nhello");
    }

    #[test]
    fn system_mode_moves_initial_prompt() {
        let b = build_chat_body("m", &prompt(), SystemPromptMode::System, Some(64));
        assert_eq!(b["messages"][0]["role"], "system");
        assert_eq!(b["messages"][1]["content"], "hello");
        assert_eq!(b["max_tokens"], 64);
    }

    #[test]
    fn classifier_bias_has_k_entries() {
        let cp = ClassifierPrompt { history_text: "User: x".into(), mc_text: "q A. a B. b C. c".into(), num_choices: 3 };
        let mut map = BTreeMap::new();
        map.insert("A".to_string(), json!(32));
        let b = build_classifier_body("m", &cp, &map);
        assert_eq!(b["max_tokens"], 1);
        let bias = b["logit_bias"].as_object().unwrap();
        assert_eq!(bias.len(), 3);
        assert!(bias.contains_key("32") && bias.contains_key("B") && bias.contains_key("C"));
    }

    #[test]
    fn parses_content() {
        let r = json!({"choices": [{"message": {"role": "assistant", "content": "B"}}]});
        assert_eq!(parse_response(&r).unwrap(), "B");
        assert!(matches!(parse_response(&json!({})), Err(LlmError::MalformedResponse(_))));
    }
}
