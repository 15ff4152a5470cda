use base64::Engine;
use serde_json::{json, Value};

use super::{
    AssistantTurn, ChatMessage, ChatProvider, Embedder, FinishReason, LlmError, ProviderConfig,
    ProviderIdentity, Role, ToolCallRequest,
};
use crate::registry::ToolSpec;

/// Client for any endpoint exposing `POST {base_url}/chat/completions` and
/// `POST {base_url}/embeddings`.
#[derive(Debug, Clone)]
pub struct OpenAiCompatible {
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl OpenAiCompatible {
    pub fn new(config: ProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn credential(&self) -> Result<Option<String>, LlmError> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| LlmError::MissingCredential(var.clone())),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, LlmError> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let mut req = self.agent.post(&url);
        if let Some(key) = self.credential()? {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Http {
                status,
                body: text.chars().take(2000).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| LlmError::Unparseable(e.to_string()))
    }
}

fn image_part(path: &std::path::Path) -> Result<Value, LlmError> {
    let bytes = std::fs::read(path)
        .map_err(|e| LlmError::InvalidConversation(format!("{}: {e}", path.display())))?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "image/png",
    };
    let data = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(json!({"type": "image_url", "image_url": {"url": format!("data:{mime};base64,{data}")}}))
}

pub(crate) fn wire_messages(messages: &[ChatMessage]) -> Result<Vec<Value>, LlmError> {
    messages
        .iter()
        .map(|m| {
            Ok(match m.role {
                Role::System => json!({"role": "system", "content": m.content}),
                Role::User if m.attachments.is_empty() => {
                    json!({"role": "user", "content": m.content})
                }
                Role::User => {
                    let mut parts = vec![json!({"type": "text", "text": m.content})];
                    for a in &m.attachments {
                        parts.push(image_part(a)?);
                    }
                    json!({"role": "user", "content": parts})
                }
                Role::Assistant => {
                    let mut msg = json!({"role": "assistant", "content": m.content});
                    if !m.tool_calls.is_empty() {
                        let calls: Vec<Value> = m
                            .tool_calls
                            .iter()
                            .map(|c| {
                                let args = match &c.arguments {
                                    Value::String(raw) => raw.clone(),
                                    other => other.to_string(),
                                };
                                json!({"id": c.id, "type": "function",
                                       "function": {"name": c.name, "arguments": args}})
                            })
                            .collect();
                        msg["tool_calls"] = Value::Array(calls);
                        if m.content.is_empty() {
                            msg["content"] = Value::Null;
                        }
                    }
                    msg
                }
                Role::Tool => json!({
                    "role": "tool",
                    "tool_call_id": m.tool_call_id,
                    "content": m.content,
                }),
            })
        })
        .collect()
}

pub(crate) fn parse_completion(body: &Value) -> Result<AssistantTurn, LlmError> {
    let choice = body
        .pointer("/choices/0")
        .ok_or_else(|| LlmError::Unparseable("no choices in response".into()))?;
    let message = choice
        .get("message")
        .ok_or_else(|| LlmError::Unparseable("choice has no message".into()))?;
    let text = message
        .get("content")
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .map(str::to_owned);
    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for call in calls {
            let id = call.get("id").and_then(Value::as_str).unwrap_or_default();
            let name = call
                .pointer("/function/name")
                .and_then(Value::as_str)
                .unwrap_or_default();
            let raw = call
                .pointer("/function/arguments")
                .and_then(Value::as_str)
                .unwrap_or("{}");
            tool_calls.push(ToolCallRequest::from_raw(id, name, raw));
        }
    }
    let finish = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") | None => FinishReason::Stop,
        Some("tool_calls" | "function_call") => FinishReason::ToolCalls,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    Ok(AssistantTurn {
        text,
        tool_calls,
        finish,
    })
}

impl ChatProvider for OpenAiCompatible {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
    ) -> Result<AssistantTurn, LlmError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": wire_messages(messages)?,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        if !tools.is_empty() {
            body["tools"] = tools
                .iter()
                .map(|t| {
                    json!({"type": "function", "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters_schema(),
                    }})
                })
                .collect();
        }
        let resp = self.post("chat/completions", &body)?;
        parse_completion(&resp)
    }

    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity {
            kind: "openai-compatible".into(),
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        }
    }

    fn supports_vision(&self) -> bool {
        true
    }
}

impl Embedder for OpenAiCompatible {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let model = self
            .config
            .embedding_model
            .clone()
            .unwrap_or_else(|| "text-embedding-3-small".into());
        let resp = self.post("embeddings", &json!({"model": model, "input": texts}))?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::Unparseable("embedding response has no data".into()))?;
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .map(|i| i as usize)
                .unwrap_or(pos);
            let vector: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| LlmError::Unparseable("embedding item without vector".into()))?
                .iter()
                .filter_map(Value::as_f64)
                .collect();
            if index < out.len() {
                out[index] = vector;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tool_call_completion() {
        let body = json!({"choices": [{"finish_reason": "tool_calls", "message": {
            "content": null,
            "tool_calls": [{"id": "c1", "type": "function", "function": {
                "name": "get_model_zoo", "arguments": "{}"}},
                {"id": "c2", "type": "function", "function": {
                "name": "x", "arguments": "{not json"}}]
        }}]});
        let turn = parse_completion(&body).unwrap();
        assert_eq!(turn.finish, FinishReason::ToolCalls);
        assert_eq!(turn.text, None);
        assert!(turn.tool_calls[0].invalid.is_none());
        assert!(turn.tool_calls[1].invalid.is_some());
    }

    #[test]
    fn wire_format_echoes_calls_and_results() {
        let call = ToolCallRequest::new("c1", "get_model_zoo", json!({}));
        let msgs = vec![
            ChatMessage::system("s"),
            ChatMessage::assistant(None, vec![call]),
            ChatMessage::tool("c1", "[]"),
        ];
        let wire = wire_messages(&msgs).unwrap();
        assert_eq!(wire[1]["tool_calls"][0]["function"]["arguments"], "{}");
        assert!(wire[1]["content"].is_null());
        assert_eq!(wire[2]["tool_call_id"], "c1");
    }

    #[test]
    fn missing_credential_is_reported() {
        let mut cfg = ProviderConfig::new("http://127.0.0.1:9", "m");
        cfg.api_key_env = Some("PHENOFLOW_TEST_SURELY_UNSET_VAR".into());
        let p = OpenAiCompatible::new(cfg);
        let err = p.complete(&[ChatMessage::system("s")], &[]).unwrap_err();
        assert!(matches!(err, LlmError::MissingCredential(_)));
    }
}
