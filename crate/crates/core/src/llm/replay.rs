use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use super::{AssistantTurn, ChatMessage, ChatProvider, LlmError, ProviderIdentity};
use crate::registry::ToolSpec;

/// Serves a fixed sequence of turns regardless of what it is asked.
///
/// Every conversation it receives is kept so that fixture drift can be
/// diagnosed (and so tests can inspect what the model would have seen).
#[derive(Debug)]
pub struct ReplayProvider {
    queue: Mutex<VecDeque<AssistantTurn>>,
    served: Mutex<usize>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
    vision: bool,
}

impl ReplayProvider {
    pub fn from_turns(turns: Vec<AssistantTurn>) -> Self {
        Self {
            queue: Mutex::new(turns.into()),
            served: Mutex::new(0),
            seen: Mutex::new(Vec::new()),
            vision: true,
        }
    }

    /// Parses a JSON array of assistant turns.
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let turns: Vec<AssistantTurn> =
            serde_json::from_str(text).map_err(|e| LlmError::Fixture(e.to_string()))?;
        Ok(Self::from_turns(turns))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn without_vision(mut self) -> Self {
        self.vision = false;
        self
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("replay queue poisoned").len()
    }

    /// Conversations received so far, oldest first.
    pub fn contexts(&self) -> Vec<Vec<ChatMessage>> {
        self.seen.lock().expect("replay log poisoned").clone()
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _tools: &[ToolSpec],
    ) -> Result<AssistantTurn, LlmError> {
        self.seen
            .lock()
            .expect("replay log poisoned")
            .push(messages.to_vec());
        let mut served = self.served.lock().expect("replay counter poisoned");
        let turn = self
            .queue
            .lock()
            .expect("replay queue poisoned")
            .pop_front()
            .ok_or(LlmError::ReplayExhausted { served: *served })?;
        *served += 1;
        tracing::debug!(served = *served, "replay turn served");
        Ok(turn)
    }

    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity {
            kind: "replay".into(),
            model: "fixture".into(),
            temperature: 0.0,
            max_tokens: 0,
        }
    }

    fn supports_vision(&self) -> bool {
        self.vision
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_is_independent_of_content() {
        let turns = vec![AssistantTurn::text("a"), AssistantTurn::text("b")];
        let p = ReplayProvider::from_turns(turns.clone());
        let got1 = p.complete(&[ChatMessage::system("x")], &[]).unwrap();
        let got2 = p
            .complete(&[ChatMessage::system("completely different")], &[])
            .unwrap();
        assert_eq!(vec![got1, got2], turns);
        assert_eq!(p.contexts().len(), 2);
    }

    #[test]
    fn parses_fixture_json() {
        let p = ReplayProvider::from_json(
            r#"[{"text":"plan"},{"tool_calls":[{"id":"c1","name":"get_model_zoo","arguments":{}}],"finish":"tool_calls"}]"#,
        )
        .unwrap();
        assert_eq!(p.remaining(), 2);
        assert!(ReplayProvider::from_json("{").is_err());
    }
}
