use std::sync::Mutex;

use super::{ChatClient, CompletionRequest, CompletionResponse, LlmError};

/// Offline client: returns canned reply `n` for call `n` and records every
/// request it receives.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    replies: Vec<Result<CompletionResponse, LlmError>>,
    state: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedClient {
    /// Text replies; token usage is estimated from character counts.
    pub fn new<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        let replies = texts
            .into_iter()
            .map(|t| Ok(CompletionResponse::text(t, 0)))
            .collect();
        Self { replies, state: Mutex::new(Vec::new()) }
    }

    pub fn from_results(replies: Vec<Result<CompletionResponse, LlmError>>) -> Self {
        Self { replies, state: Mutex::new(Vec::new()) }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.state.lock().expect("scripted client poisoned").clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("scripted client poisoned").len()
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        request.check()?;
        let mut log = self.state.lock().expect("scripted client poisoned");
        let call = log.len();
        log.push(request.clone());
        let reply = self.replies.get(call).cloned().ok_or(LlmError::ScriptExhausted { call: call + 1 })?;
        reply.map(|mut r| {
            if r.usage_estimated && r.tokens_in == 0 {
                r.tokens_in = super::estimate_tokens(request.prompt_chars());
            }
            r
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::Message;

    #[test]
    fn replays_in_order_then_exhausts() {
        let c = ScriptedClient::new(["a", "b"]);
        let req = CompletionRequest::new("m", 0.0, vec![Message::user("12345")]);
        assert_eq!(c.complete(&req).unwrap().text, "a");
        let r = c.complete(&req).unwrap();
        assert_eq!((r.text.as_str(), r.tokens_in, r.tokens_out), ("b", 2, 1));
        assert_eq!(c.complete(&req).unwrap_err(), LlmError::ScriptExhausted { call: 3 });
        assert_eq!(c.calls(), 3);
        assert_eq!(c.requests()[0], req);
    }

    #[test]
    fn scripted_errors_are_returned() {
        let c = ScriptedClient::from_results(vec![Err(LlmError::RateLimited { payload: "x".into() })]);
        let req = CompletionRequest::new("m", 0.0, vec![Message::user("q")]);
        assert_eq!(c.complete(&req).unwrap_err().kind(), "RateLimited");
    }
}
