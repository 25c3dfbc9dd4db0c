//! Chat-completion transport: OpenAI-compatible HTTP client, scripted
//! offline double, and token cost accounting.

mod cost;
mod openai;
mod scripted;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use cost::{CostLedger, CostSummary, Price};
pub use openai::{HttpReply, HttpTransport, OpenAiClient, RetryPolicy, UreqTransport};
pub use scripted::ScriptedClient;

pub const ENV_API_KEY: &str = "LLM_API_KEY";
pub const ENV_BASE_URL: &str = "LLM_BASE_URL";
pub const ENV_MODEL: &str = "LLM_MODEL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4-1106-preview";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Chat-completions request body. Field order is the wire order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_choice: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, temperature: f64, messages: Vec<Message>) -> Self {
        Self { model: model.into(), messages, temperature, tools: None, tool_choice: None, max_tokens: None }
    }

    pub fn check(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest(format!("temperature {} < 0", self.temperature)));
        }
        match self.messages.last() {
            Some(m) if m.role == Role::User => Ok(()),
            _ => Err(LlmError::InvalidRequest("messages must end with a user message".into())),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("request serialization")
    }

    /// Prompt size in characters, summed over message contents.
    pub fn prompt_chars(&self) -> usize {
        self.messages.iter().map(|m| m.content.chars().count()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    /// Arguments as the JSON text the provider returned.
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub finish_reason: String,
    /// True when usage was not reported and token counts are estimates.
    #[serde(default)]
    pub usage_estimated: bool,
    #[serde(default = "one")]
    pub attempts: u32,
}

fn one() -> u32 {
    1
}

impl CompletionResponse {
    /// A plain-text reply with estimated usage.
    pub fn text(text: impl Into<String>, prompt_chars: usize) -> Self {
        let text = text.into();
        Self {
            tokens_in: estimate_tokens(prompt_chars),
            tokens_out: estimate_tokens(text.chars().count()),
            text,
            tool_call: None,
            finish_reason: "stop".into(),
            usage_estimated: true,
            attempts: 1,
        }
    }
}

/// Fallback token estimate: one token per four characters, rounded up.
pub fn estimate_tokens(chars: usize) -> u64 {
    chars.div_ceil(4) as u64
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("LLM configuration error: {0}")]
    Config(String),
    #[error("RateLimited: {payload}")]
    RateLimited { payload: String },
    #[error("ServerError {status}: {payload}")]
    Server { status: u16, payload: String },
    #[error("AuthError {status}: {payload}")]
    Auth { status: u16, payload: String },
    #[error("API error {status}: {payload}")]
    Api { status: u16, payload: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cannot decode provider response: {0}")]
    Decode(String),
    #[error("ScriptExhausted: scripted client has no response for call {call}")]
    ScriptExhausted { call: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("UnknownModel: no price for `{0}`")]
    UnknownModel(String),
}

impl LlmError {
    pub fn kind(&self) -> &'static str {
        match self {
            LlmError::Config(_) => "ConfigError",
            LlmError::RateLimited { .. } => "RateLimited",
            LlmError::Server { .. } => "ServerError",
            LlmError::Auth { .. } => "AuthError",
            LlmError::Api { .. } => "ApiError",
            LlmError::Transport(_) => "TransportError",
            LlmError::Decode(_) => "DecodeError",
            LlmError::ScriptExhausted { .. } => "ScriptExhausted",
            LlmError::InvalidRequest(_) => "InvalidRequest",
            LlmError::UnknownModel(_) => "UnknownModel",
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::RateLimited { .. } | LlmError::Server { .. } | LlmError::Transport(_))
    }
}

/// Anything that can answer a chat-completion request.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError>;
}
