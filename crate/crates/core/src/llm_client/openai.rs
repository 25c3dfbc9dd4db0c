use std::time::Duration;

use serde_json::Value;

use super::{
    estimate_tokens, ChatClient, CompletionRequest, CompletionResponse, LlmError, ToolCall,
    DEFAULT_BASE_URL, ENV_API_KEY, ENV_BASE_URL,
};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP POST, swappable in tests.
pub trait HttpTransport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpReply, String>;
}

/// Blocking transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl HttpTransport for UreqTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpReply, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

/// Exponential backoff: `base * factor^(attempt - 1)` between attempts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { base: Duration::from_secs(1), factor: 2.0, max_attempts: 5 }
    }
}

impl RetryPolicy {
    /// Delay after the given failed attempt (1-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(attempt.saturating_sub(1) as i32))
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct OpenAiClient {
    base_url: String,
    api_key: String,
    transport: Box<dyn HttpTransport>,
    retry: RetryPolicy,
    sleep: Sleeper,
}

impl OpenAiClient {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, transport: Box<dyn HttpTransport>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            transport,
            retry: RetryPolicy::default(),
            sleep: Box::new(std::thread::sleep),
        }
    }

    /// Reads `LLM_API_KEY` (required) and `LLM_BASE_URL`.
    pub fn from_env() -> Result<Self, LlmError> {
        let key = std::env::var(ENV_API_KEY)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::Config(format!("{ENV_API_KEY} is not set")))?;
        let base = std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Ok(Self::new(base, key, Box::new(UreqTransport::default())))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, request: &CompletionRequest, body: &str) -> Result<CompletionResponse, LlmError> {
        let headers = vec![("Authorization".to_string(), format!("Bearer {}", self.api_key))];
        let reply = self
            .transport
            .post_json(&self.endpoint(), &headers, body)
            .map_err(LlmError::Transport)?;
        match reply.status {
            200..=299 => decode(request, &reply.body),
            429 => Err(LlmError::RateLimited { payload: reply.body }),
            401 | 403 => Err(LlmError::Auth { status: reply.status, payload: reply.body }),
            500..=599 => Err(LlmError::Server { status: reply.status, payload: reply.body }),
            status => Err(LlmError::Api { status, payload: reply.body }),
        }
    }
}

fn decode(request: &CompletionRequest, body: &str) -> Result<CompletionResponse, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Decode(format!("{e}: {body}")))?;
    let choice = v
        .pointer("/choices/0")
        .ok_or_else(|| LlmError::Decode(format!("no choices in {body}")))?;
    let text = choice.pointer("/message/content").and_then(Value::as_str).unwrap_or("").to_string();
    let tool_call = choice.pointer("/message/tool_calls/0/function").map(|f| ToolCall {
        name: f.get("name").and_then(Value::as_str).unwrap_or("").to_string(),
        arguments: match f.get("arguments") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => "{}".to_string(),
        },
    });
    let finish_reason = choice.get("finish_reason").and_then(Value::as_str).unwrap_or("").to_string();
    let usage = v.get("usage").and_then(|u| {
        Some((u.get("prompt_tokens")?.as_u64()?, u.get("completion_tokens")?.as_u64()?))
    });
    let (tokens_in, tokens_out, usage_estimated) = match usage {
        Some((i, o)) => (i, o, false),
        None => {
            let out_chars = text.chars().count()
                + tool_call.as_ref().map_or(0, |t| t.name.len() + t.arguments.chars().count());
            (estimate_tokens(request.prompt_chars()), estimate_tokens(out_chars), true)
        }
    };
    Ok(CompletionResponse { text, tool_call, tokens_in, tokens_out, finish_reason, usage_estimated, attempts: 1 })
}

impl ChatClient for OpenAiClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        request.check()?;
        let body = request.to_json();
        let mut attempt = 1;
        loop {
            match self.attempt(request, &body) {
                Ok(mut resp) => {
                    resp.attempts = attempt;
                    return Ok(resp);
                }
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    (self.sleep)(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::Message;
    use std::sync::{Arc, Mutex};

    struct FakeTransport {
        replies: Mutex<Vec<HttpReply>>,
        calls: Arc<Mutex<Vec<String>>>,
    }

    impl HttpTransport for FakeTransport {
        fn post_json(&self, url: &str, headers: &[(String, String)], body: &str) -> Result<HttpReply, String> {
            assert!(url.ends_with("/chat/completions"));
            assert!(headers.iter().any(|(k, v)| k == "Authorization" && v == "Bearer sk-test"));
            self.calls.lock().unwrap().push(body.to_string());
            let mut r = self.replies.lock().unwrap();
            if r.is_empty() {
                return Err("no more replies".into());
            }
            Ok(r.remove(0))
        }
    }

    fn ok_body() -> String {
        r#"{"choices":[{"message":{"role":"assistant","content":" {\"C\": 1.0} "},"finish_reason":"stop"}],
            "usage":{"prompt_tokens":100,"completion_tokens":7,"total_tokens":107}}"#
            .to_string()
    }

    fn client(replies: Vec<HttpReply>) -> (OpenAiClient, Arc<Mutex<Vec<Duration>>>, Arc<Mutex<Vec<String>>>) {
        let slept = Arc::new(Mutex::new(Vec::new()));
        let calls = Arc::new(Mutex::new(Vec::new()));
        let s = slept.clone();
        let c = OpenAiClient::new(
            "http://localhost:1/v1/",
            "sk-test",
            Box::new(FakeTransport { replies: Mutex::new(replies), calls: calls.clone() }),
        )
        .with_sleeper(move |d| s.lock().unwrap().push(d));
        (c, slept, calls)
    }

    fn req() -> CompletionRequest {
        CompletionRequest::new("gpt-4", 0.0, vec![Message::user("hi")])
    }

    #[test]
    fn retries_rate_limits_with_backoff() {
        let rl = HttpReply { status: 429, body: r#"{"error":{"message":"slow down"}}"#.into() };
        let (c, slept, calls) = client(vec![rl.clone(), rl, HttpReply { status: 200, body: ok_body() }]);
        let resp = c.complete(&req()).unwrap();
        assert_eq!(resp.attempts, 3);
        assert_eq!(resp.text, " {\"C\": 1.0} ");
        assert_eq!((resp.tokens_in, resp.tokens_out, resp.usage_estimated), (100, 7, false));
        assert_eq!(*slept.lock().unwrap(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
        assert_eq!(calls.lock().unwrap().len(), 3);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let (c, slept, calls) = client(vec![HttpReply { status: 401, body: "bad key".into() }]);
        let err = c.complete(&req()).unwrap_err();
        assert_eq!(err, LlmError::Auth { status: 401, payload: "bad key".into() });
        assert!(slept.lock().unwrap().is_empty());
        assert_eq!(calls.lock().unwrap().len(), 1);
    }

    #[test]
    fn gives_up_after_five_attempts() {
        let e = HttpReply { status: 503, body: "down".into() };
        let (c, slept, _) = client(vec![e.clone(), e.clone(), e.clone(), e.clone(), e.clone(), e]);
        let err = c.complete(&req()).unwrap_err();
        assert_eq!(err, LlmError::Server { status: 503, payload: "down".into() });
        let secs: Vec<u64> = slept.lock().unwrap().iter().map(|d| d.as_secs()).collect();
        assert_eq!(secs, vec![1, 2, 4, 8]);
    }

    #[test]
    fn missing_usage_is_estimated() {
        let body = r#"{"choices":[{"message":{"content":"abcdefgh"},"finish_reason":"stop"}]}"#;
        let (c, _, _) = client(vec![HttpReply { status: 200, body: body.into() }]);
        let resp = c.complete(&req()).unwrap();
        assert!(resp.usage_estimated);
        assert_eq!((resp.tokens_in, resp.tokens_out), (1, 2));
    }

    #[test]
    fn tool_calls_decoded() {
        let body = r#"{"choices":[{"message":{"content":null,"tool_calls":[{"id":"c1","type":"function",
            "function":{"name":"make_model_and_optimizer","arguments":"{\"lr\": 0.01}"}}]},"finish_reason":"tool_calls"}],
            "usage":{"prompt_tokens":5,"completion_tokens":5}}"#;
        let (c, _, _) = client(vec![HttpReply { status: 200, body: body.into() }]);
        let resp = c.complete(&req()).unwrap();
        assert_eq!(resp.text, "");
        let call = resp.tool_call.unwrap();
        assert_eq!(call.name, "make_model_and_optimizer");
        assert_eq!(call.arguments, r#"{"lr": 0.01}"#);
    }

    #[test]
    fn request_body_passes_temperature() {
        let (c, _, calls) = client(vec![HttpReply { status: 200, body: ok_body() }]);
        let mut r = req();
        r.temperature = 0.1;
        c.complete(&r).unwrap();
        let sent: Value = serde_json::from_str(&calls.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["temperature"], 0.1);
    }
}
