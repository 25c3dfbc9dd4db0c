use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EvalError, EvalResult, Objective};
use crate::process::{NdjsonProcess, ProcessFailure};
use crate::space::{Config, SearchSpace};

/// Shape of the request line sent per evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ExternalRequestStyle {
    /// `{"type": "run", "config": {...}}`
    Run,
    /// `{"type": "eval", "task": "<task>", "config": {...}}`
    Eval { task: String },
}

/// A trainer process evaluating one config per request line.
#[derive(Debug)]
pub struct ExternalObjective {
    space: SearchSpace,
    process: NdjsonProcess,
    timeout: Duration,
    style: ExternalRequestStyle,
}

impl ExternalObjective {
    pub fn new(
        space: SearchSpace,
        command: Vec<String>,
        timeout: Duration,
        workdir: Option<PathBuf>,
    ) -> Self {
        Self {
            space,
            process: NdjsonProcess::new(command, workdir),
            timeout,
            style: ExternalRequestStyle::Run,
        }
    }

    pub fn with_style(mut self, style: ExternalRequestStyle) -> Self {
        self.style = style;
        self
    }

    pub fn run_external(&mut self, config: &Config) -> Result<EvalResult, EvalError> {
        let request = match &self.style {
            ExternalRequestStyle::Run => json!({"type": "run", "config": config.to_json()}),
            ExternalRequestStyle::Eval { task } => {
                json!({"type": "eval", "task": task, "config": config.to_json()})
            }
        };
        let started = Instant::now();
        let response = self.process.request(&request, self.timeout)?;
        let duration_s = started.elapsed().as_secs_f64();
        parse_result(&response, duration_s)
    }
}

fn protocol(response: &Value, reason: &str) -> EvalError {
    EvalError::Process(ProcessFailure::Protocol {
        line: response.to_string(),
        reason: reason.to_string(),
    })
}

fn parse_result(response: &Value, duration_s: f64) -> Result<EvalResult, EvalError> {
    match response.get("type").and_then(Value::as_str) {
        Some("result") => {
            let loss = response
                .get("loss")
                .or_else(|| response.get("val_loss"))
                .and_then(Value::as_f64)
                .ok_or_else(|| protocol(response, "result without numeric `loss`"))?;
            if !loss.is_finite() {
                return Err(EvalError::NonFinite(loss));
            }
            let train_losses = match response.get("train_losses") {
                None | Some(Value::Null) => None,
                Some(Value::Array(items)) => Some(
                    items
                        .iter()
                        .map(|v| v.as_f64().ok_or_else(|| protocol(response, "non-numeric train loss")))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                Some(_) => return Err(protocol(response, "`train_losses` is not a list")),
            };
            Ok(EvalResult { loss, train_losses, duration_s })
        }
        Some("error") => Err(EvalError::Remote {
            stage: response.get("stage").and_then(Value::as_str).unwrap_or("unknown").to_string(),
            message: response.get("message").and_then(Value::as_str).unwrap_or("").to_string(),
        }),
        _ => Err(protocol(response, "unexpected response type")),
    }
}

impl Objective for ExternalObjective {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, config: &Config) -> Result<EvalResult, EvalError> {
        self.run_external(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_result_lines() {
        let r = parse_result(&json!({"type": "result", "loss": 0.5, "train_losses": [1.0, 0.7]}), 0.0).unwrap();
        assert_eq!(r.loss, 0.5);
        assert_eq!(r.train_losses, Some(vec![1.0, 0.7]));
        let r = parse_result(&json!({"type": "result", "val_loss": 0.25}), 0.0).unwrap();
        assert_eq!(r.loss, 0.25);
    }

    #[test]
    fn error_and_malformed_lines() {
        let e = parse_result(&json!({"type": "error", "stage": "runtime", "message": "boom"}), 0.0).unwrap_err();
        assert_eq!(e, EvalError::Remote { stage: "runtime".into(), message: "boom".into() });
        let e = parse_result(&json!({"type": "result"}), 0.0).unwrap_err();
        assert_eq!(e.kind(), "ProtocolError");
        let e = parse_result(&json!({"type": "pong"}), 0.0).unwrap_err();
        assert_eq!(e.kind(), "ProtocolError");
    }
}
