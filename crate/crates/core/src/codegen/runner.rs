use std::path::PathBuf;
use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{ArgSpec, TrainFeedback};
use crate::process::{NdjsonProcess, ProcessFailure};

/// Why a `define` request was refused.
#[derive(Debug, Clone, PartialEq)]
pub struct DefineError {
    pub stage: String,
    pub message: String,
}

impl std::fmt::Display for DefineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.stage, self.message)
    }
}

/// Why a `run` request produced no result. The text is shown to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub stage: String,
    pub message: String,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.stage, self.message)
    }
}

/// The training side of a codegen session.
pub trait TrainerRunner {
    fn define(&mut self, code: &str) -> Result<Vec<ArgSpec>, DefineError>;
    fn run(&mut self, arguments: &Map<String, Value>, epochs: usize, seed: u64) -> Result<TrainFeedback, RunError>;
}

/// A trainer-runner subprocess. After a crash or timeout the process is
/// restarted and the last accepted code is defined again before the next run.
pub struct NdjsonRunner {
    process: NdjsonProcess,
    define_timeout: Duration,
    run_timeout: Duration,
    code: Option<String>,
    defined: bool,
}

impl NdjsonRunner {
    pub fn new(command: Vec<String>, workdir: Option<PathBuf>, run_timeout: Duration) -> Self {
        Self {
            process: NdjsonProcess::new(command, workdir),
            define_timeout: Duration::from_secs(60),
            run_timeout,
            code: None,
            defined: false,
        }
    }

    pub fn with_define_timeout(mut self, timeout: Duration) -> Self {
        self.define_timeout = timeout;
        self
    }

    fn failure(&mut self, stage: &str, f: ProcessFailure) -> (String, String) {
        if !matches!(f, ProcessFailure::Protocol { .. }) {
            self.defined = false;
        }
        match f {
            ProcessFailure::Timeout(d) => ("timeout".into(), format!("run exceeded the time limit of {} s", d.as_secs_f64())),
            other => (stage.to_string(), other.to_string()),
        }
    }
}

fn remote_error(v: &Value) -> Option<(String, String)> {
    (v.get("type")?.as_str()? == "error").then(|| {
        (
            v.get("stage").and_then(Value::as_str).unwrap_or("unknown").to_string(),
            v.get("message").and_then(Value::as_str).unwrap_or("").to_string(),
        )
    })
}

fn parse_arg_specs(v: &Value) -> Result<Vec<ArgSpec>, String> {
    if v.get("type").and_then(Value::as_str) != Some("defined") {
        return Err(format!("unexpected response {v}"));
    }
    let specs = v.get("arg_specs").cloned().ok_or("`defined` without arg_specs")?;
    serde_json::from_value(specs).map_err(|e| e.to_string())
}

fn parse_feedback(v: &Value) -> Result<TrainFeedback, String> {
    if v.get("type").and_then(Value::as_str) != Some("result") {
        return Err(format!("unexpected response {v}"));
    }
    let fb = TrainFeedback {
        train_losses: v
            .get("train_losses")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default(),
        val_loss: v.get("val_loss").and_then(Value::as_f64).ok_or("result without numeric val_loss")?,
    };
    if !fb.val_loss.is_finite() || fb.train_losses.iter().any(|l| !l.is_finite()) {
        return Err(format!("non-finite loss in {v}"));
    }
    Ok(fb)
}

impl TrainerRunner for NdjsonRunner {
    fn define(&mut self, code: &str) -> Result<Vec<ArgSpec>, DefineError> {
        self.defined = false;
        let resp = self
            .process
            .request(&json!({"type": "define", "code": code}), self.define_timeout)
            .map_err(|f| {
                let (stage, message) = self.failure("define", f);
                DefineError { stage, message }
            })?;
        if let Some((stage, message)) = remote_error(&resp) {
            return Err(DefineError { stage, message });
        }
        let specs = parse_arg_specs(&resp).map_err(|message| DefineError { stage: "protocol".into(), message })?;
        self.code = Some(code.to_string());
        self.defined = true;
        Ok(specs)
    }

    fn run(&mut self, arguments: &Map<String, Value>, epochs: usize, seed: u64) -> Result<TrainFeedback, RunError> {
        if !self.defined {
            let code = self.code.clone().ok_or(RunError { stage: "define".into(), message: "no code defined".into() })?;
            self.define(&code).map_err(|e| RunError { stage: e.stage, message: e.message })?;
        }
        let req = json!({"type": "run", "arguments": arguments, "epochs": epochs, "seed": seed});
        let resp = self.process.request(&req, self.run_timeout).map_err(|f| {
            let (stage, message) = self.failure("runtime", f);
            RunError { stage, message }
        })?;
        if let Some((stage, message)) = remote_error(&resp) {
            return Err(RunError { stage, message });
        }
        parse_feedback(&resp).map_err(|message| RunError { stage: "protocol".into(), message })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feedback_parsing() {
        let fb = parse_feedback(&json!({"type": "result", "train_losses": [0.5, 0.25], "val_loss": 0.1})).unwrap();
        assert_eq!(fb.train_losses, vec![0.5, 0.25]);
        assert!(parse_feedback(&json!({"type": "result"})).is_err());
        assert!(parse_feedback(&json!({"type": "defined"})).is_err());
    }

    #[test]
    fn arg_spec_parsing() {
        let v = json!({"type": "defined", "arg_specs": [
            {"name": "lr", "type": "float", "default": 0.01},
            {"name": "width", "type": "int"}
        ]});
        let specs = parse_arg_specs(&v).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[1].default, None);
        assert_eq!(remote_error(&json!({"type": "error", "stage": "parse", "message": "bad"})),
            Some(("parse".to_string(), "bad".to_string())));
    }
}
