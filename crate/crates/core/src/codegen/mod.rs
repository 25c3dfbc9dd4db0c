//! Code-as-hyperparameter tuning: the model writes a function that builds a
//! model and optimizer, then tunes it by emitting calls to that function.

mod runner;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use runner::{DefineError, NdjsonRunner, RunError, TrainerRunner};

use crate::llm_client::{ChatClient, CompletionRequest, CompletionResponse, LlmError, Message, DEFAULT_MODEL};
use crate::llm_proposer::parse_response;
use crate::pyfmt;

pub const FUNCTION_NAME: &str = "make_model_and_optimizer";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub problem_description: String,
    pub in_features: usize,
    #[serde(rename = "X_columns")]
    pub x_columns: Vec<String>,
    pub y_columns: Vec<String>,
    pub data_path: PathBuf,
}

impl DatasetDescriptor {
    pub fn check(&self) -> Result<(), CodegenError> {
        if self.in_features != self.x_columns.len() {
            return Err(CodegenError::Descriptor(format!(
                "in_features is {} but {} X_columns are listed",
                self.in_features,
                self.x_columns.len()
            )));
        }
        if self.y_columns.is_empty() {
            return Err(CodegenError::Descriptor("y_columns is empty".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CodegenError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CodegenError::Descriptor(format!("{}: {e}", path.display())))?;
        let d: Self = serde_json::from_str(&text)
            .map_err(|e| CodegenError::Descriptor(format!("{}: {e}", path.display())))?;
        d.check()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgType {
    Float,
    Int,
    Bool,
    Str,
}

impl ArgType {
    fn json_type(self) -> &'static str {
        match self {
            ArgType::Float => "number",
            ArgType::Int => "integer",
            ArgType::Bool => "boolean",
            ArgType::Str => "string",
        }
    }

    fn accepts(self, v: &Value) -> bool {
        match self {
            ArgType::Float => v.is_number(),
            ArgType::Int => v.is_i64() || v.is_u64() || v.as_f64().is_some_and(|f| f.fract() == 0.0),
            ArgType::Bool => v.is_boolean(),
            ArgType::Str => v.is_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ArgType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedProgram {
    pub reasoning: String,
    pub code: String,
    pub function_name: String,
    #[serde(default)]
    pub arg_specs: Vec<ArgSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainFeedback {
    pub train_losses: Vec<f64>,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProgramError {
    #[error("NoCodeBlock: the response has no ```python code block")]
    NoCodeBlock,
    #[error("WrongFunctionName: the code does not define `{FUNCTION_NAME}`")]
    WrongFunctionName,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CodegenError {
    #[error("invalid dataset descriptor: {0}")]
    Descriptor(String),
    #[error("SessionFailed: no usable program after {attempts} generations; last error: {last_error}")]
    SessionFailed { attempts: usize, last_error: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl CodegenError {
    pub fn kind(&self) -> &'static str {
        match self {
            CodegenError::Descriptor(_) => "ConfigError",
            CodegenError::SessionFailed { .. } => "SessionFailed",
            CodegenError::Llm(e) => e.kind(),
        }
    }
}

macro_rules! asset {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/templates/", $name, ".txt")).to_string()
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodegenTemplates {
    pub initial: String,
    pub tuning: String,
    pub feedback: String,
    pub run_error: String,
    pub regenerate: String,
    pub bad_call: String,
    pub json_call: String,
}

impl Default for CodegenTemplates {
    fn default() -> Self {
        Self {
            initial: asset!("codegen_initial"),
            tuning: asset!("codegen_tuning"),
            feedback: asset!("codegen_feedback"),
            run_error: asset!("codegen_run_error"),
            regenerate: asset!("codegen_regenerate"),
            bad_call: asset!("codegen_bad_call"),
            json_call: asset!("codegen_json_call"),
        }
    }
}

impl CodegenTemplates {
    pub fn initial_prompt(&self, d: &DatasetDescriptor) -> String {
        self.initial
            .replace("{problem_description}", &d.problem_description)
            .replace("{in_features}", &d.in_features.to_string())
            .replace("{X_columns}", &pyfmt::str_list_repr(&d.x_columns))
            .replace("{target}", d.y_columns.first().map_or("", String::as_str))
    }

    pub fn tuning_prompt(&self, budget: usize) -> String {
        self.tuning.replace("{search_budget}", &budget.to_string())
    }

    pub fn feedback_message(&self, fb: &TrainFeedback) -> String {
        let losses: Vec<String> = fb.train_losses.iter().map(|l| pyfmt::fixed(*l, 3)).collect();
        self.feedback
            .replace("{train_losses}", &losses.join(", "))
            .replace("{val_loss}", &pyfmt::fixed(fb.val_loss, 3))
    }

    pub fn run_error_message(&self, error: &str) -> String {
        self.run_error.replace("{error}", error)
    }

    pub fn regenerate_message(&self, error: &str) -> String {
        self.regenerate.replace("{error}", error)
    }

    pub fn bad_call_message(&self, error: &str) -> String {
        self.bad_call.replace("{error}", error)
    }
}

/// Splits a `reasoning: ... code: ```python ...```` reply.
pub fn extract_program(text: &str) -> Result<GeneratedProgram, ProgramError> {
    let fence = text.find("```").ok_or(ProgramError::NoCodeBlock)?;
    let body_start = text[fence..].find('\n').map(|i| fence + i + 1).ok_or(ProgramError::NoCodeBlock)?;
    let body_len = text[body_start..].find("```").ok_or(ProgramError::NoCodeBlock)?;
    let code = text[body_start..body_start + body_len].trim_end().to_string();
    if code.trim().is_empty() {
        return Err(ProgramError::NoCodeBlock);
    }
    if !code.contains(&format!("def {FUNCTION_NAME}(")) {
        return Err(ProgramError::WrongFunctionName);
    }
    let head = &text[..fence];
    let lower = head.to_ascii_lowercase();
    let reasoning = match lower.find("reasoning:") {
        Some(r) => {
            let start = r + "reasoning:".len();
            let end = lower[start..].rfind("code:").map_or(head.len(), |c| start + c);
            head[start..end].trim().to_string()
        }
        None => String::new(),
    };
    Ok(GeneratedProgram { reasoning, code, function_name: FUNCTION_NAME.to_string(), arg_specs: Vec::new() })
}

/// Function-calling tool definition derived from the introspected arguments.
pub fn tool_schema(specs: &[ArgSpec]) -> Value {
    let mut props = Map::new();
    let mut required = Vec::new();
    for s in specs {
        props.insert(s.name.clone(), json!({"type": s.ty.json_type()}));
        if s.default.is_none() {
            required.push(Value::from(s.name.clone()));
        }
    }
    json!({
        "type": "function",
        "function": {
            "name": FUNCTION_NAME,
            "description": "Create the model and optimizer with the given hyperparameters.",
            "parameters": {"type": "object", "properties": props, "required": required}
        }
    })
}

/// Checks a call's name and arguments against the introspected signature.
pub fn validate_call(name: &str, arguments: &Value, specs: &[ArgSpec]) -> Result<Map<String, Value>, String> {
    if name != FUNCTION_NAME {
        return Err(format!("unknown function `{name}`"));
    }
    let args = arguments.as_object().ok_or_else(|| format!("arguments must be an object, got {arguments}"))?;
    let mut errors = Vec::new();
    for key in args.keys() {
        if !specs.iter().any(|s| &s.name == key) {
            errors.push(format!("unexpected argument `{key}`"));
        }
    }
    for s in specs {
        match args.get(&s.name) {
            Some(v) if !s.ty.accepts(v) => {
                errors.push(format!("argument `{}` must be of type {:?}, got {v}", s.name, s.ty).to_lowercase())
            }
            None if s.default.is_none() => errors.push(format!("missing argument `{}`", s.name)),
            _ => {}
        }
    }
    if errors.is_empty() {
        Ok(args.clone())
    } else {
        Err(errors.join("; "))
    }
}

/// A call taken from a tool-call response, or from a JSON object in text.
fn read_call(resp: &CompletionResponse) -> Result<(String, Value), String> {
    if let Some(call) = &resp.tool_call {
        let args = serde_json::from_str(&call.arguments).map_err(|e| format!("arguments are not valid JSON: {e}"))?;
        return Ok((call.name.clone(), args));
    }
    let parsed = parse_response(&resp.text).map_err(|e| e.to_string())?;
    let obj = parsed.config_raw;
    let name = obj.get("name").and_then(Value::as_str).ok_or("expected a JSON object with `name` and `arguments`")?;
    Ok((name.to_string(), obj.get("arguments").cloned().unwrap_or(Value::Object(Map::new()))))
}

fn default_budget() -> usize {
    5
}

fn default_regen() -> usize {
    3
}

fn default_epochs() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_model() -> String {
    DEFAULT_MODEL.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodegenSettings {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Re-generations allowed after the first program is rejected.
    #[serde(default = "default_regen")]
    pub max_regen: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Use function calling; otherwise ask for a JSON call object in text.
    #[serde(default = "default_true")]
    pub use_tools: bool,
}

impl Default for CodegenSettings {
    fn default() -> Self {
        Self {
            model: default_model(),
            temperature: 0.0,
            budget: default_budget(),
            max_regen: default_regen(),
            epochs: default_epochs(),
            seed: 0,
            use_tools: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodegenTrial {
    pub index: usize,
    pub response: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arguments: Option<Map<String, Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<TrainFeedback>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Set when a result carries no per-epoch losses.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub anomalous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodegenSession {
    pub dataset: DatasetDescriptor,
    pub settings: CodegenSettings,
    pub program: GeneratedProgram,
    pub regenerations: usize,
    pub trials: Vec<CodegenTrial>,
    pub transcript: Vec<Message>,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

impl CodegenSession {
    /// Trial with the lowest validation loss (earliest on ties).
    pub fn best(&self) -> Option<&CodegenTrial> {
        self.trials
            .iter()
            .filter(|t| t.feedback.is_some())
            .fold(None, |best: Option<&CodegenTrial>, t| match best {
                Some(b) if b.feedback.as_ref().unwrap().val_loss <= t.feedback.as_ref().unwrap().val_loss => Some(b),
                _ => Some(t),
            })
    }

    /// Running minimum of the validation loss, `None` until a run succeeds.
    pub fn running_best(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.trials
            .iter()
            .map(|t| {
                if let Some(fb) = &t.feedback {
                    best = Some(best.map_or(fb.val_loss, |b: f64| b.min(fb.val_loss)));
                }
                best
            })
            .collect()
    }
}

struct Chat<'a> {
    client: &'a dyn ChatClient,
    settings: &'a CodegenSettings,
    transcript: Vec<Message>,
    tokens_in: u64,
    tokens_out: u64,
}

impl Chat<'_> {
    fn ask(&mut self, tools: Option<Value>) -> Result<CompletionResponse, LlmError> {
        let mut req = CompletionRequest::new(self.settings.model.clone(), self.settings.temperature, self.transcript.clone());
        if let Some(tool) = tools {
            req.tools = Some(vec![tool]);
            req.tool_choice = Some(json!({"type": "function", "function": {"name": FUNCTION_NAME}}));
        }
        let resp = self.client.complete(&req)?;
        self.tokens_in += resp.tokens_in;
        self.tokens_out += resp.tokens_out;
        Ok(resp)
    }
}

/// Generates and validates a program, then runs `settings.budget` tuning
/// calls against `runner`, feeding losses and errors back to the model.
pub fn run_codegen_session(
    client: &dyn ChatClient,
    runner: &mut dyn TrainerRunner,
    dataset: &DatasetDescriptor,
    settings: &CodegenSettings,
    templates: &CodegenTemplates,
) -> Result<CodegenSession, CodegenError> {
    dataset.check()?;
    let mut chat = Chat { client, settings, transcript: vec![Message::user(templates.initial_prompt(dataset))], tokens_in: 0, tokens_out: 0 };

    let mut program = None;
    let mut last_error = String::new();
    let mut generations = 0;
    while generations <= settings.max_regen {
        generations += 1;
        let resp = chat.ask(None)?;
        chat.transcript.push(Message::assistant(resp.text.clone()));
        let outcome = extract_program(&resp.text).map_err(|e| e.to_string()).and_then(|mut p| {
            runner.define(&p.code).map_err(|e| e.to_string()).map(|specs| {
                p.arg_specs = specs;
                p
            })
        });
        match outcome {
            Ok(p) => {
                program = Some(p);
                break;
            }
            Err(e) => {
                chat.transcript.push(Message::user(templates.regenerate_message(&e)));
                last_error = e;
            }
        }
    }
    let program = program.ok_or(CodegenError::SessionFailed { attempts: generations, last_error })?;

    let with_format = |text: String| {
        if settings.use_tools {
            text
        } else {
            format!("{text}\n\n{}", templates.json_call)
        }
    };
    let tool = settings.use_tools.then(|| tool_schema(&program.arg_specs));
    chat.transcript.push(Message::user(with_format(templates.tuning_prompt(settings.budget))));

    let mut trials = Vec::with_capacity(settings.budget);
    for index in 1..=settings.budget {
        let mut call = None;
        let mut response = String::new();
        let mut call_error = String::new();
        for attempt in 0..2 {
            let resp = chat.ask(tool.clone())?;
            let outcome = read_call(&resp).and_then(|(name, args)| {
                response = json!({"name": name, "arguments": args}).to_string();
                validate_call(&name, &args, &program.arg_specs)
            });
            if resp.tool_call.is_none() {
                response = resp.text.clone();
            }
            chat.transcript.push(Message::assistant(response.clone()));
            match outcome {
                Ok(args) => {
                    call = Some(args);
                    break;
                }
                Err(e) => {
                    call_error = e;
                    if attempt == 0 {
                        chat.transcript.push(Message::user(with_format(templates.bad_call_message(&call_error))));
                    }
                }
            }
        }

        let Some(args) = call else {
            chat.transcript.push(Message::user(with_format(templates.bad_call_message(&call_error))));
            trials.push(CodegenTrial {
                index,
                response,
                arguments: None,
                feedback: None,
                error: Some(format!("invalid call: {call_error}")),
                anomalous: false,
            });
            continue;
        };
        match runner.run(&args, settings.epochs, settings.seed) {
            Ok(fb) => {
                chat.transcript.push(Message::user(with_format(templates.feedback_message(&fb))));
                let anomalous = fb.train_losses.is_empty();
                trials.push(CodegenTrial { index, response, arguments: Some(args), feedback: Some(fb), error: None, anomalous });
            }
            Err(e) => {
                let text = e.to_string();
                chat.transcript.push(Message::user(with_format(templates.run_error_message(&text))));
                trials.push(CodegenTrial { index, response, arguments: Some(args), feedback: None, error: Some(text), anomalous: false });
            }
        }
    }

    Ok(CodegenSession {
        dataset: dataset.clone(),
        settings: settings.clone(),
        program,
        regenerations: generations - 1,
        trials,
        transcript: chat.transcript,
        tokens_in: chat.tokens_in,
        tokens_out: chat.tokens_out,
    })
}
