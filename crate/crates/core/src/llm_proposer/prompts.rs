use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proposers::History;
use crate::pyfmt;
use crate::space::SearchSpace;

/// How feedback messages ask for the next config.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reasoning {
    /// Config only.
    #[default]
    Plain,
    /// An `Analysis:` line, then a `Config:` line.
    Cot,
    /// Plain request on the first feedback, the shorter wording afterwards.
    Short,
}

/// Chat keeps the whole transcript; compressed re-sends one message that
/// lists every trial so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Chat,
    Compressed,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PromptError {
    #[error("toy prompt variant {0} does not exist (0..=3)")]
    UnknownToyVariant(usize),
    #[error("toy prompts need a 2-parameter space, got {0}")]
    NotTwoDimensional(usize),
    #[error("cannot read template {name}: {message}")]
    Io { name: String, message: String },
}

pub const TOY_VARIANTS: usize = 4;

/// Message texts with `{slot}` placeholders, loaded verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub beginning: String,
    pub end: String,
    pub transition_plain: String,
    pub transition_cot: String,
    pub transition_short: String,
    pub last_try: String,
    pub expert_system: String,
    pub corrective: String,
    pub compressed_header: String,
    pub compressed_request: String,
    pub compressed_request_cot: String,
    pub toy_prompts: [String; TOY_VARIANTS],
}

macro_rules! asset {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/templates/", $name, ".txt")).to_string()
    };
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::bundled()
    }
}

impl PromptTemplates {
    pub fn bundled() -> Self {
        Self {
            beginning: asset!("beginning"),
            end: asset!("end"),
            transition_plain: asset!("transition_plain"),
            transition_cot: asset!("transition_cot"),
            transition_short: asset!("transition_normal"),
            last_try: asset!("last_try"),
            expert_system: asset!("expert_system"),
            corrective: asset!("corrective"),
            compressed_header: asset!("compressed_history_header"),
            compressed_request: asset!("compressed_request"),
            compressed_request_cot: asset!("compressed_request_cot"),
            toy_prompts: [
                asset!("toy_prompt_0"),
                asset!("toy_prompt_1"),
                asset!("toy_prompt_2"),
                asset!("toy_prompt_3"),
            ],
        }
    }

    /// Bundled templates, with any `<name>.txt` present in `dir` replacing
    /// the bundled text of the same name.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut t = Self::bundled();
        let mut fields: Vec<(&str, &mut String)> = vec![
            ("beginning", &mut t.beginning),
            ("end", &mut t.end),
            ("transition_plain", &mut t.transition_plain),
            ("transition_cot", &mut t.transition_cot),
            ("transition_normal", &mut t.transition_short),
            ("last_try", &mut t.last_try),
            ("expert_system", &mut t.expert_system),
            ("corrective", &mut t.corrective),
            ("compressed_history_header", &mut t.compressed_header),
            ("compressed_request", &mut t.compressed_request),
            ("compressed_request_cot", &mut t.compressed_request_cot),
        ];
        let [t0, t1, t2, t3] = &mut t.toy_prompts;
        fields.extend([("toy_prompt_0", t0), ("toy_prompt_1", t1), ("toy_prompt_2", t2), ("toy_prompt_3", t3)]);
        for (name, slot) in fields {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path)
                    .map_err(|e| PromptError::Io { name: name.to_string(), message: e.to_string() })?;
            }
        }
        Ok(t)
    }

    /// First user message for a described search space.
    pub fn initial_prompt(&self, space: &SearchSpace, budget: usize) -> String {
        let beginning = self.beginning.replace("{model}", &space.model_name);
        let end = self
            .end
            .replace("{budget}", &budget.to_string())
            .replace("{example_config}", &space.example_config_text);
        format!("{beginning}\n{}\n{end}", space.describe())
    }

    /// First user message for a 2-D function, in one of the four wordings.
    pub fn toy_prompt(&self, variant: usize, space: &SearchSpace, budget: usize) -> Result<String, PromptError> {
        let template = self.toy_prompts.get(variant).ok_or(PromptError::UnknownToyVariant(variant))?;
        let [p1, p2] = space.params() else {
            return Err(PromptError::NotTwoDimensional(space.len()));
        };
        let range = |lo: f64, hi: f64| format!("[{}, {}]", pyfmt::number(lo), pyfmt::number(hi));
        Ok(template
            .replace("{x1_range}", &range(p1.lower, p1.upper))
            .replace("{x2_range}", &range(p2.lower, p2.upper))
            .replace("{budget}", &budget.to_string()))
    }

    /// Feedback after a trial. `first` marks the feedback on the first trial.
    pub fn transition(&self, loss: f64, reasoning: Reasoning, first: bool, is_last: bool) -> String {
        let template = match reasoning {
            Reasoning::Plain => &self.transition_plain,
            Reasoning::Cot => &self.transition_cot,
            Reasoning::Short if first => &self.transition_plain,
            Reasoning::Short => &self.transition_short,
        };
        let body = template.replace("{loss}", &pyfmt::sci(loss, 4));
        if is_last {
            format!("{}{body}", self.last_try)
        } else {
            body
        }
    }

    /// Single-message prompt: the problem description, one line per trial,
    /// then the request for the next config.
    pub fn compressed(
        &self,
        description: &str,
        space: &SearchSpace,
        history: &History,
        reasoning: Reasoning,
        is_last: bool,
    ) -> String {
        let mut out = description.trim_end().to_string();
        if let Some(d) = out.strip_suffix("Config:") {
            out = d.trim_end().to_string();
        }
        if !history.is_empty() {
            out.push('\n');
            out.push_str(&self.compressed_header);
            for t in history.trials() {
                out.push_str(&format!(
                    "\nConfig {}: {} -> loss = {}",
                    t.step,
                    space.canonical_json(&t.config),
                    pyfmt::sci(t.loss, 4)
                ));
            }
        }
        out.push('\n');
        if is_last {
            out.push_str(&self.last_try);
        }
        out.push_str(match reasoning {
            Reasoning::Cot => &self.compressed_request_cot,
            _ => &self.compressed_request,
        });
        out
    }
}
