//! LLM-backed proposer: renders prompts from the trial history, asks a chat
//! model for the next config and re-asks when the reply does not parse.

mod parse;
mod prompts;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use parse::{parse_response, ParseError, ParsedProposal};
pub use prompts::{PromptError, PromptMode, PromptTemplates, Reasoning, TOY_VARIANTS};

use crate::llm_client::{ChatClient, CompletionRequest, CostLedger, Message, DEFAULT_MODEL};
use crate::proposers::{random_config, Annotations, History, Proposal, ProposalContext, ProposeError, Proposer};
use crate::space::SearchSpace;

fn default_model() -> String {
    DEFAULT_MODEL.to_string()
}

fn default_retries() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSettings {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub mode: PromptMode,
    #[serde(default)]
    pub reasoning: Reasoning,
    /// Adds the expert system message.
    #[serde(default)]
    pub expert: bool,
    /// Corrective re-asks per step after an unusable reply.
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Propose a random config instead of failing once retries run out.
    #[serde(default)]
    pub fallback_random: bool,
    /// Opening wording for 2-D vector spaces (0..=3). Defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy_prompt: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model: default_model(),
            temperature: 0.0,
            mode: PromptMode::Chat,
            reasoning: Reasoning::Plain,
            expert: false,
            max_retries: default_retries(),
            fallback_random: false,
            toy_prompt: None,
            max_tokens: None,
        }
    }
}

impl LlmSettings {
    pub fn id(&self) -> String {
        let mut id = format!("llm:{}", self.model);
        if self.mode == PromptMode::Compressed {
            id.push_str(":compressed");
        }
        match self.reasoning {
            Reasoning::Plain => {}
            Reasoning::Cot => id.push_str(":cot"),
            Reasoning::Short => id.push_str(":short"),
        }
        if self.expert {
            id.push_str(":expert");
        }
        id
    }
}

pub struct LlmProposer {
    id: String,
    client: Arc<dyn ChatClient>,
    templates: Arc<PromptTemplates>,
    settings: LlmSettings,
    ledger: Option<Arc<CostLedger>>,
    fallback_rng: ChaCha8Rng,
}

impl LlmProposer {
    pub fn new(client: Arc<dyn ChatClient>, settings: LlmSettings, seed: u64) -> Self {
        Self {
            id: settings.id(),
            client,
            templates: Arc::new(PromptTemplates::bundled()),
            settings,
            ledger: None,
            fallback_rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_templates(mut self, templates: Arc<PromptTemplates>) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_ledger(mut self, ledger: Arc<CostLedger>) -> Self {
        self.ledger = Some(ledger);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn settings(&self) -> &LlmSettings {
        &self.settings
    }

    /// The opening user message for `space`.
    pub fn opening(&self, space: &SearchSpace, budget: usize) -> Result<String, ProposeError> {
        if space.vector_key().is_some() && space.len() == 2 {
            let variant = self.settings.toy_prompt.unwrap_or(1);
            self.templates
                .toy_prompt(variant, space, budget)
                .map_err(|e| ProposeError::Other(e.to_string()))
        } else {
            Ok(self.templates.initial_prompt(space, budget))
        }
    }

    /// Messages for the request that proposes step `history.len() + 1`.
    pub fn messages(&self, space: &SearchSpace, history: &History, budget: usize) -> Result<Vec<Message>, ProposeError> {
        let opening = self.opening(space, budget)?;
        let mut msgs = Vec::new();
        if self.settings.expert {
            msgs.push(Message::system(self.templates.expert_system.clone()));
        }
        let step = history.len() + 1;
        let is_last = |s: usize| s == budget && s > 1;
        match self.settings.mode {
            PromptMode::Chat => {
                msgs.push(Message::user(opening));
                for (i, t) in history.trials().iter().enumerate() {
                    let reply = t.annotations.raw_response.clone().unwrap_or_else(|| space.canonical_json(&t.config));
                    msgs.push(Message::assistant(reply));
                    let requested = t.step + 1;
                    msgs.push(Message::user(self.templates.transition(
                        t.loss,
                        self.settings.reasoning,
                        i == 0,
                        is_last(requested),
                    )));
                }
            }
            PromptMode::Compressed => {
                msgs.push(Message::user(self.templates.compressed(
                    &opening,
                    space,
                    history,
                    self.settings.reasoning,
                    is_last(step),
                )));
            }
        }
        Ok(msgs)
    }

    fn request(&self, messages: Vec<Message>) -> CompletionRequest {
        let mut req = CompletionRequest::new(self.settings.model.clone(), self.settings.temperature, messages);
        req.max_tokens = self.settings.max_tokens;
        req
    }
}

impl Proposer for LlmProposer {
    fn id(&self) -> &str {
        &self.id
    }

    /// Prompts are rebuilt from the history each step; only the fallback
    /// RNG carries state.
    fn is_stateful(&self) -> bool {
        false
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, ProposeError> {
        let mut messages = self.messages(ctx.space, ctx.history, ctx.budget)?;
        let mut annotations = Annotations::default();
        let (mut tokens_in, mut tokens_out, mut estimated) = (0u64, 0u64, false);
        let attempts = self.settings.max_retries + 1;
        let mut last_error = String::new();
        let mut failures = Vec::new();

        for attempt in 1..=attempts {
            let req = self.request(messages.clone());
            let resp = self.client.complete(&req)?;
            tokens_in += resp.tokens_in;
            tokens_out += resp.tokens_out;
            estimated |= resp.usage_estimated;
            if let Some(ledger) = &self.ledger {
                ledger.record(&self.settings.model, resp.tokens_in, resp.tokens_out)?;
            }
            annotations.tokens_in = Some(tokens_in);
            annotations.tokens_out = Some(tokens_out);
            if estimated {
                annotations.insert("usage_estimated", true);
            }
            annotations.insert("attempts", attempt);

            let outcome = parse_response(&resp.text)
                .map_err(|e| e.to_string())
                .and_then(|p| ctx.space.validate(&p.config_raw).map(|c| (p, c)).map_err(|e| e.to_string()));
            match outcome {
                Ok((parsed, config)) => {
                    annotations.raw_response = Some(resp.text);
                    if let Some(a) = parsed.analysis {
                        annotations.insert("analysis", a);
                    }
                    if !failures.is_empty() {
                        annotations.insert("rejected_responses", failures);
                    }
                    let mut p = Proposal::new(config, self.id.clone());
                    p.annotations = annotations;
                    return Ok(p);
                }
                Err(e) => {
                    last_error = e;
                    failures.push(resp.text.clone());
                    messages.push(Message::assistant(resp.text));
                    messages.push(Message::user(self.templates.corrective.clone()));
                }
            }
        }

        annotations.insert("rejected_responses", failures);
        annotations.insert("last_error", last_error.clone());
        if self.settings.fallback_random {
            annotations.insert("fallback", "random");
            let mut p = Proposal::new(random_config(ctx.space, &mut self.fallback_rng), self.id.clone());
            p.annotations = annotations;
            return Ok(p);
        }
        Err(ProposeError::ProposalFailed { attempts, last_error, annotations: Box::new(annotations) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::{Role, ScriptedClient};
    use crate::objectives::{Objective, ToyFunction, ToyObjective};
    use crate::run::run_trials;

    fn proposer(replies: &[&str], settings: LlmSettings) -> (LlmProposer, Arc<ScriptedClient>) {
        let client = Arc::new(ScriptedClient::new(replies.iter().copied()));
        (LlmProposer::new(client.clone(), settings, 0), client)
    }

    #[test]
    fn valid_reply_single_request() {
        let space = SearchSpace::builtin("svm").unwrap();
        let (mut p, client) = proposer(&[r#"{"C": 1.0, "gamma": 0.1}"#], LlmSettings::default());
        let h = History::new(10);
        let out = p.propose(&ProposalContext { space: &space, history: &h, budget: 10, step: 1 }).unwrap();
        assert_eq!(out.config.get("C"), Some(1.0));
        assert_eq!(client.calls(), 1);
        assert_eq!(out.annotations.raw_response.as_deref(), Some(r#"{"C": 1.0, "gamma": 0.1}"#));
        assert!(out.annotations.tokens_in.unwrap() > 0);
    }

    #[test]
    fn garbage_then_valid_reasks_once() {
        let space = SearchSpace::builtin("svm").unwrap();
        let (mut p, client) = proposer(&["Sure! Let me think.", r#"{"C": 2.0, "gamma": 0.5}"#], LlmSettings::default());
        let h = History::new(10);
        let out = p.propose(&ProposalContext { space: &space, history: &h, budget: 10, step: 1 }).unwrap();
        assert_eq!(out.config.get("gamma"), Some(0.5));
        let reqs = client.requests();
        assert_eq!(reqs.len(), 2);
        let second = &reqs[1].messages;
        assert_eq!(second.len(), 3);
        assert_eq!(second[1], Message::assistant("Sure! Let me think."));
        assert_eq!(second[2].content, "Provide the config in JSON format only. Config:");
    }

    #[test]
    fn out_of_range_counts_as_failure() {
        let space = SearchSpace::builtin("svm").unwrap();
        let bad = r#"{"C": 1e9, "gamma": 0.1}"#;
        let (mut p, client) = proposer(&[bad, bad, bad, bad], LlmSettings::default());
        let h = History::new(10);
        let err = p.propose(&ProposalContext { space: &space, history: &h, budget: 10, step: 1 }).unwrap_err();
        assert_eq!(err.kind(), "ProposalFailed");
        assert_eq!(client.calls(), 4);
    }

    #[test]
    fn fallback_to_random() {
        let space = SearchSpace::builtin("rf").unwrap();
        let settings = LlmSettings { max_retries: 0, fallback_random: true, ..Default::default() };
        let (mut p, _) = proposer(&["nope"], settings);
        let h = History::new(10);
        let out = p.propose(&ProposalContext { space: &space, history: &h, budget: 10, step: 1 }).unwrap();
        assert_eq!(out.annotations.extra["fallback"], "random");
        assert!(space.validate(&out.config.to_json()).is_ok());
    }

    #[test]
    fn chat_transcript_grows_two_per_step() {
        let mut obj = ToyObjective::new(ToyFunction::Branin);
        let replies = [r#"{"x": [0.0, 1.0]}"#, r#"{"x": [1.0, 2.0]}"#, r#"{"x": [3.0, 2.0]}"#];
        let (mut p, client) = proposer(&replies, LlmSettings::default());
        run_trials(&mut obj, &mut p, 3, |_| Ok(())).unwrap();
        let reqs = client.requests();
        let counts: Vec<usize> = reqs.iter().map(|r| r.messages.len()).collect();
        assert_eq!(counts, vec![1, 3, 5]);
        let last = &reqs[2].messages;
        assert_eq!(last[1], Message::assistant(replies[0]));
        let lasts: Vec<bool> = last
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.starts_with("This is the last try."))
            .collect();
        assert_eq!(lasts, vec![false, false, true]);
    }

    #[test]
    fn expert_adds_system_message() {
        let space = SearchSpace::builtin("lr").unwrap();
        let settings = LlmSettings { expert: true, ..Default::default() };
        let (mut p, client) = proposer(&[r#"{"alpha": 0.01, "eta0": 0.1}"#], settings);
        let h = History::new(5);
        p.propose(&ProposalContext { space: &space, history: &h, budget: 5, step: 1 }).unwrap();
        let m = &client.requests()[0].messages;
        assert_eq!(m[0], Message::system("You are a machine learning expert"));
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn compressed_sends_one_message() {
        let mut obj = ToyObjective::new(ToyFunction::Himmelblau);
        let settings = LlmSettings { mode: PromptMode::Compressed, ..Default::default() };
        let replies = [r#"{"x": [0.0, 1.0]}"#, r#"{"x": [1.0, 2.0]}"#, r#"{"x": [3.0, 2.0]}"#];
        let (mut p, client) = proposer(&replies, settings);
        run_trials(&mut obj, &mut p, 3, |_| Ok(())).unwrap();
        let reqs = client.requests();
        assert!(reqs.iter().all(|r| r.messages.len() == 1));
        let last = &reqs[2].messages[0].content;
        assert!(last.contains("Config 1: {\"x\": [0.0, 1.0]} -> loss = "));
        assert!(last.contains("Config 2: {\"x\": [1.0, 2.0]} -> loss = "));
        assert!(last.ends_with("This is the last try. Provide the next config in JSON format. Config:"));
        assert_eq!(obj.space().len(), 2);
    }
}
