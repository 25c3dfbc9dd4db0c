//! The proposer contract and the trial history it reads from.
//!
//! A [`History`] is the sequence of evaluated `(config, loss)` pairs of one
//! run. Every proposer, prompt builder and log writer derives what it needs
//! from it.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bo::Normalizer;
use crate::llm_client::LlmError;
use crate::space::{Config, SearchSpace, ValidationErrors};

/// Free-form per-trial metadata. The three named fields are the ones the
/// trial log format promises; everything else lands in `extra`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_out: Option<u64>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Annotations {
    pub fn insert(&mut self, key: &str, value: impl Into<Value>) {
        self.extra.insert(key.to_string(), value.into());
    }

    pub fn merge(&mut self, other: Annotations) {
        if other.raw_response.is_some() {
            self.raw_response = other.raw_response;
        }
        if other.tokens_in.is_some() {
            self.tokens_in = other.tokens_in;
        }
        if other.tokens_out.is_some() {
            self.tokens_out = other.tokens_out;
        }
        self.extra.extend(other.extra);
    }
}

/// One evaluated configuration. Serializes as one trial-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub step: usize,
    pub config: Config,
    pub loss: f64,
    pub proposer_id: String,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(default)]
    pub annotations: Annotations,
}

impl Trial {
    pub fn new(step: usize, config: Config, loss: f64, proposer_id: impl Into<String>) -> Self {
        Self {
            step,
            config,
            loss,
            proposer_id: proposer_id.into(),
            duration: 0.0,
            annotations: Annotations::default(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HistoryError {
    #[error("EmptyHistory")]
    Empty,
    #[error("budget of {0} trials exhausted")]
    BudgetExhausted(usize),
    #[error("expected step {expected}, got {got}")]
    StepOutOfOrder { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    trials: Vec<Trial>,
    budget: usize,
}

impl History {
    pub fn new(budget: usize) -> Self {
        Self { trials: Vec::with_capacity(budget), budget }
    }

    pub fn from_trials(trials: Vec<Trial>, budget: usize) -> Result<Self, HistoryError> {
        let mut h = Self::new(budget);
        for t in trials {
            h.push(t)?;
        }
        Ok(h)
    }

    /// Appends the next trial; steps must run 1, 2, ... up to the budget.
    pub fn push(&mut self, trial: Trial) -> Result<(), HistoryError> {
        if self.trials.len() >= self.budget {
            return Err(HistoryError::BudgetExhausted(self.budget));
        }
        let expected = self.trials.len() + 1;
        if trial.step != expected {
            return Err(HistoryError::StepOutOfOrder { expected, got: trial.step });
        }
        self.trials.push(trial);
        Ok(())
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.loss).collect()
    }

    /// Minimum loss; the earliest step wins ties.
    pub fn best_so_far(&self) -> Result<&Trial, HistoryError> {
        self.trials
            .iter()
            .reduce(|best, t| if t.loss < best.loss { t } else { best })
            .ok_or(HistoryError::Empty)
    }

    /// Running minimum of the loss after each step.
    pub fn min_so_far(&self) -> Vec<f64> {
        self.trials
            .iter()
            .scan(f64::INFINITY, |m, t| {
                *m = m.min(t.loss);
                Some(*m)
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ProposeError {
    #[error("ScriptExhausted: no scripted config for step {step} (script has {len})")]
    ScriptExhausted { step: usize, len: usize },
    #[error("ProposalFailed after {attempts} attempts: {last_error}")]
    ProposalFailed { attempts: usize, last_error: String, annotations: Box<Annotations> },
    #[error("scripted config for step {step} does not fit the space: {errors}")]
    InvalidScript { step: usize, errors: ValidationErrors },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("surrogate fit failed: {0}")]
    Surrogate(String),
    #[error("{0}")]
    Other(String),
}

impl ProposeError {
    pub fn kind(&self) -> &'static str {
        match self {
            ProposeError::ScriptExhausted { .. } => "ScriptExhausted",
            ProposeError::ProposalFailed { .. } => "ProposalFailed",
            ProposeError::InvalidScript { .. } => "InvalidScript",
            ProposeError::Llm(e) => e.kind(),
            ProposeError::Surrogate(_) => "SingularKernel",
            ProposeError::Other(_) => "ProposeError",
        }
    }
}

/// What a proposer sees when asked for the next config.
#[derive(Debug, Clone, Copy)]
pub struct ProposalContext<'a> {
    pub space: &'a SearchSpace,
    pub history: &'a History,
    pub budget: usize,
    /// 1-based index of the trial being proposed.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub config: Config,
    /// Id of the proposer that actually produced the config (a delegate's
    /// id for composite proposers).
    pub proposer_id: String,
    pub annotations: Annotations,
}

impl Proposal {
    pub fn new(config: Config, proposer_id: impl Into<String>) -> Self {
        Self { config, proposer_id: proposer_id.into(), annotations: Annotations::default() }
    }
}

pub trait Proposer: Send {
    fn id(&self) -> &str;

    /// Whether the proposer carries state beyond what the history holds.
    fn is_stateful(&self) -> bool;

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, ProposeError>;
}

/// Independent uniform draws through [`SearchSpace::sample`].
#[derive(Debug, Clone)]
pub struct RandomProposer {
    id: String,
    rng: ChaCha8Rng,
}

impl RandomProposer {
    pub fn new(seed: u64) -> Self {
        Self { id: "random".to_string(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn draw(&mut self, space: &SearchSpace) -> Config {
        random_config(space, &mut self.rng)
    }
}

pub(crate) fn random_config<R: Rng>(space: &SearchSpace, rng: &mut R) -> Config {
    let unit: Vec<f64> = (0..space.len()).map(|_| rng.random::<f64>()).collect();
    space.sample(&unit)
}

impl Proposer for RandomProposer {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_stateful(&self) -> bool {
        true
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, ProposeError> {
        Ok(Proposal::new(self.draw(ctx.space), self.id.clone()))
    }
}

/// Returns a fixed list of configs, one per step.
#[derive(Debug, Clone)]
pub struct ReplayProposer {
    id: String,
    script: Vec<Config>,
}

impl ReplayProposer {
    pub fn new(script: Vec<Config>) -> Self {
        Self { id: "replay".to_string(), script }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Config for a 1-based step.
    pub fn config_for(&self, step: usize) -> Result<&Config, ProposeError> {
        step.checked_sub(1)
            .and_then(|i| self.script.get(i))
            .ok_or(ProposeError::ScriptExhausted { step, len: self.script.len() })
    }
}

impl Proposer for ReplayProposer {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_stateful(&self) -> bool {
        false
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, ProposeError> {
        let config = self.config_for(ctx.step)?;
        // Scripts may come from another space definition; re-check.
        let config = ctx
            .space
            .validate(&config.to_json())
            .map_err(|errors| ProposeError::InvalidScript { step: ctx.step, errors })?;
        Ok(Proposal::new(config, self.id.clone()))
    }
}

/// Delegates steps `1..=switch_step` to `first` and the rest to `second`.
/// Both see the full history.
pub struct HybridProposer {
    id: String,
    first: Box<dyn Proposer>,
    second: Box<dyn Proposer>,
    switch_step: usize,
}

impl HybridProposer {
    pub fn new(first: Box<dyn Proposer>, second: Box<dyn Proposer>, switch_step: usize) -> Self {
        let id = format!("hybrid({}->{}@{})", first.id(), second.id(), switch_step);
        Self { id, first, second, switch_step }
    }
}

impl Proposer for HybridProposer {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_stateful(&self) -> bool {
        self.first.is_stateful() || self.second.is_stateful()
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, ProposeError> {
        if ctx.step <= self.switch_step {
            self.first.propose(ctx)
        } else {
            self.second.propose(ctx)
        }
    }
}

/// Snaps another proposer's configs to the nearest point of a finite grid
/// (tabulated configurations), measured in the unit-cube normalization.
pub struct GridSnap {
    inner: Box<dyn Proposer>,
    grid: Vec<Config>,
    grid_unit: Vec<Vec<f64>>,
    normalizer: Normalizer,
}

impl GridSnap {
    pub fn new(inner: Box<dyn Proposer>, space: &SearchSpace, grid: Vec<Config>) -> Self {
        let normalizer = Normalizer::new(space);
        let grid_unit = grid.iter().map(|c| normalizer.to_unit(c)).collect();
        Self { inner, grid, grid_unit, normalizer }
    }

    pub fn snap(&self, config: &Config) -> Option<&Config> {
        let u = self.normalizer.to_unit(config);
        self.grid_unit
            .iter()
            .enumerate()
            .map(|(i, g)| (i, g.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| &self.grid[i])
    }
}

impl Proposer for GridSnap {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn is_stateful(&self) -> bool {
        self.inner.is_stateful()
    }

    fn propose(&mut self, ctx: &ProposalContext<'_>) -> Result<Proposal, ProposeError> {
        let mut proposal = self.inner.propose(ctx)?;
        if let Some(snapped) = self.snap(&proposal.config) {
            if *snapped != proposal.config {
                proposal
                    .annotations
                    .insert("snapped_from", Value::Object(proposal.config.to_json()));
                proposal.config = snapped.clone();
            }
        }
        Ok(proposal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(step: usize, loss: f64, space: &SearchSpace) -> Trial {
        Trial {
            step,
            config: space.defaults(),
            loss,
            proposer_id: "t".into(),
            duration: 0.0,
            annotations: Annotations::default(),
        }
    }

    fn history(losses: &[f64]) -> History {
        let space = SearchSpace::builtin("svm").unwrap();
        let trials = losses.iter().enumerate().map(|(i, &l)| trial(i + 1, l, &space)).collect();
        History::from_trials(trials, 10).unwrap()
    }

    #[test]
    fn best_so_far_rules() {
        assert_eq!(history(&[0.3, 0.1, 0.2]).best_so_far().unwrap().step, 2);
        assert_eq!(history(&[0.1, 0.1]).best_so_far().unwrap().step, 1);
        assert_eq!(history(&[0.7]).best_so_far().unwrap().step, 1);
        assert_eq!(history(&[]).best_so_far(), Err(HistoryError::Empty));
    }

    #[test]
    fn min_so_far_is_monotone() {
        let h = history(&[0.5, 0.7, 0.2, 0.9, 0.1]);
        assert_eq!(h.min_so_far(), vec![0.5, 0.5, 0.2, 0.2, 0.1]);
    }

    #[test]
    fn history_enforces_budget_and_order() {
        let space = SearchSpace::builtin("svm").unwrap();
        let mut h = History::new(1);
        assert_eq!(
            h.push(trial(2, 0.1, &space)),
            Err(HistoryError::StepOutOfOrder { expected: 1, got: 2 })
        );
        h.push(trial(1, 0.1, &space)).unwrap();
        assert_eq!(h.push(trial(2, 0.1, &space)), Err(HistoryError::BudgetExhausted(1)));
    }

    #[test]
    fn random_is_seeded() {
        let space = SearchSpace::builtin("svm").unwrap();
        let mut a = RandomProposer::new(11);
        let mut b = RandomProposer::new(11);
        for _ in 0..5 {
            assert_eq!(a.draw(&space), b.draw(&space));
        }
    }

    #[test]
    fn random_draws_valid_and_log_balanced() {
        let space = SearchSpace::builtin("svm").unwrap();
        let mut p = RandomProposer::new(5);
        let n = 10_000;
        let mut below = 0;
        for _ in 0..n {
            let c = p.draw(&space);
            assert!(space.validate(&c.to_json()).is_ok());
            if c.get("C").unwrap() < 1.0 {
                below += 1;
            }
        }
        let frac = below as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn replay_steps() {
        let space = SearchSpace::builtin("svm").unwrap();
        let c1 = space.sample(&[0.1, 0.2]);
        let c2 = space.sample(&[0.3, 0.4]);
        let mut p = ReplayProposer::new(vec![c1, c2.clone()]);
        let h = History::new(3);
        let ctx = |step| ProposalContext { space: &space, history: &h, budget: 3, step };
        assert_eq!(p.propose(&ctx(2)).unwrap().config, c2);
        assert!(matches!(p.propose(&ctx(3)), Err(ProposeError::ScriptExhausted { step: 3, len: 2 })));
    }

    #[test]
    fn hybrid_switches_after_switch_step() {
        let space = SearchSpace::builtin("svm").unwrap();
        let h = History::new(20);
        let mk = || {
            HybridProposer::new(
                Box::new(RandomProposer::new(1).with_id("a")),
                Box::new(RandomProposer::new(2).with_id("b")),
                10,
            )
        };
        let mut p = mk();
        let ctx = |step| ProposalContext { space: &space, history: &h, budget: 20, step };
        assert_eq!(p.propose(&ctx(10)).unwrap().proposer_id, "a");
        assert_eq!(p.propose(&ctx(11)).unwrap().proposer_id, "b");

        let mut zero = HybridProposer::new(
            Box::new(RandomProposer::new(1).with_id("a")),
            Box::new(RandomProposer::new(2).with_id("b")),
            0,
        );
        assert_eq!(zero.propose(&ctx(1)).unwrap().proposer_id, "b");
    }

    #[test]
    fn grid_snap_picks_nearest() {
        let space = SearchSpace::builtin("svm").unwrap();
        let grid = vec![space.sample(&[0.0, 0.0]), space.sample(&[1.0, 1.0])];
        let inner = ReplayProposer::new(vec![space.sample(&[0.9, 0.8])]);
        let mut snap = GridSnap::new(Box::new(inner), &space, grid.clone());
        let h = History::new(1);
        let p = snap
            .propose(&ProposalContext { space: &space, history: &h, budget: 1, step: 1 })
            .unwrap();
        assert_eq!(p.config, grid[1]);
        assert!(p.annotations.extra.contains_key("snapped_from"));
    }

    #[test]
    fn trial_log_line_shape() {
        let space = SearchSpace::builtin("nn").unwrap();
        let mut t = trial(1, 0.25, &space);
        t.annotations.raw_response = Some("{}".into());
        t.annotations.tokens_in = Some(12);
        let line = serde_json::to_string(&t).unwrap();
        assert_eq!(
            line,
            r#"{"step":1,"config":{"alpha":0.001,"batch_size":32,"depth":3,"learning_rate_init":0.001,"width":64},"loss":0.25,"proposer_id":"t","duration_s":0.0,"annotations":{"raw_response":"{}","tokens_in":12}}"#
        );
        let back: Trial = serde_json::from_str(&line).unwrap();
        assert_eq!(space.validate(&back.config.to_json()).unwrap(), t.config);
    }
}
