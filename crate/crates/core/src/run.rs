//! The propose → evaluate loop of a single tuning run.

use std::io::Write;

use serde_json::Value;
use thiserror::Error;

use crate::objectives::{EvalError, Objective};
use crate::proposers::{History, ProposalContext, ProposeError, Proposer, Trial};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("proposal for step {step} failed: {source}")]
    Propose { step: usize, source: ProposeError },
    #[error("evaluation of step {step} failed: {source}")]
    Eval { step: usize, source: EvalError },
    #[error("cannot write trial log: {0}")]
    Log(String),
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Propose { source, .. } => source.kind(),
            RunError::Eval { source, .. } => source.kind(),
            RunError::Log(_) => "IoError",
        }
    }
}

/// A run that stopped early keeps the trials completed so far.
#[derive(Debug)]
pub struct RunFailure {
    pub history: History,
    pub error: RunError,
}

/// Runs exactly `budget` propose/evaluate steps unless one fails. Each
/// completed trial is passed to `on_trial` (e.g. to append a JSONL line).
pub fn run_trials(
    objective: &mut dyn Objective,
    proposer: &mut dyn Proposer,
    budget: usize,
    mut on_trial: impl FnMut(&Trial) -> Result<(), RunError>,
) -> Result<History, RunFailure> {
    let mut history = History::new(budget);
    for step in 1..=budget {
        let space = objective.space().clone();
        let ctx = ProposalContext { space: &space, history: &history, budget, step };
        let proposal = match proposer.propose(&ctx) {
            Ok(p) => p,
            Err(source) => return Err(RunFailure { history, error: RunError::Propose { step, source } }),
        };
        let result = match objective.evaluate(&proposal.config) {
            Ok(r) => r,
            Err(source) => return Err(RunFailure { history, error: RunError::Eval { step, source } }),
        };
        let mut annotations = proposal.annotations;
        if let Some(train) = result.train_losses {
            annotations.insert("train_losses", Value::from(train));
        }
        let trial = Trial {
            step,
            config: proposal.config,
            loss: result.loss,
            proposer_id: proposal.proposer_id,
            duration: result.duration_s,
            annotations,
        };
        if let Err(error) = on_trial(&trial) {
            return Err(RunFailure { history, error });
        }
        history.push(trial).expect("run loop keeps steps consecutive and within budget");
    }
    Ok(history)
}

/// `on_trial` sink writing one JSON line per trial.
pub fn jsonl_sink<W: Write>(mut out: W) -> impl FnMut(&Trial) -> Result<(), RunError> {
    move |trial| {
        let line = serde_json::to_string(trial).map_err(|e| RunError::Log(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| RunError::Log(e.to_string()))
    }
}
