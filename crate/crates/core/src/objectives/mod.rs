//! Loss oracles. Whatever training happens to produce a loss is opaque
//! behind [`Objective::evaluate`].

mod external;
mod tabular;
pub mod toy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{ExternalObjective, ExternalRequestStyle};
pub use tabular::{TabularError, TabularTask};
pub use toy::{ToyFunction, ToyObjective};

use crate::process::ProcessFailure;
use crate::space::{Config, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_losses: Option<Vec<f64>>,
    /// Wall-clock time of the evaluation; pure objectives report zero.
    pub duration_s: f64,
}

impl EvalResult {
    pub(crate) fn pure(loss: f64) -> Result<Self, EvalError> {
        if !loss.is_finite() {
            return Err(EvalError::NonFinite(loss));
        }
        Ok(Self { loss, train_losses: None, duration_s: 0.0 })
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("MissingRow: no tabulated loss for {0}")]
    MissingRow(String),
    #[error("non-finite loss {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Process(#[from] ProcessFailure),
    #[error("trainer reported error at stage `{stage}`: {message}")]
    Remote { stage: String, message: String },
}

impl EvalError {
    /// Stable name used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::InvalidConfig(_) => "InvalidConfig",
            EvalError::MissingRow(_) => "MissingRow",
            EvalError::NonFinite(_) => "NonFinite",
            EvalError::Process(p) => p.kind(),
            EvalError::Remote { .. } => "RemoteError",
        }
    }
}

/// A loss oracle over its own search space.
pub trait Objective: Send {
    fn space(&self) -> &SearchSpace;

    fn evaluate(&mut self, config: &Config) -> Result<EvalResult, EvalError>;
}
