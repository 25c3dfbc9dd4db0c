//! Hyperparameter optimization with pluggable proposers.
//!
//! A run alternates between asking a [`proposers::Proposer`] for the next
//! configuration and evaluating it on an [`objectives::Objective`]. Proposers
//! include random search, GP-EI Bayesian optimization, replayed traces,
//! hybrids, and a language model prompted over a chat-completions endpoint.

pub mod bench;
pub mod bo;
pub mod codegen;
pub mod llm_client;
pub mod llm_proposer;
pub mod objectives;
pub mod process;
pub mod proposers;
pub mod pyfmt;
pub mod run;
pub mod space;

pub use objectives::{EvalError, EvalResult, Objective};
pub use proposers::{History, Proposal, ProposalContext, ProposeError, Proposer, Trial};
pub use space::{Config, ParamKind, ParamSpec, SearchSpace};
