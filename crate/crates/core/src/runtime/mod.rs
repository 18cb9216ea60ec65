//! The interpreter: reply loop, apply_fn, instructions and transitions.

mod env;
mod instruction;
mod session;
mod simulate;
mod transition;

pub use session::{ReplyOutcome, Session, TransitionEvent};
pub use simulate::SimulatedTurn;

use crate::config::ConfigError;
use crate::expr::{ExprError, Value};
use crate::llm::LlmError;
use crate::memory::MemoryError;
use crate::model::{Diagnostic, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("node `{node}`: {source}")]
    Expr { node: String, source: ExprError },
    #[error("node `{node}`: {source}")]
    Llm { node: String, source: LlmError },
    #[error("node `{node}`: {source}")]
    Memory { node: String, source: MemoryError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("graph failed validation: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Diagnostic>),
    #[error("graph has no start node")]
    NoStartNode,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no callable node named `{0}`")]
    UnknownCallable(String),
    #[error("`{callee}` takes {expected} arguments, got {got}")]
    ArityMismatch { callee: String, expected: usize, got: usize },
    #[error("more than {0} node executions without finishing")]
    StepLimitExceeded(usize),
    #[error("node `{0}` returned with no function frame to return from")]
    ReturnAtRoot(String),
    #[error("chat node `{0}` reached inside apply_fn")]
    ChatInsideApplyFn(String),
    #[error("node `{0}` has no transitions")]
    EmptyTransitions(String),
    #[error("node `{0}`: transition_choices do not match transitions")]
    ChoiceMismatch(String),
    #[error("node `{0}` has no user prompts for its transitions")]
    MissingUserPrompts(String),
    #[error("node `{node}`: variable transition `{raw}` did not resolve to a node, return or wildcard")]
    UnresolvedVariableTransition { node: String, raw: String },
    #[error("no chat node has been executed yet")]
    NotAwaitingUser,
}

/// Result of executing one node's instruction.
#[derive(Clone, Debug)]
pub struct NodeOutcome {
    pub text_output: String,
    pub value_output: Value,
    pub is_user_facing: bool,
}
