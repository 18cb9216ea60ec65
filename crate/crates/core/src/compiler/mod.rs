//! Compiles the authoring language into a graph.

pub mod direct;
mod lower;
pub mod parser;

use std::fmt;

use crate::config::AutogramConfig;
use crate::expr::ExprError;
use crate::model::{Diagnostic, GraphModel, ModelError};

pub use lower::compile;
pub use parser::{parse_program, KwValue, Module, Stmt};

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Syntax(#[from] ExprError),
    #[error("line {line}: only a single plain name can be assigned")]
    MultiAssign { line: usize },
    #[error("line {line}: only plain names can be assigned")]
    UnsupportedAssignTarget { line: usize },
    #[error("line {line}: exec_node argument `{kwarg}` must be a string or a list of strings")]
    NonLiteralKwarg { line: usize, kwarg: String },
    #[error("line {line}: exec_node has no argument `{kwarg}`")]
    UnknownKwarg { line: usize, kwarg: String },
    #[error("line {line}: exec_node action `{action}` is not a node action")]
    UnknownAction { line: usize, action: String },
    #[error("line {line}: unknown decorator `@{name}`")]
    UnknownDecorator { line: usize, name: String },
    #[error("line {line}: function `{name}` must be defined at the top level")]
    NestedFunction { line: usize, name: String },
    #[error("function `{0}` is defined twice")]
    DuplicateFunction(String),
    #[error("line {line}: `return` outside a function")]
    ReturnOutsideFunction { line: usize },
    #[error("line {line}: conditional has more than 26 branches")]
    TooManyBranches { line: usize },
    #[error("line {line}: keyword arguments cannot be passed to `{callee}`")]
    KeywordArgument { line: usize, callee: String },
    #[error("node name `{0}` is also generated by the compiler; rename it so it does not start with `_`")]
    NameCollision(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("compiled graph is invalid: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Diagnostic>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WarningKind {
    EmptyModule,
    /// An exec_node transition enters a loop or function body from outside.
    JumpIntoBlock,
    /// A function call was hoisted out of the right side of `and`/`or` and
    /// now runs unconditionally.
    HoistedShortCircuit,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompileWarning {
    pub kind: WarningKind,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for CompileWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "warning: line {l}: {}", self.message),
            None => write!(f, "warning: {}", self.message),
        }
    }
}

#[derive(Debug)]
pub struct Compiled {
    pub graph: GraphModel,
    pub warnings: Vec<CompileWarning>,
}

/// Parses and compiles `source` in one step.
pub fn compile_source(source: &str, config: AutogramConfig) -> Result<Compiled, CompileError> {
    let module = parse_program(source)?;
    compile(&module, config)
}
