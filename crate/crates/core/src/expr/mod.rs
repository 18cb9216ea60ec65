//! Sandboxed expression language used by node instructions and conditions.

pub mod ast;
pub mod eval;
pub mod lexer;
pub mod parser;
pub mod template;
pub mod value;

pub use ast::{Arg, BinOp, Expr, Literal, UnaryOp};
pub use eval::{is_valid_generated_name, truthiness, EngineHandle, Env, HostFn, HostRegistry, Interpreter, MapEnv, DEFAULT_BUILTINS};
pub use lexer::{tokenize, tokenize_layout, Keyword, Pos, Tok, Token};
pub use parser::{parse_expression, parse_source, ExprParser};
pub use template::{parse_call_instruction, render_dollar, strip_assignment, DollarPolicy};
pub use value::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("lex error at {pos}: {msg}")]
    Lex { pos: Pos, msg: String },
    #[error("indentation error at {pos}: {msg}")]
    Indent { pos: Pos, msg: String },
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: Pos, msg: String },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("{ty} has no method `{method}`")]
    UnknownMethod { ty: String, method: String },
    #[error("{0} is not callable")]
    NotCallable(String),
    #[error("{name}() takes {expected} arguments, got {got}")]
    ArityMismatch { name: String, expected: String, got: usize },
    #[error("integer overflow")]
    Overflow,
    #[error("host function {name} failed: {msg}")]
    Host { name: String, msg: String },
    #[error("`self` is only available in self-referential mode")]
    SelfRefDisabled,
    #[error("engine: {0}")]
    Engine(String),
    #[error("undefined variable `${0}`")]
    UnknownDollarVariable(String),
    #[error("instruction is not a function call: {0}")]
    NotACall(String),
}
