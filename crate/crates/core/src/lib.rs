pub mod authoring;
pub mod compiler;
pub mod config;
pub mod expr;
pub mod llm;
pub mod memory;
pub mod model;
pub mod runtime;
