//! Example programs shipped with the engine, each with a configuration and a
//! scripted-backend fixture so it runs without a live model.

use crate::compiler::{compile_source, CompileError};
use crate::config::{AutogramConfig, ConfigError};
use crate::llm::scripted::Fixture;
use crate::llm::{Backends, LlmError};
use crate::model::GraphModel;

use super::{parse_csv, AuthoringError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleSource {
    Csv(&'static str),
    Auto(&'static str),
}

#[derive(Clone, Copy, Debug)]
pub struct Example {
    pub name: &'static str,
    pub source: ExampleSource,
    pub config: &'static str,
    pub fixture: &'static str,
}

#[derive(Debug, thiserror::Error)]
pub enum BundledError {
    #[error("no bundled example named `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Authoring(#[from] AuthoringError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Fixture(#[from] LlmError),
}

const EMPTY_CONFIG: &str = "{}";

static EXAMPLES: &[Example] = &[
    Example {
        name: "tutor_bot",
        source: ExampleSource::Csv(include_str!("../../assets/tutor_bot.csv")),
        config: include_str!("../../assets/tutor_bot.config.json"),
        fixture: include_str!("../../assets/tutor_bot.fixture.json"),
    },
    Example {
        name: "fibonacci",
        source: ExampleSource::Auto(include_str!("../../assets/fibonacci.auto")),
        config: EMPTY_CONFIG,
        fixture: include_str!("../../assets/fibonacci.fixture.json"),
    },
    Example {
        name: "summarize",
        source: ExampleSource::Csv(include_str!("../../assets/summarize.csv")),
        config: EMPTY_CONFIG,
        fixture: include_str!("../../assets/summarize.fixture.json"),
    },
    Example {
        name: "self_ref",
        source: ExampleSource::Auto(include_str!("../../assets/self_ref.auto")),
        config: include_str!("../../assets/self_ref.config.json"),
        fixture: include_str!("../../assets/self_ref.fixture.json"),
    },
];

pub fn bundled_examples() -> &'static [Example] {
    EXAMPLES
}

pub fn example(name: &str) -> Result<&'static Example, BundledError> {
    EXAMPLES.iter().find(|e| e.name == name).ok_or_else(|| BundledError::Unknown(name.to_string()))
}

impl Example {
    pub fn config(&self) -> Result<AutogramConfig, BundledError> {
        Ok(AutogramConfig::from_json_str(self.config)?)
    }

    pub fn graph(&self) -> Result<GraphModel, BundledError> {
        let config = self.config()?;
        Ok(match self.source {
            ExampleSource::Csv(text) => parse_csv(text, config)?,
            ExampleSource::Auto(text) => compile_source(text, config)?.graph,
        })
    }

    pub fn fixture(&self) -> Result<Fixture, BundledError> {
        Ok(Fixture::from_json_str(self.fixture)?)
    }

    pub fn backends(&self) -> Result<Backends, BundledError> {
        Ok(Backends::scripted(&self.fixture()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{has_errors, validate_graph};

    #[test]
    fn all_examples_load() {
        for ex in bundled_examples() {
            let g = ex.graph().unwrap_or_else(|e| panic!("{}: {e}", ex.name));
            assert!(!has_errors(&validate_graph(&g)), "{}", ex.name);
            ex.fixture().unwrap();
        }
        assert!(matches!(example("nope"), Err(BundledError::Unknown(_))));
    }
}
