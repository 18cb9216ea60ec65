//! Resolving graphs, configurations and backends from command-line inputs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use autograms::authoring::bundled::{example, BundledError};
use autograms::authoring::{import_graph_document, load_csv, AuthoringError, GraphDocument};
use autograms::compiler::{compile_source, CompileError, CompileWarning};
use autograms::config::{AutogramConfig, ConfigError};
use autograms::llm::scripted::Fixture;
use autograms::llm::{Backends, LlmError};
use autograms::model::GraphModel;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: unsupported graph file; expected .csv, .auto or .json")]
    UnknownFormat { path: PathBuf },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Authoring(#[from] AuthoringError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Bundled(#[from] BundledError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// A graph file, or `bundled:<name>` for one of the shipped examples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphSource {
    Path(PathBuf),
    Bundled(String),
}

impl FromStr for GraphSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.strip_prefix("bundled:") {
            Some(name) => GraphSource::Bundled(name.to_string()),
            None => GraphSource::Path(PathBuf::from(s)),
        })
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSource::Path(p) => write!(f, "{}", p.display()),
            GraphSource::Bundled(n) => write!(f, "bundled:{n}"),
        }
    }
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

/// Configuration from `path`; otherwise the bundled example's own, otherwise
/// defaults. The second value is a notice to show when defaults were used.
pub fn load_config(path: Option<&Path>, source: &GraphSource) -> Result<(AutogramConfig, Option<String>), LoadError> {
    if let Some(p) = path {
        return Ok((AutogramConfig::load(p)?, None));
    }
    if let GraphSource::Bundled(name) = source {
        return Ok((example(name)?.config()?, None));
    }
    Ok((AutogramConfig::default(), Some("no --config given; using default configuration".into())))
}

pub struct LoadedGraph {
    pub graph: GraphModel,
    pub warnings: Vec<CompileWarning>,
}

pub fn load_graph(source: &GraphSource, config: AutogramConfig) -> Result<LoadedGraph, LoadError> {
    let path = match source {
        GraphSource::Bundled(name) => {
            let ex = example(name)?;
            let graph = match ex.source {
                autograms::authoring::bundled::ExampleSource::Csv(text) => autograms::authoring::parse_csv(text, config)?,
                autograms::authoring::bundled::ExampleSource::Auto(text) => {
                    let c = compile_source(text, config)?;
                    return Ok(LoadedGraph { graph: c.graph, warnings: c.warnings });
                }
            };
            return Ok(LoadedGraph { graph, warnings: Vec::new() });
        }
        GraphSource::Path(p) => p,
    };
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    match ext {
        "csv" => Ok(LoadedGraph { graph: load_csv(path, config)?, warnings: Vec::new() }),
        "auto" => {
            let c = compile_source(&read(path)?, config)?;
            Ok(LoadedGraph { graph: c.graph, warnings: c.warnings })
        }
        "json" => {
            let doc = GraphDocument::from_json_str(&read(path)?)?;
            Ok(LoadedGraph { graph: import_graph_document(&doc, config)?, warnings: Vec::new() })
        }
        _ => Err(LoadError::UnknownFormat { path: path.clone() }),
    }
}

/// Where model calls go: a fixture for deterministic runs, or the backends
/// named in the configuration.
#[derive(Clone, Debug)]
pub enum BackendChoice {
    Scripted(Box<Fixture>),
    Configured,
}

impl BackendChoice {
    /// `--scripted <fixture.json>`, or `--scripted bundled` for the bundled
    /// example's fixture.
    pub fn from_flag(flag: Option<&str>, source: &GraphSource) -> Result<Self, LoadError> {
        match (flag, source) {
            (None, _) => Ok(BackendChoice::Configured),
            (Some("bundled"), GraphSource::Bundled(name)) => Ok(BackendChoice::Scripted(Box::new(example(name)?.fixture()?))),
            (Some(path), _) => Ok(BackendChoice::Scripted(Box::new(Fixture::load(Path::new(path))?))),
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            BackendChoice::Scripted(_) => "scripted",
            BackendChoice::Configured => "configured",
        }
    }

    pub fn build(&self, config: &AutogramConfig) -> Result<Backends, LlmError> {
        match self {
            BackendChoice::Scripted(f) => Ok(Backends::scripted(f)),
            BackendChoice::Configured => Backends::from_settings(&config.chatbot, &config.classifier, config.userbot.as_ref(), None),
        }
    }
}
