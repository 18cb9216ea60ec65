//! `autogram` subcommands.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use autograms::authoring::export_graph_document;
use autograms::expr::{parse_source, ExprError, Interpreter, MapEnv, Value};
use autograms::memory::MemoryObject;
use autograms::model::{has_errors, validate_graph, Severity};
use autograms::runtime::{Session, SimulatedTurn};
use clap::{Args, Parser, Subcommand};

use crate::load::{load_config, load_graph, BackendChoice, GraphSource, LoadedGraph};
use crate::server::{AppState, ServerOptions};

#[derive(Parser, Debug)]
#[command(name = "autogram", version, about = "Compile, run and serve graph-structured agent programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GraphArgs {
    /// Graph file (.csv, .auto or .json document) or `bundled:<name>`.
    pub graph: GraphSource,
    /// Configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BackendArgs {
    /// Fixture JSON for deterministic scripted backends; `bundled` uses the
    /// bundled example's fixture.
    #[arg(long)]
    pub scripted: Option<String>,
    /// Seed for simulated user turns.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compile an authoring-language file into a graph document.
    Compile {
        source: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Talk to a graph. `/simulate` lets the userbot take a turn; `/quit` ends.
    Chat {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// Resume from a saved memory document.
        #[arg(long)]
        memory: Option<PathBuf>,
        /// Directory receiving transcript.txt and memory.json on exit.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Call a function node directly and print its return value.
    RunFn {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        backend: BackendArgs,
        function: String,
        /// Arguments, each an expression such as `7` or `'text'`.
        args: Vec<String>,
    },
    /// Alternate agent replies and userbot turns, reporting whether each
    /// sampled transition matches the classifier.
    Simulate {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value_t = 6)]
        turns: usize,
    },
    /// Print the graph document, optionally for one category.
    Export {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        category: Option<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Report graph diagnostics; exits 1 on errors.
    Validate {
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Run the HTTP session service.
    Serve {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value = "sessions")]
        store: PathBuf,
        /// Include variable values in /state responses.
        #[arg(long)]
        expose_variables: bool,
    },
}

pub struct Io<'a> {
    pub input: &'a mut dyn BufRead,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

type CmdResult = Result<i32, Box<dyn std::error::Error>>;

fn load(args: &GraphArgs, io: &mut Io) -> Result<LoadedGraph, Box<dyn std::error::Error>> {
    let (config, notice) = load_config(args.config.as_deref(), &args.graph)?;
    if let Some(n) = notice {
        writeln!(io.err, "note: {n}")?;
    }
    let loaded = load_graph(&args.graph, config)?;
    for w in &loaded.warnings {
        writeln!(io.err, "{w}")?;
    }
    Ok(loaded)
}

fn session(graph: &GraphArgs, backend: &BackendArgs, io: &mut Io) -> Result<Session, Box<dyn std::error::Error>> {
    let loaded = load(graph, io)?;
    let choice = BackendChoice::from_flag(backend.scripted.as_deref(), &graph.graph)?;
    let backends = choice.build(&loaded.graph.config)?;
    Ok(Session::new(loaded.graph, backends)?.with_seed(backend.seed))
}

fn write_out(path: Option<&Path>, text: &str, io: &mut Io) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")),
        None => writeln!(io.out, "{text}"),
    }
}

/// Runs one command; the return value is the process exit status.
pub fn run(cli: Cli, io: &mut Io) -> i32 {
    match dispatch(cli, io) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli, io: &mut Io) -> CmdResult {
    match cli.command {
        Command::Compile { source, out, config } => {
            let graph = GraphArgs { graph: GraphSource::Path(source), config };
            let loaded = load(&graph, io)?;
            let diags = validate_graph(&loaded.graph);
            for d in &diags {
                writeln!(io.err, "{d}")?;
            }
            write_out(out.as_deref(), &export_graph_document(&loaded.graph, None).to_json_pretty(), io)?;
            Ok(if has_errors(&diags) { 1 } else { 0 })
        }
        Command::Export { graph, category, out } => {
            let loaded = load(&graph, io)?;
            write_out(out.as_deref(), &export_graph_document(&loaded.graph, category.as_deref()).to_json_pretty(), io)?;
            Ok(0)
        }
        Command::Validate { graph } => {
            let loaded = load(&graph, io)?;
            let diags = validate_graph(&loaded.graph);
            for d in &diags {
                writeln!(io.out, "{d}")?;
            }
            let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
            writeln!(io.out, "{} node(s), {errors} error(s), {} warning(s)", loaded.graph.nodes().count(), diags.len() - errors)?;
            Ok(if errors > 0 { 1 } else { 0 })
        }
        Command::RunFn { graph, backend, function, args } => {
            let mut s = session(&graph, &backend, io)?;
            let args = args.iter().map(|a| parse_arg(a)).collect::<Result<Vec<_>, _>>()?;
            let v = s.apply_fn(&function, args)?;
            writeln!(io.out, "{v}")?;
            Ok(0)
        }
        Command::Simulate { graph, backend, turns } => {
            let mut s = session(&graph, &backend, io)?;
            let agent = s.graph.config.agent_name.clone();
            let opening = s.reply("")?;
            writeln!(io.out, "[{}] {agent}: {}", opening.node, opening.text)?;
            let mut agreed = 0;
            for i in 0..turns {
                let t = s.simulate_turn()?;
                agreed += usize::from(t.taken_index == Some(t.sampled_index));
                writeln!(io.out, "{}", simulate_line(i + 1, &agent, &t))?;
            }
            writeln!(io.out, "agreement: {agreed}/{turns}")?;
            Ok(0)
        }
        Command::Chat { graph, backend, memory, out_dir } => {
            let mut s = session(&graph, &backend, io)?;
            if let Some(p) = memory {
                let text = std::fs::read_to_string(&p)?;
                s = s.with_memory(MemoryObject::deserialize(&text)?);
            }
            let transcript = chat_loop(&mut s, io)?;
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("transcript.txt"), transcript)?;
                std::fs::write(dir.join("memory.json"), s.memory.serialize())?;
            }
            Ok(0)
        }
        Command::Serve { graph, backend, addr, store, expose_variables } => {
            let loaded = load(&graph, io)?;
            let backends = BackendChoice::from_flag(backend.scripted.as_deref(), &graph.graph)?;
            let state = AppState::new(ServerOptions {
                graph: loaded.graph,
                source: graph.graph.to_string(),
                backends,
                store_dir: store,
                expose_variables,
                seed: backend.seed,
            })?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(state, &addr))?;
            Ok(0)
        }
    }
}

/// An argument given on the command line, evaluated as a constant expression.
pub fn parse_arg(text: &str) -> Result<Value, ExprError> {
    Interpreter::default().evaluate(&parse_source(text)?, &mut MapEnv::new())
}

pub fn simulate_line(turn: usize, agent: &str, t: &SimulatedTurn) -> String {
    let predicted = t.taken_index.map(|i| i.to_string()).unwrap_or_else(|| "interjection".into());
    format!(
        "turn {turn}: [{}] User: {} (sampled {}, predicted {predicted}, agree {})\n[{}] {agent}: {}",
        t.from_node,
        t.user_reply,
        t.sampled_index,
        t.taken_index == Some(t.sampled_index),
        t.reply.node,
        t.reply.text
    )
}

fn say(transcript: &mut String, who: &str, text: &str, out: &mut dyn Write) -> std::io::Result<()> {
    transcript.push_str(&format!("{who}: {text}\n"));
    writeln!(out, "{who}: {text}")
}

/// Reads user lines until EOF or `/quit`; the agent speaks first unless the
/// session was resumed mid-conversation. Returns the transcript text.
pub fn chat_loop(s: &mut Session, io: &mut Io) -> std::io::Result<String> {
    let agent = s.graph.config.agent_name.clone();
    let mut transcript = String::new();
    if s.memory.last_node.is_none() {
        match s.reply("") {
            Ok(r) => say(&mut transcript, &agent, &r.text, io.out)?,
            Err(e) => writeln!(io.err, "error: {e}")?,
        }
    }
    let mut line = String::new();
    loop {
        line.clear();
        if io.input.read_line(&mut line)? == 0 {
            break;
        }
        let text = line.trim_end_matches(['\n', '\r']);
        match text.trim() {
            "/quit" => break,
            "/simulate" => match s.simulate_turn() {
                Ok(t) => {
                    say(&mut transcript, "User", &t.user_reply, io.out)?;
                    say(&mut transcript, &agent, &t.reply.text, io.out)?;
                }
                Err(e) => writeln!(io.err, "error: {e}")?,
            },
            _ => {
                transcript.push_str(&format!("User: {text}\n"));
                match s.reply(text) {
                    Ok(r) => say(&mut transcript, &agent, &r.text, io.out)?,
                    Err(e) => writeln!(io.err, "error: {e}")?,
                }
            }
        }
    }
    Ok(transcript)
}
