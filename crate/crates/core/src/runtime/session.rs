use std::collections::HashMap;
use std::sync::Arc;

use indexmap::IndexMap;

use super::env::RtEnv;
use super::{NodeOutcome, RuntimeError};
use crate::expr::{parse_source, render_dollar, Expr, HostRegistry, Interpreter, Value};
use crate::llm::{Backends, ChatPrompt};
use crate::memory::{FrameKind, MemoryObject};
use crate::model::{has_errors, validate_graph, GraphModel, NodeSpec, TransitionRef};

/// Classifier decision taken while choosing a transition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionEvent {
    pub node: String,
    pub index: usize,
    pub clamped: bool,
    pub interjection: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplyOutcome {
    pub text: String,
    pub node: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    Reply,
    ApplyFn,
    RunToEnd,
}

pub(crate) enum Step {
    Continue,
    Chat(ReplyOutcome),
    Returned(Value),
    Finished,
}

pub(crate) enum Target {
    Node(String),
    Returned(Value),
    Finished,
}

/// One conversation (or function evaluation) over a graph.
pub struct Session {
    pub graph: GraphModel,
    pub memory: MemoryObject,
    pub backends: Backends,
    /// Seed for simulate_user sampling.
    pub seed: u64,
    pub(crate) interp: Interpreter,
    cache: HashMap<String, Arc<Expr>>,
    /// Last prompt sent to the chatbot, for inspection.
    pub last_chat_prompt: Option<ChatPrompt>,
    /// Classifier decisions made during the most recent reply.
    pub transition_log: Vec<TransitionEvent>,
    /// Deepest function nesting reached by the most recent apply_fn.
    pub peak_depth: usize,
}

impl Session {
    pub fn new(graph: GraphModel, backends: Backends) -> Result<Self, RuntimeError> {
        Self::with_host_registry(graph, backends, HostRegistry::standard())
    }

    /// Session whose host functions come from `registry`, restricted to the
    /// names listed in the configuration.
    pub fn with_host_registry(graph: GraphModel, backends: Backends, registry: HostRegistry) -> Result<Self, RuntimeError> {
        graph.config.check()?;
        let diags = validate_graph(&graph);
        if has_errors(&diags) {
            return Err(RuntimeError::InvalidGraph(diags.into_iter().filter(|d| d.severity == crate::model::Severity::Error).collect()));
        }
        let host = registry
            .restricted_to(&graph.config.host_function_names)
            .map_err(crate::config::ConfigError::UnknownHostFunction)?;
        let interp = Interpreter::new(graph.config.allowed_builtins.iter().cloned(), host);
        let memory = MemoryObject::new(graph.config.initial_prompt.clone());
        Ok(Session {
            graph,
            memory,
            backends,
            seed: 0,
            interp,
            cache: HashMap::new(),
            last_chat_prompt: None,
            transition_log: Vec::new(),
            peak_depth: 0,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_memory(mut self, memory: MemoryObject) -> Self {
        self.memory = memory;
        self
    }

    pub(crate) fn node(&self, name: &str) -> Result<&NodeSpec, RuntimeError> {
        self.graph.node(name).ok_or_else(|| RuntimeError::UnknownNode(name.to_string()))
    }

    pub(crate) fn parse_cached(&mut self, node: &str, src: &str) -> Result<Arc<Expr>, RuntimeError> {
        if let Some(e) = self.cache.get(src) {
            return Ok(e.clone());
        }
        let e = Arc::new(parse_source(src).map_err(|source| RuntimeError::Expr { node: node.to_string(), source })?);
        self.cache.insert(src.to_string(), e.clone());
        Ok(e)
    }

    pub(crate) fn eval_expr(&mut self, node: &str, expr: &Expr) -> Result<Value, RuntimeError> {
        let self_ref = self.graph.config.self_referential;
        let mut env = RtEnv { memory: &self.memory, graph: &mut self.graph, self_ref };
        self.interp.evaluate(expr, &mut env).map_err(|source| RuntimeError::Expr { node: node.to_string(), source })
    }

    pub(crate) fn eval_src(&mut self, node: &str, src: &str) -> Result<Value, RuntimeError> {
        let e = self.parse_cached(node, src)?;
        self.eval_expr(node, &e)
    }

    pub(crate) fn render(&self, node: &str, template: &str) -> Result<String, RuntimeError> {
        let memory = &self.memory;
        render_dollar(template, &|n| memory.lookup(n), self.graph.config.undefined_dollar_policy)
            .map_err(|source| RuntimeError::Expr { node: node.to_string(), source })
    }

    /// Steps 1-2: bind the previous node's output to its assignment target.
    fn commit_output(&mut self) {
        let top = self.memory.top_mut();
        if let Some(t) = top.pending_assign_target.take() {
            let v = top.last_instruction_output.clone();
            top.variables.insert(t, v);
        }
    }

    fn step(&mut self, mode: Mode) -> Result<Step, RuntimeError> {
        let next = match self.memory.last_node.clone() {
            None => self.graph.start_node().ok_or(RuntimeError::NoStartNode)?.to_string(),
            Some(prev) => {
                self.commit_output();
                let spec = self.node(&prev)?.clone();
                if mode == Mode::RunToEnd && spec.transitions.is_empty() && !spec.action.is_call() {
                    return Ok(Step::Finished);
                }
                let raw = self.apply_transition(&spec, true)?;
                match self.post_process_transition(&prev, raw, mode)? {
                    Target::Node(n) => n,
                    Target::Returned(v) => return Ok(Step::Returned(v)),
                    Target::Finished => return Ok(Step::Finished),
                }
            }
        };
        let out = self.apply_instruction(&next, mode)?;
        if out.is_user_facing {
            return Ok(Step::Chat(ReplyOutcome { text: out.text_output, node: next }));
        }
        Ok(Step::Continue)
    }

    /// Runs the loop until a chat node replies. Memory rolls back to the last
    /// completed iteration on error.
    pub fn reply(&mut self, user_reply: &str) -> Result<ReplyOutcome, RuntimeError> {
        self.transition_log.clear();
        let self_ref = self.graph.config.self_referential;
        let mut snapshot = self.memory.deep_clone();
        let mut graph_snapshot = self_ref.then(|| self.graph.clone());
        if self.memory.last_node.is_some() || !user_reply.is_empty() {
            self.memory.pending_user_reply = Some(user_reply.to_string());
        }
        let cap = self.graph.config.max_steps_per_reply;
        let mut steps = 0;
        loop {
            steps += 1;
            let res = if steps > cap { Err(RuntimeError::StepLimitExceeded(cap)) } else { self.step(Mode::Reply) };
            match res {
                Ok(Step::Chat(out)) => return Ok(out),
                Ok(Step::Continue) => {
                    snapshot = self.memory.deep_clone();
                    if self_ref {
                        graph_snapshot = Some(self.graph.clone());
                    }
                }
                Ok(Step::Returned(_)) | Ok(Step::Finished) => unreachable!("reply mode never finishes without a chat node"),
                Err(e) => {
                    self.memory = snapshot;
                    if let Some(g) = graph_snapshot {
                        self.graph = g;
                    }
                    return Err(e);
                }
            }
        }
    }

    /// Calls a callable subgraph directly and returns its value.
    pub fn apply_fn(&mut self, name: &str, args: Vec<Value>) -> Result<Value, RuntimeError> {
        let base = name.split('(').next().unwrap_or(name).trim();
        let root = self.graph.callable_root(base).ok_or_else(|| RuntimeError::UnknownCallable(base.to_string()))?.to_string();
        let sig = self.graph.callable_signature(base).expect("registered callables parse");
        if sig.params.len() != args.len() {
            return Err(RuntimeError::ArityMismatch { callee: base.to_string(), expected: sig.params.len(), got: args.len() });
        }
        let snapshot = self.memory.deep_clone();
        let saved_last = self.memory.last_node.clone();
        let bound: IndexMap<String, Value> = sig.params.into_iter().zip(args).collect();
        self.memory.push_frame(FrameKind::Local, None, bound);
        let base_depth = self.memory.depth() - 1;
        self.peak_depth = 1;
        let res = self.run_call(&root, base_depth);
        match res {
            Ok(v) => {
                self.memory.last_node = saved_last;
                Ok(v)
            }
            Err(e) => {
                self.memory = snapshot;
                Err(e)
            }
        }
    }

    fn run_call(&mut self, root: &str, base_depth: usize) -> Result<Value, RuntimeError> {
        self.apply_instruction(root, Mode::ApplyFn)?;
        let cap = self.graph.config.max_steps_per_call;
        for _ in 0..cap {
            let step = self.step(Mode::ApplyFn)?;
            self.peak_depth = self.peak_depth.max(self.memory.depth().saturating_sub(base_depth));
            match step {
                Step::Returned(v) => return Ok(v),
                Step::Continue => {}
                Step::Chat(out) => return Err(RuntimeError::ChatInsideApplyFn(out.node)),
                Step::Finished => unreachable!("apply_fn ends at a return"),
            }
        }
        Err(RuntimeError::StepLimitExceeded(cap))
    }

    /// Executes from the start node until a node with no transitions, and
    /// commits its output. Used for non-conversational programs.
    pub fn run_to_end(&mut self) -> Result<(), RuntimeError> {
        let cap = self.graph.config.max_steps_per_call;
        if self.graph.is_empty() {
            return Ok(());
        }
        for _ in 0..cap {
            match self.step(Mode::RunToEnd)? {
                Step::Finished => return Ok(()),
                Step::Continue => {}
                Step::Chat(out) => return Err(RuntimeError::ChatInsideApplyFn(out.node)),
                Step::Returned(_) => unreachable!("top-level returns are rejected"),
            }
        }
        Err(RuntimeError::StepLimitExceeded(cap))
    }

    /// Step 4: resolves variable, return and wildcard transitions.
    pub(crate) fn post_process_transition(&mut self, from: &str, raw: String, mode: Mode) -> Result<Target, RuntimeError> {
        let mut from = from.to_string();
        let mut raw = raw;
        let mut rendered = false;
        loop {
            let owned = raw.trim().to_string();
            match TransitionRef::parse(&owned) {
                TransitionRef::Variable(_) => {
                    if rendered {
                        return Err(RuntimeError::UnresolvedVariableTransition { node: from, raw: owned });
                    }
                    rendered = true;
                    raw = self.render(&from, &owned)?;
                }
                TransitionRef::Return(var) => {
                    let value = match var {
                        Some(v) => self
                            .memory
                            .lookup_variable(v)
                            .map_err(|source| RuntimeError::Memory { node: from.clone(), source })?,
                        None => self.memory.top().last_instruction_output.clone(),
                    };
                    if self.memory.depth() == 1 {
                        return Err(RuntimeError::ReturnAtRoot(from));
                    }
                    if self.memory.top().calling_node.is_none() {
                        // apply_fn entry frame: nothing in the caller waits for the value.
                        self.memory.stack.pop();
                        return Ok(Target::Returned(value));
                    }
                    let (calling, value) = self
                        .memory
                        .pop_frame(value)
                        .map_err(|source| RuntimeError::Memory { node: from.clone(), source })?;
                    self.memory.top_mut().last_instruction_output = value;
                    let caller = calling.expect("checked above");
                    let spec = self.node(&caller)?.clone();
                    if spec.transitions.is_empty() {
                        if mode == Mode::RunToEnd && self.memory.depth() == 1 {
                            return Ok(Target::Finished);
                        }
                        return Err(RuntimeError::EmptyTransitions(caller));
                    }
                    raw = self.apply_transition(&spec, false)?;
                    from = caller;
                    rendered = false;
                }
                TransitionRef::Wildcard(_) => {
                    let family: Vec<NodeSpec> =
                        self.graph.resolve_wildcard_family(&owned)?.into_iter().cloned().collect();
                    let last = family.len() - 1;
                    for (i, member) in family.iter().enumerate() {
                        let cond = member.boolean_condition.trim();
                        if i == last || cond.is_empty() {
                            return Ok(Target::Node(member.name.clone()));
                        }
                        let v = self.eval_src(&member.name, cond)?;
                        let truthy = crate::expr::truthiness(&v)
                            .map_err(|source| RuntimeError::Expr { node: member.name.clone(), source })?;
                        if truthy {
                            return Ok(Target::Node(member.name.clone()));
                        }
                    }
                    unreachable!("the final member is always selected");
                }
                TransitionRef::Node(n) => {
                    return if self.graph.contains(n) {
                        Ok(Target::Node(n.to_string()))
                    } else {
                        Err(RuntimeError::UnknownNode(n.to_string()))
                    };
                }
            }
        }
    }

    pub fn set_host_registry(&mut self, registry: HostRegistry) -> Result<(), RuntimeError> {
        let host = registry
            .restricted_to(&self.graph.config.host_function_names)
            .map_err(crate::config::ConfigError::UnknownHostFunction)?;
        self.interp = Interpreter::new(self.graph.config.allowed_builtins.iter().cloned(), host);
        Ok(())
    }

    pub fn current_node(&self) -> Option<&str> {
        self.memory.last_node.as_deref()
    }

    pub(crate) fn outcome(text: String, value: Value, user_facing: bool) -> NodeOutcome {
        NodeOutcome { text_output: text, value_output: value, is_user_facing: user_facing }
    }
}
