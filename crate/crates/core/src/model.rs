//! Nodes, action kinds, the graph container and structural validation.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::AutogramConfig;
use crate::expr::{parse_call_instruction, strip_assignment};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("node name must not be empty")]
    EmptyName,
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("malformed callable name `{0}`")]
    MalformedCallableName(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("wildcard `{0}` matches no nodes")]
    EmptyFamily(String),
    #[error("`{0}` is not a wildcard pattern")]
    NotAWildcard(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Chat,
    ChatExact,
    Thought,
    ExecCode,
    CallLocal,
    CallGlobal,
    CallMixed,
    SetPrompt,
    Transition,
}

impl ActionKind {
    pub const ALL: [ActionKind; 9] = [
        ActionKind::Chat,
        ActionKind::ChatExact,
        ActionKind::Thought,
        ActionKind::ExecCode,
        ActionKind::CallLocal,
        ActionKind::CallGlobal,
        ActionKind::CallMixed,
        ActionKind::SetPrompt,
        ActionKind::Transition,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ActionKind::Chat => "chat",
            ActionKind::ChatExact => "chat_exact",
            ActionKind::Thought => "thought",
            ActionKind::ExecCode => "python_function",
            ActionKind::CallLocal => "local_function",
            ActionKind::CallGlobal => "global_function",
            ActionKind::CallMixed => "function",
            ActionKind::SetPrompt => "prompt",
            ActionKind::Transition => "transition",
        }
    }

    /// Replies to the user (and pauses the reply loop).
    pub fn is_chat(self) -> bool {
        matches!(self, ActionKind::Chat | ActionKind::ChatExact)
    }

    pub fn is_call(self) -> bool {
        matches!(self, ActionKind::CallLocal | ActionKind::CallGlobal | ActionKind::CallMixed)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ActionKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let alias = match s {
            "exec_code" => Some(ActionKind::ExecCode),
            "call_local" => Some(ActionKind::CallLocal),
            "call_global" => Some(ActionKind::CallGlobal),
            "call_mixed" => Some(ActionKind::CallMixed),
            "set_prompt" => Some(ActionKind::SetPrompt),
            _ => None,
        };
        alias
            .or_else(|| ActionKind::ALL.into_iter().find(|a| a.token() == s))
            .ok_or_else(|| ModelError::UnknownAction(s.to_string()))
    }
}

impl Serialize for ActionKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for ActionKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub action: ActionKind,
    #[serde(default)]
    pub instruction: String,
    #[serde(default)]
    pub transitions: Vec<String>,
    #[serde(default)]
    pub transition_question: String,
    #[serde(default)]
    pub transition_choices: Vec<String>,
    #[serde(default)]
    pub boolean_condition: String,
    #[serde(default)]
    pub condition_interjection: String,
    #[serde(default)]
    pub user_instruction_transitions: Vec<String>,
    #[serde(default)]
    pub category: String,
    /// Opaque extra columns carried through from authoring sources.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub extra: IndexMap<String, String>,
}

/// Field names accepted in authoring sources, in canonical order.
pub const NODE_FIELDS: &[&str] = &[
    "name",
    "action",
    "instruction",
    "transitions",
    "transition_question",
    "transition_choices",
    "boolean_condition",
    "condition_interjection",
    "user_instruction_transitions",
    "category",
];

impl NodeSpec {
    pub fn new(name: impl Into<String>, action: ActionKind) -> Self {
        NodeSpec {
            name: name.into(),
            action,
            instruction: String::new(),
            transitions: Vec::new(),
            transition_question: String::new(),
            transition_choices: Vec::new(),
            boolean_condition: String::new(),
            condition_interjection: String::new(),
            user_instruction_transitions: Vec::new(),
            category: String::new(),
            extra: IndexMap::new(),
        }
    }

    pub fn instruction(mut self, s: impl Into<String>) -> Self {
        self.instruction = s.into();
        self
    }

    pub fn transitions<I: IntoIterator<Item = S>, S: Into<String>>(mut self, t: I) -> Self {
        self.transitions = t.into_iter().map(Into::into).collect();
        self
    }

    pub fn question(mut self, q: impl Into<String>) -> Self {
        self.transition_question = q.into();
        self
    }

    pub fn choices<I: IntoIterator<Item = S>, S: Into<String>>(mut self, c: I) -> Self {
        self.transition_choices = c.into_iter().map(Into::into).collect();
        self
    }

    pub fn condition(mut self, c: impl Into<String>) -> Self {
        self.boolean_condition = c.into();
        self
    }

    pub fn interjection(mut self, c: impl Into<String>) -> Self {
        self.condition_interjection = c.into();
        self
    }

    pub fn user_prompts<I: IntoIterator<Item = S>, S: Into<String>>(mut self, p: I) -> Self {
        self.user_instruction_transitions = p.into_iter().map(Into::into).collect();
        self
    }

    pub fn category(mut self, c: impl Into<String>) -> Self {
        self.category = c.into();
        self
    }

    pub fn is_interjection(&self) -> bool {
        !self.condition_interjection.trim().is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallableSignature {
    pub base: String,
    pub params: Vec<String>,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `fibonacci(n)` parses to base `fibonacci` with params `[n]`; names without
/// parentheses are not callable.
pub fn parse_callable_name(name: &str) -> Result<Option<CallableSignature>, ModelError> {
    if !name.contains('(') && !name.contains(')') {
        return Ok(None);
    }
    let bad = || ModelError::MalformedCallableName(name.to_string());
    let open = name.find('(').ok_or_else(bad)?;
    let inner = name[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    if inner.contains('(') || inner.contains(')') {
        return Err(bad());
    }
    let base = name[..open].trim();
    if !is_identifier(base) {
        return Err(bad());
    }
    let params = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|p| {
                let p = p.trim();
                if is_identifier(p) { Ok(p.to_string()) } else { Err(bad()) }
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    let mut seen = HashSet::new();
    if !params.iter().all(|p| seen.insert(p)) {
        return Err(bad());
    }
    Ok(Some(CallableSignature { base: base.to_string(), params }))
}

/// Classified form of a raw transition entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransitionRef<'a> {
    Return(Option<&'a str>),
    Variable(&'a str),
    Wildcard(&'a str),
    Node(&'a str),
}

impl<'a> TransitionRef<'a> {
    pub fn parse(raw: &'a str) -> TransitionRef<'a> {
        let t = raw.trim();
        if t == "return" {
            return TransitionRef::Return(None);
        }
        if let Some(rest) = t.strip_prefix("return ") {
            let rest = rest.trim();
            if is_identifier(rest) {
                return TransitionRef::Return(Some(rest));
            }
        }
        if let Some(v) = t.strip_prefix('$') {
            return TransitionRef::Variable(v);
        }
        if let Some(p) = t.strip_suffix(".*") {
            return TransitionRef::Wildcard(p);
        }
        TransitionRef::Node(t)
    }
}

/// Letter suffix if `name` is `<prefix>.<letter>`.
pub fn wildcard_member_letter(name: &str, prefix: &str) -> Option<char> {
    let rest = name.strip_prefix(prefix)?.strip_prefix('.')?;
    let mut chars = rest.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_lowercase() => Some(c),
        _ => None,
    }
}

#[derive(Clone, Debug, Default)]
pub struct GraphModel {
    nodes: IndexMap<String, NodeSpec>,
    callables: IndexMap<String, String>,
    first: Option<String>,
    pub config: AutogramConfig,
}

impl GraphModel {
    pub fn new(config: AutogramConfig) -> Self {
        GraphModel { config, ..Default::default() }
    }

    pub fn from_nodes(config: AutogramConfig, nodes: impl IntoIterator<Item = NodeSpec>) -> Result<Self, ModelError> {
        let mut g = GraphModel::new(config);
        for n in nodes {
            g.add_node(n)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, spec: NodeSpec) -> Result<String, ModelError> {
        if spec.name.trim().is_empty() {
            return Err(ModelError::EmptyName);
        }
        if self.nodes.contains_key(&spec.name) {
            return Err(ModelError::DuplicateName(spec.name));
        }
        if let Some(sig) = parse_callable_name(&spec.name)? {
            if self.callables.contains_key(&sig.base) {
                return Err(ModelError::DuplicateName(sig.base));
            }
            self.callables.insert(sig.base, spec.name.clone());
        }
        if self.first.is_none() {
            self.first = Some(spec.name.clone());
        }
        let name = spec.name.clone();
        self.nodes.insert(name.clone(), spec);
        Ok(name)
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.get(name)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.contains_key(name)
    }

    /// Configured start node, else the first node added.
    pub fn start_node(&self) -> Option<&str> {
        self.config.start_node.as_deref().or(self.first.as_deref())
    }

    /// Root node name of the callable with this base name.
    pub fn callable_root(&self, base: &str) -> Option<&str> {
        self.callables.get(base).map(|s| s.as_str())
    }

    pub fn callable_signature(&self, base: &str) -> Option<CallableSignature> {
        self.callable_root(base).and_then(|n| parse_callable_name(n).ok().flatten())
    }

    pub fn callables(&self) -> impl Iterator<Item = (&str, &str)> {
        self.callables.iter().map(|(b, n)| (b.as_str(), n.as_str()))
    }

    pub fn interjection_nodes(&self) -> Vec<&NodeSpec> {
        self.nodes.values().filter(|n| n.is_interjection()).collect()
    }

    /// Members `<prefix>.<letter>` of a `.*` pattern, in letter order.
    pub fn resolve_wildcard_family(&self, pattern: &str) -> Result<Vec<&NodeSpec>, ModelError> {
        let prefix = pattern
            .trim()
            .strip_suffix(".*")
            .ok_or_else(|| ModelError::NotAWildcard(pattern.to_string()))?;
        let mut members: Vec<(char, &NodeSpec)> = self
            .nodes
            .values()
            .filter_map(|n| wildcard_member_letter(&n.name, prefix).map(|c| (c, n)))
            .collect();
        if members.is_empty() {
            return Err(ModelError::EmptyFamily(pattern.to_string()));
        }
        members.sort_by_key(|(c, _)| *c);
        Ok(members.into_iter().map(|(_, n)| n).collect())
    }

    /// Nodes directly reachable from `node` through its declared edges.
    pub(crate) fn successors(&self, node: &NodeSpec) -> Vec<String> {
        let mut out = Vec::new();
        for t in &node.transitions {
            match TransitionRef::parse(t) {
                TransitionRef::Node(n) if self.contains(n) => out.push(n.to_string()),
                TransitionRef::Wildcard(_) => {
                    if let Ok(fam) = self.resolve_wildcard_family(t) {
                        out.extend(fam.iter().map(|m| m.name.clone()));
                    }
                }
                _ => {}
            }
        }
        if node.action.is_call() {
            if let Some(callee) = call_callee(&node.instruction) {
                if let Some(root) = self.callable_root(&callee) {
                    out.push(root.to_string());
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_graph(self)
    }
}

/// Callee base name of a call instruction, if it parses.
pub fn call_callee(instruction: &str) -> Option<String> {
    let (_, rest) = strip_assignment(instruction);
    parse_call_instruction(rest).ok().map(|(c, _)| c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    DanglingTransition,
    WildcardFamilyTooSmall,
    WildcardMissingCondition,
    ChoiceMismatch,
    MissingQuestion,
    TooManyChoices,
    MissingCallee,
    MalformedCall,
    Unreachable,
    MissingStartNode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub node: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match &self.node {
            Some(n) => write!(f, "{sev}: {n}: {}", self.message),
            None => write!(f, "{sev}: {}", self.message),
        }
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

pub fn validate_graph(graph: &GraphModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |kind, node: &str, message: String| {
        out.push(Diagnostic { severity: Severity::Error, kind, node: Some(node.to_string()), message })
    };
    let interjections: HashSet<&str> = graph.interjection_nodes().iter().map(|n| n.name.as_str()).collect();
    let mut checked_families = HashSet::new();

    for node in graph.nodes() {
        for t in &node.transitions {
            match TransitionRef::parse(t) {
                TransitionRef::Return(_) | TransitionRef::Variable(_) => {}
                TransitionRef::Wildcard(_) => match graph.resolve_wildcard_family(t) {
                    Err(_) => err(DiagnosticKind::DanglingTransition, &node.name, format!("wildcard `{t}` matches no nodes")),
                    Ok(fam) => {
                        if !checked_families.insert(t.trim().to_string()) {
                            continue;
                        }
                        if fam.len() < 2 {
                            err(
                                DiagnosticKind::WildcardFamilyTooSmall,
                                &node.name,
                                format!("wildcard `{t}` has {} member(s); at least 2 are required", fam.len()),
                            );
                        }
                        if fam.len() > 26 {
                            err(DiagnosticKind::TooManyChoices, &node.name, format!("wildcard `{t}` has more than 26 members"));
                        }
                        for m in &fam[..fam.len().saturating_sub(1)] {
                            if m.boolean_condition.trim().is_empty() {
                                err(
                                    DiagnosticKind::WildcardMissingCondition,
                                    &m.name,
                                    format!("non-final member of `{t}` has no boolean_condition"),
                                );
                            }
                        }
                    }
                },
                TransitionRef::Node(n) => {
                    if !graph.contains(n) {
                        err(DiagnosticKind::DanglingTransition, &node.name, format!("transition to unknown node `{n}`"));
                    }
                }
            }
        }

        let structural = node.transitions.iter().any(|t| interjections.contains(t.trim()));
        if node.transitions.len() > 1 && !structural && !node.action.is_call() {
            if node.transition_choices.len() != node.transitions.len() {
                err(
                    DiagnosticKind::ChoiceMismatch,
                    &node.name,
                    format!(
                        "{} transitions but {} transition_choices",
                        node.transitions.len(),
                        node.transition_choices.len()
                    ),
                );
            }
            if node.transition_question.trim().is_empty() {
                err(DiagnosticKind::MissingQuestion, &node.name, "multiple transitions need a transition_question".into());
            }
        }
        if node.transition_choices.len() > 26 {
            err(DiagnosticKind::TooManyChoices, &node.name, "more than 26 transition_choices".into());
        }

        if node.action.is_call() && !node.instruction.contains('$') {
            match call_callee(&node.instruction) {
                None => err(DiagnosticKind::MalformedCall, &node.name, format!("`{}` is not a function call", node.instruction)),
                Some(c) => {
                    if graph.callable_root(&c).is_none() {
                        err(DiagnosticKind::MissingCallee, &node.name, format!("no callable node for `{c}`"));
                    }
                }
            }
        }
    }

    if !graph.is_empty() {
        match graph.start_node() {
            Some(s) if graph.contains(s) => {}
            Some(s) => out.push(Diagnostic {
                severity: Severity::Error,
                kind: DiagnosticKind::MissingStartNode,
                node: None,
                message: format!("start node `{s}` does not exist"),
            }),
            None => {}
        }
        out.extend(unreachable_warnings(graph));
    }
    out
}

fn unreachable_warnings(graph: &GraphModel) -> Vec<Diagnostic> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut queue: VecDeque<String> = VecDeque::new();
    let mut roots: Vec<String> = graph.start_node().filter(|s| graph.contains(s)).map(str::to_string).into_iter().collect();
    roots.extend(graph.callables().map(|(_, n)| n.to_string()));
    for r in roots {
        if seen.insert(r.clone()) {
            queue.push_back(r);
        }
    }
    let mut dynamic = false;
    let mut any_chat = false;
    while let Some(name) = queue.pop_front() {
        let Some(node) = graph.node(&name) else { continue };
        any_chat |= node.action.is_chat();
        dynamic |= node.transitions.iter().any(|t| matches!(TransitionRef::parse(t), TransitionRef::Variable(_)));
        let mut next = graph.successors(node);
        if any_chat {
            next.extend(graph.interjection_nodes().iter().map(|n| n.name.clone()));
        }
        for n in next {
            if seen.insert(n.clone()) {
                queue.push_back(n);
            }
        }
    }
    if dynamic {
        return Vec::new();
    }
    graph
        .nodes()
        .filter(|n| !seen.contains(&n.name))
        .map(|n| Diagnostic {
            severity: Severity::Warning,
            kind: DiagnosticKind::Unreachable,
            node: Some(n.name.clone()),
            message: "node is unreachable from the start node".into(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_tokens_round_trip() {
        for a in ActionKind::ALL {
            assert_eq!(a.token().parse::<ActionKind>().unwrap(), a);
        }
        assert_eq!(ActionKind::ExecCode.token(), "python_function");
        assert_eq!("exec_code".parse::<ActionKind>().unwrap(), ActionKind::ExecCode);
        assert!("python".parse::<ActionKind>().is_err());
    }

    #[test]
    fn callable_names() {
        let s = parse_callable_name("summarize_and_combine(text1,text2)").unwrap().unwrap();
        assert_eq!(s.base, "summarize_and_combine");
        assert_eq!(s.params, vec!["text1", "text2"]);
        assert_eq!(parse_callable_name("ask_question").unwrap(), None);
        assert_eq!(parse_callable_name("fibonacci( n )").unwrap().unwrap().params, vec!["n"]);
        assert!(parse_callable_name("summarize()").unwrap().unwrap().params.is_empty());
        assert!(parse_callable_name("f(").is_err());
        assert!(parse_callable_name("f(1x)").is_err());
    }

    #[test]
    fn add_node_rules() {
        let mut g = GraphModel::default();
        g.add_node(NodeSpec::new("intro", ActionKind::ChatExact).instruction("Hi there, What can i help you with?")).unwrap();
        assert_eq!(g.start_node(), Some("intro"));
        assert!(g.callable_root("intro").is_none());
        g.add_node(NodeSpec::new("summarize()", ActionKind::Transition)).unwrap();
        assert_eq!(g.callable_root("summarize"), Some("summarize()"));
        assert_eq!(g.add_node(NodeSpec::new("intro", ActionKind::Chat)), Err(ModelError::DuplicateName("intro".into())));
    }

    #[test]
    fn transition_refs() {
        assert_eq!(TransitionRef::parse("return"), TransitionRef::Return(None));
        assert_eq!(TransitionRef::parse("return new_name"), TransitionRef::Return(Some("new_name")));
        assert_eq!(TransitionRef::parse("$next_node"), TransitionRef::Variable("next_node"));
        assert_eq!(TransitionRef::parse("c.*"), TransitionRef::Wildcard("c"));
        assert_eq!(TransitionRef::parse("x"), TransitionRef::Node("x"));
    }

    #[test]
    fn wildcard_family_order() {
        let mut g = GraphModel::default();
        for l in ["c", "a", "d", "b"] {
            g.add_node(NodeSpec::new(format!("fibonacci_conditional.{l}"), ActionKind::Transition)).unwrap();
        }
        g.add_node(NodeSpec::new("fibonacci_conditional.ab", ActionKind::Transition)).unwrap();
        let fam = g.resolve_wildcard_family("fibonacci_conditional.*").unwrap();
        let names: Vec<_> = fam.iter().map(|n| n.name.as_str()).collect();
        assert_eq!(names, ["fibonacci_conditional.a", "fibonacci_conditional.b", "fibonacci_conditional.c", "fibonacci_conditional.d"]);
        assert!(matches!(g.resolve_wildcard_family("nope.*"), Err(ModelError::EmptyFamily(_))));
    }

    #[test]
    fn validation_diagnostics() {
        let mut g = GraphModel::default();
        g.add_node(NodeSpec::new("start", ActionKind::Thought).transitions(["nodeX"])).unwrap();
        let d = validate_graph(&g);
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::DanglingTransition));

        let mut g = GraphModel::default();
        g.add_node(NodeSpec::new("start", ActionKind::Transition).transitions(["c.*"])).unwrap();
        g.add_node(NodeSpec::new("c.a", ActionKind::Transition)).unwrap();
        g.add_node(NodeSpec::new("c.b", ActionKind::Transition)).unwrap();
        let d = validate_graph(&g);
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::WildcardMissingCondition && d.node.as_deref() == Some("c.a")));

        let mut g = GraphModel::default();
        g.add_node(NodeSpec::new("a", ActionKind::Chat).transitions(["b", "a"]).question("q?").choices(["x"])).unwrap();
        g.add_node(NodeSpec::new("b", ActionKind::ExecCode).instruction("x = f(1)").transitions(["a"])).unwrap();
        g.add_node(NodeSpec::new("b2", ActionKind::CallLocal).instruction("x = f(1)")).unwrap();
        let d = validate_graph(&g);
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::ChoiceMismatch));
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::MissingCallee));
        assert!(d.iter().any(|d| d.kind == DiagnosticKind::Unreachable && d.severity == Severity::Warning));
    }
}
