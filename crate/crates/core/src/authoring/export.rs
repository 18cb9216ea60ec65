use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::AuthoringError;
use crate::config::AutogramConfig;
use crate::model::{call_callee, GraphModel, NodeSpec, TransitionRef};

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Standard,
    Wildcard,
    Return,
    Variable,
    FunctionCall,
    Interjection,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
    #[serde(default)]
    pub label: String,
}

/// JSON view of a graph for the studio. Return edges point at synthetic
/// `return:<function>` sinks that exist only in the document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub version: u32,
    pub start_node: Option<String>,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<Edge>,
}

impl GraphDocument {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, AuthoringError> {
        let doc: GraphDocument = serde_json::from_str(text).map_err(|e| AuthoringError::Document(e.to_string()))?;
        if doc.version != DOCUMENT_VERSION {
            return Err(AuthoringError::Document(format!("unsupported version {}", doc.version)));
        }
        Ok(doc)
    }
}

/// Function whose body contains each node: BFS from every callable root
/// along ordinary and wildcard transitions. The first root to reach a node
/// claims it.
fn owners(graph: &GraphModel) -> HashMap<String, String> {
    let mut owner = HashMap::new();
    for (base, root) in graph.callables() {
        let mut queue = VecDeque::from([root.to_string()]);
        while let Some(n) = queue.pop_front() {
            if owner.contains_key(&n) {
                continue;
            }
            let Some(spec) = graph.node(&n) else { continue };
            owner.insert(n.clone(), base.to_string());
            for t in &spec.transitions {
                match TransitionRef::parse(t) {
                    TransitionRef::Node(x) => queue.push_back(x.to_string()),
                    TransitionRef::Wildcard(_) => {
                        if let Ok(fam) = graph.resolve_wildcard_family(t) {
                            queue.extend(fam.into_iter().map(|m| m.name.clone()));
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    owner
}

/// Edges implied by node fields, in node order.
pub fn derive_edges(graph: &GraphModel) -> Vec<Edge> {
    let owner = owners(graph);
    let interjections: Vec<&NodeSpec> = graph.interjection_nodes();
    let mut edges = Vec::new();
    for n in graph.nodes() {
        let edge = |to: String, kind: EdgeKind, label: String| Edge { from: n.name.clone(), to, kind, label };
        for (i, t) in n.transitions.iter().enumerate() {
            let choice = n.transition_choices.get(i).cloned().unwrap_or_default();
            match TransitionRef::parse(t) {
                TransitionRef::Node(x) => edges.push(edge(x.to_string(), EdgeKind::Standard, choice)),
                TransitionRef::Variable(_) => edges.push(edge(t.trim().to_string(), EdgeKind::Variable, choice)),
                TransitionRef::Return(var) => {
                    let sink = match owner.get(&n.name) {
                        Some(f) => format!("return:{f}"),
                        None => "return".to_string(),
                    };
                    edges.push(edge(sink, EdgeKind::Return, var.unwrap_or("").to_string()));
                }
                TransitionRef::Wildcard(_) => {
                    if let Ok(fam) = graph.resolve_wildcard_family(t) {
                        for m in fam {
                            edges.push(edge(m.name.clone(), EdgeKind::Wildcard, m.boolean_condition.clone()));
                        }
                    }
                }
            }
        }
        if n.action.is_call() {
            if let Some(root) = call_callee(&n.instruction).and_then(|c| graph.callable_root(&c)) {
                edges.push(edge(root.to_string(), EdgeKind::FunctionCall, n.instruction.clone()));
            }
        }
        if n.action.is_chat() {
            for j in &interjections {
                edges.push(edge(j.name.clone(), EdgeKind::Interjection, j.condition_interjection.clone()));
            }
        }
    }
    edges
}

/// Document for the whole graph, or only the nodes of one category plus the
/// edges touching them.
pub fn export_graph_document(graph: &GraphModel, category: Option<&str>) -> GraphDocument {
    let keep = |name: &str| match category {
        None => true,
        Some(c) => graph.node(name).is_some_and(|n| n.category == c),
    };
    let nodes = graph.nodes().filter(|n| keep(&n.name)).cloned().collect();
    let edges = derive_edges(graph).into_iter().filter(|e| keep(&e.from) || keep(&e.to)).collect();
    GraphDocument { version: DOCUMENT_VERSION, start_node: graph.start_node().map(str::to_string), nodes, edges }
}

/// Rebuilds a graph from a document's nodes; edges are not consulted.
pub fn import_graph_document(doc: &GraphDocument, mut config: AutogramConfig) -> Result<GraphModel, AuthoringError> {
    let first = doc.nodes.first().map(|n| n.name.clone());
    if doc.start_node.is_some() && doc.start_node != first && config.start_node.is_none() {
        config.start_node = doc.start_node.clone();
    }
    Ok(GraphModel::from_nodes(config, doc.nodes.iter().cloned())?)
}
