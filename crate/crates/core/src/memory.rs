//! The memory object: a stack of scoped frames plus visit logs.

use std::collections::HashMap;
use std::sync::Arc;

use indexmap::IndexMap;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map as JsonMap, Value as Json};

use crate::expr::Value;
use crate::model::ActionKind;

pub const MEMORY_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MemoryError {
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("cannot pop the root frame")]
    PopRoot,
    #[error("corrupt memory document: {0}")]
    CorruptDocument(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub node_name: String,
    pub node_action: ActionKind,
    pub instruction_rendered: String,
    #[serde(default)]
    pub user_reply: String,
    #[serde(default)]
    pub model_output: String,
    pub is_reply_to_user: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Root,
    Local,
    Global,
    Mixed,
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub kind: FrameKind,
    pub variables: IndexMap<String, Value>,
    pub turns: Vec<TurnRecord>,
    pub calling_node: Option<String>,
    pub pending_assign_target: Option<String>,
    pub last_instruction_output: Value,
}

impl Frame {
    pub fn new(kind: FrameKind, calling_node: Option<String>) -> Self {
        Frame {
            kind,
            variables: IndexMap::new(),
            turns: Vec::new(),
            calling_node,
            pending_assign_target: None,
            last_instruction_output: Value::Null,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MemoryObject {
    pub stack: Vec<Frame>,
    pub visit_log: Vec<String>,
    pub last_node: Option<String>,
    pub current_initial_prompt: String,
    /// User reply received but not yet recorded in a turn.
    pub pending_user_reply: Option<String>,
}

impl Default for MemoryObject {
    fn default() -> Self {
        MemoryObject::new(String::new())
    }
}

impl MemoryObject {
    pub fn new(initial_prompt: String) -> Self {
        MemoryObject {
            stack: vec![Frame::new(FrameKind::Root, None)],
            visit_log: Vec::new(),
            last_node: None,
            current_initial_prompt: initial_prompt,
            pending_user_reply: None,
        }
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn top(&self) -> &Frame {
        self.stack.last().expect("memory stack is never empty")
    }

    pub fn top_mut(&mut self) -> &mut Frame {
        self.stack.last_mut().expect("memory stack is never empty")
    }

    pub fn push_frame(&mut self, kind: FrameKind, calling_node: Option<String>, bound: IndexMap<String, Value>) {
        debug_assert!(kind != FrameKind::Root);
        let mut f = Frame::new(kind, calling_node);
        f.variables = bound;
        self.stack.push(f);
    }

    /// Pops the top frame, merging it into the caller if it is global, and
    /// delivers `return_value` to the caller's pending assignment target.
    pub fn pop_frame(&mut self, return_value: Value) -> Result<(Option<String>, Value), MemoryError> {
        if self.stack.len() < 2 {
            return Err(MemoryError::PopRoot);
        }
        let popped = self.stack.pop().expect("checked depth");
        let top = self.top_mut();
        if popped.kind == FrameKind::Global {
            top.variables.extend(popped.variables);
            top.turns.extend(popped.turns);
        }
        if let Some(target) = top.pending_assign_target.take() {
            top.variables.insert(target, return_value.clone());
        }
        Ok((popped.calling_node, return_value))
    }

    /// Frames visible from the top, bottom-most first. A local frame cuts off
    /// everything beneath it.
    fn visible_range(&self) -> std::ops::Range<usize> {
        let mut start = 0;
        for (i, f) in self.stack.iter().enumerate().rev() {
            if f.kind == FrameKind::Local {
                start = i;
                break;
            }
        }
        start..self.stack.len()
    }

    pub fn lookup(&self, name: &str) -> Option<Value> {
        self.stack[self.visible_range()].iter().rev().find_map(|f| f.variables.get(name).cloned())
    }

    pub fn lookup_variable(&self, name: &str) -> Result<Value, MemoryError> {
        self.lookup(name).ok_or_else(|| MemoryError::UnknownName(name.to_string()))
    }

    pub fn assign_variable(&mut self, name: &str, value: Value) {
        self.top_mut().variables.insert(name.to_string(), value);
    }

    pub fn visible_variable_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for f in &self.stack[self.visible_range()] {
            for k in f.variables.keys() {
                if !names.contains(k) {
                    names.push(k.clone());
                }
            }
        }
        names
    }

    pub fn visible_turns(&self) -> Vec<&TurnRecord> {
        self.stack[self.visible_range()].iter().flat_map(|f| f.turns.iter()).collect()
    }

    pub fn record_turn(&mut self, turn: TurnRecord) {
        self.top_mut().turns.push(turn);
    }

    /// Independent copy; aliasing between containers is preserved within the copy.
    pub fn deep_clone(&self) -> MemoryObject {
        let mut seen = HashMap::new();
        let mut out = self.clone();
        for f in &mut out.stack {
            for v in f.variables.values_mut() {
                *v = v.deep_copy_with(&mut seen);
            }
            f.last_instruction_output = f.last_instruction_output.deep_copy_with(&mut seen);
        }
        out
    }

    pub fn to_json(&self) -> Json {
        let mut enc = Encoder::default();
        let stack: Vec<Json> = self
            .stack
            .iter()
            .map(|f| {
                let vars: JsonMap<String, Json> =
                    f.variables.iter().map(|(k, v)| (k.clone(), enc.encode(v))).collect();
                json!({
                    "kind": f.kind,
                    "variables": vars,
                    "turns": f.turns,
                    "calling_node": f.calling_node,
                    "pending_assign_target": f.pending_assign_target,
                    "last_instruction_output": enc.encode(&f.last_instruction_output),
                })
            })
            .collect();
        json!({
            "version": MEMORY_VERSION,
            "stack": stack,
            "visit_log": self.visit_log,
            "last_node": self.last_node,
            "current_initial_prompt": self.current_initial_prompt,
            "pending_user_reply": self.pending_user_reply,
        })
    }

    pub fn serialize(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("memory serializes")
    }

    pub fn deserialize(doc: &str) -> Result<MemoryObject, MemoryError> {
        let j: Json = serde_json::from_str(doc).map_err(|e| MemoryError::CorruptDocument(e.to_string()))?;
        Self::from_json(&j)
    }

    pub fn from_json(j: &Json) -> Result<MemoryObject, MemoryError> {
        let corrupt = |m: &str| MemoryError::CorruptDocument(m.to_string());
        let version = j.get("version").and_then(Json::as_u64).ok_or_else(|| corrupt("missing version"))?;
        if version != MEMORY_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let mut dec = Decoder::default();
        let frames = j.get("stack").and_then(Json::as_array).ok_or_else(|| corrupt("missing stack"))?;
        let mut stack = Vec::with_capacity(frames.len());
        for f in frames {
            let kind: FrameKind = field(f, "kind")?;
            let mut variables = IndexMap::new();
            let vars = f.get("variables").and_then(Json::as_object).ok_or_else(|| corrupt("frame variables"))?;
            for (k, v) in vars {
                variables.insert(k.clone(), dec.decode(v)?);
            }
            let last = match f.get("last_instruction_output") {
                Some(v) => dec.decode(v)?,
                None => Value::Null,
            };
            stack.push(Frame {
                kind,
                variables,
                turns: field(f, "turns")?,
                calling_node: field(f, "calling_node")?,
                pending_assign_target: field(f, "pending_assign_target")?,
                last_instruction_output: last,
            });
        }
        if stack.is_empty() || stack[0].kind != FrameKind::Root {
            return Err(corrupt("stack must start with a root frame"));
        }
        Ok(MemoryObject {
            stack,
            visit_log: field(j, "visit_log")?,
            last_node: field(j, "last_node")?,
            current_initial_prompt: field(j, "current_initial_prompt")?,
            pending_user_reply: j.get("pending_user_reply").map(|v| serde_json::from_value(v.clone())).transpose().map_err(|e| corrupt(&e.to_string()))?.flatten(),
        })
    }
}

fn field<T: serde::de::DeserializeOwned>(j: &Json, name: &str) -> Result<T, MemoryError> {
    let v = j.get(name).ok_or_else(|| MemoryError::CorruptDocument(format!("missing field `{name}`")))?;
    serde_json::from_value(v.clone()).map_err(|e| MemoryError::CorruptDocument(format!("field `{name}`: {e}")))
}

#[derive(Default)]
struct Encoder {
    ids: HashMap<usize, u64>,
}

impl Encoder {
    fn encode(&mut self, v: &Value) -> Json {
        match v {
            Value::Null => json!({"t": "null"}),
            Value::Bool(b) => json!({"t": "bool", "v": b}),
            Value::Int(i) => json!({"t": "int", "v": i}),
            Value::Float(x) if x.is_finite() => json!({"t": "float", "v": x}),
            Value::Float(x) => json!({"t": "float", "v": crate::expr::value::format_float(*x)}),
            Value::Str(s) => json!({"t": "str", "v": s}),
            Value::List(l) => {
                let key = Arc::as_ptr(l) as usize;
                if let Some(id) = self.ids.get(&key) {
                    return json!({"t": "ref", "id": id});
                }
                let id = self.ids.len() as u64;
                self.ids.insert(key, id);
                let items: Vec<Json> = l.read_recursive().iter().map(|x| self.encode(x)).collect();
                json!({"t": "list", "id": id, "v": items})
            }
            Value::Map(m) => {
                let key = Arc::as_ptr(m) as usize;
                if let Some(id) = self.ids.get(&key) {
                    return json!({"t": "ref", "id": id});
                }
                let id = self.ids.len() as u64;
                self.ids.insert(key, id);
                let entries: JsonMap<String, Json> =
                    m.read_recursive().iter().map(|(k, x)| (k.clone(), self.encode(x))).collect();
                json!({"t": "map", "id": id, "v": entries})
            }
            Value::HostFunction(n) => json!({"t": "host_function", "v": n}),
            Value::EngineHandle => json!({"t": "engine_handle"}),
        }
    }
}

#[derive(Default)]
struct Decoder {
    containers: HashMap<u64, Value>,
}

impl Decoder {
    fn decode(&mut self, j: &Json) -> Result<Value, MemoryError> {
        let corrupt = |m: String| MemoryError::CorruptDocument(m);
        let t = j.get("t").and_then(Json::as_str).ok_or_else(|| corrupt(format!("value without type tag: {j}")))?;
        let payload = j.get("v");
        let need = || payload.ok_or_else(|| corrupt(format!("`{t}` value without payload")));
        Ok(match t {
            "null" => Value::Null,
            "bool" => Value::Bool(need()?.as_bool().ok_or_else(|| corrupt("bad bool".into()))?),
            "int" => Value::Int(need()?.as_i64().ok_or_else(|| corrupt("bad int".into()))?),
            "float" => match need()? {
                Json::String(s) => Value::Float(match s.as_str() {
                    "nan" => f64::NAN,
                    "inf" => f64::INFINITY,
                    "-inf" => f64::NEG_INFINITY,
                    _ => return Err(corrupt(format!("bad float `{s}`"))),
                }),
                other => Value::Float(other.as_f64().ok_or_else(|| corrupt("bad float".into()))?),
            },
            "str" => Value::Str(need()?.as_str().ok_or_else(|| corrupt("bad str".into()))?.to_string()),
            "host_function" => Value::HostFunction(need()?.as_str().ok_or_else(|| corrupt("bad host_function".into()))?.to_string()),
            "engine_handle" => Value::EngineHandle,
            "ref" => {
                let id = j.get("id").and_then(Json::as_u64).ok_or_else(|| corrupt("ref without id".into()))?;
                match self.containers.get(&id) {
                    Some(v) => v.clone(),
                    // Containers are registered before their contents, so a
                    // miss here is a genuinely dangling reference.
                    None => return Err(corrupt(format!("dangling ref {id}"))),
                }
            }
            "list" => {
                let id = j.get("id").and_then(Json::as_u64).ok_or_else(|| corrupt("list without id".into()))?;
                let items = need()?.as_array().ok_or_else(|| corrupt("bad list".into()))?;
                let cell: crate::expr::value::ListRef = Arc::new(RwLock::new(Vec::new()));
                self.containers.insert(id, Value::List(cell.clone()));
                let decoded = items.iter().map(|x| self.decode(x)).collect::<Result<Vec<_>, _>>()?;
                *cell.write() = decoded;
                Value::List(cell)
            }
            "map" => {
                let id = j.get("id").and_then(Json::as_u64).ok_or_else(|| corrupt("map without id".into()))?;
                let entries = need()?.as_object().ok_or_else(|| corrupt("bad map".into()))?;
                let cell: crate::expr::value::MapRef = Arc::new(RwLock::new(IndexMap::new()));
                self.containers.insert(id, Value::Map(cell.clone()));
                let mut decoded = IndexMap::new();
                for (k, x) in entries {
                    decoded.insert(k.clone(), self.decode(x)?);
                }
                *cell.write() = decoded;
                Value::Map(cell)
            }
            other => return Err(corrupt(format!("unknown value type `{other}`"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn turn(name: &str) -> TurnRecord {
        TurnRecord {
            node_name: name.into(),
            node_action: ActionKind::Thought,
            instruction_rendered: "i".into(),
            user_reply: String::new(),
            model_output: "o".into(),
            is_reply_to_user: false,
        }
    }

    #[test]
    fn local_frames_cut_off_lookup() {
        let mut m = MemoryObject::default();
        m.assign_variable("x", Value::Int(1));
        m.push_frame(FrameKind::Local, Some("call".into()), IndexMap::new());
        assert!(matches!(m.lookup_variable("x"), Err(MemoryError::UnknownName(n)) if n == "x"));
        m.pop_frame(Value::Null).unwrap();
        m.push_frame(FrameKind::Global, Some("call".into()), IndexMap::new());
        assert!(m.lookup_variable("x").unwrap().equals(&Value::Int(1)));
    }

    #[test]
    fn shadowing_nearest_wins() {
        let mut m = MemoryObject::default();
        m.assign_variable("x", Value::Int(1));
        m.push_frame(FrameKind::Mixed, Some("c".into()), IndexMap::new());
        m.assign_variable("x", Value::Int(2));
        assert!(m.lookup_variable("x").unwrap().equals(&Value::Int(2)));
    }

    #[test]
    fn global_pop_merges() {
        let mut m = MemoryObject::default();
        m.record_turn(turn("r1"));
        m.record_turn(turn("r2"));
        m.push_frame(FrameKind::Local, Some("outer".into()), IndexMap::new());
        m.top_mut().pending_assign_target = Some("res".into());
        m.push_frame(FrameKind::Global, Some("inner".into()), IndexMap::new());
        m.assign_variable("q", Value::str("Q?"));
        m.record_turn(turn("g1"));
        m.record_turn(turn("g2"));
        assert_eq!(m.visible_turns().len(), 2);
        let (caller, _) = m.pop_frame(Value::str("S")).unwrap();
        assert_eq!(caller.as_deref(), Some("inner"));
        assert_eq!(m.top().turns.len(), 2);
        assert!(m.lookup_variable("q").unwrap().equals(&Value::str("Q?")));
        assert!(m.lookup_variable("res").unwrap().equals(&Value::str("S")));
        assert_eq!(m.top().pending_assign_target, None);
    }

    #[test]
    fn mixed_pop_erases_turns() {
        let mut m = MemoryObject::default();
        m.record_turn(turn("r"));
        m.push_frame(FrameKind::Mixed, Some("c".into()), IndexMap::new());
        for _ in 0..3 {
            m.record_turn(turn("m"));
        }
        assert_eq!(m.visible_turns().len(), 4);
        m.pop_frame(Value::Null).unwrap();
        assert_eq!(m.visible_turns().len(), 1);
        assert!(matches!(m.pop_frame(Value::Null), Err(MemoryError::PopRoot)));
    }

    #[test]
    fn round_trip_preserves_aliasing() {
        let mut m = MemoryObject::new("prompt".into());
        let shared = Value::list(vec![Value::Int(1), Value::Float(0.1)]);
        m.assign_variable("a", shared.clone());
        m.push_frame(FrameKind::Global, Some("c".into()), IndexMap::new());
        m.assign_variable("b", shared);
        m.assign_variable("f", Value::Float(f64::INFINITY));
        m.record_turn(turn("t"));
        m.visit_log.push("n".into());
        let doc = m.serialize();
        let back = MemoryObject::deserialize(&doc).unwrap();
        assert_eq!(back.serialize(), doc);
        match (&back.stack[0].variables["a"], &back.stack[1].variables["b"]) {
            (Value::List(x), Value::List(y)) => assert!(Arc::ptr_eq(x, y)),
            _ => panic!("expected lists"),
        }
    }

    #[test]
    fn truncated_document_is_corrupt() {
        let doc = MemoryObject::default().serialize();
        assert!(matches!(MemoryObject::deserialize(&doc[..doc.len() / 2]), Err(MemoryError::CorruptDocument(_))));
    }
}
