use crate::expr::{EngineHandle, Env, ExprError, Value};
use crate::memory::MemoryObject;
use crate::model::{ActionKind, GraphModel, NodeSpec};

/// Expression environment over a session's memory, with the engine handle
/// exposed in self-referential mode.
pub(crate) struct RtEnv<'a> {
    pub memory: &'a MemoryObject,
    pub graph: &'a mut GraphModel,
    pub self_ref: bool,
}

impl Env for RtEnv<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.memory.lookup(name)
    }

    fn engine(&mut self) -> Option<&mut dyn EngineHandle> {
        if self.self_ref {
            Some(self)
        } else {
            None
        }
    }
}

fn string_arg(key: &str, v: &Value) -> Result<String, ExprError> {
    match v {
        Value::Str(s) => Ok(s.clone()),
        other => Err(ExprError::TypeMismatch(format!("add_node `{key}` must be a string, got {}", other.type_name()))),
    }
}

fn list_arg(key: &str, v: &Value) -> Result<Vec<String>, ExprError> {
    match v {
        Value::List(l) => l.read_recursive().iter().map(|x| string_arg(key, x)).collect(),
        Value::Str(s) => Ok(vec![s.clone()]),
        other => Err(ExprError::TypeMismatch(format!("add_node `{key}` must be a list, got {}", other.type_name()))),
    }
}

impl EngineHandle for RtEnv<'_> {
    fn add_node(&mut self, args: &[(Option<String>, Value)]) -> Result<Value, ExprError> {
        let mut spec = NodeSpec::new("", ActionKind::Chat);
        for (k, v) in args {
            let Some(k) = k else {
                return Err(ExprError::TypeMismatch("add_node takes keyword arguments only".into()));
            };
            match k.as_str() {
                "name" => spec.name = string_arg(k, v)?,
                "action" => {
                    spec.action = string_arg(k, v)?.parse().map_err(|e: crate::model::ModelError| ExprError::Engine(e.to_string()))?
                }
                "instruction" => spec.instruction = string_arg(k, v)?,
                "transitions" => spec.transitions = list_arg(k, v)?,
                "transition_question" => spec.transition_question = string_arg(k, v)?,
                "transition_choices" => spec.transition_choices = list_arg(k, v)?,
                "boolean_condition" => spec.boolean_condition = string_arg(k, v)?,
                "condition_interjection" => spec.condition_interjection = string_arg(k, v)?,
                "user_instruction_transitions" => spec.user_instruction_transitions = list_arg(k, v)?,
                "category" => spec.category = string_arg(k, v)?,
                other => return Err(ExprError::TypeMismatch(format!("add_node got unexpected keyword `{other}`"))),
            }
        }
        self.graph.add_node(spec).map(Value::Str).map_err(|e| ExprError::Engine(e.to_string()))
    }
}
