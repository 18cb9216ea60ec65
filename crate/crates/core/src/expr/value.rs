use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use parking_lot::RwLock;

pub type ListRef = Arc<RwLock<Vec<Value>>>;
pub type MapRef = Arc<RwLock<IndexMap<String, Value>>>;

/// Dynamic value of the expression language.
///
/// Lists and maps are shared references: cloning a `Value::List` yields a
/// second handle onto the same container, so mutation through one binding is
/// visible through every other binding.
#[derive(Clone, Debug)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(ListRef),
    Map(MapRef),
    HostFunction(String),
    EngineHandle,
}

impl Value {
    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Arc::new(RwLock::new(items)))
    }

    pub fn map(entries: IndexMap<String, Value>) -> Value {
        Value::Map(Arc::new(RwLock::new(entries)))
    }

    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "None",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Map(_) => "map",
            Value::HostFunction(_) => "host_function",
            Value::EngineHandle => "engine_handle",
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Text used by `$` embedding and `str()`: strings verbatim, everything
    /// else in canonical display form.
    pub fn to_display_string(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            other => other.to_string(),
        }
    }

    /// Structural equality with numeric coercion between int and float.
    pub fn equals(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Null, Value::Null) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Int(a), Value::Float(b)) | (Value::Float(b), Value::Int(a)) => (*a as f64) == *b,
            (Value::Float(a), Value::Float(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::List(a), Value::List(b)) => {
                if Arc::ptr_eq(a, b) {
                    return true;
                }
                let a = a.read_recursive();
                let b = b.read_recursive();
                a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.equals(y))
            }
            (Value::Map(a), Value::Map(b)) => {
                if Arc::ptr_eq(a, b) {
                    return true;
                }
                let a = a.read_recursive();
                let b = b.read_recursive();
                a.len() == b.len()
                    && a.iter().all(|(k, v)| b.get(k).map(|w| v.equals(w)).unwrap_or(false))
            }
            (Value::HostFunction(a), Value::HostFunction(b)) => a == b,
            (Value::EngineHandle, Value::EngineHandle) => true,
            _ => false,
        }
    }

    /// Deep copy that preserves aliasing between containers inside `self`.
    pub fn deep_copy(&self) -> Value {
        let mut seen = std::collections::HashMap::new();
        self.deep_copy_with(&mut seen)
    }

    pub(crate) fn deep_copy_with(&self, seen: &mut std::collections::HashMap<usize, Value>) -> Value {
        match self {
            Value::List(l) => {
                let key = Arc::as_ptr(l) as usize;
                if let Some(v) = seen.get(&key) {
                    return v.clone();
                }
                let fresh: ListRef = Arc::new(RwLock::new(Vec::new()));
                seen.insert(key, Value::List(fresh.clone()));
                let items: Vec<Value> = l.read_recursive().iter().map(|v| v.deep_copy_with(seen)).collect();
                *fresh.write() = items;
                Value::List(fresh)
            }
            Value::Map(m) => {
                let key = Arc::as_ptr(m) as usize;
                if let Some(v) = seen.get(&key) {
                    return v.clone();
                }
                let fresh: MapRef = Arc::new(RwLock::new(IndexMap::new()));
                seen.insert(key, Value::Map(fresh.clone()));
                let entries: IndexMap<String, Value> = m
                    .read_recursive()
                    .iter()
                    .map(|(k, v)| (k.clone(), v.deep_copy_with(seen)))
                    .collect();
                *fresh.write() = entries;
                Value::Map(fresh)
            }
            other => other.clone(),
        }
    }

    fn fmt_inner(&self, f: &mut fmt::Formatter<'_>, quote: bool, active: &mut HashSet<usize>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("None"),
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{}", format_float(*x)),
            Value::Str(s) if quote => f.write_str(&quote_str(s)),
            Value::Str(s) => f.write_str(s),
            Value::List(l) => {
                let key = Arc::as_ptr(l) as usize;
                if !active.insert(key) {
                    return f.write_str("[...]");
                }
                f.write_str("[")?;
                for (i, item) in l.read_recursive().iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    item.fmt_inner(f, true, active)?;
                }
                active.remove(&key);
                f.write_str("]")
            }
            Value::Map(m) => {
                let key = Arc::as_ptr(m) as usize;
                if !active.insert(key) {
                    return f.write_str("{...}");
                }
                f.write_str("{")?;
                for (i, (k, v)) in m.read_recursive().iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}: ", quote_str(k))?;
                    v.fmt_inner(f, true, active)?;
                }
                active.remove(&key);
                f.write_str("}")
            }
            Value::HostFunction(name) => write!(f, "<host_function {name}>"),
            Value::EngineHandle => f.write_str("<engine>"),
        }
    }
}

/// Canonical display: `None`, `True`, ints without a decimal point, floats in
/// shortest round-trip form, strings quoted, containers in literal syntax.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_inner(f, true, &mut HashSet::new())
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

pub fn quote_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    let q = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    out.push(q);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if c == q => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(q);
    out
}
