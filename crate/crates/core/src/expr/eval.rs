use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::Arc;

use indexmap::IndexMap;

use super::ast::{Arg, BinOp, Expr, Literal, UnaryOp};
use super::value::Value;
use super::ExprError;

/// Builtins available when the configuration does not restrict them.
pub const DEFAULT_BUILTINS: &[&str] =
    &["len", "str", "int", "float", "bool", "range", "sorted", "min", "max", "abs", "sum"];

pub type HostFn = Arc<dyn Fn(&[Value]) -> Result<Value, String> + Send + Sync>;

/// Named host functions callable from expressions, keyed by dotted name
/// (`meta_utils.check_node_name`).
#[derive(Clone, Default)]
pub struct HostRegistry {
    fns: IndexMap<String, HostFn>,
}

impl std::fmt::Debug for HostRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.fns.keys()).finish()
    }
}

impl HostRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the host functions shipped with the engine.
    pub fn standard() -> Self {
        let mut r = Self::new();
        r.register("meta_utils.check_node_name", |args| match args {
            [Value::Str(s)] => Ok(Value::Bool(is_valid_generated_name(s))),
            [other] => Err(format!("expected a string, got {}", other.type_name())),
            _ => Err("expected exactly one argument".into()),
        });
        r
    }

    pub fn register<F>(&mut self, name: &str, f: F)
    where
        F: Fn(&[Value]) -> Result<Value, String> + Send + Sync + 'static,
    {
        self.fns.insert(name.to_string(), Arc::new(f));
    }

    pub fn get(&self, name: &str) -> Option<&HostFn> {
        self.fns.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fns.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fns.keys().map(|s| s.as_str())
    }

    /// Keeps only the listed functions.
    pub fn restricted_to(&self, names: &[String]) -> Result<HostRegistry, String> {
        let mut out = HostRegistry::new();
        for n in names {
            let f = self.fns.get(n).ok_or_else(|| n.clone())?;
            out.fns.insert(n.clone(), f.clone());
        }
        Ok(out)
    }

    fn is_namespace(&self, prefix: &str) -> bool {
        self.fns.keys().any(|k| k.len() > prefix.len() && k.starts_with(prefix) && k.as_bytes()[prefix.len()] == b'.')
    }
}

/// Non-empty, lowercase ASCII letters and underscores only.
pub fn is_valid_generated_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

/// Variable resolution and the hooks the evaluator needs from its host.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<Value>;

    /// Calls a function defined outside the expression language (used by
    /// direct interpreters of compiled programs). `None` means "not mine".
    fn call_function(&mut self, _name: &str, _args: &[Value]) -> Option<Result<Value, ExprError>> {
        None
    }

    /// Engine handle, present only in self-referential mode.
    fn engine(&mut self) -> Option<&mut dyn EngineHandle> {
        None
    }
}

pub trait EngineHandle {
    fn add_node(&mut self, args: &[(Option<String>, Value)]) -> Result<Value, ExprError>;
}

/// Env backed by a plain map; handy for tests and one-off evaluation.
#[derive(Default, Debug, Clone)]
pub struct MapEnv {
    pub vars: IndexMap<String, Value>,
}

impl MapEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, v: Value) -> Self {
        self.vars.insert(name.to_string(), v);
        self
    }
}

impl Env for MapEnv {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.vars.get(name).cloned()
    }
}

/// Evaluator with its builtin whitelist and host-function registry.
#[derive(Clone, Debug)]
pub struct Interpreter {
    builtins: BTreeSet<String>,
    host: HostRegistry,
}

impl Default for Interpreter {
    fn default() -> Self {
        Interpreter::new(DEFAULT_BUILTINS.iter().map(|s| s.to_string()), HostRegistry::new())
    }
}

impl Interpreter {
    pub fn new(builtins: impl IntoIterator<Item = String>, host: HostRegistry) -> Self {
        Interpreter { builtins: builtins.into_iter().collect(), host }
    }

    pub fn host(&self) -> &HostRegistry {
        &self.host
    }

    pub fn evaluate(&self, expr: &Expr, env: &mut dyn Env) -> Result<Value, ExprError> {
        match expr {
            Expr::Literal(l) => Ok(match l {
                Literal::Null => Value::Null,
                Literal::Bool(b) => Value::Bool(*b),
                Literal::Int(i) => Value::Int(*i),
                Literal::Float(x) => Value::Float(*x),
                Literal::Str(s) => Value::Str(s.clone()),
            }),
            Expr::Ident(name) => self.resolve(name, env),
            Expr::Unary(UnaryOp::Not, e) => {
                let v = self.evaluate(e, env)?;
                Ok(Value::Bool(!truthiness(&v)?))
            }
            Expr::Unary(UnaryOp::Neg, e) => match self.evaluate(e, env)? {
                Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(ExprError::Overflow),
                Value::Float(x) => Ok(Value::Float(-x)),
                other => Err(ExprError::TypeMismatch(format!("bad operand type for unary -: {}", other.type_name()))),
            },
            Expr::Binary(BinOp::And, l, r) => {
                let lv = self.evaluate(l, env)?;
                if !truthiness(&lv)? {
                    return Ok(lv);
                }
                self.evaluate(r, env)
            }
            Expr::Binary(BinOp::Or, l, r) => {
                let lv = self.evaluate(l, env)?;
                if truthiness(&lv)? {
                    return Ok(lv);
                }
                self.evaluate(r, env)
            }
            Expr::Binary(op, l, r) => {
                let lv = self.evaluate(l, env)?;
                let rv = self.evaluate(r, env)?;
                binary(*op, &lv, &rv)
            }
            Expr::Index(b, i) => {
                let bv = self.evaluate(b, env)?;
                let iv = self.evaluate(i, env)?;
                index(&bv, &iv)
            }
            Expr::Slice(b, lo, hi) => {
                let bv = self.evaluate(b, env)?;
                let lo = lo.as_ref().map(|e| self.evaluate(e, env)).transpose()?;
                let hi = hi.as_ref().map(|e| self.evaluate(e, env)).transpose()?;
                slice(&bv, lo.as_ref(), hi.as_ref())
            }
            Expr::Attr(b, name) => match self.evaluate(b, env)? {
                Value::HostFunction(ns) => {
                    let path = format!("{ns}.{name}");
                    if self.host.contains(&path) || self.host.is_namespace(&path) {
                        Ok(Value::HostFunction(path))
                    } else {
                        Err(ExprError::UnknownName(path))
                    }
                }
                other => Err(ExprError::UnknownMethod { ty: other.type_name().into(), method: name.clone() }),
            },
            Expr::List(items) => {
                let vals = items.iter().map(|e| self.evaluate(e, env)).collect::<Result<Vec<_>, _>>()?;
                Ok(Value::list(vals))
            }
            Expr::Map(entries) => {
                let mut m = IndexMap::new();
                for (k, v) in entries {
                    let key = match self.evaluate(k, env)? {
                        Value::Str(s) => s,
                        other => return Err(ExprError::TypeMismatch(format!("map keys must be strings, got {}", other.type_name()))),
                    };
                    let val = self.evaluate(v, env)?;
                    m.insert(key, val);
                }
                Ok(Value::map(m))
            }
            Expr::Call(callee, args) => self.call(callee, args, env),
        }
    }

    fn resolve(&self, name: &str, env: &mut dyn Env) -> Result<Value, ExprError> {
        if let Some(v) = env.lookup(name) {
            return Ok(v);
        }
        if self.host.contains(name) || self.host.is_namespace(name) {
            return Ok(Value::HostFunction(name.to_string()));
        }
        if self.builtins.contains(name) {
            return Ok(Value::HostFunction(name.to_string()));
        }
        if name == "self" {
            return if env.engine().is_some() { Ok(Value::EngineHandle) } else { Err(ExprError::SelfRefDisabled) };
        }
        Err(ExprError::UnknownName(name.to_string()))
    }

    fn eval_args(&self, args: &[Arg], env: &mut dyn Env) -> Result<Vec<(Option<String>, Value)>, ExprError> {
        args.iter().map(|a| Ok((a.name.clone(), self.evaluate(&a.value, env)?))).collect()
    }

    fn call(&self, callee: &Expr, args: &[Arg], env: &mut dyn Env) -> Result<Value, ExprError> {
        if let Expr::Attr(base, method) = callee {
            let recv = self.evaluate(base, env)?;
            let argv = self.eval_args(args, env)?;
            return match recv {
                Value::HostFunction(ns) => {
                    let path = format!("{ns}.{method}");
                    self.call_host(&path, &positional(&path, argv)?)
                }
                Value::EngineHandle => match method.as_str() {
                    "add_node" => match env.engine() {
                        Some(h) => h.add_node(&argv),
                        None => Err(ExprError::SelfRefDisabled),
                    },
                    _ => Err(ExprError::UnknownMethod { ty: "engine_handle".into(), method: method.clone() }),
                },
                other => {
                    let argv = positional(method, argv)?;
                    call_method(&other, method, &argv)
                }
            };
        }
        if let Expr::Ident(name) = callee {
            if env.lookup(name).is_none() {
                let argv = self.eval_args(args, env)?;
                let pos = positional(name, argv)?;
                if let Some(res) = env.call_function(name, &pos) {
                    return res;
                }
                let f = self.resolve(name, env)?;
                return match f {
                    Value::HostFunction(path) => self.call_host(&path, &pos),
                    other => Err(ExprError::NotCallable(other.type_name().into())),
                };
            }
        }
        let f = self.evaluate(callee, env)?;
        let argv = self.eval_args(args, env)?;
        match f {
            Value::HostFunction(path) => {
                let pos = positional(&path, argv)?;
                self.call_host(&path, &pos)
            }
            other => Err(ExprError::NotCallable(other.type_name().into())),
        }
    }

    fn call_host(&self, path: &str, args: &[Value]) -> Result<Value, ExprError> {
        if let Some(f) = self.host.get(path) {
            return f(args).map_err(|msg| ExprError::Host { name: path.to_string(), msg });
        }
        if self.builtins.contains(path) {
            return call_builtin(path, args);
        }
        if self.host.is_namespace(path) {
            return Err(ExprError::NotCallable(format!("namespace {path}")));
        }
        Err(ExprError::UnknownName(path.to_string()))
    }
}

fn positional(name: &str, args: Vec<(Option<String>, Value)>) -> Result<Vec<Value>, ExprError> {
    args.into_iter()
        .map(|(k, v)| match k {
            None => Ok(v),
            Some(k) => Err(ExprError::TypeMismatch(format!("{name}() takes no keyword argument `{k}`"))),
        })
        .collect()
}

/// Python-style truthiness; host functions and the engine handle have none.
pub fn truthiness(v: &Value) -> Result<bool, ExprError> {
    Ok(match v {
        Value::Null => false,
        Value::Bool(b) => *b,
        Value::Int(i) => *i != 0,
        Value::Float(x) => *x != 0.0,
        Value::Str(s) => !s.is_empty(),
        Value::List(l) => !l.read_recursive().is_empty(),
        Value::Map(m) => !m.read_recursive().is_empty(),
        Value::HostFunction(_) | Value::EngineHandle => {
            return Err(ExprError::TypeMismatch(format!("{} has no truth value", v.type_name())))
        }
    })
}

fn mismatch(op: &str, a: &Value, b: &Value) -> ExprError {
    ExprError::TypeMismatch(format!(
        "unsupported operand types for {op}: {} and {}",
        a.type_name(),
        b.type_name()
    ))
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

fn repeat(items: &[Value], n: i64) -> Vec<Value> {
    let n = n.max(0) as usize;
    let mut out = Vec::with_capacity(items.len() * n);
    for _ in 0..n {
        out.extend(items.iter().cloned());
    }
    out
}

pub(crate) fn binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, ExprError> {
    use Value::*;
    match op {
        BinOp::Add => match (a, b) {
            (Int(x), Int(y)) => x.checked_add(*y).map(Int).ok_or(ExprError::Overflow),
            (Str(x), Str(y)) => Ok(Str(format!("{x}{y}"))),
            (List(x), List(y)) => {
                let mut v = x.read_recursive().clone();
                v.extend(y.read_recursive().iter().cloned());
                Ok(Value::list(v))
            }
            _ => match (as_f64(a), as_f64(b)) {
                (Some(x), Some(y)) => Ok(Float(x + y)),
                _ => Err(mismatch("+", a, b)),
            },
        },
        BinOp::Sub => match (a, b) {
            (Int(x), Int(y)) => x.checked_sub(*y).map(Int).ok_or(ExprError::Overflow),
            _ => match (as_f64(a), as_f64(b)) {
                (Some(x), Some(y)) => Ok(Float(x - y)),
                _ => Err(mismatch("-", a, b)),
            },
        },
        BinOp::Mul => match (a, b) {
            (Int(x), Int(y)) => x.checked_mul(*y).map(Int).ok_or(ExprError::Overflow),
            (Str(s), Int(n)) | (Int(n), Str(s)) => Ok(Str(s.repeat((*n).max(0) as usize))),
            (List(l), Int(n)) | (Int(n), List(l)) => Ok(Value::list(repeat(&l.read_recursive(), *n))),
            _ => match (as_f64(a), as_f64(b)) {
                (Some(x), Some(y)) => Ok(Float(x * y)),
                _ => Err(mismatch("*", a, b)),
            },
        },
        BinOp::Div => match (as_f64(a), as_f64(b)) {
            (Some(_), Some(0.0)) => Err(ExprError::DivisionByZero),
            (Some(x), Some(y)) => Ok(Float(x / y)),
            _ => Err(mismatch("/", a, b)),
        },
        BinOp::FloorDiv => match (a, b) {
            (Int(_), Int(0)) => Err(ExprError::DivisionByZero),
            (Int(x), Int(y)) => {
                let q = x.checked_div(*y).ok_or(ExprError::Overflow)?;
                Ok(Int(if x % y != 0 && ((*x < 0) != (*y < 0)) { q - 1 } else { q }))
            }
            _ => match (as_f64(a), as_f64(b)) {
                (Some(_), Some(0.0)) => Err(ExprError::DivisionByZero),
                (Some(x), Some(y)) => Ok(Float((x / y).floor())),
                _ => Err(mismatch("//", a, b)),
            },
        },
        BinOp::Mod => match (a, b) {
            (Int(_), Int(0)) => Err(ExprError::DivisionByZero),
            (Int(x), Int(y)) => {
                let r = x.checked_rem(*y).ok_or(ExprError::Overflow)?;
                Ok(Int(if r != 0 && ((r < 0) != (*y < 0)) { r + y } else { r }))
            }
            _ => match (as_f64(a), as_f64(b)) {
                (Some(_), Some(0.0)) => Err(ExprError::DivisionByZero),
                (Some(x), Some(y)) => Ok(Float(x - y * (x / y).floor())),
                _ => Err(mismatch("%", a, b)),
            },
        },
        BinOp::Pow => match (a, b) {
            (Int(x), Int(y)) if *y >= 0 => {
                let e = u32::try_from(*y).map_err(|_| ExprError::Overflow)?;
                x.checked_pow(e).map(Int).ok_or(ExprError::Overflow)
            }
            _ => match (as_f64(a), as_f64(b)) {
                (Some(0.0), Some(y)) if y < 0.0 => Err(ExprError::DivisionByZero),
                (Some(x), Some(y)) => Ok(Float(x.powf(y))),
                _ => Err(mismatch("**", a, b)),
            },
        },
        BinOp::Eq => Ok(Bool(a.equals(b))),
        BinOp::NotEq => Ok(Bool(!a.equals(b))),
        BinOp::Lt => Ok(Bool(compare(a, b)? == Ordering::Less)),
        BinOp::Le => Ok(Bool(compare(a, b)? != Ordering::Greater)),
        BinOp::Gt => Ok(Bool(compare(a, b)? == Ordering::Greater)),
        BinOp::Ge => Ok(Bool(compare(a, b)? != Ordering::Less)),
        BinOp::In => match b {
            Str(hay) => match a {
                Str(needle) => Ok(Bool(hay.contains(needle.as_str()))),
                _ => Err(mismatch("in", a, b)),
            },
            List(l) => Ok(Bool(l.read_recursive().iter().any(|x| x.equals(a)))),
            Map(m) => match a {
                Str(k) => Ok(Bool(m.read_recursive().contains_key(k))),
                _ => Ok(Bool(false)),
            },
            _ => Err(mismatch("in", a, b)),
        },
        BinOp::And | BinOp::Or => unreachable!("short-circuit operators are handled by the evaluator"),
    }
}

pub(crate) fn compare(a: &Value, b: &Value) -> Result<Ordering, ExprError> {
    use Value::*;
    match (a, b) {
        (Int(x), Int(y)) => Ok(x.cmp(y)),
        (Str(x), Str(y)) => Ok(x.cmp(y)),
        (Bool(x), Bool(y)) => Ok(x.cmp(y)),
        (List(x), List(y)) => {
            let x = x.read_recursive().clone();
            let y = y.read_recursive().clone();
            for (p, q) in x.iter().zip(y.iter()) {
                if !p.equals(q) {
                    return compare(p, q);
                }
            }
            Ok(x.len().cmp(&y.len()))
        }
        _ => match (as_f64(a), as_f64(b)) {
            (Some(x), Some(y)) => x
                .partial_cmp(&y)
                .ok_or_else(|| ExprError::TypeMismatch("cannot order NaN".into())),
            _ => Err(mismatch("comparison", a, b)),
        },
    }
}

fn norm_index(i: i64, len: usize) -> Option<usize> {
    let len = len as i64;
    let j = if i < 0 { i + len } else { i };
    (0..len).contains(&j).then_some(j as usize)
}

fn index(base: &Value, idx: &Value) -> Result<Value, ExprError> {
    match (base, idx) {
        (Value::List(l), Value::Int(i)) => {
            let l = l.read_recursive();
            norm_index(*i, l.len())
                .map(|j| l[j].clone())
                .ok_or_else(|| ExprError::IndexOutOfRange(format!("list index {i} out of range")))
        }
        (Value::Str(s), Value::Int(i)) => {
            let chars: Vec<char> = s.chars().collect();
            norm_index(*i, chars.len())
                .map(|j| Value::Str(chars[j].to_string()))
                .ok_or_else(|| ExprError::IndexOutOfRange(format!("string index {i} out of range")))
        }
        (Value::Map(m), Value::Str(k)) => m
            .read_recursive()
            .get(k)
            .cloned()
            .ok_or_else(|| ExprError::IndexOutOfRange(format!("key {k:?} not found"))),
        _ => Err(ExprError::TypeMismatch(format!(
            "{} indices must be valid, got {}",
            base.type_name(),
            idx.type_name()
        ))),
    }
}

fn slice_bounds(lo: Option<&Value>, hi: Option<&Value>, len: usize) -> Result<(usize, usize), ExprError> {
    let clamp = |v: Option<&Value>, default: usize| -> Result<usize, ExprError> {
        match v {
            None | Some(Value::Null) => Ok(default),
            Some(Value::Int(i)) => {
                let len = len as i64;
                let j = if *i < 0 { (*i + len).max(0) } else { (*i).min(len) };
                Ok(j as usize)
            }
            Some(other) => Err(ExprError::TypeMismatch(format!("slice indices must be integers, got {}", other.type_name()))),
        }
    };
    let a = clamp(lo, 0)?;
    let b = clamp(hi, len)?;
    Ok((a, b.max(a)))
}

fn slice(base: &Value, lo: Option<&Value>, hi: Option<&Value>) -> Result<Value, ExprError> {
    match base {
        Value::List(l) => {
            let l = l.read_recursive();
            let (a, b) = slice_bounds(lo, hi, l.len())?;
            Ok(Value::list(l[a..b].to_vec()))
        }
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            let (a, b) = slice_bounds(lo, hi, chars.len())?;
            Ok(Value::Str(chars[a..b].iter().collect()))
        }
        other => Err(ExprError::TypeMismatch(format!("{} is not sliceable", other.type_name()))),
    }
}

fn arity(name: &str, args: &[Value], min: usize, max: usize) -> Result<(), ExprError> {
    if args.len() < min || args.len() > max {
        return Err(ExprError::ArityMismatch { name: name.to_string(), expected: if min == max { min.to_string() } else { format!("{min}..={max}") }, got: args.len() });
    }
    Ok(())
}

fn expect_str<'v>(name: &str, v: &'v Value) -> Result<&'v str, ExprError> {
    v.as_str()
        .ok_or_else(|| ExprError::TypeMismatch(format!("{name}() expects a string, got {}", v.type_name())))
}

fn call_method(recv: &Value, method: &str, args: &[Value]) -> Result<Value, ExprError> {
    let unknown = || ExprError::UnknownMethod { ty: recv.type_name().into(), method: method.to_string() };
    match recv {
        Value::Str(s) => match method {
            "lower" => {
                arity(method, args, 0, 0)?;
                Ok(Value::Str(s.to_lowercase()))
            }
            "upper" => {
                arity(method, args, 0, 0)?;
                Ok(Value::Str(s.to_uppercase()))
            }
            "strip" => {
                arity(method, args, 0, 0)?;
                Ok(Value::Str(s.trim().to_string()))
            }
            "split" => {
                arity(method, args, 0, 1)?;
                let parts: Vec<Value> = match args.first() {
                    None | Some(Value::Null) => s.split_whitespace().map(Value::str).collect(),
                    Some(sep) => {
                        let sep = expect_str(method, sep)?;
                        if sep.is_empty() {
                            return Err(ExprError::TypeMismatch("empty separator".into()));
                        }
                        s.split(sep).map(Value::str).collect()
                    }
                };
                Ok(Value::list(parts))
            }
            "replace" => {
                arity(method, args, 2, 2)?;
                let from = expect_str(method, &args[0])?;
                let to = expect_str(method, &args[1])?;
                Ok(Value::Str(s.replace(from, to)))
            }
            "startswith" => {
                arity(method, args, 1, 1)?;
                Ok(Value::Bool(s.starts_with(expect_str(method, &args[0])?)))
            }
            "endswith" => {
                arity(method, args, 1, 1)?;
                Ok(Value::Bool(s.ends_with(expect_str(method, &args[0])?)))
            }
            "join" => {
                arity(method, args, 1, 1)?;
                let Value::List(l) = &args[0] else {
                    return Err(ExprError::TypeMismatch("join() expects a list".into()));
                };
                let parts = l
                    .read_recursive()
                    .iter()
                    .map(|v| expect_str(method, v).map(str::to_string))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Value::Str(parts.join(s)))
            }
            _ => Err(unknown()),
        },
        Value::List(l) => match method {
            "append" => {
                arity(method, args, 1, 1)?;
                l.write().push(args[0].clone());
                Ok(Value::Null)
            }
            "pop" => {
                arity(method, args, 0, 1)?;
                let mut v = l.write();
                let i = match args.first() {
                    None => v.len() as i64 - 1,
                    Some(Value::Int(i)) => *i,
                    Some(o) => return Err(ExprError::TypeMismatch(format!("pop() index must be int, got {}", o.type_name()))),
                };
                let j = norm_index(i, v.len()).ok_or_else(|| ExprError::IndexOutOfRange("pop index out of range".into()))?;
                Ok(v.remove(j))
            }
            "index" => {
                arity(method, args, 1, 1)?;
                l.read_recursive()
                    .iter()
                    .position(|x| x.equals(&args[0]))
                    .map(|i| Value::Int(i as i64))
                    .ok_or_else(|| ExprError::IndexOutOfRange(format!("{} is not in list", args[0])))
            }
            "extend" => {
                arity(method, args, 1, 1)?;
                let items = match &args[0] {
                    Value::List(other) => other.read_recursive().clone(),
                    o => return Err(ExprError::TypeMismatch(format!("extend() expects a list, got {}", o.type_name()))),
                };
                l.write().extend(items);
                Ok(Value::Null)
            }
            "insert" => {
                arity(method, args, 2, 2)?;
                let Value::Int(i) = args[0] else {
                    return Err(ExprError::TypeMismatch("insert() index must be int".into()));
                };
                let mut v = l.write();
                let len = v.len() as i64;
                let j = if i < 0 { (i + len).max(0) } else { i.min(len) } as usize;
                v.insert(j, args[1].clone());
                Ok(Value::Null)
            }
            "remove" => {
                arity(method, args, 1, 1)?;
                let pos = l.read_recursive().iter().position(|x| x.equals(&args[0]));
                match pos {
                    Some(p) => {
                        l.write().remove(p);
                        Ok(Value::Null)
                    }
                    None => Err(ExprError::IndexOutOfRange(format!("{} is not in list", args[0]))),
                }
            }
            _ => Err(unknown()),
        },
        Value::Map(m) => match method {
            "keys" => {
                arity(method, args, 0, 0)?;
                Ok(Value::list(m.read_recursive().keys().map(|k| Value::str(k.clone())).collect()))
            }
            "values" => {
                arity(method, args, 0, 0)?;
                Ok(Value::list(m.read_recursive().values().cloned().collect()))
            }
            "get" => {
                arity(method, args, 1, 2)?;
                let k = expect_str(method, &args[0])?;
                Ok(m.read_recursive().get(k).cloned().unwrap_or_else(|| args.get(1).cloned().unwrap_or(Value::Null)))
            }
            _ => Err(unknown()),
        },
        _ => Err(unknown()),
    }
}

fn items_of(name: &str, args: &[Value]) -> Result<Vec<Value>, ExprError> {
    match args {
        [Value::List(l)] => Ok(l.read_recursive().clone()),
        [single] => Err(ExprError::TypeMismatch(format!("{name}() expects a list, got {}", single.type_name()))),
        many => Ok(many.to_vec()),
    }
}

fn call_builtin(name: &str, args: &[Value]) -> Result<Value, ExprError> {
    match name {
        "len" => {
            arity(name, args, 1, 1)?;
            let n = match &args[0] {
                Value::Str(s) => s.chars().count(),
                Value::List(l) => l.read_recursive().len(),
                Value::Map(m) => m.read_recursive().len(),
                o => return Err(ExprError::TypeMismatch(format!("object of type {} has no len()", o.type_name()))),
            };
            Ok(Value::Int(n as i64))
        }
        "str" => {
            arity(name, args, 0, 1)?;
            Ok(Value::Str(args.first().map(|v| v.to_display_string()).unwrap_or_default()))
        }
        "int" => {
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::Int(i) => Ok(Value::Int(*i)),
                Value::Bool(b) => Ok(Value::Int(*b as i64)),
                Value::Float(x) if x.is_finite() && x.abs() < 9.2e18 => Ok(Value::Int(x.trunc() as i64)),
                Value::Float(_) => Err(ExprError::Overflow),
                Value::Str(s) => s
                    .trim()
                    .parse::<i64>()
                    .map(Value::Int)
                    .map_err(|_| ExprError::TypeMismatch(format!("invalid literal for int(): {s:?}"))),
                o => Err(ExprError::TypeMismatch(format!("int() argument must be a string or number, not {}", o.type_name()))),
            }
        }
        "float" => {
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::Int(i) => Ok(Value::Float(*i as f64)),
                Value::Float(x) => Ok(Value::Float(*x)),
                Value::Bool(b) => Ok(Value::Float(*b as i64 as f64)),
                Value::Str(s) => s
                    .trim()
                    .parse::<f64>()
                    .map(Value::Float)
                    .map_err(|_| ExprError::TypeMismatch(format!("could not convert string to float: {s:?}"))),
                o => Err(ExprError::TypeMismatch(format!("float() argument must be a string or number, not {}", o.type_name()))),
            }
        }
        "bool" => {
            arity(name, args, 0, 1)?;
            Ok(Value::Bool(match args.first() {
                Some(v) => truthiness(v)?,
                None => false,
            }))
        }
        "range" => {
            arity(name, args, 1, 3)?;
            let ints = args
                .iter()
                .map(|v| match v {
                    Value::Int(i) => Ok(*i),
                    o => Err(ExprError::TypeMismatch(format!("range() expects integers, got {}", o.type_name()))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (start, stop, step) = match ints.as_slice() {
                [stop] => (0, *stop, 1),
                [start, stop] => (*start, *stop, 1),
                [start, stop, step] => (*start, *stop, *step),
                _ => unreachable!(),
            };
            if step == 0 {
                return Err(ExprError::TypeMismatch("range() step must not be zero".into()));
            }
            let mut out = Vec::new();
            let mut i = start;
            while (step > 0 && i < stop) || (step < 0 && i > stop) {
                out.push(Value::Int(i));
                if out.len() > 10_000_000 {
                    return Err(ExprError::Overflow);
                }
                i = match i.checked_add(step) {
                    Some(n) => n,
                    None => break,
                };
            }
            Ok(Value::list(out))
        }
        "sorted" => {
            arity(name, args, 1, 1)?;
            let mut items = items_of(name, args)?;
            let mut err = None;
            items.sort_by(|a, b| {
                compare(a, b).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    Ordering::Equal
                })
            });
            match err {
                Some(e) => Err(e),
                None => Ok(Value::list(items)),
            }
        }
        "min" | "max" => {
            if args.is_empty() {
                return Err(ExprError::ArityMismatch { name: name.into(), expected: "1..".into(), got: 0 });
            }
            let items = items_of(name, args)?;
            let mut best: Option<Value> = None;
            for it in items {
                best = Some(match best {
                    None => it,
                    Some(b) => {
                        let ord = compare(&it, &b)?;
                        let better = if name == "min" { ord == Ordering::Less } else { ord == Ordering::Greater };
                        if better { it } else { b }
                    }
                });
            }
            best.ok_or_else(|| ExprError::TypeMismatch(format!("{name}() arg is an empty sequence")))
        }
        "abs" => {
            arity(name, args, 1, 1)?;
            match &args[0] {
                Value::Int(i) => i.checked_abs().map(Value::Int).ok_or(ExprError::Overflow),
                Value::Float(x) => Ok(Value::Float(x.abs())),
                o => Err(ExprError::TypeMismatch(format!("bad operand type for abs(): {}", o.type_name()))),
            }
        }
        "sum" => {
            arity(name, args, 1, 1)?;
            let items = items_of(name, args)?;
            items.iter().try_fold(Value::Int(0), |acc, v| binary(BinOp::Add, &acc, v))
        }
        other => Err(ExprError::UnknownName(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_source;
    use super::*;

    fn eval_in(src: &str, env: &mut MapEnv) -> Result<Value, ExprError> {
        Interpreter::default().evaluate(&parse_source(src).unwrap(), env)
    }

    fn eval(src: &str) -> Result<Value, ExprError> {
        eval_in(src, &mut MapEnv::new())
    }

    #[test]
    fn append_mutates_in_place() {
        let mut env = MapEnv::new().with("all_topics", Value::list(vec![])).with("topics", Value::str("t"));
        let r = eval_in("all_topics.append(topics)", &mut env).unwrap();
        assert!(matches!(r, Value::Null));
        assert_eq!(env.vars["all_topics"].to_string(), "['t']");
    }

    #[test]
    fn sorted_list() {
        let mut env = MapEnv::new().with("list1", Value::list(vec![Value::Int(3), Value::Int(1), Value::Int(2)]));
        assert_eq!(eval_in("sorted(list1)", &mut env).unwrap().to_string(), "[1, 2, 3]");
    }

    #[test]
    fn sum_of_fibs() {
        let mut env = MapEnv::new().with("fib1", Value::Int(2)).with("fib2", Value::Int(3));
        assert!(eval_in("fib1 + fib2", &mut env).unwrap().equals(&Value::Int(5)));
    }

    #[test]
    fn arithmetic_rules() {
        assert_eq!(eval("1+2*3").unwrap().to_string(), "7");
        assert_eq!(eval("7/2").unwrap().to_string(), "3.5");
        assert_eq!(eval("4/2").unwrap().to_string(), "2.0");
        assert_eq!(eval("-7//2").unwrap().to_string(), "-4");
        assert_eq!(eval("-7%3").unwrap().to_string(), "2");
        assert_eq!(eval("2**10").unwrap().to_string(), "1024");
        assert_eq!(eval("2**-1").unwrap().to_string(), "0.5");
        assert_eq!(eval("1+2.5").unwrap().to_string(), "3.5");
        assert_eq!(eval("'ab'*2").unwrap().to_string(), "'abab'");
        assert!(matches!(eval("1/0"), Err(ExprError::DivisionByZero)));
        assert!(matches!(eval("1%0"), Err(ExprError::DivisionByZero)));
        assert!(matches!(eval("9223372036854775807+1"), Err(ExprError::Overflow)));
        assert!(matches!(eval("'a'+1"), Err(ExprError::TypeMismatch(_))));
    }

    #[test]
    fn short_circuit() {
        assert_eq!(eval("False and undefined_name").unwrap().to_string(), "False");
        assert_eq!(eval("1 or undefined_name").unwrap().to_string(), "1");
        assert!(matches!(eval("True and undefined_name"), Err(ExprError::UnknownName(_))));
    }

    #[test]
    fn membership_and_indexing() {
        assert_eq!(eval("'b' in 'abc'").unwrap().to_string(), "True");
        assert_eq!(eval("2 in [1, 2]").unwrap().to_string(), "True");
        assert_eq!(eval("'k' in {'k': 1}").unwrap().to_string(), "True");
        assert_eq!(eval("[1, 2, 3][-1]").unwrap().to_string(), "3");
        assert_eq!(eval("'hello'[1:3]").unwrap().to_string(), "'el'");
        assert!(matches!(eval("[1][5]"), Err(ExprError::IndexOutOfRange(_))));
    }

    #[test]
    fn methods() {
        assert_eq!(eval("' A b '.strip().lower()").unwrap().to_string(), "'a b'");
        assert_eq!(eval("'a,b'.split(',')").unwrap().to_string(), "['a', 'b']");
        assert_eq!(eval("'-'.join(['a', 'b'])").unwrap().to_string(), "'a-b'");
        assert_eq!(eval("{'a': 1}.get('b', 2)").unwrap().to_string(), "2");
        assert!(matches!(eval("'a'.format()"), Err(ExprError::UnknownMethod { .. })));
    }

    #[test]
    fn builtins() {
        assert_eq!(eval("len([1, 2])").unwrap().to_string(), "2");
        assert_eq!(eval("range(3)").unwrap().to_string(), "[0, 1, 2]");
        assert_eq!(eval("max(3, 9, 2)").unwrap().to_string(), "9");
        assert_eq!(eval("min([4, 1])").unwrap().to_string(), "1");
        assert_eq!(eval("sum([1, 2.5])").unwrap().to_string(), "3.5");
        assert_eq!(eval("int('42') + 1").unwrap().to_string(), "43");
        assert_eq!(eval("str(1.5) + '!'").unwrap().to_string(), "'1.5!'");
        assert!(matches!(eval("len(1, 2)"), Err(ExprError::ArityMismatch { .. })));
    }

    #[test]
    fn restricted_builtins_are_unknown() {
        let interp = Interpreter::new(vec!["len".to_string()], HostRegistry::new());
        let e = parse_source("sorted([1])").unwrap();
        assert!(matches!(interp.evaluate(&e, &mut MapEnv::new()), Err(ExprError::UnknownName(_))));
    }

    #[test]
    fn host_functions_by_dotted_name() {
        let interp = Interpreter::new(Vec::new(), HostRegistry::standard());
        let mut env = MapEnv::new().with("new_name", Value::str("good_name"));
        let e = parse_source("not meta_utils.check_node_name(new_name)").unwrap();
        assert_eq!(interp.evaluate(&e, &mut env).unwrap().to_string(), "False");
        let e = parse_source("meta_utils()").unwrap();
        assert!(matches!(interp.evaluate(&e, &mut env), Err(ExprError::NotCallable(_))));
    }

    #[test]
    fn not_callable_and_self() {
        let mut env = MapEnv::new().with("x", Value::Int(1));
        assert!(matches!(eval_in("x()", &mut env), Err(ExprError::NotCallable(_))));
        assert!(matches!(eval("self.add_node(name='a')"), Err(ExprError::SelfRefDisabled)));
    }

    #[test]
    fn truthiness_rules() {
        assert!(!truthiness(&Value::Null).unwrap());
        assert!(!truthiness(&Value::Float(0.0)).unwrap());
        assert!(truthiness(&Value::str("a")).unwrap());
        assert!(!truthiness(&Value::list(vec![])).unwrap());
        assert!(truthiness(&Value::EngineHandle).is_err());
    }
}
