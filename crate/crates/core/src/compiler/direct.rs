//! Reference tree-walking evaluator for authoring-language programs. It runs
//! the parsed module directly, with the same scope rules the compiled graph
//! gets from the memory stack, so the two can be compared.

use std::collections::HashMap;

use indexmap::IndexMap;

use super::parser::{KwValue, Module, Stmt};
use crate::expr::{render_dollar, strip_assignment, truthiness, DollarPolicy, Env, Expr, ExprError, Interpreter, Value};
use crate::memory::FrameKind;
use crate::model::ActionKind;

#[derive(Debug, thiserror::Error)]
pub enum DirectError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("line {line}: {what} cannot be evaluated directly")]
    Unsupported { line: usize, what: String },
    #[error("no function named `{0}`")]
    UnknownFunction(String),
    #[error("`{name}` takes {expected} arguments, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("more than {0} statements executed")]
    StepLimit(usize),
}

struct Frame {
    kind: FrameKind,
    vars: IndexMap<String, Value>,
}

struct Func<'m> {
    params: &'m [String],
    body: &'m [Stmt],
    kind: FrameKind,
}

enum Flow {
    Next,
    Return(Value),
}

pub struct DirectInterpreter<'m> {
    module: &'m Module,
    funcs: HashMap<&'m str, Func<'m>>,
    interp: &'m Interpreter,
    frames: Vec<Frame>,
    steps: usize,
    pub max_steps: usize,
    /// Error raised inside a nested function call, carried out through the
    /// expression evaluator.
    pending: Option<DirectError>,
}

impl<'m> DirectInterpreter<'m> {
    pub fn new(module: &'m Module, interp: &'m Interpreter) -> Self {
        let mut funcs = HashMap::new();
        for s in module.functions() {
            if let Stmt::FuncDef { name, params, decorator, body, .. } = s {
                let kind = match decorator {
                    Some(ActionKind::CallGlobal) => FrameKind::Global,
                    Some(ActionKind::CallMixed) => FrameKind::Mixed,
                    _ => FrameKind::Local,
                };
                funcs.insert(name.as_str(), Func { params, body, kind });
            }
        }
        DirectInterpreter {
            module,
            funcs,
            interp,
            frames: vec![Frame { kind: FrameKind::Root, vars: IndexMap::new() }],
            steps: 0,
            max_steps: 1_000_000,
            pending: None,
        }
    }

    /// Top-level variables.
    pub fn globals(&self) -> &IndexMap<String, Value> {
        &self.frames[0].vars
    }

    pub fn run_main(&mut self) -> Result<(), DirectError> {
        let module = self.module;
        for s in module.body.iter().filter(|s| !matches!(s, Stmt::FuncDef { .. })) {
            if let Flow::Return(_) = self.stmt(s)? {
                return Err(DirectError::Unsupported { line: s.line(), what: "`return` outside a function".into() });
            }
        }
        Ok(())
    }

    pub fn call(&mut self, name: &str, args: Vec<Value>) -> Result<Value, DirectError> {
        let f = self.funcs.get(name).ok_or_else(|| DirectError::UnknownFunction(name.to_string()))?;
        if f.params.len() != args.len() {
            return Err(DirectError::Arity { name: name.to_string(), expected: f.params.len(), got: args.len() });
        }
        let (body, kind) = (f.body, f.kind);
        let vars = f.params.iter().cloned().zip(args).collect();
        self.frames.push(Frame { kind, vars });
        let res = self.block(body);
        let frame = self.frames.pop().expect("pushed above");
        let flow = res?;
        if frame.kind == FrameKind::Global {
            self.frames.last_mut().expect("root").vars.extend(frame.vars);
        }
        Ok(match flow {
            Flow::Return(v) => v,
            Flow::Next => Value::Null,
        })
    }

    fn assign(&mut self, name: &str, v: Value) {
        self.frames.last_mut().expect("root").vars.insert(name.to_string(), v);
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, DirectError> {
        let interp = self.interp;
        match interp.evaluate(e, self) {
            Ok(v) => Ok(v),
            Err(e) => Err(self.pending.take().unwrap_or(DirectError::Expr(e))),
        }
    }

    fn tick(&mut self) -> Result<(), DirectError> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(DirectError::StepLimit(self.max_steps));
        }
        Ok(())
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, DirectError> {
        for s in stmts {
            if let Flow::Return(v) = self.stmt(s)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn truthy(&mut self, e: &Expr) -> Result<bool, DirectError> {
        let v = self.eval(e)?;
        Ok(truthiness(&v)?)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Flow, DirectError> {
        self.tick()?;
        match s {
            Stmt::FuncDef { line, .. } => Err(DirectError::Unsupported { line: *line, what: "nested function".into() }),
            Stmt::Pass { .. } => Ok(Flow::Next),
            Stmt::Simple { target, value, .. } => {
                let v = self.eval(value)?;
                if let Some(t) = target {
                    self.assign(t, v);
                }
                Ok(Flow::Next)
            }
            Stmt::Return { value, .. } => {
                let v = match value {
                    Some(e) => self.eval(e)?,
                    None => Value::Null,
                };
                Ok(Flow::Return(v))
            }
            Stmt::If { branches, .. } => {
                for (cond, body) in branches {
                    let take = match cond {
                        Some(c) => self.truthy(c)?,
                        None => true,
                    };
                    if take {
                        return self.block(body);
                    }
                }
                Ok(Flow::Next)
            }
            Stmt::While { cond, body, .. } => {
                while self.truthy(cond)? {
                    self.tick()?;
                    if let Flow::Return(v) = self.block(body)? {
                        return Ok(Flow::Return(v));
                    }
                }
                Ok(Flow::Next)
            }
            Stmt::For { target, iter, body, .. } => {
                let it = self.eval(iter)?;
                let mut i = 0;
                while i < length(&it)? {
                    self.tick()?;
                    let item = element(&it, i)?;
                    self.assign(target, item);
                    if let Flow::Return(v) = self.block(body)? {
                        return Ok(Flow::Return(v));
                    }
                    i += 1;
                }
                Ok(Flow::Next)
            }
            Stmt::ExecNode { target, kwargs, line } => self.exec_node(target.as_deref(), kwargs, *line),
        }
    }

    fn exec_node(&mut self, target: Option<&str>, kwargs: &[(String, KwValue)], line: usize) -> Result<Flow, DirectError> {
        let text = |k: &str| {
            kwargs.iter().find(|(n, _)| n == k).and_then(|(_, v)| match v {
                KwValue::Str(s) => Some(s.clone()),
                KwValue::List(_) => None,
            })
        };
        let unsupported = |what: String| Err(DirectError::Unsupported { line, what });
        if kwargs.iter().any(|(k, v)| k == "transitions" && !matches!(v, KwValue::List(l) if l.is_empty())) {
            return unsupported("exec_node with explicit transitions".into());
        }
        let action: ActionKind = match text("action") {
            Some(a) => a.parse().map_err(|_| DirectError::Unsupported { line, what: format!("action `{a}`") })?,
            None => ActionKind::Chat,
        };
        match action {
            ActionKind::Transition => Ok(Flow::Next),
            ActionKind::ExecCode => {
                let instr = text("instruction").unwrap_or_default();
                let full = match target {
                    Some(t) => format!("{t} = {instr}"),
                    None => instr,
                };
                let rendered = {
                    let frames = &self.frames;
                    render_dollar(&full, &|n| lookup(frames, n), DollarPolicy::Error)?
                };
                let (t, body) = strip_assignment(&rendered);
                let v = if body.trim().is_empty() { Value::Null } else { self.eval(&crate::expr::parse_source(body)?)? };
                if let Some(t) = t {
                    self.assign(&t, v);
                }
                Ok(Flow::Next)
            }
            other => unsupported(format!("exec_node action `{}`", other.token())),
        }
    }
}

fn lookup(frames: &[Frame], name: &str) -> Option<Value> {
    for f in frames.iter().rev() {
        if let Some(v) = f.vars.get(name) {
            return Some(v.clone());
        }
        if matches!(f.kind, FrameKind::Local | FrameKind::Root) {
            break;
        }
    }
    None
}

fn length(v: &Value) -> Result<usize, ExprError> {
    match v {
        Value::List(l) => Ok(l.read().len()),
        Value::Str(s) => Ok(s.chars().count()),
        other => Err(ExprError::TypeMismatch(format!("cannot iterate over {}", other.type_name()))),
    }
}

fn element(v: &Value, i: usize) -> Result<Value, ExprError> {
    match v {
        Value::List(l) => Ok(l.read()[i].clone()),
        Value::Str(s) => Ok(Value::Str(s.chars().nth(i).map(String::from).unwrap_or_default())),
        other => Err(ExprError::TypeMismatch(format!("cannot iterate over {}", other.type_name()))),
    }
}

impl Env for DirectInterpreter<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        lookup(&self.frames, name)
    }

    fn call_function(&mut self, name: &str, args: &[Value]) -> Option<Result<Value, ExprError>> {
        if !self.funcs.contains_key(name) {
            return None;
        }
        Some(self.call(name, args.to_vec()).map_err(|e| {
            let msg = e.to_string();
            self.pending = Some(e);
            ExprError::Host { name: name.to_string(), msg }
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::parse_program;

    #[test]
    fn fib_and_scopes() {
        let src = "\
def fib(n):
    if n == 1:
        return 0
    elif n == 2:
        return 1
    return fib(n - 1) + fib(n - 2)

@global_function
def setg(v):
    shared = v

x = fib(10)
setg(5)
";
        let m = parse_program(src).unwrap();
        let interp = Interpreter::default();
        let mut d = DirectInterpreter::new(&m, &interp);
        d.run_main().unwrap();
        assert!(d.globals()["x"].equals(&Value::Int(34)));
        assert!(d.globals()["shared"].equals(&Value::Int(5)));
    }

    #[test]
    fn local_cannot_see_caller() {
        let m = parse_program("def f():\n    return y\n\ny = 1\nz = f()\n").unwrap();
        let interp = Interpreter::default();
        let mut d = DirectInterpreter::new(&m, &interp);
        assert!(matches!(d.run_main(), Err(DirectError::Expr(ExprError::UnknownName(_)))));
    }
}
