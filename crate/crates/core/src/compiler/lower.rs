use std::collections::{HashMap, HashSet};

use super::parser::{KwValue, Module, Stmt};
use super::{CompileError, CompileWarning, Compiled, WarningKind};
use crate::config::AutogramConfig;
use crate::expr::{Arg, BinOp, Expr};
use crate::model::{validate_graph, ActionKind, GraphModel, NodeSpec, Severity, TransitionRef};

/// Naming scope: the function body or loop/branch body being lowered.
struct Ctx {
    prefix: String,
    nodes: usize,
    constructs: HashMap<&'static str, usize>,
    tmps: usize,
}

impl Ctx {
    fn new(prefix: String) -> Self {
        Ctx { prefix, nodes: 0, constructs: HashMap::new(), tmps: 0 }
    }
}

struct Emitted {
    spec: NodeSpec,
    /// Enclosing function and loop bodies, outermost first.
    region: Vec<String>,
    explicit_transitions: bool,
    line: usize,
}

/// Nodes whose transition is still to be pointed at whatever comes next.
type Open = Vec<usize>;

struct Lowerer {
    out: Vec<Emitted>,
    ctx: Vec<Ctx>,
    region: Vec<String>,
    callables: HashMap<String, ActionKind>,
    in_function: bool,
    warnings: Vec<CompileWarning>,
}

/// Code text for an exec or call instruction; `$` is escaped so the runtime
/// does not treat it as a variable reference.
fn code(s: String) -> String {
    s.replace('$', "$$")
}

fn assign(target: Option<&str>, rhs: String) -> String {
    match target {
        Some(t) => format!("{t} = {rhs}"),
        None => rhs,
    }
}

fn call_text(callee: &str, args: &[Expr]) -> String {
    let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
    format!("{callee}({})", args.join(", "))
}

impl Lowerer {
    fn top(&mut self) -> &mut Ctx {
        self.ctx.last_mut().expect("context stack is never empty")
    }

    fn next_name(&self) -> String {
        let c = self.ctx.last().expect("context");
        format!("_{}node{}", c.prefix, c.nodes + 1)
    }

    fn construct(&mut self, kind: &'static str) -> (String, usize) {
        let c = self.top();
        let j = c.constructs.entry(kind).or_insert(0);
        *j += 1;
        let j = *j;
        (format!("_{}{kind}{j}", c.prefix), j)
    }

    fn tmp(&mut self) -> String {
        let c = self.top();
        c.tmps += 1;
        format!("_{}tmp{}", c.prefix, c.tmps)
    }

    fn link(&mut self, open: &mut Open, target: &str) {
        for i in open.drain(..) {
            self.out[i].spec.transitions = vec![target.to_string()];
        }
    }

    fn emit(&mut self, spec: NodeSpec, line: usize, open: &mut Open) -> usize {
        let name = spec.name.clone();
        self.link(open, &name);
        for c in &mut self.ctx {
            c.nodes += 1;
        }
        self.out.push(Emitted { spec, region: self.region.clone(), explicit_transitions: false, line });
        self.out.len() - 1
    }

    /// Emits an auto-named node and leaves it as the only open tail.
    fn emit_auto(&mut self, action: ActionKind, instruction: String, line: usize, open: &mut Open) -> usize {
        let spec = NodeSpec::new(self.next_name(), action).instruction(instruction);
        let idx = self.emit(spec, line, open);
        open.push(idx);
        idx
    }

    fn with_ctx<T>(&mut self, prefix: String, region: Option<String>, f: impl FnOnce(&mut Self) -> T) -> T {
        self.ctx.push(Ctx::new(prefix));
        if let Some(r) = &region {
            self.region.push(r.clone());
        }
        let out = f(self);
        if region.is_some() {
            self.region.pop();
        }
        self.ctx.pop();
        out
    }

    fn is_callable_call<'e>(&self, e: &'e Expr) -> Option<(&'e str, &'e [Arg])> {
        if let Expr::Call(callee, args) = e {
            if let Expr::Ident(name) = callee.as_ref() {
                if self.callables.contains_key(name) {
                    return Some((name, args));
                }
            }
        }
        None
    }

    fn contains_callable(&self, e: &Expr) -> bool {
        let mut found = false;
        e.walk(&mut |x| {
            if self.is_callable_call(x).is_some() {
                found = true;
            }
        });
        found
    }

    fn positional(&self, callee: &str, args: &[Arg], line: usize) -> Result<Vec<Expr>, CompileError> {
        args.iter()
            .map(|a| match &a.name {
                Some(_) => Err(CompileError::KeywordArgument { line, callee: callee.to_string() }),
                None => Ok(a.value.clone()),
            })
            .collect()
    }

    /// Replaces calls to compiled functions inside `e` with hidden
    /// temporaries bound by call nodes emitted ahead of the statement.
    fn hoist(&mut self, e: &Expr, line: usize, open: &mut Open) -> Result<Expr, CompileError> {
        if let Some((callee, args)) = self.is_callable_call(e) {
            let callee = callee.to_string();
            let args = self.positional(&callee, args, line)?;
            let args = args.iter().map(|a| self.hoist(a, line, open)).collect::<Result<Vec<_>, _>>()?;
            let tmp = self.tmp();
            let action = self.callables[&callee];
            self.emit_auto(action, code(assign(Some(&tmp), call_text(&callee, &args))), line, open);
            return Ok(Expr::Ident(tmp));
        }
        let mut h = |x: &Expr, me: &mut Self| me.hoist(x, line, open);
        Ok(match e {
            Expr::Literal(_) | Expr::Ident(_) => e.clone(),
            Expr::Unary(op, x) => Expr::Unary(*op, Box::new(h(x, self)?)),
            Expr::Binary(op, l, r) => {
                let l = h(l, self)?;
                if matches!(op, BinOp::And | BinOp::Or) && self.contains_callable(r) {
                    self.warnings.push(CompileWarning {
                        kind: WarningKind::HoistedShortCircuit,
                        line: Some(line),
                        message: format!("function call on the right of `{}` is always evaluated", if *op == BinOp::And { "and" } else { "or" }),
                    });
                }
                Expr::Binary(*op, Box::new(l), Box::new(h(r, self)?))
            }
            Expr::Index(a, b) => Expr::Index(Box::new(h(a, self)?), Box::new(h(b, self)?)),
            Expr::Slice(a, lo, hi) => {
                let a = h(a, self)?;
                let lo = lo.as_ref().map(|x| h(x, self).map(Box::new)).transpose()?;
                let hi = hi.as_ref().map(|x| h(x, self).map(Box::new)).transpose()?;
                Expr::Slice(Box::new(a), lo, hi)
            }
            Expr::Call(f, args) => {
                let f = h(f, self)?;
                let args = args
                    .iter()
                    .map(|a| Ok(Arg { name: a.name.clone(), value: h(&a.value, self)? }))
                    .collect::<Result<Vec<_>, CompileError>>()?;
                Expr::Call(Box::new(f), args)
            }
            Expr::Attr(x, name) => Expr::Attr(Box::new(h(x, self)?), name.clone()),
            Expr::List(items) => Expr::List(items.iter().map(|x| h(x, self)).collect::<Result<_, _>>()?),
            Expr::Map(entries) => Expr::Map(
                entries.iter().map(|(k, v)| Ok((h(k, self)?, h(v, self)?))).collect::<Result<_, CompileError>>()?,
            ),
        })
    }

    /// Emits the node for a statement-level value: a call node when the whole
    /// value is a compiled function call, otherwise an exec node.
    fn value_node(&mut self, target: Option<&str>, value: &Expr, line: usize, open: &mut Open) -> Result<usize, CompileError> {
        if let Some((callee, args)) = self.is_callable_call(value) {
            let callee = callee.to_string();
            let args = self.positional(&callee, args, line)?;
            let args = args.iter().map(|a| self.hoist(a, line, open)).collect::<Result<Vec<_>, _>>()?;
            let action = self.callables[&callee];
            return Ok(self.emit_auto(action, code(assign(target, call_text(&callee, &args))), line, open));
        }
        let v = self.hoist(value, line, open)?;
        Ok(self.emit_auto(ActionKind::ExecCode, code(assign(target, v.to_string())), line, open))
    }

    fn block(&mut self, stmts: &[Stmt], mut open: Open) -> Result<Open, CompileError> {
        for s in stmts {
            open = self.stmt(s, open)?;
        }
        Ok(open)
    }

    fn stmt(&mut self, s: &Stmt, mut open: Open) -> Result<Open, CompileError> {
        match s {
            Stmt::FuncDef { name, line, .. } => Err(CompileError::NestedFunction { line: *line, name: name.clone() }),
            Stmt::Pass { .. } => Ok(open),
            Stmt::Simple { target, value, line } => {
                self.value_node(target.as_deref(), value, *line, &mut open)?;
                Ok(open)
            }
            Stmt::Return { value, line } => {
                if !self.in_function {
                    return Err(CompileError::ReturnOutsideFunction { line: *line });
                }
                let idx = match value {
                    None => self.emit_auto(ActionKind::ExecCode, "None".into(), *line, &mut open),
                    Some(Expr::Ident(x)) => {
                        let spec = NodeSpec::new(self.next_name(), ActionKind::Transition).transitions([format!("return {x}")]);
                        self.emit(spec, *line, &mut open);
                        return Ok(Vec::new());
                    }
                    Some(e) => self.value_node(None, e, *line, &mut open)?,
                };
                self.out[idx].spec.transitions = vec!["return".into()];
                Ok(Vec::new())
            }
            Stmt::ExecNode { target, kwargs, line } => self.exec_node(target.as_deref(), kwargs, *line, open),
            Stmt::If { branches, line } => self.conditional(branches, *line, open),
            Stmt::While { cond, body, line } => self.while_loop(cond, body, *line, open),
            Stmt::For { target, iter, body, line } => self.for_loop(target, iter, body, *line, open),
        }
    }

    fn exec_node(&mut self, target: Option<&str>, kwargs: &[(String, KwValue)], line: usize, mut open: Open) -> Result<Open, CompileError> {
        let get = |k: &str| kwargs.iter().find(|(n, _)| n == k).map(|(_, v)| v);
        let text = |k: &str| match get(k) {
            Some(KwValue::Str(s)) => Ok(s.clone()),
            Some(KwValue::List(_)) => Err(CompileError::NonLiteralKwarg { line, kwarg: k.to_string() }),
            None => Ok(String::new()),
        };
        let list = |k: &str| match get(k) {
            Some(KwValue::List(l)) => l.clone(),
            Some(KwValue::Str(s)) => vec![s.clone()],
            None => Vec::new(),
        };
        let action = match get("action") {
            None => ActionKind::Chat,
            Some(_) => {
                let a = text("action")?;
                a.parse().map_err(|_| CompileError::UnknownAction { line, action: a })?
            }
        };
        let name = match get("name") {
            Some(_) => text("name")?,
            None => self.next_name(),
        };
        let mut spec = NodeSpec::new(name, action)
            .instruction(assign(target, text("instruction")?))
            .transitions(list("transitions"))
            .question(text("transition_question")?)
            .choices(list("transition_choices"))
            .condition(text("boolean_condition")?)
            .interjection(text("condition_interjection")?)
            .user_prompts(list("user_instruction_transitions"))
            .category(text("category")?);
        let closed = !spec.transitions.is_empty();
        spec.name = spec.name.trim().to_string();
        let idx = self.emit(spec, line, &mut open);
        self.out[idx].explicit_transitions = closed;
        Ok(if closed { Vec::new() } else { vec![idx] })
    }

    fn conditional(&mut self, branches: &[(Option<Expr>, Vec<Stmt>)], line: usize, mut open: Open) -> Result<Open, CompileError> {
        let has_else = branches.last().is_some_and(|(c, _)| c.is_none());
        if branches.len() + usize::from(!has_else) > 26 {
            return Err(CompileError::TooManyBranches { line });
        }
        let conds = branches
            .iter()
            .map(|(c, _)| c.as_ref().map(|c| self.hoist(c, line, &mut open)).transpose())
            .collect::<Result<Vec<_>, _>>()?;
        let (base, j) = self.construct("conditional");
        let parent = self.ctx.last().expect("context").prefix.clone();
        let start = NodeSpec::new(format!("{base}_start"), ActionKind::Transition).transitions([format!("{base}.*")]);
        self.emit(start, line, &mut open);
        let mut tails = Vec::new();
        for (i, ((_, body), cond)) in branches.iter().zip(conds).enumerate() {
            let letter = (b'a' + i as u8) as char;
            let mut head = NodeSpec::new(format!("{base}.{letter}"), ActionKind::Transition);
            if let Some(c) = cond {
                head.boolean_condition = c.to_string();
            }
            let idx = self.emit(head, line, &mut Vec::new());
            let t = self.with_ctx(format!("{parent}conditional{j}_{letter}_"), None, |me| me.block(body, vec![idx]))?;
            tails.extend(t);
        }
        if !has_else {
            let letter = (b'a' + branches.len() as u8) as char;
            let head = NodeSpec::new(format!("{base}.{letter}"), ActionKind::Transition);
            tails.push(self.emit(head, line, &mut Vec::new()));
        }
        Ok(tails)
    }

    fn while_loop(&mut self, cond: &Expr, body: &[Stmt], line: usize, mut open: Open) -> Result<Open, CompileError> {
        let (base, j) = self.construct("whileloop");
        let parent = self.ctx.last().expect("context").prefix.clone();
        let check = format!("{base}.*");
        let start = self.emit(NodeSpec::new(format!("{base}_start"), ActionKind::Transition), line, &mut open);
        open.push(start);
        let before = self.out.len();
        let cond = self.hoist(cond, line, &mut open)?;
        // the body loops back to the hoisted calls, if any, so they rerun
        let back = if self.out.len() > before { self.out[before].spec.name.clone() } else { check.clone() };
        self.link(&mut open, &check);
        let a = self.emit(
            NodeSpec::new(format!("{base}.a"), ActionKind::Transition).condition(cond.to_string()),
            line,
            &mut Vec::new(),
        );
        let mut tails = self.with_ctx(format!("{parent}whileloop{j}_"), Some(base.clone()), |me| me.block(body, vec![a]))?;
        self.link(&mut tails, &back);
        let b = self.emit(NodeSpec::new(format!("{base}.b"), ActionKind::Transition), line, &mut Vec::new());
        Ok(vec![b])
    }

    fn for_loop(&mut self, target: &str, iter: &Expr, body: &[Stmt], line: usize, mut open: Open) -> Result<Open, CompileError> {
        let iter = self.hoist(iter, line, &mut open)?;
        let (base, j) = self.construct("forloop");
        let parent = self.ctx.last().expect("context").prefix.clone();
        let it = format!("{base}_iter");
        let i = format!("{base}_i");
        let check = format!("{base}.*");
        let exec = |name: String, instr: String| NodeSpec::new(name, ActionKind::ExecCode).instruction(code(instr));

        let n = self.emit(exec(format!("{base}_init_iter"), format!("{it} = {iter}")), line, &mut open);
        open.push(n);
        let n = self.emit(exec(format!("{base}_init_i"), format!("{i} = 0")), line, &mut open);
        open.push(n);
        let n = self.emit(NodeSpec::new(format!("{base}_start"), ActionKind::Transition), line, &mut open);
        open.push(n);
        self.link(&mut open, &check);
        let a = self.emit(
            NodeSpec::new(format!("{base}.a"), ActionKind::Transition).condition(format!("{i} < len({it})")),
            line,
            &mut Vec::new(),
        );
        let next = self.emit(exec(format!("{base}_next"), format!("{target} = {it}[{i}]")), line, &mut vec![a]);
        let mut tails = self.with_ctx(format!("{parent}forloop{j}_"), Some(base.clone()), |me| me.block(body, vec![next]))?;
        let inc = self.emit(exec(format!("{base}_inc"), format!("{i} = {i} + 1")), line, &mut tails);
        self.link(&mut vec![inc], &check);
        let b = self.emit(NodeSpec::new(format!("{base}.b"), ActionKind::Transition), line, &mut Vec::new());
        Ok(vec![b])
    }
}

/// Lowers a parsed module: the top-level body first (it becomes the start
/// of the graph), then one callable subgraph per function.
pub fn compile(module: &Module, config: AutogramConfig) -> Result<Compiled, CompileError> {
    let mut callables = HashMap::new();
    for f in module.functions() {
        if let Stmt::FuncDef { name, decorator, .. } = f {
            if callables.insert(name.clone(), decorator.unwrap_or(ActionKind::CallLocal)).is_some() {
                return Err(CompileError::DuplicateFunction(name.clone()));
            }
        }
    }
    let mut lw = Lowerer {
        out: Vec::new(),
        ctx: vec![Ctx::new(String::new())],
        region: Vec::new(),
        callables,
        in_function: false,
        warnings: Vec::new(),
    };
    if module.body.is_empty() {
        lw.warnings.push(CompileWarning { kind: WarningKind::EmptyModule, line: None, message: "module has no statements".into() });
    }

    let main: Vec<Stmt> = module.body.iter().filter(|s| !matches!(s, Stmt::FuncDef { .. })).cloned().collect();
    lw.block(&main, Vec::new())?;

    lw.in_function = true;
    for f in module.functions() {
        let Stmt::FuncDef { name, params, body, line, .. } = f else { continue };
        lw.ctx = vec![Ctx::new(format!("{name}_"))];
        lw.region = vec![name.clone()];
        let root = NodeSpec::new(format!("{name}({})", params.join(", ")), ActionKind::Transition);
        let idx = lw.emit(root, *line, &mut Vec::new());
        let mut tails = lw.block(body, vec![idx])?;
        if !tails.is_empty() {
            let end = body.last().map(Stmt::line).unwrap_or(*line);
            let r = lw.emit_auto(ActionKind::ExecCode, "None".into(), end, &mut tails);
            lw.out[r].spec.transitions = vec!["return".into()];
        }
    }

    let mut seen = HashSet::new();
    for e in &lw.out {
        if !seen.insert(e.spec.name.as_str()) {
            return Err(CompileError::NameCollision(e.spec.name.clone()));
        }
    }

    let regions: HashMap<&str, &[String]> = lw.out.iter().map(|e| (e.spec.name.as_str(), e.region.as_slice())).collect();
    let mut jump_warnings = Vec::new();
    for e in lw.out.iter().filter(|e| e.explicit_transitions) {
        for t in &e.spec.transitions {
            if let TransitionRef::Node(target) = TransitionRef::parse(t) {
                if let Some(r) = regions.get(target) {
                    if !e.region.starts_with(r) {
                        jump_warnings.push(CompileWarning {
                            kind: WarningKind::JumpIntoBlock,
                            line: Some(e.line),
                            message: format!("`{}` jumps into the body of `{}` from outside", e.spec.name, r.join("/")),
                        });
                    }
                }
            }
        }
    }
    lw.warnings.extend(jump_warnings);

    let graph = GraphModel::from_nodes(config, lw.out.into_iter().map(|e| e.spec))?;
    let diags = validate_graph(&graph);
    let (errors, warns): (Vec<_>, Vec<_>) = diags.into_iter().partition(|d| d.severity == Severity::Error);
    if !errors.is_empty() {
        return Err(CompileError::InvalidGraph(errors));
    }
    let mut warnings = lw.warnings;
    warnings.extend(warns.into_iter().map(|d| CompileWarning { kind: WarningKind::Validation, line: None, message: d.to_string() }));
    Ok(Compiled { graph, warnings })
}
