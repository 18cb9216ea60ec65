//! Statement parser for the indentation-delimited authoring language.

use crate::expr::{tokenize_layout, Expr, ExprError, ExprParser, Keyword, Literal, Pos, Tok, Token};
use crate::model::ActionKind;

use super::CompileError;

/// Literal value of an `exec_node` keyword argument.
#[derive(Clone, Debug, PartialEq)]
pub enum KwValue {
    Str(String),
    List(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    FuncDef { name: String, params: Vec<String>, decorator: Option<ActionKind>, body: Vec<Stmt>, line: usize },
    If { branches: Vec<(Option<Expr>, Vec<Stmt>)>, line: usize },
    While { cond: Expr, body: Vec<Stmt>, line: usize },
    For { target: String, iter: Expr, body: Vec<Stmt>, line: usize },
    Return { value: Option<Expr>, line: usize },
    /// Assignment when `target` is set, otherwise a bare expression.
    Simple { target: Option<String>, value: Expr, line: usize },
    ExecNode { target: Option<String>, kwargs: Vec<(String, KwValue)>, line: usize },
    Pass { line: usize },
}

impl Stmt {
    pub fn line(&self) -> usize {
        match self {
            Stmt::FuncDef { line, .. }
            | Stmt::If { line, .. }
            | Stmt::While { line, .. }
            | Stmt::For { line, .. }
            | Stmt::Return { line, .. }
            | Stmt::Simple { line, .. }
            | Stmt::ExecNode { line, .. }
            | Stmt::Pass { line } => *line,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Module {
    pub body: Vec<Stmt>,
}

impl Module {
    pub fn functions(&self) -> impl Iterator<Item = &Stmt> {
        self.body.iter().filter(|s| matches!(s, Stmt::FuncDef { .. }))
    }
}

pub const EXEC_NODE_KWARGS: &[&str] = &[
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

pub fn parse_program(source: &str) -> Result<Module, CompileError> {
    let toks = tokenize_layout(source)?;
    let mut p = StmtParser { p: ExprParser::new(&toks), toks: &toks };
    let body = p.block_body(false)?;
    Ok(Module { body })
}

struct StmtParser<'t> {
    p: ExprParser<'t>,
    toks: &'t [Token],
}

fn syntax(pos: Pos, msg: impl Into<String>) -> CompileError {
    CompileError::Syntax(ExprError::Parse { pos, msg: msg.into() })
}

impl<'t> StmtParser<'t> {
    fn line(&self) -> usize {
        self.p.here().line
    }

    fn skip_newlines(&mut self) {
        while self.p.eat(&Tok::Newline) {}
    }

    fn at_end(&self) -> bool {
        self.p.i >= self.toks.len()
    }

    /// Statements until a dedent (when nested) or end of input.
    fn block_body(&mut self, nested: bool) -> Result<Vec<Stmt>, CompileError> {
        let mut out = Vec::new();
        loop {
            self.skip_newlines();
            if self.at_end() {
                if nested {
                    return Ok(out);
                }
                break;
            }
            if nested && self.p.eat(&Tok::Dedent) {
                return Ok(out);
            }
            if let Some(s) = self.stmt()? {
                out.push(s);
            }
        }
        Ok(out)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, CompileError> {
        self.p.expect(&Tok::Colon)?;
        if !self.p.eat(&Tok::Newline) {
            return Err(syntax(self.p.here(), "expected a new line after `:`"));
        }
        self.skip_newlines();
        if !self.p.eat(&Tok::Indent) {
            return Err(CompileError::Syntax(ExprError::Indent { pos: self.p.here(), msg: "expected an indented block".into() }));
        }
        let body = self.block_body(true)?;
        if body.is_empty() {
            return Err(syntax(self.p.here(), "empty block"));
        }
        Ok(body)
    }

    fn end_of_statement(&mut self) -> Result<(), CompileError> {
        if self.at_end() || self.p.eat(&Tok::Newline) || self.p.peek() == Some(&Tok::Dedent) {
            return Ok(());
        }
        Err(self.p.unexpected("expected end of statement").into())
    }

    fn ident(&mut self) -> Result<String, CompileError> {
        match self.p.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.p.advance();
                Ok(s)
            }
            _ => Err(self.p.unexpected("expected a name").into()),
        }
    }

    fn stmt(&mut self) -> Result<Option<Stmt>, CompileError> {
        let line = self.line();
        match self.p.peek() {
            Some(Tok::At) => {
                self.p.advance();
                let name = self.ident()?;
                let decorator = match name.as_str() {
                    "local_function" => ActionKind::CallLocal,
                    "global_function" => ActionKind::CallGlobal,
                    "function" => ActionKind::CallMixed,
                    _ => return Err(CompileError::UnknownDecorator { line, name }),
                };
                self.p.expect(&Tok::Newline)?;
                self.skip_newlines();
                if self.p.peek() != Some(&Tok::Kw(Keyword::Def)) {
                    return Err(self.p.unexpected("expected `def` after decorator").into());
                }
                self.funcdef(Some(decorator)).map(Some)
            }
            Some(Tok::Kw(Keyword::Def)) => self.funcdef(None).map(Some),
            Some(Tok::Kw(Keyword::If)) => {
                self.p.advance();
                let mut branches = Vec::new();
                let cond = self.p.expr()?;
                branches.push((Some(cond), self.block()?));
                loop {
                    self.skip_newlines();
                    if self.p.eat(&Tok::Kw(Keyword::Elif)) {
                        let cond = self.p.expr()?;
                        branches.push((Some(cond), self.block()?));
                    } else if self.p.eat(&Tok::Kw(Keyword::Else)) {
                        branches.push((None, self.block()?));
                        break;
                    } else {
                        break;
                    }
                }
                Ok(Some(Stmt::If { branches, line }))
            }
            Some(Tok::Kw(Keyword::While)) => {
                self.p.advance();
                let cond = self.p.expr()?;
                let body = self.block()?;
                Ok(Some(Stmt::While { cond, body, line }))
            }
            Some(Tok::Kw(Keyword::For)) => {
                self.p.advance();
                let target = self.ident()?;
                if self.p.peek() == Some(&Tok::Comma) {
                    return Err(CompileError::MultiAssign { line });
                }
                self.p.expect(&Tok::Kw(Keyword::In))?;
                let iter = self.p.expr()?;
                let body = self.block()?;
                Ok(Some(Stmt::For { target, iter, body, line }))
            }
            Some(Tok::Kw(Keyword::Return)) => {
                self.p.advance();
                let value = match self.p.peek() {
                    None | Some(Tok::Newline) | Some(Tok::Dedent) => None,
                    _ => Some(self.p.expr()?),
                };
                self.end_of_statement()?;
                Ok(Some(Stmt::Return { value, line }))
            }
            Some(Tok::Kw(Keyword::Pass)) => {
                self.p.advance();
                self.end_of_statement()?;
                Ok(Some(Stmt::Pass { line }))
            }
            Some(Tok::Kw(Keyword::Elif)) | Some(Tok::Kw(Keyword::Else)) => {
                Err(self.p.unexpected("`elif`/`else` without a matching `if`").into())
            }
            Some(Tok::Indent) => Err(CompileError::Syntax(ExprError::Indent { pos: self.p.here(), msg: "unexpected indent".into() })),
            _ => self.simple(line).map(Some),
        }
    }

    fn funcdef(&mut self, decorator: Option<ActionKind>) -> Result<Stmt, CompileError> {
        let line = self.line();
        self.p.expect(&Tok::Kw(Keyword::Def))?;
        let name = self.ident()?;
        self.p.expect(&Tok::LParen)?;
        let mut params = Vec::new();
        while self.p.peek() != Some(&Tok::RParen) {
            params.push(self.ident()?);
            if !self.p.eat(&Tok::Comma) {
                break;
            }
        }
        self.p.expect(&Tok::RParen)?;
        let body = self.block()?;
        Ok(Stmt::FuncDef { name, params, decorator, body, line })
    }

    fn simple(&mut self, line: usize) -> Result<Stmt, CompileError> {
        let mut target = None;
        if let (Some(Tok::Ident(name)), Some(Tok::Assign)) = (self.p.peek(), self.p.peek_n(1)) {
            target = Some(name.clone());
            self.p.advance();
            self.p.advance();
        }
        if let (Some(Tok::Ident(name)), Some(Tok::LParen)) = (self.p.peek(), self.p.peek_n(1)) {
            if name == "exec_node" {
                self.p.advance();
                self.p.advance();
                let kwargs = self.exec_node_kwargs(line)?;
                self.end_of_statement()?;
                return Ok(Stmt::ExecNode { target, kwargs, line });
            }
        }
        let value = self.p.expr()?;
        match self.p.peek() {
            Some(Tok::Comma) => return Err(CompileError::MultiAssign { line }),
            Some(Tok::Assign) if target.is_some() => return Err(CompileError::MultiAssign { line }),
            Some(Tok::Assign) => return Err(CompileError::UnsupportedAssignTarget { line }),
            _ => {}
        }
        self.end_of_statement()?;
        Ok(Stmt::Simple { target, value, line })
    }

    fn exec_node_kwargs(&mut self, line: usize) -> Result<Vec<(String, KwValue)>, CompileError> {
        let mut out: Vec<(String, KwValue)> = Vec::new();
        while self.p.peek() != Some(&Tok::RParen) {
            let key = self.ident()?;
            if !EXEC_NODE_KWARGS.contains(&key.as_str()) {
                return Err(CompileError::UnknownKwarg { line, kwarg: key });
            }
            if out.iter().any(|(k, _)| *k == key) {
                return Err(syntax(self.p.here(), format!("duplicate keyword `{key}`")));
            }
            self.p.expect(&Tok::Assign)?;
            let value = self.p.expr()?;
            let lit = literal_kwarg(&value).ok_or_else(|| CompileError::NonLiteralKwarg { line, kwarg: key.clone() })?;
            out.push((key, lit));
            if !self.p.eat(&Tok::Comma) {
                break;
            }
        }
        self.p.expect(&Tok::RParen)?;
        Ok(out)
    }
}

fn literal_kwarg(e: &Expr) -> Option<KwValue> {
    match e {
        Expr::Literal(Literal::Str(s)) => Some(KwValue::Str(s.clone())),
        Expr::List(items) => items
            .iter()
            .map(|i| match i {
                Expr::Literal(Literal::Str(s)) => Some(s.clone()),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(KwValue::List),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIB: &str = "\
def fibonacci(n):
    if n == 1:
        return 0
    elif n == 2:
        return 1
    else:
        return fibonacci(n - 1) + fibonacci(n - 2)
";

    #[test]
    fn fibonacci_shape() {
        let m = parse_program(FIB).unwrap();
        assert_eq!(m.body.len(), 1);
        let Stmt::FuncDef { name, params, body, .. } = &m.body[0] else { panic!() };
        assert_eq!(name, "fibonacci");
        assert_eq!(params, &["n"]);
        assert!(matches!(&body[0], Stmt::If { branches, .. } if branches.len() == 3));
    }

    #[test]
    fn exec_node_with_target() {
        let m = parse_program("x = exec_node(action=\"thought\", instruction=\"summarize\")\n").unwrap();
        let Stmt::ExecNode { target, kwargs, .. } = &m.body[0] else { panic!() };
        assert_eq!(target.as_deref(), Some("x"));
        assert_eq!(kwargs[1], ("instruction".to_string(), KwValue::Str("summarize".into())));
    }

    #[test]
    fn rejects() {
        assert!(matches!(parse_program("if x:\n\ty = 1\n        z = 2\n"), Err(CompileError::Syntax(_))));
        assert!(matches!(parse_program("a, b = 1, 2\n"), Err(CompileError::MultiAssign { line: 1 })));
        assert!(matches!(parse_program("a = b = 2\n"), Err(CompileError::MultiAssign { .. })));
        assert!(matches!(
            parse_program("exec_node(instruction=x)\n"),
            Err(CompileError::NonLiteralKwarg { ref kwarg, .. }) if kwarg == "instruction"
        ));
        assert!(matches!(parse_program("exec_node(colour=\"red\")\n"), Err(CompileError::UnknownKwarg { .. })));
        assert!(matches!(parse_program("@cached\ndef f():\n    return 1\n"), Err(CompileError::UnknownDecorator { .. })));
    }

    #[test]
    fn comments_and_blank_lines() {
        let src = "# header\nx = 1  # one\n\n\nwhile x < 3:\n    # inside\n    x = x + 1\n";
        let m = parse_program(src).unwrap();
        assert_eq!(m.body.len(), 2);
    }
}
