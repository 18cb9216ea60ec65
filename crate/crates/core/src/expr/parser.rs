use super::ast::{Arg, BinOp, Expr, Literal, UnaryOp};
use super::lexer::{tokenize, Keyword, Pos, Tok, Token};
use super::ExprError;

/// Recursive-descent expression parser over a token slice. The program
/// parser drives it directly for expression positions inside statements.
pub struct ExprParser<'t> {
    toks: &'t [Token],
    pub(crate) i: usize,
}

pub fn parse_expression(tokens: &[Token]) -> Result<Expr, ExprError> {
    let mut p = ExprParser::new(tokens);
    let e = p.expr()?;
    if let Some(t) = p.peek_token() {
        return Err(ExprError::Parse { pos: t.pos, msg: format!("unexpected {}", describe(&t.tok)) });
    }
    Ok(e)
}

/// Tokenizes and parses in one step.
pub fn parse_source(source: &str) -> Result<Expr, ExprError> {
    let toks = tokenize(source)?;
    if toks.is_empty() {
        return Err(ExprError::Parse { pos: Pos { line: 1, col: 1, offset: 0 }, msg: "empty expression".into() });
    }
    parse_expression(&toks)
}

pub(crate) fn describe(t: &Tok) -> String {
    match t {
        Tok::Int(i) => format!("integer {i}"),
        Tok::Float(x) => format!("number {x}"),
        Tok::Str(_) => "string literal".into(),
        Tok::Ident(n) => format!("identifier `{n}`"),
        Tok::Kw(k) => format!("keyword `{}`", k.as_str()),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indent".into(),
        Tok::Dedent => "dedent".into(),
        other => format!("`{}`", symbol(other)),
    }
}

fn symbol(t: &Tok) -> &'static str {
    match t {
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Slash => "/",
        Tok::DoubleSlash => "//",
        Tok::Percent => "%",
        Tok::DoubleStar => "**",
        Tok::EqEq => "==",
        Tok::NotEq => "!=",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        Tok::Assign => "=",
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBracket => "[",
        Tok::RBracket => "]",
        Tok::LBrace => "{",
        Tok::RBrace => "}",
        Tok::Comma => ",",
        Tok::Colon => ":",
        Tok::Dot => ".",
        Tok::At => "@",
        _ => "?",
    }
}

fn comparison_op(t: &Tok) -> Option<BinOp> {
    Some(match t {
        Tok::EqEq => BinOp::Eq,
        Tok::NotEq => BinOp::NotEq,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        Tok::Kw(Keyword::In) => BinOp::In,
        _ => return None,
    })
}

impl<'t> ExprParser<'t> {
    pub fn new(toks: &'t [Token]) -> Self {
        ExprParser { toks, i: 0 }
    }

    pub(crate) fn peek_token(&self) -> Option<&'t Token> {
        self.toks.get(self.i)
    }

    pub(crate) fn peek(&self) -> Option<&'t Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    pub(crate) fn peek_n(&self, n: usize) -> Option<&'t Tok> {
        self.toks.get(self.i + n).map(|t| &t.tok)
    }

    pub(crate) fn here(&self) -> Pos {
        self.toks
            .get(self.i)
            .or_else(|| self.toks.last())
            .map(|t| t.pos)
            .unwrap_or(Pos { line: 1, col: 1, offset: 0 })
    }

    pub(crate) fn advance(&mut self) -> Option<&'t Token> {
        let t = self.toks.get(self.i);
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    pub(crate) fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, tok: &Tok) -> Result<(), ExprError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected `{}`", symbol(tok))))
        }
    }

    pub(crate) fn unexpected(&self, what: &str) -> ExprError {
        let found = match self.peek() {
            Some(t) => describe(t),
            None => "end of input".into(),
        };
        ExprError::Parse { pos: self.here(), msg: format!("{what}, found {found}") }
    }

    pub fn expr(&mut self) -> Result<Expr, ExprError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.and_expr()?;
        while self.eat(&Tok::Kw(Keyword::Or)) {
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.not_expr()?;
        while self.eat(&Tok::Kw(Keyword::And)) {
            let rhs = self.not_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ExprError> {
        if self.eat(&Tok::Kw(Keyword::Not)) {
            let e = self.not_expr()?;
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(e)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ExprError> {
        let lhs = self.additive()?;
        let Some(op) = self.peek().and_then(comparison_op) else {
            return Ok(lhs);
        };
        self.i += 1;
        let rhs = self.additive()?;
        if self.peek().and_then(comparison_op).is_some() {
            return Err(ExprError::Parse {
                pos: self.here(),
                msg: "comparison chains are not supported; combine with `and`".into(),
            });
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn additive(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.i += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                Some(Tok::DoubleSlash) => BinOp::FloorDiv,
                Some(Tok::Percent) => BinOp::Mod,
                _ => return Ok(lhs),
            };
            self.i += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(&Tok::Minus) {
            let e = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(e)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.postfix()?;
        if self.eat(&Tok::DoubleStar) {
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.atom()?;
        loop {
            match self.peek() {
                Some(Tok::LParen) => {
                    self.i += 1;
                    let args = self.call_args()?;
                    e = Expr::Call(Box::new(e), args);
                }
                Some(Tok::LBracket) => {
                    self.i += 1;
                    e = self.subscript(e)?;
                }
                Some(Tok::Dot) => {
                    self.i += 1;
                    match self.advance().map(|t| &t.tok) {
                        Some(Tok::Ident(n)) => e = Expr::Attr(Box::new(e), n.clone()),
                        _ => {
                            self.i -= 1;
                            return Err(self.unexpected("expected attribute name after `.`"));
                        }
                    }
                }
                _ => return Ok(e),
            }
        }
    }

    fn call_args(&mut self) -> Result<Vec<Arg>, ExprError> {
        let mut args = Vec::new();
        let mut seen_keyword = false;
        while !self.eat(&Tok::RParen) {
            let name = match (self.peek(), self.peek_n(1)) {
                (Some(Tok::Ident(n)), Some(Tok::Assign)) => {
                    self.i += 2;
                    seen_keyword = true;
                    Some(n.clone())
                }
                _ => {
                    if seen_keyword {
                        return Err(self.unexpected("positional argument after keyword argument"));
                    }
                    None
                }
            };
            let value = self.expr()?;
            args.push(Arg { name, value });
            if !self.eat(&Tok::Comma) {
                self.expect(&Tok::RParen)?;
                break;
            }
        }
        Ok(args)
    }

    fn subscript(&mut self, base: Expr) -> Result<Expr, ExprError> {
        let lo = if self.peek() == Some(&Tok::Colon) { None } else { Some(self.expr()?) };
        if self.eat(&Tok::Colon) {
            let hi = if self.peek() == Some(&Tok::RBracket) { None } else { Some(self.expr()?) };
            self.expect(&Tok::RBracket)?;
            return Ok(Expr::Slice(Box::new(base), lo.map(Box::new), hi.map(Box::new)));
        }
        self.expect(&Tok::RBracket)?;
        match lo {
            Some(idx) => Ok(Expr::Index(Box::new(base), Box::new(idx))),
            None => Err(self.unexpected("expected index expression")),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.advance() else {
            return Err(ExprError::Parse { pos: self.here(), msg: "unexpected end of expression".into() });
        };
        Ok(match &tok.tok {
            Tok::Int(i) => Expr::Literal(Literal::Int(*i)),
            Tok::Float(x) => Expr::Literal(Literal::Float(*x)),
            Tok::Str(s) => Expr::Literal(Literal::Str(s.clone())),
            Tok::Kw(Keyword::True) => Expr::Literal(Literal::Bool(true)),
            Tok::Kw(Keyword::False) => Expr::Literal(Literal::Bool(false)),
            Tok::Kw(Keyword::None) => Expr::Literal(Literal::Null),
            Tok::Ident(n) => Expr::Ident(n.clone()),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                e
            }
            Tok::LBracket => {
                let mut items = Vec::new();
                while !self.eat(&Tok::RBracket) {
                    items.push(self.expr()?);
                    if !self.eat(&Tok::Comma) {
                        self.expect(&Tok::RBracket)?;
                        break;
                    }
                }
                Expr::List(items)
            }
            Tok::LBrace => {
                let mut entries = Vec::new();
                while !self.eat(&Tok::RBrace) {
                    let k = self.expr()?;
                    self.expect(&Tok::Colon)?;
                    let v = self.expr()?;
                    entries.push((k, v));
                    if !self.eat(&Tok::Comma) {
                        self.expect(&Tok::RBrace)?;
                        break;
                    }
                }
                Expr::Map(entries)
            }
            other => {
                return Err(ExprError::Parse { pos: tok.pos, msg: format!("unexpected {}", describe(other)) });
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_identifiers() {
        assert_eq!(
            parse_source("fib1 + fib2").unwrap(),
            Expr::binary(BinOp::Add, Expr::ident("fib1"), Expr::ident("fib2"))
        );
    }

    #[test]
    fn negated_dotted_call() {
        let e = parse_source("not meta_utils.check_node_name(new_name)").unwrap();
        let Expr::Unary(UnaryOp::Not, inner) = e else { panic!() };
        let Expr::Call(callee, args) = *inner else { panic!() };
        assert_eq!(callee.dotted_path().as_deref(), Some("meta_utils.check_node_name"));
        assert_eq!(args.len(), 1);
    }

    #[test]
    fn precedence_shape() {
        let e = parse_source("1+2*3").unwrap();
        assert_eq!(e.to_string(), "1 + 2 * 3");
        let e = parse_source("-2**2").unwrap();
        assert!(matches!(e, Expr::Unary(UnaryOp::Neg, _)));
        let e = parse_source("2**3**2").unwrap();
        assert_eq!(e.to_string(), "2 ** 3 ** 2");
        assert_eq!(parse_source("(1+2)*3").unwrap().to_string(), "(1 + 2) * 3");
        assert_eq!(parse_source("a - (b - c)").unwrap().to_string(), "a - (b - c)");
    }

    #[test]
    fn comparison_chain_rejected() {
        assert!(matches!(parse_source("a < b < c"), Err(ExprError::Parse { .. })));
    }

    #[test]
    fn keyword_arguments() {
        let e = parse_source("self.add_node(action='chat', name=new_name)").unwrap();
        let Expr::Call(_, args) = e else { panic!() };
        assert_eq!(args[0].name.as_deref(), Some("action"));
        assert!(parse_source("f(a=1, 2)").is_err());
    }

    #[test]
    fn slices_and_literals() {
        assert_eq!(parse_source("x[1:]").unwrap().to_string(), "x[1:]");
        assert_eq!(parse_source("x[:2]").unwrap().to_string(), "x[:2]");
        assert_eq!(parse_source("{'a': [1, 2.5, None]}").unwrap().to_string(), "{'a': [1, 2.5, None]}");
    }

    #[test]
    fn error_position() {
        match parse_source("a + * b") {
            Err(ExprError::Parse { pos, .. }) => assert_eq!(pos.col, 5),
            other => panic!("{other:?}"),
        }
    }
}
