use std::fmt;

use super::value::{format_float, quote_str};

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
    Eq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    In,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
            BinOp::Eq => "==",
            BinOp::NotEq => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::In => "in",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Or => PREC_OR,
            BinOp::And => PREC_AND,
            BinOp::Eq | BinOp::NotEq | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::In => PREC_CMP,
            BinOp::Add | BinOp::Sub => PREC_ADD,
            BinOp::Mul | BinOp::Div | BinOp::FloorDiv | BinOp::Mod => PREC_MUL,
            BinOp::Pow => PREC_POW,
        }
    }
}

pub(crate) const PREC_OR: u8 = 1;
pub(crate) const PREC_AND: u8 = 2;
pub(crate) const PREC_NOT: u8 = 3;
pub(crate) const PREC_CMP: u8 = 4;
pub(crate) const PREC_ADD: u8 = 5;
pub(crate) const PREC_MUL: u8 = 6;
pub(crate) const PREC_NEG: u8 = 7;
pub(crate) const PREC_POW: u8 = 8;
pub(crate) const PREC_ATOM: u8 = 9;

#[derive(Clone, Debug, PartialEq)]
pub struct Arg {
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Literal(Literal),
    Ident(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Slice(Box<Expr>, Option<Box<Expr>>, Option<Box<Expr>>),
    Call(Box<Expr>, Vec<Arg>),
    Attr(Box<Expr>, String),
    List(Vec<Expr>),
    Map(Vec<(Expr, Expr)>),
}

impl Expr {
    pub fn ident(name: impl Into<String>) -> Expr {
        Expr::Ident(name.into())
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Unary(UnaryOp::Not, _) => PREC_NOT,
            Expr::Unary(UnaryOp::Neg, _) => PREC_NEG,
            _ => PREC_ATOM,
        }
    }

    /// Dotted path for chains like `meta_utils.check_node_name`.
    pub fn dotted_path(&self) -> Option<String> {
        match self {
            Expr::Ident(n) => Some(n.clone()),
            Expr::Attr(base, name) => base.dotted_path().map(|p| format!("{p}.{name}")),
            _ => None,
        }
    }

    /// Visits every sub-expression in evaluation order (children before parent).
    pub fn walk(&self, f: &mut dyn FnMut(&Expr)) {
        match self {
            Expr::Literal(_) | Expr::Ident(_) => {}
            Expr::Unary(_, e) | Expr::Attr(e, _) => e.walk(f),
            Expr::Binary(_, l, r) | Expr::Index(l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Slice(b, lo, hi) => {
                b.walk(f);
                if let Some(e) = lo {
                    e.walk(f);
                }
                if let Some(e) = hi {
                    e.walk(f);
                }
            }
            Expr::Call(c, args) => {
                c.walk(f);
                for a in args {
                    a.value.walk(f);
                }
            }
            Expr::List(items) => items.iter().for_each(|e| e.walk(f)),
            Expr::Map(entries) => {
                for (k, v) in entries {
                    k.walk(f);
                    v.walk(f);
                }
            }
        }
        f(self);
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Source form with the minimum parentheses needed to re-parse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(Literal::Null) => f.write_str("None"),
            Expr::Literal(Literal::Bool(true)) => f.write_str("True"),
            Expr::Literal(Literal::Bool(false)) => f.write_str("False"),
            Expr::Literal(Literal::Int(i)) => write!(f, "{i}"),
            Expr::Literal(Literal::Float(x)) => f.write_str(&format_float(*x)),
            Expr::Literal(Literal::Str(s)) => f.write_str(&quote_str(s)),
            Expr::Ident(n) => f.write_str(n),
            Expr::Unary(UnaryOp::Not, e) => {
                f.write_str("not ")?;
                write_child(f, e, e.precedence() < PREC_NOT)
            }
            Expr::Unary(UnaryOp::Neg, e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < PREC_NEG)
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let (lp, rp) = match op {
                    BinOp::Pow => (l.precedence() <= p, r.precedence() < PREC_NEG),
                    _ if p == PREC_CMP => (l.precedence() <= p, r.precedence() <= p),
                    _ => (l.precedence() < p, r.precedence() <= p),
                };
                write_child(f, l, lp)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, r, rp)
            }
            Expr::Index(b, i) => {
                write_child(f, b, b.precedence() < PREC_ATOM)?;
                write!(f, "[{i}]")
            }
            Expr::Slice(b, lo, hi) => {
                write_child(f, b, b.precedence() < PREC_ATOM)?;
                f.write_str("[")?;
                if let Some(lo) = lo {
                    write!(f, "{lo}")?;
                }
                f.write_str(":")?;
                if let Some(hi) = hi {
                    write!(f, "{hi}")?;
                }
                f.write_str("]")
            }
            Expr::Call(c, args) => {
                write_child(f, c, c.precedence() < PREC_ATOM)?;
                f.write_str("(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    if let Some(n) = &a.name {
                        write!(f, "{n}=")?;
                    }
                    write!(f, "{}", a.value)?;
                }
                f.write_str(")")
            }
            Expr::Attr(b, name) => {
                let needs = b.precedence() < PREC_ATOM || matches!(**b, Expr::Literal(Literal::Int(_)));
                write_child(f, b, needs)?;
                write!(f, ".{name}")
            }
            Expr::List(items) => {
                f.write_str("[")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str("]")
            }
            Expr::Map(entries) => {
                f.write_str("{")?;
                for (i, (k, v)) in entries.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}
