use std::fmt;

use super::ExprError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    Kw(Keyword),
    Plus,
    Minus,
    Star,
    Slash,
    DoubleSlash,
    Percent,
    DoubleStar,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Assign,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Dot,
    At,
    Newline,
    Indent,
    Dedent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keyword {
    And,
    Or,
    Not,
    In,
    True,
    False,
    None,
    Def,
    If,
    Elif,
    Else,
    While,
    For,
    Return,
    Pass,
}

impl Keyword {
    fn from_word(w: &str) -> Option<Keyword> {
        Some(match w {
            "and" => Keyword::And,
            "or" => Keyword::Or,
            "not" => Keyword::Not,
            "in" => Keyword::In,
            "True" => Keyword::True,
            "False" => Keyword::False,
            "None" => Keyword::None,
            "def" => Keyword::Def,
            "if" => Keyword::If,
            "elif" => Keyword::Elif,
            "else" => Keyword::Else,
            "while" => Keyword::While,
            "for" => Keyword::For,
            "return" => Keyword::Return,
            "pass" => Keyword::Pass,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::And => "and",
            Keyword::Or => "or",
            Keyword::Not => "not",
            Keyword::In => "in",
            Keyword::True => "True",
            Keyword::False => "False",
            Keyword::None => "None",
            Keyword::Def => "def",
            Keyword::If => "if",
            Keyword::Elif => "elif",
            Keyword::Else => "else",
            Keyword::While => "while",
            Keyword::For => "for",
            Keyword::Return => "return",
            Keyword::Pass => "pass",
        }
    }
}

/// 1-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
    pub offset: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

/// Tokenizes a single expression. Newlines are plain whitespace.
pub fn tokenize(source: &str) -> Result<Vec<Token>, ExprError> {
    Lexer::new(source, false).run()
}

/// Tokenizes a whole program, emitting `Newline`, `Indent` and `Dedent`
/// tokens from leading whitespace. Newlines inside brackets are ignored and
/// `#` starts a comment.
pub fn tokenize_layout(source: &str) -> Result<Vec<Token>, ExprError> {
    Lexer::new(source, true).run()
}

struct Lexer<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    i: usize,
    line: usize,
    col: usize,
    layout: bool,
    depth: usize,
    indents: Vec<String>,
    out: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, layout: bool) -> Self {
        Lexer {
            src,
            chars: src.char_indices().collect(),
            i: 0,
            line: 1,
            col: 1,
            layout,
            depth: 0,
            indents: vec![String::new()],
            out: Vec::new(),
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
            offset: self.chars.get(self.i).map(|c| c.0).unwrap_or(self.src.len()),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).map(|c| c.1)
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).map(|c| c.1)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, pos: Pos) {
        self.out.push(Token { tok, pos });
    }

    fn run(mut self) -> Result<Vec<Token>, ExprError> {
        let mut at_line_start = true;
        while self.i < self.chars.len() {
            if self.layout && at_line_start && self.depth == 0 {
                at_line_start = false;
                if self.handle_indent()? {
                    at_line_start = true;
                    continue;
                }
            }
            let c = self.peek().unwrap();
            let pos = self.pos();
            match c {
                '\n' => {
                    self.bump();
                    if self.layout && self.depth == 0 {
                        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
                            self.push(Tok::Newline, pos);
                        }
                        at_line_start = true;
                    }
                }
                ' ' | '\t' | '\r' => {
                    self.bump();
                }
                '\\' if self.peek_at(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '#' if self.layout => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                '"' | '\'' => {
                    let s = self.string(c)?;
                    self.push(Tok::Str(s), pos);
                }
                c if c.is_ascii_digit() => {
                    let t = self.number()?;
                    self.push(t, pos);
                }
                c if c.is_alphabetic() || c == '_' => {
                    let start = self.i;
                    while let Some(c) = self.peek() {
                        if c.is_alphanumeric() || c == '_' {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let word: String = self.chars[start..self.i].iter().map(|c| c.1).collect();
                    let tok = match Keyword::from_word(&word) {
                        Some(k) => Tok::Kw(k),
                        None => Tok::Ident(word),
                    };
                    self.push(tok, pos);
                }
                _ => {
                    let tok = self.operator(pos)?;
                    self.push(tok, pos);
                }
            }
        }
        if self.layout {
            let pos = self.pos();
            if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
                self.push(Tok::Newline, pos);
            }
            while self.indents.len() > 1 {
                self.indents.pop();
                self.push(Tok::Dedent, pos);
            }
        }
        Ok(self.out)
    }

    /// Consumes leading whitespace of a line. Returns true when the line was
    /// blank or comment-only.
    fn handle_indent(&mut self) -> Result<bool, ExprError> {
        let pos = self.pos();
        let mut indent = String::new();
        while let Some(c) = self.peek() {
            if c == ' ' || c == '\t' {
                indent.push(c);
                self.bump();
            } else {
                break;
            }
        }
        match self.peek() {
            None => return Ok(true),
            Some('\n') => {
                self.bump();
                return Ok(true);
            }
            Some('\r') if self.peek_at(1) == Some('\n') => {
                self.bump();
                self.bump();
                return Ok(true);
            }
            Some('#') => {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
                self.bump();
                return Ok(true);
            }
            _ => {}
        }
        if indent.contains(' ') && indent.contains('\t') {
            return Err(ExprError::Indent { pos, msg: "mixed tabs and spaces in indentation".into() });
        }
        let current = self.indents.last().unwrap().clone();
        if indent == current {
            return Ok(false);
        }
        if indent.len() > current.len() && indent.starts_with(&current) {
            self.indents.push(indent);
            self.push(Tok::Indent, pos);
            return Ok(false);
        }
        while self.indents.len() > 1 && self.indents.last().unwrap().len() > indent.len() {
            self.indents.pop();
            self.push(Tok::Dedent, pos);
        }
        if *self.indents.last().unwrap() != indent {
            return Err(ExprError::Indent { pos, msg: "inconsistent indentation".into() });
        }
        Ok(false)
    }

    fn string(&mut self, quote: char) -> Result<String, ExprError> {
        let start = self.pos();
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        if triple {
            self.bump();
            self.bump();
        }
        self.bump();
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(ExprError::Lex { pos: start, msg: "unterminated string literal".into() });
            };
            if c == quote {
                if !triple {
                    self.bump();
                    return Ok(out);
                }
                if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                    self.bump();
                    self.bump();
                    self.bump();
                    return Ok(out);
                }
            }
            if c == '\n' && !triple {
                return Err(ExprError::Lex { pos: start, msg: "unterminated string literal".into() });
            }
            self.bump();
            if c == '\\' {
                let Some(e) = self.bump() else {
                    return Err(ExprError::Lex { pos: start, msg: "unterminated string literal".into() });
                };
                match e {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    '\\' => out.push('\\'),
                    '\'' => out.push('\''),
                    '"' => out.push('"'),
                    '\n' => {}
                    other => {
                        out.push('\\');
                        out.push(other);
                    }
                }
            } else {
                out.push(c);
            }
        }
    }

    fn number(&mut self) -> Result<Tok, ExprError> {
        let pos = self.pos();
        let start = self.i;
        let mut is_float = false;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some('.') && matches!(self.peek_at(1), Some(c) if c.is_ascii_digit()) {
            is_float = true;
            self.bump();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let sign = matches!(self.peek_at(1), Some('+') | Some('-'));
            let digit_at = if sign { 2 } else { 1 };
            if matches!(self.peek_at(digit_at), Some(c) if c.is_ascii_digit()) {
                is_float = true;
                for _ in 0..digit_at {
                    self.bump();
                }
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
            }
        }
        let text: String = self.chars[start..self.i].iter().map(|c| c.1).collect();
        if is_float {
            text.parse::<f64>()
                .map(Tok::Float)
                .map_err(|_| ExprError::Lex { pos, msg: format!("invalid number `{text}`") })
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| ExprError::Lex { pos, msg: format!("integer literal `{text}` out of range") })
        }
    }

    fn operator(&mut self, pos: Pos) -> Result<Tok, ExprError> {
        let c = self.bump().unwrap();
        let next = self.peek();
        let two = |lx: &mut Self, t: Tok| {
            lx.bump();
            t
        };
        Ok(match (c, next) {
            ('*', Some('*')) => two(self, Tok::DoubleStar),
            ('/', Some('/')) => two(self, Tok::DoubleSlash),
            ('=', Some('=')) => two(self, Tok::EqEq),
            ('!', Some('=')) => two(self, Tok::NotEq),
            ('<', Some('=')) => two(self, Tok::Le),
            ('>', Some('=')) => two(self, Tok::Ge),
            ('+', _) => Tok::Plus,
            ('-', _) => Tok::Minus,
            ('*', _) => Tok::Star,
            ('/', _) => Tok::Slash,
            ('%', _) => Tok::Percent,
            ('<', _) => Tok::Lt,
            ('>', _) => Tok::Gt,
            ('=', _) => Tok::Assign,
            ('(', _) => {
                self.depth += 1;
                Tok::LParen
            }
            ('[', _) => {
                self.depth += 1;
                Tok::LBracket
            }
            ('{', _) => {
                self.depth += 1;
                Tok::LBrace
            }
            (')', _) => {
                self.depth = self.depth.saturating_sub(1);
                Tok::RParen
            }
            (']', _) => {
                self.depth = self.depth.saturating_sub(1);
                Tok::RBracket
            }
            ('}', _) => {
                self.depth = self.depth.saturating_sub(1);
                Tok::RBrace
            }
            (',', _) => Tok::Comma,
            (':', _) => Tok::Colon,
            ('.', _) => Tok::Dot,
            ('@', _) => Tok::At,
            (other, _) => {
                return Err(ExprError::Lex { pos, msg: format!("illegal character `{other}`") });
            }
        })
    }
}
