//! Concrete syntax: lexer, parser, `if`/`let` desugaring, identifier
//! resolution and the pretty printer.
//!
//! Source files are UTF-8 with `//` line comments. Function bodies are
//! curly-braced (`def gradient(source, metric) { ... }`), binary built-ins
//! may be written infix with C-like precedence, and both `(x) => e` and
//! `(x) => { e }` are accepted for anonymous functions.
//!
//! `if (c) { a } { b }` desugars to `mux(c, () => a, () => b)()` and
//! `let x = e1 in e2` to `((x) => e2)(e1)`; the generated lambdas are tagged
//! later like any written by hand.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::ast::{
    Builtin, Expr, ExprKind, FunctionDecl, Ident, NodeId, NodeIdGen, Program, Value,
};

// ---------------------------------------------------------------------------
// Spans and errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: Arc<str>,
    pub start: u32,
    pub end: u32,
    /// 1-based line/column of `start`.
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{span}: syntax error: {message}{}", expected_list(.expected))]
pub struct ParseError {
    pub message: String,
    pub span: SourceSpan,
    pub expected: Vec<String>,
}

fn expected_list(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected {})", expected.join(", "))
    }
}

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    CtorIdent(String),
    Number(f64),
    Def,
    Rep,
    Nbr,
    Foldhood,
    If,
    Let,
    In,
    Mux,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Arrow,
    Assign,
    Op(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{}`", s),
            Tok::CtorIdent(s) => format!("constructor `{}`", s),
            Tok::Number(n) => format!("number `{}`", n),
            Tok::Def => "`def`".into(),
            Tok::Rep => "`rep`".into(),
            Tok::Nbr => "`nbr`".into(),
            Tok::Foldhood => "`foldhood`".into(),
            Tok::If => "`if`".into(),
            Tok::Let => "`let`".into(),
            Tok::In => "`in`".into(),
            Tok::Mux => "`mux`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Arrow => "`=>`".into(),
            Tok::Assign => "`=`".into(),
            Tok::Op(o) => format!("`{}`", o),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    start: u32,
    end: u32,
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    file: Arc<str>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, file: &str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            file: Arc::from(file),
        }
    }

    fn span(&self, start: usize, end: usize) -> SourceSpan {
        let mut line = 1u32;
        let mut col = 1u32;
        for &b in &self.bytes[..start.min(self.bytes.len())] {
            if b == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        SourceSpan {
            file: self.file.clone(),
            start: start as u32,
            end: end as u32,
            line,
            col,
        }
    }

    fn error(&self, start: usize, msg: impl Into<String>) -> ParseError {
        ParseError {
            message: msg.into(),
            span: self.span(start, self.pos.max(start + 1)),
            expected: vec![],
        }
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let start = self.pos;
            if self.pos >= self.bytes.len() {
                out.push(Spanned {
                    tok: Tok::Eof,
                    start: start as u32,
                    end: start as u32,
                });
                return Ok(out);
            }
            let b = self.bytes[self.pos];
            let tok = match b {
                b'(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                b'{' => {
                    self.pos += 1;
                    Tok::LBrace
                }
                b'}' => {
                    self.pos += 1;
                    Tok::RBrace
                }
                b',' => {
                    self.pos += 1;
                    Tok::Comma
                }
                b'=' => {
                    if self.peek(1) == Some(b'>') {
                        self.pos += 2;
                        Tok::Arrow
                    } else if self.peek(1) == Some(b'=') {
                        self.pos += 2;
                        Tok::Op("==")
                    } else {
                        self.pos += 1;
                        Tok::Assign
                    }
                }
                b'!' => {
                    if self.peek(1) == Some(b'=') {
                        self.pos += 2;
                        Tok::Op("!=")
                    } else {
                        self.pos += 1;
                        Tok::Op("!")
                    }
                }
                b'<' => {
                    if self.peek(1) == Some(b'=') {
                        self.pos += 2;
                        Tok::Op("<=")
                    } else {
                        self.pos += 1;
                        Tok::Op("<")
                    }
                }
                b'>' => {
                    if self.peek(1) == Some(b'=') {
                        self.pos += 2;
                        Tok::Op(">=")
                    } else {
                        self.pos += 1;
                        Tok::Op(">")
                    }
                }
                b'&' => {
                    if self.peek(1) == Some(b'&') {
                        self.pos += 2;
                        Tok::Op("&&")
                    } else {
                        return Err(self.error(start, "stray `&`, did you mean `&&`?"));
                    }
                }
                b'|' => {
                    if self.peek(1) == Some(b'|') {
                        self.pos += 2;
                        Tok::Op("||")
                    } else {
                        return Err(self.error(start, "stray `|`, did you mean `||`?"));
                    }
                }
                b'+' => {
                    self.pos += 1;
                    Tok::Op("+")
                }
                b'-' => {
                    self.pos += 1;
                    Tok::Op("-")
                }
                b'*' => {
                    self.pos += 1;
                    Tok::Op("*")
                }
                b'/' => {
                    self.pos += 1;
                    Tok::Op("/")
                }
                b'0'..=b'9' => self.lex_number(start)?,
                b if b.is_ascii_alphabetic() || b == b'_' => self.lex_ident(start),
                _ => {
                    return Err(self.error(
                        start,
                        format!("unexpected character `{}`", &self.src[start..start + 1]),
                    ))
                }
            };
            let end = self.pos;
            out.push(Spanned {
                tok,
                start: start as u32,
                end: end as u32,
            });
        }
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn skip_trivia(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos + 1 < self.bytes.len()
                && self.bytes[self.pos] == b'/'
                && self.bytes[self.pos + 1] == b'/'
            {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn lex_number(&mut self, start: usize) -> Result<Tok, ParseError> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.peek(0) == Some(b'.') && self.peek(1).map_or(false, |c| c.is_ascii_digit()) {
            self.pos += 1;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map(Tok::Number)
            .map_err(|_| self.error(start, format!("invalid number literal `{}`", text)))
    }

    fn lex_ident(&mut self, start: usize) -> Tok {
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let text = &self.src[start..self.pos];
        match text {
            "def" => Tok::Def,
            "rep" => Tok::Rep,
            "nbr" => Tok::Nbr,
            "foldhood" => Tok::Foldhood,
            "if" => Tok::If,
            "let" => Tok::Let,
            "in" => Tok::In,
            "mux" => Tok::Mux,
            _ => {
                if text.as_bytes()[0].is_ascii_uppercase() {
                    Tok::CtorIdent(text.to_string())
                } else {
                    Tok::Ident(text.to_string())
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Surface syntax (with sugar, unresolved identifiers)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Surface {
    pub kind: SurfaceKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub enum SurfaceKind {
    Ident(String),
    Mux,
    Lit(Value),
    Lambda { params: Vec<String>, body: Box<Surface> },
    Apply { callee: Box<Surface>, args: Vec<Surface> },
    Rep { init: Box<Surface>, update: Box<Surface> },
    Nbr { body: Box<Surface> },
    Foldhood { init: Box<Surface>, aggregator: Box<Surface>, body: Box<Surface> },
    If { cond: Box<Surface>, then: Box<Surface>, otherwise: Box<Surface> },
    Let { name: String, bound: Box<Surface>, body: Box<Surface> },
}

#[derive(Debug, Clone)]
pub struct SurfaceDecl {
    pub name: String,
    pub params: Vec<String>,
    pub body: Surface,
    pub span: SourceSpan,
}

#[derive(Debug, Clone)]
pub struct SurfaceProgram {
    pub functions: Vec<SurfaceDecl>,
    pub main: Option<Surface>,
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    file: Arc<str>,
    src_lines: Vec<u32>,
}

impl Parser {
    fn new(src: &str, file: &str) -> Result<Self, ParseError> {
        let toks = Lexer::new(src, file).tokens()?;
        let mut src_lines = vec![0u32];
        for (i, b) in src.bytes().enumerate() {
            if b == b'\n' {
                src_lines.push(i as u32 + 1);
            }
        }
        Ok(Parser {
            toks,
            pos: 0,
            file: Arc::from(file),
            src_lines,
        })
    }

    fn span_at(&self, start: u32, end: u32) -> SourceSpan {
        let line_idx = match self.src_lines.binary_search(&start) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        SourceSpan {
            file: self.file.clone(),
            start,
            end,
            line: line_idx as u32 + 1,
            col: start - self.src_lines[line_idx] + 1,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }
    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }
    fn here(&self) -> SourceSpan {
        let t = &self.toks[self.pos];
        self.span_at(t.start, t.end)
    }
    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>, expected: &[&str]) -> ParseError {
        ParseError {
            message: format!("{}, found {}", message.into(), self.peek().describe()),
            span: self.here(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Spanned, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            Err(self.err(format!("expected {}", what), &[what]))
        }
    }

    fn parse_program(&mut self, require_main: bool) -> Result<SurfaceProgram, ParseError> {
        let mut functions = Vec::new();
        while *self.peek() == Tok::Def {
            functions.push(self.parse_def()?);
        }
        let main = if *self.peek() == Tok::Eof {
            if require_main {
                return Err(self.err("expected a main expression", &["expression"]));
            }
            None
        } else {
            let main = self.parse_expr()?;
            if *self.peek() != Tok::Eof {
                return Err(self.err("expected end of input after main expression", &["end of input"]));
            }
            Some(main)
        };
        Ok(SurfaceProgram { functions, main })
    }

    fn parse_def(&mut self) -> Result<SurfaceDecl, ParseError> {
        let start = self.expect(Tok::Def, "`def`")?;
        let name = match self.bump() {
            Spanned { tok: Tok::Ident(s), .. } => s,
            _ => {
                return Err(ParseError {
                    message: "expected a lowercase function name after `def`".into(),
                    span: self.here(),
                    expected: vec!["identifier".into()],
                })
            }
        };
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                match self.bump() {
                    Spanned { tok: Tok::Ident(s), .. } => params.push(s),
                    _ => {
                        return Err(ParseError {
                            message: "expected a parameter name".into(),
                            span: self.here(),
                            expected: vec!["identifier".into()],
                        })
                    }
                }
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let body = self.parse_expr()?;
        let end = self.expect(Tok::RBrace, "`}`")?;
        let span = self.span_at(start.start, end.end);
        Ok(SurfaceDecl { name, params, body, span })
    }

    fn parse_expr(&mut self) -> Result<Surface, ParseError> {
        match self.peek() {
            Tok::Let => self.parse_let(),
            Tok::If => self.parse_if(),
            _ => self.parse_binary(0),
        }
    }

    fn parse_let(&mut self) -> Result<Surface, ParseError> {
        let start = self.expect(Tok::Let, "`let`")?;
        let name = match self.bump() {
            Spanned { tok: Tok::Ident(s), .. } => s,
            _ => {
                return Err(ParseError {
                    message: "expected a variable name after `let`".into(),
                    span: self.here(),
                    expected: vec!["identifier".into()],
                })
            }
        };
        self.expect(Tok::Assign, "`=`")?;
        let bound = self.parse_expr()?;
        self.expect(Tok::In, "`in`")?;
        let body = self.parse_expr()?;
        let span = self.span_at(start.start, body.span.end);
        Ok(Surface {
            kind: SurfaceKind::Let {
                name,
                bound: Box::new(bound),
                body: Box::new(body),
            },
            span,
        })
    }

    fn parse_if(&mut self) -> Result<Surface, ParseError> {
        let start = self.expect(Tok::If, "`if`")?;
        self.expect(Tok::LParen, "`(`")?;
        let cond = self.parse_expr()?;
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let then = self.parse_expr()?;
        self.expect(Tok::RBrace, "`}`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let otherwise = self.parse_expr()?;
        let end = self.expect(Tok::RBrace, "`}`")?;
        let span = self.span_at(start.start, end.end);
        Ok(Surface {
            kind: SurfaceKind::If {
                cond: Box::new(cond),
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            },
            span,
        })
    }

    /// Binary operators with C-like precedence, all left associative.
    fn parse_binary(&mut self, min_level: usize) -> Result<Surface, ParseError> {
        const LEVELS: &[&[&str]] = &[
            &["||"],
            &["&&"],
            &["==", "!="],
            &["<", "<=", ">", ">="],
            &["+", "-"],
            &["*", "/"],
        ];
        if min_level == LEVELS.len() {
            return self.parse_unary();
        }
        let mut lhs = self.parse_binary(min_level + 1)?;
        loop {
            let op = match self.peek() {
                Tok::Op(o) if LEVELS[min_level].contains(o) => *o,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_binary(min_level + 1)?;
            let span = self.span_at(lhs.span.start, rhs.span.end);
            let callee = Surface {
                kind: SurfaceKind::Lit(Value::builtin(op_builtin(op))),
                span: span.clone(),
            };
            lhs = Surface {
                kind: SurfaceKind::Apply {
                    callee: Box::new(callee),
                    args: vec![lhs, rhs],
                },
                span,
            };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Surface, ParseError> {
        match self.peek() {
            Tok::Op("!") => {
                let start = self.bump();
                let operand = self.parse_unary()?;
                let span = self.span_at(start.start, operand.span.end);
                Ok(Surface {
                    kind: SurfaceKind::Apply {
                        callee: Box::new(Surface {
                            kind: SurfaceKind::Lit(Value::builtin(Builtin::Not)),
                            span: span.clone(),
                        }),
                        args: vec![operand],
                    },
                    span,
                })
            }
            Tok::Op("-") => {
                let start = self.bump();
                let operand = self.parse_unary()?;
                if let SurfaceKind::Lit(Value::Num(n)) = operand.kind {
                    let span = self.span_at(start.start, operand.span.end);
                    return Ok(Surface {
                        kind: SurfaceKind::Lit(Value::Num(-n)),
                        span,
                    });
                }
                let span = self.span_at(start.start, operand.span.end);
                Ok(Surface {
                    kind: SurfaceKind::Apply {
                        callee: Box::new(Surface {
                            kind: SurfaceKind::Lit(Value::builtin(Builtin::Sub)),
                            span: span.clone(),
                        }),
                        args: vec![
                            Surface {
                                kind: SurfaceKind::Lit(Value::Num(0.0)),
                                span: span.clone(),
                            },
                            operand,
                        ],
                    },
                    span,
                })
            }
            _ => self.parse_postfix(),
        }
    }

    fn parse_postfix(&mut self) -> Result<Surface, ParseError> {
        let mut e = self.parse_primary()?;
        while *self.peek() == Tok::LParen {
            self.bump();
            let mut args = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.parse_expr()?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            let end = self.expect(Tok::RParen, "`)`")?;
            let span = self.span_at(e.span.start, end.end);
            e = Surface {
                kind: SurfaceKind::Apply {
                    callee: Box::new(e),
                    args,
                },
                span,
            };
        }
        Ok(e)
    }

    /// Is the parenthesis at the current position the start of a lambda?
    fn lparen_starts_lambda(&self) -> bool {
        debug_assert_eq!(*self.peek(), Tok::LParen);
        let mut i = 1;
        loop {
            match self.peek_at(i) {
                Tok::Ident(_) => {
                    i += 1;
                    match self.peek_at(i) {
                        Tok::Comma => i += 1,
                        Tok::RParen => return *self.peek_at(i + 1) == Tok::Arrow,
                        _ => return false,
                    }
                }
                Tok::RParen => return *self.peek_at(i + 1) == Tok::Arrow,
                _ => return false,
            }
        }
    }

    fn parse_primary(&mut self) -> Result<Surface, ParseError> {
        match self.peek().clone() {
            Tok::Number(n) => {
                let t = self.bump();
                Ok(Surface {
                    kind: SurfaceKind::Lit(Value::Num(n)),
                    span: self.span_at(t.start, t.end),
                })
            }
            Tok::Mux => {
                let t = self.bump();
                Ok(Surface {
                    kind: SurfaceKind::Mux,
                    span: self.span_at(t.start, t.end),
                })
            }
            Tok::Ident(name) => {
                let t = self.bump();
                Ok(Surface {
                    kind: SurfaceKind::Ident(name),
                    span: self.span_at(t.start, t.end),
                })
            }
            Tok::CtorIdent(name) => self.parse_ctor(name),
            Tok::Rep => {
                let start = self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let init = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::LBrace, "`{`")?;
                let update = self.parse_expr()?;
                let end = self.expect(Tok::RBrace, "`}`")?;
                let span = self.span_at(start.start, end.end);
                Ok(Surface {
                    kind: SurfaceKind::Rep {
                        init: Box::new(init),
                        update: Box::new(update),
                    },
                    span,
                })
            }
            Tok::Nbr => {
                let start = self.bump();
                self.expect(Tok::LBrace, "`{`")?;
                let body = self.parse_expr()?;
                let end = self.expect(Tok::RBrace, "`}`")?;
                let span = self.span_at(start.start, end.end);
                Ok(Surface {
                    kind: SurfaceKind::Nbr { body: Box::new(body) },
                    span,
                })
            }
            Tok::Foldhood => {
                let start = self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let init = self.parse_expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let aggregator = self.parse_expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let body = self.parse_expr()?;
                let end = self.expect(Tok::RParen, "`)`")?;
                let span = self.span_at(start.start, end.end);
                Ok(Surface {
                    kind: SurfaceKind::Foldhood {
                        init: Box::new(init),
                        aggregator: Box::new(aggregator),
                        body: Box::new(body),
                    },
                    span,
                })
            }
            Tok::LParen => {
                if self.lparen_starts_lambda() {
                    return self.parse_lambda();
                }
                self.bump();
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            _ => Err(self.err("expected an expression", &["expression"])),
        }
    }

    fn parse_lambda(&mut self) -> Result<Surface, ParseError> {
        let start = self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                match self.bump() {
                    Spanned { tok: Tok::Ident(s), .. } => params.push(s),
                    _ => {
                        return Err(ParseError {
                            message: "expected a parameter name".into(),
                            span: self.here(),
                            expected: vec!["identifier".into()],
                        })
                    }
                }
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Arrow, "`=>`")?;
        let (body, end) = if *self.peek() == Tok::LBrace {
            self.bump();
            let body = self.parse_expr()?;
            let end = self.expect(Tok::RBrace, "`}`")?;
            (body, end.end)
        } else {
            let body = self.parse_expr()?;
            let end = body.span.end;
            (body, end)
        };
        let span = self.span_at(start.start, end);
        Ok(Surface {
            kind: SurfaceKind::Lambda {
                params,
                body: Box::new(body),
            },
            span,
        })
    }

    /// Constructor literals: `True`, `False`, `Null`, `PositiveInfinity`,
    /// `Pair(l, l)`, `Cons(l, l)`. Arguments must be literals; for computed
    /// components use the `pair`/`cons` built-ins.
    fn parse_ctor(&mut self, name: String) -> Result<Surface, ParseError> {
        let t = self.bump();
        let span = self.span_at(t.start, t.end);
        let simple = |v: Value| {
            Ok(Surface {
                kind: SurfaceKind::Lit(v),
                span: span.clone(),
            })
        };
        match name.as_str() {
            "True" => simple(Value::Bool(true)),
            "False" => simple(Value::Bool(false)),
            "Null" => simple(Value::nil()),
            "PositiveInfinity" => simple(Value::Num(f64::INFINITY)),
            "Pair" | "Cons" => {
                self.expect(Tok::LParen, "`(`")?;
                let a = self.parse_literal_value()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.parse_literal_value()?;
                let end = self.expect(Tok::RParen, "`)`")?;
                let span = self.span_at(t.start, end.end);
                let v = if name == "Pair" {
                    Value::pair(a, b)
                } else {
                    match b {
                        Value::List(l) => Value::List(Arc::new(crate::ast::ListVal::Cons(a, l))),
                        _ => {
                            return Err(ParseError {
                                message: "second argument of `Cons` must be a list literal".into(),
                                span,
                                expected: vec!["list literal".into()],
                            })
                        }
                    }
                };
                Ok(Surface {
                    kind: SurfaceKind::Lit(v),
                    span,
                })
            }
            other => Err(ParseError {
                message: format!("unknown data constructor `{}`", other),
                span,
                expected: vec![
                    "True".into(),
                    "False".into(),
                    "Null".into(),
                    "PositiveInfinity".into(),
                    "Pair".into(),
                    "Cons".into(),
                ],
            }),
        }
    }

    fn parse_literal_value(&mut self) -> Result<Value, ParseError> {
        let e = self.parse_expr()?;
        match literal_value(&e) {
            Some(v) => Ok(v),
            None => Err(ParseError {
                message: "constructor arguments must be literal values".into(),
                span: e.span,
                expected: vec!["literal value".into()],
            }),
        }
    }
}

fn literal_value(e: &Surface) -> Option<Value> {
    match &e.kind {
        SurfaceKind::Lit(v) => Some(v.clone()),
        _ => None,
    }
}

fn op_builtin(op: &str) -> Builtin {
    match op {
        "+" => Builtin::Add,
        "-" => Builtin::Sub,
        "*" => Builtin::Mul,
        "/" => Builtin::Div,
        "<" => Builtin::Lt,
        "<=" => Builtin::Le,
        ">" => Builtin::Gt,
        ">=" => Builtin::Ge,
        "==" => Builtin::Eq,
        "!=" => Builtin::Ne,
        "&&" => Builtin::And,
        "||" => Builtin::Or,
        "!" => Builtin::Not,
        _ => unreachable!("unknown operator {}", op),
    }
}

// ---------------------------------------------------------------------------
// Desugaring
// ---------------------------------------------------------------------------

/// Rewrite `if` into `mux(c, () => a, () => b)()` and `let x = e1 in e2`
/// into `((x) => e2)(e1)`. Each `if` introduces exactly two lambdas and each
/// `let` exactly one.
pub fn desugar(e: &Surface) -> Surface {
    let kind = match &e.kind {
        SurfaceKind::Ident(x) => SurfaceKind::Ident(x.clone()),
        SurfaceKind::Mux => SurfaceKind::Mux,
        SurfaceKind::Lit(v) => SurfaceKind::Lit(v.clone()),
        SurfaceKind::Lambda { params, body } => SurfaceKind::Lambda {
            params: params.clone(),
            body: Box::new(desugar(body)),
        },
        SurfaceKind::Apply { callee, args } => SurfaceKind::Apply {
            callee: Box::new(desugar(callee)),
            args: args.iter().map(desugar).collect(),
        },
        SurfaceKind::Rep { init, update } => SurfaceKind::Rep {
            init: Box::new(desugar(init)),
            update: Box::new(desugar(update)),
        },
        SurfaceKind::Nbr { body } => SurfaceKind::Nbr {
            body: Box::new(desugar(body)),
        },
        SurfaceKind::Foldhood {
            init,
            aggregator,
            body,
        } => SurfaceKind::Foldhood {
            init: Box::new(desugar(init)),
            aggregator: Box::new(desugar(aggregator)),
            body: Box::new(desugar(body)),
        },
        SurfaceKind::If {
            cond,
            then,
            otherwise,
        } => {
            let span = e.span.clone();
            let thunk = |b: &Surface| Surface {
                kind: SurfaceKind::Lambda {
                    params: vec![],
                    body: Box::new(desugar(b)),
                },
                span: b.span.clone(),
            };
            let mux_call = Surface {
                kind: SurfaceKind::Apply {
                    callee: Box::new(Surface {
                        kind: SurfaceKind::Mux,
                        span: span.clone(),
                    }),
                    args: vec![desugar(cond), thunk(then), thunk(otherwise)],
                },
                span: span.clone(),
            };
            SurfaceKind::Apply {
                callee: Box::new(mux_call),
                args: vec![],
            }
        }
        SurfaceKind::Let { name, bound, body } => {
            let lambda = Surface {
                kind: SurfaceKind::Lambda {
                    params: vec![name.clone()],
                    body: Box::new(desugar(body)),
                },
                span: e.span.clone(),
            };
            SurfaceKind::Apply {
                callee: Box::new(lambda),
                args: vec![desugar(bound)],
            }
        }
    };
    Surface {
        kind,
        span: e.span.clone(),
    }
}

// ---------------------------------------------------------------------------
// Identifier resolution
// ---------------------------------------------------------------------------

/// Sensor declarations visible to resolution and typing.
#[derive(Debug, Clone, Default)]
pub struct SensorDecls {
    /// name -> relational?
    pub sensors: BTreeMap<Ident, bool>,
}

impl SensorDecls {
    pub fn declare(&mut self, name: &str, relational: bool) {
        self.sensors.insert(Arc::from(name), relational);
    }

    /// `temperature`, `mid`, `randomKey` local sensors and the `nbrRange`
    /// relational sensor, always available.
    pub fn standard() -> Self {
        let mut s = Self::default();
        s.declare("temperature", false);
        s.declare("mid", false);
        s.declare("randomKey", false);
        s.declare("nbrRange", true);
        s
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{span}: unbound identifier `{name}`")]
pub struct ResolveError {
    pub name: String,
    pub span: SourceSpan,
}

fn fixed_builtin(name: &str) -> Option<Builtin> {
    Some(match name {
        "and" => Builtin::And,
        "or" => Builtin::Or,
        "not" => Builtin::Not,
        "min" => Builtin::Min,
        "max" => Builtin::Max,
        "pair" => Builtin::Pair,
        "fst" => Builtin::Fst,
        "snd" => Builtin::Snd,
        "cons" => Builtin::Cons,
        "head" => Builtin::Head,
        "tail" => Builtin::Tail,
        "consthood" => Builtin::Consthood,
        "map" => Builtin::Map,
        _ => return None,
    })
}

struct Resolver<'a> {
    gen: &'a NodeIdGen,
    sensors: &'a SensorDecls,
    defined: Vec<Ident>,
    scope: Vec<Ident>,
    spans: BTreeMap<NodeId, SourceSpan>,
}

impl<'a> Resolver<'a> {
    fn resolve(&mut self, e: &Surface) -> Result<Expr, ResolveError> {
        let kind = match &e.kind {
            SurfaceKind::Mux => ExprKind::Val(Value::builtin(Builtin::Mux)),
            SurfaceKind::Lit(v) => ExprKind::Val(v.clone()),
            SurfaceKind::Ident(name) => {
                if self.scope.iter().any(|s| s.as_ref() == name.as_str()) {
                    ExprKind::Var(Arc::from(name.as_str()))
                } else if self.defined.iter().any(|d| d.as_ref() == name.as_str()) {
                    ExprKind::Val(Value::Fun(crate::ast::FunValue::Defined(Arc::from(
                        name.as_str(),
                    ))))
                } else if let Some(b) = fixed_builtin(name) {
                    ExprKind::Val(Value::builtin(b))
                } else if let Some(rel) = self.sensors.sensors.get(name.as_str()) {
                    let b = if *rel {
                        Builtin::RelationalSensor(Arc::from(name.as_str()))
                    } else {
                        Builtin::Sensor(Arc::from(name.as_str()))
                    };
                    ExprKind::Val(Value::builtin(b))
                } else {
                    return Err(ResolveError {
                        name: name.clone(),
                        span: e.span.clone(),
                    });
                }
            }
            SurfaceKind::Lambda { params, body } => {
                let n = self.scope.len();
                self.scope
                    .extend(params.iter().map(|p| Arc::from(p.as_str()) as Ident));
                let body = self.resolve(body)?;
                self.scope.truncate(n);
                ExprKind::Lambda {
                    params: params.iter().map(|p| Arc::from(p.as_str())).collect(),
                    tag: None,
                    body,
                }
            }
            SurfaceKind::Apply { callee, args } => ExprKind::Apply {
                callee: self.resolve(callee)?,
                args: args
                    .iter()
                    .map(|a| self.resolve(a))
                    .collect::<Result<_, _>>()?,
            },
            SurfaceKind::Rep { init, update } => ExprKind::Rep {
                init: self.resolve(init)?,
                update: self.resolve(update)?,
            },
            SurfaceKind::Nbr { body } => ExprKind::Nbr {
                body: self.resolve(body)?,
            },
            SurfaceKind::Foldhood {
                init,
                aggregator,
                body,
            } => ExprKind::Foldhood {
                init: self.resolve(init)?,
                aggregator: self.resolve(aggregator)?,
                body: self.resolve(body)?,
            },
            SurfaceKind::If { .. } | SurfaceKind::Let { .. } => {
                unreachable!("sugar must be removed before resolution")
            }
        };
        let id = self.gen.fresh();
        self.spans.insert(id, e.span.clone());
        Ok(Arc::new(crate::ast::ExprNode { kind, id }))
    }
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum FrontError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("duplicate function declaration `{0}`")]
    DuplicateFunction(String),
    #[error("main expression is not closed: free variable `{0}`")]
    OpenMain(String),
}

/// A resolved, desugared, untagged program plus source spans per node.
pub struct ParsedUnit {
    pub program: Program,
    pub spans: BTreeMap<NodeId, SourceSpan>,
}

/// Parse a full program (declarations plus a required main expression),
/// desugar and resolve it against the standard built-ins and `sensors`.
pub fn parse_program(source: &str, file: &str, sensors: &SensorDecls) -> Result<ParsedUnit, FrontError> {
    parse_with(source, file, sensors, &[], true)
}

/// Parse a library file: declarations only, no main expression required.
pub fn parse_library(
    source: &str,
    file: &str,
    sensors: &SensorDecls,
) -> Result<(Vec<FunctionDecl>, BTreeMap<NodeId, SourceSpan>), FrontError> {
    let unit = parse_with(source, file, sensors, &[], false)?;
    Ok((unit.program.functions, unit.spans))
}

/// Parse `source` with `predefined` function declarations already in scope
/// (used to load user programs against the standard library).
pub fn parse_with(
    source: &str,
    file: &str,
    sensors: &SensorDecls,
    predefined: &[FunctionDecl],
    require_main: bool,
) -> Result<ParsedUnit, FrontError> {
    let mut parser = Parser::new(source, file)?;
    let surface = parser.parse_program(require_main)?;
    let gen = NodeIdGen::new();
    let mut resolver = Resolver {
        gen: &gen,
        sensors,
        defined: predefined.iter().map(|f| f.name.clone()).collect(),
        scope: Vec::new(),
        spans: BTreeMap::new(),
    };
    let mut functions: Vec<FunctionDecl> = Vec::new();
    for decl in &surface.functions {
        if resolver
            .defined
            .iter()
            .any(|d| d.as_ref() == decl.name.as_str())
        {
            return Err(FrontError::DuplicateFunction(decl.name.clone()));
        }
        let name: Ident = Arc::from(decl.name.as_str());
        // The function sees itself (recursion) but not later declarations.
        resolver.defined.push(name.clone());
        resolver.scope = decl.params.iter().map(|p| Arc::from(p.as_str())).collect();
        let body = resolver.resolve(&desugar(&decl.body))?;
        resolver.scope.clear();
        functions.push(FunctionDecl {
            name,
            params: decl.params.iter().map(|p| Arc::from(p.as_str())).collect(),
            body,
        });
    }
    let main = match &surface.main {
        Some(m) => resolver.resolve(&desugar(m))?,
        None => gen.mk(ExprKind::Val(Value::Bool(true))),
    };
    if require_main {
        if let Some(x) = crate::ast::free_vars(&main).into_iter().next() {
            return Err(FrontError::OpenMain(x.to_string()));
        }
    }
    Ok(ParsedUnit {
        program: Program { functions, main },
        spans: resolver.spans,
    })
}

// ---------------------------------------------------------------------------
// Pretty printer
// ---------------------------------------------------------------------------

/// Print a program in the concrete syntax. `parse_program` on the output
/// yields a structurally identical program with the same tag assignment.
pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for f in &p.functions {
        out.push_str("def ");
        out.push_str(&f.name);
        out.push('(');
        for (i, param) in f.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(param);
        }
        out.push_str(") { ");
        out.push_str(&print_expr(&f.body, 0));
        out.push_str(" }\n");
    }
    out.push_str(&print_expr(&p.main, 0));
    out.push('\n');
    out
}

pub fn print_expression(e: &Expr) -> String {
    print_expr(e, 0)
}

fn infix_level(b: &Builtin) -> Option<usize> {
    match b {
        Builtin::Or => Some(0),
        Builtin::And => Some(1),
        Builtin::Eq | Builtin::Ne => Some(2),
        Builtin::Lt | Builtin::Le | Builtin::Gt | Builtin::Ge => Some(3),
        Builtin::Add | Builtin::Sub => Some(4),
        Builtin::Mul | Builtin::Div => Some(5),
        _ => None,
    }
}

/// `level` is the minimum precedence the context requires; sub-expressions
/// printed at looser precedence get parenthesised.
fn print_expr(e: &Expr, level: usize) -> String {
    match &e.kind {
        ExprKind::Var(x) => x.to_string(),
        ExprKind::Val(v) => print_value(v),
        ExprKind::Lambda { params, body, .. } => {
            let s = format!("({}) => {}", params.join(", "), print_expr(body, 0));
            if level > 0 {
                format!("({})", s)
            } else {
                s
            }
        }
        ExprKind::Apply { callee, args } => {
            if let ExprKind::Val(Value::Fun(crate::ast::FunValue::Builtin(b))) = &callee.kind {
                if let (Some(op_level), 2) = (infix_level(b), args.len()) {
                    let s = format!(
                        "{} {} {}",
                        print_expr(&args[0], op_level + 1),
                        b.infix().unwrap(),
                        print_expr(&args[1], op_level + 1)
                    );
                    return if level > op_level {
                        format!("({})", s)
                    } else {
                        s
                    };
                }
            }
            let callee_str = match &callee.kind {
                ExprKind::Var(_) | ExprKind::Val(_) | ExprKind::Apply { .. } => {
                    print_expr(callee, 7)
                }
                _ => format!("({})", print_expr(callee, 0)),
            };
            let args_str: Vec<String> = args.iter().map(|a| print_expr(a, 0)).collect();
            format!("{}({})", callee_str, args_str.join(", "))
        }
        ExprKind::Rep { init, update } => {
            format!("rep({}) {{ {} }}", print_expr(init, 0), print_expr(update, 0))
        }
        ExprKind::Nbr { body } => format!("nbr{{{}}}", print_expr(body, 0)),
        ExprKind::Foldhood {
            init,
            aggregator,
            body,
        } => format!(
            "foldhood({}, {}, {})",
            print_expr(init, 0),
            print_expr(aggregator, 0),
            print_expr(body, 0)
        ),
    }
}

fn print_value(v: &Value) -> String {
    match v {
        Value::Num(n) => {
            if n.is_infinite() {
                if *n > 0.0 {
                    "PositiveInfinity".into()
                } else {
                    "-PositiveInfinity".into()
                }
            } else {
                format!("{}", n)
            }
        }
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        Value::Pair(p) => format!("Pair({}, {})", print_value(&p.0), print_value(&p.1)),
        Value::List(_) => print_list(v),
        Value::Fun(crate::ast::FunValue::Builtin(b)) => b.name().to_string(),
        Value::Fun(crate::ast::FunValue::Defined(d)) => d.to_string(),
        Value::Fun(crate::ast::FunValue::Anon(l)) => {
            format!("({}) => {}", l.params.join(", "), print_expr(&l.body, 0))
        }
    }
}

fn print_list(v: &Value) -> String {
    match v {
        Value::List(l) => match l.as_ref() {
            crate::ast::ListVal::Null => "Null".into(),
            crate::ast::ListVal::Cons(h, t) => format!(
                "Cons({}, {})",
                print_value(h),
                print_list(&Value::List(t.clone()))
            ),
        },
        _ => unreachable!(),
    }
}
