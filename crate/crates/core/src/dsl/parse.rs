//! Recursive-descent parser for the melody DSL.
//!
//! ```text
//! definition := ident "(" [param {"," param}] ")" "=" expr
//! param      := ident ":" type
//! expr       := ident "(" [expr {"," expr}] ")" | ident | literal
//! literal    := pitch | int | melody | rhythm
//! melody     := "[" [note {"," note}] "]"
//! note       := (pitch | int) [":" ratio]
//! rhythm     := "<" ratio {"," ratio} ">"
//! ratio      := int ["/" int]
//! pitch      := [A-G] ["#" | "b"] octave        e.g. C4, F#3, Bb2
//! ```
//!
//! A bare identifier in a body is a parameter if one of that name is
//! declared, the direction `up`/`down`, or otherwise a chord name.
//! `#` starts a comment that runs to the end of the line.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{pitch_from_name, Beats, Direction, DslError, Expr, Literal, Melody, Note, Param, ParamType, Program};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Pitch(u8),
    Int(i64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Comma,
    Colon,
    Slash,
    Eq,
    Minus,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => alloc::format!("identifier `{s}`"),
            Tok::Pitch(p) => alloc::format!("pitch {p}"),
            Tok::Int(n) => alloc::format!("integer {n}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, DslError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' | b';' => i += 1,
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' | b')' | b'[' | b']' | b'<' | b'>' | b',' | b':' | b'/' | b'=' => {
                let t = match c {
                    b'(' => Tok::LParen,
                    b')' => Tok::RParen,
                    b'[' => Tok::LBracket,
                    b']' => Tok::RBracket,
                    b'<' => Tok::Lt,
                    b'>' => Tok::Gt,
                    b',' => Tok::Comma,
                    b':' => Tok::Colon,
                    b'/' => Tok::Slash,
                    _ => Tok::Eq,
                };
                out.push((start, t));
                i += 1;
            }
            b'-' if bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                out.push((start, Tok::Int(parse_int(&src[start..i], start)?)));
            }
            b'-' => {
                out.push((start, Tok::Minus));
                i += 1;
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                out.push((start, Tok::Int(parse_int(&src[start..i], start)?)));
            }
            b'A'..=b'G' => {
                i += 1;
                if i < bytes.len() && (bytes[i] == b'#' || bytes[i] == b'b') {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'-' {
                    i += 1;
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let text = &src[start..i];
                let p = pitch_from_name(text).ok_or_else(|| DslError::Syntax {
                    pos: start,
                    expected: "scientific pitch such as C4".into(),
                    found: alloc::format!("`{text}`"),
                })?;
                out.push((start, Tok::Pitch(p)));
            }
            c if c == b'_' || c.is_ascii_lowercase() => {
                while i < bytes.len() && (bytes[i] == b'_' || bytes[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(DslError::Syntax { pos: start, expected: "a token".into(), found: alloc::format!("`{ch}`") });
            }
        }
    }
    out.push((src.len(), Tok::Eof));
    Ok(out)
}

fn parse_int(text: &str, pos: usize) -> Result<i64, DslError> {
    text.parse().map_err(|_| DslError::Syntax { pos, expected: "integer in range".into(), found: alloc::format!("`{text}`") })
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Parser, DslError> {
        Ok(Parser { toks: lex(src)?, at: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, DslError> {
        Err(DslError::Syntax { pos: self.pos(), expected: expected.to_string(), found: self.peek().describe() })
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), DslError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(expected)
        }
    }

    fn ident(&mut self, expected: &str) -> Result<String, DslError> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.error(expected),
        }
    }

    fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    fn definition(&mut self) -> Result<Program, DslError> {
        let name = self.ident("program name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params: Vec<Param> = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let pname = self.ident("parameter name")?;
                self.expect(Tok::Colon, "`:`")?;
                let ty = self.param_type()?;
                if params.iter().any(|p| p.name == pname) || pname == "up" || pname == "down" {
                    return Err(DslError::DuplicateParam(pname));
                }
                params.push(Param { name: pname, ty });
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        self.expect(Tok::Eq, "`=`")?;
        let body = self.expr(&params)?;
        let program = Program { name, params, body };
        check_program(&program)?;
        Ok(program)
    }

    fn param_type(&mut self) -> Result<ParamType, DslError> {
        let mut name = self.ident("parameter type")?;
        if *self.peek() == Tok::Minus {
            self.bump();
            name.push('-');
            name.push_str(&self.ident("parameter type")?);
        }
        name.parse()
    }

    fn expr(&mut self, params: &[Param]) -> Result<Expr, DslError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.expr(params)?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen, "`,` or `)`")?;
                    Ok(Expr::Call { name, args })
                } else if params.iter().any(|p| p.name == name) {
                    Ok(Expr::Var(name))
                } else {
                    Ok(Expr::Lit(symbol(name)))
                }
            }
            _ => Ok(Expr::Lit(self.literal()?)),
        }
    }

    fn literal(&mut self) -> Result<Literal, DslError> {
        match self.peek().clone() {
            Tok::Pitch(p) => {
                self.bump();
                Ok(Literal::Pitch(p))
            }
            Tok::Int(n) => {
                self.bump();
                Ok(Literal::Int(n))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(symbol(name))
            }
            Tok::LBracket => Ok(Literal::Melody(self.melody()?)),
            Tok::Lt => {
                self.bump();
                let mut r = alloc::vec![self.ratio()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    r.push(self.ratio()?);
                }
                self.expect(Tok::Gt, "`,` or `>`")?;
                Ok(Literal::Rhythm(r))
            }
            _ => self.error("an expression"),
        }
    }

    fn melody(&mut self) -> Result<Melody, DslError> {
        self.expect(Tok::LBracket, "`[`")?;
        let mut notes = Vec::new();
        if *self.peek() != Tok::RBracket {
            loop {
                let pos = self.pos();
                let pitch = match self.bump() {
                    Tok::Pitch(p) => i64::from(p),
                    Tok::Int(n) => n,
                    t => return Err(DslError::Syntax { pos, expected: "a note".into(), found: t.describe() }),
                };
                let duration = if *self.peek() == Tok::Colon {
                    self.bump();
                    self.ratio()?
                } else {
                    Beats::from_integer(1)
                };
                notes.push(Note::new(pitch, duration)?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBracket, "`,` or `]`")?;
        Ok(Melody(notes))
    }

    fn ratio(&mut self) -> Result<Beats, DslError> {
        let pos = self.pos();
        let num = match self.bump() {
            Tok::Int(n) => n,
            t => return Err(DslError::Syntax { pos, expected: "a duration".into(), found: t.describe() }),
        };
        let den = if *self.peek() == Tok::Slash {
            self.bump();
            let pos = self.pos();
            match self.bump() {
                Tok::Int(d) if d > 0 => d,
                t => return Err(DslError::Syntax { pos, expected: "a positive denominator".into(), found: t.describe() }),
            }
        } else {
            1
        };
        let r = Beats::new(num, den);
        if r <= Beats::from_integer(0) {
            return Err(DslError::Syntax { pos, expected: "a positive duration".into(), found: alloc::format!("{r}") });
        }
        Ok(r)
    }
}

fn symbol(name: String) -> Literal {
    match name.as_str() {
        "up" => Literal::Dir(Direction::Up),
        "down" => Literal::Dir(Direction::Down),
        _ => Literal::Chord(name),
    }
}

/// Structural checks that need no scope: no self calls and statically
/// bounded loops.
fn check_program(p: &Program) -> Result<(), DslError> {
    fn walk(e: &Expr, p: &Program) -> Result<(), DslError> {
        if let Expr::Call { name, args } = e {
            if *name == p.name {
                return Err(DslError::CyclicCall(name.clone()));
            }
            if name == "loop" {
                match args.first() {
                    Some(Expr::Lit(_) | Expr::Var(_)) | None => {}
                    Some(_) => return Err(DslError::UnboundedLoop(p.name.clone())),
                }
            }
            for a in args {
                walk(a, p)?;
            }
        }
        Ok(())
    }
    walk(&p.body, p)
}

/// Parses one program definition.
pub fn parse_program(src: &str) -> Result<Program, DslError> {
    let mut p = Parser::new(src)?;
    let prog = p.definition()?;
    if !p.at_eof() {
        return p.error("end of input");
    }
    Ok(prog)
}

/// Parses a sequence of definitions, e.g. a scenario's program block.
pub fn parse_programs(src: &str) -> Result<Vec<Program>, DslError> {
    let mut p = Parser::new(src)?;
    let mut out = Vec::new();
    while !p.at_eof() {
        out.push(p.definition()?);
    }
    Ok(out)
}

/// A call term with literal arguments, such as `repeat(C4, 2)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Invocation {
    pub program: String,
    pub args: Vec<Literal>,
}

impl core::fmt::Display for Invocation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}(", self.program)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

pub fn parse_invocation(src: &str) -> Result<Invocation, DslError> {
    let mut p = Parser::new(src)?;
    let program = p.ident("program name")?;
    p.expect(Tok::LParen, "`(`")?;
    let mut args = Vec::new();
    if *p.peek() != Tok::RParen {
        loop {
            args.push(p.literal()?);
            if *p.peek() == Tok::Comma {
                p.bump();
            } else {
                break;
            }
        }
    }
    p.expect(Tok::RParen, "`,` or `)`")?;
    if !p.at_eof() {
        return p.error("end of input");
    }
    Ok(Invocation { program, args })
}

pub fn parse_literal(src: &str) -> Result<Literal, DslError> {
    let mut p = Parser::new(src)?;
    let lit = p.literal()?;
    if !p.at_eof() {
        return p.error("end of input");
    }
    Ok(lit)
}

pub fn parse_melody(src: &str) -> Result<Melody, DslError> {
    let mut p = Parser::new(src)?;
    let m = p.melody()?;
    if !p.at_eof() {
        return p.error("end of input");
    }
    Ok(m)
}
