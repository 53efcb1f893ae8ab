//! Melody programs: notes, typed parameters, expression trees and libraries.
//!
//! A [`Program`] is a function term with typed parameters whose body
//! evaluates to a [`Melody`]. A [`Library`] is an ordered set of programs
//! with unique names; it is the representational state empowerment is
//! measured over.

mod eval;
mod fingerprint;
mod parse;
mod serde_impl;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

pub use eval::{ArgKind, ChordTable, Evaluator, Scope, DEFAULT_BUDGET, PRIMITIVES};
pub(crate) use fingerprint::cartesian;
pub use fingerprint::{fingerprint, library_equal, Equivalence, Fingerprint, Fingerprinter, LibraryKey, ProbeSet};
pub use parse::{parse_invocation, parse_literal, parse_melody, parse_program, parse_programs, Invocation};

/// Durations are exact rational beat counts.
pub type Beats = Ratio<i64>;

const PITCH_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("syntax error at {pos}: expected {expected}, found {found}")]
    Syntax { pos: usize, expected: String, found: String },
    #[error("unknown parameter type `{0}`")]
    UnknownParamType(String),
    #[error("cyclic call reference through `{0}`")]
    CyclicCall(String),
    #[error("call to unknown program `{0}`")]
    UnknownProgram(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("program `{0}` defined twice or shadows a primitive")]
    DuplicateProgram(String),
    #[error("loop trip count in `{0}` must be a literal or a parameter")]
    UnboundedLoop(String),
    #[error("evaluation budget exhausted")]
    BudgetExhausted,
    #[error("type mismatch: expected {expected}, got {got}")]
    TypeMismatch { expected: String, got: String },
    #[error("`{name}` expects {expected} arguments, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("pitch {0} outside MIDI range 0..=127")]
    PitchOutOfRange(i64),
    #[error("unknown chord `{0}`")]
    UnknownChord(String),
    #[error("no probes declared for parameter type {0}")]
    MissingProbes(ParamType),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Note {
    pub pitch: u8,
    pub duration: Beats,
}

impl Note {
    pub fn new(pitch: i64, duration: Beats) -> Result<Note, DslError> {
        if !(0..=127).contains(&pitch) {
            return Err(DslError::PitchOutOfRange(pitch));
        }
        if duration <= Beats::from_integer(0) {
            return Err(DslError::InvalidArgument(alloc::format!("non-positive duration {duration}")));
        }
        Ok(Note { pitch: pitch as u8, duration })
    }

    /// A one-beat note.
    pub fn beat(pitch: u8) -> Note {
        Note { pitch, duration: Beats::from_integer(1) }
    }
}

impl fmt::Display for Note {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_pitch(f, self.pitch)?;
        if self.duration != Beats::from_integer(1) {
            write!(f, ":{}", self.duration)?;
        }
        Ok(())
    }
}

pub(crate) fn write_pitch(f: &mut fmt::Formatter<'_>, pitch: u8) -> fmt::Result {
    let octave = i32::from(pitch / 12) - 1;
    write!(f, "{}{}", PITCH_NAMES[usize::from(pitch % 12)], octave)
}

pub(crate) fn pitch_from_name(name: &str) -> Option<u8> {
    let mut chars = name.chars();
    let letter = chars.next()?;
    let base: i64 = match letter {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let rest = chars.as_str();
    let (accidental, octave) = match rest.chars().next()? {
        '#' => (1, &rest[1..]),
        'b' => (-1, &rest[1..]),
        _ => (0, rest),
    };
    let octave: i64 = octave.parse().ok()?;
    let midi = (octave + 1) * 12 + base + accidental;
    (0..=127).contains(&midi).then_some(midi as u8)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Melody(pub Vec<Note>);

impl Melody {
    pub fn new(notes: Vec<Note>) -> Melody {
        Melody(notes)
    }

    pub fn notes(&self) -> &[Note] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_duration(&self) -> Beats {
        self.0.iter().map(|n| n.duration).fold(Beats::from_integer(0), |a, b| a + b)
    }
}

impl fmt::Display for Melody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for Melody {
    type Err = DslError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_melody(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamType {
    Pitch,
    Count,
    Steps,
    Direction,
    Chord,
    Pattern,
    Rhythm,
    Latent,
}

impl ParamType {
    pub const ALL: [ParamType; 8] = [
        ParamType::Pitch,
        ParamType::Count,
        ParamType::Steps,
        ParamType::Direction,
        ParamType::Chord,
        ParamType::Pattern,
        ParamType::Rhythm,
        ParamType::Latent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamType::Pitch => "pitch",
            ParamType::Count => "count",
            ParamType::Steps => "steps",
            ParamType::Direction => "direction",
            ParamType::Chord => "chord",
            ParamType::Pattern => "pattern",
            ParamType::Rhythm => "rhythm",
            ParamType::Latent => "latent-id",
        }
    }

    /// Checks `value` against this type, applying the one coercion the
    /// language has: a pitch used where a pattern is expected becomes a
    /// one-beat, one-note melody.
    pub fn coerce(self, value: &Value) -> Result<Value, DslError> {
        let mismatch = || DslError::TypeMismatch { expected: self.name().to_string(), got: value.type_name().to_string() };
        match (self, value) {
            (ParamType::Pitch, Value::Int(p)) => {
                if (0..=127).contains(p) {
                    Ok(Value::Int(*p))
                } else {
                    Err(DslError::PitchOutOfRange(*p))
                }
            }
            (ParamType::Count | ParamType::Latent, Value::Int(n)) if *n >= 0 => Ok(Value::Int(*n)),
            (ParamType::Steps, Value::Int(n)) => Ok(Value::Int(*n)),
            (ParamType::Direction, Value::Dir(_)) => Ok(value.clone()),
            (ParamType::Chord, Value::Chord(_)) => Ok(value.clone()),
            (ParamType::Pattern, Value::Melody(_)) => Ok(value.clone()),
            (ParamType::Pattern, Value::Int(p)) => Ok(Value::Melody(Melody(alloc::vec![Note::new(*p, Beats::from_integer(1))?]))),
            (ParamType::Rhythm, Value::Rhythm(r)) if !r.is_empty() => Ok(value.clone()),
            _ => Err(mismatch()),
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamType {
    type Err = DslError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| DslError::UnknownParamType(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
        })
    }
}

/// Runtime values. Pitches, counts, steps and latent ids are all integers
/// at runtime; the parameter type decides which range is legal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Dir(Direction),
    Chord(String),
    Melody(Melody),
    Rhythm(Vec<Beats>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "integer",
            Value::Dir(_) => "direction",
            Value::Chord(_) => "chord",
            Value::Melody(_) => "pattern",
            Value::Rhythm(_) => "rhythm",
        }
    }
}

/// Source-level constants. Kept apart from [`Value`] so that `C4` prints
/// back as `C4` rather than `60`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Int(i64),
    Pitch(u8),
    Dir(Direction),
    Chord(String),
    Melody(Melody),
    Rhythm(Vec<Beats>),
}

impl Literal {
    pub fn to_value(&self) -> Value {
        match self {
            Literal::Int(n) => Value::Int(*n),
            Literal::Pitch(p) => Value::Int(i64::from(*p)),
            Literal::Dir(d) => Value::Dir(*d),
            Literal::Chord(c) => Value::Chord(c.clone()),
            Literal::Melody(m) => Value::Melody(m.clone()),
            Literal::Rhythm(r) => Value::Rhythm(r.clone()),
        }
    }

    /// A short token usable inside a generated program name.
    pub fn name_fragment(&self) -> String {
        match self {
            Literal::Int(n) if *n < 0 => alloc::format!("m{}", -n),
            Literal::Pitch(p) => alloc::format!("{}", PitchName(*p)).replace('#', "s").replace('-', "m"),
            Literal::Melody(_) | Literal::Rhythm(_) => "lit".to_string(),
            other => other.to_string(),
        }
    }
}

struct PitchName(u8);

impl fmt::Display for PitchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_pitch(f, self.0)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(n) => write!(f, "{n}"),
            Literal::Pitch(p) => write_pitch(f, *p),
            Literal::Dir(d) => write!(f, "{d}"),
            Literal::Chord(c) => f.write_str(c),
            Literal::Melody(m) => write!(f, "{m}"),
            Literal::Rhythm(r) => {
                f.write_str("<")?;
                for (i, d) in r.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{d}")?;
                }
                f.write_str(">")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Lit(Literal),
    Var(String),
    Call { name: String, args: Vec<Expr> },
}

impl Expr {
    pub fn call(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Call { name: name.to_string(), args }
    }

    /// Names of every program or primitive called anywhere in the tree.
    pub fn callees(&self, out: &mut Vec<String>) {
        if let Expr::Call { name, args } = self {
            if !out.contains(name) {
                out.push(name.clone());
            }
            for a in args {
                a.callees(out);
            }
        }
    }

    /// Replaces every `Var(name)` for which `subst` has an entry.
    pub fn substitute(&self, subst: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Var(v) => subst.get(v).cloned().unwrap_or_else(|| self.clone()),
            Expr::Lit(_) => self.clone(),
            Expr::Call { name, args } => Expr::Call { name: name.clone(), args: args.iter().map(|a| a.substitute(subst)).collect() },
        }
    }

    pub fn mentions(&self, var: &str) -> bool {
        match self {
            Expr::Var(v) => v == var,
            Expr::Lit(_) => false,
            Expr::Call { args, .. } => args.iter().any(|a| a.mentions(var)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(l) => write!(f, "{l}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Call { name, args } => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Param {
    pub name: String,
    pub ty: ParamType,
}

impl Param {
    pub fn new(name: &str, ty: ParamType) -> Param {
        Param { name: name.to_string(), ty }
    }
}

/// A named, typed melody program. The name doubles as its stable id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Program {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Expr,
}

impl Program {
    pub fn param_types(&self) -> impl Iterator<Item = ParamType> + '_ {
        self.params.iter().map(|p| p.ty)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Canonical source text; `parse_program` of this yields `self`.
    pub fn source(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", p.name, p.ty)?;
        }
        write!(f, ") = {}", self.body)
    }
}

impl FromStr for Program {
    type Err = DslError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_program(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LibraryError {
    #[error("duplicate program id `{0}`")]
    DuplicateId(String),
    #[error("unknown program id `{0}`")]
    UnknownId(String),
}

/// An ordered set of programs with unique names.
///
/// Order is insertion order; new programs go to the end. `provenance` maps a
/// program to the index of the task it was acquired from, and `candidate`
/// marks freshly acquired knowledge not yet integrated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Library {
    programs: Vec<Program>,
    pub provenance: BTreeMap<String, u32>,
    pub candidate: bool,
}

impl Library {
    pub fn new() -> Library {
        Library::default()
    }

    pub fn from_programs<I: IntoIterator<Item = Program>>(programs: I) -> Result<Library, LibraryError> {
        let mut lib = Library::new();
        for p in programs {
            lib.push(p)?;
        }
        Ok(lib)
    }

    pub fn push(&mut self, program: Program) -> Result<(), LibraryError> {
        if self.contains(&program.name) {
            return Err(LibraryError::DuplicateId(program.name));
        }
        self.programs.push(program);
        Ok(())
    }

    /// Removes a program, keeping the order of the others.
    pub fn remove(&mut self, id: &str) -> Result<Program, LibraryError> {
        let idx = self.position(id).ok_or_else(|| LibraryError::UnknownId(id.to_string()))?;
        self.provenance.remove(id);
        Ok(self.programs.remove(idx))
    }

    pub fn get(&self, id: &str) -> Option<&Program> {
        self.programs.iter().find(|p| p.name == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.programs.iter().position(|p| p.name == id)
    }

    pub fn programs(&self) -> &[Program] {
        &self.programs
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.programs.iter().map(|p| p.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    /// One program source per line, in library order.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        for p in &self.programs {
            s.push_str(&p.source());
            s.push('\n');
        }
        s
    }
}

impl core::ops::Index<usize> for Library {
    type Output = Program;

    fn index(&self, idx: usize) -> &Program {
        &self.programs[idx]
    }
}
