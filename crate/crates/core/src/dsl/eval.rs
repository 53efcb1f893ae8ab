use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Beats, Direction, DslError, Expr, Melody, Note, Param, ParamType, Program, Value};

/// Default step budget for a single evaluation.
pub const DEFAULT_BUDGET: u64 = 10_000;

/// Argument signature of a built-in melody constructor.
#[derive(Debug, Clone, Copy)]
pub struct ArgKind {
    pub fixed: &'static [ParamType],
    /// Type of any further arguments, if the primitive is variadic.
    pub rest: Option<ParamType>,
}

use ParamType as T;

/// Built-in constructors. Everything else is a call to a scope program.
pub const PRIMITIVES: &[(&str, ArgKind)] = &[
    ("note", ArgKind { fixed: &[T::Pitch], rest: None }),
    ("step", ArgKind { fixed: &[T::Direction, T::Pitch, T::Steps], rest: None }),
    ("add", ArgKind { fixed: &[T::Pitch, T::Steps], rest: None }),
    ("transpose", ArgKind { fixed: &[T::Pattern, T::Steps], rest: None }),
    ("concat", ArgKind { fixed: &[T::Pattern], rest: Some(T::Pattern) }),
    ("loop", ArgKind { fixed: &[T::Count, T::Pattern], rest: None }),
    ("chord_tones", ArgKind { fixed: &[T::Pitch, T::Chord], rest: None }),
    ("orient", ArgKind { fixed: &[T::Direction, T::Pattern], rest: None }),
    ("reverse", ArgKind { fixed: &[T::Pattern], rest: None }),
    ("stretch", ArgKind { fixed: &[T::Pattern, T::Count, T::Count], rest: None }),
    ("accel", ArgKind { fixed: &[T::Pattern], rest: None }),
    ("rhythmize", ArgKind { fixed: &[T::Pattern, T::Rhythm], rest: None }),
    ("start_at", ArgKind { fixed: &[T::Pattern, T::Pitch], rest: None }),
    ("pick", ArgKind { fixed: &[T::Latent], rest: Some(T::Pattern) }),
    ("empty", ArgKind { fixed: &[], rest: None }),
];

fn primitive(name: &str) -> Option<ArgKind> {
    PRIMITIVES.iter().find(|(n, _)| *n == name).map(|(_, k)| *k)
}

/// Chord interval tables in semitones above the root.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChordTable(pub BTreeMap<String, Vec<i64>>);

impl ChordTable {
    /// `major = {0,4,7}` and `minor = {0,3,7}`.
    pub fn standard() -> ChordTable {
        let mut t = BTreeMap::new();
        t.insert("major".to_string(), alloc::vec![0, 4, 7]);
        t.insert("minor".to_string(), alloc::vec![0, 3, 7]);
        ChordTable(t)
    }

    pub fn get(&self, name: &str) -> Option<&[i64]> {
        self.0.get(name).map(Vec::as_slice)
    }
}

/// The programs callable from bodies. Construction rejects unknown callees
/// and cycles in the call graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scope {
    programs: BTreeMap<String, Program>,
}

impl Scope {
    pub fn new<I: IntoIterator<Item = Program>>(programs: I) -> Result<Scope, DslError> {
        let mut map = BTreeMap::new();
        for p in programs {
            if primitive(&p.name).is_some() || map.contains_key(&p.name) {
                return Err(DslError::DuplicateProgram(p.name));
            }
            map.insert(p.name.clone(), p);
        }
        let scope = Scope { programs: map };
        scope.check_calls()?;
        Ok(scope)
    }

    fn check_calls(&self) -> Result<(), DslError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        fn visit(scope: &Scope, name: &str, marks: &mut BTreeMap<String, Mark>) -> Result<(), DslError> {
            match marks.get(name) {
                Some(Mark::Done) => return Ok(()),
                Some(Mark::Active) => return Err(DslError::CyclicCall(name.to_string())),
                None => {}
            }
            marks.insert(name.to_string(), Mark::Active);
            let mut callees = Vec::new();
            scope.programs[name].body.callees(&mut callees);
            for c in callees {
                if primitive(&c).is_some() {
                    continue;
                }
                if !scope.programs.contains_key(&c) {
                    return Err(DslError::UnknownProgram(c));
                }
                visit(scope, &c, marks)?;
            }
            marks.insert(name.to_string(), Mark::Done);
            Ok(())
        }
        let mut marks = BTreeMap::new();
        for name in self.programs.keys() {
            visit(self, name, &mut marks)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Program> {
        self.programs.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.programs.contains_key(name)
    }

    pub fn programs(&self) -> impl Iterator<Item = &Program> {
        self.programs.values()
    }

    /// Checks that every call in `body` resolves to a primitive or a scope
    /// program.
    pub fn check_body(&self, body: &Expr) -> Result<(), DslError> {
        let mut callees = Vec::new();
        body.callees(&mut callees);
        match callees.into_iter().find(|c| primitive(c).is_none() && !self.contains(c)) {
            Some(c) => Err(DslError::UnknownProgram(c)),
            None => Ok(()),
        }
    }

    /// Declared type of argument `index` of `callee`.
    pub fn arg_type(&self, callee: &str, index: usize) -> Option<ParamType> {
        if let Some(kind) = primitive(callee) {
            return kind.fixed.get(index).copied().or(kind.rest);
        }
        self.programs.get(callee).and_then(|p| p.params.get(index)).map(|p| p.ty)
    }
}

/// Pure interpreter: programs plus bindings to melodies.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator<'a> {
    pub scope: &'a Scope,
    pub chords: &'a ChordTable,
}

struct Frame<'b> {
    params: &'b [Param],
    values: &'b [Value],
}

impl Frame<'_> {
    fn lookup(&self, name: &str) -> Option<&Value> {
        self.params.iter().position(|p| p.name == name).map(|i| &self.values[i])
    }
}

fn charge(fuel: &mut u64, amount: u64) -> Result<(), DslError> {
    if *fuel < amount {
        *fuel = 0;
        return Err(DslError::BudgetExhausted);
    }
    *fuel -= amount;
    Ok(())
}

fn as_int(v: &Value, ty: ParamType) -> Result<i64, DslError> {
    match ty.coerce(v)? {
        Value::Int(n) => Ok(n),
        _ => unreachable!("integer types coerce to Int"),
    }
}

fn as_melody(v: Value) -> Result<Melody, DslError> {
    match ParamType::Pattern.coerce(&v)? {
        Value::Melody(m) => Ok(m),
        _ => unreachable!("patterns coerce to Melody"),
    }
}

fn as_dir(v: &Value) -> Result<Direction, DslError> {
    match v {
        Value::Dir(d) => Ok(*d),
        other => Err(DslError::TypeMismatch { expected: "direction".into(), got: other.type_name().into() }),
    }
}

fn single(pitch: i64) -> Result<Value, DslError> {
    Ok(Value::Melody(Melody(alloc::vec![Note::new(pitch, Beats::from_integer(1))?])))
}

impl<'a> Evaluator<'a> {
    pub fn new(scope: &'a Scope, chords: &'a ChordTable) -> Evaluator<'a> {
        Evaluator { scope, chords }
    }

    /// Evaluates `p` under a positional binding of all its parameters.
    pub fn evaluate(&self, p: &Program, bindings: &[Value], budget: u64) -> Result<Melody, DslError> {
        if budget == 0 {
            return Err(DslError::InvalidArgument("budget must be positive".into()));
        }
        let mut fuel = budget;
        let values = self.bind(p, bindings)?;
        let out = self.eval(&p.body, &Frame { params: &p.params, values: &values }, &mut fuel)?;
        as_melody(out)
    }

    fn bind(&self, p: &Program, bindings: &[Value]) -> Result<Vec<Value>, DslError> {
        if bindings.len() != p.params.len() {
            return Err(DslError::Arity { name: p.name.clone(), expected: p.params.len(), got: bindings.len() });
        }
        p.params.iter().zip(bindings).map(|(param, v)| param.ty.coerce(v)).collect()
    }

    fn eval(&self, e: &Expr, frame: &Frame<'_>, fuel: &mut u64) -> Result<Value, DslError> {
        charge(fuel, 1)?;
        match e {
            Expr::Lit(l) => Ok(l.to_value()),
            Expr::Var(v) => frame
                .lookup(v)
                .cloned()
                .ok_or_else(|| DslError::InvalidArgument(alloc::format!("unbound variable `{v}`"))),
            Expr::Call { name, args } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a, frame, fuel)?);
                }
                if primitive(name).is_some() {
                    self.primitive(name, vals, fuel)
                } else {
                    let callee = self.scope.get(name).ok_or_else(|| DslError::UnknownProgram(name.clone()))?;
                    let bound = self.bind(callee, &vals)?;
                    let out = self.eval(&callee.body, &Frame { params: &callee.params, values: &bound }, fuel)?;
                    Ok(Value::Melody(as_melody(out)?))
                }
            }
        }
    }

    fn primitive(&self, name: &str, mut args: Vec<Value>, fuel: &mut u64) -> Result<Value, DslError> {
        let kind = primitive(name).expect("checked by caller");
        let arity_ok = match kind.rest {
            Some(_) => args.len() > kind.fixed.len() || (name == "concat" && !args.is_empty()),
            None => args.len() == kind.fixed.len(),
        };
        if !arity_ok {
            return Err(DslError::Arity { name: name.to_string(), expected: kind.fixed.len(), got: args.len() });
        }
        match name {
            "note" => single(as_int(&args[0], T::Pitch)?),
            "step" => {
                let pitch = as_int(&args[1], T::Pitch)?;
                let steps = as_int(&args[2], T::Steps)?;
                match as_dir(&args[0])? {
                    Direction::Up => single(pitch + steps),
                    Direction::Down => single(pitch - steps),
                }
            }
            "add" => {
                let p = as_int(&args[0], T::Pitch)? + as_int(&args[1], T::Steps)?;
                as_int(&Value::Int(p), T::Pitch).map(Value::Int)
            }
            "transpose" => {
                let steps = as_int(&args[1], T::Steps)?;
                let m = as_melody(args.swap_remove(0))?;
                let notes = m.0.iter().map(|n| Note::new(i64::from(n.pitch) + steps, n.duration)).collect::<Result<_, _>>()?;
                Ok(Value::Melody(Melody(notes)))
            }
            "concat" => {
                let mut notes = Vec::new();
                for a in args {
                    let m = as_melody(a)?;
                    charge(fuel, m.len() as u64)?;
                    notes.extend(m.0);
                }
                Ok(Value::Melody(Melody(notes)))
            }
            "loop" => {
                let times = as_int(&args[0], T::Count)? as u64;
                let m = as_melody(args.swap_remove(1))?;
                charge(fuel, times.saturating_mul(m.len() as u64))?;
                let mut notes = Vec::with_capacity(m.len() * times as usize);
                for _ in 0..times {
                    notes.extend_from_slice(&m.0);
                }
                Ok(Value::Melody(Melody(notes)))
            }
            "chord_tones" => {
                let root = as_int(&args[0], T::Pitch)?;
                let chord = match &args[1] {
                    Value::Chord(c) => c,
                    other => return Err(DslError::TypeMismatch { expected: "chord".into(), got: other.type_name().into() }),
                };
                let intervals = self.chords.get(chord).ok_or_else(|| DslError::UnknownChord(chord.clone()))?;
                let notes = intervals.iter().map(|i| Note::new(root + i, Beats::from_integer(1))).collect::<Result<_, _>>()?;
                Ok(Value::Melody(Melody(notes)))
            }
            "orient" => {
                let dir = as_dir(&args[0])?;
                let mut m = as_melody(args.swap_remove(1))?;
                if dir == Direction::Down {
                    m.0.reverse();
                }
                Ok(Value::Melody(m))
            }
            "reverse" => {
                let mut m = as_melody(args.swap_remove(0))?;
                m.0.reverse();
                Ok(Value::Melody(m))
            }
            "stretch" => {
                let num = as_int(&args[1], T::Count)?;
                let den = as_int(&args[2], T::Count)?;
                if num == 0 || den == 0 {
                    return Err(DslError::InvalidArgument("stretch factor must be positive".into()));
                }
                let factor = Beats::new(num, den);
                let mut m = as_melody(args.swap_remove(0))?;
                for n in &mut m.0 {
                    n.duration *= factor;
                }
                Ok(Value::Melody(m))
            }
            "accel" => {
                // note i lasts 3/(4+i) of its written length
                let mut m = as_melody(args.swap_remove(0))?;
                for (i, n) in m.0.iter_mut().enumerate() {
                    n.duration *= Beats::new(3, 4 + i as i64);
                }
                Ok(Value::Melody(m))
            }
            "rhythmize" => {
                let rhythm = match ParamType::Rhythm.coerce(&args[1])? {
                    Value::Rhythm(r) => r,
                    _ => unreachable!(),
                };
                let mut m = as_melody(args.swap_remove(0))?;
                for (i, n) in m.0.iter_mut().enumerate() {
                    n.duration = rhythm[i % rhythm.len()];
                }
                Ok(Value::Melody(m))
            }
            "start_at" => {
                let target = as_int(&args[1], T::Pitch)?;
                let m = as_melody(args.swap_remove(0))?;
                let Some(first) = m.0.first() else {
                    return Ok(Value::Melody(m));
                };
                let shift = target - i64::from(first.pitch);
                let notes = m.0.iter().map(|n| Note::new(i64::from(n.pitch) + shift, n.duration)).collect::<Result<_, _>>()?;
                Ok(Value::Melody(Melody(notes)))
            }
            "pick" => {
                let k = as_int(&args[0], T::Latent)? as usize;
                if k + 1 >= args.len() {
                    return Err(DslError::InvalidArgument(alloc::format!("latent {k} out of range")));
                }
                Ok(Value::Melody(as_melody(args.swap_remove(k + 1))?))
            }
            "empty" => Ok(Value::Melody(Melody::default())),
            _ => unreachable!("primitive table and dispatch agree"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_melody, parse_programs};

    fn scope() -> Scope {
        Scope::new(
            parse_programs(
                "repeat(pattern: pattern, times: count) = loop(times, pattern)
                 up(n: pitch, steps: steps) = step(up, n, steps)
                 down(n: pitch, steps: steps) = step(down, n, steps)
                 arpeggio(root: pitch, chord: chord, direction: direction) = orient(direction, chord_tones(root, chord))
                 twice_up(n: pitch) = repeat(up(n, 2), 2)",
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn melody(s: &str) -> Melody {
        parse_melody(s).unwrap()
    }

    #[test]
    fn repeat_pattern_twice() {
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let out = ev.evaluate(s.get("repeat").unwrap(), &[Value::Melody(melody("[C4]")), Value::Int(2)], DEFAULT_BUDGET).unwrap();
        assert_eq!(out, melody("[C4, C4]"));
    }

    #[test]
    fn up_is_semitones() {
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let out = ev.evaluate(s.get("up").unwrap(), &[Value::Int(60), Value::Int(2)], DEFAULT_BUDGET).unwrap();
        assert_eq!(out, melody("[D4]"));
        assert_eq!(out.notes()[0].pitch, 62);
    }

    #[test]
    fn arpeggio_matches_interval_table() {
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let arp = s.get("arpeggio").unwrap();
        // oracle: root + {0, 4, 7} from the declared major table
        let expected: Vec<u8> = chords.get("major").unwrap().iter().map(|i| (60 + i) as u8).collect();
        let out = ev.evaluate(arp, &[Value::Int(60), Value::Chord("major".into()), Value::Dir(Direction::Up)], DEFAULT_BUDGET).unwrap();
        assert_eq!(out.notes().iter().map(|n| n.pitch).collect::<Vec<_>>(), expected);
        assert_eq!(out, melody("[C4, E4, G4]"));
        let down = ev.evaluate(arp, &[Value::Int(57), Value::Chord("minor".into()), Value::Dir(Direction::Down)], DEFAULT_BUDGET).unwrap();
        assert_eq!(down, melody("[E4, C4, A3]"));
    }

    #[test]
    fn nested_calls_resolve_through_scope() {
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let out = ev.evaluate(s.get("twice_up").unwrap(), &[Value::Int(60)], DEFAULT_BUDGET).unwrap();
        assert_eq!(out, melody("[D4, D4]"));
    }

    #[test]
    fn budget_exhaustion() {
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let r = ev.evaluate(s.get("repeat").unwrap(), &[Value::Melody(melody("[C4, D4]")), Value::Int(1_000_000)], DEFAULT_BUDGET);
        assert_eq!(r, Err(DslError::BudgetExhausted));
        assert!(ev.evaluate(s.get("up").unwrap(), &[Value::Int(60), Value::Int(1)], 0).is_err());
    }

    #[test]
    fn binding_errors() {
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let up = s.get("up").unwrap();
        assert!(matches!(ev.evaluate(up, &[Value::Dir(Direction::Up), Value::Int(1)], 100), Err(DslError::TypeMismatch { .. })));
        assert!(matches!(ev.evaluate(up, &[Value::Int(60)], 100), Err(DslError::Arity { .. })));
        assert_eq!(ev.evaluate(up, &[Value::Int(127), Value::Int(1)], 100), Err(DslError::PitchOutOfRange(128)));
    }

    #[test]
    fn scope_rejects_unknown_and_cyclic_calls() {
        let unknown = parse_programs("a(n: pitch) = b(n)").unwrap();
        assert_eq!(Scope::new(unknown), Err(DslError::UnknownProgram("b".into())));
        let cyclic = parse_programs("a(n: pitch) = b(n)\nb(n: pitch) = a(n)").unwrap();
        assert!(matches!(Scope::new(cyclic), Err(DslError::CyclicCall(_))));
    }

    #[test]
    fn style_primitives() {
        let s = Scope::default();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let p = crate::dsl::parse_program("f(m: pattern, r: rhythm) = concat(stretch(m, 1, 2), accel(m), rhythmize(m, r), start_at(m, D4))").unwrap();
        let out = ev
            .evaluate(&p, &[Value::Melody(melody("[C4, E4]")), Value::Rhythm(alloc::vec![Beats::new(1, 3)])], 100)
            .unwrap();
        assert_eq!(out, melody("[C4:1/2, E4:1/2, C4:3/4, E4:3/5, C4:1/3, E4:1/3, D4, F#4]"));
    }

    #[test]
    fn pick_selects_by_latent() {
        let s = Scope::default();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let p = crate::dsl::parse_program("g(l: latent-id) = pick(l, [C4], [D4, E4])").unwrap();
        assert_eq!(ev.evaluate(&p, &[Value::Int(1)], 100).unwrap(), melody("[D4, E4]"));
        assert!(ev.evaluate(&p, &[Value::Int(2)], 100).is_err());
    }
}
