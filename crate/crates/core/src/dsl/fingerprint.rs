//! Behavioural fingerprints: when are two programs, or two libraries, the
//! same thing?
//!
//! A program's fingerprint is its output on every probe binding, in probe
//! order. Libraries are equal when the multisets of their programs'
//! fingerprints agree. An [`Equivalence`] table can coarsen this further,
//! e.g. treating melodies an octave apart as the same outcome.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{DslError, Evaluator, Library, Melody, ParamType, Program, Value};

/// Finite canonical bindings per parameter type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProbeSet {
    domains: BTreeMap<ParamType, Vec<Value>>,
}

impl ProbeSet {
    pub fn new() -> ProbeSet {
        ProbeSet::default()
    }

    pub fn with(mut self, ty: ParamType, values: Vec<Value>) -> ProbeSet {
        self.insert(ty, values);
        self
    }

    pub fn insert(&mut self, ty: ParamType, values: Vec<Value>) {
        self.domains.insert(ty, values);
    }

    pub fn get(&self, ty: ParamType) -> &[Value] {
        self.domains.get(&ty).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn types(&self) -> impl Iterator<Item = ParamType> + '_ {
        self.domains.keys().copied()
    }

    /// Errors with the first parameter type of `p` that has no probes.
    pub fn covers(&self, p: &Program) -> Result<(), DslError> {
        match p.param_types().find(|t| self.get(*t).is_empty()) {
            Some(t) => Err(DslError::MissingProbes(t)),
            None => Ok(()),
        }
    }

    /// Every full binding of `p`'s parameters, last parameter varying
    /// fastest.
    pub fn bindings(&self, p: &Program) -> Result<Vec<Vec<Value>>, DslError> {
        self.covers(p)?;
        let domains: Vec<&[Value]> = p.param_types().map(|t| self.get(t)).collect();
        Ok(cartesian(&domains))
    }
}

pub(crate) fn cartesian(domains: &[&[Value]]) -> Vec<Vec<Value>> {
    let mut out = alloc::vec![Vec::new()];
    for d in domains {
        let mut next = Vec::with_capacity(out.len() * d.len());
        for prefix in &out {
            for v in d.iter() {
                let mut b = prefix.clone();
                b.push(v.clone());
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// Outputs of a program over a probe set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fingerprint(pub Vec<Melody>);

pub fn fingerprint(ev: &Evaluator<'_>, p: &Program, probes: &ProbeSet, budget: u64) -> Result<Fingerprint, DslError> {
    probes
        .bindings(p)?
        .iter()
        .map(|b| ev.evaluate(p, b, budget))
        .collect::<Result<Vec<_>, _>>()
        .map(Fingerprint)
}

/// Outcome-equivalence table.
///
/// `fold_octave` compares pitches modulo 12. `unordered` compares a
/// program's outputs as a multiset, so two programs that reach the same
/// melodies under different bindings coincide.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Equivalence {
    pub fold_octave: bool,
    pub unordered: bool,
}

impl Equivalence {
    pub fn canonical(&self, fp: &Fingerprint) -> Fingerprint {
        let mut outs = fp.0.clone();
        if self.fold_octave {
            for m in &mut outs {
                for n in &mut m.0 {
                    n.pitch %= 12;
                }
            }
        }
        if self.unordered {
            outs.sort();
        }
        Fingerprint(outs)
    }
}

/// Sorted multiset of canonical program fingerprints; equal keys mean
/// functionally equal libraries.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LibraryKey(pub Vec<Fingerprint>);

/// Memoizing fingerprint engine shared by channel enumeration and search.
pub struct Fingerprinter<'a> {
    ev: Evaluator<'a>,
    probes: &'a ProbeSet,
    equivalence: Equivalence,
    budget: u64,
    cache: BTreeMap<Program, Fingerprint>,
}

impl<'a> Fingerprinter<'a> {
    pub fn new(ev: Evaluator<'a>, probes: &'a ProbeSet, equivalence: Equivalence, budget: u64) -> Fingerprinter<'a> {
        Fingerprinter { ev, probes, equivalence, budget, cache: BTreeMap::new() }
    }

    /// Canonical fingerprint of one program.
    pub fn program(&mut self, p: &Program) -> Result<Fingerprint, DslError> {
        if let Some(fp) = self.cache.get(p) {
            return Ok(fp.clone());
        }
        let fp = self.equivalence.canonical(&fingerprint(&self.ev, p, self.probes, self.budget)?);
        self.cache.insert(p.clone(), fp.clone());
        Ok(fp)
    }

    pub fn library_key(&mut self, lib: &Library) -> Result<LibraryKey, DslError> {
        let mut fps = lib.programs().iter().map(|p| self.program(p)).collect::<Result<Vec<_>, _>>()?;
        fps.sort();
        Ok(LibraryKey(fps))
    }

    pub fn equal(&mut self, a: &Library, b: &Library) -> Result<bool, DslError> {
        Ok(a.len() == b.len() && self.library_key(a)? == self.library_key(b)?)
    }
}

/// True iff the two libraries have the same multiset of fingerprints.
pub fn library_equal(
    ev: &Evaluator<'_>,
    a: &Library,
    b: &Library,
    probes: &ProbeSet,
    equivalence: Equivalence,
) -> Result<bool, DslError> {
    Fingerprinter::new(*ev, probes, equivalence, super::DEFAULT_BUDGET).equal(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_program, parse_programs, ChordTable, Direction, Scope, DEFAULT_BUDGET};
    use alloc::vec;

    fn steps(range: core::ops::RangeInclusive<i64>) -> Vec<Value> {
        range.map(Value::Int).collect()
    }

    fn scope() -> Scope {
        Scope::new(
            parse_programs(
                "up(n: pitch, steps: steps) = step(up, n, steps)
                 down(n: pitch, steps: steps) = step(down, n, steps)
                 move(direction: direction, n: pitch, steps: steps) = step(direction, n, steps)",
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn up_equals_move_with_direction_fixed() {
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let probes = ProbeSet::new().with(ParamType::Pitch, vec![Value::Int(60), Value::Int(64)]).with(ParamType::Steps, steps(1..=3));
        let move_up = parse_program("move_up(n: pitch, steps: steps) = step(up, n, steps)").unwrap();
        assert_eq!(
            fingerprint(&ev, s.get("up").unwrap(), &probes, DEFAULT_BUDGET).unwrap(),
            fingerprint(&ev, &move_up, &probes, DEFAULT_BUDGET).unwrap()
        );
    }

    #[test]
    fn zero_param_program_has_single_output() {
        let s = Scope::default();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let p = parse_program("motif() = [C4, D4]").unwrap();
        let fp = fingerprint(&ev, &p, &ProbeSet::new(), DEFAULT_BUDGET).unwrap();
        assert_eq!(fp.0.len(), 1);
    }

    #[test]
    fn missing_probes_error() {
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let probes = ProbeSet::new().with(ParamType::Pitch, vec![Value::Int(60)]);
        assert_eq!(fingerprint(&ev, s.get("up").unwrap(), &probes, 100), Err(DslError::MissingProbes(ParamType::Steps)));
    }

    #[test]
    fn octave_wrapped_up_matches_complementary_down() {
        // oracle: enumerate both probe orders by hand under pitch-class folding
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let octave = Equivalence { fold_octave: true, unordered: false };
        let wrapped = ProbeSet::new().with(ParamType::Pitch, vec![Value::Int(60)]).with(ParamType::Steps, steps(1..=11));
        let complementary = ProbeSet::new()
            .with(ParamType::Pitch, vec![Value::Int(60)])
            .with(ParamType::Steps, (1..=11).map(|k| Value::Int(12 - k)).collect());
        let up = octave.canonical(&fingerprint(&ev, s.get("up").unwrap(), &wrapped, 100).unwrap());
        let down = octave.canonical(&fingerprint(&ev, s.get("down").unwrap(), &complementary, 100).unwrap());
        let expected: Vec<u8> = (1..=11).collect();
        assert_eq!(up.0.iter().map(|m| m.notes()[0].pitch).collect::<Vec<_>>(), expected);
        assert_eq!(up, down);
        // without folding they differ by an octave
        let raw_up = fingerprint(&ev, s.get("up").unwrap(), &wrapped, 100).unwrap();
        let raw_down = fingerprint(&ev, s.get("down").unwrap(), &complementary, 100).unwrap();
        assert_ne!(raw_up, raw_down);
    }

    #[test]
    fn library_equality() {
        let s = scope();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let probes = ProbeSet::new()
            .with(ParamType::Pitch, vec![Value::Int(60)])
            .with(ParamType::Steps, steps(1..=11))
            .with(ParamType::Direction, vec![Value::Dir(Direction::Up), Value::Dir(Direction::Down)]);
        let lib = |src: &str| Library::from_programs(parse_programs(src).unwrap()).unwrap();
        let z = lib("up(n: pitch, steps: steps) = step(up, n, steps)\ndown(n: pitch, steps: steps) = step(down, n, steps)");
        assert!(library_equal(&ev, &z, &z, &probes, Equivalence::default()).unwrap());

        // octave mirror: staccato on up vs staccato on down
        let a = lib("up_staccato(n: pitch, steps: steps) = stretch(step(up, n, steps), 1, 2)\ndown(n: pitch, steps: steps) = step(down, n, steps)");
        let b = lib("down_staccato(n: pitch, steps: steps) = stretch(step(down, n, steps), 1, 2)\nup(n: pitch, steps: steps) = step(up, n, steps)");
        let table = Equivalence { fold_octave: true, unordered: true };
        assert!(library_equal(&ev, &a, &b, &probes, table).unwrap());
        assert!(!library_equal(&ev, &a, &b, &probes, Equivalence::default()).unwrap());

        // one changed probe output breaks equality
        let c = lib("up_staccato(n: pitch, steps: steps) = stretch(step(up, n, steps), 1, 3)\ndown(n: pitch, steps: steps) = step(down, n, steps)");
        assert!(!library_equal(&ev, &a, &c, &probes, table).unwrap());
    }

    #[test]
    fn empty_melody_only_equals_itself() {
        let s = Scope::default();
        let chords = ChordTable::standard();
        let ev = Evaluator::new(&s, &chords);
        let lib = |src: &str| Library::from_programs(parse_programs(src).unwrap()).unwrap();
        let e = lib("e() = empty()");
        let f = lib("f() = [C4]");
        let probes = ProbeSet::new();
        let table = Equivalence { fold_octave: true, unordered: true };
        assert!(library_equal(&ev, &e, &lib("g() = empty()"), &probes, table).unwrap());
        assert!(!library_equal(&ev, &e, &f, &probes, table).unwrap());
    }
}
