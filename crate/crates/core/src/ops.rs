//! Library modification operations and their outcome distributions.
//!
//! Four primitive operations act on a [`Library`]: selection keeps a
//! subset, crossover splices one program into a fragment slot of another,
//! abstraction anti-unifies two programs into a parameterized one, and
//! mutation edits parameters, either deterministically or through a
//! declared stochastic table. Everything random is declared data, so every
//! outcome distribution is exact.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::context::Context;
use crate::dsl::{DslError, Expr, Fingerprinter, Library, LibraryError, Literal, Param, ParamType, Program, Scope};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpsError {
    #[error("unknown program `{0}`")]
    UnknownId(String),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error("cannot splice `{program}` into `{fragment}`: {reason}")]
    IncompatibleFragment { program: String, fragment: String, reason: String },
    #[error("`{a}` and `{b}` are not anti-unifiable: {reason}")]
    NotAntiUnifiable { a: String, b: String, reason: String },
    #[error("`{0}` cannot be combined with itself")]
    SameProgram(String),
    #[error("program `{program}` has no variant {variant}")]
    UnknownVariant { program: String, variant: usize },
    #[error("variant {variant} of `{program}` is not a {expected}")]
    WrongVariantKind { program: String, variant: usize, expected: &'static str },
    #[error("operation {step} is inapplicable: {cause}")]
    Inapplicable { step: usize, cause: Box<OpsError> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OperationKind {
    Selection,
    Crossover,
    Abstraction,
    Mutation,
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperationKind::Selection => "selection",
            OperationKind::Crossover => "crossover",
            OperationKind::Abstraction => "abstraction",
            OperationKind::Mutation => "mutation",
        })
    }
}

/// One entry of a program's declared variant table.
#[derive(Debug, Clone, PartialEq)]
pub enum VariantStep {
    /// Splice the program into `partner`'s pattern slot.
    Crossover { partner: String, slot: Option<String>, name: Option<String> },
    /// Fix one parameter to a constant.
    Set { param: String, value: Literal, name: Option<String> },
    /// Replace the program by one of the listed scope programs.
    Stochastic { outcomes: Vec<(String, f64)> },
}

impl VariantStep {
    pub fn kind(&self) -> OperationKind {
        match self {
            VariantStep::Crossover { .. } => OperationKind::Crossover,
            VariantStep::Set { .. } | VariantStep::Stochastic { .. } => OperationKind::Mutation,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            VariantStep::Stochastic { outcomes } => outcomes.len() == 1,
            _ => true,
        }
    }
}

/// Optional naming for the program an abstraction produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractionName {
    pub a: String,
    pub b: String,
    pub name: String,
    pub param: Option<String>,
}

/// How a library's operation alphabet is formed from the variant tables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Alphabet {
    /// One operation assigns a variant to every program that has a table.
    #[default]
    Joint,
    /// One operation applies one variant to one program.
    Single,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperationTable {
    pub variants: BTreeMap<String, Vec<VariantStep>>,
    pub abstractions: Vec<AbstractionName>,
    pub alphabet: Alphabet,
    /// Add drop-one selection operations to the alphabet.
    pub selection: bool,
    /// Add pairwise abstraction operations to the alphabet.
    pub abstraction: bool,
}

impl OperationTable {
    pub fn variants_of(&self, program: &str) -> &[VariantStep] {
        self.variants.get(program).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn naming(&self, a: &str, b: &str) -> Option<&AbstractionName> {
        self.abstractions.iter().find(|n| (n.a == a && n.b == b) || (n.a == b && n.b == a))
    }
}

/// An element of the operation set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operation {
    Select { keep: Vec<String> },
    Abstract { a: String, b: String },
    /// Declared variants, one `(program, variant index)` per target. More
    /// than one target makes a joint operation.
    Apply(Vec<(String, usize)>),
}

impl Operation {
    pub fn variant(program: &str, index: usize) -> Operation {
        Operation::Apply(alloc::vec![(program.to_string(), index)])
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Select { keep } => write!(f, "select({})", keep.join(", ")),
            Operation::Abstract { a, b } => write!(f, "abstract({a}, {b})"),
            Operation::Apply(choices) => {
                f.write_str("apply(")?;
                for (i, (p, v)) in choices.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}#{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl serde::Serialize for Operation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Exact distribution over successor libraries.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    pub support: Vec<(Library, f64)>,
}

impl OutcomeDistribution {
    pub fn point(lib: Library) -> OutcomeDistribution {
        OutcomeDistribution { support: alloc::vec![(lib, 1.0)] }
    }

    pub fn is_point(&self) -> bool {
        self.support.len() == 1
    }

    pub fn total(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }

    /// Merges syntactically identical libraries, keeping first-seen order.
    fn merge_syntactic(self) -> OutcomeDistribution {
        let mut out: Vec<(Library, f64)> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for (lib, p) in self.support {
            let key = lib.canonical_text();
            match index.get(&key) {
                Some(&i) => out[i].1 += p,
                None => {
                    index.insert(key, out.len());
                    out.push((lib, p));
                }
            }
        }
        OutcomeDistribution { support: out }
    }

    /// Merges libraries that are equal under the fingerprint equivalence.
    pub fn merge_equivalent(self, fp: &mut Fingerprinter<'_>) -> Result<OutcomeDistribution, DslError> {
        let mut out: Vec<(Library, f64)> = Vec::new();
        let mut index: BTreeMap<_, usize> = BTreeMap::new();
        for (lib, p) in self.support {
            let key = fp.library_key(&lib)?;
            match index.get(&key) {
                Some(&i) => out[i].1 += p,
                None => {
                    index.insert(key, out.len());
                    out.push((lib, p));
                }
            }
        }
        Ok(OutcomeDistribution { support: out })
    }
}

fn lookup<'l>(lib: &'l Library, id: &str) -> Result<&'l Program, OpsError> {
    lib.get(id).ok_or_else(|| OpsError::UnknownId(id.to_string()))
}

/// Adds `p`; re-adding an identical program leaves the library unchanged.
fn add_program(lib: &mut Library, p: Program) -> Result<(), OpsError> {
    match lib.get(&p.name) {
        Some(existing) if *existing == p => Ok(()),
        Some(_) => Err(LibraryError::DuplicateId(p.name).into()),
        None => Ok(lib.push(p)?),
    }
}

/// Keeps exactly the programs in `keep`, in library order.
pub fn apply_selection(lib: &Library, keep: &[&str]) -> Result<Library, OpsError> {
    if let Some(id) = keep.iter().find(|id| !lib.contains(id)) {
        return Err(OpsError::UnknownId(id.to_string()));
    }
    let mut out = lib.clone();
    for id in lib.ids() {
        if !keep.contains(&id) {
            out.remove(id)?;
        }
    }
    Ok(out)
}

fn fresh_name(base: &str, taken: &[Param]) -> String {
    if !taken.iter().any(|p| p.name == base) {
        return base.to_string();
    }
    (1..).map(|i| alloc::format!("{base}_{i}")).find(|n| !taken.iter().any(|p| p.name == *n)).expect("unbounded")
}

/// Splices `a`'s body into the pattern-typed `slot` of `fragment`.
///
/// The result takes `a`'s parameters followed by the fragment's remaining
/// ones, renaming `a`'s where they would collide.
pub fn crossover(a: &Program, fragment: &Program, slot: Option<&str>, name: Option<&str>) -> Result<Program, OpsError> {
    let incompatible = |reason: String| OpsError::IncompatibleFragment { program: a.name.clone(), fragment: fragment.name.clone(), reason };
    let slot_param = match slot {
        Some(s) => fragment.param(s).ok_or_else(|| incompatible(alloc::format!("no parameter `{s}`")))?,
        None => fragment
            .params
            .iter()
            .find(|p| p.ty == ParamType::Pattern)
            .ok_or_else(|| incompatible("no pattern-typed slot".to_string()))?,
    };
    if slot_param.ty != ParamType::Pattern {
        return Err(incompatible(alloc::format!("slot `{}` has type {}, not pattern", slot_param.name, slot_param.ty)));
    }
    let rest: Vec<Param> = fragment.params.iter().filter(|p| p.name != slot_param.name).cloned().collect();
    let mut params = Vec::new();
    let mut rename = BTreeMap::new();
    for p in &a.params {
        let mut taken = rest.clone();
        taken.extend(params.iter().cloned());
        let fresh = fresh_name(&p.name, &taken);
        if fresh != p.name {
            rename.insert(p.name.clone(), Expr::Var(fresh.clone()));
        }
        params.push(Param { name: fresh, ty: p.ty });
    }
    let spliced = a.body.substitute(&rename);
    let mut subst = BTreeMap::new();
    subst.insert(slot_param.name.clone(), spliced);
    let body = fragment.body.substitute(&subst);
    params.extend(rest);
    let name = name.map(ToString::to_string).unwrap_or_else(|| alloc::format!("{}_{}", a.name, fragment.name));
    Ok(Program { name, params, body })
}

/// Crossover of library program `a` with `b`, found in the library or
/// else among the scope's fragment programs. Adds one program.
pub fn apply_crossover(lib: &Library, a: &str, b: &str, slot: Option<&str>, name: Option<&str>, scope: &Scope) -> Result<Library, OpsError> {
    if a == b {
        return Err(OpsError::SameProgram(a.to_string()));
    }
    let pa = lookup(lib, a)?;
    let pb = lib.get(b).or_else(|| scope.get(b)).ok_or_else(|| OpsError::UnknownId(b.to_string()))?;
    let child = crossover(pa, pb, slot, name)?;
    let mut out = lib.clone();
    add_program(&mut out, child)?;
    Ok(out)
}

struct Diff {
    pairs: Vec<(Literal, Literal, Option<ParamType>)>,
}

fn diff_exprs(x: &Expr, y: &Expr, expected: Option<ParamType>, scope: &Scope, out: &mut Diff) -> Result<(), String> {
    if x == y {
        return Ok(());
    }
    match (x, y) {
        (Expr::Lit(lx), Expr::Lit(ly)) => {
            if !out.pairs.iter().any(|(a, b, _)| a == lx && b == ly) {
                out.pairs.push((lx.clone(), ly.clone(), expected));
            }
            Ok(())
        }
        (Expr::Call { name: nx, args: ax }, Expr::Call { name: ny, args: ay }) if nx == ny && ax.len() == ay.len() => {
            for (i, (a, b)) in ax.iter().zip(ay).enumerate() {
                diff_exprs(a, b, scope.arg_type(nx, i), scope, out)?;
            }
            Ok(())
        }
        _ => Err(alloc::format!("structures differ at `{x}` vs `{y}`")),
    }
}

fn generalize(x: &Expr, lx: &Literal, ly: &Literal, y: &Expr, var: &str) -> Expr {
    match (x, y) {
        (Expr::Lit(a), Expr::Lit(b)) if a == lx && b == ly => Expr::Var(var.to_string()),
        (Expr::Call { name, args: ax }, Expr::Call { args: ay, .. }) => {
            Expr::Call { name: name.clone(), args: ax.iter().zip(ay).map(|(a, b)| generalize(a, lx, ly, b, var)).collect() }
        }
        _ => x.clone(),
    }
}

fn literal_type(l: &Literal) -> Option<ParamType> {
    match l {
        Literal::Pitch(_) => Some(ParamType::Pitch),
        Literal::Dir(_) => Some(ParamType::Direction),
        Literal::Chord(_) => Some(ParamType::Chord),
        Literal::Melody(_) => Some(ParamType::Pattern),
        Literal::Rhythm(_) => Some(ParamType::Rhythm),
        Literal::Int(_) => None,
    }
}

/// Least general generalization of two programs that differ in exactly
/// one literal slot. The new parameter comes first.
pub fn anti_unify(a: &Program, b: &Program, naming: Option<&AbstractionName>, scope: &Scope) -> Result<Program, OpsError> {
    let fail = |reason: String| OpsError::NotAntiUnifiable { a: a.name.clone(), b: b.name.clone(), reason };
    if a.params != b.params {
        return Err(fail("parameter lists differ".to_string()));
    }
    let mut diff = Diff { pairs: Vec::new() };
    diff_exprs(&a.body, &b.body, None, scope, &mut diff).map_err(fail)?;
    let (lx, ly, expected) = match diff.pairs.as_slice() {
        [] => return Err(fail("zero differing slots".to_string())),
        [one] => one.clone(),
        _ => return Err(fail(alloc::format!("{} differing slots", diff.pairs.len()))),
    };
    let ty = expected
        .or_else(|| literal_type(&lx))
        .ok_or_else(|| fail("cannot infer the type of the differing slot".to_string()))?;
    for l in [&lx, &ly] {
        ty.coerce(&l.to_value()).map_err(|e| fail(e.to_string()))?;
    }
    let base = naming.and_then(|n| n.param.clone()).unwrap_or_else(|| ty.name().replace('-', "_"));
    let pname = fresh_name(&base, &a.params);
    let body = generalize(&a.body, &lx, &ly, &b.body, &pname);
    let mut params = alloc::vec![Param { name: pname, ty }];
    params.extend(a.params.iter().cloned());
    let name = naming.map(|n| n.name.clone()).unwrap_or_else(|| alloc::format!("gen_{}_{}", a.name, b.name));
    Ok(Program { name, params, body })
}

/// Adds the anti-unification of `a` and `b`; the originals are kept.
pub fn apply_abstraction(lib: &Library, a: &str, b: &str, naming: Option<&AbstractionName>, scope: &Scope) -> Result<Library, OpsError> {
    if a == b {
        let p = lookup(lib, a)?;
        return Err(OpsError::NotAntiUnifiable { a: p.name.clone(), b: p.name.clone(), reason: "zero differing slots".into() });
    }
    let general = anti_unify(lookup(lib, a)?, lookup(lib, b)?, naming, scope)?;
    let mut out = lib.clone();
    add_program(&mut out, general)?;
    Ok(out)
}

/// Fixes parameter `param` of `p` to `value`.
pub fn set_param(p: &Program, param: &str, value: &Literal, name: Option<&str>) -> Result<Program, OpsError> {
    let decl = p.param(param).ok_or_else(|| OpsError::Dsl(DslError::InvalidArgument(alloc::format!("`{}` has no parameter `{param}`", p.name))))?;
    decl.ty.coerce(&value.to_value())?;
    let mut subst = BTreeMap::new();
    subst.insert(param.to_string(), Expr::Lit(value.clone()));
    let name = name
        .map(ToString::to_string)
        .unwrap_or_else(|| alloc::format!("{}_{}_{}", p.name, param, value.name_fragment()));
    Ok(Program { name, params: p.params.iter().filter(|q| q.name != param).cloned().collect(), body: p.body.substitute(&subst) })
}

fn replace(lib: &Library, old: &str, new: Program) -> Result<Library, OpsError> {
    let mut out = lib.clone();
    out.remove(old)?;
    add_program(&mut out, new)?;
    Ok(out)
}

fn variant<'t>(ctx: &'t Context, program: &str, index: usize) -> Result<&'t VariantStep, OpsError> {
    ctx.operations
        .variants_of(program)
        .get(index)
        .ok_or_else(|| OpsError::UnknownVariant { program: program.to_string(), variant: index })
}

/// Applies mutation variant `index` of program `p`. Deterministic entries
/// give a point mass; stochastic entries give the declared distribution.
pub fn apply_mutation(lib: &Library, p: &str, index: usize, ctx: &Context) -> Result<OutcomeDistribution, OpsError> {
    let prog = lookup(lib, p)?;
    match variant(ctx, p, index)? {
        VariantStep::Set { param, value, name } => Ok(OutcomeDistribution::point(replace(lib, p, set_param(prog, param, value, name.as_deref())?)?)),
        VariantStep::Stochastic { outcomes } => {
            let mut support = Vec::with_capacity(outcomes.len());
            for (id, prob) in outcomes {
                let target = ctx.scope.get(id).ok_or_else(|| OpsError::UnknownId(id.clone()))?;
                let mut out = lib.clone();
                out.remove(p)?;
                add_program(&mut out, target.clone())?;
                support.push((out, *prob));
            }
            Ok(OutcomeDistribution { support }.merge_syntactic())
        }
        VariantStep::Crossover { .. } => Err(OpsError::WrongVariantKind { program: p.to_string(), variant: index, expected: "mutation" }),
    }
}

/// Applies any declared variant of `p`.
pub fn apply_variant(lib: &Library, p: &str, index: usize, ctx: &Context) -> Result<OutcomeDistribution, OpsError> {
    match variant(ctx, p, index)? {
        VariantStep::Crossover { partner, slot, name } => {
            apply_crossover(lib, p, partner, slot.as_deref(), name.as_deref(), &ctx.scope).map(OutcomeDistribution::point)
        }
        _ => apply_mutation(lib, p, index, ctx),
    }
}

/// One operation, merged syntactically but not yet by equivalence.
pub fn apply(lib: &Library, op: &Operation, ctx: &Context) -> Result<OutcomeDistribution, OpsError> {
    match op {
        Operation::Select { keep } => {
            let keep: Vec<&str> = keep.iter().map(String::as_str).collect();
            apply_selection(lib, &keep).map(OutcomeDistribution::point)
        }
        Operation::Abstract { a, b } => apply_abstraction(lib, a, b, ctx.operations.naming(a, b), &ctx.scope).map(OutcomeDistribution::point),
        Operation::Apply(choices) => {
            let mut dist = OutcomeDistribution::point(lib.clone());
            for (program, index) in choices {
                let mut next = Vec::new();
                for (l, p) in &dist.support {
                    for (l2, q) in apply_variant(l, program, *index, ctx)?.support {
                        next.push((l2, p * q));
                    }
                }
                dist = OutcomeDistribution { support: next }.merge_syntactic();
            }
            Ok(dist)
        }
    }
}

/// Composes the steps of `seq`, then merges outcomes that are equal under
/// the fingerprint equivalence.
pub fn outcome_distribution(lib: &Library, seq: &[Operation], ctx: &Context, fp: &mut Fingerprinter<'_>) -> Result<OutcomeDistribution, OpsError> {
    let mut dist = OutcomeDistribution::point(lib.clone());
    for (step, op) in seq.iter().enumerate() {
        let mut next = Vec::new();
        for (l, p) in &dist.support {
            let out = apply(l, op, ctx).map_err(|e| OpsError::Inapplicable { step, cause: Box::new(e) })?;
            for (l2, q) in out.support {
                next.push((l2, p * q));
            }
        }
        dist = OutcomeDistribution { support: next }.merge_syntactic();
    }
    Ok(dist.merge_equivalent(fp)?)
}

/// The operation alphabet of a library under the scenario's tables.
pub fn alphabet(lib: &Library, ctx: &Context) -> Vec<Operation> {
    let table = &ctx.operations;
    let mut ops = Vec::new();
    let tabled: Vec<(&str, usize)> =
        lib.ids().map(|id| (id, table.variants_of(id).len())).filter(|(_, n)| *n > 0).collect();
    match table.alphabet {
        Alphabet::Single => {
            for (id, n) in &tabled {
                ops.extend((0..*n).map(|v| Operation::variant(id, v)));
            }
        }
        Alphabet::Joint if !tabled.is_empty() => {
            let mut idx = alloc::vec![0usize; tabled.len()];
            loop {
                ops.push(Operation::Apply(tabled.iter().zip(&idx).map(|((id, _), v)| (id.to_string(), *v)).collect()));
                let mut k = tabled.len();
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < tabled[k].1 {
                        break;
                    }
                    idx[k] = 0;
                    if k == 0 {
                        k = usize::MAX;
                        break;
                    }
                }
                if k == usize::MAX {
                    break;
                }
            }
        }
        Alphabet::Joint => {}
    }
    if table.selection {
        for drop in lib.ids() {
            ops.push(Operation::Select { keep: lib.ids().filter(|id| *id != drop).map(ToString::to_string).collect() });
        }
    }
    if table.abstraction {
        let ids: Vec<&str> = lib.ids().collect();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                ops.push(Operation::Abstract { a: a.to_string(), b: b.to_string() });
            }
        }
    }
    ops
}
