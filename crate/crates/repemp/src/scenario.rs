//! Scenario files: TOML with an embedded DSL block.
//!
//! ```toml
//! [scenario]
//! name = "demo"
//! horizon = 1
//!
//! [programs]
//! source = """
//! up(n: pitch, steps: steps) = step(up, n, steps)
//! """
//!
//! [libraries]
//! Z = ["up"]
//!
//! [probes]
//! pitch = ["C4"]
//! steps = [1, 2]
//! ```
//!
//! Loading validates every cross-reference and reports all problems at
//! once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use repemp_core::curator::CuratorConfig;
use repemp_core::dsl::{parse_literal, parse_melody, parse_programs, ChordTable, Equivalence, Library, Literal, ParamType, ProbeSet, Scope, Value};
use repemp_core::empowerment::Estimator;
use repemp_core::executor::Task;
use repemp_core::ops::{AbstractionName, Alphabet, OperationTable, VariantStep};
use repemp_core::Context;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Syntax { path: String, source: toml::de::Error },
    #[error("{}", Problems(.0))]
    Invalid(Vec<String>),
}

struct Problems<'a>(&'a [String]);

impl fmt::Display for Problems<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario has {} problem(s):", self.0.len())?;
        for p in self.0 {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    scenario: RawHeader,
    #[serde(default)]
    chords: BTreeMap<String, Vec<i64>>,
    programs: RawPrograms,
    #[serde(default)]
    libraries: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    probes: BTreeMap<String, Vec<Scalar>>,
    #[serde(default)]
    equivalence: RawEquivalence,
    #[serde(default)]
    operations: RawOperations,
    #[serde(default)]
    curator: RawCurator,
    #[serde(default)]
    tasks: Vec<RawTask>,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    name: String,
    #[serde(default = "one")]
    horizon: u32,
    #[serde(default)]
    estimator: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    enumeration_cap: Option<u64>,
    #[serde(default)]
    budget: Option<u64>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrograms {
    source: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Int(i64),
    Text(String),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(n) => write!(f, "{n}"),
            Scalar::Text(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEquivalence {
    #[serde(default)]
    fold_octave: bool,
    #[serde(default)]
    unordered: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperations {
    #[serde(default)]
    alphabet: Option<String>,
    #[serde(default)]
    selection: bool,
    #[serde(default)]
    abstraction: bool,
    #[serde(default)]
    variants: BTreeMap<String, Vec<RawVariant>>,
    #[serde(default)]
    abstractions: Vec<RawAbstraction>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariant {
    crossover: Option<String>,
    slot: Option<String>,
    set: Option<String>,
    value: Option<Scalar>,
    outcomes: Option<Vec<RawOutcome>>,
    name: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutcome {
    program: String,
    p: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAbstraction {
    a: String,
    b: String,
    name: String,
    param: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCurator {
    memory_cap: Option<usize>,
    subset_cap: Option<usize>,
    relevance_threshold: Option<f64>,
    estimator: Option<String>,
    horizon: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    name: String,
    target: String,
    #[serde(default = "eight")]
    action_budget: usize,
    #[serde(default = "eight")]
    beam_width: usize,
    #[serde(default)]
    tune_budget: u32,
    #[serde(default = "one")]
    cycles: u32,
    #[serde(default)]
    candidates: Vec<String>,
}

fn eight() -> usize {
    8
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    initial: Option<String>,
}

/// A task plus the candidate programs acquired while solving it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task: Task,
    pub candidates: Vec<String>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub horizon: u32,
    pub estimator: Estimator,
    pub seed: u64,
    pub context: Context,
    pub libraries: BTreeMap<String, Vec<String>>,
    pub curator: CuratorConfig,
    pub tasks: Vec<TaskSpec>,
    pub initial: Option<String>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Scenario::parse(&text).map_err(|e| match e {
            ScenarioError::Syntax { source, .. } => ScenarioError::Syntax { path: path.display().to_string(), source },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let raw: Raw = toml::from_str(text).map_err(|source| ScenarioError::Syntax { path: "<scenario>".into(), source })?;
        Validator::default().run(raw)
    }

    /// The library declared under `id`.
    pub fn library(&self, id: &str) -> Option<Library> {
        let ids = self.libraries.get(id)?;
        Library::from_programs(ids.iter().map(|p| self.context.scope.get(p).expect("validated").clone())).ok()
    }

    pub fn program_library(&self, ids: &[String]) -> Library {
        Library::from_programs(ids.iter().map(|p| self.context.scope.get(p).expect("validated").clone())).expect("validated")
    }
}

#[derive(Default)]
struct Validator {
    problems: Vec<String>,
}

impl Validator {
    fn note(&mut self, msg: impl Into<String>) {
        self.problems.push(msg.into());
    }

    fn estimator(&mut self, field: &str, s: Option<&str>) -> Estimator {
        match s.map(str::parse::<Estimator>) {
            None => Estimator::Uniform,
            Some(Ok(e)) => e,
            Some(Err(e)) => {
                self.note(format!("{field}: {e}"));
                Estimator::Uniform
            }
        }
    }

    fn literal(&mut self, field: &str, v: &Scalar) -> Option<Literal> {
        match v {
            Scalar::Int(n) => Some(Literal::Int(*n)),
            Scalar::Text(s) => match parse_literal(s) {
                Ok(l) => Some(l),
                Err(e) => {
                    self.note(format!("{field}: cannot parse {v}: {e}"));
                    None
                }
            },
        }
    }

    fn run(mut self, raw: Raw) -> Result<Scenario, ScenarioError> {
        let estimator = self.estimator("scenario.estimator", raw.scenario.estimator.as_deref());

        let mut chords = ChordTable::standard();
        for (name, intervals) in &raw.chords {
            if intervals.is_empty() {
                self.note(format!("chords.{name}: no intervals"));
            }
            chords.0.insert(name.clone(), intervals.clone());
        }

        let programs = match parse_programs(&raw.programs.source) {
            Ok(p) => p,
            Err(e) => {
                self.note(format!("programs: {e}"));
                Vec::new()
            }
        };
        let scope = match Scope::new(programs) {
            Ok(s) => s,
            Err(e) => {
                self.note(format!("programs: {e}"));
                Scope::default()
            }
        };
        let known = |id: &str| scope.contains(id);

        for (lib, ids) in &raw.libraries {
            let mut seen = Vec::new();
            for id in ids {
                if !known(id) {
                    self.note(format!("libraries.{lib}: unknown program `{id}`"));
                }
                if seen.contains(&id) {
                    self.note(format!("libraries.{lib}: `{id}` listed twice"));
                }
                seen.push(id);
            }
        }

        let mut probes = ProbeSet::new();
        for (ty, values) in &raw.probes {
            let ty: ParamType = match ty.parse() {
                Ok(t) => t,
                Err(_) => {
                    self.note(format!("probes.{ty}: unknown parameter type"));
                    continue;
                }
            };
            let mut out = Vec::new();
            for v in values {
                let Some(lit) = self.literal(&format!("probes.{ty}"), v) else { continue };
                match ty.coerce(&lit.to_value()) {
                    Ok(val) => out.push(val),
                    Err(e) => self.note(format!("probes.{ty}: {v}: {e}")),
                }
            }
            if out.is_empty() && !values.is_empty() {
                continue;
            }
            probes.insert(ty, out);
        }
        for p in scope.programs() {
            if let Err(e) = probes.covers(p) {
                self.note(format!("probes: program `{}` cannot be fingerprinted: {e}", p.name));
            }
        }
        for v in probes.get(ParamType::Chord) {
            if let Value::Chord(c) = v {
                if chords.get(c).is_none() {
                    self.note(format!("probes.chord: unknown chord `{c}`"));
                }
            }
        }

        let mut table = OperationTable {
            alphabet: match raw.operations.alphabet.as_deref() {
                None | Some("joint") => Alphabet::Joint,
                Some("single") => Alphabet::Single,
                Some(other) => {
                    self.note(format!("operations.alphabet: `{other}` is not `joint` or `single`"));
                    Alphabet::Joint
                }
            },
            selection: raw.operations.selection,
            abstraction: raw.operations.abstraction,
            ..Default::default()
        };
        // programs the operation tables can create must be fingerprintable too
        let mut derived = Vec::new();
        for (prog, variants) in &raw.operations.variants {
            let Some(owner) = scope.get(prog) else {
                self.note(format!("operations.variants.{prog}: unknown program"));
                continue;
            };
            let mut steps = Vec::new();
            for (i, v) in variants.iter().enumerate() {
                let at = format!("operations.variants.{prog}[{i}]");
                let kinds = [v.crossover.is_some(), v.set.is_some(), v.outcomes.is_some()];
                if kinds.iter().filter(|k| **k).count() != 1 {
                    self.note(format!("{at}: needs exactly one of `crossover`, `set`, `outcomes`"));
                    continue;
                }
                if let Some(partner) = &v.crossover {
                    match scope.get(partner) {
                        None => self.note(format!("{at}: unknown crossover partner `{partner}`")),
                        Some(fragment) => {
                            match repemp_core::ops::crossover(owner, fragment, v.slot.as_deref(), v.name.as_deref()) {
                                Ok(made) => derived.push((at.clone(), made)),
                                Err(e) => self.note(format!("{at}: {e}")),
                            }
                        }
                    }
                    steps.push(VariantStep::Crossover { partner: partner.clone(), slot: v.slot.clone(), name: v.name.clone() });
                } else if let Some(param) = &v.set {
                    let Some(value) = v.value.as_ref().and_then(|x| self.literal(&at, x)) else {
                        if v.value.is_none() {
                            self.note(format!("{at}: `set` needs a `value`"));
                        }
                        continue;
                    };
                    match repemp_core::ops::set_param(owner, param, &value, v.name.as_deref()) {
                        Ok(made) => derived.push((at.clone(), made)),
                        Err(e) => self.note(format!("{at}: {e}")),
                    }
                    steps.push(VariantStep::Set { param: param.clone(), value, name: v.name.clone() });
                } else if let Some(outcomes) = &v.outcomes {
                    let mut total = 0.0;
                    for o in outcomes {
                        if !known(&o.program) {
                            self.note(format!("{at}: unknown outcome program `{}`", o.program));
                        }
                        if !(o.p > 0.0 && o.p <= 1.0) {
                            self.note(format!("{at}: probability {} of `{}` is outside (0, 1]", o.p, o.program));
                        }
                        total += o.p;
                    }
                    if (total - 1.0).abs() > 1e-12 {
                        self.note(format!("{at}: outcome probabilities sum to {total}, not 1"));
                    }
                    steps.push(VariantStep::Stochastic { outcomes: outcomes.iter().map(|o| (o.program.clone(), o.p)).collect() });
                }
            }
            table.variants.insert(prog.clone(), steps);
        }
        for (i, a) in raw.operations.abstractions.iter().enumerate() {
            for id in [&a.a, &a.b] {
                if !known(id) {
                    self.note(format!("operations.abstractions[{i}]: unknown program `{id}`"));
                }
            }
            let naming = AbstractionName { a: a.a.clone(), b: a.b.clone(), name: a.name.clone(), param: a.param.clone() };
            if let (Some(pa), Some(pb)) = (scope.get(&a.a), scope.get(&a.b)) {
                if let Ok(made) = repemp_core::ops::anti_unify(pa, pb, Some(&naming), &scope) {
                    derived.push((format!("operations.abstractions[{i}]"), made));
                }
            }
            table.abstractions.push(naming);
        }
        for (at, p) in &derived {
            if let Err(e) = probes.covers(p) {
                self.note(format!("{at}: derived program `{}` cannot be fingerprinted: {e}", p.name));
            }
        }

        let curator = CuratorConfig {
            memory_cap: raw.curator.memory_cap,
            subset_cap: raw.curator.subset_cap.unwrap_or(2),
            relevance_threshold: raw.curator.relevance_threshold.unwrap_or(0.0),
            estimator: match raw.curator.estimator.as_deref() {
                None => estimator,
                s => self.estimator("curator.estimator", s),
            },
            horizon: raw.curator.horizon.unwrap_or(raw.scenario.horizon),
        };
        if curator.memory_cap == Some(0) {
            self.note("curator.memory_cap: must be positive");
        }

        let mut tasks = Vec::new();
        for (i, t) in raw.tasks.iter().enumerate() {
            let at = format!("tasks[{i}] ({})", t.name);
            let target = match parse_melody(&t.target) {
                Ok(m) => m,
                Err(e) => {
                    self.note(format!("{at}: target: {e}"));
                    continue;
                }
            };
            for c in &t.candidates {
                if !known(c) {
                    self.note(format!("{at}: unknown candidate program `{c}`"));
                }
            }
            let task = Task {
                name: t.name.clone(),
                target,
                action_budget: t.action_budget,
                beam_width: t.beam_width,
                tune_budget: t.tune_budget,
                cycles: t.cycles,
            };
            if let Err(e) = task.check() {
                self.note(format!("{at}: {e}"));
            }
            tasks.push(TaskSpec { task, candidates: t.candidates.clone() });
        }
        if let Some(init) = &raw.run.initial {
            if !raw.libraries.contains_key(init) {
                self.note(format!("run.initial: unknown library `{init}`"));
            }
        }

        if !self.problems.is_empty() {
            return Err(ScenarioError::Invalid(self.problems));
        }
        let mut context = Context::new(scope, probes);
        context.chords = chords;
        context.equivalence = Equivalence { fold_octave: raw.equivalence.fold_octave, unordered: raw.equivalence.unordered };
        context.operations = table;
        if let Some(cap) = raw.scenario.enumeration_cap {
            context.enumeration_cap = cap;
        }
        if let Some(budget) = raw.scenario.budget {
            context.budget = budget;
        }
        Ok(Scenario {
            name: raw.scenario.name,
            horizon: raw.scenario.horizon,
            estimator,
            seed: raw.scenario.seed,
            context,
            libraries: raw.libraries,
            curator,
            tasks,
            initial: raw.run.initial,
        })
    }
}
