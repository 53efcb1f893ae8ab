//! Task-level loop: tune the library with a bounded operation budget, then
//! beam-search action sequences that rebuild a target melody.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::context::Context;
use crate::dsl::{cartesian, Invocation, Library, Literal, Melody, Note, ParamType, Value};
use crate::ops::{apply, Operation, OpsError, VariantStep};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecutorError {
    #[error("enumeration cap exceeded: {count} tuning sequences > cap {cap}")]
    CapExceeded { count: u128, cap: u64 },
    #[error("invalid task `{task}`: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error(transparent)]
    Ops(#[from] OpsError),
}

/// A target melody plus its search budgets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Task {
    pub name: String,
    pub target: Melody,
    pub action_budget: usize,
    pub beam_width: usize,
    /// Operations the tuner may apply per cycle.
    pub tune_budget: u32,
    pub cycles: u32,
}

impl Task {
    pub fn new(name: &str, target: Melody) -> Task {
        Task { name: name.to_string(), target, action_budget: 8, beam_width: 8, tune_budget: 0, cycles: 1 }
    }

    pub fn check(&self) -> Result<(), ExecutorError> {
        let fail = |reason: &str| Err(ExecutorError::InvalidTask { task: self.name.clone(), reason: reason.to_string() });
        if self.target.is_empty() {
            return fail("target melody is empty");
        }
        if self.action_budget == 0 || self.beam_width == 0 {
            return fail("budgets must be positive");
        }
        if self.cycles == 0 {
            return fail("cycles must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExecutorAction {
    AddNote(Note),
    Invoke(Invocation),
}

impl fmt::Display for ExecutorAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecutorAction::AddNote(n) => write!(f, "add_note({n})"),
            ExecutorAction::Invoke(inv) => write!(f, "{inv}"),
        }
    }
}

impl Serialize for ExecutorAction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Episode {
    pub actions: Vec<ExecutorAction>,
    pub melody: Melody,
    pub reward: f64,
    pub action_count: usize,
    /// Invocations per program id.
    pub usage: BTreeMap<String, u32>,
    /// Operations the tuner applied to the library this episode ran on.
    pub tuning_ops: Vec<Operation>,
}

impl Episode {
    fn new(actions: Vec<ExecutorAction>, melody: Melody, target: &Melody) -> Episode {
        let mut usage = BTreeMap::new();
        for a in &actions {
            if let ExecutorAction::Invoke(inv) = a {
                *usage.entry(inv.program.clone()).or_insert(0) += 1;
            }
        }
        Episode { reward: reward(&melody, target), action_count: actions.len(), actions, melody, usage, tuning_ops: Vec::new() }
    }

    pub fn solved(&self) -> bool {
        self.reward == 1.0
    }
}

/// Edit distance over note tokens; entry `k` is the distance from `a` to
/// the first `k` notes of `b`.
fn edit_row(a: &[Note], b: &[Note]) -> Vec<usize> {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row
}

pub fn levenshtein(a: &Melody, b: &Melody) -> usize {
    edit_row(&a.0, &b.0)[b.len()]
}

/// `1 - lev / max(len)` over (pitch, duration) tokens; 1 iff equal.
pub fn reward(m: &Melody, target: &Melody) -> f64 {
    let longest = m.len().max(target.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(m, target) as f64 / longest as f64
}

/// How well `m` could still extend into the target: reward against the
/// closest target prefix.
fn prefix_score(m: &Melody, target: &Melody) -> f64 {
    let row = edit_row(&m.0, &target.0);
    (0..=target.len())
        .map(|k| {
            let longest = m.len().max(k);
            if longest == 0 {
                1.0
            } else {
                1.0 - row[k] as f64 / longest as f64
            }
        })
        .fold(0.0, f64::max)
}

fn literal_for(ty: ParamType, v: &Value) -> Option<Literal> {
    Some(match (ty, v) {
        (ParamType::Pitch, Value::Int(p)) => Literal::Pitch(u8::try_from(*p).ok().filter(|p| *p <= 127)?),
        // a lone one-beat note reads better as its pitch
        (ParamType::Pattern, Value::Melody(m)) if m.len() == 1 && m.0[0] == Note::beat(m.0[0].pitch) => Literal::Pitch(m.0[0].pitch),
        (_, Value::Int(n)) => Literal::Int(*n),
        (_, Value::Dir(d)) => Literal::Dir(*d),
        (_, Value::Chord(c)) => Literal::Chord(c.clone()),
        (_, Value::Melody(m)) => Literal::Melody(m.clone()),
        (_, Value::Rhythm(r)) => Literal::Rhythm(r.clone()),
    })
}

/// Argument domain for one parameter type: the scenario probes plus
/// values read off the target.
fn domain(ty: ParamType, ctx: &Context, target: &Melody) -> Vec<Value> {
    let mut out: Vec<Value> = ctx.probes.get(ty).to_vec();
    let mut push = |v: Value| {
        if !out.contains(&v) {
            out.push(v);
        }
    };
    match ty {
        ParamType::Pitch => target.0.iter().for_each(|n| push(Value::Int(i64::from(n.pitch)))),
        ParamType::Pattern => target.0.iter().for_each(|n| push(Value::Melody(Melody(alloc::vec![*n])))),
        ParamType::Count => (1..=target.len().min(8) as i64).for_each(|n| push(Value::Int(n))),
        _ => {}
    }
    out
}

/// The action set for a library and target, each with the melody it
/// appends. Actions that fail to evaluate or duplicate an earlier
/// action's output are left out.
pub fn actions(lib: &Library, ctx: &Context, target: &Melody) -> Vec<(ExecutorAction, Melody)> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for n in &target.0 {
        let m = Melody(alloc::vec![*n]);
        if seen.insert(m.clone()) {
            out.push((ExecutorAction::AddNote(*n), m));
        }
    }
    let ev = ctx.evaluator();
    for p in lib.programs() {
        let domains: Vec<Vec<Value>> = p.params.iter().map(|q| domain(q.ty, ctx, target)).collect();
        let refs: Vec<&[Value]> = domains.iter().map(Vec::as_slice).collect();
        for binding in cartesian(&refs) {
            let Ok(m) = ev.evaluate(p, &binding, ctx.budget) else { continue };
            if m.is_empty() || !seen.insert(m.clone()) {
                continue;
            }
            let args: Option<Vec<Literal>> = p.params.iter().zip(&binding).map(|(q, v)| literal_for(q.ty, v)).collect();
            if let Some(args) = args {
                out.push((ExecutorAction::Invoke(Invocation { program: p.name.clone(), args }), m));
            }
        }
    }
    out
}

/// Deterministic beam search over action sequences. Partial melodies are
/// ranked by [`prefix_score`]; ties keep generation order.
pub fn solve(lib: &Library, task: &Task, ctx: &Context) -> Episode {
    let target = &task.target;
    let acts = actions(lib, ctx, target);
    let mut best = Episode::new(Vec::new(), Melody::default(), target);
    let mut beam: Vec<(Melody, Vec<usize>)> = alloc::vec![(Melody::default(), Vec::new())];
    let max_len = 2 * target.len();
    for _ in 0..task.action_budget {
        let mut next: Vec<(f64, Melody, Vec<usize>)> = Vec::new();
        for (m, path) in &beam {
            for (i, (_, out)) in acts.iter().enumerate() {
                if m.len() + out.len() > max_len {
                    continue;
                }
                let mut grown = m.clone();
                grown.0.extend_from_slice(&out.0);
                let mut p = path.clone();
                p.push(i);
                next.push((prefix_score(&grown, target), grown, p));
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut seen = BTreeSet::new();
        next.retain(|(_, m, _)| seen.insert(m.clone()));
        next.truncate(task.beam_width);
        for (_, m, path) in &next {
            if reward(m, target) > best.reward {
                best = Episode::new(path.iter().map(|&i| acts[i].0.clone()).collect(), m.clone(), target);
            }
        }
        if best.solved() {
            break;
        }
        beam = next.into_iter().map(|(_, m, p)| (m, p)).collect();
    }
    best
}

/// Score used to compare tuned libraries: higher reward, then fewer
/// actions, then a smaller action set.
fn tune_score(lib: &Library, task: &Task, ctx: &Context) -> (f64, i64, i64) {
    let ep = solve(lib, task, ctx);
    (ep.reward, -(ep.action_count as i64), -(actions(lib, ctx, &task.target).len() as i64))
}

fn better(a: (f64, i64, i64), b: (f64, i64, i64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && (a.1, a.2) > (b.1, b.2))
}

/// Deterministic operations available to the tuner: non-stochastic
/// variants of the programs in `focus`, plus selection and abstraction
/// where the scenario enables them.
pub fn tuning_alphabet(lib: &Library, ctx: &Context, focus: &BTreeSet<String>) -> Vec<Operation> {
    let table = &ctx.operations;
    let mut ops = Vec::new();
    for id in lib.ids().filter(|id| focus.is_empty() || focus.contains(*id)) {
        for (v, step) in table.variants_of(id).iter().enumerate() {
            if !matches!(step, VariantStep::Stochastic { .. }) {
                ops.push(Operation::variant(id, v));
            }
        }
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

/// Depth-≤`T'` search for a task-tailored library. Operations come from
/// [`tuning_alphabet`] with the programs in `prior` (usage from the last
/// episode) as focus. A library replaces the incumbent only if it scores
/// strictly better; shallower sequences are tried first.
pub fn tune(lib: &Library, task: &Task, ctx: &Context, prior: &BTreeMap<String, u32>) -> Result<(Library, Vec<Operation>), ExecutorError> {
    if task.tune_budget == 0 {
        return Ok((lib.clone(), Vec::new()));
    }
    let focus: BTreeSet<String> = prior.iter().filter(|(_, n)| **n > 0).map(|(k, _)| k.clone()).collect();
    let width = tuning_alphabet(lib, ctx, &focus).len() as u128;
    let count: u128 = (1..=task.tune_budget).map(|d| width.saturating_pow(d)).sum();
    if count > u128::from(ctx.enumeration_cap) {
        return Err(ExecutorError::CapExceeded { count, cap: ctx.enumeration_cap });
    }
    let mut best = (lib.clone(), Vec::new());
    let mut best_score = tune_score(lib, task, ctx);
    let mut frontier: Vec<(Library, Vec<Operation>)> = alloc::vec![(lib.clone(), Vec::new())];
    for _ in 0..task.tune_budget {
        let mut next = Vec::new();
        for (l, seq) in &frontier {
            for op in tuning_alphabet(l, ctx, &focus) {
                let Ok(dist) = apply(l, &op, ctx) else { continue };
                let Some((out, _)) = dist.support.into_iter().next() else { continue };
                let mut s = seq.clone();
                s.push(op);
                let score = tune_score(&out, task, ctx);
                if better(score, best_score) {
                    best_score = score;
                    best = (out.clone(), s.clone());
                }
                next.push((out, s));
            }
        }
        frontier = next;
    }
    Ok(best)
}

/// Best-so-far reward after each cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRecord {
    pub cycle: u32,
    pub reward: f64,
    pub best_reward: f64,
    pub tuning_ops: Vec<Operation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UseImprove {
    pub library: Library,
    pub episode: Episode,
    pub cycles: Vec<CycleRecord>,
}

/// Alternates solving and tuning, feeding each episode's program usage to
/// the next tuning round. Stops once the target is reproduced exactly.
pub fn use_improve(lib: &Library, task: &Task, ctx: &Context) -> Result<UseImprove, ExecutorError> {
    task.check()?;
    let mut current = lib.clone();
    let mut ops = Vec::new();
    let mut best: Option<Episode> = None;
    let mut cycles = Vec::new();
    for cycle in 1..=task.cycles {
        if cycle > 1 {
            let prior = best.as_ref().map(|e| e.usage.clone()).unwrap_or_default();
            let (tuned, applied) = tune(&current, task, ctx, &prior)?;
            current = tuned;
            ops = applied;
        }
        let mut ep = solve(&current, task, ctx);
        ep.tuning_ops = ops.clone();
        let reward = ep.reward;
        if best.as_ref().is_none_or(|b| ep.reward > b.reward) {
            best = Some(ep);
        }
        let best_reward = best.as_ref().map_or(0.0, |b| b.reward);
        cycles.push(CycleRecord { cycle, reward, best_reward, tuning_ops: ops.clone() });
        if best_reward == 1.0 {
            break;
        }
    }
    Ok(UseImprove { library: current, episode: best.expect("at least one cycle"), cycles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_melody;
    use crate::fixtures;
    use alloc::vec;

    fn mel(s: &str) -> Melody {
        parse_melody(s).unwrap()
    }

    fn lib(ctx: &Context, ids: &[&str]) -> Library {
        Library::from_programs(ids.iter().map(|id| ctx.scope.get(id).unwrap().clone())).unwrap()
    }

    // textbook full-matrix edit distance
    fn oracle_lev(a: &[Note], b: &[Note]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let c = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + c);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn reward_cases() {
        let m = mel("[C4, C4, E4]");
        assert_eq!(reward(&m, &m), 1.0);
        assert_eq!(reward(&Melody::default(), &m), 0.0);
        let r = reward(&m, &mel("[C4, C4, G4]"));
        assert_eq!(oracle_lev(&m.0, &mel("[C4, C4, G4]").0), 1);
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        // durations are part of the token
        assert!(reward(&mel("[C4:1/2]"), &mel("[C4]")) < 1.0);
    }

    #[test]
    fn levenshtein_matches_oracle() {
        let pool = ["C4", "D4", "E4", "C4:1/2"];
        let mut seed = 7u32;
        let mut next = move || {
            seed = seed.wrapping_mul(1_103_515_245).wrapping_add(12_345);
            seed >> 16
        };
        for _ in 0..200 {
            let (la, lb) = (next() % 6, next() % 6);
            let mut gen = |n: u32| Melody((0..n).map(|_| mel(&alloc::format!("[{}]", pool[next() as usize % 4])).0[0]).collect());
            let a = gen(la);
            let b = gen(lb);
            assert_eq!(levenshtein(&a, &b), oracle_lev(&a.0, &b.0));
        }
    }

    #[test]
    fn repeat_solves_in_one_action() {
        let ctx = fixtures::melodic();
        let task = Task::new("cc", mel("[C4, C4]"));
        let ep = solve(&lib(&ctx, &["repeat"]), &task, &ctx);
        assert_eq!(ep.reward, 1.0);
        assert_eq!(ep.action_count, 1);
        assert_eq!(ep.actions[0].to_string(), "repeat(C4, 2)");
        assert_eq!(ep.usage.get("repeat"), Some(&1));
    }

    #[test]
    fn primitives_need_two_notes() {
        let ctx = fixtures::melodic();
        let ep = solve(&Library::new(), &Task::new("cc", mel("[C4, C4]")), &ctx);
        assert_eq!(ep.reward, 1.0);
        assert_eq!(ep.actions.iter().map(ToString::to_string).collect::<Vec<_>>(), ["add_note(C4)", "add_note(C4)"]);
    }

    #[test]
    fn budget_is_respected() {
        let ctx = fixtures::melodic();
        let mut task = Task::new("run", mel("[C4, D4, E4, F4]"));
        task.action_budget = 2;
        let ep = solve(&Library::new(), &task, &ctx);
        assert!(ep.action_count <= 2);
        assert!((ep.reward - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tune_zero_budget_is_identity() {
        let ctx = fixtures::melodic();
        let z = lib(&ctx, &["arpeggio"]);
        let task = Task::new("arp", mel("[G4, E4, C4]"));
        assert_eq!(tune(&z, &task, &ctx, &BTreeMap::new()).unwrap(), (z, vec![]));
    }

    #[test]
    fn tune_pins_direction() {
        let mut ctx = fixtures::melodic();
        ctx.operations.variants.insert(
            "arpeggio".into(),
            vec![
                VariantStep::Set { param: "direction".into(), value: Literal::Dir(crate::dsl::Direction::Up), name: None },
                VariantStep::Set { param: "direction".into(), value: Literal::Dir(crate::dsl::Direction::Down), name: None },
            ],
        );
        let z = lib(&ctx, &["arpeggio"]);
        let mut task = Task::new("arp", mel("[G4, E4, C4]"));
        task.tune_budget = 1;
        let (tuned, ops) = tune(&z, &task, &ctx, &BTreeMap::new()).unwrap();
        // oracle: exhaustive depth-1 search over the two pinned variants
        let up = crate::ops::apply(&z, &Operation::variant("arpeggio", 0), &ctx).unwrap().support[0].0.clone();
        let down = crate::ops::apply(&z, &Operation::variant("arpeggio", 1), &ctx).unwrap().support[0].0.clone();
        let (eu, ed) = (solve(&up, &task, &ctx), solve(&down, &task, &ctx));
        assert_eq!(ed.reward, 1.0);
        assert_eq!(ed.action_count, 1);
        assert!(eu.action_count > 1);
        assert_eq!(tuned, down);
        assert_eq!(ops, vec![Operation::variant("arpeggio", 1)]);
    }

    #[test]
    fn tune_keeps_library_without_improvement() {
        let ctx = fixtures::melodic();
        let z = lib(&ctx, &["repeat"]);
        let mut task = Task::new("cc", mel("[C4, C4]"));
        task.tune_budget = 2;
        assert_eq!(tune(&z, &task, &ctx, &BTreeMap::new()).unwrap().0, z);
    }

    #[test]
    fn use_improve_cases() {
        let ctx = fixtures::melodic();
        let z = lib(&ctx, &["repeat"]);
        let mut task = Task::new("cc", mel("[C4, C4]"));
        task.cycles = 3;
        let out = use_improve(&z, &task, &ctx).unwrap();
        assert_eq!(out.cycles.len(), 1);
        task.cycles = 1;
        assert_eq!(use_improve(&z, &task, &ctx).unwrap().episode, solve(&z, &task, &ctx));
        task.target = Melody::default();
        assert!(use_improve(&z, &task, &ctx).is_err());
    }

    #[test]
    fn cycles_are_monotone() {
        let mut ctx = fixtures::melodic();
        ctx.operations.variants.insert(
            "arpeggio".into(),
            vec![VariantStep::Set { param: "direction".into(), value: Literal::Dir(crate::dsl::Direction::Down), name: None }],
        );
        let z = lib(&ctx, &["arpeggio"]);
        let mut task = Task::new("arp", mel("[G4, E4, C4, G4, E4, C4]"));
        task.cycles = 3;
        task.tune_budget = 1;
        task.action_budget = 2;
        let out = use_improve(&z, &task, &ctx).unwrap();
        assert!(out.cycles.windows(2).all(|w| w[0].best_reward <= w[1].best_reward));
        assert!(out.cycles.iter().all(|c| c.tuning_ops.len() <= 1));
    }
}
