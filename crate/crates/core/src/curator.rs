//! Meta-level integration: choose how new programs enter the library by
//! maximizing the representational empowerment of the result.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::context::Context;
use crate::dsl::Library;
use crate::empowerment::{rep_emp, EmpowermentError, EmpowermentReport, Estimator};
use crate::executor::Episode;
use crate::ops::{apply_abstraction, apply_crossover, apply_selection, OpsError, VariantStep};

/// Two values closer than this count as tied.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CuratorError {
    #[error("candidate `{0}` is already in the library")]
    Overlap(String),
    #[error("evaluating {action}: {source}")]
    Evaluation { action: String, source: EmpowermentError },
    #[error(transparent)]
    Ops(#[from] OpsError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CuratorConfig {
    /// Maximum number of programs; `None` is unbounded.
    pub memory_cap: Option<usize>,
    /// Largest candidate subset integrated in one step.
    pub subset_cap: usize,
    pub relevance_threshold: f64,
    pub estimator: Estimator,
    pub horizon: u32,
}

impl Default for CuratorConfig {
    fn default() -> Self {
        CuratorConfig { memory_cap: None, subset_cap: 2, relevance_threshold: 0.0, estimator: Estimator::Uniform, horizon: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuratorState {
    pub current: Library,
    pub candidates: Library,
    pub task_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Compose {
    Abstract { a: String, b: String },
    Crossover { program: String, variant: usize },
}

impl fmt::Display for Compose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Compose::Abstract { a, b } => write!(f, "abstract({a}, {b})"),
            Compose::Crossover { program, variant } => write!(f, "crossover({program}#{variant})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    NoOp,
    IntegrateSubset,
    ComposeThenIntegrate,
    PruneSubset,
}

/// Integrate candidates, optionally compose once, then prune.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CuratorAction {
    pub integrate: Vec<String>,
    pub compose: Option<Compose>,
    pub prune: Vec<String>,
}

impl CuratorAction {
    pub fn kind(&self) -> ActionKind {
        match (self.integrate.is_empty(), &self.compose, self.prune.is_empty()) {
            (_, Some(_), _) => ActionKind::ComposeThenIntegrate,
            (false, None, _) => ActionKind::IntegrateSubset,
            (true, None, false) => ActionKind::PruneSubset,
            (true, None, true) => ActionKind::NoOp,
        }
    }

    /// The library this action produces.
    pub fn apply(&self, state: &CuratorState, ctx: &Context) -> Result<Library, OpsError> {
        let mut lib = state.current.clone();
        lib.candidate = false;
        for id in &self.integrate {
            let p = state.candidates.get(id).ok_or_else(|| OpsError::UnknownId(id.clone()))?;
            lib.push(p.clone())?;
            lib.provenance.insert(id.clone(), state.task_index);
        }
        if let Some(c) = &self.compose {
            let before: BTreeSet<String> = lib.ids().map(ToString::to_string).collect();
            lib = compose(&lib, c, ctx)?;
            let added: Vec<String> = lib.ids().filter(|id| !before.contains(*id)).map(ToString::to_string).collect();
            for id in added {
                lib.provenance.insert(id, state.task_index);
            }
        }
        if !self.prune.is_empty() {
            let keep: Vec<&str> = lib.ids().filter(|id| !self.prune.iter().any(|p| p == id)).collect();
            let mut kept = apply_selection(&lib, &keep)?;
            kept.provenance.retain(|id, _| keep.contains(&id.as_str()));
            lib = kept;
        }
        Ok(lib)
    }
}

impl fmt::Display for CuratorAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind() == ActionKind::NoOp {
            return f.write_str("no-op");
        }
        let mut parts = Vec::new();
        if !self.integrate.is_empty() {
            parts.push(alloc::format!("integrate {{{}}}", self.integrate.join(", ")));
        }
        if let Some(c) = &self.compose {
            parts.push(c.to_string());
        }
        if !self.prune.is_empty() {
            parts.push(alloc::format!("prune {{{}}}", self.prune.join(", ")));
        }
        f.write_str(&parts.join("; "))
    }
}

fn compose(lib: &Library, c: &Compose, ctx: &Context) -> Result<Library, OpsError> {
    match c {
        Compose::Abstract { a, b } => apply_abstraction(lib, a, b, ctx.operations.naming(a, b), &ctx.scope),
        Compose::Crossover { program, variant } => match ctx.operations.variants_of(program).get(*variant) {
            Some(VariantStep::Crossover { partner, slot, name }) => {
                apply_crossover(lib, program, partner, slot.as_deref(), name.as_deref(), &ctx.scope)
            }
            _ => Err(OpsError::UnknownVariant { program: program.clone(), variant: *variant }),
        },
    }
}

/// Compose steps applicable to `lib`: every anti-unifiable pair and every
/// declared crossover variant that splices cleanly.
fn compose_steps(lib: &Library, ctx: &Context) -> Vec<Compose> {
    let ids: Vec<&str> = lib.ids().collect();
    let mut out = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let c = Compose::Abstract { a: a.to_string(), b: b.to_string() };
            if compose(lib, &c, ctx).is_ok() {
                out.push(c);
            }
        }
    }
    for id in &ids {
        for (v, step) in ctx.operations.variants_of(id).iter().enumerate() {
            if matches!(step, VariantStep::Crossover { .. }) {
                let c = Compose::Crossover { program: id.to_string(), variant: v };
                if compose(lib, &c, ctx).map(|l| l.len() > lib.len()).unwrap_or(false) {
                    out.push(c);
                }
            }
        }
    }
    out
}

/// Keeps candidates that were used in an episode whose reward reached the
/// threshold. A threshold of 0 or below keeps everything.
pub fn relevance_filter(candidates: &Library, episode: &Episode, threshold: f64) -> Library {
    if threshold <= 0.0 {
        return candidates.clone();
    }
    let keep: Vec<&str> = candidates
        .ids()
        .filter(|id| episode.reward >= threshold && episode.usage.get(*id).copied().unwrap_or(0) > 0)
        .collect();
    apply_selection(candidates, &keep).expect("ids come from the library")
}

fn subsets<T: Clone>(items: &[T], max: usize) -> Vec<Vec<T>> {
    let mut out = alloc::vec![Vec::new()];
    for item in items {
        let grown: Vec<Vec<T>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut s = s.clone();
                s.push(item.clone());
                s
            })
            .collect();
        out.extend(grown);
    }
    out.sort_by_key(Vec::len);
    out
}

fn combinations(items: &[String], k: usize) -> Vec<Vec<String>> {
    subsets(items, k).into_iter().filter(|s| s.len() == k).collect()
}

/// Enumerates the curator's actions. Every candidate subset up to the
/// subset cap, each with or without one compose step; results over the
/// memory cap are paired with every prune restoring it. Single-program
/// prunes of the current library and the no-op are always present.
pub fn enumerate_actions(state: &CuratorState, ctx: &Context, cfg: &CuratorConfig) -> Result<Vec<CuratorAction>, CuratorError> {
    if let Some(id) = state.candidates.ids().find(|id| state.current.contains(id)) {
        return Err(CuratorError::Overlap(id.to_string()));
    }
    let cands: Vec<String> = state.candidates.ids().map(ToString::to_string).collect();
    let mut out: Vec<CuratorAction> = Vec::new();
    let mut push = |a: CuratorAction| {
        if !out.contains(&a) {
            out.push(a);
        }
    };
    push(CuratorAction::default());
    for integrate in subsets(&cands, cfg.subset_cap) {
        let base = CuratorAction { integrate: integrate.clone(), compose: None, prune: Vec::new() };
        let merged = base.apply(state, ctx)?;
        let mut variants = alloc::vec![(None, merged.clone())];
        for c in compose_steps(&merged, ctx) {
            let lib = compose(&merged, &c, ctx)?;
            variants.push((Some(c), lib));
        }
        for (compose, lib) in variants {
            match cfg.memory_cap {
                Some(cap) if lib.len() > cap => {
                    let ids: Vec<String> = lib.ids().map(ToString::to_string).collect();
                    for prune in combinations(&ids, lib.len() - cap) {
                        push(CuratorAction { integrate: integrate.clone(), compose: compose.clone(), prune });
                    }
                }
                _ => push(CuratorAction { integrate: integrate.clone(), compose, prune: Vec::new() }),
            }
        }
    }
    for id in state.current.ids() {
        push(CuratorAction { integrate: Vec::new(), compose: None, prune: alloc::vec![id.to_string()] });
    }
    Ok(out)
}

/// One evaluated action.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub action: CuratorAction,
    pub library: Library,
    pub report: EmpowermentReport,
}

/// Index of the best entry: highest value, then fewer programs, then the
/// lexically smaller canonical text; remaining ties go to the earliest.
pub fn select_best(scored: &[Scored]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scored.iter().enumerate() {
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let cur = &scored[b];
        let (v, w) = (s.report.value(), cur.report.value());
        let wins = if (v - w).abs() > TIE_EPSILON * v.abs().max(w.abs()).max(1.0) {
            v > w
        } else {
            (s.library.len(), s.library.canonical_text()) < (cur.library.len(), cur.library.canonical_text())
        };
        if wins {
            best = Some(i);
        }
    }
    best
}

/// Evaluates every enumerated action that respects the memory cap.
pub fn evaluate_actions(state: &CuratorState, ctx: &Context, cfg: &CuratorConfig) -> Result<Vec<Scored>, CuratorError> {
    let mut out = Vec::new();
    for action in enumerate_actions(state, ctx, cfg)? {
        let library = action.apply(state, ctx)?;
        if cfg.memory_cap.is_some_and(|cap| library.len() > cap) {
            continue;
        }
        let report = rep_emp(&library, ctx, cfg.horizon, cfg.estimator)
            .map_err(|source| CuratorError::Evaluation { action: action.to_string(), source })?;
        out.push(Scored { action, library, report });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurateOutcome {
    pub library: Library,
    pub report: EmpowermentReport,
    pub action: CuratorAction,
    pub actions_evaluated: usize,
}

/// Greedy one-step curator: the enumerated action whose library has the
/// highest representational empowerment.
pub fn curate_step(state: &CuratorState, ctx: &Context, cfg: &CuratorConfig) -> Result<CurateOutcome, CuratorError> {
    let mut scored = evaluate_actions(state, ctx, cfg)?;
    let n = scored.len();
    // the no-op always fits unless the current library already breaks the cap
    let Some(i) = select_best(&scored) else {
        let library = state.current.clone();
        let report = rep_emp(&library, ctx, cfg.horizon, cfg.estimator)
            .map_err(|source| CuratorError::Evaluation { action: "no-op".into(), source })?;
        return Ok(CurateOutcome { library, report, action: CuratorAction::default(), actions_evaluated: 0 });
    };
    let best = scored.swap_remove(i);
    Ok(CurateOutcome { library: best.library, report: best.report, action: best.action, actions_evaluated: n })
}
