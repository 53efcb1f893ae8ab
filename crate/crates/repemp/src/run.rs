//! The task loop: solve, filter acquired programs by relevance, curate.

use serde::Serialize;

use repemp_core::curator::{curate_step, relevance_filter, ActionKind, CuratorAction, CuratorConfig, CuratorState};
use repemp_core::dsl::Library;
use repemp_core::empowerment::{EmpowermentReport, Estimator};
use repemp_core::executor::{use_improve, CycleRecord, Episode};

use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub task_index: u32,
    pub task: String,
    /// `None` if the task failed before an episode was produced.
    pub episode: Option<Episode>,
    pub cycles: Vec<CycleRecord>,
    pub offered: Vec<String>,
    pub relevant: Vec<String>,
    pub action: Option<CuratorAction>,
    pub action_label: Option<String>,
    pub action_kind: Option<ActionKind>,
    pub report: Option<EmpowermentReport>,
    /// The current library after this step.
    pub library: Library,
    pub actions_evaluated: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Statistics {
    pub tasks: usize,
    pub failed_tasks: usize,
    pub solved_tasks: usize,
    pub curator_actions_evaluated: usize,
    /// Operation sequences enumerated for the chosen libraries' channels.
    pub channel_inputs: usize,
    pub executor_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub horizon: u32,
    pub estimator: Estimator,
    pub initial_library: Library,
    pub steps: Vec<StepReport>,
    pub final_library: Library,
    pub statistics: Statistics,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.statistics.failed_tasks > 0
    }
}

fn ids(lib: &Library) -> Vec<String> {
    lib.ids().map(ToString::to_string).collect()
}

/// Runs every task in order. Failures are recorded on their step and the
/// library is left unchanged for that step.
pub fn run(scenario: &Scenario, cfg: &CuratorConfig) -> RunReport {
    let ctx = &scenario.context;
    let initial = scenario.initial.as_deref().and_then(|id| scenario.library(id)).unwrap_or_default();
    let mut current = initial.clone();
    let mut steps = Vec::new();
    let mut stats = Statistics { tasks: scenario.tasks.len(), ..Statistics::default() };

    for (i, spec) in scenario.tasks.iter().enumerate() {
        let task_index = i as u32 + 1;
        let fresh: Vec<String> = spec.candidates.iter().filter(|c| !current.contains(c)).cloned().collect();
        let mut offered = scenario.program_library(&fresh);
        offered.candidate = true;
        let mut step = StepReport {
            task_index,
            task: spec.task.name.clone(),
            episode: None,
            cycles: Vec::new(),
            offered: fresh,
            relevant: Vec::new(),
            action: None,
            action_label: None,
            action_kind: None,
            report: None,
            library: current.clone(),
            actions_evaluated: 0,
            error: None,
        };

        let mut working = current.clone();
        for p in offered.programs() {
            working.push(p.clone()).expect("candidates are disjoint from the library");
        }
        let used = match use_improve(&working, &spec.task, ctx) {
            Ok(u) => u,
            Err(e) => {
                step.error = Some(format!("executor: {e}"));
                stats.failed_tasks += 1;
                steps.push(step);
                continue;
            }
        };
        stats.executor_actions += used.episode.action_count;
        if used.episode.solved() {
            stats.solved_tasks += 1;
        }
        let relevant = relevance_filter(&offered, &used.episode, cfg.relevance_threshold);
        step.relevant = ids(&relevant);
        step.cycles = used.cycles;
        step.episode = Some(used.episode);

        let state = CuratorState { current: current.clone(), candidates: relevant, task_index };
        match curate_step(&state, ctx, cfg) {
            Ok(out) => {
                stats.curator_actions_evaluated += out.actions_evaluated;
                stats.channel_inputs += out.report.inputs + out.report.dropped;
                step.action_label = Some(out.action.to_string());
                step.action_kind = Some(out.action.kind());
                step.action = Some(out.action);
                step.report = Some(out.report);
                step.actions_evaluated = out.actions_evaluated;
                current = out.library;
                step.library = current.clone();
            }
            Err(e) => {
                step.error = Some(format!("curator: {e}"));
                stats.failed_tasks += 1;
            }
        }
        steps.push(step);
    }

    RunReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        horizon: cfg.horizon,
        estimator: cfg.estimator,
        initial_library: initial,
        steps,
        final_library: current,
        statistics: stats,
    }
}
