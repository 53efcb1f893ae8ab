//! Scenario files, reports and the command-line driver for representational
//! empowerment experiments built on `repemp-core`.

pub mod cli;
pub mod grid;
pub mod report;
pub mod run;
pub mod scenario;

pub use scenario::{Scenario, ScenarioError, TaskSpec};
