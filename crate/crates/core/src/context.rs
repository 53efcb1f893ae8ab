use crate::dsl::{ChordTable, Equivalence, Evaluator, Fingerprinter, ProbeSet, Scope, DEFAULT_BUDGET};
use crate::ops::OperationTable;

/// Default bound on the number of operation sequences a channel may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Everything a scenario declares that the algorithms read: the program
/// scope, chord tables, probes, the equivalence table and operation tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub scope: Scope,
    pub chords: ChordTable,
    pub probes: ProbeSet,
    pub equivalence: Equivalence,
    pub operations: OperationTable,
    /// Step budget per program evaluation.
    pub budget: u64,
    pub enumeration_cap: u64,
}

impl Context {
    pub fn new(scope: Scope, probes: ProbeSet) -> Context {
        Context {
            scope,
            chords: ChordTable::standard(),
            probes,
            equivalence: Equivalence::default(),
            operations: OperationTable::default(),
            budget: DEFAULT_BUDGET,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator::new(&self.scope, &self.chords)
    }

    pub fn fingerprinter(&self) -> Fingerprinter<'_> {
        Fingerprinter::new(self.evaluator(), &self.probes, self.equivalence, self.budget)
    }
}
