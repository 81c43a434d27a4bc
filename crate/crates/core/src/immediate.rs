//! One-shot immediate snapshot from levels, and the reference IIS executor.
//!
//! The one-shot object uses one snapshot object per level `n, n-1, …, 1`.
//! At level `ℓ` a process registers its value, snapshots the level, and
//! returns the registered set if it has exactly `ℓ` members; otherwise it
//! moves down one level. At most `ℓ` processes ever register at level `ℓ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IisTrace, OrderedPartition, ProcSet, ProcessId, View};
use crate::sched::{Memory, Op, Process, Response};
use crate::schedule::PartitionSchedule;

/// Snapshot object key: the level.
pub type Level = u32;

/// What an invoker returns: the processes it saw, with their values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IsOutput {
    pub view: View,
    pub values: Vec<(ProcessId, u64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Phase {
    Register,
    Snapshot,
    Done,
}

/// One invoker of a one-shot immediate snapshot, descending levels explicitly.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IsProcess {
    me: ProcessId,
    value: u64,
    level: Level,
    phase: Phase,
    output: Option<IsOutput>,
}

impl IsProcess {
    pub fn level(&self) -> Level {
        self.level
    }
}

impl Process<Level, u64> for IsProcess {
    type Output = IsOutput;

    fn next_op(&mut self) -> Option<Op<Level, u64>> {
        match self.phase {
            Phase::Register => Some(Op::Write { object: self.level, value: self.value }),
            Phase::Snapshot => Some(Op::Snapshot { object: self.level }),
            Phase::Done => None,
        }
    }

    fn deliver(&mut self, response: Response<u64>) {
        match (self.phase, response) {
            (Phase::Register, Response::Written) => self.phase = Phase::Snapshot,
            (Phase::Snapshot, Response::Snapshot(cells)) => {
                let values: Vec<(ProcessId, u64)> = cells
                    .iter()
                    .enumerate()
                    .filter_map(|(j, c)| c.map(|v| (ProcessId::from_index(j), v)))
                    .collect();
                // The level bound makes `>` impossible; stopping there keeps a
                // violation visible to the checkers instead of descending past 1.
                if values.len() >= self.level as usize || self.level == 1 {
                    let view = values.iter().map(|(p, _)| *p).collect();
                    self.output = Some(IsOutput { view, values });
                    self.phase = Phase::Done;
                } else {
                    self.level -= 1;
                    self.phase = Phase::Register;
                }
            }
            (phase, response) => panic!("{}: response {response:?} in phase {phase:?}", self.me),
        }
    }

    fn output(&self) -> Option<IsOutput> {
        self.output.clone()
    }
}

/// A one-shot immediate snapshot object over `n` processes; hands out at most
/// one invoker per process.
#[derive(Debug)]
pub struct ImmediateSnapshot {
    n: usize,
    invoked: ProcSet,
}

impl ImmediateSnapshot {
    pub fn new(n: usize) -> Self {
        ImmediateSnapshot { n, invoked: ProcSet::EMPTY }
    }

    /// The state machine `actor` runs to invoke the object with `value`.
    pub fn invoke(&mut self, actor: ProcessId, value: u64) -> Result<IsProcess> {
        if actor.index() >= self.n {
            return Err(Error::InvalidInput(format!("{actor} beyond n={}", self.n)));
        }
        if self.invoked.contains(actor) {
            return Err(Error::ContractViolation(format!("{actor} invoked the immediate snapshot twice")));
        }
        self.invoked.insert(actor);
        Ok(IsProcess { me: actor, value, level: self.n as Level, phase: Phase::Register, output: None })
    }
}

/// Levels whose registrations exceed the level number.
pub fn level_bound_violations(memory: &Memory<Level, u64>) -> Vec<(Level, usize)> {
    memory
        .objects()
        .map(|(level, cells)| (*level, cells.iter().filter(|c| c.is_some()).count()))
        .filter(|(level, count)| *count > *level as usize)
        .collect()
}

/// The reference IIS model: the first `rounds` rounds of `schedule`, exactly
/// as scheduled. Fails if participant sets ever grow.
pub fn iis_run(n: usize, schedule: &PartitionSchedule, rounds: usize) -> Result<IisTrace> {
    IisTrace::new(n, schedule.rounds(n, rounds)?)
}

/// Same, from an explicit list of partitions.
pub fn iis_run_partitions(n: usize, partitions: Vec<OrderedPartition>) -> Result<IisTrace> {
    IisTrace::new(n, partitions)
}
