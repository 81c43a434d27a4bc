//! Simulations between the atomic-snapshot shared-memory model (AS) and the
//! iterated immediate snapshot model (IIS), in both directions, running on a
//! deterministic crash-injecting scheduler.
//!
//! * [`sched`] executes per-process state machines one shared-memory
//!   primitive at a time and records the resulting AS trace.
//! * [`immediate`] holds the one-shot immediate snapshot object built from
//!   levels, and the reference IIS executor.
//! * [`agreement`] provides commit-adopt and the resolver agreement protocol.
//! * [`as_to_iis`] simulates IIS on top of AS; [`iis_to_as`] simulates AS on
//!   top of IIS, with and without helping.
//! * [`analysis`] computes awareness, strongly-correct and participating sets
//!   and checks immediate-snapshot axioms.

pub mod agreement;
pub mod analysis;
pub mod as_to_iis;
pub mod error;
pub mod iis_to_as;
pub mod immediate;
pub mod model;
pub mod schedule;
pub mod sched;

pub use error::{Error, Result};
pub use model::{
    compare_round_level, merge_counters, AsEvent, AsOp, AsTrace, CounterVector, Disposition, IisTrace,
    OrderedPartition, ProcSet, ProcessId, RoundLevel, StatusEntry, View,
};
