use std::collections::{BTreeMap, BTreeSet};

use asiis::analysis::check_is_axioms;
use asiis::immediate::{level_bound_violations, ImmediateSnapshot, IsOutput, IsProcess, Level};
use asiis::sched::{explore_states, run, Kernel, Op, Process, Response};
use asiis::schedule::{random_crashes, Schedule};
use asiis::{OrderedPartition, ProcSet, ProcessId};

/// A process slot that may sit out the object.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Slot {
    Idle,
    Active(IsProcess),
}

impl Process<Level, u64> for Slot {
    type Output = IsOutput;

    fn next_op(&mut self) -> Option<Op<Level, u64>> {
        match self {
            Slot::Idle => None,
            Slot::Active(p) => p.next_op(),
        }
    }

    fn deliver(&mut self, response: Response<u64>) {
        if let Slot::Active(p) = self {
            p.deliver(response)
        }
    }

    fn output(&self) -> Option<IsOutput> {
        match self {
            Slot::Idle => None,
            Slot::Active(p) => p.output(),
        }
    }
}

fn value_of(p: ProcessId) -> u64 {
    100 + p.get() as u64
}

fn slots(n: usize, participants: ProcSet) -> Vec<Slot> {
    let mut object = ImmediateSnapshot::new(n);
    ProcessId::all(n)
        .map(|p| {
            if participants.contains(p) {
                Slot::Active(object.invoke(p, value_of(p)).unwrap())
            } else {
                Slot::Idle
            }
        })
        .collect()
}

/// Ordered partitions of `members`, by choosing the first block and recursing.
fn all_ordered_partitions(members: ProcSet) -> Vec<Vec<ProcSet>> {
    if members.is_empty() {
        return vec![Vec::new()];
    }
    let ids: Vec<ProcessId> = members.iter().collect();
    let mut out = Vec::new();
    for mask in 1u64..(1 << ids.len()) {
        let first: ProcSet = ids.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, p)| *p).collect();
        for mut rest in all_ordered_partitions(members.difference(first)) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Ordered Bell numbers: a(k) = Σ_{i=1..k} C(k, i) a(k - i).
fn fubini(k: usize) -> usize {
    let mut a = vec![1usize];
    for m in 1..=k {
        let mut binom = 1;
        let mut sum = 0;
        for i in 1..=m {
            binom = binom * (m - i + 1) / i;
            sum += binom * a[m - i];
        }
        a.push(sum);
    }
    a[k]
}

fn check_outputs(participants: ProcSet, outputs: &[(ProcessId, IsOutput)]) -> OrderedPartition {
    let views: Vec<(ProcessId, ProcSet)> = outputs.iter().map(|(p, o)| (*p, o.view)).collect();
    let report = check_is_axioms(&views);
    assert!(report.passed(), "{views:?}: {report:?}");
    for (_, o) in outputs {
        assert!(o.view.is_subset(participants));
        for (q, v) in &o.values {
            assert_eq!(*v, value_of(*q));
        }
    }
    OrderedPartition::from_views(&views).unwrap()
}

#[test]
fn fubini_oracle() {
    assert_eq!((0..6).map(fubini).collect::<Vec<_>>(), vec![1, 1, 3, 13, 75, 541]);
    for k in 0..5 {
        assert_eq!(all_ordered_partitions(ProcSet::full(k)).len(), fubini(k));
    }
}

#[test]
fn exhaustive_views_are_exactly_the_ordered_partitions() {
    for n in 1..=3 {
        for bits in 1u64..(1 << n) {
            let participants = ProcSet::from_bits(bits);
            let mut reached = BTreeSet::new();
            let states = explore_states(Kernel::new(n), slots(n, participants), |kernel, procs, terminal| {
                assert!(level_bound_violations(kernel.memory()).is_empty());
                if terminal {
                    let outputs: Vec<(ProcessId, IsOutput)> = ProcessId::all(n)
                        .filter_map(|p| procs[p.index()].output().map(|o| (p, o)))
                        .collect();
                    assert_eq!(outputs.iter().map(|(p, _)| *p).collect::<ProcSet>(), participants);
                    reached.insert(check_outputs(participants, &outputs).blocks().to_vec());
                }
            });
            assert!(states > 0);
            let expected: BTreeSet<Vec<ProcSet>> = all_ordered_partitions(participants).into_iter().collect();
            assert_eq!(reached, expected, "n={n} participants {participants:?}");
            assert_eq!(reached.len(), fubini(participants.len()));
        }
    }
}

#[test]
fn partial_runs_never_break_the_axioms() {
    // Every intermediate state: finished processes' views already satisfy
    // the axioms among themselves.
    let n = 3;
    explore_states(Kernel::new(n), slots(n, ProcSet::full(n)), |_, procs, _| {
        let outputs: Vec<(ProcessId, IsOutput)> =
            ProcessId::all(n).filter_map(|p| procs[p.index()].output().map(|o| (p, o))).collect();
        check_outputs(ProcSet::full(n), &outputs);
    });
}

#[test]
fn fuzzed_schedules_with_crashes() {
    for seed in 0..400u64 {
        let n = 4 + (seed % 2) as usize;
        let crashes = random_crashes(n, seed, 0.3, 4 * n as u64);
        let schedule = Schedule::seeded(n, seed, crashes).unwrap();
        let mut kernel = Kernel::new(n);
        let mut procs = slots(n, ProcSet::full(n));
        let rec = run(&mut kernel, &mut procs, &schedule, 1000, |_, _| {});
        assert!(level_bound_violations(kernel.memory()).is_empty());
        let outputs: Vec<(ProcessId, IsOutput)> =
            ProcessId::all(n).filter_map(|p| rec.outputs[p.index()].clone().map(|o| (p, o))).collect();
        for p in schedule.correct().iter() {
            assert!(rec.outputs[p.index()].is_some(), "seed {seed}: correct {p} did not finish");
        }
        check_outputs(ProcSet::full(n), &outputs);
        rec.as_trace.validate().unwrap();
    }
}

#[test]
fn level_counts_match_participation() {
    // With k participants, exactly k processes register at level n.
    let n = 4;
    let participants = ProcSet::from_bits(0b1011);
    let schedule = Schedule::seeded(n, 7, BTreeMap::new()).unwrap();
    let mut kernel = Kernel::new(n);
    let mut procs = slots(n, participants);
    run(&mut kernel, &mut procs, &schedule, 1000, |_, _| {});
    let top = kernel.memory().cells(&(n as Level));
    assert_eq!(top.iter().filter(|c| c.is_some()).count(), participants.len());
}
