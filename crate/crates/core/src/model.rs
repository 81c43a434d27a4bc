//! Domain types shared by every other module: process identities and sets,
//! ordered partitions and IIS traces, atomic-snapshot traces, counter vectors,
//! round-levels and the status entries of the AS→IIS simulation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest system size supported; process sets are 64-bit masks.
pub const MAX_PROCESSES: usize = 64;

/// A process identity, 1-based as in `Π = {1, …, n}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(u32);

impl ProcessId {
    /// Builds a 1-based id, checking it against the system size.
    pub fn new(id: u32, n: usize) -> Result<Self> {
        if id == 0 || id as usize > n {
            return Err(Error::InvalidInput(format!("process id {id} outside 1..={n}")));
        }
        Ok(ProcessId(id))
    }

    /// From a 0-based index. Callers guarantee the index is in range.
    pub fn from_index(index: usize) -> Self {
        ProcessId(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    /// All ids of a system of size `n`.
    pub fn all(n: usize) -> impl Iterator<Item = ProcessId> {
        (0..n).map(ProcessId::from_index)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// A set of processes, stored as a bitmask over 0-based indices.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcSet(u64);

impl ProcSet {
    pub const EMPTY: ProcSet = ProcSet(0);

    pub fn full(n: usize) -> Self {
        if n >= 64 {
            ProcSet(u64::MAX)
        } else {
            ProcSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(p: ProcessId) -> Self {
        ProcSet(1 << p.index())
    }

    pub fn from_bits(bits: u64) -> Self {
        ProcSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, p: ProcessId) {
        self.0 |= 1 << p.index();
    }

    pub fn remove(&mut self, p: ProcessId) {
        self.0 &= !(1 << p.index());
    }

    pub fn contains(self, p: ProcessId) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: ProcSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// ⊆-comparable in either direction.
    pub fn comparable(self, other: ProcSet) -> bool {
        self.is_subset(other) || other.is_subset(self)
    }

    pub fn union(self, other: ProcSet) -> ProcSet {
        ProcSet(self.0 | other.0)
    }

    pub fn intersection(self, other: ProcSet) -> ProcSet {
        ProcSet(self.0 & other.0)
    }

    pub fn difference(self, other: ProcSet) -> ProcSet {
        ProcSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = ProcessId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(ProcessId::from_index(i))
        })
    }
}

impl FromIterator<ProcessId> for ProcSet {
    fn from_iter<I: IntoIterator<Item = ProcessId>>(iter: I) -> Self {
        let mut set = ProcSet::EMPTY;
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl fmt::Debug for ProcSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, p) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", p.get())?;
        }
        f.write_str("}")
    }
}

impl Serialize for ProcSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ProcSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<u32>::deserialize(deserializer)?;
        let mut set = ProcSet::EMPTY;
        for id in ids {
            if id == 0 || id as usize > MAX_PROCESSES {
                return Err(serde::de::Error::custom(format!("process id {id} out of range")));
            }
            set.insert(ProcessId(id));
        }
        Ok(set)
    }
}

/// The set of processes appearing in one immediate snapshot.
pub type View = ProcSet;

/// The blocks `S_r^1, …, S_r^m` of one IIS round, in invocation order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedPartition {
    blocks: Vec<ProcSet>,
}

impl OrderedPartition {
    /// Checks that blocks are non-empty and pairwise disjoint.
    pub fn new(blocks: Vec<ProcSet>) -> Result<Self> {
        let mut seen = ProcSet::EMPTY;
        for (k, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidInput(format!("block {k} is empty")));
            }
            if !block.intersection(seen).is_empty() {
                return Err(Error::InvalidInput(format!(
                    "block {k} overlaps earlier blocks on {:?}",
                    block.intersection(seen)
                )));
            }
            seen = seen.union(*block);
        }
        Ok(OrderedPartition { blocks })
    }

    pub fn blocks(&self) -> &[ProcSet] {
        &self.blocks
    }

    pub fn participants(&self) -> ProcSet {
        self.blocks.iter().fold(ProcSet::EMPTY, |acc, b| acc.union(*b))
    }

    /// `V_ir`: union of the blocks up to and including the one holding `p`.
    pub fn view_of(&self, p: ProcessId) -> Option<View> {
        let mut acc = ProcSet::EMPTY;
        for block in &self.blocks {
            acc = acc.union(*block);
            if block.contains(p) {
                return Some(acc);
            }
        }
        None
    }

    /// Views of every participant, in id order.
    pub fn views(&self) -> Vec<(ProcessId, View)> {
        let mut out = Vec::new();
        let mut acc = ProcSet::EMPTY;
        for block in &self.blocks {
            acc = acc.union(*block);
            out.extend(block.iter().map(|p| (p, acc)));
        }
        out.sort_by_key(|(p, _)| *p);
        out
    }

    /// Inverse of prefix-union: rebuild the partition from per-process views.
    /// Views must satisfy the IS axioms, which the caller checks first.
    pub fn from_views(views: &[(ProcessId, View)]) -> Result<Self> {
        let mut distinct: Vec<View> = views.iter().map(|(_, v)| *v).collect();
        distinct.sort_by_key(|v| (v.len(), v.bits()));
        distinct.dedup();
        let mut blocks = Vec::with_capacity(distinct.len());
        let mut prev = ProcSet::EMPTY;
        for v in distinct {
            if !prev.is_subset(v) {
                return Err(Error::InvalidInput(format!("views {prev:?} and {v:?} are not nested")));
            }
            blocks.push(v.difference(prev));
            prev = v;
        }
        let partition = OrderedPartition::new(blocks)?;
        for (p, v) in views {
            if partition.view_of(*p) != Some(*v) {
                return Err(Error::InvalidInput(format!("view {v:?} of {p} is not a prefix union")));
            }
        }
        Ok(partition)
    }
}

/// Ground truth of an IIS run: one ordered partition per round (round 1 first).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IisTrace {
    pub n: usize,
    pub rounds: Vec<OrderedPartition>,
}

impl IisTrace {
    /// Builds a trace, checking that participant sets are inclusion-decreasing.
    pub fn new(n: usize, rounds: Vec<OrderedPartition>) -> Result<Self> {
        check_system_size(n)?;
        let full = ProcSet::full(n);
        let mut prev = full;
        for (k, round) in rounds.iter().enumerate() {
            let part = round.participants();
            if part.is_empty() {
                return Err(Error::InvalidSchedule(format!("round {} has no participants", k + 1)));
            }
            if !part.is_subset(full) {
                return Err(Error::InvalidSchedule(format!("round {} names processes beyond n={n}", k + 1)));
            }
            if !part.is_subset(prev) {
                return Err(Error::InvalidSchedule(format!(
                    "round {} participants {:?} not contained in round {} participants {:?}",
                    k + 1,
                    part,
                    k,
                    prev
                )));
            }
            prev = part;
        }
        Ok(IisTrace { n, rounds })
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Round `r` (1-based).
    pub fn round(&self, r: usize) -> Option<&OrderedPartition> {
        r.checked_sub(1).and_then(|k| self.rounds.get(k))
    }

    /// `V_ir`, if `i` participates in round `r` (1-based).
    pub fn view(&self, i: ProcessId, r: usize) -> Option<View> {
        self.round(r).and_then(|p| p.view_of(i))
    }

    pub fn participants(&self, r: usize) -> ProcSet {
        self.round(r).map(|p| p.participants()).unwrap_or_default()
    }

    /// First `rounds` rounds.
    pub fn truncated(&self, rounds: usize) -> IisTrace {
        IisTrace { n: self.n, rounds: self.rounds[..rounds.min(self.rounds.len())].to_vec() }
    }
}

/// One atomic-snapshot primitive. `K` names the snapshot object the primitive
/// addresses; plain single-array traces use `()`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AsEvent<V, K = ()> {
    pub actor: ProcessId,
    pub object: K,
    pub kind: AsOp<V>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsOp<V> {
    Update(V),
    /// One entry per process; `None` is ⊥.
    Snapshot(Vec<Option<V>>),
}

/// A sequential history over single-writer registers plus atomic snapshot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsTrace<V, K = ()> {
    pub n: usize,
    pub events: Vec<AsEvent<V, K>>,
}

impl<V, K> AsTrace<V, K> {
    pub fn new(n: usize) -> Self {
        AsTrace { n, events: Vec::new() }
    }
}

impl<V: Clone + PartialEq + fmt::Debug, K: Ord + Clone + fmt::Debug> AsTrace<V, K> {
    /// Replays the events against fresh register arrays and checks that every
    /// snapshot returns exactly the latest preceding update of each process.
    pub fn validate(&self) -> Result<()> {
        let mut memory: BTreeMap<&K, Vec<Option<&V>>> = BTreeMap::new();
        for (k, event) in self.events.iter().enumerate() {
            if event.actor.index() >= self.n {
                return Err(Error::InvalidTrace(format!("event {k}: actor {} beyond n={}", event.actor, self.n)));
            }
            let cells = memory.entry(&event.object).or_insert_with(|| vec![None; self.n]);
            match &event.kind {
                AsOp::Update(v) => cells[event.actor.index()] = Some(v),
                AsOp::Snapshot(result) => {
                    if result.len() != self.n {
                        return Err(Error::InvalidTrace(format!(
                            "event {k}: snapshot has {} entries, expected {}",
                            result.len(),
                            self.n
                        )));
                    }
                    for (j, (got, want)) in result.iter().zip(cells.iter()).enumerate() {
                        if got.as_ref() != *want {
                            return Err(Error::InvalidTrace(format!(
                                "event {k}: snapshot by {} on {:?} reads {:?} for p{} but the register holds {:?}",
                                event.actor,
                                event.object,
                                got,
                                j + 1,
                                want
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-process snapshot counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CounterVector(pub Vec<u64>);

impl CounterVector {
    pub fn zeros(n: usize) -> Self {
        CounterVector(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, p: ProcessId) -> u64 {
        self.0[p.index()]
    }

    /// Pointwise `≤`.
    pub fn le(&self, other: &CounterVector) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn comparable(&self, other: &CounterVector) -> bool {
        self.le(other) || other.le(self)
    }

    /// Pointwise max into `self`. Lengths must agree.
    pub fn join(&mut self, other: &CounterVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = (*a).max(*b);
        }
    }
}

/// Pointwise maximum of equal-length counter vectors.
pub fn merge_counters(vs: &[CounterVector]) -> Result<CounterVector> {
    let first = vs.first().ok_or_else(|| Error::InvalidInput("no counter vectors to merge".into()))?;
    let mut out = first.clone();
    for v in &vs[1..] {
        if v.len() != out.len() {
            return Err(Error::InvalidInput(format!(
                "counter vector length {} differs from {}",
                v.len(),
                out.len()
            )));
        }
        out.join(v);
    }
    Ok(out)
}

/// Position of a simulated process inside the level construction of one round.
/// Levels descend from `n` to 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoundLevel {
    pub round: u64,
    pub level: u32,
}

impl RoundLevel {
    pub fn new(round: u64, level: u32) -> Self {
        RoundLevel { round, level }
    }

    /// `(1, n)`: the top level of the first round.
    pub fn start(n: usize) -> Self {
        RoundLevel { round: 1, level: n as u32 }
    }

    /// Progress order: lower round first, then higher level first.
    pub fn progress_cmp(&self, other: &RoundLevel) -> Ordering {
        self.round.cmp(&other.round).then(other.level.cmp(&self.level))
    }
}

impl fmt::Display for RoundLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.round, self.level)
    }
}

/// Total order on (process, round-level): lower round first; in equal rounds
/// the higher level first; then the smaller `(id + round) mod n` first, which
/// rotates priority among processes from round to round.
pub fn compare_round_level(a: (ProcessId, RoundLevel), b: (ProcessId, RoundLevel), n: usize) -> Ordering {
    let (pa, ra) = a;
    let (pb, rb) = b;
    let rotate = |p: ProcessId| (p.get() as u64 + ra.round) % n as u64;
    ra.progress_cmp(&rb).then_with(|| rotate(pa).cmp(&rotate(pb))).then_with(|| pa.cmp(&pb))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Run,
    Blocked,
}

/// One record of the per-(simulator, simulated process) status log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatusEntry {
    pub disposition: Disposition,
    pub at: RoundLevel,
}

impl StatusEntry {
    pub fn run(round: u64, level: u32) -> Self {
        StatusEntry { disposition: Disposition::Run, at: RoundLevel::new(round, level) }
    }

    pub fn blocked(round: u64, level: u32) -> Self {
        StatusEntry { disposition: Disposition::Blocked, at: RoundLevel::new(round, level) }
    }
}

pub(crate) fn check_system_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_PROCESSES {
        return Err(Error::InvalidInput(format!("system size {n} outside 1..={MAX_PROCESSES}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: u32) -> ProcessId {
        ProcessId(id)
    }

    fn set(ids: &[u32]) -> ProcSet {
        ids.iter().map(|&i| p(i)).collect()
    }

    #[test]
    fn round_level_order_examples() {
        let a = (p(1), RoundLevel::new(2, 3));
        assert_eq!(compare_round_level(a, (p(2), RoundLevel::new(3, 1)), 3), Ordering::Less);
        assert_eq!(compare_round_level(a, (p(2), RoundLevel::new(2, 2)), 3), Ordering::Less);
        // (1+2) mod 3 = 0 < (2+2) mod 3 = 1
        let tie = RoundLevel::new(2, 2);
        assert_eq!(compare_round_level((p(1), tie), (p(2), tie), 3), Ordering::Less);
        // (3+2) mod 3 = 2 > 0
        assert_eq!(compare_round_level((p(3), tie), (p(1), tie), 3), Ordering::Greater);
    }

    #[test]
    fn merge_examples() {
        let m = merge_counters(&[CounterVector(vec![1, 0, 0]), CounterVector(vec![0, 2, 0])]).unwrap();
        assert_eq!(m, CounterVector(vec![1, 2, 0]));
        assert_eq!(merge_counters(&[CounterVector(vec![0, 0, 0])]).unwrap(), CounterVector(vec![0, 0, 0]));
        let v = CounterVector(vec![3, 1, 2]);
        assert_eq!(merge_counters(&[v.clone(), v.clone()]).unwrap(), v);
        assert!(matches!(
            merge_counters(&[CounterVector(vec![1]), CounterVector(vec![1, 2])]),
            Err(Error::InvalidInput(_))
        ));
        assert!(merge_counters(&[]).is_err());
    }

    #[test]
    fn partition_views_are_prefix_unions() {
        let part = OrderedPartition::new(vec![set(&[1]), set(&[2, 3])]).unwrap();
        assert_eq!(part.view_of(p(1)), Some(set(&[1])));
        assert_eq!(part.view_of(p(2)), Some(set(&[1, 2, 3])));
        assert_eq!(part.view_of(p(3)), Some(set(&[1, 2, 3])));
        let back = OrderedPartition::from_views(&part.views()).unwrap();
        assert_eq!(back, part);
    }

    #[test]
    fn overlapping_blocks_rejected() {
        assert!(OrderedPartition::new(vec![set(&[1, 2]), set(&[2])]).is_err());
        assert!(OrderedPartition::new(vec![ProcSet::EMPTY]).is_err());
    }

    #[test]
    fn trace_requires_nested_participants() {
        let a = OrderedPartition::new(vec![set(&[1])]).unwrap();
        let b = OrderedPartition::new(vec![set(&[1, 2])]).unwrap();
        assert!(IisTrace::new(2, vec![b.clone(), a.clone()]).is_ok());
        assert!(matches!(IisTrace::new(2, vec![a, b]), Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn replay_detects_stale_snapshot() {
        let mut trace: AsTrace<u64> = AsTrace::new(2);
        trace.events.push(AsEvent { actor: p(1), object: (), kind: AsOp::Update(7) });
        trace.events.push(AsEvent { actor: p(2), object: (), kind: AsOp::Snapshot(vec![Some(7), None]) });
        assert!(trace.validate().is_ok());
        trace.events.push(AsEvent { actor: p(1), object: (), kind: AsOp::Update(8) });
        trace.events.push(AsEvent { actor: p(2), object: (), kind: AsOp::Snapshot(vec![Some(7), None]) });
        assert!(trace.validate().is_err());
    }

    #[test]
    fn procset_iteration_order() {
        let s = set(&[3, 1, 5]);
        assert_eq!(s.iter().map(|p| p.get()).collect::<Vec<_>>(), vec![1, 3, 5]);
        assert_eq!(format!("{s:?}"), "{1,3,5}");
        assert_eq!(s.len(), 3);
    }
}
