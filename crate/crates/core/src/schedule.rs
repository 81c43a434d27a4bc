//! Schedules: which process the scheduler activates next (AS side), which
//! ordered partition each round uses (IIS side), and when processes crash.
//!
//! A seeded schedule is fully determined by its seed; the same seed always
//! yields the same stream.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_system_size, OrderedPartition, ProcSet, ProcessId};

/// Where activations come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Steps {
    /// An explicit finite list.
    Script(Vec<ProcessId>),
    /// An infinite pseudo-random stream in which no live process waits more
    /// than `max_gap` steps between activations.
    Seeded { seed: u64, max_gap: u64 },
}

/// Activation order plus crash points. `crashes[p] = c` means `p` takes no
/// step at any schedule index `≥ c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub n: usize,
    pub steps: Steps,
    pub crashes: BTreeMap<ProcessId, u64>,
}

impl Schedule {
    pub fn script(n: usize, steps: Vec<ProcessId>, crashes: BTreeMap<ProcessId, u64>) -> Result<Self> {
        check_system_size(n)?;
        for (k, p) in steps.iter().enumerate() {
            if p.index() >= n {
                return Err(Error::InvalidSchedule(format!("step {k} names {p} beyond n={n}")));
            }
            if let Some(&c) = crashes.get(p) {
                if k as u64 >= c {
                    return Err(Error::InvalidSchedule(format!("step {k} activates {p} after its crash at {c}")));
                }
            }
        }
        check_crashes(n, &crashes)?;
        Ok(Schedule { n, steps: Steps::Script(steps), crashes })
    }

    /// A fair seeded stream with the default gap bound of `2n`.
    pub fn seeded(n: usize, seed: u64, crashes: BTreeMap<ProcessId, u64>) -> Result<Self> {
        check_system_size(n)?;
        check_crashes(n, &crashes)?;
        Ok(Schedule { n, steps: Steps::Seeded { seed, max_gap: 2 * n as u64 }, crashes })
    }

    pub fn crash_step(&self, p: ProcessId) -> Option<u64> {
        self.crashes.get(&p).copied()
    }

    pub fn is_crashed_at(&self, p: ProcessId, step: u64) -> bool {
        self.crash_step(p).is_some_and(|c| step >= c)
    }

    /// Processes that never crash.
    pub fn correct(&self) -> ProcSet {
        ProcessId::all(self.n).filter(|p| !self.crashes.contains_key(p)).collect()
    }

    pub fn stream(&self) -> ScheduleStream<'_> {
        let rng = match &self.steps {
            Steps::Seeded { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            Steps::Script(_) => None,
        };
        ScheduleStream { schedule: self, index: 0, rng, last_seen: vec![0; self.n] }
    }
}

fn check_crashes(n: usize, crashes: &BTreeMap<ProcessId, u64>) -> Result<()> {
    if let Some(p) = crashes.keys().find(|p| p.index() >= n) {
        return Err(Error::InvalidSchedule(format!("crash names {p} beyond n={n}")));
    }
    Ok(())
}

/// Iterator over the activations of a [`Schedule`].
pub struct ScheduleStream<'a> {
    schedule: &'a Schedule,
    index: u64,
    rng: Option<ChaCha8Rng>,
    last_seen: Vec<u64>,
}

impl Iterator for ScheduleStream<'_> {
    type Item = ProcessId;

    fn next(&mut self) -> Option<ProcessId> {
        let t = self.index;
        let pick = match (&self.schedule.steps, self.rng.as_mut()) {
            (Steps::Script(steps), _) => *steps.get(t as usize)?,
            (Steps::Seeded { max_gap, .. }, Some(rng)) => {
                let live: Vec<ProcessId> =
                    ProcessId::all(self.schedule.n).filter(|p| !self.schedule.is_crashed_at(*p, t)).collect();
                if live.is_empty() {
                    return None;
                }
                let starved = live
                    .iter()
                    .copied()
                    .filter(|p| t - self.last_seen[p.index()] >= *max_gap)
                    .min_by_key(|p| (self.last_seen[p.index()], *p));
                match starved {
                    Some(p) => p,
                    None => live[rng.gen_range(0..live.len())],
                }
            }
            (Steps::Seeded { .. }, None) => unreachable!("seeded stream always carries a generator"),
        };
        self.index += 1;
        self.last_seen[pick.index()] = self.index;
        Some(pick)
    }
}

/// Crash each process independently with probability `prob`, at a uniform
/// step in `[0, before)`. At least one process always survives.
pub fn random_crashes(n: usize, seed: u64, prob: f64, before: u64) -> BTreeMap<ProcessId, u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut crashes = BTreeMap::new();
    for p in ProcessId::all(n) {
        if rng.gen_bool(prob) {
            crashes.insert(p, rng.gen_range(0..before.max(1)));
        }
    }
    if crashes.len() == n {
        let keep = ProcessId::from_index(rng.gen_range(0..n));
        crashes.remove(&keep);
    }
    crashes
}

/// Source of per-round ordered partitions for the IIS side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSchedule {
    /// Explicit rounds; when `repeat` is set the listed rounds cycle forever.
    Script { rounds: Vec<OrderedPartition>, repeat: bool },
    /// A random ordered partition per round; `departures[p] = d` removes `p`
    /// from round `d` on (1-based). Someone must remain.
    Seeded { seed: u64, departures: BTreeMap<ProcessId, u64> },
}

impl PartitionSchedule {
    /// The first `count` rounds (fewer if a non-repeating script is shorter).
    pub fn rounds(&self, n: usize, count: usize) -> Result<Vec<OrderedPartition>> {
        check_system_size(n)?;
        match self {
            PartitionSchedule::Script { rounds, repeat } => {
                if rounds.is_empty() {
                    return Ok(Vec::new());
                }
                let take = if *repeat { count } else { count.min(rounds.len()) };
                Ok(rounds.iter().cycle().take(take).cloned().collect())
            }
            PartitionSchedule::Seeded { seed, departures } => {
                check_crashes(n, departures)?;
                if departures.len() == n && departures.values().all(|&d| d <= 1) {
                    return Err(Error::InvalidSchedule("every process departs before round 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut out = Vec::with_capacity(count);
                for r in 1..=count as u64 {
                    let alive: Vec<ProcessId> =
                        ProcessId::all(n).filter(|p| departures.get(p).is_none_or(|&d| r < d)).collect();
                    if alive.is_empty() {
                        break;
                    }
                    out.push(random_partition(&mut rng, &alive));
                }
                Ok(out)
            }
        }
    }
}

/// Shuffle the members, then cut between neighbours with probability 1/2.
pub fn random_partition<R: Rng>(rng: &mut R, members: &[ProcessId]) -> OrderedPartition {
    let mut order = members.to_vec();
    order.shuffle(rng);
    let mut blocks = Vec::new();
    let mut current = ProcSet::EMPTY;
    for (k, p) in order.iter().enumerate() {
        if k > 0 && rng.gen_bool(0.5) {
            blocks.push(current);
            current = ProcSet::EMPTY;
        }
        current.insert(*p);
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    OrderedPartition::new(blocks).expect("shuffled members form disjoint blocks")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: u32) -> ProcessId {
        ProcessId::new(i, 8).unwrap()
    }

    #[test]
    fn seeded_stream_is_deterministic_and_fair() {
        let s = Schedule::seeded(4, 7, BTreeMap::new()).unwrap();
        let a: Vec<_> = s.stream().take(500).collect();
        let b: Vec<_> = s.stream().take(500).collect();
        assert_eq!(a, b);
        for q in ProcessId::all(4) {
            let idx: Vec<usize> = a.iter().enumerate().filter(|(_, x)| **x == q).map(|(k, _)| k).collect();
            assert!(idx[0] < 12);
            assert!(idx.windows(2).all(|w| w[1] - w[0] <= 12), "{q} starved");
        }
    }

    #[test]
    fn crashed_process_never_scheduled_after_crash() {
        let crashes = BTreeMap::from([(p(2), 10)]);
        let s = Schedule::seeded(3, 1, crashes).unwrap();
        for (t, q) in s.stream().take(200).enumerate() {
            assert!(!(q == p(2) && t >= 10));
        }
    }

    #[test]
    fn script_rejects_step_after_crash() {
        let err = Schedule::script(2, vec![p(1), p(2), p(1)], BTreeMap::from([(p(1), 1)]));
        assert!(matches!(err, Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn random_crashes_leave_a_survivor() {
        for seed in 0..50 {
            let c = random_crashes(3, seed, 1.0, 100);
            assert_eq!(c.len(), 2);
        }
    }

    #[test]
    fn seeded_partitions_are_nested() {
        let sched = PartitionSchedule::Seeded { seed: 3, departures: random_crashes(5, 3, 0.5, 100) };
        let rounds = sched.rounds(5, 300).unwrap();
        let trace = crate::model::IisTrace::new(5, rounds).unwrap();
        assert_eq!(trace.len(), 300);
        let gone = BTreeMap::from([(p(1), 1), (p(2), 1)]);
        let none = PartitionSchedule::Seeded { seed: 0, departures: gone };
        assert!(matches!(none.rounds(2, 3), Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn repeating_script_cycles() {
        let a = OrderedPartition::new(vec![ProcSet::singleton(p(1))]).unwrap();
        let sched = PartitionSchedule::Script { rounds: vec![a.clone()], repeat: true };
        assert_eq!(sched.rounds(1, 4).unwrap().len(), 4);
        let once = PartitionSchedule::Script { rounds: vec![a], repeat: false };
        assert_eq!(once.rounds(1, 4).unwrap().len(), 1);
    }
}
