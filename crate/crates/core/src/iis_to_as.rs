//! Simulating an atomic-snapshot run inside an IIS run.
//!
//! Each process keeps a counter vector `C_i` (its own entry starts at 1) and
//! the last snapshot it output, `SI_i`. Every round it writes `(C_i, SI_i)`
//! to the round's immediate snapshot and looks at the pairs it sees. It
//! outputs a new simulated snapshot when every visible counter vector is the
//! same, or, with helping enabled, when some visible `SI_j` already carries
//! `i`'s current counter. Outputting bumps `C_i[i]`, which stands for the
//! next simulated update. Finally `C_i` absorbs the pointwise max of the view.
//!
//! Without helping, a process that keeps seeing two different vectors never
//! outputs even though it is strongly correct.

use serde::{Deserialize, Serialize};

use crate::analysis::{active_in_every_window, participation_set, strongly_correct_window, WindowParams};
use crate::error::{Error, Result};
use crate::model::{AsEvent, AsOp, AsTrace, CounterVector, IisTrace, ProcSet, ProcessId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HelpMode {
    #[default]
    Helping,
    /// Identical vectors only.
    Baseline,
}

/// Which disjunct wins when both could fire with different vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    #[default]
    IdenticalFirst,
    HelperFirst,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alg2State {
    pub me: ProcessId,
    pub c: CounterVector,
    pub si: CounterVector,
    pub round: usize,
}

impl Alg2State {
    pub fn new(me: ProcessId, n: usize) -> Self {
        let mut c = CounterVector::zeros(n);
        c.0[me.index()] = 1;
        Alg2State { me, c, si: CounterVector::zeros(n), round: 0 }
    }

    /// What this process writes in its next round.
    pub fn pair(&self) -> Alg2Pair {
        Alg2Pair { from: self.me, c: self.c.clone(), si: self.si.clone() }
    }
}

/// One `(C_j, SI_j)` entry of a round view.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alg2Pair {
    pub from: ProcessId,
    pub c: CounterVector,
    pub si: CounterVector,
}

/// One simulated snapshot.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SnapshotOutput {
    pub round: usize,
    pub by: ProcessId,
    pub vector: CounterVector,
    pub helped: bool,
}

/// Largest vector under pointwise order; `None` if some pair is incomparable.
fn containment_max<'a>(vs: impl Iterator<Item = &'a CounterVector>) -> Option<&'a CounterVector> {
    let vs: Vec<&CounterVector> = vs.collect();
    vs.iter().copied().find(|m| vs.iter().all(|v| v.le(m)))
}

/// One iteration of the loop for `state.me`, given the pairs of its round
/// view. Returns the snapshot output this round, if any, and whether it came
/// from helping.
pub fn alg2_round(
    state: &mut Alg2State,
    view: &[Alg2Pair],
    mode: HelpMode,
    preference: Preference,
) -> Result<Option<(CounterVector, bool)>> {
    let me = state.me;
    if !view.iter().any(|p| p.from == me) {
        return Err(Error::ContractViolation(format!("{me}'s view misses its own pair")));
    }
    state.round += 1;
    let mine = state.c.get(me);
    let identical = view.iter().all(|p| p.c == view[0].c).then(|| view[0].c.clone());
    let helper = match mode {
        HelpMode::Baseline => None,
        HelpMode::Helping => {
            let helpers: Vec<&CounterVector> = view.iter().map(|p| &p.si).filter(|si| si.get(me) == mine).collect();
            if helpers.is_empty() {
                None
            } else {
                let max = containment_max(helpers.into_iter()).ok_or_else(|| {
                    Error::Invariant(format!("{me} sees incomparable helper snapshots in round {}", state.round))
                })?;
                Some(max.clone())
            }
        }
    };
    let chosen = match (preference, identical, helper) {
        (Preference::IdenticalFirst, Some(u), _) | (Preference::HelperFirst, Some(u), None) => Some((u, false)),
        (_, _, Some(h)) => Some((h, true)),
        (_, None, None) => None,
    };
    if let Some((u, _)) = &chosen {
        state.si = u.clone();
        state.c.0[me.index()] += 1;
    }
    for p in view {
        state.c.join(&p.c);
    }
    Ok(chosen)
}

/// The full simulation over a finite IIS trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alg2Record {
    pub n: usize,
    pub mode: HelpMode,
    /// In round order, then process order.
    pub outputs: Vec<SnapshotOutput>,
    pub final_states: Vec<Alg2State>,
}

impl Alg2Record {
    pub fn output_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.n];
        for o in &self.outputs {
            counts[o.by.index()] += 1;
        }
        counts
    }

    /// 1-based rounds in which each process output, ascending.
    pub fn output_rounds(&self) -> Vec<Vec<usize>> {
        let mut rounds = vec![Vec::new(); self.n];
        for o in &self.outputs {
            rounds[o.by.index()].push(o.round);
        }
        rounds
    }
}

/// Runs every process of `trace` through its rounds. Within a round each
/// process sees the pairs its view's members wrote at the start of it.
pub fn simulate(trace: &IisTrace, mode: HelpMode, preference: Preference) -> Result<Alg2Record> {
    let n = trace.n;
    let mut states: Vec<Alg2State> = ProcessId::all(n).map(|p| Alg2State::new(p, n)).collect();
    let mut outputs = Vec::new();
    for (k, partition) in trace.rounds.iter().enumerate() {
        let written: Vec<Alg2Pair> = states.iter().map(Alg2State::pair).collect();
        let mut seen = Vec::with_capacity(n);
        for (i, v) in partition.views() {
            seen.clear();
            seen.extend(v.iter().map(|j| written[j.index()].clone()));
            let before = states[i.index()].c.clone();
            if let Some((vector, helped)) = alg2_round(&mut states[i.index()], &seen, mode, preference)? {
                outputs.push(SnapshotOutput { round: k + 1, by: i, vector, helped });
            }
            if !before.le(&states[i.index()].c) {
                return Err(Error::Invariant(format!("{i}'s counter vector decreased in round {}", k + 1)));
            }
        }
    }
    outputs.sort_by_key(|o| (o.round, o.by));
    Ok(Alg2Record { n, mode, outputs, final_states: states })
}

/// Orders the outputs by containment and interleaves the updates they imply,
/// giving a sequential AS history. Values are counters; 0 reads as ⊥.
pub fn extract_as_trace(n: usize, outputs: &[SnapshotOutput]) -> Result<AsTrace<u64>> {
    let mut order: Vec<&SnapshotOutput> = outputs.iter().collect();
    order.sort_by_key(|o| (o.vector.0.iter().sum::<u64>(), o.round, o.by));
    let mut trace = AsTrace::new(n);
    let mut prev = CounterVector::zeros(n);
    for o in order {
        if o.vector.len() != n {
            return Err(Error::InvalidTrace(format!("output by {} has {} entries", o.by, o.vector.len())));
        }
        if !prev.le(&o.vector) {
            return Err(Error::Invariant(format!(
                "outputs {:?} and {:?} (by {} in round {}) are not related by containment",
                prev.0, o.vector.0, o.by, o.round
            )));
        }
        for (j, (&was, &now)) in prev.0.iter().zip(&o.vector.0).enumerate() {
            if now != was {
                if now != was + 1 {
                    return Err(Error::Invariant(format!(
                        "p{} jumps from {was} to {now} before the snapshot by {} in round {}",
                        j + 1,
                        o.by,
                        o.round
                    )));
                }
                trace.events.push(AsEvent { actor: ProcessId::from_index(j), object: (), kind: AsOp::Update(now) });
            }
        }
        let cells = o.vector.0.iter().map(|&c| (c > 0).then_some(c)).collect();
        trace.events.push(AsEvent { actor: o.by, object: (), kind: AsOp::Snapshot(cells) });
        prev = o.vector.clone();
    }
    Ok(trace)
}

/// Processes that ever performed a simulated update.
pub fn simulated_participants(outputs: &[SnapshotOutput]) -> ProcSet {
    outputs
        .iter()
        .flat_map(|o| o.vector.0.iter().enumerate().filter(|(_, &c)| c > 0).map(|(j, _)| ProcessId::from_index(j)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationMismatch {
    pub process: ProcessId,
    pub iis: ProcSet,
    pub simulated: ProcSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub rounds: usize,
    /// Last round with a process that later departs.
    pub settled: usize,
    pub strongly_correct: ProcSet,
    /// Processes with an output in every window.
    pub outputting: ProcSet,
    pub sets_equal: bool,
    /// First containment, unit-increment or replay failure.
    pub trace_error: Option<String>,
    pub participation_mismatches: Vec<ParticipationMismatch>,
    pub output_counts: Vec<u64>,
}

impl Theorem2Report {
    pub fn passed(&self) -> bool {
        self.sets_equal && self.trace_error.is_none()
    }
}

/// Finite-window comparison of strongly-correct IIS processes with the
/// processes that keep completing simulated snapshots, plus the AS-trace
/// checks and per-process participation sets.
///
/// Departures are permanent, so the burn-in counts from the last round in
/// which a departing process still took part.
pub fn check_theorem2(trace: &IisTrace, record: &Alg2Record, params: &WindowParams) -> Result<Theorem2Report> {
    let last = trace.participants(trace.len());
    let settled = (1..=trace.len()).rev().find(|&r| trace.participants(r) != last).unwrap_or(0);
    let shifted = WindowParams { burn_in: params.burn_in + settled, width: params.width };
    let strongly_correct = strongly_correct_window(trace, &shifted)?;
    let outputting = active_in_every_window(&record.output_rounds(), trace.len(), &shifted)?;
    let trace_error = match extract_as_trace(record.n, &record.outputs).and_then(|t| t.validate()) {
        Ok(()) => None,
        Err(e) => Some(e.to_string()),
    };
    let simulated = simulated_participants(&record.outputs);
    let participation_mismatches = strongly_correct
        .iter()
        .filter_map(|i| {
            let iis = participation_set(trace, i);
            (iis != simulated).then_some(ParticipationMismatch { process: i, iis, simulated })
        })
        .collect();
    Ok(Theorem2Report {
        rounds: trace.len(),
        settled,
        strongly_correct,
        outputting,
        sets_equal: strongly_correct == outputting,
        trace_error,
        participation_mismatches,
        output_counts: record.output_counts(),
    })
}
