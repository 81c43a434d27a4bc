//! Awareness graphs, strongly-correct and participating sets, and the
//! immediate-snapshot axiom checker.
//!
//! For round `r` the graph `G_r` has an edge `i → j` whenever `j ∈ V_ir`.
//! `i` is aware of round `r` of `j` when some path `i → … → j` exists in the
//! union of `G_r, G_{r+1}, …`. Limit notions (the graph `G*`, strongly
//! correct processes) are approximated on finite traces through windows of
//! `width` rounds after a `burn_in` prefix.
//!
//! Strongly-correct sets are computed two ways:
//! * reachability form: `i` qualifies if, for every window starting at `r`,
//!   every member of `V_ir` has a path back to `i` inside the window graph;
//! * sink form: `i` qualifies if it lies in the sink strongly connected
//!   component of every window graph.
//!
//! [`proposition1_crosscheck`] compares the two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IisTrace, ProcSet, ProcessId, View};

/// Finite stand-in for limit notions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowParams {
    pub burn_in: usize,
    pub width: usize,
}

impl WindowParams {
    pub fn new(burn_in: usize, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidInput("window width must be at least 1".into()));
        }
        Ok(WindowParams { burn_in, width })
    }

    /// `burn_in = 2n`, `width = 2n`.
    pub fn defaults(n: usize) -> Self {
        WindowParams { burn_in: 2 * n, width: 2 * n }
    }

    /// 1-based first rounds of every window of a trace with `rounds` rounds.
    pub fn window_starts(&self, rounds: usize) -> Result<std::ops::RangeInclusive<usize>> {
        if rounds < self.burn_in + self.width {
            return Err(Error::InsufficientData(format!(
                "{rounds} rounds; need burn-in {} plus one window of {}",
                self.burn_in, self.width
            )));
        }
        Ok(self.burn_in + 1..=rounds + 1 - self.width)
    }
}

/// Out-neighbour sets indexed by 0-based process index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AwarenessGraph {
    pub nodes: ProcSet,
    pub out: Vec<ProcSet>,
}

impl AwarenessGraph {
    pub fn empty(n: usize) -> Self {
        AwarenessGraph { nodes: ProcSet::EMPTY, out: vec![ProcSet::EMPTY; n] }
    }

    /// Adds the edges `i → j` for every `j ∈ view`.
    pub fn add_view(&mut self, i: ProcessId, view: View) {
        self.nodes.insert(i);
        self.nodes = self.nodes.union(view);
        self.out[i.index()] = self.out[i.index()].union(view);
    }

    pub fn add_round(&mut self, trace: &IisTrace, r: usize) {
        if let Some(round) = trace.round(r) {
            for (i, v) in round.views() {
                self.add_view(i, v);
            }
        }
    }

    /// Union of `G_r` for `r` in `from..=to`.
    pub fn rounds(trace: &IisTrace, from: usize, to: usize) -> Self {
        let mut g = AwarenessGraph::empty(trace.n);
        for r in from..=to {
            g.add_round(trace, r);
        }
        g
    }

    /// Everything reachable from `from` (including itself).
    pub fn reachable_from(&self, from: ProcessId) -> ProcSet {
        let mut seen = ProcSet::singleton(from);
        let mut frontier = seen;
        while !frontier.is_empty() {
            let mut next = ProcSet::EMPTY;
            for v in frontier.iter() {
                next = next.union(self.out[v.index()]);
            }
            frontier = next.difference(seen);
            seen = seen.union(next);
        }
        seen
    }

    /// Every node with a path to `target` (including itself).
    pub fn reaching(&self, target: ProcessId) -> ProcSet {
        let mut seen = ProcSet::singleton(target);
        loop {
            let grown: ProcSet = self.nodes.iter().filter(|v| !self.out[v.index()].intersection(seen).is_empty()).collect();
            let next = seen.union(grown);
            if next == seen {
                return seen;
            }
            seen = next;
        }
    }

    /// Strongly connected components with no edge leaving them.
    pub fn sink_components(&self) -> Vec<ProcSet> {
        let reach: Vec<(ProcessId, ProcSet)> = self.nodes.iter().map(|v| (v, self.reachable_from(v))).collect();
        let mut sinks = Vec::new();
        let mut assigned = ProcSet::EMPTY;
        for (v, rv) in &reach {
            if assigned.contains(*v) {
                continue;
            }
            let component: ProcSet =
                reach.iter().filter(|(u, ru)| rv.contains(*u) && ru.contains(*v)).map(|(u, _)| *u).collect();
            assigned = assigned.union(component);
            if *rv == component {
                sinks.push(component);
            }
        }
        sinks
    }
}

/// `i` is aware of round `r` of `j`: a path `i → … → j` in the union of
/// rounds `r..` of the finite trace.
pub fn aware_of(trace: &IisTrace, i: ProcessId, j: ProcessId, r: usize) -> bool {
    if !trace.participants(r).contains(j) {
        return false;
    }
    if i == j {
        return true;
    }
    AwarenessGraph::rounds(trace, r, trace.len()).reachable_from(i).contains(j)
}

/// Processes whose first round `i` is aware of.
pub fn participation_set(trace: &IisTrace, i: ProcessId) -> ProcSet {
    if trace.is_empty() {
        return ProcSet::EMPTY;
    }
    let reach = AwarenessGraph::rounds(trace, 1, trace.len()).reachable_from(i);
    reach.intersection(trace.participants(1))
}

/// Processes present in every round from `from` to the end.
fn present_throughout(trace: &IisTrace, from: usize) -> ProcSet {
    (from..=trace.len()).fold(ProcSet::full(trace.n), |acc, r| acc.intersection(trace.participants(r)))
}

/// Reachability form of the window strongly-correct set.
pub fn strongly_correct_window(trace: &IisTrace, params: &WindowParams) -> Result<ProcSet> {
    Ok(window_forms(trace, params)?.reachability)
}

/// Sink-component form of the window strongly-correct set.
pub fn strongly_correct_sink(trace: &IisTrace, params: &WindowParams) -> Result<ProcSet> {
    Ok(window_forms(trace, params)?.sink)
}

struct Forms {
    reachability: ProcSet,
    sink: ProcSet,
    first_split: Option<WindowDisagreement>,
}

fn window_forms(trace: &IisTrace, params: &WindowParams) -> Result<Forms> {
    let starts = params.window_starts(trace.len())?;
    let candidates = present_throughout(trace, params.burn_in + 1);
    let mut reachability = candidates;
    let mut sink = candidates;
    let mut first_split = None;
    for r in starts {
        let g = AwarenessGraph::rounds(trace, r, r + params.width - 1);
        let sink_members = g.sink_components().into_iter().fold(ProcSet::EMPTY, |a, c| a.union(c));
        let by_reach: ProcSet = candidates
            .iter()
            .filter(|i| trace.view(*i, r).is_some_and(|v| v.is_subset(g.reaching(*i))))
            .collect();
        let by_sink = candidates.intersection(sink_members);
        if by_reach != by_sink && first_split.is_none() {
            first_split = Some(WindowDisagreement { start: r, reachability: by_reach, sink: by_sink });
        }
        reachability = reachability.intersection(by_reach);
        sink = sink.intersection(by_sink);
    }
    Ok(Forms { reachability, sink, first_split })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowDisagreement {
    pub start: usize,
    pub reachability: ProcSet,
    pub sink: ProcSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub reachability: ProcSet,
    pub sink: ProcSet,
    pub agree: bool,
    /// First window where the per-window sets differ, if any.
    pub witness: Option<WindowDisagreement>,
}

/// Compares the reachability and sink forms on every window.
pub fn proposition1_crosscheck(trace: &IisTrace, params: &WindowParams) -> Result<CrosscheckReport> {
    let f = window_forms(trace, params)?;
    Ok(CrosscheckReport {
        reachability: f.reachability,
        sink: f.sink,
        agree: f.reachability == f.sink && f.first_split.is_none(),
        witness: f.first_split,
    })
}

/// Processes with an event in every window. `events[p]` lists the 1-based
/// rounds where process `p` had one, ascending.
pub fn active_in_every_window(events: &[Vec<usize>], rounds: usize, params: &WindowParams) -> Result<ProcSet> {
    let starts = params.window_starts(rounds)?;
    Ok(events
        .iter()
        .enumerate()
        .filter(|(_, rs)| {
            starts.clone().all(|r| {
                let k = rs.partition_point(|&x| x < r);
                rs.get(k).is_some_and(|&x| x < r + params.width)
            })
        })
        .map(|(p, _)| ProcessId::from_index(p))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    SelfInclusion,
    Containment,
    Immediacy,
}

/// For immediacy: `i ∈ V_j` but `V_i ⊄ V_j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    pub i: ProcessId,
    pub j: ProcessId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub violations: Vec<AxiomViolation>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Self-inclusion, containment and immediacy over the views of one round.
pub fn check_is_axioms(views: &[(ProcessId, View)]) -> AxiomReport {
    let mut violations = Vec::new();
    for &(i, vi) in views {
        if !vi.contains(i) {
            violations.push(AxiomViolation { axiom: Axiom::SelfInclusion, i, j: i });
        }
    }
    for (a, &(i, vi)) in views.iter().enumerate() {
        for &(j, vj) in &views[a + 1..] {
            if !vi.comparable(vj) {
                violations.push(AxiomViolation { axiom: Axiom::Containment, i, j });
            }
            if vj.contains(i) && !vi.is_subset(vj) {
                violations.push(AxiomViolation { axiom: Axiom::Immediacy, i, j });
            }
            if vi.contains(j) && !vj.is_subset(vi) {
                violations.push(AxiomViolation { axiom: Axiom::Immediacy, i: j, j: i });
            }
        }
    }
    AxiomReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OrderedPartition;

    fn p(i: u32) -> ProcessId {
        ProcessId::new(i, 8).unwrap()
    }

    fn set(ids: &[u32]) -> ProcSet {
        ids.iter().map(|&i| p(i)).collect()
    }

    fn part(blocks: &[&[u32]]) -> OrderedPartition {
        OrderedPartition::new(blocks.iter().map(|b| set(b)).collect()).unwrap()
    }

    fn trace(n: usize, rounds: Vec<OrderedPartition>) -> IisTrace {
        IisTrace::new(n, rounds).unwrap()
    }

    fn cycle(len: usize) -> IisTrace {
        let a = part(&[&[1], &[2, 3]]);
        let b = part(&[&[3], &[1, 2]]);
        trace(3, (0..len).map(|k| if k % 2 == 0 { a.clone() } else { b.clone() }).collect())
    }

    #[test]
    fn axioms_pass_and_fail() {
        assert!(check_is_axioms(&[(p(1), set(&[1])), (p(2), set(&[1, 2]))]).passed());
        let bad = check_is_axioms(&[(p(1), set(&[1, 2])), (p(2), set(&[1]))]);
        assert!(bad.violations.iter().any(|v| v.axiom == Axiom::Immediacy && v.i == p(1) && v.j == p(2)));
        let bad = check_is_axioms(&[(p(1), set(&[1, 2])), (p(2), set(&[1, 2, 3])), (p(3), set(&[1, 2, 3]))]);
        assert!(bad.violations.iter().any(|v| v.axiom == Axiom::Immediacy && v.i == p(2) && v.j == p(1)));
        let inc = check_is_axioms(&[(p(1), set(&[1, 3])), (p(2), set(&[1, 2]))]);
        assert!(inc.violations.iter().any(|v| v.axiom == Axiom::Containment));
        let no_self = check_is_axioms(&[(p(1), set(&[2]))]);
        assert_eq!(no_self.violations[0].axiom, Axiom::SelfInclusion);
    }

    #[test]
    fn self_awareness_and_isolation() {
        // 3 always sees everybody, nobody sees 3.
        let t = trace(3, vec![part(&[&[1, 2], &[3]]); 10]);
        assert!(aware_of(&t, p(3), p(3), 4));
        assert!(!aware_of(&t, p(1), p(3), 1));
        assert!(!aware_of(&t, p(2), p(3), 5));
        assert!(aware_of(&t, p(3), p(1), 5));
    }

    #[test]
    fn cyclic_run_awareness_within_two_rounds() {
        let t = cycle(20);
        for r in 1..=18 {
            let two = t.truncated(r + 1);
            assert!(aware_of(&two, p(1), p(2), r), "round {r}");
        }
    }

    #[test]
    fn strongly_correct_examples() {
        let params = WindowParams::defaults(3);
        let full = trace(3, vec![part(&[&[1, 2, 3]]); 20]);
        assert_eq!(strongly_correct_window(&full, &params).unwrap(), set(&[1, 2, 3]));
        let hidden = trace(3, vec![part(&[&[1, 2], &[3]]); 20]);
        assert_eq!(strongly_correct_window(&hidden, &params).unwrap(), set(&[1, 2]));
        assert_eq!(strongly_correct_window(&cycle(40), &params).unwrap(), set(&[1, 2, 3]));
        assert!(matches!(strongly_correct_window(&cycle(5), &params), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn crosscheck_simple_cases() {
        let params = WindowParams::defaults(3);
        let full = trace(3, vec![part(&[&[1, 2, 3]]); 20]);
        let r = proposition1_crosscheck(&full, &params).unwrap();
        assert!(r.agree);
        assert_eq!(r.sink, set(&[1, 2, 3]));
        let solo = trace(1, vec![part(&[&[1]]); 10]);
        let r = proposition1_crosscheck(&solo, &WindowParams::defaults(1)).unwrap();
        assert!(r.agree);
        assert_eq!(r.reachability, set(&[1]));
    }

    #[test]
    fn participation_examples() {
        let solo = trace(3, vec![part(&[&[2]]); 4]);
        assert_eq!(participation_set(&solo, p(2)), set(&[2]));
        let full = trace(3, vec![part(&[&[1, 2, 3]]); 4]);
        assert_eq!(participation_set(&full, p(1)), set(&[1, 2, 3]));
        // 3 takes part only in round 1 and nobody ever sees it.
        let mut rounds = vec![part(&[&[1, 2], &[3]])];
        rounds.extend(vec![part(&[&[1, 2]]); 4]);
        let late = trace(3, rounds);
        assert_eq!(participation_set(&late, p(1)), set(&[1, 2]));
    }

    #[test]
    fn sink_component_of_chain() {
        let mut g = AwarenessGraph::empty(3);
        g.add_view(p(1), set(&[1]));
        g.add_view(p(2), set(&[1, 2]));
        g.add_view(p(3), set(&[1, 2, 3]));
        assert_eq!(g.sink_components(), vec![set(&[1])]);
        assert_eq!(g.reaching(p(1)), set(&[1, 2, 3]));
    }

    #[test]
    fn windows_require_events() {
        let params = WindowParams::new(2, 3).unwrap();
        let events = vec![vec![1, 3, 5, 7, 9], vec![1, 2], vec![]];
        assert_eq!(active_in_every_window(&events, 10, &params).unwrap(), set(&[1]));
    }
}
