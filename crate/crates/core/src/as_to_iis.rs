//! Simulating an IIS run inside an atomic-snapshot run.
//!
//! Every AS process is a simulator that drives all `n` simulated processes
//! through the level construction of each IIS round. Simulator `i` owns one
//! board register holding `Counter_i` and the row `R[i, *]`: per simulated
//! process, the log of round-levels `i` has witnessed it pass. One loop
//! iteration bumps the counter, snapshots the board, picks the most-behind
//! simulated process that is neither blocked nor frozen, and settles that
//! process's next level through its RAP instance `(p, r, ℓ)`.
//!
//! A simulated process is *frozen* by a simulator once all members of its
//! latest new view are aware of that round; it stays frozen until its own
//! simulator bumps its counter. It is *blocked* when every simulator that has
//! seen its frontier logged ⊥ there; only its own simulator, the resolver of
//! its RAP instances, unblocks it.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agreement::{rap_read_resolution, AgreementCell, AgreementObject, AgreementValue, Proposer, RapInstance};
use crate::analysis::{check_is_axioms, participation_set, strongly_correct_window, AwarenessGraph, AxiomViolation, WindowParams};
use crate::error::{Error, Result};
use crate::model::{
    compare_round_level, Disposition, IisTrace, OrderedPartition, ProcSet, ProcessId, RoundLevel, StatusEntry, View,
};
use crate::sched::{run, Coroutine, HaltReason, Kernel, Shm, StepInfo};
use crate::schedule::Schedule;

/// A RAP instance: the simulated process and the round-level it settles.
pub type RapId = (ProcessId, RoundLevel);

/// Shared-memory objects: the board plus the agreement objects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Board,
    Agreement(AgreementObject<RapId>),
}

impl From<AgreementObject<RapId>> for Key {
    fn from(o: AgreementObject<RapId>) -> Self {
        Key::Agreement(o)
    }
}

/// One simulator as a scheduler process.
pub type Simulator = Coroutine<Key, Cell, ()>;

/// A status log; shared between snapshots until its owner appends.
pub type Log = Arc<Vec<StatusEntry>>;

/// Contents of simulator `i`'s board register.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoardCell {
    pub counter: u64,
    /// `rows[p]` is `R[i, p]`.
    pub rows: Vec<Log>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cell {
    Board(Arc<BoardCell>),
    Agreement(AgreementCell),
}

impl AgreementValue for Cell {
    fn wrap(cell: AgreementCell) -> Self {
        Cell::Agreement(cell)
    }

    fn agreement(&self) -> Option<AgreementCell> {
        match self {
            Cell::Agreement(c) => Some(*c),
            Cell::Board(_) => None,
        }
    }
}

/// A decoded board snapshot `S`.
#[derive(Clone, Debug)]
pub struct BoardView {
    pub n: usize,
    /// One entry per simulator; `None` until it first writes.
    pub cells: Vec<Option<Arc<BoardCell>>>,
}

impl BoardView {
    pub fn decode(n: usize, raw: Vec<Option<Cell>>) -> Self {
        let cells = raw
            .into_iter()
            .map(|c| match c {
                Some(Cell::Board(b)) => Some(b),
                _ => None,
            })
            .collect();
        BoardView { n, cells }
    }

    pub fn counter(&self, j: ProcessId) -> u64 {
        self.cells[j.index()].as_ref().map_or(0, |c| c.counter)
    }

    fn latest(&self, p: ProcessId) -> impl Iterator<Item = StatusEntry> + '_ {
        self.cells.iter().flatten().filter_map(move |c| c.rows[p.index()].last().copied())
    }

    /// Most advanced round-level any simulator has logged for `p`.
    pub fn round_level(&self, p: ProcessId) -> Option<RoundLevel> {
        self.latest(p).map(|e| e.at).max_by(|a, b| a.progress_cmp(b))
    }

    /// Every simulator whose latest entry for `p` sits at `p`'s frontier
    /// logged it blocked there.
    pub fn is_blocked(&self, p: ProcessId) -> bool {
        let Some(front) = self.round_level(p) else {
            return false;
        };
        self.latest(p).filter(|e| e.at == front).all(|e| e.disposition == Disposition::Blocked)
    }
}

/// Everything derivable from the logs seen so far: who reached which
/// round-level, and the views of completed rounds. Logs are append-only, so
/// successive snapshots are ingested incrementally.
#[derive(Clone, Debug)]
pub struct BoardIndex {
    n: usize,
    consumed: Vec<Vec<usize>>,
    /// `reached[r-1][ℓ]`.
    reached: Vec<Vec<ProcSet>>,
    /// `min_level[p][r-1]`.
    min_level: Vec<Vec<u32>>,
    top_round: Vec<u64>,
    /// `views[r-1][p]`.
    views: Vec<Vec<Option<View>>>,
    completed: Vec<u64>,
}

impl BoardIndex {
    pub fn new(n: usize) -> Self {
        BoardIndex {
            n,
            consumed: vec![vec![0; n]; n],
            reached: Vec::new(),
            min_level: vec![Vec::new(); n],
            top_round: vec![0; n],
            views: Vec::new(),
            completed: vec![0; n],
        }
    }

    pub fn ingest(&mut self, board: &BoardView) {
        let n = self.n;
        for (i, cell) in board.cells.iter().enumerate() {
            let Some(cell) = cell else { continue };
            for p in 0..n {
                let log = &cell.rows[p];
                for e in &log[self.consumed[i][p]..] {
                    let r = e.at.round as usize;
                    while self.reached.len() < r {
                        self.reached.push(vec![ProcSet::EMPTY; n + 1]);
                        self.views.push(vec![None; n]);
                    }
                    self.reached[r - 1][e.at.level as usize].insert(ProcessId::from_index(p));
                    let levels = &mut self.min_level[p];
                    while levels.len() < r {
                        levels.push(u32::MAX);
                    }
                    levels[r - 1] = levels[r - 1].min(e.at.level);
                    self.top_round[p] = self.top_round[p].max(e.at.round);
                }
                self.consumed[i][p] = log.len();
            }
        }
        for p in 0..n {
            let done = self.top_round[p].saturating_sub(1);
            for r in self.completed[p] + 1..=done {
                let level = self.min_level[p][r as usize - 1];
                self.views[r as usize - 1][p] = Some(self.reached[r as usize - 1][level as usize]);
            }
            self.completed[p] = self.completed[p].max(done);
        }
    }

    /// Processes logged at `(r, ℓ)` by anyone.
    pub fn reached(&self, at: RoundLevel) -> ProcSet {
        self.reached.get(at.round as usize - 1).map_or(ProcSet::EMPTY, |lv| lv[at.level as usize])
    }

    pub fn view(&self, p: ProcessId, round: u64) -> Option<View> {
        self.views.get(round as usize - 1).and_then(|vs| vs[p.index()])
    }

    /// Rounds `p` is known to have completed.
    pub fn completed(&self, p: ProcessId) -> u64 {
        self.completed[p.index()]
    }

    /// Number of rounds in which anyone has been logged.
    pub fn rounds(&self) -> usize {
        self.reached.len()
    }

    /// Level at which `p` completed round `r`, if it did.
    pub fn completion_level(&self, p: ProcessId, r: u64) -> Option<u32> {
        (r <= self.completed(p)).then(|| self.min_level[p.index()][r as usize - 1])
    }
}

/// Per-simulator freeze bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatorLocal {
    pub countf: Vec<u64>,
    pub lastf: Vec<u64>,
}

impl SimulatorLocal {
    pub fn new(n: usize) -> Self {
        SimulatorLocal { countf: vec![0; n], lastf: vec![0; n] }
    }

    /// For each `j`, the largest round `x` whose view members are all aware
    /// of round `x` of `j`; a new such round freezes `j` at its current
    /// counter. Returns the processes frozen now.
    pub fn freeze_scan(&mut self, index: &BoardIndex, counters: &[u64]) -> ProcSet {
        let pending: Vec<ProcessId> = ProcessId::all(index.n)
            .filter(|j| index.completed(*j) > self.lastf[j.index()])
            .collect();
        let Some(lowest) = pending.iter().map(|j| self.lastf[j.index()] + 1).min() else {
            return ProcSet::EMPTY;
        };
        let mut found = ProcSet::EMPTY;
        let mut graph = AwarenessGraph::empty(index.n);
        for x in (lowest..=index.rounds() as u64).rev() {
            for (p, v) in index.views[x as usize - 1].iter().enumerate() {
                if let Some(v) = v {
                    graph.add_view(ProcessId::from_index(p), *v);
                }
            }
            for &j in &pending {
                if found.contains(j) || x > index.completed(j) || x <= self.lastf[j.index()] {
                    continue;
                }
                let v = index.view(j, x).expect("completed rounds carry views");
                if v.is_subset(graph.reaching(j)) {
                    found.insert(j);
                    self.lastf[j.index()] = x;
                    self.countf[j.index()] = counters[j.index()];
                }
            }
        }
        found
    }

    /// Not blocked, and not frozen at the current counter.
    pub fn candidates(&self, board: &BoardView, counters: &[u64]) -> ProcSet {
        ProcessId::all(board.n).filter(|j| counters[j.index()] > self.countf[j.index()] && !board.is_blocked(*j)).collect()
    }
}

/// The most-behind candidate under [`compare_round_level`].
pub fn select_candidate(cands: ProcSet, board: &BoardView) -> Option<ProcessId> {
    cands
        .iter()
        .filter_map(|j| board.round_level(j).map(|rl| (j, rl)))
        .min_by(|a, b| compare_round_level(*a, *b, board.n))
        .map(|(j, _)| j)
}

/// One appended log entry, in the order simulators wrote them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusRecord {
    pub simulator: ProcessId,
    pub process: ProcessId,
    pub entry: StatusEntry,
}

#[derive(Debug, Default)]
struct Recorder {
    status: Vec<StatusRecord>,
    decided: HashMap<RapId, bool>,
    recorded_views: BTreeMap<(u64, ProcessId), View>,
    violations: Vec<String>,
    primitives: Vec<usize>,
    max_primitives: usize,
    iterations: Vec<u64>,
}

impl Recorder {
    fn start_iteration(&mut self, me: ProcessId) {
        self.max_primitives = self.max_primitives.max(self.primitives[me.index()]);
        self.primitives[me.index()] = 0;
        self.iterations[me.index()] += 1;
    }

    fn outcome(&mut self, sim: ProcessId, id: RapId, v: Option<bool>) {
        if let Some(v) = v {
            match self.decided.get(&id) {
                Some(&w) if w != v => self.violations.push(format!(
                    "RAP {}{} settled {w} elsewhere but {v} for {sim}",
                    id.0, id.1
                )),
                Some(_) => {}
                None => {
                    self.decided.insert(id, v);
                }
            }
        }
    }

    fn view(&mut self, sim: ProcessId, p: ProcessId, round: u64, v: View) {
        match self.recorded_views.get(&(round, p)) {
            Some(&w) if w != v => {
                self.violations.push(format!("{sim} records V[{p}][{round}] = {v:?}, another simulator {w:?}"))
            }
            Some(_) => {}
            None => {
                self.recorded_views.insert((round, p), v);
            }
        }
    }
}

async fn publish(shm: &Shm<Key, Cell>, counter: u64, rows: &[Log]) {
    shm.write(Key::Board, Cell::Board(Arc::new(BoardCell { counter, rows: rows.to_vec() }))).await;
}

async fn simulator(shm: Shm<Key, Cell>, rec: Rc<RefCell<Recorder>>, limit: Option<u64>) {
    let me = shm.me();
    let n = shm.n();
    let top = n as u32;
    let mut counter = 0;
    let mut rows: Vec<Log> = (0..n).map(|_| Arc::new(Vec::new())).collect();
    let first = StatusEntry::run(1, top);
    Arc::make_mut(&mut rows[me.index()]).push(first);
    rec.borrow_mut().status.push(StatusRecord { simulator: me, process: me, entry: first });
    publish(&shm, counter, &rows).await;

    let mut local = SimulatorLocal::new(n);
    let mut index = BoardIndex::new(n);
    let mut proposer: Proposer<RapId> = Proposer::new();
    let mut done = 0;
    while limit.is_none_or(|l| done < l) {
        done += 1;
        rec.borrow_mut().start_iteration(me);
        counter += 1;
        publish(&shm, counter, &rows).await;
        let board = BoardView::decode(n, shm.snapshot(Key::Board).await);
        index.ingest(&board);
        let mut counters: Vec<u64> = ProcessId::all(n).map(|j| board.counter(j)).collect();

        let p = if board.is_blocked(me) {
            me
        } else {
            local.freeze_scan(&index, &counters);
            loop {
                counters[me.index()] = counter;
                let cands = local.candidates(&board, &counters);
                counter += 1;
                publish(&shm, counter, &rows).await;
                if let Some(p) = select_candidate(cands, &board) {
                    break p;
                }
            }
        };

        let at = board.round_level(p).expect("candidates and blocked processes have logs");
        let u = index.reached(at);
        let id = (p, at);
        let instance = RapInstance { id, resolver: p };
        let v = if proposer.has_proposed(&id) {
            rap_read_resolution(&shm, &instance).await
        } else {
            proposer.rap_propose(&shm, instance, u.len() == at.level as usize).await.expect("first proposal")
        };
        let entry = {
            let mut rec = rec.borrow_mut();
            rec.outcome(me, id, v);
            match v {
                Some(true) => StatusEntry::run(at.round + 1, top),
                Some(false) if at.level > 1 => StatusEntry::run(at.round, at.level - 1),
                Some(false) => {
                    rec.violations.push(format!("{me}: RAP {p}{at} settled 0 at the last level"));
                    StatusEntry::blocked(at.round, at.level)
                }
                None => StatusEntry::blocked(at.round, at.level),
            }
        };
        Arc::make_mut(&mut rows[p.index()]).push(entry);
        rec.borrow_mut().status.push(StatusRecord { simulator: me, process: p, entry });
        publish(&shm, counter, &rows).await;
        if v == Some(true) && u.len() == at.level as usize {
            rec.borrow_mut().view(me, p, at.round, u);
        }
    }
}

/// Outcome of one simulation run.
#[derive(Clone, Debug)]
pub struct Alg1Run {
    pub n: usize,
    pub steps: u64,
    pub halted: HaltReason,
    pub activations: Vec<u64>,
    /// Simulators that took at least one step.
    pub stepped: ProcSet,
    /// Simulators crashed by the end of the run.
    pub crashed: ProcSet,
    pub board: BoardView,
    /// Views derived from the final board.
    pub index: BoardIndex,
    /// Views as recorded by the simulators whose RAP returned 1.
    pub recorded_views: BTreeMap<(u64, ProcessId), View>,
    pub status: Vec<StatusRecord>,
    pub violations: Vec<String>,
    /// Most primitives any simulator spent in one loop iteration.
    pub max_primitives: usize,
    pub iterations: Vec<u64>,
}

/// Runs the `n` simulators under `schedule` for `horizon` scheduler steps.
/// `limit` caps the loop iterations per simulator (used for exhaustive
/// exploration); `None` runs until the horizon.
pub fn simulate(schedule: &Schedule, horizon: u64, limit: Option<u64>) -> Alg1Run {
    simulate_observed(schedule, horizon, limit, |_| {})
}

/// [`simulate`], also handing every performed primitive to `observe`.
pub fn simulate_observed(
    schedule: &Schedule,
    horizon: u64,
    limit: Option<u64>,
    mut observe: impl FnMut(&StepInfo<'_, Key, Cell>),
) -> Alg1Run {
    let n = schedule.n;
    let (mut kernel, mut procs, rec) = build(n, limit);
    let hook_rec = Rc::clone(&rec);
    let exec = run(&mut kernel, &mut procs, schedule, horizon, move |step, _| {
        hook_rec.borrow_mut().primitives[step.actor.index()] += 1;
        observe(step);
    });
    drop(procs);
    let rec = Rc::try_unwrap(rec).expect("simulators dropped").into_inner();
    finish(n, &kernel, exec.steps, exec.halted, exec.activations, rec)
}

fn build(n: usize, limit: Option<u64>) -> (Kernel<Key, Cell>, Vec<Simulator>, Rc<RefCell<Recorder>>) {
    let rec = Rc::new(RefCell::new(Recorder {
        primitives: vec![0; n],
        iterations: vec![0; n],
        ..Recorder::default()
    }));
    let procs = ProcessId::all(n)
        .map(|me| {
            let rec = Rc::clone(&rec);
            Coroutine::new(me, n, move |shm| simulator(shm, rec, limit))
        })
        .collect();
    (Kernel::untraced(n), procs, rec)
}

fn finish(n: usize, kernel: &Kernel<Key, Cell>, steps: u64, halted: HaltReason, activations: Vec<u64>, mut rec: Recorder) -> Alg1Run {
    for p in 0..n {
        rec.max_primitives = rec.max_primitives.max(rec.primitives[p]);
    }
    let board = BoardView::decode(n, kernel.memory().cells(&Key::Board));
    let mut index = BoardIndex::new(n);
    index.ingest(&board);
    Alg1Run {
        n,
        steps,
        halted,
        stepped: ProcessId::all(n).filter(|p| activations[p.index()] > 0).collect(),
        activations,
        crashed: kernel.crashed(),
        board,
        index,
        recorded_views: rec.recorded_views,
        status: rec.status,
        violations: rec.violations,
        max_primitives: rec.max_primitives,
        iterations: rec.iterations,
    }
}

/// Simulators for use with the scheduler's explorers; the recorder stays
/// private, so only board-level checks apply.
pub fn simulators(n: usize, limit: Option<u64>) -> (Kernel<Key, Cell>, Vec<Simulator>) {
    let (kernel, procs, _) = build(n, limit);
    (kernel, procs)
}

/// Upper bound on primitives per loop iteration: two counter writes before
/// the candidate loop settles, one snapshot, at most two more counter writes,
/// five for RAP and one final write.
pub const PRIMITIVES_PER_ITERATION: usize = 10;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub axiom_violations: Vec<(u64, AxiomViolation)>,
    /// RAP or recorded-view conflicts, and malformed completions.
    pub agreement_violations: Vec<String>,
    /// Round-levels where more than `ℓ` processes were logged.
    pub occupancy_violations: Vec<(RoundLevel, ProcSet)>,
    pub max_primitives: usize,
    pub wait_free: bool,
}

impl SafetyReport {
    pub fn passed(&self) -> bool {
        self.axiom_violations.is_empty()
            && self.agreement_violations.is_empty()
            && self.occupancy_violations.is_empty()
            && self.wait_free
    }
}

/// Per-round IS axioms on the simulated views, agreement between simulators,
/// the level-occupancy bound, and the per-iteration primitive bound.
pub fn check_safety(run: &Alg1Run) -> SafetyReport {
    let mut report = SafetyReport {
        max_primitives: run.max_primitives,
        wait_free: run.max_primitives <= PRIMITIVES_PER_ITERATION,
        agreement_violations: run.violations.clone(),
        ..SafetyReport::default()
    };
    let index = &run.index;
    for r in 1..=index.rounds() as u64 {
        for level in 1..=run.n as u32 {
            let at = RoundLevel::new(r, level);
            let who = index.reached(at);
            if who.len() > level as usize {
                report.occupancy_violations.push((at, who));
            }
        }
        let views: Vec<(ProcessId, View)> =
            ProcessId::all(run.n).filter_map(|p| index.view(p, r).map(|v| (p, v))).collect();
        for v in check_is_axioms(&views).violations {
            report.axiom_violations.push((r, v));
        }
        for (p, v) in &views {
            let level = index.completion_level(*p, r).expect("view implies completion");
            if v.len() != level as usize {
                report
                    .agreement_violations
                    .push(format!("{p} completed round {r} at level {level} with {} processes", v.len()));
            }
        }
    }
    for ((r, p), v) in &run.recorded_views {
        if index.view(*p, *r) != Some(*v) {
            report.agreement_violations.push(format!(
                "recorded V[{p}][{r}] = {v:?} but the board gives {:?}",
                index.view(*p, *r)
            ));
        }
    }
    report
}

/// Rounds completed by every simulator still alive.
pub fn common_rounds(run: &Alg1Run) -> u64 {
    ProcessId::all(run.n).filter(|p| !run.crashed.contains(*p)).map(|p| run.index.completed(p)).min().unwrap_or(0)
}

/// The simulated IIS run, truncated to the rounds every live simulator
/// completed. A process without its own view in a round but present in
/// others' views gets the smallest view containing it.
pub fn extract_iis_trace(run: &Alg1Run) -> Result<IisTrace> {
    let rounds = common_rounds(run);
    let mut partitions = Vec::with_capacity(rounds as usize);
    for r in 1..=rounds {
        let mut views: Vec<(ProcessId, View)> =
            ProcessId::all(run.n).filter_map(|p| run.index.view(p, r).map(|v| (p, v))).collect();
        let report = check_is_axioms(&views);
        if let Some(v) = report.violations.first() {
            return Err(Error::Invariant(format!("round {r}: {v:?}")));
        }
        let seen = views.iter().fold(ProcSet::EMPTY, |a, (_, v)| a.union(*v));
        let placed: Vec<(ProcessId, View)> = seen
            .iter()
            .filter(|q| run.index.view(*q, r).is_none())
            .map(|q| {
                let smallest = views.iter().map(|(_, v)| *v).filter(|v| v.contains(q)).min_by_key(|v| v.len());
                (q, smallest.expect("seen processes lie in some view"))
            })
            .collect();
        views.extend(placed);
        partitions.push(OrderedPartition::from_views(&views)?);
    }
    IisTrace::new(run.n, partitions)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationMismatch {
    pub simulator: ProcessId,
    pub trace: ProcSet,
    pub stepped: ProcSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub rounds: usize,
    /// Last round any crashed simulator's process completed; windows start
    /// after it plus the burn-in.
    pub settled: u64,
    pub correct: ProcSet,
    pub strongly_correct: ProcSet,
    pub sets_equal: bool,
    pub participation_mismatches: Vec<ParticipationMismatch>,
}

impl Theorem1Report {
    pub fn passed(&self) -> bool {
        self.sets_equal && self.participation_mismatches.is_empty()
    }
}

/// Window check of `correct = strongly correct` on the extracted trace, and
/// of each live simulator's participating set against who took steps.
///
/// Crashed simulators' processes keep being simulated until frozen, so the
/// burn-in counts from the last round any of them completed.
pub fn check_theorem1(run: &Alg1Run, trace: &IisTrace, params: &WindowParams) -> Result<Theorem1Report> {
    let settled = run.crashed.iter().map(|p| run.index.completed(p)).max().unwrap_or(0);
    theorem1_window(trace, run.crashed, run.stepped, settled, params)
}

/// The checks of [`check_theorem1`] from the run's summary data alone.
pub fn theorem1_window(
    trace: &IisTrace,
    crashed: ProcSet,
    stepped: ProcSet,
    settled: u64,
    params: &WindowParams,
) -> Result<Theorem1Report> {
    let correct = ProcSet::full(trace.n).difference(crashed);
    let shifted = WindowParams { burn_in: params.burn_in + settled as usize, width: params.width };
    let strongly_correct = strongly_correct_window(trace, &shifted)?;
    let participation_mismatches = correct
        .iter()
        .filter_map(|i| {
            let seen = participation_set(trace, i);
            (seen != stepped).then_some(ParticipationMismatch { simulator: i, trace: seen, stepped })
        })
        .collect();
    Ok(Theorem1Report {
        rounds: trace.len(),
        settled,
        correct,
        strongly_correct,
        sets_equal: correct == strongly_correct,
        participation_mismatches,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn p(i: u32) -> ProcessId {
        ProcessId::new(i, 8).unwrap()
    }

    fn set(ids: &[u32]) -> ProcSet {
        ids.iter().map(|&i| p(i)).collect()
    }

    fn solo(n: usize, steps: usize) -> Alg1Run {
        let sched = Schedule::script(n, vec![p(1); steps], BTreeMap::new()).unwrap();
        simulate(&sched, steps as u64, None)
    }

    fn log(run: &Alg1Run, sim: u32, of: u32) -> Vec<StatusEntry> {
        run.board.cells[p(sim).index()].as_ref().unwrap().rows[p(of).index()].to_vec()
    }

    #[test]
    fn solo_simulator_first_descends() {
        let run = solo(3, 40);
        let entries = log(&run, 1, 1);
        assert_eq!(entries[0], StatusEntry::run(1, 3));
        assert_eq!(entries[1], StatusEntry::run(1, 2));
        assert_eq!(entries[2], StatusEntry::run(1, 1));
        assert_eq!(entries[3], StatusEntry::run(2, 3));
        assert_eq!(run.index.view(p(1), 1), Some(set(&[1])));
    }

    #[test]
    fn single_process_completes_every_round_alone() {
        let run = solo(1, 200);
        assert!(run.index.completed(p(1)) >= 10);
        for r in 1..=run.index.completed(p(1)) {
            assert_eq!(run.index.view(p(1), r), Some(set(&[1])));
        }
        assert!(check_safety(&run).passed());
    }

    #[test]
    fn lock_step_pair_completes_round_one() {
        let steps: Vec<ProcessId> = (0..400).map(|k| p(1 + k % 2)).collect();
        let sched = Schedule::script(2, steps, BTreeMap::new()).unwrap();
        let run = simulate(&sched, 400, None);
        let report = check_safety(&run);
        assert!(report.passed(), "{report:?}");
        assert!(run.index.completed(p(1)) >= 1 && run.index.completed(p(2)) >= 1);
        let trace = extract_iis_trace(&run).unwrap();
        assert!(!trace.is_empty());
    }

    #[test]
    fn blocked_needs_all_frontier_entries() {
        let mk = |rows: Vec<Vec<StatusEntry>>| {
            Some(Arc::new(BoardCell { counter: 1, rows: rows.into_iter().map(Arc::new).collect() }))
        };
        let run_e = StatusEntry::run(1, 2);
        let blocked = StatusEntry::blocked(1, 2);
        let mixed = BoardView { n: 2, cells: vec![mk(vec![vec![run_e], vec![]]), mk(vec![vec![blocked], vec![]])] };
        assert!(!mixed.is_blocked(p(1)));
        let all = BoardView { n: 2, cells: vec![mk(vec![vec![run_e, blocked], vec![]]), mk(vec![vec![blocked], vec![]])] };
        assert!(all.is_blocked(p(1)));
        let stale = BoardView {
            n: 2,
            cells: vec![mk(vec![vec![StatusEntry::run(1, 3)], vec![]]), mk(vec![vec![blocked], vec![]])],
        };
        assert!(stale.is_blocked(p(1)));
        assert!(!stale.is_blocked(p(2)));
    }

    #[test]
    fn most_behind_candidate_wins() {
        let mk = |rows: Vec<Vec<StatusEntry>>| {
            Some(Arc::new(BoardCell { counter: 1, rows: rows.into_iter().map(Arc::new).collect() }))
        };
        let board = BoardView {
            n: 3,
            cells: vec![mk(vec![vec![StatusEntry::run(2, 3)], vec![StatusEntry::run(2, 2)], vec![]]), None, None],
        };
        assert_eq!(select_candidate(set(&[1, 2]), &board), Some(p(1)));
        assert_eq!(select_candidate(ProcSet::EMPTY, &board), None);
    }

    #[test]
    fn seeded_runs_are_safe() {
        for seed in 0..5 {
            let sched = Schedule::seeded(3, seed, BTreeMap::new()).unwrap();
            let run = simulate(&sched, 3000, None);
            let report = check_safety(&run);
            assert!(report.passed(), "seed {seed}: {report:?}");
            extract_iis_trace(&run).unwrap();
        }
    }
}
