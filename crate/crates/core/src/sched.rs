//! Deterministic executor for protocols over simulated single-writer registers
//! with an atomic snapshot primitive.
//!
//! Shared memory is a set of snapshot objects addressed by a key `K`; each
//! object is an array of `n` single-writer cells holding `V` (⊥ initially).
//! A process is a state machine that exposes its next primitive through
//! [`Process::next_op`]; one activation performs exactly that primitive
//! atomically and hands the response back through [`Process::deliver`].
//!
//! Protocols with nested structure are easier to write as straight-line code,
//! so [`Coroutine`] adapts an `async` body into a [`Process`]: every
//! `shm.write(..).await` or `shm.snapshot(..).await` suspends the body until the
//! scheduler activates it again. Nothing else ever wakes it, so execution stays
//! a pure function of the schedule.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Debug;
use std::future::Future;
use std::hash::Hash;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AsEvent, AsOp, AsTrace, ProcSet, ProcessId};
use crate::schedule::Schedule;

/// One shared-memory primitive.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Op<K, V> {
    Write { object: K, value: V },
    Snapshot { object: K },
}

impl<K, V> Op<K, V> {
    pub fn object(&self) -> &K {
        match self {
            Op::Write { object, .. } | Op::Snapshot { object } => object,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Response<V> {
    Written,
    Snapshot(Vec<Option<V>>),
}

/// A per-process state machine driven one primitive per activation.
pub trait Process<K, V> {
    type Output;

    /// The primitive performed at the next activation, or `None` once the
    /// process has halted. Repeated calls without an intervening
    /// [`deliver`](Process::deliver) return the same primitive.
    fn next_op(&mut self) -> Option<Op<K, V>>;

    fn deliver(&mut self, response: Response<V>);

    fn output(&self) -> Option<Self::Output>;
}

/// All snapshot objects. Objects spring into existence, all-⊥, on first use.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Memory<K, V> {
    n: usize,
    objects: BTreeMap<K, Vec<Option<V>>>,
}

impl<K: Ord + Clone, V: Clone> Memory<K, V> {
    pub fn new(n: usize) -> Self {
        Memory { n, objects: BTreeMap::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Current cells of `object` (all ⊥ if never written).
    pub fn cells(&self, object: &K) -> Vec<Option<V>> {
        self.objects.get(object).cloned().unwrap_or_else(|| vec![None; self.n])
    }

    pub fn cell(&self, object: &K, p: ProcessId) -> Option<&V> {
        self.objects.get(object).and_then(|c| c[p.index()].as_ref())
    }

    pub fn objects(&self) -> impl Iterator<Item = (&K, &[Option<V>])> {
        self.objects.iter().map(|(k, v)| (k, v.as_slice()))
    }

    fn write(&mut self, actor: ProcessId, object: K, value: V) {
        let n = self.n;
        self.objects.entry(object).or_insert_with(|| vec![None; n])[actor.index()] = Some(value);
    }
}

/// Register memory plus crash state plus the recorded AS trace.
#[derive(Clone, Debug)]
pub struct Kernel<K, V> {
    memory: Memory<K, V>,
    crashed: ProcSet,
    trace: AsTrace<V, K>,
    record: bool,
}

impl<K: Ord + Clone, V: Clone> Kernel<K, V> {
    pub fn new(n: usize) -> Self {
        Kernel { memory: Memory::new(n), crashed: ProcSet::EMPTY, trace: AsTrace::new(n), record: true }
    }

    /// A kernel that keeps no trace; used by exhaustive exploration.
    pub fn untraced(n: usize) -> Self {
        Kernel { record: false, ..Kernel::new(n) }
    }

    pub fn n(&self) -> usize {
        self.memory.n
    }

    pub fn memory(&self) -> &Memory<K, V> {
        &self.memory
    }

    pub fn trace(&self) -> &AsTrace<V, K> {
        &self.trace
    }

    pub fn into_trace(self) -> AsTrace<V, K> {
        self.trace
    }

    pub fn crash(&mut self, p: ProcessId) {
        self.crashed.insert(p);
    }

    pub fn crashed(&self) -> ProcSet {
        self.crashed
    }

    pub fn is_crashed(&self, p: ProcessId) -> bool {
        self.crashed.contains(p)
    }

    fn check_actor(&self, actor: ProcessId) -> Result<()> {
        if actor.index() >= self.n() {
            return Err(Error::InvalidInput(format!("{actor} beyond n={}", self.n())));
        }
        if self.is_crashed(actor) {
            return Err(Error::Crashed(actor));
        }
        Ok(())
    }

    /// Atomically overwrite `actor`'s cell of `object`.
    pub fn write(&mut self, actor: ProcessId, object: K, value: V) -> Result<()> {
        self.check_actor(actor)?;
        if self.record {
            self.trace.events.push(AsEvent { actor, object: object.clone(), kind: AsOp::Update(value.clone()) });
        }
        self.memory.write(actor, object, value);
        Ok(())
    }

    /// Atomic copy of every cell of `object`.
    pub fn snapshot(&mut self, actor: ProcessId, object: K) -> Result<Vec<Option<V>>> {
        self.check_actor(actor)?;
        let cells = self.memory.cells(&object);
        if self.record {
            self.trace.events.push(AsEvent { actor, object, kind: AsOp::Snapshot(cells.clone()) });
        }
        Ok(cells)
    }

    pub fn perform(&mut self, actor: ProcessId, op: Op<K, V>) -> Result<Response<V>> {
        match op {
            Op::Write { object, value } => self.write(actor, object, value).map(|_| Response::Written),
            Op::Snapshot { object } => self.snapshot(actor, object).map(Response::Snapshot),
        }
    }

    /// Runs one activation of `actor`. Returns the primitive performed, or
    /// `None` if the process had already halted.
    pub fn activate<P: Process<K, V>>(&mut self, actor: ProcessId, process: &mut P) -> Result<Option<Op<K, V>>> {
        self.check_actor(actor)?;
        let Some(op) = process.next_op() else {
            return Ok(None);
        };
        let response = self.perform(actor, op.clone())?;
        process.deliver(response);
        Ok(Some(op))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    ScriptExhausted,
    HorizonReached,
    AllDecided,
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct ExecutionRecord<K, V, O> {
    pub as_trace: AsTrace<V, K>,
    pub outputs: Vec<Option<O>>,
    pub halted: HaltReason,
    /// Schedule positions consumed.
    pub steps: u64,
    /// Primitives performed, per process.
    pub activations: Vec<u64>,
}

/// What a step hook sees after each activation that performed a primitive.
pub struct StepInfo<'a, K, V> {
    pub index: u64,
    pub actor: ProcessId,
    pub op: &'a Op<K, V>,
}

/// Activates processes in schedule order for at most `horizon` schedule
/// positions. Crashes take effect at their schedule index.
pub fn run<K, V, P>(
    kernel: &mut Kernel<K, V>,
    procs: &mut [P],
    schedule: &Schedule,
    horizon: u64,
    mut hook: impl FnMut(&StepInfo<'_, K, V>, &Kernel<K, V>),
) -> ExecutionRecord<K, V, P::Output>
where
    K: Ord + Clone,
    V: Clone,
    P: Process<K, V>,
{
    assert_eq!(procs.len(), kernel.n(), "one process per id");
    let mut activations = vec![0; procs.len()];
    let mut steps = 0;
    let mut stream = schedule.stream();
    let halted = loop {
        if steps >= horizon {
            break HaltReason::HorizonReached;
        }
        for (p, &c) in &schedule.crashes {
            if c <= steps {
                kernel.crash(*p);
            }
        }
        if ProcessId::all(kernel.n()).all(|p| kernel.is_crashed(p) || procs[p.index()].next_op().is_none()) {
            break HaltReason::AllDecided;
        }
        let Some(actor) = stream.next() else {
            break HaltReason::ScriptExhausted;
        };
        let index = steps;
        steps += 1;
        if let Ok(Some(op)) = kernel.activate(actor, &mut procs[actor.index()]) {
            activations[actor.index()] += 1;
            hook(&StepInfo { index, actor, op: &op }, kernel);
        }
    };
    ExecutionRecord {
        as_trace: std::mem::replace(&mut kernel.trace, AsTrace::new(kernel.memory.n)),
        outputs: procs.iter().map(|p| p.output()).collect(),
        halted,
        steps,
        activations,
    }
}

/// Every state reachable from `(kernel, procs)` under any interleaving,
/// each visited once; `visit` also learns whether the state is terminal.
/// Returns the number of distinct states.
pub fn explore_states<K, V, P>(kernel: Kernel<K, V>, procs: Vec<P>, mut visit: impl FnMut(&Kernel<K, V>, &[P], bool)) -> usize
where
    K: Ord + Clone + Hash,
    V: Clone + Hash + Eq,
    P: Process<K, V> + Clone + Hash + Eq,
{
    let mut seen: HashSet<(Memory<K, V>, Vec<P>)> = HashSet::new();
    let mut stack = vec![(kernel, procs)];
    while let Some((kernel, mut procs)) = stack.pop() {
        if !seen.insert((kernel.memory.clone(), procs.clone())) {
            continue;
        }
        let enabled: Vec<ProcessId> =
            ProcessId::all(kernel.n()).filter(|p| procs[p.index()].next_op().is_some()).collect();
        visit(&kernel, &procs, enabled.is_empty());
        for p in enabled.into_iter().rev() {
            let mut k = kernel.clone();
            let mut ps = procs.clone();
            k.activate(p, &mut ps[p.index()]).expect("explored processes never crash");
            stack.push((k, ps));
        }
    }
    seen.len()
}

/// Every complete interleaving of the processes built by `build`, by replay.
/// `visit` receives the schedule and the terminal state. Returns the number
/// of interleavings. Suited to small protocols whose processes cannot be
/// cloned (coroutines).
pub fn enumerate_schedules<K, V, P>(
    build: impl Fn() -> (Kernel<K, V>, Vec<P>),
    mut visit: impl FnMut(&[ProcessId], &Kernel<K, V>, &[P]),
) -> usize
where
    K: Ord + Clone,
    V: Clone,
    P: Process<K, V>,
{
    fn replay<K: Ord + Clone, V: Clone, P: Process<K, V>>(
        build: &impl Fn() -> (Kernel<K, V>, Vec<P>),
        prefix: &[ProcessId],
    ) -> (Kernel<K, V>, Vec<P>) {
        let (mut kernel, mut procs) = build();
        for p in prefix {
            kernel.activate(*p, &mut procs[p.index()]).expect("replayed processes never crash");
        }
        (kernel, procs)
    }

    let mut count = 0;
    let mut stack: Vec<Vec<ProcessId>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let (kernel, mut procs) = replay(&build, &prefix);
        let enabled: Vec<ProcessId> =
            ProcessId::all(kernel.n()).filter(|p| procs[p.index()].next_op().is_some()).collect();
        if enabled.is_empty() {
            count += 1;
            visit(&prefix, &kernel, &procs);
            continue;
        }
        for p in enabled.into_iter().rev() {
            let mut next = prefix.clone();
            next.push(p);
            stack.push(next);
        }
    }
    count
}

struct Port<K, V> {
    request: Option<Op<K, V>>,
    response: Option<Response<V>>,
}

/// Handle through which a coroutine body issues shared-memory primitives.
pub struct Shm<K, V> {
    port: Rc<RefCell<Port<K, V>>>,
    me: ProcessId,
    n: usize,
}

impl<K, V> Clone for Shm<K, V> {
    fn clone(&self) -> Self {
        Shm { port: Rc::clone(&self.port), me: self.me, n: self.n }
    }
}

impl<K, V> Shm<K, V> {
    pub fn me(&self) -> ProcessId {
        self.me
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub async fn write(&self, object: K, value: V) {
        match (PrimitiveFuture { port: &self.port, op: Some(Op::Write { object, value }) }).await {
            Response::Written => {}
            Response::Snapshot(_) => unreachable!("write answered with a snapshot"),
        }
    }

    pub async fn snapshot(&self, object: K) -> Vec<Option<V>> {
        match (PrimitiveFuture { port: &self.port, op: Some(Op::Snapshot { object }) }).await {
            Response::Snapshot(cells) => cells,
            Response::Written => unreachable!("snapshot answered with a write acknowledgement"),
        }
    }
}

struct PrimitiveFuture<'a, K, V> {
    port: &'a RefCell<Port<K, V>>,
    op: Option<Op<K, V>>,
}

// Never pin-projected.
impl<K, V> Unpin for PrimitiveFuture<'_, K, V> {}

impl<K, V> Future for PrimitiveFuture<'_, K, V> {
    type Output = Response<V>;

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Response<V>> {
        let this = self.get_mut();
        let mut port = this.port.borrow_mut();
        if let Some(op) = this.op.take() {
            port.request = Some(op);
            return Poll::Pending;
        }
        match port.response.take() {
            Some(r) => Poll::Ready(r),
            None => Poll::Pending,
        }
    }
}

/// An `async` protocol body run as a [`Process`].
pub struct Coroutine<K, V, O> {
    port: Rc<RefCell<Port<K, V>>>,
    body: Option<Pin<Box<dyn Future<Output = O>>>>,
    output: Option<O>,
}

impl<K: 'static, V: 'static, O: 'static> Coroutine<K, V, O> {
    pub fn new<F, Fut>(me: ProcessId, n: usize, body: F) -> Self
    where
        F: FnOnce(Shm<K, V>) -> Fut,
        Fut: Future<Output = O> + 'static,
    {
        let port = Rc::new(RefCell::new(Port { request: None, response: None }));
        let shm = Shm { port: Rc::clone(&port), me, n };
        Coroutine { port, body: Some(Box::pin(body(shm))), output: None }
    }

    pub fn is_finished(&self) -> bool {
        self.body.is_none()
    }

    fn advance(&mut self) {
        if self.port.borrow().request.is_some() {
            return;
        }
        let Some(body) = self.body.as_mut() else {
            return;
        };
        let mut cx = Context::from_waker(Waker::noop());
        match body.as_mut().poll(&mut cx) {
            Poll::Ready(out) => {
                self.output = Some(out);
                self.body = None;
            }
            Poll::Pending => {
                assert!(self.port.borrow().request.is_some(), "coroutine suspended without issuing a primitive");
            }
        }
    }
}

impl<K: Clone + 'static, V: Clone + 'static, O: Clone + 'static> Process<K, V> for Coroutine<K, V, O> {
    type Output = O;

    fn next_op(&mut self) -> Option<Op<K, V>> {
        self.advance();
        self.port.borrow().request.clone()
    }

    fn deliver(&mut self, response: Response<V>) {
        let mut port = self.port.borrow_mut();
        port.request = None;
        port.response = Some(response);
    }

    fn output(&self) -> Option<O> {
        self.output.clone()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn p(i: u32) -> ProcessId {
        ProcessId::new(i, 8).unwrap()
    }

    #[test]
    fn register_semantics() {
        let mut k: Kernel<(), u64> = Kernel::new(2);
        assert_eq!(k.snapshot(p(2), ()).unwrap(), vec![None, None]);
        k.write(p(1), (), 5).unwrap();
        assert_eq!(k.snapshot(p(2), ()).unwrap(), vec![Some(5), None]);
        k.write(p(1), (), 6).unwrap();
        k.write(p(2), (), 9).unwrap();
        assert_eq!(k.snapshot(p(1), ()).unwrap(), vec![Some(6), Some(9)]);
        k.crash(p(1));
        assert_eq!(k.write(p(1), (), 7), Err(Error::Crashed(p(1))));
        assert_eq!(k.snapshot(p(1), ()), Err(Error::Crashed(p(1))));
        assert!(k.trace().validate().is_ok());
        assert_eq!(k.trace().events.len(), 6);
    }

    /// Full-information alternation: write the step count, snapshot, repeat.
    fn alternator(me: ProcessId, n: usize, rounds: u64) -> Coroutine<(), u64, u64> {
        Coroutine::new(me, n, move |shm| async move {
            for k in 0..rounds {
                shm.write((), k).await;
                shm.snapshot(()).await;
            }
            rounds
        })
    }

    #[test]
    fn empty_schedule_gives_empty_trace() {
        let mut kernel = Kernel::new(2);
        let mut procs = vec![alternator(p(1), 2, 3), alternator(p(2), 2, 3)];
        let sched = Schedule::script(2, vec![], BTreeMap::new()).unwrap();
        let rec = run(&mut kernel, &mut procs, &sched, 100, |_, _| {});
        assert!(rec.as_trace.events.is_empty());
        assert_eq!(rec.halted, HaltReason::ScriptExhausted);
    }

    #[test]
    fn solo_process_alternates() {
        let mut kernel = Kernel::new(2);
        let mut procs = vec![alternator(p(1), 2, 100), alternator(p(2), 2, 100)];
        let sched = Schedule::script(2, vec![p(1); 7], BTreeMap::new()).unwrap();
        let rec = run(&mut kernel, &mut procs, &sched, 100, |_, _| {});
        assert_eq!(rec.as_trace.events.len(), 7);
        for (k, e) in rec.as_trace.events.iter().enumerate() {
            assert_eq!(matches!(e.kind, AsOp::Update(_)), k % 2 == 0);
        }
        assert!(rec.as_trace.validate().is_ok());
    }

    #[test]
    fn run_is_deterministic_and_respects_crashes() {
        let go = || {
            let mut kernel = Kernel::new(3);
            let mut procs: Vec<_> = ProcessId::all(3).map(|q| alternator(q, 3, 50)).collect();
            let sched = Schedule::seeded(3, 11, BTreeMap::from([(p(2), 20)])).unwrap();
            run(&mut kernel, &mut procs, &sched, 1000, |_, _| {})
        };
        let a = go();
        let b = go();
        assert_eq!(a.as_trace, b.as_trace);
        assert_eq!(a.halted, HaltReason::AllDecided);
        assert!(a.as_trace.validate().is_ok());
        let mut seen = 0;
        for e in &a.as_trace.events {
            if e.actor == p(2) {
                seen += 1;
            }
        }
        assert!(seen <= 20);
        assert_eq!(a.outputs, vec![Some(50), None, Some(50)]);
    }

    #[test]
    fn enumerate_two_single_step_processes() {
        let build = || {
            let kernel: Kernel<(), u64> = Kernel::new(2);
            let procs = vec![alternator(p(1), 2, 1), alternator(p(2), 2, 1)];
            (kernel, procs)
        };
        // two sequences of two primitives each: C(4,2) interleavings
        let count = enumerate_schedules(build, |sched, k, _| {
            assert_eq!(sched.len(), 4);
            assert!(k.trace().validate().is_ok());
        });
        assert_eq!(count, 6);
    }
}
