//! `run`, `check` and `fuzz`, as library functions the binary wraps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use asiis::agreement::AgreementObject;
use asiis::analysis::{check_is_axioms, proposition1_crosscheck, Axiom, AxiomViolation, WindowParams};
use asiis::as_to_iis::{self, BoardCell, BoardIndex, BoardView, Key, PRIMITIVES_PER_ITERATION};
use asiis::iis_to_as::{self, Alg2Record, HelpMode, Preference, SnapshotOutput};
use asiis::sched::Op;
use asiis::schedule::{random_crashes, PartitionSchedule, Schedule};
use asiis::{
    AsEvent, AsOp, AsTrace, CounterVector, Error, IisTrace, OrderedPartition, ProcSet, ProcessId, RoundLevel,
    StatusEntry, View,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::script::{parse_as, parse_iis};
use crate::trace::{Direction, EventOp, Meta, Record, Source, Trace, FORMAT_VERSION};
use crate::{CliError, Result};

/// Environment variable naming the directory for traces written without
/// an explicit `--out`.
pub const OUT_DIR_VAR: &str = "ASIIS_OUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleSource {
    Script(PathBuf),
    Seed(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Required for seeds; inferred from the script otherwise.
    pub n: Option<usize>,
    pub direction: Direction,
    /// iis-to-as only; helping when unset.
    pub mode: Option<HelpMode>,
    pub preference: Preference,
    pub schedule: ScheduleSource,
    pub horizon: u64,
    pub window: Option<WindowParams>,
    /// Per-process crash (or departure) probability for seeded runs.
    pub crash_prob: f64,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn seeded(direction: Direction, n: usize, seed: u64, horizon: u64) -> Self {
        RunConfig {
            n: Some(n),
            direction,
            mode: None,
            preference: Preference::default(),
            schedule: ScheduleSource::Seed(seed),
            horizon,
            window: None,
            crash_prob: 0.3,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(CliError::Usage("horizon must be at least 1".into()));
        }
        if self.direction == Direction::AsToIis && self.mode.is_some() {
            return Err(CliError::Usage("--mode applies to iis-to-as only".into()));
        }
        if !(0.0..=1.0).contains(&self.crash_prob) {
            return Err(CliError::Usage(format!("crash probability {} outside [0, 1]", self.crash_prob)));
        }
        if matches!(self.schedule, ScheduleSource::Seed(_)) && self.n.is_none() {
            return Err(CliError::Usage("seeded runs need --n".into()));
        }
        Ok(())
    }

    /// `--out`, else `$ASIIS_OUT_DIR/<direction>-<seed or script>.jsonl`.
    pub fn output_path(&self) -> PathBuf {
        if let Some(out) = &self.output {
            return out.clone();
        }
        let dir = std::env::var_os(OUT_DIR_VAR).map_or_else(|| PathBuf::from("."), PathBuf::from);
        let stem = match &self.schedule {
            ScheduleSource::Seed(seed) => format!("seed{seed}"),
            ScheduleSource::Script(path) => {
                path.file_stem().map_or_else(|| "script".into(), |s| s.to_string_lossy().into_owned())
            }
        };
        dir.join(format!("{}-{stem}.jsonl", self.direction))
    }
}

/// A finished simulation: its trace, the invariants that fired while
/// producing it, and a few human-readable summary lines.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    pub hard_failures: Vec<String>,
    pub summary: Vec<String>,
}

fn read_script(path: &Path) -> Result<(String, Source)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let digest = Sha256::digest(text.as_bytes());
    let sha256 = digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });
    Ok((text, Source::Script { sha256 }))
}

/// Runs the configured simulation in memory.
pub fn simulate(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    match config.direction {
        Direction::AsToIis => simulate_as_to_iis(config),
        Direction::IisToAs => simulate_iis_to_as(config),
    }
}

/// [`simulate`], then write the trace.
pub fn cmd_run(config: &RunConfig) -> Result<(RunOutcome, PathBuf)> {
    let outcome = simulate(config)?;
    let path = config.output_path();
    outcome.trace.write(&path)?;
    Ok((outcome, path))
}

fn object_name(key: &Key) -> String {
    let (kind, (p, at)) = match key {
        Key::Board => return "board".into(),
        Key::Agreement(AgreementObject::Proposals(id)) => ("proposals", id),
        Key::Agreement(AgreementObject::Graded(id)) => ("graded", id),
        Key::Agreement(AgreementObject::Resolution(id)) => ("resolution", id),
    };
    format!("{kind}/{}/{}.{}", p.get(), at.round, at.level)
}

fn simulate_as_to_iis(config: &RunConfig) -> Result<RunOutcome> {
    let (schedule, source) = match &config.schedule {
        ScheduleSource::Script(path) => {
            let (text, source) = read_script(path)?;
            (parse_as(&path.display().to_string(), &text, config.n)?.schedule, source)
        }
        ScheduleSource::Seed(seed) => {
            let n = config.n.expect("validated");
            let crashes = random_crashes(n, *seed, config.crash_prob, config.horizon / 2);
            (Schedule::seeded(n, *seed, crashes)?, Source::Seed { seed: *seed, crash_prob: config.crash_prob })
        }
    };
    let n = schedule.n;
    let mut events = Vec::new();
    let run = as_to_iis::simulate_observed(&schedule, config.horizon, None, |step| {
        let op = match step.op {
            Op::Write { .. } => EventOp::Update,
            Op::Snapshot { .. } => EventOp::Snapshot,
        };
        events.push(Record::AsEvent {
            step: step.index,
            actor: step.actor,
            op,
            object: object_name(step.op.object()),
            value: None,
            snapshot: None,
        });
    });

    let mut hard_failures = Vec::new();
    let safety = as_to_iis::check_safety(&run);
    for (r, v) in &safety.axiom_violations {
        hard_failures.push(format!("round {r}: {}", describe_violation(v)));
    }
    hard_failures.extend(safety.agreement_violations.iter().cloned());
    for (at, who) in &safety.occupancy_violations {
        hard_failures.push(format!("{} processes {who:?} at {at}", who.len()));
    }
    if !safety.wait_free {
        hard_failures.push(format!("an iteration took {} primitives", safety.max_primitives));
    }
    let iis = as_to_iis::extract_iis_trace(&run).unwrap_or_else(|e| {
        hard_failures.push(e.to_string());
        IisTrace { n, rounds: Vec::new() }
    });

    let meta = Meta {
        format: FORMAT_VERSION,
        n,
        direction: Direction::AsToIis,
        mode: None,
        preference: None,
        source,
        horizon: config.horizon,
        window: config.window.unwrap_or_else(|| WindowParams::defaults(n)),
        steps: run.steps,
        crashed: run.crashed,
        stepped: run.stepped,
        max_primitives: Some(run.max_primitives),
    };
    let mut records = events;
    for (i, cell) in run.board.cells.iter().enumerate() {
        let Some(cell) = cell else { continue };
        for (p, log) in cell.rows.iter().enumerate() {
            for e in log.iter() {
                records.push(Record::StatusEntry {
                    simulator: ProcessId::from_index(i),
                    process: ProcessId::from_index(p),
                    disposition: e.disposition,
                    round: e.at.round,
                    level: e.at.level,
                });
            }
        }
    }
    for r in 1..=run.index.rounds() as u64 {
        for p in ProcessId::all(n) {
            if let Some(view) = run.index.view(p, r) {
                records.push(Record::SimView { process: p, round: r, view: Some(view), vector: None, helped: None });
            }
        }
    }
    push_rounds(&mut records, &iis);

    let summary = vec![
        format!("{} activations, crashed {:?}", run.steps, run.crashed),
        format!(
            "simulated rounds completed: {}",
            ProcessId::all(n).map(|p| format!("{p}={}", run.index.completed(p))).collect::<Vec<_>>().join(" ")
        ),
        format!("extracted IIS rounds: {}", iis.len()),
    ];
    Ok(RunOutcome { trace: Trace { meta, records }, hard_failures, summary })
}

fn push_rounds(records: &mut Vec<Record>, trace: &IisTrace) {
    for (k, partition) in trace.rounds.iter().enumerate() {
        records.push(Record::IisRound { round: k as u64 + 1, blocks: partition.blocks().to_vec() });
    }
}

fn simulate_iis_to_as(config: &RunConfig) -> Result<RunOutcome> {
    let (n, schedule, source) = match &config.schedule {
        ScheduleSource::Script(path) => {
            let (text, source) = read_script(path)?;
            let script = parse_iis(&path.display().to_string(), &text, config.n)?;
            (script.n, script.schedule, source)
        }
        ScheduleSource::Seed(seed) => {
            let n = config.n.expect("validated");
            let departures = random_crashes(n, *seed, config.crash_prob, config.horizon / 2);
            (n, PartitionSchedule::Seeded { seed: *seed, departures }, Source::Seed {
                seed: *seed,
                crash_prob: config.crash_prob,
            })
        }
    };
    let trace = IisTrace::new(n, schedule.rounds(n, config.horizon as usize)?)?;
    if trace.is_empty() {
        return Err(CliError::Usage("schedule has no rounds".into()));
    }
    let mode = config.mode.unwrap_or_default();
    let mut hard_failures = Vec::new();
    let record = match iis_to_as::simulate(&trace, mode, config.preference) {
        Ok(record) => record,
        Err(e @ Error::Invariant(_)) => {
            hard_failures.push(e.to_string());
            Alg2Record { n, mode, outputs: Vec::new(), final_states: Vec::new() }
        }
        Err(e) => return Err(e.into()),
    };
    let as_trace = match iis_to_as::extract_as_trace(n, &record.outputs).and_then(|t| t.validate().map(|()| t)) {
        Ok(t) => t,
        Err(e) => {
            hard_failures.push(e.to_string());
            AsTrace::new(n)
        }
    };

    let meta = Meta {
        format: FORMAT_VERSION,
        n,
        direction: Direction::IisToAs,
        mode: Some(mode),
        preference: Some(config.preference),
        source,
        horizon: config.horizon,
        window: config.window.unwrap_or_else(|| WindowParams::defaults(n)),
        steps: trace.len() as u64,
        crashed: ProcSet::full(n).difference(trace.participants(trace.len())),
        stepped: trace.participants(1),
        max_primitives: None,
    };
    let mut records = Vec::new();
    push_rounds(&mut records, &trace);
    for o in &record.outputs {
        records.push(Record::SimView {
            process: o.by,
            round: o.round as u64,
            view: None,
            vector: Some(o.vector.clone()),
            helped: Some(o.helped),
        });
    }
    for (k, e) in as_trace.events.iter().enumerate() {
        let (op, value, snapshot) = match &e.kind {
            AsOp::Update(v) => (EventOp::Update, Some(*v), None),
            AsOp::Snapshot(s) => (EventOp::Snapshot, None, Some(s.clone())),
        };
        records.push(Record::AsEvent { step: k as u64, actor: e.actor, op, object: "memory".into(), value, snapshot });
    }
    let counts = record.output_counts();
    let summary = vec![
        format!("{} rounds, {mode:?} mode, departed {:?}", trace.len(), meta.crashed),
        format!(
            "snapshot outputs: {}",
            ProcessId::all(n).map(|p| format!("{p}={}", counts[p.index()])).collect::<Vec<_>>().join(" ")
        ),
    ];
    Ok(RunOutcome { trace: Trace { meta, records }, hard_failures, summary })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Not applicable to this trace, e.g. too short for any window.
    Skip,
    /// Reported without affecting the verdict.
    Info,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub direction: Direction,
    pub n: usize,
    pub window: WindowParams,
    pub properties: Vec<PropertyResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.status != Status::Fail)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.properties.iter().filter(|p| p.status == Status::Fail).map(|p| p.name).collect()
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn human(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            let tag = match p.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skip => "SKIP",
                Status::Info => "INFO",
            };
            let _ = writeln!(out, "{tag} {}: {}", p.name, p.detail);
        }
        out
    }

    fn push(&mut self, name: &'static str, status: Status, detail: impl Into<String>) {
        self.properties.push(PropertyResult { name, status, detail: detail.into() });
    }

    fn verdict(&mut self, name: &'static str, failures: &[String], ok: impl Into<String>) {
        match failures.first() {
            None => self.push(name, Status::Pass, ok),
            Some(first) => {
                let more = if failures.len() > 1 { format!(" (+{} more)", failures.len() - 1) } else { String::new() };
                self.push(name, Status::Fail, format!("{first}{more}"))
            }
        }
    }
}

fn describe_violation(v: &AxiomViolation) -> String {
    match v.axiom {
        Axiom::SelfInclusion => format!("self-inclusion fails for {}", v.i),
        Axiom::Containment => format!("containment fails between {} and {}", v.i, v.j),
        Axiom::Immediacy => {
            format!("immediacy fails for pair ({}, {}): {} is in V_{} but V_{} is not contained in it", v.i, v.j, v.i, v.j, v.i)
        }
    }
}

fn malformed(msg: impl Into<String>) -> CliError {
    CliError::Malformed(msg.into())
}

fn check_process(n: usize, p: ProcessId) -> Result<ProcessId> {
    if p.index() >= n {
        return Err(malformed(format!("{p} beyond n={n}")));
    }
    Ok(p)
}

/// The IIS rounds of a trace, in order.
fn rounds_of(trace: &Trace) -> Result<Vec<Vec<ProcSet>>> {
    let mut rounds = Vec::new();
    for r in &trace.records {
        if let Record::IisRound { round, blocks } = r {
            if *round != rounds.len() as u64 + 1 {
                return Err(malformed(format!("iis_round {round} out of order")));
            }
            rounds.push(blocks.clone());
        }
    }
    Ok(rounds)
}

fn build_iis(n: usize, rounds: Vec<Vec<ProcSet>>) -> asiis::Result<IisTrace> {
    let partitions = rounds.into_iter().map(OrderedPartition::new).collect::<asiis::Result<Vec<_>>>()?;
    IisTrace::new(n, partitions)
}

fn window_status(report: &mut CheckReport, name: &'static str, result: asiis::Result<(bool, String)>) {
    match result {
        Ok((true, detail)) => report.push(name, Status::Pass, detail),
        Ok((false, detail)) => report.push(name, Status::Fail, detail),
        Err(Error::InsufficientData(msg)) => report.push(name, Status::Skip, msg),
        Err(e) => report.push(name, Status::Fail, e.to_string()),
    }
}

/// Runs every checker that applies to the trace's direction. `window`
/// overrides the parameters recorded in the header.
pub fn check_trace(trace: &Trace, window: Option<WindowParams>) -> Result<CheckReport> {
    let meta = &trace.meta;
    if meta.n == 0 || meta.n > asiis::model::MAX_PROCESSES {
        return Err(malformed(format!("system size {}", meta.n)));
    }
    let mut report =
        CheckReport { direction: meta.direction, n: meta.n, window: window.unwrap_or(meta.window), properties: Vec::new() };
    match meta.direction {
        Direction::AsToIis => check_as_to_iis(trace, &mut report)?,
        Direction::IisToAs => check_iis_to_as(trace, &mut report)?,
    }
    Ok(report)
}

fn check_as_to_iis(trace: &Trace, report: &mut CheckReport) -> Result<()> {
    let meta = &trace.meta;
    let n = meta.n;
    let params = report.window;
    let mut views: BTreeMap<u64, BTreeMap<ProcessId, View>> = BTreeMap::new();
    let mut rows: Vec<Vec<Vec<StatusEntry>>> = vec![vec![Vec::new(); n]; n];
    for r in &trace.records {
        match r {
            Record::SimView { process, round, view, .. } => {
                let view = view.ok_or_else(|| malformed(format!("sim_view of {process} in round {round} has no view")))?;
                if *round == 0 || views.entry(*round).or_default().insert(check_process(n, *process)?, view).is_some() {
                    return Err(malformed(format!("bad or repeated sim_view for {process} in round {round}")));
                }
            }
            Record::StatusEntry { simulator, process, disposition, round, level } => {
                if *round == 0 || *level == 0 || *level as usize > n {
                    return Err(malformed(format!("status entry at ({round}, {level})")));
                }
                let at = RoundLevel::new(*round, *level);
                rows[check_process(n, *simulator)?.index()][check_process(n, *process)?.index()]
                    .push(StatusEntry { disposition: *disposition, at });
            }
            _ => {}
        }
    }

    let mut failures = Vec::new();
    for (r, vs) in &views {
        let listed: Vec<(ProcessId, View)> = vs.iter().map(|(p, v)| (*p, *v)).collect();
        for v in check_is_axioms(&listed).violations {
            failures.push(format!("round {r}: {}", describe_violation(&v)));
        }
    }
    report.verdict("is_axioms", &failures, format!("{} rounds of simulated views", views.len()));

    let board = BoardView {
        n,
        cells: rows
            .into_iter()
            .map(|rows| Some(Arc::new(BoardCell { counter: 0, rows: rows.into_iter().map(Arc::new).collect() })))
            .collect(),
    };
    let mut index = BoardIndex::new(n);
    index.ingest(&board);

    let mut failures = Vec::new();
    for r in 1..=index.rounds() as u64 {
        for level in 1..=n as u32 {
            let at = RoundLevel::new(r, level);
            let who = index.reached(at);
            if who.len() > level as usize {
                failures.push(format!("{} processes {who:?} logged at {at}", who.len()));
            }
        }
    }
    report.verdict("level_occupancy", &failures, "at most l processes at every level l");

    let mut failures = Vec::new();
    let rounds = (index.rounds() as u64).max(views.keys().last().copied().unwrap_or(0));
    for r in 1..=rounds {
        for p in ProcessId::all(n) {
            let listed = views.get(&r).and_then(|vs| vs.get(&p)).copied();
            let derived = index.view(p, r);
            if listed != derived {
                failures.push(format!("round {r}: sim_view of {p} is {listed:?}, status entries give {derived:?}"));
            }
            if let (Some(v), Some(level)) = (derived, index.completion_level(p, r)) {
                if v.len() != level as usize {
                    failures.push(format!("round {r}: {p} completed at level {level} with {} processes", v.len()));
                }
            }
        }
    }
    report.verdict("status_views", &failures, "views agree with the status logs");

    match meta.max_primitives {
        Some(m) if m <= PRIMITIVES_PER_ITERATION => {
            report.push("wait_free", Status::Pass, format!("at most {m} primitives per iteration"))
        }
        Some(m) => report.push("wait_free", Status::Fail, format!("an iteration took {m} primitives")),
        None => report.push("wait_free", Status::Skip, "no primitive count in the header"),
    }

    let live = ProcSet::full(n).difference(meta.crashed);
    let common = live.iter().map(|p| index.completed(p)).min().unwrap_or(0);
    let iis = match build_iis(n, rounds_of(trace)?) {
        Ok(iis) => iis,
        Err(e) => {
            report.push("iis_rounds", Status::Fail, e.to_string());
            return Ok(());
        }
    };
    let mut failures = Vec::new();
    if iis.len() as u64 != common {
        failures.push(format!("{} rounds listed, live simulators completed {common}", iis.len()));
    }
    for (r, vs) in views.iter().filter(|(r, _)| **r <= iis.len() as u64) {
        for (p, v) in vs {
            if iis.view(*p, *r as usize) != Some(*v) {
                failures.push(format!("round {r}: partition gives {p} {:?}, sim_view {v:?}", iis.view(*p, *r as usize)));
            }
        }
    }
    report.verdict("iis_rounds", &failures, format!("{} rounds match the views", iis.len()));

    let settled = meta.crashed.iter().map(|p| index.completed(p)).max().unwrap_or(0);
    let theorem = as_to_iis::theorem1_window(&iis, meta.crashed, meta.stepped, settled, &params);
    window_status(
        report,
        "theorem1_window",
        theorem.as_ref().map_err(Clone::clone).map(|t| {
            (
                t.sets_equal,
                format!("correct {:?}, strongly correct {:?} (burn-in after round {settled})", t.correct, t.strongly_correct),
            )
        }),
    );
    window_status(
        report,
        "participation",
        theorem.map(|t| match t.participation_mismatches.first() {
            None => (true, format!("every live simulator sees {:?}", meta.stepped)),
            Some(m) => (false, format!("{} is aware of {:?}, scheduled {:?}", m.simulator, m.trace, m.stepped)),
        }),
    );
    proposition1(report, &iis, &params);
    Ok(())
}

fn proposition1(report: &mut CheckReport, iis: &IisTrace, params: &WindowParams) {
    window_status(
        report,
        "proposition1",
        proposition1_crosscheck(iis, params).map(|c| match c.witness {
            None => (c.agree, format!("both forms give {:?}", c.reachability)),
            Some(w) => (
                c.agree,
                format!("window at {}: reachability {:?}, sink {:?}", w.start, w.reachability, w.sink),
            ),
        }),
    );
}

fn check_iis_to_as(trace: &Trace, report: &mut CheckReport) -> Result<()> {
    let meta = &trace.meta;
    let n = meta.n;
    let params = report.window;
    let mut outputs = Vec::new();
    let mut events = AsTrace::new(n);
    for r in &trace.records {
        match r {
            Record::SimView { process, round, vector, helped, .. } => {
                let vector =
                    vector.clone().ok_or_else(|| malformed(format!("output of {process} in round {round} has no vector")))?;
                outputs.push(SnapshotOutput {
                    round: *round as usize,
                    by: check_process(n, *process)?,
                    vector,
                    helped: helped.unwrap_or(false),
                });
            }
            Record::AsEvent { actor, op, value, snapshot, .. } => {
                let kind = match (op, value, snapshot) {
                    (EventOp::Update, Some(v), None) => AsOp::Update(*v),
                    (EventOp::Snapshot, None, Some(s)) => AsOp::Snapshot(s.clone()),
                    _ => return Err(malformed(format!("as_event by {actor} has the wrong payload for {op:?}"))),
                };
                events.events.push(AsEvent { actor: check_process(n, *actor)?, object: (), kind });
            }
            _ => {}
        }
    }

    let mut sorted: Vec<&SnapshotOutput> = outputs.iter().collect();
    sorted.sort_by_key(|o| (o.vector.0.iter().sum::<u64>(), o.round, o.by));
    let mut containment = Vec::new();
    let mut increments = Vec::new();
    let zero = SnapshotOutput { round: 0, by: ProcessId::from_index(0), vector: CounterVector::zeros(n), helped: false };
    for pair in std::iter::once(&zero).chain(sorted.iter().copied()).collect::<Vec<_>>().windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.vector.len() != n {
            containment.push(format!("output of {} in round {} has {} entries", b.by, b.round, b.vector.len()));
        } else if !a.vector.le(&b.vector) {
            containment.push(format!(
                "{:?} ({} round {}) and {:?} ({} round {}) are incomparable",
                a.vector.0, a.by, a.round, b.vector.0, b.by, b.round
            ));
        } else if let Some(j) = (0..n).find(|&j| b.vector.0[j] > a.vector.0[j] + 1) {
            increments.push(format!(
                "p{} jumps from {} to {} at the output of {} in round {}",
                j + 1,
                a.vector.0[j],
                b.vector.0[j],
                b.by,
                b.round
            ));
        }
    }
    report.verdict("containment", &containment, format!("{} outputs form a chain", outputs.len()));
    report.verdict("unit_increments", &increments, "consecutive outputs differ by at most one per entry");

    let mut replay = Vec::new();
    if let Err(e) = events.validate() {
        replay.push(e.to_string());
    }
    match iis_to_as::extract_as_trace(n, &outputs) {
        Ok(extracted) if extracted.events != events.events => {
            replay.push("as_event records differ from the history implied by the outputs".into())
        }
        Ok(_) => {}
        Err(e) => replay.push(e.to_string()),
    }
    report.verdict("as_replay", &replay, format!("{} events replay", events.events.len()));

    let iis = match build_iis(n, rounds_of(trace)?) {
        Ok(iis) => iis,
        Err(e) => {
            report.push("iis_rounds", Status::Fail, e.to_string());
            return Ok(());
        }
    };
    report.push("iis_rounds", Status::Pass, format!("{} nested rounds", iis.len()));

    match meta.mode {
        Some(mode) => {
            let rerun = iis_to_as::simulate(&iis, mode, meta.preference.unwrap_or_default());
            let failures = match rerun {
                Ok(rec) if rec.outputs == outputs => Vec::new(),
                Ok(rec) => {
                    let first = rec.outputs.iter().zip(&outputs).position(|(a, b)| a != b).unwrap_or(0);
                    vec![format!(
                        "recorded outputs diverge from a re-run at output {first} ({} recorded, {} re-run)",
                        outputs.len(),
                        rec.outputs.len()
                    )]
                }
                Err(e) => vec![e.to_string()],
            };
            report.verdict("outputs_replay", &failures, format!("{mode:?} re-run reproduces every output"));
        }
        None => report.push("outputs_replay", Status::Skip, "no mode in the header"),
    }

    let record = Alg2Record { n, mode: meta.mode.unwrap_or_default(), outputs, final_states: Vec::new() };
    let theorem = iis_to_as::check_theorem2(&iis, &record, &params);
    window_status(
        report,
        "theorem2_window",
        theorem.as_ref().map_err(Clone::clone).map(|t| {
            (
                t.sets_equal,
                format!(
                    "strongly correct {:?}, outputting in every window {:?} (burn-in after round {})",
                    t.strongly_correct, t.outputting, t.settled
                ),
            )
        }),
    );
    if let Ok(t) = theorem {
        let detail = match t.participation_mismatches.first() {
            None => "every strongly correct process matches the simulated participants".to_string(),
            Some(m) => format!(
                "{} of {} differ; first {} is aware of {:?}, simulated {:?}",
                t.participation_mismatches.len(),
                t.strongly_correct.len(),
                m.process,
                m.iis,
                m.simulated
            ),
        };
        report.push("participation", Status::Info, detail);
    }
    proposition1(report, &iis, &params);
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuzzConfig {
    pub n: usize,
    pub seeds: Range<u64>,
    pub directions: Vec<Direction>,
    pub horizon: u64,
    pub crash_prob: f64,
    pub window: Option<WindowParams>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FuzzRow {
    pub direction: Direction,
    pub seed: u64,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FuzzSummary {
    pub runs: usize,
    /// Failing runs only.
    pub failed: Vec<FuzzRow>,
    /// Failure counts per property name.
    pub by_property: BTreeMap<String, usize>,
}

impl FuzzSummary {
    pub fn passed(&self) -> bool {
        self.failed.is_empty()
    }
}

/// Simulates, serializes, re-parses and checks one seeded run.
pub fn fuzz_one(config: &RunConfig) -> Result<Vec<String>> {
    let outcome = simulate(config)?;
    let mut failures: Vec<String> = outcome.hard_failures.iter().map(|f| format!("hard invariant: {f}")).collect();
    let text = outcome.trace.to_lines();
    let parsed = Trace::parse("<memory>", &text)?;
    if parsed != outcome.trace {
        failures.push("round_trip".into());
    }
    let report = check_trace(&parsed, config.window)?;
    failures.extend(report.failures().into_iter().map(String::from));
    Ok(failures)
}

pub fn cmd_fuzz(config: &FuzzConfig, mut progress: impl FnMut(&FuzzRow)) -> Result<FuzzSummary> {
    let mut summary = FuzzSummary::default();
    for &direction in &config.directions {
        for seed in config.seeds.clone() {
            let run = RunConfig {
                crash_prob: config.crash_prob,
                window: config.window,
                ..RunConfig::seeded(direction, config.n, seed, config.horizon)
            };
            let row = FuzzRow { direction, seed, failures: fuzz_one(&run)? };
            progress(&row);
            summary.runs += 1;
            for f in &row.failures {
                let key = f.split(':').next().unwrap_or(f).to_string();
                *summary.by_property.entry(key).or_default() += 1;
            }
            if !row.failures.is_empty() {
                summary.failed.push(row);
            }
        }
    }
    Ok(summary)
}
