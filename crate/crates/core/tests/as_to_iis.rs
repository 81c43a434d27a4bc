use std::collections::BTreeMap;

use asiis::analysis::{check_is_axioms, WindowParams};
use asiis::as_to_iis::{
    check_safety, check_theorem1, extract_iis_trace, simulate, simulators, BoardIndex, BoardView, Key,
};
use asiis::sched::{enumerate_schedules, Kernel};
use asiis::schedule::{random_crashes, Schedule};
use asiis::{Disposition, ProcSet, ProcessId, RoundLevel, StatusEntry, View};

/// A lone simulator always drives itself: at `(r, ℓ)` it has seen only
/// itself, so it moves down a level until ℓ = 1 and then into round r + 1.
fn solo_oracle(n: usize, iterations: usize) -> Vec<StatusEntry> {
    let top = n as u32;
    let mut log = vec![StatusEntry::run(1, top)];
    let mut at = RoundLevel::new(1, top);
    for _ in 0..iterations {
        at = if at.level == 1 { RoundLevel::new(at.round + 1, top) } else { RoundLevel::new(at.round, at.level - 1) };
        log.push(StatusEntry { disposition: Disposition::Run, at });
    }
    log
}

#[test]
fn solo_runs_match_the_straight_line_oracle() {
    for n in 1..=4 {
        for me in ProcessId::all(n) {
            let mut crashes = BTreeMap::new();
            for q in ProcessId::all(n).filter(|&q| q != me) {
                crashes.insert(q, 0);
            }
            let schedule = Schedule::seeded(n, 1, crashes).unwrap();
            let run = simulate(&schedule, 400, None);
            let iterations = run.iterations[me.index()] as usize;
            let cell = run.board.cells[me.index()].as_ref().unwrap();
            // The last iteration may have stopped before its append.
            let log = &cell.rows[me.index()];
            let oracle = solo_oracle(n, iterations);
            assert!(log.len() == oracle.len() || log.len() + 1 == oracle.len(), "n={n} {me}");
            assert_eq!(log.as_slice(), &oracle[..log.len()], "n={n} {me}");
            for r in 1..=run.index.completed(me) {
                assert_eq!(run.index.view(me, r), Some(ProcSet::singleton(me)));
            }
            assert!(check_safety(&run).passed());
        }
    }
}

fn board_checks(n: usize, kernel: &Kernel<Key, asiis::as_to_iis::Cell>) {
    let board = BoardView::decode(n, kernel.memory().cells(&Key::Board));
    let mut index = BoardIndex::new(n);
    index.ingest(&board);
    for r in 1..=index.rounds() as u64 {
        for level in 1..=n as u32 {
            assert!(index.reached(RoundLevel::new(r, level)).len() <= level as usize);
        }
        let views: Vec<(ProcessId, View)> =
            ProcessId::all(n).filter_map(|p| index.view(p, r).map(|v| (p, v))).collect();
        assert!(check_is_axioms(&views).passed(), "round {r}: {views:?}");
        for (p, v) in &views {
            assert_eq!(v.len() as u32, index.completion_level(*p, r).unwrap());
        }
    }
}

#[test]
fn two_simulators_one_iteration_each_exhaustive() {
    let count = enumerate_schedules(|| simulators(2, Some(1)), |_, kernel, _| board_checks(2, kernel));
    assert!(count > 1000, "{count}");
}

#[test]
fn fuzzed_runs_pass_safety_and_windows() {
    for seed in 0..40u64 {
        let n = 2 + (seed % 3) as usize;
        let horizon = 6000;
        let schedule = Schedule::seeded(n, seed, random_crashes(n, seed, 0.3, horizon / 2)).unwrap();
        let run = simulate(&schedule, horizon, None);
        let safety = check_safety(&run);
        assert!(safety.passed(), "seed {seed}: {safety:?}");
        let trace = extract_iis_trace(&run).unwrap();
        let report = check_theorem1(&run, &trace, &WindowParams::defaults(n)).unwrap();
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}
