use std::path::{Path, PathBuf};
use std::process::Command;

use asiis_cli::commands::{check_trace, cmd_run, simulate, RunConfig, ScheduleSource, Status};
use asiis_cli::trace::{Direction, Record, Trace};
use asiis_cli::CliError;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("asiis-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn asiis(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_asiis")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

#[test]
fn reruns_are_byte_identical() {
    let dir = scratch("determinism");
    for direction in [Direction::AsToIis, Direction::IisToAs] {
        for seed in 0..20 {
            let horizon = if direction == Direction::AsToIis { 2000 } else { 500 };
            let mut bytes = Vec::new();
            for attempt in 0..2 {
                let config = RunConfig {
                    output: Some(dir.join(format!("{direction}-{seed}-{attempt}.jsonl"))),
                    ..RunConfig::seeded(direction, 3, seed, horizon)
                };
                let (_, path) = cmd_run(&config).unwrap();
                bytes.push(std::fs::read(path).unwrap());
            }
            assert_eq!(bytes[0], bytes[1], "{direction} seed {seed}");
        }
    }
}

#[test]
fn traces_round_trip() {
    for direction in [Direction::AsToIis, Direction::IisToAs] {
        for seed in 0..10 {
            let outcome = simulate(&RunConfig::seeded(direction, 2 + seed as usize % 3, seed, 800)).unwrap();
            let text = outcome.trace.to_lines();
            let parsed = Trace::parse("mem", &text).unwrap();
            assert_eq!(parsed, outcome.trace);
            assert_eq!(parsed.to_lines(), text);
        }
    }
}

#[test]
fn seeded_as_to_iis_trace_passes_every_check() {
    let outcome = simulate(&RunConfig::seeded(Direction::AsToIis, 3, 42, 5000)).unwrap();
    assert!(outcome.hard_failures.is_empty());
    let report = check_trace(&outcome.trace, None).unwrap();
    assert!(report.passed(), "{}", report.human());
    assert_eq!(report.get("is_axioms").unwrap().status, Status::Pass);
}

#[test]
fn hand_edited_view_reports_immediacy_with_round_and_pair() {
    let mut trace = simulate(&RunConfig::seeded(Direction::AsToIis, 3, 42, 5000)).unwrap().trace;
    let target = trace
        .records
        .iter_mut()
        .find_map(|r| match r {
            Record::SimView { process, round: 5, view: Some(v), .. } if process.get() == 2 && v.len() == 3 => Some(v),
            _ => None,
        })
        .expect("round 5 view of p2 over all three");
    target.remove(asiis::ProcessId::new(3, 3).unwrap());
    let report = check_trace(&trace, None).unwrap();
    let axioms = report.get("is_axioms").unwrap();
    assert_eq!(axioms.status, Status::Fail);
    assert!(axioms.detail.contains("round 5") && axioms.detail.contains("immediacy"), "{}", axioms.detail);
    assert!(axioms.detail.contains("(p1, p2)") || axioms.detail.contains("(p3, p2)"), "{}", axioms.detail);
}

#[test]
fn iis_to_as_reports_chain_and_set_equality() {
    let config = RunConfig {
        schedule: ScheduleSource::Script(workspace_file("schedules/cycle3.sched")),
        n: None,
        ..RunConfig::seeded(Direction::IisToAs, 3, 0, 1000)
    };
    let report = check_trace(&simulate(&config).unwrap().trace, None).unwrap();
    for name in ["containment", "unit_increments", "as_replay", "outputs_replay", "theorem2_window"] {
        assert_eq!(report.get(name).unwrap().status, Status::Pass, "{}", report.human());
    }
}

#[test]
fn baseline_cycle_starves_process_two() {
    let dir = scratch("baseline");
    let out = dir.join("b.jsonl");
    let script = workspace_file("schedules/cycle3.sched");
    let (code, stdout, _) = asiis(&[
        "run",
        "--direction",
        "iis-to-as",
        "--mode",
        "baseline",
        "--schedule",
        script.to_str().unwrap(),
        "--horizon",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("p1=500 p2=0 p3=500"), "{stdout}");
    let (code, stdout, _) = asiis(&["check", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stdout.contains("FAIL theorem2_window"), "{stdout}");
    assert!(stdout.contains("PASS containment"), "{stdout}");
}

#[test]
fn exit_codes() {
    let dir = scratch("exit");
    let (code, _, err) = asiis(&["run", "--direction", "as-to-iis", "--seed", "1", "--n", "3", "--horizon", "0"]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) =
        asiis(&["run", "--direction", "as-to-iis", "--mode", "baseline", "--seed", "1", "--n", "3", "--horizon", "9"]);
    assert_eq!(code, 2);

    let bad = dir.join("bad.sched");
    std::fs::write(&bad, "1 | 2\n# fine\n1 | two\n").unwrap();
    let (code, _, err) = asiis(&["run", "--direction", "iis-to-as", "--schedule", bad.to_str().unwrap(), "--horizon", "5"]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.sched:3:"), "{err}");

    let corrupt = dir.join("corrupt.jsonl");
    std::fs::write(&corrupt, "{\"type\":\"iis_round\",\"round\":1,\"blocks\":[[1]]}\n").unwrap();
    let (code, _, err) = asiis(&["check", corrupt.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains(":1:"), "{err}");

    let good = dir.join("good.jsonl");
    let (code, _, _) = asiis(&[
        "run", "--direction", "as-to-iis", "--seed", "3", "--n", "3", "--horizon", "3000", "--out", good.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (code, stdout, _) = asiis(&["check", good.to_str().unwrap(), "--json"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("\"is_axioms\""));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = scratch("env");
    let out = Command::new(env!("CARGO_BIN_EXE_asiis"))
        .args(["run", "--direction", "iis-to-as", "--seed", "5", "--n", "2", "--horizon", "50"])
        .env(asiis_cli::commands::OUT_DIR_VAR, &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("iis-to-as-seed5.jsonl").exists());
}

#[test]
fn missing_trace_is_a_usage_error() {
    let err = Trace::read(Path::new("/nonexistent/trace.jsonl")).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }));
}

#[test]
fn fuzz_exit_status_follows_failures() {
    let (code, stdout, _) = asiis(&["fuzz", "--n", "3", "--seeds", "0..3", "--direction", "as-to-iis", "--horizon", "3000"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("3 runs, 0 failed"));
}
