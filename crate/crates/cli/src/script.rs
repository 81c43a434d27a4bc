//! Text schedule scripts.
//!
//! IIS scripts list one round per line as ordered blocks separated by `|`, so
//! `1 | 2 3` is the partition `{1},{2,3}`. A `repeat` line makes the listed
//! rounds cycle. AS scripts list one process id per line; `crash <id>` crashes
//! that process at the current position. `#` starts a comment in both.

use std::collections::BTreeMap;

use asiis::model::MAX_PROCESSES;
use asiis::schedule::{PartitionSchedule, Schedule};
use asiis::{OrderedPartition, ProcSet, ProcessId};

use crate::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct IisScript {
    pub n: usize,
    pub schedule: PartitionSchedule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsScript {
    pub n: usize,
    pub schedule: Schedule,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(k, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((k + 1, line))
    })
}

fn parse_id(path: &str, line: usize, token: &str, n: Option<usize>) -> Result<ProcessId> {
    let id: u32 = token.parse().map_err(|_| CliError::parse(path, line, format!("expected a process id, got `{token}`")))?;
    let bound = n.unwrap_or(MAX_PROCESSES);
    ProcessId::new(id, bound).map_err(|_| CliError::parse(path, line, format!("process id {id} outside 1..={bound}")))
}

fn system_size(path: &str, given: Option<usize>, seen: ProcSet) -> Result<usize> {
    let inferred = seen.iter().map(|p| p.get() as usize).max().unwrap_or(0);
    match given {
        Some(n) => Ok(n),
        None if inferred > 0 => Ok(inferred),
        None => Err(CliError::parse(path, 0, "script names no process")),
    }
}

pub fn parse_iis(path: &str, text: &str, n: Option<usize>) -> Result<IisScript> {
    let mut rounds: Vec<(usize, OrderedPartition)> = Vec::new();
    let mut repeat = false;
    let mut seen = ProcSet::EMPTY;
    for (line, content) in content_lines(text) {
        if content == "repeat" {
            repeat = true;
            continue;
        }
        let mut blocks = Vec::new();
        for block in content.split('|') {
            let mut set = ProcSet::EMPTY;
            for token in block.split_whitespace() {
                set.insert(parse_id(path, line, token, n)?);
            }
            if set.is_empty() {
                return Err(CliError::parse(path, line, "empty block"));
            }
            blocks.push(set);
        }
        let partition = OrderedPartition::new(blocks).map_err(|e| CliError::parse(path, line, e.to_string()))?;
        seen = seen.union(partition.participants());
        if let Some((_, prev)) = rounds.last() {
            if !partition.participants().is_subset(prev.participants()) {
                return Err(CliError::parse(path, line, "round has a participant missing from the round before"));
            }
        }
        rounds.push((line, partition));
    }
    if repeat {
        if let (Some((_, first)), Some((line, last))) = (rounds.first(), rounds.last()) {
            if first.participants() != last.participants() {
                return Err(CliError::parse(path, *line, "repeated rounds must all have the same participants"));
            }
        }
    }
    let n = system_size(path, n, seen)?;
    let rounds = rounds.into_iter().map(|(_, p)| p).collect();
    Ok(IisScript { n, schedule: PartitionSchedule::Script { rounds, repeat } })
}

pub fn parse_as(path: &str, text: &str, n: Option<usize>) -> Result<AsScript> {
    let mut steps = Vec::new();
    let mut crashes = BTreeMap::new();
    let mut seen = ProcSet::EMPTY;
    for (line, content) in content_lines(text) {
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens.as_slice() {
            ["crash", id] => {
                let p = parse_id(path, line, id, n)?;
                if crashes.insert(p, steps.len() as u64).is_some() {
                    return Err(CliError::parse(path, line, format!("{p} crashes twice")));
                }
                seen.insert(p);
            }
            [id] => {
                let p = parse_id(path, line, id, n)?;
                if crashes.contains_key(&p) {
                    return Err(CliError::parse(path, line, format!("{p} is activated after its crash")));
                }
                steps.push(p);
                seen.insert(p);
            }
            _ => return Err(CliError::parse(path, line, format!("expected `<id>` or `crash <id>`, got `{content}`"))),
        }
    }
    let n = system_size(path, n, seen)?;
    let schedule = Schedule::script(n, steps, crashes).map_err(|e| CliError::parse(path, 0, e.to_string()))?;
    Ok(AsScript { n, schedule })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[u32]) -> ProcSet {
        ids.iter().map(|&i| ProcessId::new(i, 8).unwrap()).collect()
    }

    #[test]
    fn cyclic_script() {
        let text = "# two rounds\n1 | 2 3\n3 | 1 2   # second\nrepeat\n";
        let s = parse_iis("t", text, None).unwrap();
        assert_eq!(s.n, 3);
        let rounds = s.schedule.rounds(3, 5).unwrap();
        assert_eq!(rounds.len(), 5);
        assert_eq!(rounds[1].blocks(), &[set(&[3]), set(&[1, 2])]);
        assert_eq!(rounds[4], rounds[0]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_iis("s", "1 | 2\n\n1 | x\n", None).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 3, .. }), "{err}");
        let err = parse_iis("s", "1 2\n1 | 1\n", None).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }), "{err}");
        let err = parse_iis("s", "1\n1 2\n", None).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }), "{err}");
        let err = parse_iis("s", "1 ||2\n", None).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 1, .. }), "{err}");
        let err = parse_iis("s", "1 2 3\n", Some(2)).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn repeated_rounds_keep_participants() {
        assert!(parse_iis("s", "1 2\n1\nrepeat\n", None).is_err());
    }

    #[test]
    fn as_script_with_crash() {
        let s = parse_as("a", "1\n2\ncrash 2\n1\n", Some(3)).unwrap();
        assert_eq!(s.n, 3);
        assert_eq!(s.schedule.crash_step(ProcessId::new(2, 3).unwrap()), Some(2));
        let err = parse_as("a", "1\ncrash 1\n1\n", None).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 3, .. }), "{err}");
        let err = parse_as("a", "1\nhalt 1\n", None).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }), "{err}");
    }
}
