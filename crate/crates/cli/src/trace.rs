//! Trace files: one JSON object per line, tagged by `type`. The first line is
//! the `meta` header.

use std::fmt;
use std::io::Write;
use std::path::Path;

use asiis::analysis::WindowParams;
use asiis::iis_to_as::{HelpMode, Preference};
use asiis::{CounterVector, Disposition, ProcSet, ProcessId};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AsToIis,
    IisToAs,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::AsToIis => "as-to-iis",
            Direction::IisToAs => "iis-to-as",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Seed { seed: u64, crash_prob: f64 },
    Script { sha256: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub format: u32,
    pub n: usize,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<HelpMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<Preference>,
    pub source: Source,
    /// Activations (as-to-iis) or rounds (iis-to-as).
    pub horizon: u64,
    pub window: WindowParams,
    /// Activations or rounds actually executed.
    pub steps: u64,
    /// Crashed simulators, or departed IIS processes.
    pub crashed: ProcSet,
    /// Simulators that took a step, or first-round IIS participants.
    pub stepped: ProcSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_primitives: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventOp {
    Update,
    Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Meta(Meta),
    IisRound {
        round: u64,
        blocks: Vec<ProcSet>,
    },
    AsEvent {
        step: u64,
        actor: ProcessId,
        op: EventOp,
        object: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshot: Option<Vec<Option<u64>>>,
    },
    /// A simulated view (as-to-iis) or a simulated snapshot output (iis-to-as).
    SimView {
        process: ProcessId,
        round: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        view: Option<ProcSet>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vector: Option<CounterVector>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        helped: Option<bool>,
    },
    StatusEntry {
        simulator: ProcessId,
        process: ProcessId,
        disposition: Disposition,
        round: u64,
        level: u32,
    },
}

/// A parsed trace: the header plus every record after it, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub meta: Meta,
    pub records: Vec<Record>,
}

impl Trace {
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for record in std::iter::once(&Record::Meta(self.meta.clone())).chain(&self.records) {
            out.push_str(&serde_json::to_string(record).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn parse(path: &str, text: &str) -> Result<Trace> {
        let mut meta = None;
        let mut records = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(line).map_err(|e| CliError::parse(path, k + 1, format!("bad record: {e}")))?;
            match (record, &meta) {
                (Record::Meta(m), None) if records.is_empty() => {
                    if m.format != FORMAT_VERSION {
                        return Err(CliError::parse(path, k + 1, format!("unsupported format {}", m.format)));
                    }
                    meta = Some(m)
                }
                (Record::Meta(_), _) => return Err(CliError::parse(path, k + 1, "meta record must come first, once")),
                (_, None) => return Err(CliError::parse(path, k + 1, "trace does not start with a meta record")),
                (r, Some(_)) => records.push(r),
            }
        }
        let meta = meta.ok_or_else(|| CliError::parse(path, 0, "empty trace"))?;
        Ok(Trace { meta, records })
    }

    pub fn read(path: &Path) -> Result<Trace> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Trace::parse(&path.display().to_string(), &text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let mut file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        file.write_all(self.to_lines().as_bytes()).map_err(|e| CliError::io(path, e))
    }
}
