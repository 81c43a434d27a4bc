use std::path::PathBuf;
use std::process::ExitCode;

use asiis::analysis::WindowParams;
use asiis::iis_to_as::{HelpMode, Preference};
use asiis_cli::commands::{check_trace, cmd_fuzz, cmd_run, FuzzConfig, RunConfig, ScheduleSource};
use asiis_cli::trace::{Direction, Trace};
use asiis_cli::{exit, CliError, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "asiis", version, about = "Simulate AS on IIS and IIS on AS, and check the results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its trace.
    Run(RunArgs),
    /// Re-check a trace file.
    Check(CheckArgs),
    /// Run and check a range of seeds.
    Fuzz(FuzzArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Helping,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prefer {
    Identical,
    Helper,
}

#[derive(Args)]
struct WindowArgs {
    /// Rounds skipped before the first window (default 2n).
    #[arg(long)]
    burn_in: Option<usize>,
    /// Window width in rounds (default 2n).
    #[arg(long)]
    window: Option<usize>,
}

impl WindowArgs {
    fn params(&self, n: Option<usize>) -> Result<Option<WindowParams>> {
        let (burn_in, width) = match (self.burn_in, self.window, n) {
            (None, None, _) => return Ok(None),
            (b, w, Some(n)) => (b.unwrap_or(2 * n), w.unwrap_or(2 * n)),
            (Some(b), Some(w), None) => (b, w),
            _ => return Err(CliError::Usage("give both --burn-in and --window, or --n".into())),
        };
        WindowParams::new(burn_in, width).map(Some).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    direction: Direction,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Disjunct preferred when both fire with different vectors.
    #[arg(long, value_enum, default_value = "identical")]
    prefer: Prefer,
    #[arg(long, conflicts_with = "seed", required_unless_present = "seed")]
    schedule: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// Activations (as-to-iis) or rounds (iis-to-as).
    #[arg(long)]
    horizon: u64,
    #[arg(long, default_value_t = 0.3)]
    crash_prob: f64,
    #[command(flatten)]
    window: WindowArgs,
    /// Trace path; defaults to a file under $ASIIS_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the full checker suite on the trace.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct CheckArgs {
    trace: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Half-open range such as `0..1000`.
    #[arg(long, value_parser = parse_range)]
    seeds: std::ops::Range<u64>,
    /// Both directions when omitted.
    #[arg(long, value_enum)]
    direction: Option<Direction>,
    #[arg(long)]
    horizon: u64,
    #[arg(long, default_value_t = 0.3)]
    crash_prob: f64,
    #[command(flatten)]
    window: WindowArgs,
}

fn parse_range(s: &str) -> std::result::Result<std::ops::Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected START..END")?;
    let a: u64 = a.parse().map_err(|e| format!("{a}: {e}"))?;
    let b: u64 = b.parse().map_err(|e| format!("{b}: {e}"))?;
    if a >= b {
        return Err(format!("empty range {s}"));
    }
    Ok(a..b)
}

fn run(args: RunArgs) -> Result<u8> {
    let config = RunConfig {
        n: args.n,
        direction: args.direction,
        mode: args.mode.map(|m| match m {
            Mode::Helping => HelpMode::Helping,
            Mode::Baseline => HelpMode::Baseline,
        }),
        preference: match args.prefer {
            Prefer::Identical => Preference::IdenticalFirst,
            Prefer::Helper => Preference::HelperFirst,
        },
        schedule: match (args.schedule, args.seed) {
            (Some(path), _) => ScheduleSource::Script(path),
            (None, Some(seed)) => ScheduleSource::Seed(seed),
            (None, None) => unreachable!("clap requires one of them"),
        },
        horizon: args.horizon,
        window: args.window.params(args.n)?,
        crash_prob: args.crash_prob,
        output: args.out,
    };
    let (outcome, path) = cmd_run(&config)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    println!("trace written to {}", path.display());
    let mut status = exit::PASS;
    for f in &outcome.hard_failures {
        println!("INVARIANT {f}");
        status = exit::CHECK_FAILED;
    }
    if args.check {
        let report = check_trace(&outcome.trace, config.window)?;
        print!("{}", report.human());
        if !report.passed() {
            status = exit::CHECK_FAILED;
        }
    }
    Ok(status)
}

fn check(args: CheckArgs) -> Result<u8> {
    let trace = Trace::read(&args.trace)?;
    let report = check_trace(&trace, args.window.params(Some(trace.meta.n))?)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", report.human());
    }
    Ok(if report.passed() { exit::PASS } else { exit::CHECK_FAILED })
}

fn fuzz(args: FuzzArgs) -> Result<u8> {
    let config = FuzzConfig {
        n: args.n,
        seeds: args.seeds,
        directions: args.direction.map_or_else(|| vec![Direction::AsToIis, Direction::IisToAs], |d| vec![d]),
        horizon: args.horizon,
        crash_prob: args.crash_prob,
        window: args.window.params(Some(args.n))?,
    };
    let summary = cmd_fuzz(&config, |row| {
        if !row.failures.is_empty() {
            println!("FAIL {} seed {}: {}", row.direction, row.seed, row.failures.join(", "));
        }
    })?;
    println!("{} runs, {} failed", summary.runs, summary.failed.len());
    for (property, count) in &summary.by_property {
        println!("  {property}: {count}");
    }
    if let Some(row) = summary.failed.first() {
        println!(
            "reproduce with: asiis run --direction {} --seed {} --n {} --horizon {} --crash-prob {} --check",
            row.direction, row.seed, config.n, config.horizon, config.crash_prob
        );
    }
    Ok(if summary.passed() { exit::PASS } else { exit::CHECK_FAILED })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Check(args) => check(args),
        Command::Fuzz(args) => fuzz(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::USAGE)
        }
    }
}
