//! Batch front end. Exit codes: 0 ok, 2 usage, 3 malformed input,
//! 4 verification failure, 5 engine abort.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::cohen::SecretStream;
use crate::error::Error;
use crate::instances::{self, ObstacleFile, Preset};
use crate::mathias::anchor::cohen_mathias_demo;
use crate::mathias::FilterRep;
use crate::trace::{self, bits_string, EngineId, Run, RunParams, Suite, TraceDocument};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MALFORMED: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;
pub const EXIT_ABORT: i32 = 5;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Input(_)
        | Error::Format(_)
        | Error::Query(_)
        | Error::InfeasibleGap { .. }
        | Error::MalformedCoding(_)
        | Error::BootstrapTooEarly(_) => EXIT_MALFORMED,
        Error::Contract(_) | Error::Capability(_) | Error::SearchBound { .. } | Error::Oracle(_) | Error::Abort(_) => {
            EXIT_ABORT
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nonamalg", version, about = "Build, decode and verify obstacle-coded generic sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Pair,
    Obstacle,
    Wide,
    Oscillation,
    Anchored,
    AnchoredFilters,
}

impl From<EngineArg> for EngineId {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Pair => EngineId::Pair,
            EngineArg::Obstacle => EngineId::Obstacle,
            EngineArg::Wide => EngineId::Wide,
            EngineArg::Oscillation => EngineId::Oscillation,
            EngineArg::Anchored => EngineId::Anchored,
            EngineArg::AnchoredFilters => EngineId::AnchoredFilters,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    All,
    Coding,
    Orders,
    Oracle,
    Replay,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an engine and write its trace.
    Construct {
        #[arg(long, value_enum)]
        engine: EngineArg,
        #[arg(long)]
        steps: usize,
        /// Hex prefix, `seed:<n>` or `bits:<01...>`.
        #[arg(long, default_value = "seed:0")]
        z: String,
        /// JSON file with `width`, `obstacles` and optional `anchors`/filters.
        #[arg(long)]
        obstacles: Option<PathBuf>,
        #[arg(long = "schedule-gap")]
        schedule_gap: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover the coded bits from a trace and compare them with its stream.
    Decode {
        #[arg(long)]
        trace: PathBuf,
        /// Coordinates such as "0,1"; every obstacle when omitted.
        #[arg(long)]
        obstacle: Option<String>,
    },
    /// Check a trace against the invariant suites.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
    },
    /// Two coordinates, one cofinite and one carrying a chosen filter.
    Demo {
        #[arg(long, default_value = "seed:0")]
        z: String,
        #[arg(long, default_value_t = 20)]
        rounds: usize,
        /// One of the shipped filters: cofinite, evens, sixes.
        #[arg(long, default_value = "evens")]
        filter: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the command line, writing to the given streams; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn read(path: &PathBuf) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn emit(text: &str, path: Option<&PathBuf>, out: &mut dyn Write) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Input(format!("{}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(|e| Error::Input(e.to_string())),
    }
}

fn load(path: &PathBuf) -> Result<Run, Error> {
    TraceDocument::parse(&read(path)?)?.run()
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, Error> {
    let say = |out: &mut dyn Write, s: String| {
        let _ = writeln!(out, "{s}");
    };
    match cmd {
        Command::Construct {
            engine,
            steps,
            z,
            obstacles,
            schedule_gap,
            seed,
            out: path,
        } => {
            let obstacles = match obstacles {
                Some(p) => Some(serde_json::from_str::<ObstacleFile>(&read(&p)?).map_err(|e| Error::Input(e.to_string()))?),
                None => None,
            };
            let preset = Preset {
                steps,
                z: SecretStream::parse(&z)?.source,
                seed,
                gap: schedule_gap,
                obstacles,
            };
            let text = RunParams::preset(engine.into(), &preset)?
                .construct()?.document()?.to_text()?;
            emit(&text, path.as_ref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Decode { trace: path, obstacle } => {
            let run = load(&path)?;
            let targets = match obstacle {
                Some(s) => vec![Some(trace::parse_coords(&s)?)],
                None => {
                    let all = trace::obstacles(&run);
                    if all.is_empty() {
                        vec![None]
                    } else {
                        all.into_iter().map(Some).collect()
                    }
                }
            };
            let mut ok = true;
            for b in targets {
                let d = trace::decode(&run, b.as_ref())?;
                let label = b.map(|b| format!("{b:?} ")).unwrap_or_default();
                say(out, format!("{label}decoded  {} (from bit {})", bits_string(&d.bits), d.offset));
                say(out, format!("{label}expected {}", bits_string(&d.expected)));
                say(out, format!("{label}{}", if d.matches() { "match" } else { "MISMATCH" }));
                ok &= d.matches();
            }
            Ok(if ok { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Verify { trace: path, suite } => {
            let run = load(&path)?;
            let suites: Vec<Suite> = match suite {
                SuiteArg::All => Suite::ALL.to_vec(),
                SuiteArg::Coding => vec![Suite::Coding],
                SuiteArg::Orders => vec![Suite::Orders],
                SuiteArg::Oracle => vec![Suite::Oracle],
                SuiteArg::Replay => vec![Suite::Replay],
            };
            let report = trace::verify(&run, &suites);
            for (s, fails) in &report.failures {
                let name = serde_json::to_value(s)?.as_str().unwrap_or("?").to_string();
                if fails.is_empty() {
                    say(out, format!("{name}: ok"));
                } else {
                    say(out, format!("{name}: FAILED ({} problems)", fails.len()));
                    for f in fails {
                        say(out, format!("  {f}"));
                    }
                }
            }
            Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Demo {
            z,
            rounds,
            filter,
            out: path,
        } => {
            let f: FilterRep = instances::filter_chain()
                .into_iter()
                .find(|f| f.id == filter)
                .ok_or_else(|| Error::Input(format!("unknown filter `{filter}`")))?;
            let (params, t) = cohen_mathias_demo(SecretStream::parse(&z)?.source, rounds, f)?;
            let run = Run::Anchored(params, t);
            if let Some(p) = path.as_ref() {
                emit(&run.document()?.to_text()?, Some(p), out)?;
            }
            let b = trace::obstacles(&run).remove(0);
            let d = trace::decode(&run, Some(&b))?;
            say(out, format!("decoded  {}", bits_string(&d.bits)));
            say(out, format!("expected {}", bits_string(&d.expected)));
            say(out, (if d.matches() { "match" } else { "MISMATCH" }).to_string());
            Ok(if d.matches() { EXIT_OK } else { EXIT_VERIFY })
        }
    }
}
