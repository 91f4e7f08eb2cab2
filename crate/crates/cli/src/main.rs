//! `bakery`: explore, walk, replay and stress the Bakery / Bakery++ locks.
//!
//! Exit codes: 0 clean or passed, 1 violation found or stress failure,
//! 2 usage or configuration error. Diagnostics go to stderr; reports go to
//! stdout, and traces to the `--out` path.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use bakery_core::algorithm::MaxOrder;
use bakery_core::explorer::{
    explore_exhaustive, explore_random, l1_livelock_demo, round_robin_until_past_guard,
    scripted_overflow_scenario, ExploreConfig, Report, Strategy, Trace, TRACE_FORMAT,
};
use bakery_core::runtime::{stress, StressConfig};
use bakery_core::{ModelParams, OverflowPolicy, RegisterModelKind, Variant};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "bakery",
    version,
    about = "Bakery / Bakery++ model checker and lock harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustive state-space exploration.
    Explore(ExploreArgs),
    /// Seeded random walks.
    Walk(WalkArgs),
    /// Scripted two-process schedule that overflows unbounded Bakery.
    ScenarioOverflow(OverflowArgs),
    /// Scripted slow-process schedule that keeps Bakery++ waiting at L1.
    ScenarioLivelock(LivelockArgs),
    /// Multi-thread stress test of the Bakery++ lock.
    Stress(StressArgs),
    /// Re-execute a trace file and print its final state.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Bakery,
    Bakerypp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Atomic,
    Safe,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Trap,
    Wrap,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchStrategy {
    Bfs,
    Dfs,
    Iddfs,
}

#[derive(Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "bakerypp")]
    algo: Algo,
    /// Number of processes.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Largest storable ticket.
    #[arg(long, default_value_t = 3)]
    m: u32,
    #[arg(long, value_enum, default_value = "atomic")]
    model: Model,
    /// Let overlapped reads also return M+1.
    #[arg(long)]
    flicker_above_limit: bool,
    /// Crash budget per process.
    #[arg(long, default_value_t = 0)]
    crashes: u8,
    #[arg(long, value_enum, default_value = "trap")]
    policy: Policy,
    /// Gather the doorway maximum in any order instead of ascending.
    #[arg(long)]
    any_max_order: bool,
}

impl ModelArgs {
    fn params(&self) -> ModelParams {
        ModelParams {
            n: self.n,
            m: self.m,
            variant: match self.algo {
                Algo::Bakery => Variant::Bakery,
                Algo::Bakerypp => Variant::BakeryPP,
            },
            registers: match self.model {
                Model::Atomic => RegisterModelKind::Atomic,
                Model::Safe => RegisterModelKind::Safe,
            },
            flicker_above_limit: self.flicker_above_limit,
            crash_budget: self.crashes,
            overflow_policy: match self.policy {
                Policy::Trap => OverflowPolicy::Trap,
                Policy::Wrap => OverflowPolicy::Wrap,
            },
            max_order: if self.any_max_order {
                MaxOrder::Any
            } else {
                MaxOrder::Ascending
            },
        }
    }
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Depth bound; 0 runs to closure.
    #[arg(long, default_value_t = 0)]
    max_depth: u32,
    #[arg(long, value_enum, default_value = "bfs")]
    strategy: SearchStrategy,
    /// Disable state deduplication (requires --max-depth).
    #[arg(long)]
    no_dedup: bool,
    #[arg(long, default_value_t = 20_000_000)]
    state_limit: u64,
    /// Worker threads for frontier expansion.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Counterexample trace path.
    #[arg(long, default_value = "out/cex.jsonl")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct WalkArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    walks: u32,
    /// Steps per walk.
    #[arg(long, default_value_t = 500)]
    steps: u32,
    #[arg(long, default_value = "out/cex.jsonl")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct OverflowArgs {
    #[arg(long, default_value_t = 3)]
    m: u32,
    #[arg(long, default_value = "out/overflow.jsonl")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct LivelockArgs {
    #[arg(long, default_value_t = 2)]
    m: u32,
    /// Climb-and-drain cycles of the fast pair.
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    #[arg(long, default_value = "out/livelock.jsonl")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct StressArgs {
    #[arg(long, default_value_t = 4)]
    threads: usize,
    #[arg(long, default_value_t = 10_000)]
    iters: u64,
    #[arg(long, default_value_t = 7)]
    m: u32,
    /// Group size; defaults to the thread count.
    #[arg(long)]
    n: Option<usize>,
    /// Watchdog timeout in seconds.
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

enum Failure {
    /// Exit 1.
    Found,
    /// Exit 2.
    Usage(String),
}

fn write_trace(path: &Path, trace: &Trace) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    let file = fs::File::create(path)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
    trace
        .write_to(std::io::BufWriter::new(file))
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
    eprintln!("trace written to {}", path.display());
    Ok(())
}

fn emit_report(report: &Report, format: Format, out: &Path) -> Result<(), Failure> {
    match format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => {
            println!(
                "# {} config={}",
                report.format,
                serde_json::to_string(&report.config).unwrap()
            );
            print!("{}", report.to_text());
        }
    }
    eprintln!("elapsed {:.3}s", report.elapsed.as_secs_f64());
    match &report.violation {
        Some(v) => {
            write_trace(out, &v.trace)?;
            Err(Failure::Found)
        }
        None if report.is_clean() => Ok(()),
        None => Err(Failure::Found),
    }
}

fn print_value(value: &serde_json::Value, format: Format) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(value).unwrap()),
        Format::Text => {
            if let Some(obj) = value.as_object() {
                for (k, v) in obj {
                    println!("{k}: {v}");
                }
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let usage = |e: &dyn std::fmt::Display| Failure::Usage(e.to_string());
    match cli.command {
        Command::Explore(a) => {
            let mut cfg = ExploreConfig::new(a.model.params());
            cfg.max_depth = a.max_depth;
            cfg.strategy = match a.strategy {
                SearchStrategy::Bfs => Strategy::Bfs,
                SearchStrategy::Dfs => Strategy::Dfs,
                SearchStrategy::Iddfs => Strategy::IterativeDeepening,
            };
            cfg.dedup = !a.no_dedup;
            cfg.state_limit = a.state_limit;
            cfg.workers = a.workers;
            let report = explore_exhaustive(&cfg).map_err(|e| usage(&e))?;
            emit_report(&report, a.format, &a.out)
        }
        Command::Walk(a) => {
            let cfg = ExploreConfig::new(a.model.params()).with_walks(a.seed, a.walks, a.steps);
            let report = explore_random(&cfg).map_err(|e| usage(&e))?;
            emit_report(&report, a.format, &a.out)
        }
        Command::ScenarioOverflow(a) => {
            let trace = scripted_overflow_scenario(a.m).map_err(|e| usage(&e))?;
            let last = trace.events.last().expect("overflow trace is non-empty");
            let value = json!({
                "format": TRACE_FORMAT,
                "scenario": "overflow",
                "m": a.m,
                "steps": trace.len(),
                "overflow_pid": last.pid + 1,
                "overflow_register": last.register.map(|r| r.to_string()),
                "overflow_value": last.value,
                "final_hash": trace.end.as_ref().map(|e| e.final_hash.clone()),
            });
            print_value(&value, a.format);
            write_trace(&a.out, &trace)?;
            Err(Failure::Found)
        }
        Command::ScenarioLivelock(a) => {
            let demo = l1_livelock_demo(a.m, a.rounds).map_err(|e| usage(&e))?;
            let params = demo.trace.config.model.clone();
            let rr = round_robin_until_past_guard(&params, &demo.state, 2, 10_000)
                .map_err(|e| usage(&e))?;
            let value = json!({
                "format": TRACE_FORMAT,
                "scenario": "livelock",
                "m": a.m,
                "rounds": a.rounds,
                "steps": demo.trace.len(),
                "slow_trips": demo.slow_trips,
                "slow_passed_guard": demo.slow_passed_guard,
                "round_robin_steps_to_pass_guard": rr,
                "final_hash": demo.state.fingerprint(),
            });
            print_value(&value, a.format);
            write_trace(&a.out, &demo.trace)
        }
        Command::Stress(a) => {
            let mut cfg = StressConfig::new(a.threads, a.iters, a.m);
            cfg.slots = a.n;
            cfg.timeout = Duration::from_secs(a.timeout_secs);
            let report = stress(&cfg).map_err(|e| usage(&e))?;
            let value = serde_json::to_value(&report).unwrap();
            print_value(&value, a.format);
            eprintln!("elapsed {:.3}s", report.elapsed.as_secs_f64());
            if report.passed() {
                Ok(())
            } else {
                eprintln!("stress run failed");
                Err(Failure::Found)
            }
        }
        Command::Replay(a) => {
            let file = fs::File::open(&a.trace)
                .map_err(|e| Failure::Usage(format!("cannot open {}: {e}", a.trace.display())))?;
            let trace = Trace::read_from(BufReader::new(file)).map_err(|e| usage(&e))?;
            match trace.replay() {
                Ok(r) => {
                    let value = json!({
                        "format": TRACE_FORMAT,
                        "config": trace.config,
                        "steps": r.steps,
                        "final_hash": r.state_hash(),
                        "state": r.state,
                        "display": r.state.to_string(),
                        "overflow": r.overflow.as_ref().map(|e| e.to_string()),
                        "violation": trace.end.as_ref().and_then(|e| e.violation),
                    });
                    print_value(&value, a.format);
                    Ok(())
                }
                Err(e) => {
                    eprintln!("{e}");
                    Err(Failure::Found)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Found) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
