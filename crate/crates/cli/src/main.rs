use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fleet_cli::{RunConfig, RunError, EXIT_USAGE, LOG_DIR_ENV};
use fleet_core::MissionType;

#[derive(Parser)]
#[command(name = "fleet", version, about = "Multi-robot fleet simulator and digital-twin hub")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the log, its digest and a resilience report.
    Run(RunArgs),
    /// Check a log against the mission invariants.
    Verify {
        #[arg(long)]
        log: PathBuf,
    },
    /// Re-emit a verified log with its original pacing.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Pacing multiplier; 0 emits as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Serve the replay over a websocket at /ws instead of stdout.
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON path, or bundled:<m1|m2|m3|full>.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_ticks: Option<u64>,
    /// Log path. Defaults to $FLEET_LOG_DIR/<scenario>-seed<seed>.jsonl.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Reproducible single-threaded run (the default).
    #[arg(long)]
    deterministic: bool,
    /// Approve collaboration proposals without waiting for the operator.
    #[arg(long)]
    auto_approve: bool,
    /// No network listeners (the default).
    #[arg(long, conflicts_with_all = ["listen", "http"])]
    headless: bool,
    /// Wall-clock pacing for networked runs; 0 runs unpaced.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Accept agent connections over TCP at this address.
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Serve /ws and /snapshot at this address.
    #[arg(long)]
    http: Option<SocketAddr>,
    /// Leave a mission type disabled, e.g. --disable-mission M3.
    #[arg(long = "disable-mission", value_parser = parse_mission)]
    disable: Vec<MissionType>,
}

fn parse_mission(s: &str) -> Result<MissionType, String> {
    MissionType::ALL
        .into_iter()
        .find(|m| format!("{m:?}").eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown mission '{s}' (M1, M2 or M3)"))
}

fn run(args: RunArgs) -> i32 {
    let networked = args.listen.is_some() || args.http.is_some();
    let config = RunConfig {
        scenario: args.scenario,
        seed: args.seed,
        max_ticks: args.max_ticks,
        log: args.log,
        log_dir: std::env::var_os(LOG_DIR_ENV).map(PathBuf::from),
        deterministic: args.deterministic || !networked,
        auto_approve: args.auto_approve,
        speed: args.speed,
        listen: args.listen,
        http: args.http,
        disable: args.disable,
    };
    match fleet_cli::run(&config) {
        Ok(summary) => {
            for m in &summary.outcome.missions {
                println!("{} {:?} {}", m.mission_id, m.mission_type, m.state);
            }
            println!("log {} ({} lines)", summary.log.display(), summary.outcome.log_lines);
            println!("sha256 {}", summary.outcome.digest);
            println!("report {}", summary.report_path.display());
            summary.exit_code()
        }
        Err(RunError::Scenario(e)) => {
            eprintln!("{e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).with_writer(std::io::stderr).init();
    let code = match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Verify { log } => match fleet_cli::verify(&log) {
            Ok(report) if report.passed() => {
                println!("ok {} lines, sha256 {}", report.lines, report.digest);
                0
            }
            Ok(report) => {
                for v in &report.violations {
                    println!("{v}");
                }
                println!("{} violation(s)", report.violations.len());
                1
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_USAGE
            }
        },
        Command::Replay { log, speed, listen } => match fleet_cli::replay(&log, speed, listen) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_USAGE
            }
        },
    };
    ExitCode::from(code as u8)
}
