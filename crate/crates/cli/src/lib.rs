//! `fleet run | verify | replay`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use fleet_core::governance::ResilienceReport;
use fleet_core::hub::net::NetServer;
use fleet_core::hub::EventLog;
use fleet_core::replay::{replay_to, Recording, ReplayError, ReplayServer};
use fleet_core::scenario::{Scenario, ScenarioError};
use fleet_core::sim::RunOutcome;
use fleet_core::verify::{verify_path, VerifyReport};
use fleet_core::MissionType;

pub const LOG_DIR_ENV: &str = "FLEET_LOG_DIR";
pub const DEFAULT_LOG_DIR: &str = "logs";

/// Exit status for every failure that is not a mission outcome.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// A JSON file path or `bundled:<name>`.
    pub scenario: String,
    pub seed: Option<u64>,
    pub max_ticks: Option<u64>,
    pub log: Option<PathBuf>,
    pub log_dir: Option<PathBuf>,
    pub deterministic: bool,
    pub auto_approve: bool,
    /// Wall-clock multiplier for networked runs; 0 runs unpaced.
    pub speed: f64,
    pub listen: Option<SocketAddr>,
    pub http: Option<SocketAddr>,
    pub disable: Vec<MissionType>,
}

impl RunConfig {
    pub fn new(scenario: impl Into<String>) -> Self {
        Self {
            scenario: scenario.into(),
            seed: None,
            max_ticks: None,
            log: None,
            log_dir: None,
            deterministic: true,
            auto_approve: false,
            speed: 1.0,
            listen: None,
            http: None,
            disable: Vec::new(),
        }
    }

    pub fn networked(&self) -> bool {
        self.listen.is_some() || self.http.is_some()
    }

    fn log_path(&self, scenario: &Scenario) -> PathBuf {
        if let Some(p) = &self.log {
            return p.clone();
        }
        let dir = self.log_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_LOG_DIR));
        dir.join(format!("{}-seed{}.jsonl", scenario.name, scenario.seed))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

#[derive(Debug)]
pub struct RunSummary {
    pub outcome: RunOutcome,
    pub log: PathBuf,
    pub report_path: PathBuf,
    pub report: ResilienceReport,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }
}

pub fn report_path(log: &Path) -> PathBuf {
    log.with_extension("report.json")
}

/// Loads the scenario and applies command-line overrides.
pub fn prepare(config: &RunConfig) -> Result<Scenario, RunError> {
    let mut s = Scenario::load(&config.scenario)?;
    if let Some(seed) = config.seed {
        s.seed = seed;
    }
    if let Some(t) = config.max_ticks {
        if t == 0 {
            return Err(RunError::Config("--max-ticks must be positive".into()));
        }
        s.max_ticks = t;
    }
    if config.auto_approve {
        s.governance.auto_approve = true;
    }
    s.governance.enabled.retain(|m| !config.disable.contains(m));
    if config.deterministic && config.networked() {
        return Err(RunError::Config("--deterministic runs cannot accept remote connections".into()));
    }
    s.validate()?;
    Ok(s)
}

pub fn run(config: &RunConfig) -> Result<RunSummary, RunError> {
    let scenario = prepare(config)?;
    let log_path = config.log_path(&scenario);
    let log = EventLog::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let sim = scenario.build(log)?;

    let outcome = if config.networked() {
        let listen = config.listen.unwrap_or_else(|| "127.0.0.1:7400".parse().expect("literal address"));
        let http = config.http.unwrap_or_else(|| "127.0.0.1:7401".parse().expect("literal address"));
        let pace = (config.speed > 0.0).then(|| Duration::from_secs_f64(scenario.tick_dt / config.speed));
        let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
        rt.block_on(async {
            let server = NetServer::bind(listen, http, sim.hub().conn_ids()).await.context("binding listeners")?;
            tracing::info!(tcp = %server.tcp_addr, http = %server.http_addr, "hub listening");
            let (outcome, _) = sim.run_networked(server, pace).await.context("networked run")?;
            anyhow::Ok(outcome)
        })?
    } else {
        sim.run().context("headless run")?.0
    };

    let text = std::fs::read_to_string(&log_path).with_context(|| format!("reading {}", log_path.display()))?;
    let report = ResilienceReport::from_log(&text).context("building report")?;
    let report_path = report_path(&log_path);
    let json = fleet_core::canonical_string(&report).context("serializing report")?;
    std::fs::write(&report_path, json + "\n").with_context(|| format!("writing {}", report_path.display()))?;
    Ok(RunSummary { outcome, log: log_path, report_path, report })
}

pub fn verify(log: &Path) -> anyhow::Result<VerifyReport> {
    verify_path(log).with_context(|| format!("reading {}", log.display()))
}

/// Replays to stdout, or to websocket clients when `listen` is set.
pub fn replay(log: &Path, speed: f64, listen: Option<SocketAddr>) -> anyhow::Result<()> {
    if !(speed >= 0.0 && speed.is_finite()) {
        bail!("--speed must be a non-negative number");
    }
    let rec = match Recording::load(log) {
        Ok(r) => r,
        Err(ReplayError::Rejected(v)) => {
            let lines: Vec<String> = v.iter().map(ToString::to_string).collect();
            bail!("{} failed verification:\n  {}", log.display(), lines.join("\n  "));
        }
        Err(e) => return Err(e).with_context(|| format!("loading {}", log.display())),
    };
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async move {
        match listen {
            Some(addr) => {
                let server = ReplayServer::bind(addr, rec, speed).await.context("binding replay listener")?;
                eprintln!("replaying on ws://{}/ws (ctrl-c to stop)", server.addr);
                tokio::signal::ctrl_c().await.context("waiting for ctrl-c")?;
            }
            None => {
                let mut out = tokio::io::stdout();
                replay_to(&rec, speed, &mut out).await.context("writing replay")?;
            }
        }
        anyhow::Ok(())
    })
}
