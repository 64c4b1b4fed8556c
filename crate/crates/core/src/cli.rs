//! The `msrsim` command line.
//!
//! `run` simulates a scenario and stores a [`Snapshot`] in the state file;
//! `routes` and `trace` read it back, or simulate first with `--inline`.
//!
//! Exit codes: 0 success, 2 parse or input error, 3 invariant violation or
//! no quiescence, 4 unknown router or address.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::forwarding::{forward_packet, trace_report, Packet, DEFAULT_TTL};
use crate::mobile::Approach;
use crate::msr::render_routes;
use crate::net::{parse_scenario, DiagnosticKind, IpAddress, Scenario};
use crate::sim::{SimConfig, Simulator, Snapshot};

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;
pub const EXIT_UNKNOWN: u8 = 4;

pub const DEFAULT_UNTIL_MS: u64 = 10_000;
pub const DEFAULT_STATE_PATH: &str = "msrsim-state.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ApproachArg {
    Cp,
    Up,
}

impl From<ApproachArg> for Approach {
    fn from(a: ApproachArg) -> Self {
        match a {
            ApproachArg::Cp => Approach::CpBased,
            ApproachArg::Up => Approach::UpBased,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputMode {
    Human,
    Machine,
}

#[derive(Debug, Parser)]
#[command(name = "msrsim", version, about = "Mobile-system router simulator")]
pub struct Cli {
    #[command(flatten)]
    pub config: CliConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CliConfig {
    /// Scenario file.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Where the routing protocol runs.
    #[arg(long, global = true, value_enum, default_value = "cp")]
    pub approach: ApproachArg,
    /// Simulated end time in milliseconds.
    #[arg(long, global = true, default_value_t = DEFAULT_UNTIL_MS)]
    pub until: u64,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "human")]
    pub output: OutputMode,
    /// State file written by `run` and read by `routes` and `trace`.
    #[arg(long, global = true, default_value = DEFAULT_STATE_PATH)]
    pub state: PathBuf,
    /// Run the scenario first instead of reading the state file.
    #[arg(long, global = true)]
    pub inline: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and print the event log.
    Run,
    /// Print a routing table.
    Routes {
        #[arg(long)]
        router: String,
        /// Every candidate route, not only the best per destination.
        #[arg(long)]
        all: bool,
    },
    /// Trace a packet through the data plane.
    Trace { src: String, dst: String },
    /// Check a scenario without running it.
    Validate,
}

/// Outcome of a subcommand: text for stdout and stderr, and an exit code.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct CmdOutput {
    pub stdout: String,
    pub stderr: String,
    pub code: u8,
}

impl CmdOutput {
    fn fail(code: u8, msg: impl Into<String>) -> Self {
        let mut stderr = msg.into();
        if !stderr.ends_with('\n') {
            stderr.push('\n');
        }
        CmdOutput {
            stdout: String::new(),
            stderr,
            code,
        }
    }
}

fn load_scenario(config: &CliConfig) -> Result<Scenario, CmdOutput> {
    let path = config
        .scenario
        .as_ref()
        .ok_or_else(|| CmdOutput::fail(EXIT_PARSE, "--scenario is required"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CmdOutput::fail(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|diags| {
        let msg: Vec<String> = diags.iter().map(|d| format!("{}: {d}", path.display())).collect();
        let code = diags.iter().map(|d| exit_for(d.kind)).max().unwrap_or(EXIT_PARSE);
        CmdOutput::fail(code, msg.join("\n"))
    })
}

fn build(config: &CliConfig, scenario: &Scenario) -> Result<Simulator, CmdOutput> {
    let diags = scenario.validate();
    if let Some(worst) = diags.iter().map(|d| exit_for(d.kind)).max() {
        let msg: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(CmdOutput::fail(worst, msg.join("\n")));
    }
    let sim_config = SimConfig {
        approach: config.approach.into(),
        seed: config.seed,
        ..SimConfig::default()
    };
    Simulator::new(scenario, sim_config).map_err(|d| CmdOutput::fail(exit_for(d.kind), d.to_string()))
}

fn exit_for(kind: DiagnosticKind) -> u8 {
    match kind {
        DiagnosticKind::SyntaxError | DiagnosticKind::UnknownReference => EXIT_PARSE,
        DiagnosticKind::InvariantViolation => EXIT_INVARIANT,
    }
}

/// Runs the scenario to `--until` and returns the simulator.
fn simulate(config: &CliConfig) -> Result<Simulator, CmdOutput> {
    let scenario = load_scenario(config)?;
    let mut sim = build(config, &scenario)?;
    sim.run_until(config.until);
    Ok(sim)
}

pub fn cmd_run(config: &CliConfig) -> CmdOutput {
    let sim = match simulate(config) {
        Ok(s) => s,
        Err(e) => return e,
    };
    let machine = config.output == OutputMode::Machine;
    let snapshot = sim.snapshot();
    let mut out = CmdOutput {
        stdout: sim.log().render(machine),
        ..CmdOutput::default()
    };
    let status = if snapshot.quiescent {
        "quiescent"
    } else {
        "not-quiescent"
    };
    if machine {
        out.stdout.push_str(&format!(
            "t={} kind=status quiescent={} violations={}\n",
            snapshot.now_ms,
            snapshot.quiescent,
            snapshot.audit.len()
        ));
    } else {
        out.stdout
            .push_str(&format!("status: {status} at t={} ms\n", snapshot.now_ms));
    }
    for v in &snapshot.audit {
        out.stderr.push_str(&format!("invariant violation: {v}\n"));
    }
    if let Err(e) = save_snapshot(&config.state, &snapshot) {
        out.stderr.push_str(&format!("{}: {e}\n", config.state.display()));
        out.code = EXIT_PARSE;
        return out;
    }
    out.code = if snapshot.quiescent && snapshot.audit.is_empty() {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    };
    out
}

fn save_snapshot(path: &Path, snapshot: &Snapshot) -> std::io::Result<()> {
    let json = serde_json::to_string(snapshot).map_err(std::io::Error::other)?;
    fs::write(path, json)
}

fn load_snapshot(config: &CliConfig) -> Result<Option<Snapshot>, CmdOutput> {
    if config.inline {
        return simulate(config).map(|s| Some(s.snapshot()));
    }
    match fs::read_to_string(&config.state) {
        Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| {
            CmdOutput::fail(
                EXIT_PARSE,
                format!("{}: bad state file: {e}", config.state.display()),
            )
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CmdOutput::fail(
            EXIT_PARSE,
            format!("{}: {e}", config.state.display()),
        )),
    }
}

pub fn cmd_routes(config: &CliConfig, router: &str, all: bool) -> CmdOutput {
    let machine = config.output == OutputMode::Machine;
    let snapshot = match load_snapshot(config) {
        Ok(Some(s)) => s,
        Ok(None) => {
            return CmdOutput {
                stdout: render_routes(&[], machine),
                stderr: format!("no state at {}; run a scenario first\n", config.state.display()),
                code: EXIT_OK,
            }
        }
        Err(e) => return e,
    };
    let name = snapshot.aliases.get(router).map(String::as_str).unwrap_or(router);
    let Some(routes) = snapshot.routes.get(name) else {
        return CmdOutput::fail(EXIT_UNKNOWN, format!("unknown router `{router}`"));
    };
    let rows = if all { &routes.all } else { &routes.best };
    CmdOutput {
        stdout: render_routes(rows, machine),
        ..CmdOutput::default()
    }
}

/// Resolves an address, or a node name to its first interface address.
fn resolve_addr(snapshot: &Snapshot, s: &str) -> Option<IpAddress> {
    let net = &snapshot.data_plane.network;
    match s.parse::<IpAddress>() {
        Ok(a) => net.owner_of(a).map(|_| a),
        Err(_) => net.node_by_name(s)?.interfaces.first().map(|i| i.address),
    }
}

pub fn cmd_trace(config: &CliConfig, src: &str, dst: &str) -> CmdOutput {
    let snapshot = match load_snapshot(config) {
        Ok(Some(s)) => s,
        Ok(None) => {
            return CmdOutput::fail(
                EXIT_PARSE,
                format!("no state at {}; run a scenario first", config.state.display()),
            )
        }
        Err(e) => return e,
    };
    let dp = &snapshot.data_plane;
    let (Some(src_addr), Some(dst_addr)) = (resolve_addr(&snapshot, src), resolve_addr(&snapshot, dst))
    else {
        let bad = if resolve_addr(&snapshot, src).is_none() {
            src
        } else {
            dst
        };
        return CmdOutput::fail(EXIT_UNKNOWN, format!("unknown address `{bad}`"));
    };
    let src_node = dp.network.owner_of(src_addr).expect("resolved");
    let record = forward_packet(
        dp,
        src_node,
        Packet {
            src: src_addr,
            dst: dst_addr,
            ttl: DEFAULT_TTL,
        },
    );
    CmdOutput {
        stdout: trace_report(dp, &record, config.output == OutputMode::Machine),
        ..CmdOutput::default()
    }
}

pub fn cmd_validate(config: &CliConfig) -> CmdOutput {
    let scenario = match load_scenario(config) {
        Ok(s) => s,
        Err(e) => return e,
    };
    let diags = scenario.validate();
    match diags.iter().map(|d| exit_for(d.kind)).max() {
        None => CmdOutput {
            stdout: format!(
                "ok: {} nodes, {} links, {} sessions, {} events\n",
                scenario.nodes.len(),
                scenario.links.len(),
                scenario.pdus.len(),
                scenario.events.len()
            ),
            ..CmdOutput::default()
        },
        Some(code) => {
            let msg: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            CmdOutput::fail(code, msg.join("\n"))
        }
    }
}

pub fn execute(cli: &Cli) -> CmdOutput {
    match &cli.command {
        Command::Run => cmd_run(&cli.config),
        Command::Routes { router, all } => cmd_routes(&cli.config, router, *all),
        Command::Trace { src, dst } => cmd_trace(&cli.config, src, dst),
        Command::Validate => cmd_validate(&cli.config),
    }
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_PARSE } else { EXIT_OK });
        }
    };
    let out = execute(&cli);
    let _ = std::io::stdout().write_all(out.stdout.as_bytes());
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    ExitCode::from(out.code)
}
