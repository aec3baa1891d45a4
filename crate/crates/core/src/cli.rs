//! `wsn-pathosim` command line: `run`, `linkbudget`, `lifetime` and `repl`.
//!
//! Exit codes: 0 success, 1 internal fault (I/O and the like), 2 scenario
//! or usage errors. Diagnostics go to stderr; `PATHOSIM_LOG` sets their
//! verbosity.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::engine::SimTime;
use crate::model::{load_scenario, ModelError, NodeId, NodeRole, ScenarioConfig};
use crate::power::{average_current, estimate_lifetime, CyclicSleepConfig, PowerState};
use crate::propagation::{is_connected, link_budget};
use crate::report::{write_samples_csv, write_trace_tsv, RunReport};
use crate::world::{Command as SimCommand, SimError, Simulation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_SCENARIO: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "wsn-pathosim",
    version,
    about = "Discrete-event simulator for a duty-cycled sensor network"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActiveState {
    Transmitting,
    AwakeIdle,
}

impl From<ActiveState> for PowerState {
    fn from(s: ActiveState) -> Self {
        match s {
            ActiveState::Transmitting => PowerState::Transmitting,
            ActiveState::AwakeIdle => PowerState::AwakeIdle,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write samples.csv, report.json, report.txt.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Horizon in virtual seconds.
        #[arg(long, default_value_t = 86_400.0)]
        until: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write trace.tsv.
        #[arg(long)]
        trace: bool,
        /// Switch a node off for this run (repeatable).
        #[arg(long = "disable", value_name = "NODE")]
        disable: Vec<u16>,
    },
    /// Print the link budget between two nodes.
    Linkbudget {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        from: u16,
        #[arg(long)]
        to: u16,
    },
    /// Closed-form average current and battery lifetime of an End Device.
    Lifetime {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        node: u16,
        /// Seconds per cycle spent in the active state.
        #[arg(long, default_value_t = 5.0)]
        active: f64,
        #[arg(long, value_enum, default_value_t = ActiveState::Transmitting)]
        active_state: ActiveState,
        /// report.json of a previous run, for the simulated figure.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Interactive run control.
    Repl {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write run outputs here on quit.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: bool,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_SCENARIO } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            until,
            seed,
            out: dir,
            trace,
            disable,
        } => cmd_run(&scenario, until, seed, &dir, trace, &disable, out),
        Command::Linkbudget { scenario, from, to } => cmd_linkbudget(&scenario, from, to, out),
        Command::Lifetime {
            scenario,
            node,
            active,
            active_state,
            report,
        } => cmd_lifetime(
            &scenario,
            node,
            active,
            active_state.into(),
            report.as_deref(),
            out,
        ),
        Command::Repl {
            scenario,
            seed,
            out: dir,
            trace,
        } => repl_loop(&scenario, seed, dir.as_deref(), trace, input, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_INTERNAL,
            _ => EXIT_SCENARIO,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let mut cfg = load_scenario(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn build(cfg: ScenarioConfig, trace: bool, err_out: &mut dyn Write) -> Result<Simulation, CliError> {
    match Simulation::new(cfg) {
        Ok(sim) => Ok(sim.with_trace(trace)),
        Err(SimError::Invalid(violations)) => {
            for v in &violations {
                let _ = writeln!(err_out, "invalid: {v}");
            }
            Err(SimError::Invalid(violations).into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes samples.csv, report.json, report.txt and optionally trace.tsv.
pub fn write_outputs(sim: &Simulation, dir: &Path, trace: bool) -> Result<RunReport, CliError> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    let report = RunReport::from_simulation(sim);

    let mut csv = Vec::new();
    write_samples_csv(&mut csv, sim.samples()).map_err(io_err("rendering samples"))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io_err(format!("writing {}", path.display())))
    };
    write("samples.csv", &csv)?;
    write("report.json", report.to_json().as_bytes())?;
    write("report.txt", report.to_text().as_bytes())?;
    if trace {
        let mut tsv = Vec::new();
        write_trace_tsv(&mut tsv, sim).map_err(io_err("rendering trace"))?;
        write("trace.tsv", &tsv)?;
    }
    Ok(report)
}

pub fn cmd_run(
    scenario: &Path,
    until_s: f64,
    seed: Option<u64>,
    dir: &Path,
    trace: bool,
    disable: &[u16],
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if !(until_s >= 0.0) {
        return Err(CliError::Usage(format!(
            "--until must be non-negative, got {until_s}"
        )));
    }
    let mut cfg = load(scenario, seed)?;
    for &id in disable {
        let id = NodeId(id);
        cfg.require_node(id)?;
        cfg = cfg.with_node_enabled(id, false);
    }
    let mut sim = build(cfg, trace, &mut io::stderr())?;
    sim.run_until(SimTime::from_secs_f64(until_s));
    let report = write_outputs(&sim, dir, trace)?;
    let _ = write!(out, "{}", report.to_text());
    let _ = writeln!(out, "outputs written to {}", dir.display());
    Ok(())
}

pub fn cmd_linkbudget(scenario: &Path, from: u16, to: u16, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(scenario, None)?;
    let (a, b) = (NodeId(from), NodeId(to));
    let budget = link_budget(&cfg, a, b)?;
    let sensitivity = cfg.require_node(b)?.radio.sensitivity_dbm;
    let _ = writeln!(out, "link {a} -> {b}, distance {:.2} m", budget.distance);
    let _ = writeln!(out, "  tx power            {:>8.2} dBm", budget.tx_power);
    let _ = writeln!(out, "  free-space loss     {:>8.2} dB", budget.free_space_loss);
    for o in &budget.obstacle_losses {
        let _ = writeln!(out, "  {:<19} {:>8.2} dB", o.kind, o.loss_db);
    }
    let _ = writeln!(out, "  total attenuation   {:>8.2} dB", budget.total_attenuation);
    let _ = writeln!(out, "  received power      {:>8.2} dBm", budget.received_power);
    let _ = writeln!(
        out,
        "  sensitivity         {:>8.2} dBm ({})",
        sensitivity,
        if is_connected(&budget, sensitivity) {
            "connected"
        } else {
            "out of range"
        }
    );
    let _ = writeln!(
        out,
        "{}",
        serde_json::to_string(&budget).expect("budget serializes")
    );
    Ok(())
}

pub fn cmd_lifetime(
    scenario: &Path,
    node: u16,
    active_s: f64,
    active_state: PowerState,
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = load(scenario, None)?;
    let id = NodeId(node);
    let spec = cfg.require_node(id)?;
    if spec.role != NodeRole::EndDevice {
        return Err(CliError::Usage(format!(
            "node {id} is a {}, not an end device",
            spec.role
        )));
    }
    let cycle = spec
        .sample_period_s
        .ok_or_else(|| CliError::Usage(format!("node {id} has no sample period")))?;
    let capacity = spec
        .battery
        .map_or(crate::power::BatteryState::DEFAULT_CAPACITY_MAH, |b| {
            b.capacity_mah
        });
    let profile = &cfg.consumption;
    let bad = |e: crate::power::PowerError| CliError::Usage(e.to_string());
    let avg = average_current(profile, cycle, active_s, active_state).map_err(bad)?;
    let hours = estimate_lifetime(capacity, avg).map_err(bad)?;
    let sleep_only = estimate_lifetime(capacity, profile.sleeping_ma).map_err(bad)?;
    let q = CyclicSleepConfig::new(cycle, spec.radio.poll_period_s).map_err(bad)?;

    let _ = writeln!(
        out,
        "node {id}: cycle {cycle} s with {active_s} s {}, battery {capacity} mAh",
        active_state.name()
    );
    let _ = writeln!(out, "  average current     {avg:.3} mA");
    let _ = writeln!(out, "  projected lifetime  {hours:.2} h");
    let _ = writeln!(out, "  pure-sleep bound    {sleep_only:.2} h");
    let _ = writeln!(
        out,
        "  poll grid: n = {}, effective period {} s",
        q.n,
        q.effective_period_s()
    );
    if let Some(path) = report {
        let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        let r: RunReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{} is not a run report: {e}", path.display())))?;
        match r.node(id).and_then(|n| n.power.as_ref()) {
            Some(p) => {
                let _ = writeln!(
                    out,
                    "  simulated: average {:.3} mA over {:.0} s, projected {}",
                    p.average_ma,
                    r.until_s,
                    p.projected_lifetime_h
                        .map_or("-".to_string(), |h| format!("{h:.2} h"))
                );
                if let Some(d) = p.died_at_s {
                    let _ = writeln!(out, "  simulated: battery exhausted at {:.2} h", d / 3600.0);
                }
            }
            None => {
                let _ = writeln!(out, "  simulated: node {id} not in report");
            }
        }
    }
    Ok(())
}

// ============================================================================
// REPL
// ============================================================================

fn status(sim: &Simulation, out: &mut dyn Write) {
    let _ = writeln!(out, "t = {}", sim.now());
    for id in sim.node_ids().collect::<Vec<_>>() {
        let spec = sim.node_spec(id).expect("listed node");
        let mut line = format!("  node {id} {}", spec.role);
        if let Some(ed) = sim.end_device(id) {
            line.push_str(&format!(" {}", ed.phase.name()));
            if let Some(c) = sim.cyclic(id) {
                line.push_str(&format!(
                    " period {} s (effective {} s)",
                    c.t_external_s,
                    c.effective_period_s()
                ));
            }
            if let Some(p) = ed.pending_period_change {
                line.push_str(&format!(" pending period {p} s at round end"));
            }
            if let Some((_, p)) = sim.session(id).and_then(|s| s.pending_set_period) {
                line.push_str(&format!(" pending set-period {p} s"));
            }
        }
        if let Some(b) = sim.battery(id) {
            line.push_str(&format!(" battery {:.3}/{} mAh", b.remaining_mah, b.capacity_mah));
        }
        if sim.ledger(id).is_some_and(|l| l.is_dead()) {
            line.push_str(" DEAD");
        }
        if let Some(c) = sim.counters(id) {
            if spec.role == NodeRole::EndDevice {
                line.push_str(&format!(" samples {}", c.samples));
            }
        }
        let _ = writeln!(out, "{line}");
    }
}

fn repl_command(sim: &mut Simulation, line: &str, out: &mut dyn Write) -> Result<bool, String> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let parse_u = |w: Option<&&str>, what: &str| -> Result<u64, String> {
        w.ok_or_else(|| format!("missing {what}"))?
            .parse::<u64>()
            .map_err(|e| format!("bad {what}: {e}"))
    };
    match words.as_slice() {
        [] => {}
        ["step", rest @ ..] => {
            let k = if rest.is_empty() {
                1
            } else {
                parse_u(rest.first(), "count")?
            };
            for _ in 0..k {
                match sim.step() {
                    Some(l) => {
                        let _ = writeln!(out, "{l}");
                    }
                    None => {
                        let _ = writeln!(out, "no pending events");
                        break;
                    }
                }
            }
        }
        ["run-until", rest @ ..] => {
            let secs: f64 = rest
                .first()
                .ok_or("missing seconds")?
                .parse()
                .map_err(|e| format!("bad seconds: {e}"))?;
            let t = SimTime::from_secs_f64(secs);
            if t < sim.now() {
                return Err(format!("{t} is before the clock {}", sim.now()));
            }
            let before = sim.stats().events_processed;
            sim.run_until(t);
            let _ = writeln!(
                out,
                "t = {} ({} events)",
                sim.now(),
                sim.stats().events_processed - before
            );
        }
        ["set-period", rest @ ..] => {
            let node = parse_u(rest.first(), "node")?;
            let seconds = parse_u(rest.get(1), "seconds")?;
            let node = NodeId(u16::try_from(node).map_err(|_| "node id out of range".to_string())?);
            let seconds = u32::try_from(seconds).map_err(|_| "period out of range".to_string())?;
            if seconds == 0 {
                return Err("period must be positive".into());
            }
            if sim.end_device(node).is_none() {
                return Err(format!("node {node} is not an active end device"));
            }
            sim.inject(SimCommand::SetPeriod { node, seconds });
            let now = sim.now();
            sim.run_until(now);
            let _ = writeln!(out, "SET_PERIOD {seconds} s sent to node {node}");
        }
        ["status"] => status(sim, out),
        ["dump-samples", path] => {
            let mut buf = Vec::new();
            write_samples_csv(&mut buf, sim.samples()).map_err(|e| e.to_string())?;
            fs::write(path, buf).map_err(|e| format!("writing {path}: {e}"))?;
            let _ = writeln!(out, "{} samples written to {path}", sim.samples().len());
        }
        ["quit"] | ["exit"] => return Ok(false),
        [other, ..] => {
            return Err(format!(
                "unknown command {other:?}; try step, run-until, set-period, status, dump-samples, quit"
            ))
        }
    }
    Ok(true)
}

pub fn repl_loop(
    scenario: &Path,
    seed: Option<u64>,
    dir: Option<&Path>,
    trace: bool,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = load(scenario, seed)?;
    let mut sim = build(cfg, trace, &mut io::stderr())?;
    let mut line = String::new();
    loop {
        let _ = write!(out, "> ");
        let _ = out.flush();
        line.clear();
        let n = input.read_line(&mut line).map_err(io_err("reading input"))?;
        if n == 0 {
            break;
        }
        match repl_command(&mut sim, line.trim(), out) {
            Ok(true) => {}
            Ok(false) => break,
            Err(msg) => {
                let _ = writeln!(out, "error: {msg}");
            }
        }
    }
    sim.settle();
    if let Some(dir) = dir {
        write_outputs(&sim, dir, trace)?;
        let _ = writeln!(out, "outputs written to {}", dir.display());
    }
    Ok(())
}
