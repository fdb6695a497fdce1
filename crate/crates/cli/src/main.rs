use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rover_sim::environment::{load_scenario, Scenario};
use rover_sim::metrics::MissionReport;
use rover_sim::scheduler::{replay, run, RunConfig, RunOutput, Simulation, TraceLog};
use rover_sim::telemetry::{
    world_greeting, ServiceConfig, TelemetryService, DEFAULT_MIRROR_PORT, DEFAULT_UDP_PORT,
};

#[derive(Parser)]
#[command(name = "roversim", version, about = "Breeding-site rover mission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario file.
    Validate { scenario: PathBuf },
    /// Run a mission to completion and write report and trace files.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Recompute the report from a trace without re-simulating.
    Replay {
        trace: PathBuf,
        /// Compare against a previously written machine report.
        #[arg(long)]
        check: Option<PathBuf>,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Render the report stored in a trace.
    Report {
        trace: PathBuf,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Run the mission in real time behind the UDP link and JSON mirror.
    Serve {
        scenario: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long, default_value_t = DEFAULT_UDP_PORT)]
        udp_port: u16,
        #[arg(long, default_value_t = DEFAULT_MIRROR_PORT)]
        mirror_port: u16,
        /// Keep serving for this many wall-clock seconds after the mission ends.
        #[arg(long, default_value_t = 0.0)]
        linger: f64,
        #[command(flatten)]
        output: OutputFlags,
    },
}

#[derive(Args, Clone)]
struct SimFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long = "max-time", default_value_t = 3600.0)]
    max_time: f64,
    /// Wall-clock pacing factor; 0 runs flat out.
    #[arg(long)]
    realtime: Option<f64>,
}

#[derive(Args, Clone)]
struct OutputFlags {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Machine,
}

/// Errors that map to a specific exit status.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Exit>() {
                Some(Exit(code, _)) => ExitCode::from(*code),
                None => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { scenario } => {
            let s = read_scenario(&scenario)?;
            println!(
                "ok: {} sites, {} nodes, {} waypoints, {} obstacles",
                s.world.sites.len(),
                s.world.nodes.len(),
                s.mission.waypoints.len(),
                s.world.obstacles.len()
            );
            Ok(())
        }
        Command::Run {
            scenario,
            sim,
            output,
        } => {
            let s = read_scenario(&scenario)?;
            let config = run_config(&sim, 0.0)?;
            let started = Instant::now();
            let out = run(&s, &config)?;
            log::info!("simulated in {:.2?}", started.elapsed());
            finish(&out, &output)
        }
        Command::Replay {
            trace,
            check,
            output,
        } => {
            let report = replay(&read_trace(&trace)?)?;
            if let Some(path) = check {
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                let original = MissionReport::from_json(&text)
                    .with_context(|| format!("{} is not a machine report", path.display()))?;
                if original != report {
                    bail!("replayed report differs from {}", path.display());
                }
                eprintln!("replay matches {}", path.display());
            }
            emit(&report, &output)
        }
        Command::Report { trace, output } => {
            let report = replay(&read_trace(&trace)?)?;
            emit(&report, &output)
        }
        Command::Serve {
            scenario,
            sim,
            udp_port,
            mirror_port,
            linger,
            output,
        } => serve(&scenario, &sim, udp_port, mirror_port, linger, &output),
    }
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Exit(2, format!("scenario not found: {}", path.display())).into())
        }
        Err(e) => return Err(e).with_context(|| format!("cannot read {}", path.display())),
    };
    load_scenario(&text).with_context(|| format!("{}", path.display()))
}

fn read_trace(path: &Path) -> Result<TraceLog> {
    let bytes = fs::read(path).with_context(|| format!("cannot read trace {}", path.display()))?;
    TraceLog::from_bytes(&bytes).with_context(|| format!("corrupt trace {}", path.display()))
}

fn run_config(flags: &SimFlags, default_realtime: f64) -> Result<RunConfig> {
    let config = RunConfig {
        seed: flags.seed,
        dt_s: flags.dt,
        max_sim_time_s: flags.max_time,
        realtime: flags.realtime.unwrap_or(default_realtime),
        ..RunConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn write_outputs(dir: &Path, report: &MissionReport, trace: Option<&TraceLog>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).with_context(|| format!("cannot write {}", p.display()))
    };
    write("report.txt", report.render_human().as_bytes())?;
    write("report.kv", report.render_key_value().as_bytes())?;
    write("report.json", report.to_json().as_bytes())?;
    if let Some(trace) = trace {
        write("trace.bin", &trace.to_bytes())?;
    }
    Ok(())
}

fn emit(report: &MissionReport, output: &OutputFlags) -> Result<()> {
    if let Some(dir) = &output.out {
        write_outputs(dir, report, None)?;
    }
    print_report(report, output.format);
    Ok(())
}

fn print_report(report: &MissionReport, format: Format) {
    match format {
        Format::Human => print!("{}", report.render_human()),
        Format::Machine => println!("{}", report.to_json()),
    }
}

fn finish(out: &RunOutput, output: &OutputFlags) -> Result<()> {
    let dir = output.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    write_outputs(&dir, &out.report, Some(&out.trace))?;
    print_report(&out.report, output.format);
    Ok(())
}

fn serve(
    scenario: &Path,
    flags: &SimFlags,
    udp_port: u16,
    mirror_port: u16,
    linger: f64,
    output: &OutputFlags,
) -> Result<()> {
    let s = read_scenario(scenario)?;
    let config = run_config(flags, 1.0)?;
    let service = TelemetryService::start(&ServiceConfig::local(udp_port, Some(mirror_port)))
        .with_context(|| format!("cannot bind udp port {udp_port} / mirror port {mirror_port}"))?;
    service.set_greeting(world_greeting(&s.world, &s.mission));
    eprintln!(
        "serving: udp {} mirror ws://{}",
        service.udp_addr()?,
        service.mirror_addr().map(|a| a.to_string()).unwrap_or_default()
    );

    let mut sim = Simulation::new(s, config.clone())?;
    let tick = (config.realtime > 0.0).then(|| Duration::from_secs_f64(config.dt_s / config.realtime));
    let started = Instant::now();
    while !sim.is_finished() {
        let frames = sim.step(service.drain());
        service.publish(&frames);
        if let Some(t) = tick {
            let due = started + t.mul_f64(sim.tick_count() as f64);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }
    if linger > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(linger));
    }
    let out = sim.finish()?;
    finish(&out, output)
}
