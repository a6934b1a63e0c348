//! `triage`: run scenarios headless, run single vitals pipelines on trace
//! files, synthesize traces, and serve a live simulation.
//!
//! Exit codes:
//!
//! | code | meaning                                                   |
//! |------|-----------------------------------------------------------|
//! | 0    | success                                                   |
//! | 1    | output could not be written                               |
//! | 2    | scenario, script or override error (including missing file) |
//! | 3    | trace file missing, unparsable or unusable by the pipeline |
//! | 4    | unknown pipeline                                          |
//! | 5    | could not bind the server address                         |

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use triage_core::sim::{load_scenario, parse_override, run_headless, Policy, Scenario, Script, World};
use triage_core::vitals::synth::{synth_vital_signal, Modality, SynthSpec, Trace};
use triage_core::vitals::trace_csv::{read_trace, write_trace};
use triage_core::vitals::{
    estimate_hr_mmwave, estimate_hr_rppg, estimate_rate_mmwave, estimate_rate_mtts, estimate_rr_pcr,
    estimate_rr_thermal, PcrConfig, RateEstimate, RppgConfig, RppgMethod, ThermalConfig, VitalsError,
    RESPIRATION_BAND,
};

const EXIT_IO: u8 = 1;
const EXIT_SCENARIO: u8 = 2;
const EXIT_TRACE: u8 = 3;
const EXIT_PIPELINE: u8 = 4;
const EXIT_BIND: u8 = 5;

#[derive(Parser)]
#[command(name = "triage", version, about = "Multi-robot casualty triage simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario to completion and write scorecards, metrics and events.
    Run(RunArgs),
    /// Run one vitals pipeline on a trace file and print the estimate.
    Vitals(VitalsArgs),
    /// Write a synthetic vitals trace as CSV.
    Synth(SynthArgs),
    /// Serve a live, real-time-paced simulation over WebSocket.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Year1,
    Year2,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// `auto`, `manual`, or a script file (TOML).
    #[arg(long, default_value = "auto")]
    script: String,
    /// Fusion rules; overrides `sim.mode` in the scenario.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Dotted-path override, e.g. `sim.dt=0.05`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct VitalsArgs {
    /// Trace CSV as written by `synth`.
    #[arg(long)]
    trace: PathBuf,
    /// Pipeline name; run with an unknown name to list them.
    #[arg(long)]
    pipeline: String,
}

#[derive(Args)]
struct SynthArgs {
    /// rgb, mmwave, pcr, thermal or mtts.
    #[arg(long)]
    modality: String,
    #[arg(long, default_value_t = 72.0)]
    hr: f64,
    #[arg(long, default_value_t = 14.0)]
    rr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Signal-to-noise ratio in dB; omit for a noise-free trace.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Window length, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Sample rate, Hz.
    #[arg(long)]
    fs: Option<f64>,
    /// Emit noise only (no vital signs), for testing the quality gate.
    #[arg(long)]
    noise_only: bool,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8700)]
    port: u16,
    /// Simulated seconds per wall second.
    #[arg(long, default_value_t = 1.0)]
    pace: f64,
    /// Snapshots per simulated second.
    #[arg(long, default_value_t = 5.0)]
    snapshot_rate: f64,
    /// Hold the simulation until the first client connects.
    #[arg(long)]
    wait_for_client: bool,
}

struct Failure(u8, String);

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.command {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Vitals(a) => cmd_vitals(a),
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Serve(a) => cmd_serve(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("triage: {msg}");
            ExitCode::from(code)
        }
    }
}

fn scenario_err(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_SCENARIO, e.to_string())
}

fn load(args: &ScenarioArgs) -> Result<(Scenario, Script), Failure> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| scenario_err(format!("{}: {e}", args.scenario.display())))?;
    let mut overrides = Vec::new();
    for o in &args.overrides {
        overrides.push(parse_override(o).map_err(scenario_err)?);
    }
    if let Some(m) = args.mode {
        let name = match m {
            Mode::Year1 => "year1",
            Mode::Year2 => "year2",
        };
        overrides.push(("sim.mode".to_string(), format!("\"{name}\"")));
    }
    let scenario = load_scenario(&text, &overrides).map_err(scenario_err)?;
    let script = match args.script.as_str() {
        "auto" => Script::auto(),
        "manual" => Script::manual(Vec::new()),
        path => {
            let t = std::fs::read_to_string(path).map_err(|e| scenario_err(format!("{path}: {e}")))?;
            Script::parse(&t).map_err(scenario_err)?
        }
    };
    script.check(&scenario).map_err(scenario_err)?;
    Ok((scenario, script))
}

fn write(path: &Path, contents: &str) -> Outcome {
    std::fs::write(path, contents).map_err(|e| Failure(EXIT_IO, format!("{}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> Outcome {
    let (scenario, script) = load(&args.scenario)?;
    let out = run_headless(scenario, &script).map_err(scenario_err)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure(EXIT_IO, format!("{}: {e}", args.out.display())))?;
    write(&args.out.join("scorecards.json"), &format!("{}\n", out.scorecards_json()))?;
    let metrics = serde_json::to_value(&out.metrics).expect("metrics serialize");
    write(
        &args.out.join("metrics.json"),
        &format!("{}\n", serde_json::to_string_pretty(&metrics).expect("serializes")),
    )?;
    write(&args.out.join("events.log"), &out.events_text())?;
    eprintln!(
        "triage: {} scorecards at the basestation, {} clusters; wrote {}",
        out.scorecards.len(),
        out.metrics.cluster_count,
        args.out.display()
    );
    Ok(())
}

/// Pipeline names and the trace modality each expects.
const PIPELINES: [(&str, Modality); 7] = [
    ("rppg", Modality::Rgb),
    ("rppg_green", Modality::Rgb),
    ("mmwave_hr", Modality::MmWave),
    ("mmwave_rr", Modality::MmWave),
    ("pcr_rr", Modality::Pcr),
    ("lwir_rr", Modality::Thermal),
    ("mtts_rr", Modality::Mtts),
];

fn run_pipeline(name: &str, trace: Trace) -> Result<RateEstimate, VitalsError> {
    let series = |t: Trace| t.into_series().expect("modality checked");
    match name {
        "rppg" => estimate_hr_rppg(&trace.into_rgb().expect("modality checked"), &RppgConfig::default()),
        "rppg_green" => estimate_hr_rppg(
            &trace.into_rgb().expect("modality checked"),
            &RppgConfig { method: RppgMethod::Green, ..RppgConfig::default() },
        ),
        "mmwave_hr" => estimate_hr_mmwave(&series(trace)),
        "mmwave_rr" => estimate_rate_mmwave(&series(trace), &RESPIRATION_BAND),
        "pcr_rr" => estimate_rr_pcr(&series(trace), &PcrConfig::default()),
        "lwir_rr" => estimate_rr_thermal(&trace.into_thermal().expect("modality checked"), &ThermalConfig::default())
            .map(|e| e.average),
        "mtts_rr" => estimate_rate_mtts(&series(trace), &RESPIRATION_BAND),
        _ => unreachable!("checked against PIPELINES"),
    }
}

fn cmd_vitals(args: VitalsArgs) -> Outcome {
    let Some(&(name, want)) = PIPELINES.iter().find(|(n, _)| *n == args.pipeline) else {
        let names: Vec<&str> = PIPELINES.iter().map(|(n, _)| *n).collect();
        return Err(Failure(
            EXIT_PIPELINE,
            format!("unknown pipeline {:?}; available: {}", args.pipeline, names.join(", ")),
        ));
    };
    let text = std::fs::read_to_string(&args.trace)
        .map_err(|e| Failure(EXIT_TRACE, format!("{}: {e}", args.trace.display())))?;
    let (modality, trace) =
        read_trace(&text).map_err(|e| Failure(EXIT_TRACE, format!("{}: {e}", args.trace.display())))?;
    if modality != want {
        return Err(Failure(
            EXIT_TRACE,
            format!("pipeline {name} needs a {} trace, got {}", want.name(), modality.name()),
        ));
    }
    let est = run_pipeline(name, trace).map_err(|e| Failure(EXIT_TRACE, format!("{name}: {e}")))?;
    println!("{}", serde_json::to_string(&est).expect("serializes"));
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Outcome {
    let modality = Modality::parse(&args.modality)
        .ok_or_else(|| Failure(EXIT_TRACE, format!("unknown modality {:?}", args.modality)))?;
    let mut spec = SynthSpec::new(args.hr, args.rr, modality, args.seed);
    if let Some(snr) = args.snr_db {
        spec = spec.snr_db(snr);
    }
    if args.duration.is_some() || args.fs.is_some() {
        let (d, fs) = modality.default_window();
        spec = spec.window(args.duration.unwrap_or(d), args.fs.unwrap_or(fs));
    }
    if args.noise_only {
        spec = spec.noise_only();
    }
    let trace = synth_vital_signal(&spec).map_err(|e| Failure(EXIT_TRACE, e.to_string()))?;
    let csv = write_trace(modality, &trace);
    match args.out {
        Some(p) => write(&p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_serve(args: ServeArgs) -> Outcome {
    let (scenario, script) = load(&args.scenario)?;
    if !script.commands.is_empty() {
        return Err(scenario_err("serve takes `auto` or `manual`; operator commands come from clients"));
    }
    let policy: Policy = script.policy;
    let world = World::new(scenario, policy).map_err(scenario_err)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure(EXIT_IO, e.to_string()))?;
    rt.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure(EXIT_BIND, format!("cannot bind {addr}: {e}")))?;
        eprintln!("triage: listening on http://{addr} (ws://{addr}/ws)");
        let cfg = triage_service::ServiceConfig {
            pace: Some(args.pace),
            snapshot_rate: args.snapshot_rate,
            wait_for_client: args.wait_for_client,
        };
        triage_service::serve(listener, world, cfg).await.map_err(|e| Failure(EXIT_IO, e.to_string()))
    })
}
