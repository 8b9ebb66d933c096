//! `coexist`: SINR-vs-CNR sweeps and the verification suite.

mod verify;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use coexist_core::montecarlo::{run_sweep_with, write_csv, Progress, SweepOptions, SweepPlan, DEFAULT_STRIDE};
use coexist_core::scenario::parse_scenario;
use coexist_core::{CsiMode, ReceiverKind};

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_PROPERTY: u8 = 3;

#[derive(Parser)]
#[command(name = "coexist", version, about = "Massive-MIMO uplink / radar coexistence simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo SINR-vs-CNR sweep, written as CSV.
    Sweep(SweepArgs),
    /// Run the oracle and property checks at desk scale.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario file (`key = value` lines).
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trials per grid point.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Output CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// CNR grid in dB, comma separated; `-inf` disables clutter.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-10,0,10,20,30,40")]
    cnr: Vec<String>,
    /// Array sizes; defaults to the scenario's M.
    #[arg(long = "m-list", value_delimiter = ',')]
    m_list: Vec<usize>,
    /// User counts; defaults to the scenario's K.
    #[arg(long = "k-list", value_delimiter = ',')]
    k_list: Vec<usize>,
    /// perfect, pm or both.
    #[arg(long, default_value = "both")]
    csi: String,
    /// Subset of cm,zf,lmmse,fzf.
    #[arg(long, value_delimiter = ',', default_value = "cm,zf,lmmse,fzf")]
    receivers: Vec<String>,
    /// Evaluate every `stride`-th subcarrier.
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// List property names without running them.
    #[arg(long)]
    list: bool,
    /// Test hook: negate odd echoes in the closed-form clutter matrix.
    #[arg(long = "break-clutter-sign")]
    break_clutter_sign: bool,
}

enum Failure {
    Config(String),
    Io(String),
}

fn parse_cnr(items: &[String]) -> Result<Vec<f64>, Failure> {
    items
        .iter()
        .map(|s| {
            let t = s.trim();
            match t.to_ascii_lowercase().as_str() {
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                _ => t.parse::<f64>().map_err(|_| Failure::Config(format!("invalid CNR value `{t}`"))),
            }
        })
        .collect()
}

fn parse_csi(s: &str) -> Result<Vec<CsiMode>, Failure> {
    match s.trim().to_ascii_lowercase().as_str() {
        "both" => Ok(CsiMode::ALL.to_vec()),
        other => other.parse::<CsiMode>().map(|m| vec![m]).map_err(|e| Failure::Config(e.to_string())),
    }
}

fn build_plan(args: &SweepArgs) -> Result<SweepPlan, Failure> {
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| Failure::Config(format!("cannot read scenario {}: {e}", args.scenario.display())))?;
    let scn = parse_scenario(&text).map_err(|e| Failure::Config(format!("{}: {e}", args.scenario.display())))?;
    let mut plan = SweepPlan::new(scn);
    plan.master_seed = args.seed;
    plan.trials = args.trials;
    plan.stride = args.stride;
    plan.cnr_db = parse_cnr(&args.cnr)?;
    if !args.m_list.is_empty() {
        plan.antennas = args.m_list.clone();
    }
    if !args.k_list.is_empty() {
        plan.users = args.k_list.clone();
    }
    plan.csi_modes = parse_csi(&args.csi)?;
    plan.receivers = args
        .receivers
        .iter()
        .map(|r| r.parse::<ReceiverKind>().map_err(|e| Failure::Config(e.to_string())))
        .collect::<Result<_, _>>()?;
    plan.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(plan)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let plan = build_plan(args)?;
    // Open the output before the (possibly long) run so path errors surface early.
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| Failure::Io(format!("cannot create {}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };

    let start = Instant::now();
    let report = |p: Progress| {
        if p.trials_done == p.trials {
            eprintln!("[{}/{}] M={} K={}: {} trials done", p.point + 1, p.points, p.antennas, p.users, p.trials);
        }
    };
    let options = SweepOptions { workers: args.workers, diagnostics: false, progress: Some(&report) };
    let out = run_sweep_with(&plan, options).map_err(|e| Failure::Config(e.to_string()))?;

    let mut sink = sink;
    write_csv(&out.records, &mut sink).and_then(|_| sink.flush()).map_err(|e| Failure::Io(format!("writing CSV: {e}")))?;
    let target = args.out.as_ref().map_or_else(|| "stdout".to_string(), |p| p.display().to_string());
    eprintln!("wrote {} rows to {target} in {:.1}s", out.records.len(), start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> ExitCode {
    // Write errors (e.g. a closed pipe) are ignored; the exit code carries the verdict.
    let mut out = io::stdout().lock();
    if args.list {
        for p in verify::PROPERTIES {
            let _ = writeln!(out, "{p}");
        }
        return ExitCode::SUCCESS;
    }
    let results = verify::run_all(args.break_clutter_sign);
    let failed = results.iter().filter(|r| !r.pass).count();
    for r in &results {
        let _ = writeln!(out, "{} {}: {}", if r.pass { "pass" } else { "FAIL" }, r.name, r.detail);
    }
    if failed == 0 {
        let _ = writeln!(out, "all {} properties passed", results.len());
        ExitCode::SUCCESS
    } else {
        let _ = writeln!(out, "{failed} of {} properties failed", results.len());
        ExitCode::from(EXIT_PROPERTY)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Sweep(args) => match cmd_sweep(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(Failure::Config(msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(EXIT_CONFIG)
            }
            Err(Failure::Io(msg)) => {
                eprintln!("error: {msg}");
                ExitCode::from(EXIT_IO)
            }
        },
        Command::Verify(args) => cmd_verify(&args),
    }
}
