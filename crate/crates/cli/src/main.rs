use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use chainsim::kernels::{build_case, variant_labels, BenchCase, CaseSize, KERNEL_NAMES};
use chainsim::sim::{format_trace, SimOptions};
use chainsim::{
    compare, emit_text, fpu_utilization, functional_reference, parse_program, run_with, CoreConfig, EnergyParams,
    Outcome, Program, RunRecord, SimResult,
};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "chainsim", version, about = "Cycle-accurate simulator of a core with FIFO-chained FP registers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one program and verify it against the functional reference.
    Run(RunArgs),
    /// Print the per-cycle issue trace of one program.
    Trace(RunArgs),
    /// Run every kernel in every variant and write the comparison table.
    Bench(BenchArgs),
    /// Write a generated kernel as assembly text.
    EmitAsm(RunArgs),
}

#[derive(Args, Clone)]
struct MachineArgs {
    /// JSON core configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the FPU pipeline depth.
    #[arg(long)]
    fpu_depth: Option<usize>,
    #[arg(long)]
    no_dual_issue: bool,
    #[arg(long)]
    no_same_cycle_refill: bool,
    /// Seed of the input data generator.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Assembly source; mutually exclusive with --kernel.
    #[arg(conflicts_with_all = ["kernel", "variant"])]
    program: Option<PathBuf>,
    /// vecop, box3d1r or j3d27pt.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    nz: Option<usize>,
    #[command(flatten)]
    machine: MachineArgs,
    /// Output path (trace text, assembly, or JSON summary).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-cycle trace here.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Also write the simulated program as assembly here.
    #[arg(long)]
    emit_asm: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    machine: MachineArgs,
    /// CSV output; a JSON mirror is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave out the meta block (timestamp, config echo) of the JSON mirror.
    #[arg(long)]
    no_meta: bool,
    /// Also write every generated kernel as assembly into this directory.
    #[arg(long)]
    emit_asm: Option<PathBuf>,
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
enum Failure {
    Mismatch(String),
    Simulation(String),
    Usage(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Mismatch(_) => 1,
            Failure::Simulation(_) => 2,
            Failure::Usage(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 3 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Trace(args) => cmd_trace(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::EmitAsm(args) => cmd_emit(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Mismatch(m) | Failure::Simulation(m) => eprintln!("error: {m}"),
                Failure::Usage(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_config(m: &MachineArgs) -> Result<CoreConfig> {
    let mut cfg = match &m.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            CoreConfig::from_json(&text).with_context(|| format!("config {}", path.display()))?
        }
        None => CoreConfig::default(),
    };
    if let Some(d) = m.fpu_depth {
        cfg.fpu_depth = d;
    }
    cfg.pseudo_dual_issue &= !m.no_dual_issue;
    cfg.same_cycle_refill &= !m.no_same_cycle_refill;
    cfg.validate()?;
    Ok(cfg)
}

/// Program to simulate plus the kernel it came from, if any.
struct Subject {
    program: Program,
    case: Option<BenchCase>,
}

fn subject(args: &RunArgs, cfg: &CoreConfig) -> Result<Subject> {
    match (&args.program, &args.kernel) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let program = parse_program(&text).map_err(|diags| {
                let lines: Vec<String> =
                    diags.iter().map(|d| format!("{}:{}:{}: {}", path.display(), d.line, d.column, d.message)).collect();
                anyhow::anyhow!("assembly failed\n{}", lines.join("\n"))
            })?;
            Ok(Subject { program, case: None })
        }
        (None, Some(kernel)) => {
            let variant = match &args.variant {
                Some(v) => v.clone(),
                None => variant_labels(kernel).and_then(|v| v.first().map(|s| s.to_string())).unwrap_or_default(),
            };
            let d = CaseSize::default();
            let size = CaseSize {
                n: args.n.unwrap_or(d.n),
                nx: args.nx.unwrap_or(d.nx),
                ny: args.ny.unwrap_or(d.ny),
                nz: args.nz.unwrap_or(d.nz),
            };
            let case = build_case(kernel, &variant, size, args.machine.seed, cfg)?;
            Ok(Subject { program: case.bundle.program.clone(), case: Some(case) })
        }
        _ => bail!("give either a program file or --kernel (one of {})", KERNEL_NAMES.join(", ")),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn simulation_failure(r: &SimResult) -> Option<Failure> {
    match &r.outcome {
        Outcome::Halted => None,
        Outcome::Deadlock(reason) => Some(Failure::Simulation(format!("deadlock (last stall {reason:?})"))),
        Outcome::Watchdog => Some(Failure::Simulation("watchdog: cycle limit reached".into())),
        Outcome::Fault(f) => Some(Failure::Simulation(format!("fault: {f}"))),
    }
}

/// Compares final memory with the functional reference and, for kernels,
/// the analytic oracle.
fn verify(program: &Program, case: Option<&BenchCase>, r: &SimResult, cfg: &CoreConfig) -> Result<(), Failure> {
    match functional_reference(program, cfg) {
        Ok(mem) if mem == r.final_state.mem => {}
        Ok(_) => return Err(Failure::Mismatch("final memory differs from the functional reference".into())),
        Err(f) => return Err(Failure::Mismatch(format!("functional reference faulted: {f}"))),
    }
    if let Some(case) = case {
        if let Err(addr) = case.bundle.check(&r.final_state.mem) {
            return Err(Failure::Mismatch(format!("output mismatch at {addr:#x}")));
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.machine)?;
    let s = subject(args, &cfg)?;
    let trace = args.trace_out.is_some();
    let r = run_with(&s.program, &cfg, SimOptions { trace, ..Default::default() });
    if let Some(path) = &args.trace_out {
        write(path, &format_trace(&r.trace))?;
    }
    if let Some(path) = &args.emit_asm {
        write(path, &emit_text(&s.program))?;
    }
    let c = &r.counters;
    let summary = json!({
        "outcome": format!("{:?}", r.outcome),
        "kernel": s.case.as_ref().map(|c| c.kernel.clone()),
        "variant": s.case.as_ref().map(|c| c.label.clone()),
        "cycles": c.cycles_roi,
        "fp_issued": c.fp_issued,
        "utilization": fpu_utilization(c).ok(),
        "stalls": { "raw": c.stall_raw, "fifo_empty": c.stall_fifo_empty,
                    "backpressure": c.stall_backpressure, "mem": c.stall_mem },
        "l1_reads": c.l1_reads,
        "l1_writes": c.l1_writes,
        "fp_regs_used": s.case.as_ref().map(|c| c.bundle.fp_regs_used),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if let Some(path) = &args.out {
        write(path, &summary.to_string())?;
    }
    if let Some(f) = simulation_failure(&r) {
        return Err(f);
    }
    verify(&s.program, s.case.as_ref(), &r, &cfg)?;
    println!("oracle: match");
    Ok(())
}

fn cmd_trace(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.machine)?;
    let s = subject(args, &cfg)?;
    let r = run_with(&s.program, &cfg, SimOptions { trace: true, ..Default::default() });
    let text = format_trace(&r.trace);
    match args.out.as_ref().or(args.trace_out.as_ref()) {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    simulation_failure(&r).map_or(Ok(()), Err)
}

fn cmd_emit(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.machine)?;
    let s = subject(args, &cfg)?;
    let text = emit_text(&s.program);
    match args.out.as_ref().or(args.emit_asm.as_ref()) {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Command line that reruns one bench cell on its own.
fn rerun_command(case: &BenchCase, m: &MachineArgs) -> String {
    let mut cmd = format!("chainsim run --kernel {} --variant '{}' --seed {}", case.kernel, case.label, m.seed);
    if let Some(p) = &m.config {
        cmd += &format!(" --config {}", p.display());
    }
    if let Some(d) = m.fpu_depth {
        cmd += &format!(" --fpu-depth {d}");
    }
    if m.no_dual_issue {
        cmd += " --no-dual-issue";
    }
    if m.no_same_cycle_refill {
        cmd += " --no-same-cycle-refill";
    }
    cmd
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.machine)?;
    let mut cases = Vec::new();
    for kernel in KERNEL_NAMES {
        for label in variant_labels(kernel).unwrap_or_default() {
            cases.push(build_case(kernel, label, CaseSize::default(), args.machine.seed, &cfg).map_err(anyhow::Error::from)?);
        }
    }
    if let Some(dir) = &args.emit_asm {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for c in &cases {
            let label = c.label.replace('+', "plus").replace('-', "minus");
            let name = format!("{}_{}.s", c.kernel, label);
            write(&dir.join(name), &emit_text(&c.bundle.program))?;
        }
    }
    let results: Vec<(SimResult, Result<(), Failure>)> = cases
        .par_iter()
        .map(|c| {
            let r = run_with(&c.bundle.program, &cfg, SimOptions::default());
            let check = match simulation_failure(&r) {
                Some(f) => Err(f),
                None => verify(&c.bundle.program, Some(c), &r, &cfg),
            };
            (r, check)
        })
        .collect();

    let mut worst: Option<Failure> = None;
    let mut records = Vec::new();
    for (case, (r, check)) in cases.iter().zip(results) {
        println!("{}", rerun_command(case, &args.machine));
        if let Err(f) = check {
            eprintln!("error: {}/{}: {}", case.kernel, case.label, match &f {
                Failure::Mismatch(m) | Failure::Simulation(m) => m.clone(),
                Failure::Usage(e) => e.to_string(),
            });
            if worst.as_ref().is_none_or(|w| f.code() > w.code()) {
                worst = Some(f);
            }
        }
        records.push(RunRecord::from_result(case.label.clone(), case.kernel.clone(), &r));
    }
    if let Some(f) = worst {
        return Err(f);
    }
    let table = compare(&records, "Base", &EnergyParams::default()).map_err(anyhow::Error::from)?;
    // Stencils also against the weakest baseline with the same store path.
    let stencils: Vec<RunRecord> = records.iter().filter(|r| r.kernel != "vecop").cloned().collect();
    let direct = compare(&stencils, "Base-", &EnergyParams::default()).map_err(anyhow::Error::from)?;
    for g in direct.geomean.iter().filter(|g| g.label == "Chaining+") {
        println!("geomean Chaining+ over Base-: speedup {:.6}, efficiency {:.6}", g.speedup, g.eff_ratio);
    }
    for g in table.geomean.iter().filter(|g| g.label == "Chaining+") {
        println!("geomean Chaining+ over Base: speedup {:.6}, efficiency {:.6}", g.speedup, g.eff_ratio);
    }
    let csv = table.to_csv();
    match &args.out {
        Some(path) => {
            write(path, &csv)?;
            let meta = (!args.no_meta).then(|| {
                let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                json!({
                    "timestamp_unix": now,
                    "seed": args.machine.seed,
                    "config": serde_json::to_value(&cfg).expect("config serializes"),
                    "energy_params": serde_json::to_value(EnergyParams::default()).expect("params serialize"),
                    "version": env!("CARGO_PKG_VERSION"),
                })
            });
            write(&path.with_extension("json"), &table.to_json(meta))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}
