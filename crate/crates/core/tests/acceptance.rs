//! Acceptance report: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed; exits non-zero if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use chainsim::kernels::{
    bench_matrix, build_vecop, random_vecop, BenchCase, StencilKind, StencilVariant, VecopSpec, VecopVariant,
};
use chainsim::report::geomean;
use chainsim::sim::{FpSlot, SimOptions};
use chainsim::{
    energy_efficiency, fpu_utilization, functional_reference, run, run_with, CoreConfig, Counters, EnergyParams, Instr,
    SimResult,
};
use common::batches::{
    balanced_batch, baseline_equivalence_batch, crosscheck_batch, imbalance_batch, CROSSCHECK_PROGRAMS,
    FIFO_PROGRAMS, IMBALANCE_PROGRAMS,
};

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn traced() -> SimOptions {
    SimOptions { trace: true, chaining: true }
}

/// Cycles at which FP compute instructions issued, with a tag per opcode.
fn fp_issues(r: &SimResult) -> Vec<(u64, char)> {
    r.trace
        .iter()
        .filter_map(|row| match row.fp_slot {
            FpSlot::Issued(Instr::FAddD { .. }) => Some((row.cycle, 'a')),
            FpSlot::Issued(Instr::FMulD { .. }) => Some((row.cycle, 'm')),
            _ => None,
        })
        .collect()
}

fn raw_stall_count() -> Verdict {
    let t = Instant::now();
    let cfg = CoreConfig::default();
    let bundle = build_vecop(&random_vecop(VecopVariant::Base, 256, 1), &cfg).map_err(|e| e.to_string())?;
    let r = run_with(&bundle.program, &cfg, traced());
    let issues = fp_issues(&r);
    let delays: Vec<u64> = issues.chunks(2).map(|p| p[1].0 - p[0].0 - 1).collect();
    let all_three = delays.len() == 256 && delays.iter().all(|d| *d == cfg.fpu_depth as u64);
    let secs = t.elapsed().as_secs_f64();
    let msg = format!("{} fmuls, delays min {:?} max {:?}, {secs:.2}s", delays.len(), delays.iter().min(), delays.iter().max());
    if all_three && r.halted() && secs < 1.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn stalls_for(depth: usize, unroll: usize, n: usize) -> Result<u64, String> {
    let cfg = CoreConfig { fpu_depth: depth, ..Default::default() };
    let spec = VecopSpec { unroll: Some(unroll), ..random_vecop(VecopVariant::Unroll4, n, 2) };
    let bundle = build_vecop(&spec, &cfg).map_err(|e| e.to_string())?;
    let r = run(&bundle.program, &cfg);
    if !r.halted() || bundle.check(&r.final_state.mem).is_err() {
        return Err(format!("depth {depth} unroll {unroll} did not complete correctly"));
    }
    Ok(r.counters.stall_total())
}

fn unroll_sufficiency() -> Verdict {
    let d3u4 = stalls_for(3, 4, 1024)?;
    let d4u4 = stalls_for(4, 4, 1024)?;
    let d4u5 = stalls_for(4, 5, 1020)?;
    let msg = format!("stalls: depth3/unroll4 {d3u4}, depth4/unroll4 {d4u4}, depth4/unroll5 {d4u5}");
    if d3u4 == 0 && d4u4 > 0 && d4u5 == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn register_delta() -> Verdict {
    let cfg = CoreConfig::default();
    let used = |v| build_vecop(&random_vecop(v, 256, 3), &cfg).map(|b| b.fp_regs_used).map_err(|e| e.to_string());
    let (u, c) = (used(VecopVariant::Unroll4)?, used(VecopVariant::Chained)?);
    let msg = format!("Unroll4 {u} - Chained {c} = {}", u as i64 - c as i64);
    if u - c == cfg.fpu_depth {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Issue slots per eight-op iteration, steady state only.
fn chained_slots(same_cycle_refill: bool) -> Result<Vec<u64>, String> {
    let cfg = CoreConfig { same_cycle_refill, ..Default::default() };
    let bundle = build_vecop(&random_vecop(VecopVariant::Chained, 256, 4), &cfg).map_err(|e| e.to_string())?;
    let r = run_with(&bundle.program, &cfg, traced());
    if !r.halted() || bundle.check(&r.final_state.mem).is_err() {
        return Err("chained vecop did not complete correctly".into());
    }
    let starts: Vec<u64> = fp_issues(&r).chunks(8).map(|c| c[0].0).collect();
    let spans: Vec<u64> = starts.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(spans[1..].to_vec())
}

fn chained_throughput() -> Verdict {
    let fast = chained_slots(true)?;
    let slow = chained_slots(false)?;
    let range = |v: &[u64]| (v.iter().min().copied().unwrap_or(0), v.iter().max().copied().unwrap_or(0));
    let msg = format!("slots/iteration refill {:?}, no refill {:?}", range(&fast), range(&slow));
    let within = |v: &[u64]| v.iter().all(|s| (8..=9).contains(s));
    if within(&fast) && within(&slow) && fast.iter().all(|s| *s == 8) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

struct MatrixRun {
    case: BenchCase,
    result: SimResult,
}

fn run_matrix(cfg: &CoreConfig) -> Result<Vec<MatrixRun>, String> {
    let cases = bench_matrix(cfg, 42).map_err(|e| e.to_string())?;
    let runs = std::thread::scope(|s| {
        let handles: Vec<_> = cases
            .into_iter()
            .map(|case| s.spawn(move || MatrixRun { result: run(&case.bundle.program, cfg), case }))
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread")).collect()
    });
    Ok(runs)
}

fn functional_correctness(runs: &[MatrixRun], cfg: &CoreConfig, secs: f64) -> Verdict {
    let mut problems = Vec::new();
    let mut outputs: BTreeMap<&str, Vec<(String, Vec<u64>)>> = BTreeMap::new();
    for m in runs {
        let name = format!("{}/{}", m.case.kernel, m.case.label);
        if !m.result.halted() {
            problems.push(format!("{name}: {:?}", m.result.outcome));
            continue;
        }
        let oracle = functional_reference(&m.case.bundle.program, cfg);
        if oracle.as_ref() != Ok(&m.result.final_state.mem) {
            problems.push(format!("{name}: memory differs from the functional reference"));
        }
        if let Err(a) = m.case.bundle.check(&m.result.final_state.mem) {
            problems.push(format!("{name}: output mismatch at {a:#x}"));
        }
        let bits = m.case.bundle.outputs(&m.result.final_state.mem).iter().map(|v| v.to_bits()).collect();
        outputs.entry(&m.case.kernel).or_default().push((m.case.label.clone(), bits));
    }
    for (kernel, outs) in &outputs {
        if outs.windows(2).any(|w| w[0].1 != w[1].1) {
            problems.push(format!("{kernel}: variants disagree"));
        }
    }
    let msg = format!("{} runs, {:.1}s", runs.len(), secs);
    if problems.is_empty() && secs < 60.0 {
        Ok(msg)
    } else {
        Err(format!("{msg}; {problems:?}"))
    }
}

fn from_batch(rep: common::batches::BatchReport) -> Verdict {
    if rep.violations.is_empty() {
        Ok(rep.summary())
    } else {
        Err(rep.summary())
    }
}

fn fifo_suite() -> Verdict {
    let bal = balanced_batch(0, FIFO_PROGRAMS);
    let imb = imbalance_batch(1_000_000, IMBALANCE_PROGRAMS);
    let msg = format!("balanced: {}; imbalanced: {}", bal.summary(), imb.summary());
    let enough_halt = bal.halted * 10 >= bal.programs * 7;
    if bal.violations.is_empty() && imb.violations.is_empty() && enough_halt {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn find<'a>(runs: &'a [MatrixRun], kernel: &str, label: &str) -> Option<&'a Counters> {
    runs.iter().find(|m| m.case.kernel == kernel && m.case.label == label).map(|m| &m.result.counters)
}

fn stencil_utilization(runs: &[MatrixRun]) -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in StencilKind::ALL {
        for v in [StencilVariant::Chaining, StencilVariant::ChainingPlus] {
            let c = find(runs, kind.name(), v.label()).ok_or("missing run")?;
            let u = fpu_utilization(c).map_err(|e| e.to_string())?;
            ok &= u >= 0.90;
            parts.push(format!("{}/{} {u:.4}{}", kind.name(), v.label(), if u >= 0.93 { "" } else { " (below 0.93 goal)" }));
        }
    }
    if ok {
        Ok(parts.join(", "))
    } else {
        Err(parts.join(", "))
    }
}

fn speedup_direction(runs: &[MatrixRun]) -> Verdict {
    let mut ok = true;
    let mut vs_base_minus = Vec::new();
    let mut vs_base = Vec::new();
    for kind in StencilKind::ALL {
        let cycles = |v: StencilVariant| find(runs, kind.name(), v.label()).map(|c| c.cycles_roi).ok_or("missing run");
        let (plus, minus, base) =
            (cycles(StencilVariant::ChainingPlus)?, cycles(StencilVariant::BaseM)?, cycles(StencilVariant::Base)?);
        ok &= plus <= minus && plus <= base;
        vs_base_minus.push(minus as f64 / plus as f64);
        vs_base.push(base as f64 / plus as f64);
    }
    let g = geomean(&vs_base_minus);
    let msg = format!("geomean speedup Chaining+ over Base- {g:.3}, over Base {:.3}", geomean(&vs_base));
    if ok && g >= 1.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn l1_traffic(runs: &[MatrixRun]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in StencilKind::ALL {
        for v in StencilVariant::ALL {
            let m = runs
                .iter()
                .find(|m| m.case.kernel == kind.name() && m.case.label == v.label())
                .ok_or("missing run")?;
            let seg = m.result.segments[m.case.bundle.coeff_segment.ok_or("no coefficient segment")?];
            let points = m.case.bundle.expected_memory.iter().map(|(_, v)| v.len() as u64).sum::<u64>();
            let per_point = seg.reads_roi as f64 / points as f64;
            ok &= match v {
                StencilVariant::Chaining | StencilVariant::ChainingPlus => seg.reads_roi == 0 && seg.reads_total == 27,
                _ => seg.reads_roi == 27 * points,
            };
            parts.push(format!("{}/{} {per_point}", kind.name(), v.label()));
        }
        let base = find(runs, kind.name(), StencilVariant::Base.label()).ok_or("missing run")?;
        let chained = find(runs, kind.name(), StencilVariant::Chaining.label()).ok_or("missing run")?;
        for l1 in [1e-3, 1e-1, 1.0, 15.0, 1e3] {
            let p = EnergyParams { e_l1_access: l1, ..EnergyParams::default() };
            ok &= energy_efficiency(chained, &p) > energy_efficiency(base, &p);
        }
        let p = EnergyParams::default();
        parts.push(format!(
            "{} efficiency Chaining/Base {:.3}",
            kind.name(),
            energy_efficiency(chained, &p) / energy_efficiency(base, &p)
        ));
    }
    if ok {
        Ok(parts.join(", "))
    } else {
        Err(parts.join(", "))
    }
}

fn main() -> ExitCode {
    let cfg = CoreConfig::default();
    let start = Instant::now();
    let matrix = run_matrix(&cfg);
    let matrix_secs = start.elapsed().as_secs_f64();
    let with_matrix = |f: &dyn Fn(&[MatrixRun]) -> Verdict| match &matrix {
        Ok(runs) => f(runs),
        Err(e) => Err(e.clone()),
    };

    let criteria: Vec<Criterion> = vec![
        ("RAW stall count", Box::new(raw_stall_count)),
        ("unroll-by-four sufficiency", Box::new(unroll_sufficiency)),
        ("register-pressure delta", Box::new(register_delta)),
        ("chained throughput", Box::new(chained_throughput)),
        (
            "functional correctness",
            Box::new(|| {
                let t = Instant::now();
                with_matrix(&|runs| functional_correctness(runs, &cfg, matrix_secs + t.elapsed().as_secs_f64()))
            }),
        ),
        ("baseline equivalence", Box::new(|| from_batch(baseline_equivalence_batch(9_000_000, 1_000)))),
        ("FIFO semantics", Box::new(fifo_suite)),
        ("stencil utilization", Box::new(|| with_matrix(&stencil_utilization))),
        ("speedup direction", Box::new(|| with_matrix(&speedup_direction))),
        ("L1 traffic elimination", Box::new(|| with_matrix(&l1_traffic))),
        ("oracle cross-check", Box::new(|| from_batch(crosscheck_batch(7_000_000, CROSSCHECK_PROGRAMS)))),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
