//! Seeded batches shared by the property tests and the acceptance report.
//! Each batch collects violations instead of panicking.

use std::collections::BTreeMap;

use chainsim::kernels::{bench_matrix, StencilVariant, VecopVariant};
use chainsim::sim::{FifoEventKind, SimOptions};
use chainsim::{functional_reference, run_with, CoreConfig, Fault, FReg, Outcome, SimResult, StallReason};

use super::{naive_interpret, random_program, rng, GenOpts, Imbalance};

pub const FIFO_PROGRAMS: u64 = 10_000;
pub const IMBALANCE_PROGRAMS: u64 = 2_000;
pub const CROSSCHECK_PROGRAMS: u64 = 1_000;

pub fn config() -> CoreConfig {
    CoreConfig { stall_deadlock_threshold: 64, max_cycles: 100_000, ..Default::default() }
}

fn traced() -> SimOptions {
    SimOptions { trace: true, chaining: true }
}

/// Pops per register must replay pushes in order, without gaps.
fn check_order(r: &SimResult) -> Result<(), String> {
    let mut pushes: BTreeMap<FReg, Vec<u64>> = BTreeMap::new();
    let mut pops: BTreeMap<FReg, Vec<u64>> = BTreeMap::new();
    for e in &r.fifo_events {
        let m = if e.kind == FifoEventKind::Push { &mut pushes } else { &mut pops };
        m.entry(e.reg).or_default().push(e.token);
    }
    for (reg, popped) in &pops {
        let pushed = pushes.get(reg).map(Vec::as_slice).unwrap_or(&[]);
        if popped.len() > pushed.len() || popped[..] != pushed[..popped.len()] {
            return Err(format!("{reg}: pops {popped:?} are not a prefix of pushes {pushed:?}"));
        }
    }
    if r.halted() {
        for (reg, pushed) in &pushes {
            let n = pops.get(reg).map_or(0, Vec::len);
            if n != pushed.len() {
                return Err(format!("{reg}: {} values pushed, {n} popped", pushed.len()));
            }
        }
    }
    Ok(())
}

fn check_occupancy(r: &SimResult, cap: usize) -> Result<(), String> {
    for row in &r.trace {
        for (reg, n) in &row.fifo_occ {
            if *n > cap {
                return Err(format!("cycle {}: {reg} holds {n} > {cap}", row.cycle));
            }
        }
    }
    Ok(())
}

/// Halted runs match the oracle exactly. Deadlocked runs have only written
/// locations the oracle also writes, with the same values.
fn check_memory(r: &SimResult, oracle: &[u8], initial: &[u8]) -> Result<(), String> {
    let mem = &r.final_state.mem;
    if r.halted() {
        return if mem == oracle { Ok(()) } else { Err("final memory differs from the oracle".into()) };
    }
    for a in (0..mem.len()).step_by(8) {
        let got = &mem[a..a + 8];
        if got != &initial[a..a + 8] && got != &oracle[a..a + 8] {
            return Err(format!("partial write at {a:#x} disagrees with the oracle"));
        }
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct BatchReport {
    pub programs: u64,
    pub halted: u64,
    pub violations: Vec<String>,
}

pub fn balanced_batch(seed: u64, count: u64) -> BatchReport {
    let cfg = config();
    let mut rep = BatchReport::default();
    for i in 0..count {
        let mut g = rng(seed + i);
        let p = random_program(&mut g, GenOpts::default());
        let r = run_with(&p, &cfg, traced());
        rep.programs += 1;
        let oracle = match functional_reference(&p, &cfg) {
            Ok(m) => m,
            Err(f) => {
                rep.violations.push(format!("seed {}: oracle fault {f}", seed + i));
                continue;
            }
        };
        let initial = chainsim::MachineState::new(&p, &cfg).mem;
        let checks = [
            match &r.outcome {
                Outcome::Halted => {
                    rep.halted += 1;
                    Ok(())
                }
                Outcome::Deadlock(_) => Ok(()),
                other => Err(format!("unexpected outcome {other:?}")),
            },
            check_order(&r),
            check_occupancy(&r, cfg.fifo_capacity()),
            check_memory(&r, &oracle, &initial),
        ];
        for c in checks {
            if let Err(e) = c {
                rep.violations.push(format!("seed {}: {e}", seed + i));
            }
        }
    }
    rep
}

pub fn imbalance_batch(seed: u64, count: u64) -> BatchReport {
    let cfg = config();
    let mut rep = BatchReport::default();
    for i in 0..count {
        let mut g = rng(seed + i);
        let kind = if i % 2 == 0 { Imbalance::ExtraPop } else { Imbalance::Overflow };
        let opts = GenOpts { imbalance: Some(kind), ..Default::default() };
        let p = random_program(&mut g, opts);
        let r = run_with(&p, &cfg, traced());
        rep.programs += 1;
        let expected = StallReason::FifoEmpty;
        // The balanced twin shares every instruction before the imbalance.
        // If it halts, the deadlock must be caused by the imbalance itself.
        let twin = random_program(&mut rng(seed + i), GenOpts::default());
        let twin_halts = run_with(&twin, &cfg, SimOptions::default()).halted();
        // A chained register blocks the core: its FIFO is full, or its value
        // is stuck in the last FPU stage behind an occupied head.
        let st = &r.final_state;
        let blocked = st.chain_mask.regs().any(|reg| {
            let stuck = matches!(st.fpu.last(), Some(Some(x)) if x.dest.chained_to(reg)) && st.valid[reg.index()];
            stuck || st.fifo_occupancy(reg) == cfg.fifo_capacity()
        });
        let ok = match (&r.outcome, kind) {
            (Outcome::Deadlock(Some(_)), _) if !twin_halts => true,
            (Outcome::Deadlock(Some(reason)), Imbalance::ExtraPop) => *reason == expected,
            // The stall may surface on an operand of a younger instruction
            // behind the frozen pipeline; the full FIFO is the cause.
            (Outcome::Deadlock(Some(reason)), Imbalance::Overflow) => {
                *reason == StallReason::Backpressure || blocked
            }
            _ => false,
        };
        if !ok {
            rep.violations.push(format!("seed {}: {kind:?} ended with {:?}", seed + i, r.outcome));
        }
        if kind == Imbalance::ExtraPop && !matches!(functional_reference(&p, &cfg), Err(Fault::FifoUnderflow(_))) {
            rep.violations.push(format!("seed {}: oracle did not underflow", seed + i));
        }
        if let Err(e) = check_order(&r).and(check_occupancy(&r, cfg.fifo_capacity())) {
            rep.violations.push(format!("seed {}: {e}", seed + i));
        }
    }
    rep
}

impl BatchReport {
    pub fn summary(&self) -> String {
        let shown: Vec<&str> = self.violations.iter().take(5).map(String::as_str).collect();
        format!("{} programs, {} halted, {} violations {:?}", self.programs, self.halted, self.violations.len(), shown)
    }
}

/// The library's functional reference against the independent interpreter.
pub fn crosscheck_batch(seed: u64, count: u64) -> BatchReport {
    let cfg = config();
    let mut rep = BatchReport::default();
    for i in 0..count {
        let p = random_program(&mut rng(seed + i), GenOpts::default());
        rep.programs += 1;
        match (functional_reference(&p, &cfg), naive_interpret(&p, cfg.max_cycles as usize)) {
            (Ok(a), Ok(b)) if a == b => rep.halted += 1,
            (a, b) => rep.violations.push(format!(
                "seed {}: reference {:?} vs naive {:?}",
                seed + i,
                a.map(|m| m.len()),
                b.map(|m| m.len())
            )),
        }
    }
    rep
}

/// Programs that never chain give identical results with chaining hardware
/// present or absent: random unchained programs plus every unchained
/// benchmark variant.
pub fn baseline_equivalence_batch(seed: u64, count: u64) -> BatchReport {
    let cfg = config();
    let on = SimOptions { trace: true, chaining: true };
    let off = SimOptions { trace: true, chaining: false };
    let mut rep = BatchReport::default();
    let mut compare = |name: String, p: &chainsim::Program, cfg: &CoreConfig| {
        let a = run_with(p, cfg, on);
        let b = run_with(p, cfg, off);
        rep.programs += 1;
        if a.halted() {
            rep.halted += 1;
        }
        if a != b {
            rep.violations.push(format!("{name}: results differ ({:?} vs {:?})", a.outcome, b.outcome));
        }
    };
    for i in 0..count {
        let p = random_program(&mut rng(seed + i), GenOpts { chain: false, ..Default::default() });
        compare(format!("seed {}", seed + i), &p, &cfg);
    }
    let bench_cfg = CoreConfig::default();
    let unchained = |label: &str| {
        [VecopVariant::Base.label(), VecopVariant::Unroll4.label()].contains(&label)
            || [StencilVariant::BaseMM, StencilVariant::BaseM, StencilVariant::Base]
                .iter()
                .any(|v| v.label() == label)
    };
    match bench_matrix(&bench_cfg, seed) {
        Ok(cases) => {
            for case in cases.iter().filter(|c| unchained(&c.label)) {
                compare(format!("{}/{}", case.kernel, case.label), &case.bundle.program, &bench_cfg);
            }
        }
        Err(e) => rep.violations.push(format!("benchmark matrix failed to build: {e}")),
    }
    rep
}
