use super::hazard::{pops, verdict};
use super::{
    CoreConfig, Dest, FifoEvent, FifoEventKind, FpOp, FpSlot, HwLoopState, InFlight, IssueVerdict,
    MachineState, Outcome, PendingLoad, SegmentTraffic, SimResult, StallReason, TraceRow,
    FP_QUEUE_DEPTH,
};
use crate::error::Fault;
use crate::isa::{fp_reads, fp_writes, Csr, FReg, Instr, InstrClass, LoopCount, XReg};
use crate::program::{Direction, Program};
use crate::report::Counters;

/// Integer instructions a replayed loop body may retire in one cycle
/// without a dispatch slot.
const FREE_REPLAY_CAP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Record one `TraceRow` per cycle.
    pub trace: bool,
    /// Hardware support for chaining. Without it, a nonzero chain mask faults.
    pub chaining: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { trace: false, chaining: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsrOp {
    Rw,
    Rs,
    Rc,
}

/// Applies a CSR access and returns the previous value.
pub fn csr_write(state: &mut MachineState, csr: Csr, value: u64, op: CsrOp, chaining: bool) -> Result<u64, Fault> {
    let apply = |old: u64| match op {
        CsrOp::Rw => value,
        CsrOp::Rs => old | value,
        CsrOp::Rc => old & !value,
    };
    match csr {
        Csr::SSR_ENABLE => {
            let old = state.ssr_enable;
            state.ssr_enable = apply(old);
            Ok(old)
        }
        Csr::CHAIN_MASK => {
            let old = u64::from(state.chain_mask.0);
            let new = apply(old) & 0xFFFF_FFFF;
            if !chaining && new != 0 {
                return Err(Fault::ChainingUnsupported);
            }
            for i in 0..32u8 {
                let bit = 1u64 << i;
                let reg = FReg::of(i);
                if old & bit != 0 && new & bit == 0 && state.fifo_occupancy(reg) > 0 {
                    return Err(Fault::ChainDrainViolation(reg));
                }
                if old & bit == 0 && new & bit != 0 {
                    state.valid[reg.index()] = false;
                }
            }
            state.chain_mask.0 = new as u32;
            Ok(old)
        }
        other => Err(Fault::UnknownCsr(other.0)),
    }
}

/// What the front end did in one cycle.
#[derive(Default)]
struct Dispatch {
    int_slot: Option<Instr>,
    int_executed: u64,
    ends_roi: bool,
    progress: bool,
}

/// Operands and result of the FP instruction issued this cycle.
struct Issue {
    instr: Instr,
    popped: Vec<FReg>,
    result: Option<InFlight>,
}

pub struct Simulator<'p> {
    program: &'p Program,
    config: CoreConfig,
    opts: SimOptions,
    pub state: MachineState,
    pub counters: Counters,
    pub segments: Vec<SegmentTraffic>,
    pub trace: Vec<TraceRow>,
    pub fifo_events: Vec<FifoEvent>,
    idle: u64,
    last_stall: Option<StallReason>,
    counted: bool,
}

impl<'p> Simulator<'p> {
    /// Panics if `config` fails `CoreConfig::validate`.
    pub fn new(program: &'p Program, config: &CoreConfig, opts: SimOptions) -> Self {
        let state = MachineState::new(program, config);
        Self::from_state(program, config, opts, state)
    }

    pub fn from_state(program: &'p Program, config: &CoreConfig, opts: SimOptions, state: MachineState) -> Self {
        if let Err(e) = config.validate() {
            panic!("{e}");
        }
        Simulator {
            program,
            config: config.clone(),
            opts,
            state,
            counters: Counters::default(),
            segments: vec![SegmentTraffic::default(); program.data.len()],
            trace: Vec::new(),
            fifo_events: Vec::new(),
            idle: 0,
            last_stall: None,
            counted: false,
        }
    }

    /// Advances one clock cycle.
    pub fn step(&mut self) -> Result<TraceRow, Fault> {
        let cycle = self.state.cycle;
        let roi_at_start = self.state.roi_active;

        let dispatch = self.front_end()?;
        self.counted = roi_at_start && !dispatch.ends_roi;
        if self.counted {
            self.counters.cycles_roi += 1;
            self.counters.int_issued += dispatch.int_executed;
        }

        let (slot, issue) = self.fp_back_end()?;
        let moved = self.writeback(issue.as_ref())?;

        let slot = match (slot, dispatch.int_slot) {
            (FpSlot::Idle, Some(Instr::HwLoop { .. })) => FpSlot::Stall(StallReason::LoopSetup),
            (s, _) => s,
        };
        if let FpSlot::Stall(r) = slot {
            if r != StallReason::LoopSetup {
                self.last_stall = Some(r);
            }
            if self.counted {
                match r {
                    StallReason::RawHazard => self.counters.stall_raw += 1,
                    StallReason::FifoEmpty => self.counters.stall_fifo_empty += 1,
                    StallReason::Backpressure => self.counters.stall_backpressure += 1,
                    StallReason::MemBusy => self.counters.stall_mem += 1,
                    StallReason::LoopSetup => {}
                }
            }
        }

        if dispatch.progress || issue.is_some() || moved {
            self.idle = 0;
        } else {
            self.idle += 1;
        }
        self.state.cycle += 1;

        let row = TraceRow {
            cycle,
            fp_slot: slot,
            int_slot: dispatch.int_slot,
            fifo_occ: self.state.chain_mask.regs().map(|r| (r, self.state.fifo_occupancy(r))).collect(),
        };
        if self.opts.trace {
            self.trace.push(row.clone());
        }
        Ok(row)
    }

    /// Steps until halt, fault, deadlock or the cycle limit.
    pub fn run(&mut self) -> Outcome {
        loop {
            if self.state.halted {
                return Outcome::Halted;
            }
            if self.state.cycle >= self.config.max_cycles {
                return Outcome::Watchdog;
            }
            if let Err(f) = self.step() {
                return Outcome::Fault(f);
            }
            if self.idle >= self.config.stall_deadlock_threshold {
                return Outcome::Deadlock(self.last_stall);
            }
        }
    }

    pub fn finish(self, outcome: Outcome) -> SimResult {
        SimResult {
            final_state: self.state,
            counters: self.counters,
            trace: self.trace,
            fifo_events: self.fifo_events,
            segments: self.segments,
            outcome,
        }
    }

    fn xreg(&self, r: XReg) -> u64 {
        self.state.xregs[r.index()]
    }

    fn set_xreg(&mut self, r: XReg, v: u64) {
        if r.index() != 0 {
            self.state.xregs[r.index()] = v;
        }
    }

    fn l1_read(&mut self, addr: u64) -> Result<f64, Fault> {
        let v = self.state.read_f64(addr)?;
        if self.counted {
            self.counters.l1_reads += 1;
        }
        if let Some(k) = self.program.segment_of(addr) {
            self.segments[k].reads_total += 1;
            if self.counted {
                self.segments[k].reads_roi += 1;
            }
        }
        Ok(v)
    }

    fn l1_write(&mut self, addr: u64, value: f64) -> Result<(), Fault> {
        self.state.write_f64(addr, value)?;
        if self.counted {
            self.counters.l1_writes += 1;
        }
        if let Some(k) = self.program.segment_of(addr) {
            self.segments[k].writes_total += 1;
            if self.counted {
                self.segments[k].writes_roi += 1;
            }
        }
        Ok(())
    }

    /// Moves to the next instruction in program order, honouring an active
    /// hardware loop.
    fn advance_pc(&mut self) {
        let pc = self.state.pc;
        if let Some(l) = self.state.hwloop.as_mut() {
            if pc == l.end {
                if l.remaining > 0 {
                    l.remaining -= 1;
                    l.replay = true;
                    self.state.pc = l.start;
                    return;
                }
                self.state.hwloop = None;
            }
        }
        self.state.pc = pc + 1;
    }

    fn fetch(&self) -> Result<Instr, Fault> {
        self.program.instrs.get(self.state.pc).copied().ok_or(Fault::PcOutOfRange(self.state.pc))
    }

    fn in_replayed_body(&self) -> bool {
        matches!(self.state.hwloop, Some(l) if l.replay && (l.start..=l.end).contains(&self.state.pc))
    }

    fn front_end(&mut self) -> Result<Dispatch, Fault> {
        let mut d = Dispatch::default();
        if self.state.halted {
            return Ok(d);
        }
        let dual = self.config.pseudo_dual_issue;
        if !dual && !self.state.fp_queue.is_empty() {
            return Ok(d);
        }
        let width = if dual { 2 } else { 1 };
        let (mut fp_used, mut int_used, mut dispatched, mut free) = (false, false, 0, 0);
        while dispatched < width {
            let mut instr = self.fetch()?;
            while self.in_replayed_body() && instr.class() == InstrClass::Int && free < FREE_REPLAY_CAP {
                self.exec_int(&instr)?;
                d.int_executed += 1;
                d.progress = true;
                free += 1;
                self.advance_pc();
                instr = self.fetch()?;
            }
            if instr.class().is_fp() {
                if fp_used || self.state.fp_queue.len() >= FP_QUEUE_DEPTH {
                    break;
                }
                let addr = match instr {
                    Instr::Fld { offset, base, .. } | Instr::Fsd { offset, base, .. } => {
                        Some(self.xreg(base).wrapping_add(offset as u64))
                    }
                    _ => None,
                };
                self.state.fp_queue.push_back(FpOp { instr, addr, pc: self.state.pc });
                fp_used = true;
                self.advance_pc();
            } else {
                if int_used {
                    break;
                }
                let fence = match instr {
                    Instr::CsrRw { .. } | Instr::CsrRs { .. } | Instr::CsrRc { .. } => !self.state.fp_queue.is_empty(),
                    Instr::RoiBegin | Instr::RoiEnd | Instr::Halt => !self.state.fp_quiescent(),
                    _ => false,
                };
                if fence {
                    break;
                }
                self.exec_non_fp(&instr, &mut d)?;
                int_used = true;
                d.int_slot = Some(instr);
                d.int_executed += 1;
            }
            d.progress = true;
            dispatched += 1;
            if matches!(instr, Instr::RoiBegin | Instr::RoiEnd | Instr::Halt) {
                break;
            }
        }
        Ok(d)
    }

    fn exec_int(&mut self, instr: &Instr) -> Result<(), Fault> {
        match *instr {
            Instr::Addi { rd, rs1, imm } => self.set_xreg(rd, self.xreg(rs1).wrapping_add(imm as u64)),
            Instr::Add { rd, rs1, rs2 } => self.set_xreg(rd, self.xreg(rs1).wrapping_add(self.xreg(rs2))),
            Instr::Sub { rd, rs1, rs2 } => self.set_xreg(rd, self.xreg(rs1).wrapping_sub(self.xreg(rs2))),
            Instr::Li { rd, imm } => self.set_xreg(rd, imm as u64),
            Instr::CsrRw { rd, csr, rs1 } | Instr::CsrRs { rd, csr, rs1 } | Instr::CsrRc { rd, csr, rs1 } => {
                let op = match instr {
                    Instr::CsrRw { .. } => CsrOp::Rw,
                    Instr::CsrRs { .. } => CsrOp::Rs,
                    _ => CsrOp::Rc,
                };
                let value = self.xreg(rs1);
                let old = csr_write(&mut self.state, csr, value, op, self.opts.chaining)?;
                self.set_xreg(rd, old);
            }
            _ => unreachable!("not an integer instruction"),
        }
        Ok(())
    }

    fn exec_non_fp(&mut self, instr: &Instr, d: &mut Dispatch) -> Result<(), Fault> {
        let pc = self.state.pc;
        let branch = |taken: bool, target: usize| if taken { target } else { pc + 1 };
        match *instr {
            Instr::Bne { rs1, rs2, target } => self.state.pc = branch(self.xreg(rs1) != self.xreg(rs2), target),
            Instr::Beq { rs1, rs2, target } => self.state.pc = branch(self.xreg(rs1) == self.xreg(rs2), target),
            Instr::Blt { rs1, rs2, target } => {
                self.state.pc = branch((self.xreg(rs1) as i64) < (self.xreg(rs2) as i64), target)
            }
            Instr::Jump { target } => self.state.pc = target,
            Instr::HwLoop { n_iter, n_instr } => {
                let n = match n_iter {
                    LoopCount::Imm(n) => n,
                    LoopCount::Reg(r) => self.xreg(r),
                };
                if n == 0 {
                    self.state.pc = pc + n_instr as usize + 1;
                } else {
                    self.state.hwloop = Some(HwLoopState {
                        start: pc + 1,
                        end: pc + n_instr as usize,
                        remaining: n - 1,
                        replay: false,
                    });
                    self.state.pc = pc + 1;
                }
            }
            Instr::RoiBegin => {
                self.state.roi_active = true;
                self.advance_pc();
            }
            Instr::RoiEnd => {
                self.state.roi_active = false;
                d.ends_roi = true;
                self.advance_pc();
            }
            Instr::Halt => {
                self.state.halted = true;
                d.ends_roi = true;
            }
            _ => {
                self.exec_int(instr)?;
                self.advance_pc();
            }
        }
        Ok(())
    }

    /// Faults that depend only on the instruction and the register mapping.
    fn check_operands(&self, instr: &Instr) -> Result<(), Fault> {
        let st = &self.state;
        let popped = pops(instr, st, self.opts.chaining);
        for (i, r) in popped.iter().enumerate() {
            if popped[..i].contains(r) {
                return Err(Fault::DoublePop(*r));
            }
        }
        for r in fp_reads(instr) {
            if let Some(k) = st.stream_of(r) {
                if st.streamers[k].config.direction == Direction::Write {
                    return Err(Fault::StreamDirection(r));
                }
            }
        }
        if let Some(r) = fp_writes(instr) {
            if let Some(k) = st.stream_of(r) {
                if st.streamers[k].config.direction == Direction::Read {
                    return Err(Fault::StreamDirection(r));
                }
            }
        }
        Ok(())
    }

    fn fp_back_end(&mut self) -> Result<(FpSlot, Option<Issue>), Fault> {
        let Some(op) = self.state.fp_queue.front().copied() else {
            return Ok((FpSlot::Idle, None));
        };
        self.check_operands(&op.instr)?;
        if let IssueVerdict::Stall(r) = verdict(&op, &self.state, &self.config, self.opts.chaining) {
            return Ok((FpSlot::Stall(r), None));
        }
        self.state.fp_queue.pop_front();
        let instr = op.instr;
        let cycle = self.state.cycle;

        let mut popped = Vec::new();
        let mut vals = Vec::with_capacity(3);
        for s in fp_reads(&instr) {
            if let Some(k) = self.state.stream_of(s) {
                let addr = self.state.streamers[k].advance()?;
                vals.push(self.l1_read(addr)?);
                if self.counted {
                    self.counters.ssr_elem_reads += 1;
                }
            } else {
                let i = s.index();
                if self.state.chain_mask.is_chained(s) && self.opts.chaining {
                    if !self.state.valid[i] {
                        return Err(Fault::FifoUnderflow(s));
                    }
                    popped.push(s);
                    self.fifo_events.push(FifoEvent { cycle, reg: s, kind: FifoEventKind::Pop, token: self.state.head_token[i] });
                }
                vals.push(self.state.fregs[i]);
                if self.counted {
                    self.counters.rf_reads += 1;
                }
            }
        }

        let value = match instr {
            Instr::FAddD { .. } => vals[0] + vals[1],
            Instr::FSubD { .. } => vals[0] - vals[1],
            Instr::FMulD { .. } => vals[0] * vals[1],
            Instr::FMaddD { .. } => vals[0].mul_add(vals[1], vals[2]),
            Instr::FMvD { .. } => vals[0],
            Instr::Fld { .. } => self.l1_read(op.addr.expect("load address"))?,
            Instr::Fsd { .. } => {
                self.l1_write(op.addr.expect("store address"), vals[0])?;
                vals[0]
            }
            _ => unreachable!("non-FP instruction in FP queue"),
        };
        if self.counted {
            if instr.class() == InstrClass::FpCompute {
                self.counters.fp_issued += 1;
            } else {
                self.counters.fp_mem_issued += 1;
            }
        }

        let result = match fp_writes(&instr) {
            None => None,
            Some(d) => {
                let token = self.state.next_token;
                self.state.next_token += 1;
                let dest = if let Some(k) = self.state.stream_of(d) {
                    let addr = self.state.streamers[k].advance()?;
                    if self.counted {
                        self.counters.ssr_elem_writes += 1;
                    }
                    Dest::Stream { reg: d, addr }
                } else {
                    let chained = self.opts.chaining && self.state.chain_mask.is_chained(d);
                    if chained {
                        self.fifo_events.push(FifoEvent { cycle, reg: d, kind: FifoEventKind::Push, token });
                    }
                    Dest::Reg { reg: d, chained }
                };
                Some(InFlight { value, dest, token })
            }
        };
        Ok((FpSlot::Issued(instr), Some(Issue { instr, popped, result })))
    }

    /// Writes a result to its destination. Returns false if a chained head
    /// is still occupied and the value must wait.
    fn deliver(&mut self, x: InFlight) -> Result<bool, Fault> {
        match x.dest {
            Dest::Reg { reg, chained: false } => {
                self.state.fregs[reg.index()] = x.value;
            }
            Dest::Reg { reg, chained: true } => {
                let i = reg.index();
                if self.state.valid[i] {
                    return Ok(false);
                }
                self.state.fregs[i] = x.value;
                self.state.valid[i] = true;
                self.state.head_token[i] = x.token;
            }
            Dest::Stream { addr, .. } => {
                self.l1_write(addr, x.value)?;
                return Ok(true);
            }
        }
        if self.counted {
            self.counters.rf_writes += 1;
        }
        Ok(true)
    }

    /// End-of-cycle state update. Returns whether anything moved.
    fn writeback(&mut self, issue: Option<&Issue>) -> Result<bool, Fault> {
        let cycle = self.state.cycle;
        let mut moved = false;

        if let Some(is) = issue {
            for r in &is.popped {
                self.state.valid[r.index()] = false;
            }
            if let (Instr::Fld { .. }, Some(result)) = (is.instr, is.result) {
                let done_cycle = cycle + self.config.mem_latency as u64 - 1;
                self.state.loads.push(PendingLoad { result, done_cycle });
            }
        }

        let mut k = 0;
        while k < self.state.loads.len() {
            let l = self.state.loads[k];
            if l.done_cycle <= cycle && self.deliver(l.result)? {
                self.state.loads.remove(k);
                moved = true;
            } else {
                k += 1;
            }
        }

        if let Some(x) = self.state.latch {
            if self.deliver(x)? {
                self.state.latch = None;
                moved = true;
            }
        }

        let last = self.state.fpu.len() - 1;
        let drained = match self.state.fpu[last] {
            None => true,
            Some(x) => {
                let ok = if self.config.same_cycle_refill || !matches!(x.dest, Dest::Reg { chained: true, .. }) {
                    self.deliver(x)?
                } else if self.state.latch.is_none() {
                    self.state.latch = Some(x);
                    true
                } else {
                    false
                };
                if ok {
                    self.state.fpu[last] = None;
                }
                ok
            }
        };
        if drained {
            if self.state.fpu.iter().any(Option::is_some) {
                moved = true;
            }
            self.state.fpu.rotate_right(1);
        }

        if let Some(is) = issue {
            if is.instr.class() == InstrClass::FpCompute {
                debug_assert!(drained, "issued into a frozen pipeline");
                self.state.fpu[0] = is.result;
            }
        }
        Ok(moved)
    }
}

/// Runs `program` to completion without tracing.
pub fn run(program: &Program, config: &CoreConfig) -> SimResult {
    run_with(program, config, SimOptions::default())
}

pub fn run_with(program: &Program, config: &CoreConfig, opts: SimOptions) -> SimResult {
    let mut sim = Simulator::new(program, config, opts);
    let outcome = sim.run();
    sim.finish(outcome)
}

/// Advances `state` by one cycle. Counters are not kept.
pub fn step(state: &mut MachineState, program: &Program, config: &CoreConfig) -> Result<TraceRow, Fault> {
    let placeholder = MachineState::new(&Program::default(), config);
    let owned = std::mem::replace(state, placeholder);
    let mut sim = Simulator::from_state(program, config, SimOptions::default(), owned);
    let row = sim.step();
    *state = sim.state;
    row
}
