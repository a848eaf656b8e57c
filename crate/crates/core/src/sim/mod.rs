//! Cycle-accurate model of the scalar in-order core.
//!
//! The integer front end dispatches in program order. FP instructions are
//! offloaded into a small queue and issued, one per cycle, to either the
//! fully pipelined FPU or the load/store path. Registers whose bit is set in
//! the chain mask behave as FIFOs: the architectural register is the head and
//! the FPU pipeline stages are the tail.
//!
//! Timing contract: an FP op issued at cycle `t` reads its operands at `t`,
//! occupies stages during `t+1..=t+L` and writes back at the end of `t+L`, so
//! the earliest dependent issue is `t+L+1`.

mod core;
mod hazard;
mod reference;
mod stream;
mod trace;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Fault};
use crate::isa::{ChainMask, FReg, Instr};
use crate::program::Program;

pub use self::core::{csr_write, run, run_with, step, CsrOp, SimOptions, Simulator};
pub use hazard::{can_issue, IssueVerdict};
pub use reference::functional_reference;
pub use stream::StreamCursor;
pub use trace::{format_trace, TRACE_HEADER};

/// Entries in the FP offload queue between front end and FP issue.
pub const FP_QUEUE_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreConfig {
    pub fpu_depth: usize,
    pub pseudo_dual_issue: bool,
    pub same_cycle_refill: bool,
    /// Load-use latency in cycles.
    pub mem_latency: usize,
    pub ssr_count: usize,
    pub max_cycles: u64,
    pub stall_deadlock_threshold: u64,
}

impl Default for CoreConfig {
    fn default() -> Self {
        CoreConfig {
            fpu_depth: 3,
            pseudo_dual_issue: true,
            same_cycle_refill: true,
            mem_latency: 2,
            ssr_count: 3,
            max_cycles: 50_000_000,
            stall_deadlock_threshold: 1000,
        }
    }
}

impl CoreConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: CoreConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.fpu_depth == 0 || self.fpu_depth > 64 {
            return bad("fpu_depth must be in 1..=64");
        }
        if self.mem_latency == 0 {
            return bad("mem_latency must be at least 1");
        }
        if self.ssr_count > 32 {
            return bad("ssr_count must be at most 32");
        }
        if self.max_cycles == 0 || self.stall_deadlock_threshold == 0 {
            return bad("max_cycles and stall_deadlock_threshold must be positive");
        }
        Ok(())
    }

    /// Capacity of a chained register's logical FIFO.
    pub fn fifo_capacity(&self) -> usize {
        self.fpu_depth + 1
    }
}

/// Where a result goes when it leaves the FPU or the load path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dest {
    Reg { reg: FReg, chained: bool },
    /// Write stream; the element address is reserved at issue.
    Stream { reg: FReg, addr: u64 },
}

impl Dest {
    pub fn reg(self) -> FReg {
        match self {
            Dest::Reg { reg, .. } | Dest::Stream { reg, .. } => reg,
        }
    }

    pub fn chained_to(self, r: FReg) -> bool {
        matches!(self, Dest::Reg { reg, chained: true } if reg == r)
    }

    pub fn conventional_to(self, r: FReg) -> bool {
        matches!(self, Dest::Reg { reg, chained: false } if reg == r)
    }
}

/// A result in flight. `token` tags each value pushed so FIFO order can be
/// audited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InFlight {
    pub value: f64,
    pub dest: Dest,
    pub token: u64,
}

/// One FPU pipeline register; index 0 is the first stage.
pub type FpuStage = Option<InFlight>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingLoad {
    pub result: InFlight,
    /// Cycle at whose end the value is written back.
    pub done_cycle: u64,
}

/// FP instruction waiting in the offload queue, with its address resolved by
/// the front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpOp {
    pub instr: Instr,
    pub addr: Option<u64>,
    pub pc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HwLoopState {
    pub start: usize,
    /// Index of the last body instruction.
    pub end: usize,
    /// Traversals left after the current one.
    pub remaining: u64,
    /// Body is replayed from the loop buffer.
    pub replay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineState {
    pub pc: usize,
    pub xregs: [u64; 32],
    pub fregs: [f64; 32],
    /// Unconsumed FIFO head, meaningful for chain-enabled registers.
    pub valid: [bool; 32],
    pub head_token: [u64; 32],
    pub chain_mask: ChainMask,
    pub ssr_enable: u64,
    pub fpu: Vec<FpuStage>,
    /// Head staging register, used only without same-cycle refill.
    pub latch: Option<InFlight>,
    pub loads: Vec<PendingLoad>,
    pub fp_queue: VecDeque<FpOp>,
    pub streamers: Vec<StreamCursor>,
    /// Streamers with `index >= ssr_count` do not exist on this core.
    pub ssr_count: usize,
    pub mem: Vec<u8>,
    pub hwloop: Option<HwLoopState>,
    pub roi_active: bool,
    pub cycle: u64,
    pub halted: bool,
    pub next_token: u64,
}

impl MachineState {
    pub fn new(program: &Program, config: &CoreConfig) -> Self {
        let mut mem = vec![0u8; program.mem_size()];
        for seg in &program.data {
            for (i, w) in seg.words.iter().enumerate() {
                let a = seg.addr as usize + 8 * i;
                mem[a..a + 8].copy_from_slice(&w.to_le_bytes());
            }
        }
        let has_roi = program.instrs.iter().any(|i| matches!(i, Instr::RoiBegin));
        MachineState {
            pc: program.entry,
            xregs: [0; 32],
            fregs: [0.0; 32],
            valid: [false; 32],
            head_token: [0; 32],
            chain_mask: ChainMask::default(),
            ssr_enable: 0,
            fpu: vec![None; config.fpu_depth],
            latch: None,
            loads: Vec::new(),
            fp_queue: VecDeque::new(),
            streamers: program.streamers.iter().cloned().map(StreamCursor::new).collect(),
            ssr_count: config.ssr_count,
            mem,
            hwloop: None,
            roi_active: !has_roi,
            cycle: 0,
            halted: false,
            next_token: 1,
        }
    }

    pub fn ssr_enabled(&self) -> bool {
        self.ssr_enable & 1 == 1
    }

    /// Streamer mapped to `reg`, if streams are enabled.
    pub fn stream_of(&self, reg: FReg) -> Option<usize> {
        if !self.ssr_enabled() {
            return None;
        }
        self.streamers
            .iter()
            .position(|s| s.config.reg == reg && s.config.index < self.ssr_count)
    }

    /// Values logically queued in `reg`'s FIFO: head plus everything in flight.
    pub fn fifo_occupancy(&self, reg: FReg) -> usize {
        let flight = |x: &InFlight| x.dest.chained_to(reg);
        usize::from(self.valid[reg.index()] && self.chain_mask.is_chained(reg))
            + self.fpu.iter().flatten().filter(|x| flight(x)).count()
            + self.latch.iter().filter(|x| flight(x)).count()
            + self.loads.iter().filter(|l| flight(&l.result)).count()
    }

    /// Conventional write to `reg` still in flight.
    pub fn pending_conventional(&self, reg: FReg) -> bool {
        self.fpu.iter().flatten().any(|x| x.dest.conventional_to(reg))
            || self.loads.iter().any(|l| l.result.dest.conventional_to(reg))
    }

    /// Write-stream result in flight that targets `addr`.
    pub fn pending_stream_write(&self, addr: u64) -> bool {
        let hits = |x: &InFlight| matches!(x.dest, Dest::Stream { addr: a, .. } if a == addr);
        self.fpu.iter().flatten().any(hits) || self.loads.iter().any(|l| hits(&l.result))
    }

    /// Nothing left in the FP subsystem.
    pub fn fp_quiescent(&self) -> bool {
        self.fp_queue.is_empty()
            && self.fpu.iter().all(Option::is_none)
            && self.latch.is_none()
            && self.loads.is_empty()
    }

    pub fn read_f64(&self, addr: u64) -> Result<f64, Fault> {
        let a = self.check_addr(addr)?;
        let bytes: [u8; 8] = self.mem[a..a + 8].try_into().expect("8 bytes");
        Ok(f64::from_le_bytes(bytes))
    }

    pub fn write_f64(&mut self, addr: u64, value: f64) -> Result<(), Fault> {
        let a = self.check_addr(addr)?;
        self.mem[a..a + 8].copy_from_slice(&value.to_le_bytes());
        Ok(())
    }

    fn check_addr(&self, addr: u64) -> Result<usize, Fault> {
        if !addr.is_multiple_of(8) {
            return Err(Fault::Misaligned(addr));
        }
        match addr.checked_add(8) {
            Some(end) if end <= self.mem.len() as u64 => Ok(addr as usize),
            _ => Err(Fault::OutOfRange(addr)),
        }
    }

    /// Doubles at `addr..addr + 8*count`.
    pub fn read_doubles(&self, addr: u64, count: usize) -> Result<Vec<f64>, Fault> {
        (0..count).map(|i| self.read_f64(addr + 8 * i as u64)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StallReason {
    RawHazard,
    FifoEmpty,
    Backpressure,
    MemBusy,
    LoopSetup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FpSlot {
    Issued(Instr),
    Stall(StallReason),
    /// Nothing queued.
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub cycle: u64,
    pub fp_slot: FpSlot,
    pub int_slot: Option<Instr>,
    /// Occupancy of each chain-enabled register at the end of the cycle.
    pub fifo_occ: Vec<(FReg, usize)>,
}

impl TraceRow {
    pub fn stall_reason(&self) -> Option<StallReason> {
        match self.fp_slot {
            FpSlot::Stall(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FifoEventKind {
    Push,
    Pop,
}

/// Push happens at issue of the producer, pop at issue of the consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FifoEvent {
    pub cycle: u64,
    pub reg: FReg,
    pub kind: FifoEventKind,
    pub token: u64,
}

/// Per data segment L1 traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentTraffic {
    pub reads_total: u64,
    pub reads_roi: u64,
    pub writes_total: u64,
    pub writes_roi: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Halted,
    Watchdog,
    /// No forward progress for `stall_deadlock_threshold` cycles; carries the
    /// last FP stall reason seen.
    Deadlock(Option<StallReason>),
    Fault(Fault),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub final_state: MachineState,
    pub counters: crate::report::Counters,
    pub trace: Vec<TraceRow>,
    pub fifo_events: Vec<FifoEvent>,
    pub segments: Vec<SegmentTraffic>,
    pub outcome: Outcome,
}

impl SimResult {
    pub fn halted(&self) -> bool {
        self.outcome == Outcome::Halted
    }
}
