//! Issue rules for the FP subsystem.

use serde::{Deserialize, Serialize};

use super::{CoreConfig, Dest, FpOp, MachineState, StallReason};
use crate::isa::{fp_reads, fp_writes, FReg, Instr, InstrClass};
use crate::program::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IssueVerdict {
    Ok,
    Stall(StallReason),
}

/// Decides whether `op` can issue this cycle given the state at the start
/// of the cycle. Pure.
///
/// Rules, in order: source operands (RAW on conventional registers, empty
/// FIFO on chained ones), destination (WAW on conventional registers, FIFO
/// capacity on chained ones), then a frozen FPU input stage.
pub fn can_issue(op: &FpOp, state: &MachineState, config: &CoreConfig) -> IssueVerdict {
    verdict(op, state, config, true)
}

pub(crate) fn is_chained(state: &MachineState, reg: FReg, chaining: bool) -> bool {
    chaining && state.chain_mask.is_chained(reg)
}

/// Chained, non-stream sources of `instr`, in operand order.
pub(crate) fn pops(instr: &Instr, state: &MachineState, chaining: bool) -> Vec<FReg> {
    fp_reads(instr)
        .into_iter()
        .filter(|r| state.stream_of(*r).is_none() && is_chained(state, *r, chaining))
        .collect()
}

/// Whether the last FPU stage would be unable to drain this cycle if an
/// instruction popping `pops` issued.
pub(crate) fn will_freeze(state: &MachineState, config: &CoreConfig, pops: &[FReg]) -> bool {
    // A completed load waiting for the same head takes it first.
    let load_waiting = |r: FReg| state.loads.iter().any(|l| l.result.dest.chained_to(r) && l.done_cycle <= state.cycle);
    let head_free = |r: FReg| (!state.valid[r.index()] || pops.contains(&r)) && !load_waiting(r);
    match state.fpu.last().copied().flatten() {
        Some(x) => match x.dest {
            Dest::Reg { reg, chained: true } => {
                if config.same_cycle_refill {
                    !head_free(reg)
                } else {
                    matches!(state.latch, Some(l) if !head_free(l.dest.reg()))
                }
            }
            _ => false,
        },
        None => false,
    }
}

pub(crate) fn verdict(op: &FpOp, state: &MachineState, config: &CoreConfig, chaining: bool) -> IssueVerdict {
    use IssueVerdict::Stall;
    let instr = &op.instr;
    let chained = |r: FReg| is_chained(state, r, chaining);
    let popped = pops(instr, state, chaining);

    let mut stream_reads = vec![0u64; state.streamers.len()];
    for s in fp_reads(instr) {
        if let Some(k) = state.stream_of(s) {
            let cur = &state.streamers[k];
            if cur.config.direction == Direction::Read {
                if let Some(a) = cur.peek(stream_reads[k]) {
                    if state.pending_stream_write(a) {
                        return Stall(StallReason::MemBusy);
                    }
                }
                stream_reads[k] += 1;
            }
        } else if chained(s) {
            if !state.valid[s.index()] {
                return Stall(StallReason::FifoEmpty);
            }
        } else if state.pending_conventional(s) {
            return Stall(StallReason::RawHazard);
        }
    }

    let is_load = matches!(instr, Instr::Fld { .. });
    if let Some(d) = fp_writes(instr) {
        let in_fpu = |f: &dyn Fn(Dest) -> bool| {
            state.fpu.iter().flatten().chain(state.latch.iter()).any(|x| f(x.dest))
        };
        let in_loads = |f: &dyn Fn(Dest) -> bool| state.loads.iter().any(|l| f(l.result.dest));
        if state.stream_of(d).is_some() {
            let same = |x: Dest| matches!(x, Dest::Stream { reg, .. } if reg == d);
            if (is_load && in_fpu(&same)) || (!is_load && in_loads(&same)) {
                return Stall(StallReason::MemBusy);
            }
        } else if chained(d) {
            // Values reach a chained head in issue order: a load may not
            // overtake an FPU result, and an FPU result may follow a load
            // only if the load completes no later than the FPU result.
            let same = |x: Dest| x.chained_to(d);
            let horizon = state.cycle + config.fpu_depth as u64;
            let late_load = state.loads.iter().any(|l| same(l.result.dest) && l.done_cycle > horizon);
            if (is_load && in_fpu(&same)) || (!is_load && late_load) {
                return Stall(StallReason::MemBusy);
            }
            let released = popped.iter().filter(|r| **r == d).count();
            if state.fifo_occupancy(d) + 1 > config.fifo_capacity() + released {
                return Stall(StallReason::Backpressure);
            }
        } else if state.pending_conventional(d) {
            return Stall(StallReason::RawHazard);
        }
    }

    if let Some(a) = op.addr {
        if state.pending_stream_write(a) {
            return Stall(StallReason::MemBusy);
        }
    }

    if instr.class() == InstrClass::FpCompute && will_freeze(state, config, &popped) {
        return Stall(StallReason::Backpressure);
    }
    IssueVerdict::Ok
}
