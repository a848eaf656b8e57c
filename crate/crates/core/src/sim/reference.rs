//! Untimed sequential interpreter. Chained registers are unbounded queues,
//! so its final memory image is what any correct timing model must produce.

use std::collections::VecDeque;

use super::{CoreConfig, MachineState};
use crate::error::Fault;
use crate::isa::{fp_reads, fp_writes, Csr, FReg, Instr, LoopCount, XReg};
use crate::program::{Direction, Program};

struct Interp<'p> {
    program: &'p Program,
    st: MachineState,
    queues: Vec<VecDeque<f64>>,
}

impl Interp<'_> {
    fn x(&self, r: XReg) -> u64 {
        self.st.xregs[r.index()]
    }

    fn set_x(&mut self, r: XReg, v: u64) {
        if r.index() != 0 {
            self.st.xregs[r.index()] = v;
        }
    }

    fn chained(&self, r: FReg) -> bool {
        self.st.stream_of(r).is_none() && self.st.chain_mask.is_chained(r)
    }

    fn read_f(&mut self, r: FReg) -> Result<f64, Fault> {
        if let Some(k) = self.st.stream_of(r) {
            if self.st.streamers[k].config.direction == Direction::Write {
                return Err(Fault::StreamDirection(r));
            }
            let a = self.st.streamers[k].advance()?;
            return self.st.read_f64(a);
        }
        if self.chained(r) {
            let v = self.queues[r.index()].pop_front().ok_or(Fault::FifoUnderflow(r))?;
            self.st.fregs[r.index()] = v;
            return Ok(v);
        }
        Ok(self.st.fregs[r.index()])
    }

    fn write_f(&mut self, r: FReg, v: f64) -> Result<(), Fault> {
        if let Some(k) = self.st.stream_of(r) {
            if self.st.streamers[k].config.direction == Direction::Read {
                return Err(Fault::StreamDirection(r));
            }
            let a = self.st.streamers[k].advance()?;
            return self.st.write_f64(a, v);
        }
        if self.chained(r) {
            self.queues[r.index()].push_back(v);
        } else {
            self.st.fregs[r.index()] = v;
        }
        Ok(())
    }

    fn csr(&mut self, csr: Csr, value: u64, apply: fn(u64, u64) -> u64) -> Result<u64, Fault> {
        match csr {
            Csr::SSR_ENABLE => {
                let old = self.st.ssr_enable;
                self.st.ssr_enable = apply(old, value);
                Ok(old)
            }
            Csr::CHAIN_MASK => {
                let old = u64::from(self.st.chain_mask.0);
                let new = apply(old, value) & 0xFFFF_FFFF;
                for i in 0..32usize {
                    let bit = 1u64 << i;
                    if old & bit != 0 && new & bit == 0 && !self.queues[i].is_empty() {
                        return Err(Fault::ChainDrainViolation(FReg::of(i as u8)));
                    }
                    if old & bit == 0 && new & bit != 0 {
                        self.queues[i].clear();
                    }
                }
                self.st.chain_mask.0 = new as u32;
                Ok(old)
            }
            other => Err(Fault::UnknownCsr(other.0)),
        }
    }

    fn advance(&mut self) {
        let pc = self.st.pc;
        if let Some(l) = self.st.hwloop.as_mut() {
            if pc == l.end {
                if l.remaining > 0 {
                    l.remaining -= 1;
                    self.st.pc = l.start;
                    return;
                }
                self.st.hwloop = None;
            }
        }
        self.st.pc = pc + 1;
    }

    fn exec(&mut self) -> Result<bool, Fault> {
        let pc = self.st.pc;
        let instr = *self.program.instrs.get(pc).ok_or(Fault::PcOutOfRange(pc))?;
        let reads = fp_reads(&instr);
        let popped: Vec<FReg> = reads.iter().copied().filter(|r| self.chained(*r)).collect();
        for (i, r) in popped.iter().enumerate() {
            if popped[..i].contains(r) {
                return Err(Fault::DoublePop(*r));
            }
        }
        match instr {
            Instr::FAddD { .. } | Instr::FSubD { .. } | Instr::FMulD { .. } | Instr::FMaddD { .. } | Instr::FMvD { .. } => {
                let v: Vec<f64> = reads.iter().map(|r| self.read_f(*r)).collect::<Result<_, _>>()?;
                let out = match instr {
                    Instr::FAddD { .. } => v[0] + v[1],
                    Instr::FSubD { .. } => v[0] - v[1],
                    Instr::FMulD { .. } => v[0] * v[1],
                    Instr::FMaddD { .. } => v[0].mul_add(v[1], v[2]),
                    _ => v[0],
                };
                self.write_f(fp_writes(&instr).expect("compute has a destination"), out)?;
            }
            Instr::Fld { rd, offset, base } => {
                let v = self.st.read_f64(self.x(base).wrapping_add(offset as u64))?;
                self.write_f(rd, v)?;
            }
            Instr::Fsd { rs, offset, base } => {
                let a = self.x(base).wrapping_add(offset as u64);
                let v = self.read_f(rs)?;
                self.st.write_f64(a, v)?;
            }
            Instr::Addi { rd, rs1, imm } => self.set_x(rd, self.x(rs1).wrapping_add(imm as u64)),
            Instr::Add { rd, rs1, rs2 } => self.set_x(rd, self.x(rs1).wrapping_add(self.x(rs2))),
            Instr::Sub { rd, rs1, rs2 } => self.set_x(rd, self.x(rs1).wrapping_sub(self.x(rs2))),
            Instr::Li { rd, imm } => self.set_x(rd, imm as u64),
            Instr::Bne { rs1, rs2, target } | Instr::Beq { rs1, rs2, target } | Instr::Blt { rs1, rs2, target } => {
                let (a, b) = (self.x(rs1), self.x(rs2));
                let taken = match instr {
                    Instr::Bne { .. } => a != b,
                    Instr::Beq { .. } => a == b,
                    _ => (a as i64) < (b as i64),
                };
                self.st.pc = if taken { target } else { pc + 1 };
                return Ok(false);
            }
            Instr::Jump { target } => {
                self.st.pc = target;
                return Ok(false);
            }
            Instr::CsrRw { rd, csr, rs1 } => {
                let old = self.csr(csr, self.x(rs1), |_, v| v)?;
                self.set_x(rd, old);
            }
            Instr::CsrRs { rd, csr, rs1 } => {
                let old = self.csr(csr, self.x(rs1), |o, v| o | v)?;
                self.set_x(rd, old);
            }
            Instr::CsrRc { rd, csr, rs1 } => {
                let old = self.csr(csr, self.x(rs1), |o, v| o & !v)?;
                self.set_x(rd, old);
            }
            Instr::HwLoop { n_iter, n_instr } => {
                let n = match n_iter {
                    LoopCount::Imm(n) => n,
                    LoopCount::Reg(r) => self.x(r),
                };
                if n == 0 {
                    self.st.pc = pc + n_instr as usize + 1;
                } else {
                    self.st.hwloop = Some(super::HwLoopState {
                        start: pc + 1,
                        end: pc + n_instr as usize,
                        remaining: n - 1,
                        replay: false,
                    });
                    self.st.pc = pc + 1;
                }
                return Ok(false);
            }
            Instr::RoiBegin | Instr::RoiEnd => {}
            Instr::Halt => return Ok(true),
        }
        self.advance();
        Ok(false)
    }
}

/// Final memory image of `program` executed sequentially. Gives up with
/// `Fault::StepLimit` after `config.max_cycles` instructions.
pub fn functional_reference(program: &Program, config: &CoreConfig) -> Result<Vec<u8>, Fault> {
    let mut it = Interp { program, st: MachineState::new(program, config), queues: vec![VecDeque::new(); 32] };
    for _ in 0..config.max_cycles {
        if it.exec()? {
            return Ok(it.st.mem);
        }
    }
    Err(Fault::StepLimit)
}
