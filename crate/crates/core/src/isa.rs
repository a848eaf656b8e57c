//! Instruction subset, register model and CSR map.
//!
//! Everything here is a plain value type. The assembler produces these, the
//! simulator and the functional reference consume them.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::program::{Diagnostic, DiagnosticKind, Direction, Program};

/// Architectural floating-point register `f0..f31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FReg(u8);

impl FReg {
    pub const COUNT: usize = 32;

    pub fn new(index: u8) -> Option<Self> {
        (index < 32).then_some(FReg(index))
    }

    /// Panics if `index >= 32`. Meant for constants in generators and tests.
    pub const fn of(index: u8) -> Self {
        assert!(index < 32);
        FReg(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// ABI name (`ft0`, `fs0`, `fa0`, ...).
    pub fn abi_name(self) -> &'static str {
        FREG_ABI[self.0 as usize]
    }

    /// Accepts `fN` and ABI aliases.
    pub fn parse(name: &str) -> Option<Self> {
        if let Some(pos) = FREG_ABI.iter().position(|n| *n == name) {
            return Some(FReg(pos as u8));
        }
        let digits = name.strip_prefix('f')?;
        if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
            return None;
        }
        digits.parse::<u8>().ok().and_then(FReg::new)
    }
}

impl fmt::Display for FReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abi_name())
    }
}

const FREG_ABI: [&str; 32] = [
    "ft0", "ft1", "ft2", "ft3", "ft4", "ft5", "ft6", "ft7", "fs0", "fs1", "fa0", "fa1", "fa2",
    "fa3", "fa4", "fa5", "fa6", "fa7", "fs2", "fs3", "fs4", "fs5", "fs6", "fs7", "fs8", "fs9",
    "fs10", "fs11", "ft8", "ft9", "ft10", "ft11",
];

/// Integer register `x0..x31`; writes to `x0` are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct XReg(u8);

impl XReg {
    pub const ZERO: XReg = XReg(0);

    pub fn new(index: u8) -> Option<Self> {
        (index < 32).then_some(XReg(index))
    }

    pub const fn of(index: u8) -> Self {
        assert!(index < 32);
        XReg(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn abi_name(self) -> &'static str {
        XREG_ABI[self.0 as usize]
    }

    pub fn parse(name: &str) -> Option<Self> {
        if name == "fp" {
            return Some(XReg(8));
        }
        if let Some(pos) = XREG_ABI.iter().position(|n| *n == name) {
            return Some(XReg(pos as u8));
        }
        let digits = name.strip_prefix('x')?;
        if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
            return None;
        }
        digits.parse::<u8>().ok().and_then(XReg::new)
    }
}

impl fmt::Display for XReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abi_name())
    }
}

const XREG_ABI: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
    "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5", "t6",
];

/// 12-bit CSR address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Csr(pub u16);

impl Csr {
    /// Stream semantic register enable, bit 0 (simulator convention).
    pub const SSR_ENABLE: Csr = Csr(0x7C0);
    /// Chaining mask; bit i enables FIFO semantics on `f_i`.
    pub const CHAIN_MASK: Csr = Csr(0x7C3);

    pub fn is_known(self) -> bool {
        self == Csr::SSR_ENABLE || self == Csr::CHAIN_MASK
    }

    pub fn symbol(self) -> Option<&'static str> {
        match self {
            Csr::SSR_ENABLE => Some("ssr_enable"),
            Csr::CHAIN_MASK => Some("chain_mask"),
            _ => None,
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "ssr_enable" => Some(Csr::SSR_ENABLE),
            "chain_mask" => Some(Csr::CHAIN_MASK),
            _ => {
                let v = crate::asm::parse_int(text)?;
                (0..0x1000).contains(&v).then_some(Csr(v as u16))
            }
        }
    }
}

impl fmt::Display for Csr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.symbol() {
            Some(s) => f.write_str(s),
            None => write!(f, "{:#x}", self.0),
        }
    }
}

/// Per-register chaining enable bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChainMask(pub u32);

impl ChainMask {
    pub fn is_chained(self, reg: FReg) -> bool {
        self.0 >> reg.index() & 1 == 1
    }

    pub fn with(self, reg: FReg) -> Self {
        ChainMask(self.0 | 1 << reg.index())
    }

    pub fn regs(self) -> impl Iterator<Item = FReg> {
        (0..32u8).filter(move |i| self.0 >> i & 1 == 1).map(FReg)
    }
}

/// Iteration count of a hardware loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopCount {
    Reg(XReg),
    Imm(u64),
}

/// Branch and jump targets are instruction indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Instr {
    FAddD { rd: FReg, rs1: FReg, rs2: FReg },
    FSubD { rd: FReg, rs1: FReg, rs2: FReg },
    FMulD { rd: FReg, rs1: FReg, rs2: FReg },
    /// `rd = rs1 * rs2 + rs3`, single rounding.
    FMaddD { rd: FReg, rs1: FReg, rs2: FReg, rs3: FReg },
    FMvD { rd: FReg, rs1: FReg },
    Fld { rd: FReg, offset: i64, base: XReg },
    Fsd { rs: FReg, offset: i64, base: XReg },
    Addi { rd: XReg, rs1: XReg, imm: i64 },
    Add { rd: XReg, rs1: XReg, rs2: XReg },
    Sub { rd: XReg, rs1: XReg, rs2: XReg },
    Li { rd: XReg, imm: i64 },
    Bne { rs1: XReg, rs2: XReg, target: usize },
    Beq { rs1: XReg, rs2: XReg, target: usize },
    Blt { rs1: XReg, rs2: XReg, target: usize },
    Jump { target: usize },
    CsrRw { rd: XReg, csr: Csr, rs1: XReg },
    CsrRs { rd: XReg, csr: Csr, rs1: XReg },
    CsrRc { rd: XReg, csr: Csr, rs1: XReg },
    /// Repeats the next `n_instr` instructions `n_iter` times.
    HwLoop { n_iter: LoopCount, n_instr: u32 },
    RoiBegin,
    RoiEnd,
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstrClass {
    FpCompute,
    FpMem,
    Int,
    Control,
    Meta,
}

impl InstrClass {
    /// Handled by the FP subsystem (queue, FPU, load/store path).
    pub fn is_fp(self) -> bool {
        matches!(self, InstrClass::FpCompute | InstrClass::FpMem)
    }
}

pub fn classify(instr: &Instr) -> InstrClass {
    use Instr::*;
    match instr {
        FAddD { .. } | FSubD { .. } | FMulD { .. } | FMaddD { .. } | FMvD { .. } => {
            InstrClass::FpCompute
        }
        Fld { .. } | Fsd { .. } => InstrClass::FpMem,
        Addi { .. } | Add { .. } | Sub { .. } | Li { .. } | CsrRw { .. } | CsrRs { .. }
        | CsrRc { .. } => InstrClass::Int,
        Bne { .. } | Beq { .. } | Blt { .. } | Jump { .. } => InstrClass::Control,
        HwLoop { .. } | RoiBegin | RoiEnd | Halt => InstrClass::Meta,
    }
}

/// FP source registers in operand order.
pub fn fp_reads(instr: &Instr) -> Vec<FReg> {
    use Instr::*;
    match *instr {
        FAddD { rs1, rs2, .. } | FSubD { rs1, rs2, .. } | FMulD { rs1, rs2, .. } => vec![rs1, rs2],
        FMaddD { rs1, rs2, rs3, .. } => vec![rs1, rs2, rs3],
        FMvD { rs1, .. } => vec![rs1],
        Fsd { rs, .. } => vec![rs],
        _ => Vec::new(),
    }
}

pub fn fp_writes(instr: &Instr) -> Option<FReg> {
    use Instr::*;
    match *instr {
        FAddD { rd, .. } | FSubD { rd, .. } | FMulD { rd, .. } | FMaddD { rd, .. }
        | FMvD { rd, .. } | Fld { rd, .. } => Some(rd),
        _ => None,
    }
}

impl Instr {
    pub fn class(&self) -> InstrClass {
        classify(self)
    }

    pub fn branch_target(&self) -> Option<usize> {
        match *self {
            Instr::Bne { target, .. }
            | Instr::Beq { target, .. }
            | Instr::Blt { target, .. }
            | Instr::Jump { target } => Some(target),
            _ => None,
        }
    }

    pub(crate) fn set_branch_target(&mut self, new: usize) {
        match self {
            Instr::Bne { target, .. }
            | Instr::Beq { target, .. }
            | Instr::Blt { target, .. }
            | Instr::Jump { target } => *target = new,
            _ => {}
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        use Instr::*;
        match self {
            FAddD { .. } => "fadd.d",
            FSubD { .. } => "fsub.d",
            FMulD { .. } => "fmul.d",
            FMaddD { .. } => "fmadd.d",
            FMvD { .. } => "fmv.d",
            Fld { .. } => "fld",
            Fsd { .. } => "fsd",
            Addi { .. } => "addi",
            Add { .. } => "add",
            Sub { .. } => "sub",
            Li { .. } => "li",
            Bne { .. } => "bne",
            Beq { .. } => "beq",
            Blt { .. } => "blt",
            Jump { .. } => "j",
            CsrRw { .. } => "csrrw",
            CsrRs { .. } => "csrrs",
            CsrRc { .. } => "csrrc",
            HwLoop { .. } => "hwloop",
            RoiBegin => "roi.begin",
            RoiEnd => "roi.end",
            Halt => "halt",
        }
    }

    /// Assembly text with branch targets rendered by `label`.
    pub fn render(&self, label: &dyn Fn(usize) -> String) -> String {
        use Instr::*;
        let m = self.mnemonic();
        match *self {
            FAddD { rd, rs1, rs2 } | FSubD { rd, rs1, rs2 } | FMulD { rd, rs1, rs2 } => {
                format!("{m} {rd}, {rs1}, {rs2}")
            }
            FMaddD { rd, rs1, rs2, rs3 } => format!("{m} {rd}, {rs1}, {rs2}, {rs3}"),
            FMvD { rd, rs1 } => format!("{m} {rd}, {rs1}"),
            Fld { rd, offset, base } => format!("{m} {rd}, {offset}({base})"),
            Fsd { rs, offset, base } => format!("{m} {rs}, {offset}({base})"),
            Addi { rd, rs1, imm } => format!("{m} {rd}, {rs1}, {imm}"),
            Add { rd, rs1, rs2 } | Sub { rd, rs1, rs2 } => format!("{m} {rd}, {rs1}, {rs2}"),
            Li { rd, imm } => format!("{m} {rd}, {imm}"),
            Bne { rs1, rs2, target } | Beq { rs1, rs2, target } | Blt { rs1, rs2, target } => {
                format!("{m} {rs1}, {rs2}, {}", label(target))
            }
            Jump { target } => format!("{m} {}", label(target)),
            CsrRw { rd, csr, rs1 } | CsrRs { rd, csr, rs1 } | CsrRc { rd, csr, rs1 } => {
                format!("{m} {rd}, {csr}, {rs1}")
            }
            HwLoop { n_iter, n_instr } => match n_iter {
                LoopCount::Reg(r) => format!("{m} {r}, {n_instr}"),
                LoopCount::Imm(n) => format!("{m} {n}, {n_instr}"),
            },
            RoiBegin | RoiEnd | Halt => m.to_string(),
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|t| format!("@{t}")))
    }
}

/// Registers that the front end reserves for streams when SSRs are enabled.
pub fn stream_registers(ssr_count: usize) -> impl Iterator<Item = FReg> {
    (0..ssr_count.min(32) as u8).map(FReg)
}

/// Structural checks that every runnable program must pass.
pub fn validate_program(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let n = program.instrs.len();
    let line_of = |i: usize| program.line_of(i);

    for (i, instr) in program.instrs.iter().enumerate() {
        if let Some(t) = instr.branch_target() {
            if t > n {
                diags.push(Diagnostic::new(
                    line_of(i),
                    1,
                    DiagnosticKind::UnresolvedLabel,
                    format!("branch target {t} outside program of {n} instructions"),
                ));
            }
        }
        if let Instr::HwLoop { n_instr, .. } = *instr {
            let end = i + n_instr as usize;
            if n_instr == 0 || end >= n {
                diags.push(Diagnostic::new(
                    line_of(i),
                    1,
                    DiagnosticKind::IllegalLoopBody,
                    format!("loop body of {n_instr} instructions is empty or runs past the end"),
                ));
                continue;
            }
            for j in i + 1..=end {
                let body = &program.instrs[j];
                let bad = match body.class() {
                    InstrClass::Control | InstrClass::Meta => true,
                    InstrClass::Int => matches!(
                        body,
                        Instr::CsrRw { .. } | Instr::CsrRs { .. } | Instr::CsrRc { .. }
                    ),
                    _ => false,
                };
                if bad {
                    diags.push(Diagnostic::new(
                        line_of(j),
                        1,
                        DiagnosticKind::IllegalLoopBody,
                        format!("`{}` is not allowed inside a hardware loop", body.mnemonic()),
                    ));
                }
            }
            // Branching into a loop body skips the loop setup.
            for (k, other) in program.instrs.iter().enumerate() {
                if let Some(t) = other.branch_target() {
                    if t > i && t <= end && !(k > i && k <= end) {
                        diags.push(Diagnostic::new(
                            line_of(k),
                            1,
                            DiagnosticKind::IllegalLoopBody,
                            "branch into the middle of a hardware loop body".to_string(),
                        ));
                    }
                }
            }
        }
    }

    for (k, s) in program.streamers.iter().enumerate() {
        if let Err(msg) = s.check() {
            diags.push(Diagnostic::new(0, 1, DiagnosticKind::BadStream, format!("stream {k}: {msg}")));
        }
        if program.streamers[..k].iter().any(|o| o.index == s.index || o.reg == s.reg) {
            diags.push(Diagnostic::new(
                0,
                1,
                DiagnosticKind::BadStream,
                format!("stream {k} reuses a streamer index or register"),
            ));
        }
    }

    let enables_ssr = program.instrs.iter().any(|i| {
        matches!(i, Instr::CsrRw { csr, .. } | Instr::CsrRs { csr, .. } if *csr == Csr::SSR_ENABLE)
    });
    if enables_ssr {
        let mapped: HashSet<FReg> = program.streamers.iter().map(|s| s.reg).collect();
        let mut reported = HashSet::new();
        for (i, instr) in program.instrs.iter().enumerate() {
            for r in fp_reads(instr).into_iter().chain(fp_writes(instr)) {
                if r.index() < 3 && !mapped.contains(&r) && reported.insert(r) {
                    diags.push(Diagnostic::new(
                        line_of(i),
                        1,
                        DiagnosticKind::UnmappedStream,
                        format!("{r} is a stream register but no stream is configured for it"),
                    ));
                }
            }
        }
        for s in &program.streamers {
            let dir_ok = program.instrs.iter().all(|i| match s.direction {
                Direction::Read => fp_writes(i) != Some(s.reg),
                Direction::Write => !fp_reads(i).contains(&s.reg),
            });
            if !dir_ok {
                diags.push(Diagnostic::new(
                    0,
                    1,
                    DiagnosticKind::BadStream,
                    format!("{} is used against its stream direction", s.reg),
                ));
            }
        }
    }

    if !halt_reachable(program) {
        diags.push(Diagnostic::new(
            0,
            1,
            DiagnosticKind::NoHalt,
            "no halt instruction is reachable from the entry point".to_string(),
        ));
    }
    diags
}

fn halt_reachable(program: &Program) -> bool {
    let n = program.instrs.len();
    let mut seen = vec![false; n];
    let mut stack = vec![program.entry];
    while let Some(pc) = stack.pop() {
        if pc >= n || seen[pc] {
            continue;
        }
        seen[pc] = true;
        let instr = &program.instrs[pc];
        match instr {
            Instr::Halt => return true,
            Instr::Jump { target } => stack.push(*target),
            Instr::Bne { target, .. } | Instr::Beq { target, .. } | Instr::Blt { target, .. } => {
                stack.push(*target);
                stack.push(pc + 1);
            }
            _ => stack.push(pc + 1),
        }
    }
    false
}
